//! Time integration of the reduced-order microgrid.

use nalgebra::{DMatrix, DVector};

use crate::der::{droop_derivatives, DerUnit};
use crate::error::{MgError, Result};
use crate::network::{compute_injections, NetworkModel, NetworkState};

pub const MAX_PRIMARY_DT: f64 = 1e-3;

/// Additive residual terms `(f_omega, f_v)` applied to the angle and voltage rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub omega: DVector<f64>,
    pub v: DVector<f64>,
}

impl Residual {
    pub fn zero(n: usize) -> Self {
        Self {
            omega: DVector::zeros(n),
            v: DVector::zeros(n),
        }
    }
}

// Augmented state layout: [theta; v; p_filt; q_filt].
fn rhs(
    net: &NetworkModel,
    ders: &[DerUnit],
    x: &DVector<f64>,
    u: &DVector<f64>,
    res: &Residual,
) -> DVector<f64> {
    let n = net.n_der;
    let st = NetworkState {
        theta: x.rows(0, n).into_owned(),
        v: x.rows(n, n).into_owned(),
        t: 0.0,
    };
    let (p, q) = compute_injections(net, &st);
    let mut dx = DVector::zeros(4 * n);
    for (i, d) in ders.iter().enumerate() {
        let mut unit = d.clone();
        unit.p_filt = x[2 * n + i];
        unit.q_filt = x[3 * n + i];
        let (dth, dv) = droop_derivatives(&unit, unit.p_filt, unit.q_filt, (u[i], u[n + i]));
        dx[i] = dth + res.omega[i];
        dx[n + i] = dv + res.v[i];
        dx[2 * n + i] = (p[i] - unit.p_filt) / d.tf;
        dx[3 * n + i] = (q[i] - unit.q_filt) / d.tf;
    }
    if net.grid_connected {
        dx[0] = 0.0;
        dx[n] = 0.0;
    }
    dx
}

fn pack(ders: &[DerUnit], state: &NetworkState) -> DVector<f64> {
    let n = ders.len();
    let mut x = DVector::zeros(4 * n);
    x.rows_mut(0, n).copy_from(&state.theta);
    x.rows_mut(n, n).copy_from(&state.v);
    for (i, d) in ders.iter().enumerate() {
        x[2 * n + i] = d.p_filt;
        x[3 * n + i] = d.q_filt;
    }
    x
}

fn check_dims(
    net: &NetworkModel,
    ders: &[DerUnit],
    state: &NetworkState,
    u: &DVector<f64>,
) -> Result<()> {
    let n = net.n_der;
    if ders.len() != n || state.theta.len() != n || state.v.len() != n || u.len() != 2 * n {
        return Err(MgError::Dimension(format!(
            "network has {n} DER buses, got {} units, state {}/{}, input {}",
            ders.len(),
            state.theta.len(),
            state.v.len(),
            u.len()
        )));
    }
    Ok(())
}

/// Instantaneous angle rates (rad/s deviation from nominal) at every DER bus.
pub fn frequency_deviation(
    net: &NetworkModel,
    ders: &[DerUnit],
    state: &NetworkState,
    u: &DVector<f64>,
    res: &Residual,
) -> DVector<f64> {
    let n = net.n_der;
    rhs(net, ders, &pack(ders, state), u, res)
        .rows(0, n)
        .into_owned()
}

/// One explicit RK4 step of the augmented droop/filter dynamics. Filter states
/// inside `ders` are advanced in place.
pub fn simulate_step(
    net: &NetworkModel,
    ders: &mut [DerUnit],
    state: &NetworkState,
    u: &DVector<f64>,
    res: &Residual,
    dt: f64,
) -> Result<NetworkState> {
    if !(dt > 0.0 && dt <= MAX_PRIMARY_DT) {
        return Err(MgError::InvalidArgument(format!(
            "primary step {dt} s outside (0, {MAX_PRIMARY_DT}]"
        )));
    }
    check_dims(net, ders, state, u)?;
    let n = net.n_der;
    let x = pack(ders, state);
    let k1 = rhs(net, ders, &x, u, res);
    let k2 = rhs(net, ders, &(&x + &k1 * (dt / 2.0)), u, res);
    let k3 = rhs(net, ders, &(&x + &k2 * (dt / 2.0)), u, res);
    let k4 = rhs(net, ders, &(&x + &k3 * dt), u, res);
    let xn = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let t = state.t + dt;
    if xn.iter().any(|v| !v.is_finite()) {
        return Err(MgError::Divergence {
            t,
            reason: "non-finite state".into(),
        });
    }
    if let Some(i) = (0..n).find(|&i| xn[n + i] <= 0.0) {
        return Err(MgError::Divergence {
            t,
            reason: format!("voltage collapse at DER bus {i}"),
        });
    }
    for (i, d) in ders.iter_mut().enumerate() {
        d.p_filt = xn[2 * n + i];
        d.q_filt = xn[3 * n + i];
    }
    Ok(NetworkState {
        theta: xn.rows(0, n).into_owned(),
        v: xn.rows(n, n).into_owned(),
        t,
    })
}

/// Grid-connected operating point: bus 0 is the slack at angle 0 and 1 pu, every
/// other bus injects exactly its references. Filters are initialised to the
/// resulting injections.
pub fn grid_connected_equilibrium(
    net: &NetworkModel,
    ders: &mut [DerUnit],
) -> Result<NetworkState> {
    let n = net.n_der;
    if ders.len() != n {
        return Err(MgError::Dimension("DER count differs from network".into()));
    }
    let m = n - 1;
    let unpack = |y: &DVector<f64>| {
        let mut st = NetworkState::flat(n);
        for i in 0..m {
            st.theta[i + 1] = y[i];
            st.v[i + 1] = y[m + i];
        }
        st
    };
    let mismatch = |y: &DVector<f64>| {
        let (p, q) = compute_injections(net, &unpack(y));
        let mut r = DVector::zeros(2 * m);
        for i in 0..m {
            r[i] = p[i + 1] - ders[i + 1].p_ref;
            r[m + i] = q[i + 1] - ders[i + 1].q_ref;
        }
        r
    };
    let mut y = DVector::zeros(2 * m);
    y.rows_mut(m, m).fill(1.0);
    let mut converged = m == 0;
    for _ in 0..50 {
        if m == 0 {
            break;
        }
        let r = mismatch(&y);
        if r.amax() < 1e-13 {
            converged = true;
            break;
        }
        let h = 1e-7;
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for k in 0..2 * m {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[k] += h;
            ym[k] -= h;
            jac.set_column(k, &((mismatch(&yp) - mismatch(&ym)) / (2.0 * h)));
        }
        let step = jac
            .lu()
            .solve(&r)
            .ok_or_else(|| MgError::Equilibrium("singular Jacobian".into()))?;
        y -= step;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(MgError::Equilibrium("Newton iterate diverged".into()));
        }
    }
    if !converged {
        let r = mismatch(&y);
        if r.amax() > 1e-10 {
            return Err(MgError::Equilibrium(format!("residual {:.3e}", r.amax())));
        }
    }
    let st = unpack(&y);
    if st.v.iter().any(|&v| v <= 0.0) {
        return Err(MgError::Equilibrium("non-positive voltage".into()));
    }
    let (p, q) = compute_injections(net, &st);
    for (i, d) in ders.iter_mut().enumerate() {
        d.p_filt = p[i];
        d.q_filt = q[i];
    }
    Ok(st)
}
