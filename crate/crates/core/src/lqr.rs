//! Discrete-time LQR on the identified lifted model.

use nalgebra::{DMatrix, DVector};

use crate::error::{MgError, Result};
use crate::linalg::{block_scalar_diag, symmetrize};

/// Scalar weights of the block-diagonal cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub q_v: f64,
    pub q_sin: f64,
    pub q_cos: f64,
    pub q_omega: f64,
    pub r_p: f64,
    pub r_q: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            q_v: 1e3,
            q_sin: 0.0,
            q_cos: 0.0,
            q_omega: 1e-6,
            r_p: 1e-6,
            r_q: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrices {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// `Q = diag(q_v I, q_sin I, q_cos I, q_omega I)`, `R = diag(r_p I, r_q I)` for `n` buses.
pub fn build_cost(w: &CostWeights, n: usize) -> Result<CostMatrices> {
    let qs = [w.q_v, w.q_sin, w.q_cos, w.q_omega];
    if qs.iter().any(|&q| !(q >= 0.0) || !q.is_finite()) {
        return Err(MgError::InvalidArgument(
            "state weights must be finite and non-negative".into(),
        ));
    }
    if !(w.r_p > 0.0 && w.r_q > 0.0) || !w.r_p.is_finite() || !w.r_q.is_finite() {
        return Err(MgError::InvalidArgument(
            "input weights must be positive".into(),
        ));
    }
    Ok(CostMatrices {
        q: block_scalar_diag(&qs, n),
        r: block_scalar_diag(&[w.r_p, w.r_q], n),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DareSolution {
    pub s: DMatrix<f64>,
    pub iterations: usize,
}

fn riccati_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let bts = b.transpose() * s;
    let gram = r + &bts * b;
    let chol = gram.cholesky().ok_or(MgError::DareIndefinite)?;
    let rhs = &bts * a;
    let x = chol.solve(&rhs);
    let ats = a.transpose() * s;
    let mut next = &ats * a - (ats * b) * x + q;
    symmetrize(&mut next);
    Ok(next)
}

/// Fixed-point Riccati iteration from `Q` (or a warm start).
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
    warm: Option<&DMatrix<f64>>,
) -> Result<DareSolution> {
    let n = a.nrows();
    if a.ncols() != n
        || b.nrows() != n
        || q.shape() != (n, n)
        || r.shape() != (b.ncols(), b.ncols())
    {
        return Err(MgError::Dimension(
            "DARE operands have inconsistent shapes".into(),
        ));
    }
    let mut s = match warm {
        Some(w) if w.shape() == (n, n) && w.iter().all(|x| x.is_finite()) => w.clone(),
        _ => q.clone(),
    };
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let next = riccati_map(a, b, q, r, &s)?;
        if next.iter().any(|x| !x.is_finite()) {
            return Err(MgError::DareNoConvergence {
                iters: it,
                residual: f64::INFINITY,
            });
        }
        let diff = (&next - &s).norm();
        residual = diff / s.norm().max(f64::MIN_POSITIVE);
        let done = diff <= tol * s.norm();
        s = next;
        if done {
            return Ok(DareSolution { s, iterations: it });
        }
    }
    Err(MgError::DareNoConvergence {
        iters: max_iter,
        residual,
    })
}

/// Frobenius residual of the Riccati equation at `s`.
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> f64 {
    match riccati_map(a, b, q, r, s) {
        Ok(next) => (next - s).norm(),
        Err(_) => f64::INFINITY,
    }
}

/// `K = (B'SB + R)^-1 B'SA`.
pub fn compute_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    s: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let bts = b.transpose() * s;
    let gram = &bts * b + r;
    let k = gram.lu().solve(&(bts * a)).ok_or(MgError::SingularGain)?;
    if k.iter().any(|x| !x.is_finite()) {
        return Err(MgError::SingularGain);
    }
    Ok(k)
}

/// Saturated state feedback `clamp(-K z, lb, ub)`.
pub fn control_step(
    k: &DMatrix<f64>,
    z: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
) -> DVector<f64> {
    let raw = -(k * z);
    DVector::from_fn(raw.len(), |i, _| raw[i].max(lb[i]).min(ub[i]))
}

/// Gain, Riccati solution and input bounds currently in force.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub k: DMatrix<f64>,
    pub s: Option<DMatrix<f64>>,
    pub u_lb: DVector<f64>,
    pub u_ub: DVector<f64>,
}

impl ControllerState {
    pub fn new(n_u: usize, n_s: usize, bound: f64) -> Self {
        Self {
            k: DMatrix::zeros(n_u, n_s),
            s: None,
            u_lb: DVector::from_element(n_u, -bound),
            u_ub: DVector::from_element(n_u, bound),
        }
    }

    pub fn control(&self, z: &DVector<f64>) -> DVector<f64> {
        control_step(&self.k, z, &self.u_lb, &self.u_ub)
    }
}
