//! Network admittance assembly, load folding, Kron reduction and power flow.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{MgError, Result};

type C64 = Complex<f64>;

/// Series branch between two buses, impedance in per-unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
}

/// Constant-impedance load, powers in per-unit at voltage `v_nom`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Load {
    pub bus: usize,
    pub p: f64,
    pub q: f64,
    pub v_nom: f64,
}

/// Equivalent network seen from the DER buses.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub n_der: usize,
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub grid_connected: bool,
}

/// Voltage phasors at the DER buses.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub theta: DVector<f64>,
    pub v: DVector<f64>,
    pub t: f64,
}

impl NetworkState {
    pub fn flat(n: usize) -> Self {
        Self {
            theta: DVector::zeros(n),
            v: DVector::from_element(n, 1.0),
            t: 0.0,
        }
    }
}

/// Full bus admittance matrix with loads folded in as shunt admittances.
pub fn admittance_matrix(n_bus: usize, lines: &[Line], loads: &[Load]) -> Result<DMatrix<C64>> {
    let mut y = DMatrix::from_element(n_bus, n_bus, C64::new(0.0, 0.0));
    for (k, l) in lines.iter().enumerate() {
        if l.from >= n_bus || l.to >= n_bus {
            return Err(MgError::InvalidNetwork(format!(
                "line {k} references a missing bus"
            )));
        }
        if l.from == l.to {
            return Err(MgError::InvalidNetwork(format!("line {k} is a self loop")));
        }
        if !(l.r >= 0.0) || !l.x.is_finite() || !l.r.is_finite() {
            return Err(MgError::InvalidNetwork(format!(
                "line {k} has invalid impedance"
            )));
        }
        let z = C64::new(l.r, l.x);
        if z.norm() == 0.0 {
            return Err(MgError::InvalidNetwork(format!(
                "line {k} has zero impedance"
            )));
        }
        let yl = z.inv();
        y[(l.from, l.from)] += yl;
        y[(l.to, l.to)] += yl;
        y[(l.from, l.to)] -= yl;
        y[(l.to, l.from)] -= yl;
    }
    for (k, ld) in loads.iter().enumerate() {
        if ld.bus >= n_bus {
            return Err(MgError::InvalidNetwork(format!(
                "load {k} references a missing bus"
            )));
        }
        if !(ld.v_nom > 0.0) {
            return Err(MgError::InvalidNetwork(format!(
                "load {k} has non-positive nominal voltage"
            )));
        }
        y[(ld.bus, ld.bus)] += C64::new(ld.p, -ld.q) / (ld.v_nom * ld.v_nom);
    }
    Ok(y)
}

fn check_connected(n_bus: usize, lines: &[Line]) -> Result<()> {
    let mut adj = vec![Vec::new(); n_bus];
    for l in lines {
        adj[l.from].push(l.to);
        adj[l.to].push(l.from);
    }
    let mut seen = vec![false; n_bus];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(k) => Err(MgError::Disconnected(k)),
        None => Ok(()),
    }
}

/// Schur complement of `y` onto the `keep` buses.
pub fn kron_reduce(y: &DMatrix<C64>, keep: &[usize]) -> Result<DMatrix<C64>> {
    let n = y.nrows();
    let drop: Vec<usize> = (0..n).filter(|k| !keep.contains(k)).collect();
    let pick = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| y[(rows[i], cols[j])])
    };
    let yaa = pick(keep, keep);
    if drop.is_empty() {
        return Ok(yaa);
    }
    let yab = pick(keep, &drop);
    let yba = pick(&drop, keep);
    let ybb = pick(&drop, &drop);
    let lu = ybb.lu();
    let x = lu.solve(&yba).ok_or(MgError::SingularReduction)?;
    if x.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(MgError::SingularReduction);
    }
    Ok(yaa - yab * x)
}

/// Assemble the network, fold loads and eliminate all non-DER buses.
pub fn build_network(
    n_bus: usize,
    lines: &[Line],
    loads: &[Load],
    der_buses: &[usize],
) -> Result<NetworkModel> {
    if der_buses.is_empty() {
        return Err(MgError::InvalidNetwork("no DER buses".into()));
    }
    if let Some(&b) = der_buses.iter().find(|&&b| b >= n_bus) {
        return Err(MgError::InvalidNetwork(format!("DER bus {b} out of range")));
    }
    for (k, b) in der_buses.iter().enumerate() {
        if der_buses[..k].contains(b) {
            return Err(MgError::InvalidNetwork(format!("DER bus {b} listed twice")));
        }
    }
    check_connected(n_bus, lines)?;
    let y = admittance_matrix(n_bus, lines, loads)?;
    let yr = kron_reduce(&y, der_buses)?;
    Ok(NetworkModel {
        n_der: der_buses.len(),
        g: yr.map(|c| c.re),
        b: yr.map(|c| c.im),
        grid_connected: true,
    })
}

/// Active and reactive injections at every DER bus.
pub fn compute_injections(
    net: &NetworkModel,
    state: &NetworkState,
) -> (DVector<f64>, DVector<f64>) {
    let n = net.n_der;
    let mut p = DVector::zeros(n);
    let mut q = DVector::zeros(n);
    for i in 0..n {
        let vi = state.v[i];
        let (mut pi, mut qi) = (0.0, 0.0);
        for j in 0..n {
            let (s, c) = (state.theta[i] - state.theta[j]).sin_cos();
            let vv = vi * state.v[j];
            let (g, b) = (net.g[(i, j)], net.b[(i, j)]);
            pi += vv * (g * c + b * s);
            qi += vv * (g * s - b * c);
        }
        p[i] = pi;
        q[i] = qi;
    }
    (p, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_bus_resistive_line() {
        let lines = [Line {
            from: 0,
            to: 1,
            r: 1.0,
            x: 0.0,
        }];
        let net = build_network(2, &lines, &[], &[0, 1]).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert!((&net.g - expect).norm() < 1e-15);
        assert!(net.b.norm() < 1e-15);
        let (p, q) = compute_injections(&net, &NetworkState::flat(2));
        assert!(p.norm() < 1e-15 && q.norm() < 1e-15);
    }

    #[test]
    fn single_isolated_bus() {
        let net = build_network(1, &[], &[], &[0]).unwrap();
        assert_eq!(net.g.shape(), (1, 1));
        assert_eq!(net.g[(0, 0)], 0.0);
        assert_eq!(net.b[(0, 0)], 0.0);
    }

    #[test]
    fn zero_voltage_gives_zero_power() {
        let lines = [Line {
            from: 0,
            to: 1,
            r: 0.1,
            x: 0.3,
        }];
        let net = build_network(2, &lines, &[], &[0, 1]).unwrap();
        let st = NetworkState {
            theta: DVector::from_vec(vec![0.3, -0.2]),
            v: DVector::zeros(2),
            t: 0.0,
        };
        let (p, q) = compute_injections(&net, &st);
        assert_eq!(p.norm(), 0.0);
        assert_eq!(q.norm(), 0.0);
    }

    #[test]
    fn disconnected_network_is_rejected() {
        let lines = [Line {
            from: 0,
            to: 1,
            r: 0.1,
            x: 0.1,
        }];
        assert!(matches!(
            build_network(3, &lines, &[], &[0, 1]),
            Err(MgError::Disconnected(2))
        ));
    }

    #[test]
    fn lossless_row_sums_vanish() {
        let lines = [
            Line {
                from: 0,
                to: 1,
                r: 0.0,
                x: 0.2,
            },
            Line {
                from: 1,
                to: 2,
                r: 0.0,
                x: 0.1,
            },
            Line {
                from: 2,
                to: 0,
                r: 0.0,
                x: 0.4,
            },
        ];
        let net = build_network(3, &lines, &[], &[0, 1, 2]).unwrap();
        for i in 0..3 {
            assert!(net.b.row(i).sum().abs() < 1e-12);
        }
        assert!((&net.b - net.b.transpose()).norm() < 1e-14);
    }
}
