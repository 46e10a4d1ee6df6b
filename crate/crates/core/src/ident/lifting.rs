//! Observable dictionary and windowed data matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{MgError, Result};

/// Sliding window of PMU samples and the inputs that drove them.
///
/// Column `j` of `u` is the input applied during the interval that ends at
/// sample `j`, so `y_j` depends on `u_0..u_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementWindow {
    pub theta: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub theta_l: DVector<f64>,
    pub v_l: DVector<f64>,
}

impl MeasurementWindow {
    /// Build a window; the anchor is taken from the first column.
    pub fn new(
        theta: DMatrix<f64>,
        v: DMatrix<f64>,
        omega: DMatrix<f64>,
        u: DMatrix<f64>,
    ) -> Result<Self> {
        let (n, len) = theta.shape();
        if len == 0 || n == 0 {
            return Err(MgError::Dimension("empty measurement window".into()));
        }
        if v.shape() != (n, len) || omega.shape() != (n, len) || u.shape() != (2 * n, len) {
            return Err(MgError::Dimension(format!(
                "window blocks disagree: theta {:?}, v {:?}, omega {:?}, u {:?}",
                theta.shape(),
                v.shape(),
                omega.shape(),
                u.shape()
            )));
        }
        let theta_l = theta.column(0).into_owned();
        let v_l = v.column(0).into_owned();
        Ok(Self {
            theta,
            v,
            omega,
            u,
            theta_l,
            v_l,
        })
    }

    pub fn len(&self) -> usize {
        self.theta.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_bus(&self) -> usize {
        self.theta.nrows()
    }
}

/// Lifted observables `[v - v_nom; sin(theta) - sin(anchor); cos(theta) - cos(anchor); omega - omega_nom]`.
pub fn lift_observables(
    theta: &DVector<f64>,
    v: &DVector<f64>,
    omega: &DVector<f64>,
    theta_anchor: &DVector<f64>,
    v_nom: f64,
    omega_nom: f64,
) -> DVector<f64> {
    let n = theta.len();
    let mut z = DVector::zeros(4 * n);
    for i in 0..n {
        z[i] = v[i] - v_nom;
        z[n + i] = theta[i].sin() - theta_anchor[i].sin();
        z[2 * n + i] = theta[i].cos() - theta_anchor[i].cos();
        z[3 * n + i] = omega[i] - omega_nom;
    }
    z
}

/// Data matrices of one window: lifted states `z` (4n x N) and outputs `y` (2n x N).
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedData {
    pub z: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl LiftedData {
    pub fn n_s(&self) -> usize {
        self.z.nrows()
    }

    /// `omega` in the window is already a deviation from nominal.
    pub fn from_window(w: &MeasurementWindow, v_nom: f64) -> Self {
        let (n, len) = w.theta.shape();
        let mut z = DMatrix::zeros(4 * n, len);
        let mut y = DMatrix::zeros(2 * n, len);
        for j in 0..len {
            let th = w.theta.column(j).into_owned();
            let v = w.v.column(j).into_owned();
            let om = w.omega.column(j).into_owned();
            z.set_column(j, &lift_observables(&th, &v, &om, &w.theta_l, v_nom, 0.0));
            for i in 0..n {
                y[(i, j)] = th[i] - w.theta_l[i];
                y[(n + i, j)] = v[i] - w.v_l[i];
            }
        }
        Self { z, y }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchor_point_lifts_to_zero() {
        let th = DVector::from_vec(vec![0.1, -0.3]);
        let v = DVector::from_vec(vec![1.0, 1.0]);
        let om = DVector::zeros(2);
        let z = lift_observables(&th, &v, &om, &th, 1.0, 0.0);
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn half_turn_flips_cosine() {
        let th = DVector::from_vec(vec![std::f64::consts::PI]);
        let z = lift_observables(
            &th,
            &DVector::from_vec(vec![1.0]),
            &DVector::zeros(1),
            &DVector::zeros(1),
            1.0,
            0.0,
        );
        assert!(z[1].abs() < 1e-15);
        assert!((z[2] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn window_anchor_is_first_column() {
        let th = DMatrix::from_row_slice(1, 3, &[0.2, 0.3, 0.4]);
        let v = DMatrix::from_row_slice(1, 3, &[0.99, 1.0, 1.01]);
        let w = MeasurementWindow::new(th, v, DMatrix::zeros(1, 3), DMatrix::zeros(2, 3)).unwrap();
        assert_eq!(w.theta_l[0], 0.2);
        let d = LiftedData::from_window(&w, 1.0);
        assert_eq!(d.z.column(0)[1], 0.0);
        assert!((d.y[(0, 2)] - 0.2).abs() < 1e-15);
        assert!((d.y[(1, 2)] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn mismatched_window_is_rejected() {
        let r = MeasurementWindow::new(
            DMatrix::zeros(2, 3),
            DMatrix::zeros(2, 3),
            DMatrix::zeros(2, 3),
            DMatrix::zeros(2, 3),
        );
        assert!(r.is_err());
    }
}
