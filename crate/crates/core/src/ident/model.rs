//! Identified lifted model, one-step prediction and text serialization.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{MgError, Result};

/// Lifted linear model `z+ = A z + B u`, `y = C z`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Least-squares map from lifted observables to outputs.
    pub c: DMatrix<f64>,
    /// Output map in the realization's own coordinates, used for Markov checks.
    pub c_markov: DMatrix<f64>,
    pub gamma_opt: f64,
    pub rank_r: usize,
}

impl IdentifiedModel {
    pub fn n_s(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn is_finite(&self) -> bool {
        [&self.a, &self.b, &self.c, &self.c_markov]
            .iter()
            .all(|m| m.iter().all(|x| x.is_finite()))
            && self.gamma_opt.is_finite()
    }

    /// Markov block `C A^(k-1) B` of the realization, `k >= 1`.
    pub fn markov(&self, k: usize) -> DMatrix<f64> {
        let mut x = self.b.clone();
        for _ in 1..k {
            x = &self.a * x;
        }
        &self.c_markov * x
    }

    /// Plain-text dump: a header line per matrix followed by row-major values.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "gamma {:.17e} rank {}", self.gamma_opt, self.rank_r);
        for (name, m) in [
            ("A", &self.a),
            ("B", &self.b),
            ("C", &self.c),
            ("Cm", &self.c_markov),
        ] {
            let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols())
                    .map(|j| format!("{:.17e}", m[(i, j)]))
                    .collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        out
    }

    pub fn from_text(s: &str) -> Result<Self> {
        let bad = |m: &str| MgError::InvalidArgument(format!("model text: {m}"));
        let mut lines = s.lines();
        let head: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("empty"))?
            .split_whitespace()
            .collect();
        if head.len() != 4 || head[0] != "gamma" || head[2] != "rank" {
            return Err(bad("header"));
        }
        let gamma_opt: f64 = head[1].parse().map_err(|_| bad("gamma"))?;
        let rank_r: usize = head[3].parse().map_err(|_| bad("rank"))?;
        let mut mats = Vec::new();
        for name in ["A", "B", "C", "Cm"] {
            let h: Vec<&str> = lines
                .next()
                .ok_or_else(|| bad("missing matrix"))?
                .split_whitespace()
                .collect();
            if h.len() != 3 || h[0] != name {
                return Err(bad("matrix header"));
            }
            let r: usize = h[1].parse().map_err(|_| bad("rows"))?;
            let c: usize = h[2].parse().map_err(|_| bad("cols"))?;
            let mut vals = Vec::with_capacity(r * c);
            for _ in 0..r {
                let row = lines.next().ok_or_else(|| bad("missing row"))?;
                for t in row.split_whitespace() {
                    vals.push(t.parse::<f64>().map_err(|_| bad("value"))?);
                }
            }
            if vals.len() != r * c {
                return Err(bad("row length"));
            }
            mats.push(DMatrix::from_row_slice(r, c, &vals));
        }
        let c_markov = mats.pop().unwrap();
        let c = mats.pop().unwrap();
        let b = mats.pop().unwrap();
        let a = mats.pop().unwrap();
        Ok(Self {
            a,
            b,
            c,
            c_markov,
            gamma_opt,
            rank_r,
        })
    }
}

/// One-step-ahead prediction `(z+, y+)`.
pub fn predict_one_step(
    model: &IdentifiedModel,
    z: &DVector<f64>,
    u: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let zn = &model.a * z + &model.b * u;
    let y = &model.c * &zn;
    (zn, y)
}

/// Voltage prediction error `||dv_true - dv_pred|| / n`.
pub fn prediction_error(v_true: &DVector<f64>, v_pred: &DVector<f64>) -> f64 {
    if v_true.is_empty() {
        return 0.0;
    }
    (v_true - v_pred).norm() / v_true.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> IdentifiedModel {
        IdentifiedModel {
            a: DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.5]),
            b: DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
            c: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            c_markov: DMatrix::from_row_slice(1, 2, &[0.3, 0.7]),
            gamma_opt: 0.5,
            rank_r: 2,
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let (z, y) = predict_one_step(&model(), &DVector::zeros(2), &DVector::zeros(1));
        assert_eq!(z.norm() + y.norm(), 0.0);
    }

    #[test]
    fn prediction_error_scalar() {
        let a = DVector::from_vec(vec![1.02]);
        let b = DVector::from_vec(vec![1.0]);
        assert!((prediction_error(&a, &b) - 0.02).abs() < 1e-12);
        assert_eq!(prediction_error(&b, &b), 0.0);
    }

    #[test]
    fn text_round_trip() {
        let m = model();
        let back = IdentifiedModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
    }
}
