//! Least-squares Markov parameter estimation.

use nalgebra::DMatrix;

use crate::error::{MgError, Result};
use crate::linalg::pinv;

/// Block upper-triangular input Toeplitz with `blocks` block rows.
/// Block `(i, j)` equals `u[:, j - i]` for `j >= i`, zero otherwise.
pub fn input_toeplitz(u: &DMatrix<f64>, blocks: usize) -> DMatrix<f64> {
    let (m, len) = u.shape();
    let mut t = DMatrix::zeros(m * blocks, len);
    for i in 0..blocks {
        for j in i..len {
            t.view_mut((i * m, j), (m, 1)).copy_from(&u.column(j - i));
        }
    }
    t
}

/// Estimate `blocks` Markov parameters from `y = [h_1 .. h_blocks] T(u)`.
pub fn estimate_markov(
    y: &DMatrix<f64>,
    u: &DMatrix<f64>,
    blocks: usize,
    ridge: f64,
) -> Result<Vec<DMatrix<f64>>> {
    if y.ncols() != u.ncols() {
        return Err(MgError::Dimension(format!(
            "outputs have {} samples, inputs {}",
            y.ncols(),
            u.ncols()
        )));
    }
    if blocks == 0 {
        return Err(MgError::InvalidArgument(
            "zero Markov blocks requested".into(),
        ));
    }
    if u.iter().all(|&x| x == 0.0) {
        return Err(MgError::Unexcited);
    }
    let m = u.nrows();
    let t = input_toeplitz(u, blocks);
    let h = y * pinv(&t, ridge);
    Ok((0..blocks)
        .map(|k| h.columns(k * m, m).into_owned())
        .collect())
}

/// Stack Markov blocks side by side: `[h_1 h_2 ...]`.
pub fn hstack(h: &[DMatrix<f64>]) -> DMatrix<f64> {
    let (p, m) = h[0].shape();
    let mut out = DMatrix::zeros(p, m * h.len());
    for (k, b) in h.iter().enumerate() {
        out.view_mut((0, k * m), (p, m)).copy_from(b);
    }
    out
}
