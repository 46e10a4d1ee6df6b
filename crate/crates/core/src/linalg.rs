//! Dense linear-algebra helpers shared by identification, control and analysis.

use nalgebra::{DMatrix, DVector};

/// Moore-Penrose pseudo-inverse via SVD. Singular values below
/// `rcond * sigma_max` are discarded.
pub fn pinv(m: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let smax = svd.singular_values.max();
    let mut out = DMatrix::zeros(c, r);
    if !(smax > 0.0) || !smax.is_finite() {
        return out;
    }
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > rcond * smax {
            let vk = vt.row(k).transpose();
            let uk = u.column(k);
            out += (vk * uk.transpose()) / s;
        }
    }
    out
}

/// Block-diagonal matrix with `blocks` copies of `m`.
pub fn kron_identity(blocks: usize, m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let mut out = DMatrix::zeros(blocks * r, blocks * c);
    for b in 0..blocks {
        out.view_mut((b * r, b * c), (r, c)).copy_from(m);
    }
    out
}

/// Diagonal matrix built from a list of scalar values each repeated `n` times.
pub fn block_scalar_diag(values: &[f64], n: usize) -> DMatrix<f64> {
    let diag: Vec<f64> = values
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v, n))
        .collect();
    DMatrix::from_diagonal(&DVector::from_vec(diag))
}

/// Singular values sorted in descending order.
pub fn singular_values_desc(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Largest eigenvalue magnitude of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if m.iter().any(|x| !x.is_finite()) {
        return f64::INFINITY;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max)
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_invertible_is_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let p = pinv(&m, 1e-12);
        let id = &m * &p;
        assert!((id - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn pinv_of_zero_is_zero() {
        let m = DMatrix::<f64>::zeros(3, 2);
        assert_eq!(pinv(&m, 1e-8), DMatrix::zeros(2, 3));
    }

    #[test]
    fn pinv_wide_matrix_is_right_inverse() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 1.0, -1.0]);
        let p = pinv(&m, 1e-12);
        assert!((&m * &p - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn kron_identity_layout() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let k = kron_identity(2, &m);
        assert_eq!(k.shape(), (2, 4));
        assert_eq!(k[(1, 3)], 2.0);
        assert_eq!(k[(0, 2)], 0.0);
    }

    #[test]
    fn spectral_radius_diag() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.9]));
        assert!((spectral_radius(&m) - 0.9).abs() < 1e-14);
        assert!((spectral_radius(&DMatrix::identity(3, 3)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_radius_rotation() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -0.8, 0.8, 0.0]);
        assert!((spectral_radius(&m) - 0.8).abs() < 1e-12);
    }
}
