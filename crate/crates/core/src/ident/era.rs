//! Hankel assembly, truncated SVD and the gamma-parameterised realization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MgError, Result};
use crate::linalg::{kron_identity, pinv};

/// Arrangement of Markov blocks inside `H` and `H'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HankelLayout {
    /// `H[i][j] = h_{j-i+1}` above the diagonal, zero below; square with one
    /// fewer block than supplied.
    UpperToeplitz,
    /// `H[i][j] = h_{i+j+1}`, square with `floor(len / 2)` blocks.
    #[default]
    Classical,
}

impl HankelLayout {
    /// Markov blocks to estimate from a window of `n` samples.
    pub fn markov_blocks(self, n: usize) -> usize {
        match self {
            HankelLayout::UpperToeplitz => n + 1,
            HankelLayout::Classical => n,
        }
    }
}

/// Build `(H, H')` from Markov blocks `h[0] = h_1, h[1] = h_2, ...`.
pub fn build_hankels(
    h: &[DMatrix<f64>],
    layout: HankelLayout,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if h.is_empty() {
        return Err(MgError::InvalidArgument("no Markov blocks".into()));
    }
    let (p, m) = h[0].shape();
    type BlockIndex = fn(usize, usize) -> Option<usize>;
    let (nb, block, shifted): (usize, BlockIndex, BlockIndex) = match layout {
        HankelLayout::UpperToeplitz => (
            h.len() - 1,
            |i, j| (j >= i).then(|| j - i),
            |i, j| (j >= i).then(|| j - i + 1),
        ),
        HankelLayout::Classical => (h.len() / 2, |i, j| Some(i + j), |i, j| Some(i + j + 1)),
    };
    if nb == 0 {
        return Err(MgError::InvalidArgument(format!(
            "{} Markov blocks are too few for the {layout:?} layout",
            h.len()
        )));
    }
    let mut hh = DMatrix::zeros(nb * p, nb * m);
    let mut hp = DMatrix::zeros(nb * p, nb * m);
    for i in 0..nb {
        for j in 0..nb {
            if let Some(k) = block(i, j) {
                hh.view_mut((i * p, j * m), (p, m)).copy_from(&h[k]);
            }
            if let Some(k) = shifted(i, j) {
                hp.view_mut((i * p, j * m), (p, m)).copy_from(&h[k]);
            }
        }
    }
    Ok((hh, hp))
}

/// Rank-truncated SVD factors, singular values descending and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.s) * self.v.transpose()
    }

    fn pow_diag(&self, e: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.s.map(|x| x.powf(e)))
    }
}

/// Relative threshold under which singular values count as zero.
pub const RANK_TOL: f64 = 1e-8;

/// Best rank-`rank_r` approximation, further capped at the numerical rank.
pub fn truncated_svd(h: &DMatrix<f64>, rank_r: usize) -> TruncatedSvd {
    let (rows, cols) = h.shape();
    let svd = h.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let smax = order
        .first()
        .map(|&k| svd.singular_values[k])
        .unwrap_or(0.0);
    let keep: Vec<usize> = order
        .into_iter()
        .take(rank_r.min(rows).min(cols))
        .filter(|&k| smax > 0.0 && svd.singular_values[k] > RANK_TOL * smax)
        .collect();
    if keep.len() < rank_r.min(rows).min(cols) {
        log::debug!(
            "truncated SVD rank reduced to {} (requested {rank_r})",
            keep.len()
        );
    }
    let r = keep.len();
    let mut ut = DMatrix::zeros(rows, r);
    let mut vv = DMatrix::zeros(cols, r);
    let mut s = DVector::zeros(r);
    for (c, &k) in keep.iter().enumerate() {
        ut.set_column(c, &u.column(k));
        vv.set_column(c, &vt.row(k).transpose());
        s[c] = svd.singular_values[k];
    }
    TruncatedSvd { u: ut, s, v: vv }
}

/// Least-squares observation map `C = Y Z^+`.
pub fn estimate_c(y: &DMatrix<f64>, z: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    y * pinv(z, ridge)
}

/// Top `n_s x m` block of `S^(1 - gamma) V'`, zero-padded when the rank is below `n_s`.
pub fn b_candidate(svd: &TruncatedSvd, gamma: f64, n_s: usize, m: usize) -> Result<DMatrix<f64>> {
    let r = svd.rank();
    if m > svd.v.nrows() {
        return Err(MgError::Dimension(format!(
            "input dimension {m} exceeds Hankel column count {}",
            svd.v.nrows()
        )));
    }
    let ctrl = svd.pow_diag(1.0 - gamma) * svd.v.transpose();
    let rows = r.min(n_s);
    let mut b = DMatrix::zeros(n_s, m);
    b.view_mut((0, 0), (rows, m))
        .copy_from(&ctrl.view((0, 0), (rows, m)));
    Ok(b)
}

/// Frobenius mismatch between the gamma-scaled observability and
/// controllability factorizations, with `C` fixed and `B` the gamma candidate.
pub fn gamma_objective(
    svd: &TruncatedSvd,
    c: &DMatrix<f64>,
    m: usize,
    gamma: f64,
    ridge: f64,
) -> Result<f64> {
    let p = c.nrows();
    let n_s = c.ncols();
    let rows = svd.u.nrows() / p;
    let cols = svd.v.nrows() / m;
    if rows * p != svd.u.nrows() || cols * m != svd.v.nrows() || rows != cols {
        return Err(MgError::Dimension(
            "gamma objective needs a square block Hankel".into(),
        ));
    }
    let b = b_candidate(svd, gamma, n_s, m)?;
    let obs_inv = kron_identity(rows, &pinv(c, ridge));
    let ctrl_inv = kron_identity(cols, &pinv(&b, ridge));
    let lhs = svd.pow_diag(2.0 * gamma - 1.0) * svd.u.transpose() * obs_inv.transpose();
    let rhs = svd.v.transpose() * ctrl_inv;
    Ok((lhs - rhs).norm())
}

/// Outcome of the bounded scalar search over gamma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSearch {
    pub gamma: f64,
    pub objective: f64,
    /// Objective flat to 1e-12 over the grid; tie broken at 0.5.
    pub flat: bool,
    /// A grid value was non-finite; the previous gamma was returned.
    pub non_finite: bool,
}

pub const GAMMA_GRID: usize = 101;
pub const GAMMA_TIE: f64 = 1e-12;

/// Minimise `objective` over [0, 1]: 101-point grid, then golden-section refinement
/// inside the bracket around the best grid point.
pub fn minimize_on_unit_interval<F>(mut objective: F, prev: f64) -> GammaSearch
where
    F: FnMut(f64) -> f64,
{
    let grid: Vec<f64> = (0..GAMMA_GRID)
        .map(|k| k as f64 / (GAMMA_GRID - 1) as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&g| objective(g)).collect();
    let prev = prev.clamp(0.0, 1.0);
    if vals.iter().any(|v| !v.is_finite()) {
        log::warn!("non-finite gamma objective; keeping gamma = {prev}");
        return GammaSearch {
            gamma: prev,
            objective: f64::NAN,
            flat: false,
            non_finite: true,
        };
    }
    let lo_v = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_v = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi_v - lo_v <= GAMMA_TIE {
        return GammaSearch {
            gamma: 0.5,
            objective: objective(0.5),
            flat: true,
            non_finite: false,
        };
    }
    let best = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(GAMMA_GRID - 1)];
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let mut fc = objective(c);
    let mut fd = objective(d);
    for _ in 0..48 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = objective(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = objective(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = objective(mid);
    let (gamma, f) = if fm.is_finite() && fm <= vals[best] {
        (mid, fm)
    } else {
        (grid[best], vals[best])
    };
    GammaSearch {
        gamma: gamma.clamp(0.0, 1.0),
        objective: f,
        flat: false,
        non_finite: false,
    }
}

/// Optimal realization exponent for the current window.
pub fn optimize_gamma(
    svd: &TruncatedSvd,
    c: &DMatrix<f64>,
    m: usize,
    prev: f64,
    ridge: f64,
) -> Result<GammaSearch> {
    gamma_objective(svd, c, m, 0.5, ridge)?;
    Ok(minimize_on_unit_interval(
        |g| gamma_objective(svd, c, m, g, ridge).unwrap_or(f64::NAN),
        prev,
    ))
}

/// Smoothed gamma update, applied only every `t_opt_steps` secondary steps.
pub fn update_gamma(prev: f64, gamma_minus: f64, eta: f64, k: usize, t_opt_steps: usize) -> f64 {
    if t_opt_steps == 0 || !k.is_multiple_of(t_opt_steps) {
        return prev;
    }
    (eta * gamma_minus + (1.0 - eta) * prev).clamp(0.0, 1.0)
}

/// Raw realization `(A, B)` for one gamma, zero-padded to `n_s` states.
pub fn realize_raw(
    svd: &TruncatedSvd,
    h_prime: &DMatrix<f64>,
    gamma: f64,
    n_s: usize,
    m: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let r = svd.rank();
    if r == 0 || svd.s.iter().any(|&s| s <= 0.0) {
        return Err(MgError::SingularPower(gamma));
    }
    if r > n_s {
        return Err(MgError::Dimension(format!(
            "rank {r} exceeds state dimension {n_s}"
        )));
    }
    let ar =
        svd.pow_diag(-gamma) * svd.u.transpose() * h_prime * &svd.v * svd.pow_diag(gamma - 1.0);
    let mut a = DMatrix::zeros(n_s, n_s);
    a.view_mut((0, 0), (r, r)).copy_from(&ar);
    let b = b_candidate(svd, gamma, n_s, m)?;
    Ok((a, b))
}

/// Realization followed by exponential smoothing against the previous estimate.
#[allow(clippy::too_many_arguments)]
pub fn realize_ab(
    svd: &TruncatedSvd,
    h_prime: &DMatrix<f64>,
    gamma: f64,
    eta: f64,
    prev: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
    n_s: usize,
    m: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (a, b) = realize_raw(svd, h_prime, gamma, n_s, m)?;
    Ok(match prev {
        Some((pa, pb)) if pa.shape() == a.shape() && pb.shape() == b.shape() => {
            (a * eta + pa * (1.0 - eta), b * eta + pb * (1.0 - eta))
        }
        _ => (a, b),
    })
}

/// Output map of the realization in its own coordinates: first `p` rows of `U S^gamma`.
pub fn era_output_matrix(svd: &TruncatedSvd, gamma: f64, p: usize, n_s: usize) -> DMatrix<f64> {
    let r = svd.rank();
    let obs = &svd.u * svd.pow_diag(gamma);
    let mut c = DMatrix::zeros(p, n_s);
    c.view_mut((0, 0), (p, r))
        .copy_from(&obs.view((0, 0), (p, r)));
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_markov(a: f64, count: usize) -> Vec<DMatrix<f64>> {
        (0..count)
            .map(|k| DMatrix::from_element(1, 1, a.powi(k as i32)))
            .collect()
    }

    #[test]
    fn single_block_toeplitz() {
        let h = scalar_markov(0.5, 2);
        let (hh, hp) = build_hankels(&h, HankelLayout::UpperToeplitz).unwrap();
        assert_eq!(hh, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(hp, DMatrix::from_element(1, 1, 0.5));
    }

    #[test]
    fn toeplitz_entries_follow_column_minus_row() {
        let h = scalar_markov(0.5, 5);
        let (hh, hp) = build_hankels(&h, HankelLayout::UpperToeplitz).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let e = if j >= i {
                    0.5f64.powi((j - i) as i32)
                } else {
                    0.0
                };
                assert_eq!(hh[(i, j)], e);
                let e2 = if j >= i {
                    0.5f64.powi((j - i + 1) as i32)
                } else {
                    0.0
                };
                assert_eq!(hp[(i, j)], e2);
            }
        }
    }

    #[test]
    fn zero_markov_gives_zero_hankels_and_aborts() {
        let h: Vec<_> = (0..4).map(|_| DMatrix::zeros(2, 2)).collect();
        let (hh, hp) = build_hankels(&h, HankelLayout::Classical).unwrap();
        assert_eq!(hh.norm() + hp.norm(), 0.0);
        let svd = truncated_svd(&hh, 4);
        assert_eq!(svd.rank(), 0);
        assert!(realize_raw(&svd, &hp, 0.5, 4, 2).is_err());
    }

    #[test]
    fn identity_singular_values_tie_to_half() {
        let svd = TruncatedSvd {
            u: DMatrix::identity(2, 2),
            s: DVector::from_element(2, 1.0),
            v: DMatrix::identity(2, 2),
        };
        let c = DMatrix::identity(1, 2);
        let g = optimize_gamma(&svd, &c, 1, 0.3, 1e-8).unwrap();
        assert!(g.flat);
        assert_eq!(g.gamma, 0.5);
    }

    #[test]
    fn gamma_update_gating() {
        assert_eq!(update_gamma(0.5, 0.59, 1.0, 20, 20), 0.59);
        assert!((update_gamma(0.5, 0.59, 1.0 / 9.0, 40, 20) - 0.51).abs() < 1e-12);
        assert_eq!(update_gamma(0.5, 0.59, 1.0 / 9.0, 21, 20), 0.5);
    }

    #[test]
    fn scalar_system_realization() {
        let h = scalar_markov(0.5, 9);
        let (hh, hp) = build_hankels(&h, HankelLayout::Classical).unwrap();
        let svd = truncated_svd(&hh, 1);
        for gamma in [0.0, 0.3, 0.5, 1.0] {
            let (a, b) = realize_raw(&svd, &hp, gamma, 1, 1).unwrap();
            let c = era_output_matrix(&svd, gamma, 1, 1);
            assert!((a[(0, 0)] - 0.5).abs() < 1e-9);
            for (k, hk) in h.iter().enumerate() {
                let mk = &c * a.pow(k as u32) * &b;
                assert!((mk[(0, 0)] - hk[(0, 0)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn smoothing_is_convex_combination() {
        let h = scalar_markov(0.5, 9);
        let (hh, hp) = build_hankels(&h, HankelLayout::Classical).unwrap();
        let svd = truncated_svd(&hh, 1);
        let pa = DMatrix::from_element(1, 1, 0.1);
        let pb = DMatrix::from_element(1, 1, 3.0);
        let (a, _) = realize_ab(&svd, &hp, 0.5, 0.25, Some((&pa, &pb)), 1, 1).unwrap();
        assert!((a[(0, 0)] - (0.25 * 0.5 + 0.75 * 0.1)).abs() < 1e-12);
        let (a1, _) = realize_ab(&svd, &hp, 0.5, 1.0, Some((&pa, &pb)), 1, 1).unwrap();
        assert!((a1[(0, 0)] - 0.5).abs() < 1e-12);
    }
}
