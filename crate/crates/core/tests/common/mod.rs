//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| {
        let u1: f64 = rng.random_range(1e-12..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    })
}

/// Spectral radius by repeated squaring: `rho = lim ||M^(2^k)||^(1/2^k)`.
pub fn gelfand_radius(m: &DMatrix<f64>) -> f64 {
    let mut x = m.clone();
    let mut log_scale = 0.0f64;
    let mut k = 0;
    for _ in 0..60 {
        let s = x.norm();
        if s == 0.0 {
            return 0.0;
        }
        x /= s;
        log_scale += s.ln() / 2f64.powi(k);
        x = &x * &x;
        k += 1;
    }
    let s = x.norm();
    if s == 0.0 {
        return 0.0;
    }
    (log_scale + s.ln() / 2f64.powi(k)).exp()
}

/// Random stable system `(A, B, C)` with spectral radius at most `max_radius`.
pub fn stable_system(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    p: usize,
    max_radius: f64,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let mut a = gaussian_matrix(rng, n, n);
    let rho = gelfand_radius(&a);
    let target = rng.random_range(0.3..max_radius);
    if rho > 0.0 {
        a *= target / rho;
    }
    (a, gaussian_matrix(rng, n, m), gaussian_matrix(rng, p, n))
}

/// Zero-initial-state simulation with outputs read after each transition:
/// `x_(j+1) = A x_j + B u_j`, `y_j = C x_(j+1)`. Returns `(y, states)` where
/// state column `j` is `x_(j+1)`.
pub fn simulate_lti(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    u: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let len = u.ncols();
    let mut x = DVector::zeros(a.nrows());
    let mut xs = DMatrix::zeros(a.nrows(), len);
    let mut y = DMatrix::zeros(c.nrows(), len);
    for j in 0..len {
        x = a * &x + b * u.column(j);
        xs.set_column(j, &x);
        y.set_column(j, &(c * &x));
    }
    (y, xs)
}

pub fn true_markov(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    count: usize,
) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut ak = DMatrix::identity(a.nrows(), a.nrows());
    for _ in 0..count {
        out.push(c * &ak * b);
        ak = &ak * a;
    }
    out
}

/// Frobenius error of stacked blocks relative to the stacked reference.
pub fn stacked_relative_error(est: &[DMatrix<f64>], reference: &[DMatrix<f64>]) -> f64 {
    let num: f64 = est
        .iter()
        .zip(reference)
        .map(|(e, r)| (e - r).norm_squared())
        .sum();
    let den: f64 = reference.iter().map(|r| r.norm_squared()).sum();
    (num / den).sqrt()
}

/// Injections by explicit complex arithmetic, `S_i = V_i conj(sum_j Y_ij V_j)`.
pub fn complex_injections(
    y: &DMatrix<Complex<f64>>,
    theta: &DVector<f64>,
    v: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let n = theta.len();
    let ph: Vec<Complex<f64>> = (0..n)
        .map(|i| Complex::from_polar(v[i], theta[i]))
        .collect();
    let mut p = DVector::zeros(n);
    let mut q = DVector::zeros(n);
    for i in 0..n {
        let mut cur = Complex::new(0.0, 0.0);
        for j in 0..n {
            cur += y[(i, j)] * ph[j];
        }
        let s = ph[i] * cur.conj();
        p[i] = s.re;
        q[i] = s.im;
    }
    (p, q)
}

/// Finite-horizon LQR cost-to-go by the Joseph-form recursion
/// `S <- Q + K'RK + (A - BK)' S (A - BK)`, run until it stops changing.
pub fn dp_cost_to_go(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    horizon: usize,
) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(a.nrows(), a.nrows());
    for _ in 0..horizon {
        let gram = r + b.transpose() * &s * b;
        let k = gram
            .lu()
            .solve(&(b.transpose() * &s * a))
            .expect("positive definite gram");
        let acl = a - b * &k;
        let next = q + k.transpose() * r * &k + acl.transpose() * &s * &acl;
        let done = (&next - &s).norm() <= 1e-15 * next.norm();
        s = 0.5 * (&next + next.transpose());
        if done {
            break;
        }
    }
    s
}

/// Single-channel Gaussian input whose lower-triangular input Toeplitz has
/// condition number at most `max_cond`; redraws otherwise.
pub fn exciting_input(rng: &mut ChaCha8Rng, len: usize, max_cond: f64) -> DMatrix<f64> {
    loop {
        let u = gaussian_matrix(rng, 1, len);
        let t = DMatrix::from_fn(len, len, |i, j| if j >= i { u[(0, j - i)] } else { 0.0 });
        let sv = t.svd(false, false).singular_values;
        if sv.max() <= max_cond * sv.min() {
            return u;
        }
    }
}
