//! Closed-loop diagnostics: spectral-radius BIBO check and LQR disc margins.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::ident::IdentifiedModel;
use crate::linalg::singular_values_desc;
pub use crate::linalg::spectral_radius;
use crate::uncertainty::{substream, Stream};

/// Disc of simultaneous gain/phase perturbations tolerated by one input channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscMargin {
    pub channel: usize,
    pub center: f64,
    /// `None` when the squared radius is negative (no disc guarantee).
    pub radius: Option<f64>,
    /// `1 + G_L`
    pub gain_lo: f64,
    /// `1 + G_U`
    pub gain_hi: f64,
    pub phase_lo: f64,
    pub phase_hi: f64,
}

impl DiscMargin {
    pub fn defined(&self) -> bool {
        self.radius.is_some()
    }

    /// Strictly inside the guaranteed gain interval; the boundary is outside.
    pub fn contains_gain(&self, alpha: f64) -> bool {
        self.defined() && alpha > self.gain_lo && alpha < self.gain_hi
    }
}

/// Scalars shared by all channels: `rho = s_min(Q) / s_max(K)^2`, `mu = s_max(B'SB)`.
pub fn margin_scalars(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    b: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> (f64, f64) {
    let sq = singular_values_desc(q);
    let sk = singular_values_desc(k);
    let q_min = sq.last().copied().unwrap_or(0.0);
    let k_max = sk.first().copied().unwrap_or(0.0);
    let rho = if k_max > 0.0 {
        q_min / (k_max * k_max)
    } else {
        f64::INFINITY
    };
    let bsb = b.transpose() * s * b;
    let mu = singular_values_desc(&bsb).first().copied().unwrap_or(0.0);
    (rho, mu)
}

/// Disc for one channel with input weight `r_i`.
pub fn disc_for_channel(channel: usize, rho: f64, mu: f64, r_i: f64) -> DiscMargin {
    let ratio = r_i / mu;
    let center = 1.0 + ratio;
    let radius2 = center * center + (rho - r_i) / mu - 1.0;
    let phase = (mu / (mu + r_i)).clamp(-1.0, 1.0).acos();
    if radius2 >= 0.0 && radius2.is_finite() {
        let radius = radius2.sqrt();
        DiscMargin {
            channel,
            center,
            radius: Some(radius),
            gain_lo: 1.0 + (ratio - radius),
            gain_hi: 1.0 + (ratio + radius),
            phase_lo: -phase,
            phase_hi: phase,
        }
    } else {
        DiscMargin {
            channel,
            center,
            radius: None,
            gain_lo: 1.0,
            gain_hi: 1.0,
            phase_lo: -phase,
            phase_hi: phase,
        }
    }
}

/// Per-channel disc margins of a converged discrete LQR design.
pub fn compute_disc_margins(
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k: &DMatrix<f64>,
    b: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Vec<DiscMargin> {
    let (rho, mu) = margin_scalars(q, k, b, s);
    (0..r.nrows())
        .map(|i| disc_for_channel(i, rho, mu, r[(i, i)]))
        .collect()
}

/// Closed-loop matrix with per-channel gain multipliers, `A - B diag(alpha) K`.
pub fn perturbed_closed_loop(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k: &DMatrix<f64>,
    alpha: &DVector<f64>,
) -> DMatrix<f64> {
    a - b * DMatrix::from_diagonal(alpha) * k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiboReport {
    pub spectral_radius: f64,
    /// Closed-loop spectral radius at or above one.
    pub flagged: bool,
    /// Running maximum of the lifted-state norm under bounded random input.
    pub max_state_norm: f64,
    pub bounded: bool,
}

/// Spectral-radius check plus a bounded-input simulation of the lifted closed loop
/// `z+ = A z + B clamp(-K z + w, -bound, bound)` with `w` uniform in `[-bound, bound]`.
pub fn bibo_check(
    model: &IdentifiedModel,
    k: &DMatrix<f64>,
    bound: f64,
    steps: usize,
    seed: u64,
) -> BiboReport {
    let acl = &model.a - &model.b * k;
    let rho = spectral_radius(&acl);
    let n_s = model.n_s();
    let n_u = model.n_u();
    let mut rng = substream(seed, Stream::Dither);
    let mut z = DVector::<f64>::zeros(n_s);
    let mut first_half = 0.0f64;
    let mut second_half = 0.0f64;
    let mut finite = true;
    for t in 0..steps {
        let w = DVector::from_fn(n_u, |_, _| rng.random_range(-bound..=bound));
        let u = (-(k * &z) + w).map(|x| x.clamp(-bound, bound));
        z = &model.a * &z + &model.b * u;
        let nz = z.norm();
        if !nz.is_finite() {
            finite = false;
            break;
        }
        if t < steps / 2 {
            first_half = first_half.max(nz);
        } else {
            second_half = second_half.max(nz);
        }
    }
    let max_norm = if finite {
        first_half.max(second_half)
    } else {
        f64::INFINITY
    };
    let bounded = finite && second_half <= 10.0 * first_half.max(bound * model.b.norm());
    BiboReport {
        spectral_radius: rho,
        flagged: !(rho < 1.0),
        max_state_norm: max_norm,
        bounded,
    }
}
