//! Seeded residual perturbation injected into the droop dynamics.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Independent random substreams derived from one scenario seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Noise = 1,
    Delay = 2,
    Ambient = 3,
    Dither = 4,
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyConfig {
    pub enabled: bool,
    pub amp_omega: f64,
    pub amp_v: f64,
    pub lag: f64,
    pub seed: u64,
}

impl UncertaintyConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            amp_omega: 0.0,
            amp_v: 0.0,
            lag: 1.0,
            seed: 0,
        }
    }
}

/// First-order-lagged Gaussian process with unit stationary variance, scaled by the
/// configured amplitudes.
#[derive(Debug, Clone)]
pub struct ResidualProcess {
    cfg: UncertaintyConfig,
    state: DVector<f64>,
    rng: ChaCha8Rng,
    n: usize,
}

impl ResidualProcess {
    pub fn new(cfg: UncertaintyConfig, n: usize) -> Self {
        let rng = substream(cfg.seed, Stream::Ambient);
        Self {
            cfg,
            state: DVector::zeros(2 * n),
            rng,
            n,
        }
    }

    pub fn config(&self) -> &UncertaintyConfig {
        &self.cfg
    }

    fn active(&self) -> bool {
        self.cfg.enabled && (self.cfg.amp_omega > 0.0 || self.cfg.amp_v > 0.0)
    }

    /// Advance the process by `dt` and return `(f_omega, f_v)`.
    pub fn step(&mut self, dt: f64) -> (DVector<f64>, DVector<f64>) {
        let n = self.n;
        if !self.active() {
            return (DVector::zeros(n), DVector::zeros(n));
        }
        let a = (-dt / self.cfg.lag).exp();
        let b = (1.0 - a * a).sqrt();
        for x in self.state.iter_mut() {
            let w: f64 = StandardNormal.sample(&mut self.rng);
            *x = a * *x + b * w;
        }
        let fw = self.state.rows(0, n) * self.cfg.amp_omega;
        let fv = self.state.rows(n, n) * self.cfg.amp_v;
        (fw, fv)
    }
}
