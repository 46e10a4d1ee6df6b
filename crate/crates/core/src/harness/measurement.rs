//! PMU measurement corruption and the delayed control channel.

use std::collections::VecDeque;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::config::MeasurementModel;
use crate::uncertainty::{substream, Stream};

/// One synchrophasor sample set for every DER bus.
#[derive(Debug, Clone, PartialEq)]
pub struct PmuSample {
    pub theta: DVector<f64>,
    pub v: DVector<f64>,
    /// Angular-frequency deviation, rad/s.
    pub omega: DVector<f64>,
}

/// Adds independent Gaussian noise: angle in rad, magnitude in pu, frequency in Hz.
#[derive(Debug, Clone)]
pub struct Pmu {
    sigma: f64,
    rng: ChaCha8Rng,
}

impl Pmu {
    pub fn new(sigma: f64, seed: u64) -> Self {
        Self {
            sigma,
            rng: substream(seed, Stream::Noise),
        }
    }

    fn noise(&mut self) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let w: f64 = StandardNormal.sample(&mut self.rng);
        self.sigma * w
    }

    pub fn measure(&mut self, truth: &PmuSample) -> PmuSample {
        let two_pi = 2.0 * std::f64::consts::PI;
        PmuSample {
            theta: truth.theta.map(|x| x + self.noise()),
            v: truth.v.map(|x| x + self.noise()),
            omega: truth.omega.map(|x| x + two_pi * self.noise()),
        }
    }
}

/// Control message waiting for delivery.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub sent: f64,
    pub deliver: f64,
    pub u: DVector<f64>,
}

/// Time-stamped FIFO with a sampled per-message delay, truncated at zero.
#[derive(Debug, Clone)]
pub struct DelayQueue {
    dist: Option<Normal<f64>>,
    mean: f64,
    rng: ChaCha8Rng,
    pending: VecDeque<Message>,
}

impl DelayQueue {
    pub fn new(m: &MeasurementModel, seed: u64) -> Self {
        let dist = if m.delay_sigma > 0.0 {
            Normal::new(m.delay_mean, m.delay_sigma).ok()
        } else {
            None
        };
        Self {
            dist,
            mean: m.delay_mean,
            rng: substream(seed, Stream::Delay),
            pending: VecDeque::new(),
        }
    }

    pub fn sample_delay(&mut self) -> f64 {
        let d = match &self.dist {
            Some(n) => n.sample(&mut self.rng),
            None => self.mean,
        };
        d.max(0.0)
    }

    pub fn send(&mut self, t: f64, u: DVector<f64>) -> f64 {
        let d = self.sample_delay();
        let msg = Message {
            sent: t,
            deliver: t + d,
            u,
        };
        let pos = self
            .pending
            .iter()
            .position(|m| m.deliver > msg.deliver)
            .unwrap_or(self.pending.len());
        self.pending.insert(pos, msg);
        d
    }

    /// Messages whose delivery time is at or before `t`, in delivery order.
    pub fn due(&mut self, t: f64) -> Vec<Message> {
        let mut out = Vec::new();
        while let Some(front) = self.pending.front() {
            if front.deliver <= t + 1e-12 {
                out.extend(self.pending.pop_front());
            } else {
                break;
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }
}

/// Gaussian excitation added to data-driven controller outputs.
#[derive(Debug, Clone)]
pub struct Dither {
    sigma: f64,
    rng: ChaCha8Rng,
}

impl Dither {
    pub fn new(sigma: f64, seed: u64) -> Self {
        Self {
            sigma,
            rng: substream(seed, Stream::Dither),
        }
    }

    pub fn sample(&mut self, n: usize) -> DVector<f64> {
        if self.sigma == 0.0 {
            return DVector::zeros(n);
        }
        let s = self.sigma;
        let rng = &mut self.rng;
        DVector::from_fn(n, |_, _| {
            let w: f64 = rng.sample(StandardNormal);
            s * w
        })
    }
}
