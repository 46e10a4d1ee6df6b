//! Restoration metrics over secondary-rate trajectories.

use nalgebra::DVector;
use serde::Serialize;

use crate::stability::{BiboReport, DiscMargin};

/// Per-bus signals sampled at the secondary rate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    /// Voltage magnitude, pu.
    pub v: Vec<DVector<f64>>,
    /// Frequency deviation from nominal, Hz.
    pub f_dev: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn push(&mut self, t: f64, v: DVector<f64>, f_dev: DVector<f64>) {
        self.t.push(t);
        self.v.push(v);
        self.f_dev.push(f_dev);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RestorationMetrics {
    /// `inf` (serialized as `null`) when the run ends outside the band.
    pub settling_time_v: f64,
    pub settling_time_f: f64,
    pub sse_v: f64,
    pub sse_f: f64,
    pub max_dev_v: f64,
    pub max_dev_f: f64,
}

/// Wall-clock statistics of the identification step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct IdentTiming {
    pub median_ms_no_gamma: Option<f64>,
    pub max_ms_no_gamma: Option<f64>,
    pub median_ms_gamma: Option<f64>,
    pub max_ms_gamma: Option<f64>,
    pub steps_no_gamma: usize,
    pub steps_gamma: usize,
}

impl IdentTiming {
    pub fn from_samples(no_gamma_ms: &[f64], gamma_ms: &[f64]) -> Self {
        Self {
            median_ms_no_gamma: median(no_gamma_ms),
            max_ms_no_gamma: no_gamma_ms.iter().copied().reduce(f64::max),
            median_ms_gamma: median(gamma_ms),
            max_ms_gamma: gamma_ms.iter().copied().reduce(f64::max),
            steps_no_gamma: no_gamma_ms.len(),
            steps_gamma: gamma_ms.len(),
        }
    }
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Everything written to the run summary.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub controller: String,
    pub seed: u64,
    pub status: String,
    pub t_end_s: f64,
    #[serde(flatten)]
    pub restoration: RestorationMetrics,
    pub mean_pred_err_proposed: Option<f64>,
    pub mean_pred_err_conventional: Option<f64>,
    pub identification_timing: IdentTiming,
    pub max_lifted_norm: Option<f64>,
    pub bibo: Option<BiboReport>,
    pub margins: Vec<DiscMargin>,
    pub warnings: usize,
}

/// Largest absolute deviation over buses at every sample.
fn worst(series: &[DVector<f64>], nominal: f64) -> Vec<f64> {
    series
        .iter()
        .map(|x| x.iter().map(|v| (v - nominal).abs()).fold(0.0, f64::max))
        .collect()
}

/// Time after which the deviation stays inside `band` for good, linearly
/// interpolated at the final exit from the band.
pub fn settling_time(t: &[f64], dev: &[f64], band: f64) -> f64 {
    let Some(&last) = dev.last() else {
        return f64::INFINITY;
    };
    if !(last <= band) {
        return f64::INFINITY;
    }
    match dev.iter().rposition(|d| !(*d <= band)) {
        None => t[0],
        Some(j) => {
            let (d0, d1) = (dev[j], dev[j + 1]);
            let frac = if d0.is_finite() && d0 > d1 {
                (d0 - band) / (d0 - d1)
            } else {
                1.0
            };
            t[j] + frac * (t[j + 1] - t[j])
        }
    }
}

fn steady_state_error(series: &[DVector<f64>], nominal: f64) -> f64 {
    let len = series.len();
    if len == 0 {
        return 0.0;
    }
    let tail = ((len as f64) * 0.1).ceil().max(1.0) as usize;
    let mut sum = 0.0;
    let mut count = 0usize;
    for x in &series[len - tail..] {
        for v in x.iter() {
            sum += (v - nominal).abs();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Settling, steady-state error and worst post-event deviation for voltage (pu)
/// and frequency (Hz).
pub fn compute_metrics(
    traj: &Trajectory,
    v_nom: f64,
    band_v: f64,
    band_f: f64,
    t_event: f64,
) -> RestorationMetrics {
    let dv = worst(&traj.v, v_nom);
    let df = worst(&traj.f_dev, 0.0);
    let post_max = |d: &[f64]| {
        traj.t
            .iter()
            .zip(d)
            .filter(|(t, _)| **t >= t_event)
            .map(|(_, d)| *d)
            .fold(0.0, f64::max)
    };
    RestorationMetrics {
        settling_time_v: settling_time(&traj.t, &dv, band_v),
        settling_time_f: settling_time(&traj.t, &df, band_f),
        sse_v: steady_state_error(&traj.v, v_nom),
        sse_f: steady_state_error(&traj.f_dev, 0.0),
        max_dev_v: post_max(&dv),
        max_dev_f: post_max(&df),
    }
}
