//! Closed-loop scenario execution: primary integration, PMU sampling, delayed
//! secondary control, events, metrics and output files.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::config::{Event, ScenarioSpec};
use super::measurement::{DelayQueue, Dither, Pmu, PmuSample};
use super::metrics::{compute_metrics, IdentTiming, RunMetrics, Trajectory};
use super::strategy::{ControlContext, ControllerSnapshot, StrategyRegistry};
use crate::der::{apply_setpoint_update, DerUnit};
use crate::error::{MgError, Result};
use crate::ident::{
    lift_observables, predict_one_step, prediction_error, IdentifiedModel, MeasurementWindow,
    OkidEngine,
};
use crate::network::{build_network, compute_injections, Load, NetworkModel, NetworkState};
use crate::sim::{frequency_deviation, grid_connected_equilibrium, simulate_step, Residual};
use crate::stability::{bibo_check, compute_disc_margins};
use crate::uncertainty::{ResidualProcess, UncertaintyConfig};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
const BIBO_STEPS: usize = 10_000;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// One secondary sample of one DER bus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t_s: f64,
    pub bus: usize,
    pub v_pu: f64,
    pub f_hz: f64,
    pub theta_rad: f64,
    pub p_pu: f64,
    pub q_pu: f64,
    pub u_p_pu: f64,
    pub u_q_pu: f64,
    pub gamma_opt: Option<f64>,
    pub pred_err: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Capture the controller state at the first secondary sample at or after this time.
    pub snapshot_at: Option<f64>,
}

pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub rows: Vec<TrajectoryRow>,
    pub trajectory: Trajectory,
    pub snapshot: Option<(f64, ControllerSnapshot)>,
    pub final_snapshot: Option<ControllerSnapshot>,
    /// Set when the primary integration diverged; the outputs cover the run up to that point.
    pub divergence: Option<MgError>,
}

/// Enhanced and conventional identifiers fed the same windows, scored on
/// their one-step voltage predictions.
struct PredictionMonitor {
    enhanced: OkidEngine,
    conventional: OkidEngine,
    pending: Option<Pending>,
    err_enhanced: Vec<f64>,
    err_conventional: Vec<f64>,
}

struct Pending {
    v_l: DVector<f64>,
    enhanced: Option<DVector<f64>>,
    conventional: Option<DVector<f64>>,
}

fn predicted_voltage(
    model: &IdentifiedModel,
    z: &DVector<f64>,
    u: &DVector<f64>,
    n: usize,
) -> Option<DVector<f64>> {
    let (_, y) = predict_one_step(model, z, u);
    let dv = y.rows(n, n).into_owned();
    dv.iter().all(|x| x.is_finite()).then_some(dv)
}

impl PredictionMonitor {
    fn new(spec: &ScenarioSpec) -> Result<Self> {
        Ok(Self {
            enhanced: OkidEngine::enhanced(spec.okid.clone())?,
            conventional: OkidEngine::conventional(spec.okid.clone())?,
            pending: None,
            err_enhanced: Vec::new(),
            err_conventional: Vec::new(),
        })
    }

    /// Score the prediction made at the previous sample; returns the enhanced error.
    fn score(&mut self, v_true: &DVector<f64>) -> Option<f64> {
        let p = self.pending.take()?;
        let dv = v_true - &p.v_l;
        let mut out = None;
        if let Some(pred) = p.enhanced {
            let e = prediction_error(&dv, &pred);
            self.err_enhanced.push(e);
            out = Some(e);
        }
        if let Some(pred) = p.conventional {
            self.err_conventional.push(prediction_error(&dv, &pred));
        }
        out
    }

    fn predict(&mut self, w: &MeasurementWindow, z: &DVector<f64>, u: &DVector<f64>) {
        let n = w.n_bus();
        let enhanced = self
            .enhanced
            .identify(w)
            .ok()
            .and_then(|s| predicted_voltage(&s.model, z, u, n));
        let conventional = self
            .conventional
            .identify(w)
            .ok()
            .and_then(|s| predicted_voltage(&s.model, z, u, n));
        self.pending = Some(Pending {
            v_l: w.v_l.clone(),
            enhanced,
            conventional,
        });
    }
}

/// `k * ts` rounded to the nanosecond so sample times print cleanly.
fn sample_time(k: usize, ts: f64) -> f64 {
    (k as f64 * ts * 1e9).round() / 1e9
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

struct Plant {
    net: NetworkModel,
    ders: Vec<DerUnit>,
    loads: Vec<Load>,
    state: NetworkState,
    residual: Residual,
}

impl Plant {
    fn apply_event(&mut self, spec: &ScenarioSpec, e: &Event) -> Result<()> {
        match *e {
            Event::Islanding { .. } => self.net.grid_connected = false,
            Event::LoadStep { bus, dp, dq, .. } => {
                self.loads.push(Load {
                    bus,
                    p: dp,
                    q: dq,
                    v_nom: 1.0,
                });
                let connected = self.net.grid_connected;
                self.net = build_network(spec.n_bus, &spec.lines, &self.loads, &spec.der_buses)?;
                self.net.grid_connected = connected;
            }
            Event::IrradianceDrop { der, dp, .. } => self.ders[der].p_ref -= dp,
        }
        log::debug!("t={:.4}: applied {:?}", self.state.t, e);
        Ok(())
    }

    fn sample(&self) -> PmuSample {
        let n = self.net.n_der;
        PmuSample {
            theta: self.state.theta.clone(),
            v: self.state.v.clone(),
            omega: frequency_deviation(
                &self.net,
                &self.ders,
                &self.state,
                &DVector::zeros(2 * n),
                &self.residual,
            ),
        }
    }
}

fn window_from(
    hist: &[PmuSample],
    inputs: &[DVector<f64>],
    len: usize,
) -> Result<MeasurementWindow> {
    let n = hist[0].theta.len();
    let samples = &hist[hist.len() - len..];
    let us = &inputs[inputs.len() - len..];
    let col = |f: &dyn Fn(&PmuSample) -> &DVector<f64>| {
        DMatrix::from_fn(n, len, |i, j| f(&samples[j])[i])
    };
    let theta = col(&|s| &s.theta);
    let v = col(&|s| &s.v);
    let omega = col(&|s| &s.omega);
    let u = DMatrix::from_fn(2 * n, len, |i, j| us[j][i]);
    MeasurementWindow::new(theta, v, omega, u)
}

/// Run a scenario in memory with the default strategy table.
pub fn execute(spec: &ScenarioSpec, opts: &RunOptions) -> Result<RunOutcome> {
    execute_with(spec, &StrategyRegistry::default(), opts)
}

/// Run a scenario in memory. Divergence is reported in the outcome, not as an error.
pub fn execute_with(
    spec: &ScenarioSpec,
    registry: &StrategyRegistry,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    let n = spec.n_der();
    let mut net = build_network(spec.n_bus, &spec.lines, &spec.loads, &spec.der_buses)?;
    net.grid_connected = true;
    let mut ders = spec.ders.clone();
    let state = grid_connected_equilibrium(&net, &mut ders)?;
    let mut plant = Plant {
        net,
        ders,
        loads: spec.loads.clone(),
        state,
        residual: Residual::zero(n),
    };
    let controllable: Vec<bool> = plant.ders.iter().map(DerUnit::controllable).collect();

    let mut strategy = registry.create(spec.controller.name(), spec)?;
    let excite = strategy.needs_excitation();
    let mut monitor = if excite {
        Some(PredictionMonitor::new(spec)?)
    } else {
        None
    };
    let bound = spec.lqr.bound;
    let mut pmu = Pmu::new(spec.measurement.noise_sigma, spec.seed);
    let mut queue = DelayQueue::new(&spec.measurement, spec.seed);
    let mut dither = Dither::new(spec.dither_fraction * bound, spec.seed);
    let amb = spec.measurement.ambient_sigma;
    let mut ambient = ResidualProcess::new(
        UncertaintyConfig {
            enabled: amb > 0.0,
            amp_omega: amb,
            amp_v: amb,
            lag: spec.ts,
            seed: spec.seed,
        },
        n,
    );

    let steps_per = (spec.ts / spec.dt).round() as usize;
    let n_samples = spec.n_samples();
    let t_sec = spec.secondary_start();
    let win = spec.okid.n;
    let mut events = spec.events.iter().peekable();

    let mut hist: Vec<PmuSample> = Vec::with_capacity(n_samples);
    let mut inputs: Vec<DVector<f64>> = Vec::with_capacity(n_samples);
    let mut rows = Vec::with_capacity(n_samples * n);
    let mut traj = Trajectory::default();
    let mut t_no_gamma = Vec::new();
    let mut t_gamma = Vec::new();
    let mut warnings = 0usize;
    let mut max_lifted: Option<f64> = None;
    let mut snapshot = None;
    let mut k_sec = 0usize;
    let mut divergence = None;

    'outer: for k in 0..n_samples {
        let t = sample_time(k, spec.ts);
        let truth = plant.sample();
        let (p_inj, q_inj) = compute_injections(&plant.net, &plant.state);
        let f_dev = truth.omega.map(|w| w / TWO_PI);
        traj.push(t, truth.v.clone(), f_dev.clone());
        let pred_err = monitor.as_mut().and_then(|m| m.score(&truth.v));

        let meas = pmu.measure(&truth);
        hist.push(meas);
        let mut u = DVector::zeros(2 * n);
        let active = t >= t_sec - 1e-9;
        if active {
            let window = if hist.len() >= win && inputs.len() >= win {
                Some(window_from(&hist, &inputs, win)?)
            } else {
                None
            };
            let z = window.as_ref().map(|w| {
                let last = hist.last().expect("sample just pushed");
                lift_observables(
                    &last.theta,
                    &last.v,
                    &last.omega,
                    &w.theta_l,
                    spec.okid.v_nom,
                    0.0,
                )
            });
            if let Some(z) = &z {
                let nz = z.norm();
                max_lifted = Some(max_lifted.map_or(nz, |m: f64| m.max(nz)));
            }
            let ctx = ControlContext {
                k: k_sec,
                t,
                window: window.as_ref(),
                z: z.as_ref(),
                latest: hist.last().expect("sample just pushed"),
                ts: spec.ts,
                f_nom: spec.f_nom,
            };
            let out = strategy.step(&ctx);
            k_sec += 1;
            if let Some(msg) = &out.warning {
                warnings += 1;
                log::warn!("t={t:.3}: {msg}");
            }
            if let Some(d) = out.ident_time {
                let ms = d.as_secs_f64() * 1e3;
                if out.gamma_updated {
                    t_gamma.push(ms);
                } else {
                    t_no_gamma.push(ms);
                }
            }
            u = out.u;
            if excite {
                u += dither.sample(2 * n);
            }
            for i in 0..n {
                if !controllable[i] {
                    u[i] = 0.0;
                    u[n + i] = 0.0;
                }
            }
            u.apply(|x| *x = x.clamp(-bound, bound));
            if let (Some(m), Some(w), Some(z)) = (monitor.as_mut(), window.as_ref(), z.as_ref()) {
                m.predict(w, z, &u);
            }
            queue.send(t, u.clone());
            if snapshot.is_none() {
                if let Some(ts) = opts.snapshot_at {
                    if t >= ts - 1e-9 {
                        snapshot = strategy.snapshot().map(|s| (t, s));
                    }
                }
            }
        }
        let gamma = strategy.gamma();
        for i in 0..n {
            rows.push(TrajectoryRow {
                t_s: t,
                bus: i,
                v_pu: truth.v[i],
                f_hz: spec.f_nom + f_dev[i],
                theta_rad: truth.theta[i],
                p_pu: p_inj[i],
                q_pu: q_inj[i],
                u_p_pu: u[i],
                u_q_pu: u[n + i],
                gamma_opt: gamma,
                pred_err,
            });
        }
        inputs.push(u);
        if k + 1 == n_samples {
            break;
        }

        for _ in 0..steps_per {
            let tp = plant.state.t;
            while let Some(e) = events.next_if(|e| e.time() <= tp + spec.dt / 2.0) {
                plant.apply_event(spec, e)?;
            }
            for msg in queue.due(tp) {
                for i in (0..n).filter(|&i| controllable[i]) {
                    apply_setpoint_update(&mut plant.ders[i], i, msg.u[i], msg.u[n + i])?;
                }
            }
            let (fw, fv) = ambient.step(spec.dt);
            plant.residual = Residual { omega: fw, v: fv };
            match simulate_step(
                &plant.net,
                &mut plant.ders,
                &plant.state,
                &DVector::zeros(2 * n),
                &plant.residual,
                spec.dt,
            ) {
                Ok(s) => plant.state = s,
                Err(e) => {
                    log::error!("{e}");
                    divergence = Some(e);
                    break 'outer;
                }
            }
        }
        // keep sample times exact despite accumulated rounding
        plant.state.t = sample_time(k + 1, spec.ts);
    }

    let restoration = compute_metrics(
        &traj,
        1.0,
        spec.band_v,
        spec.band_f,
        spec.first_event_time(),
    );
    let final_snapshot = strategy.snapshot();
    let (bibo, margins) = match &final_snapshot {
        Some(s) => (
            Some(bibo_check(&s.model, &s.k, bound, BIBO_STEPS, spec.seed)),
            compute_disc_margins(&s.cost.q, &s.cost.r, &s.k, &s.model.b, &s.s),
        ),
        None => (None, Vec::new()),
    };
    let status = match &divergence {
        Some(e) => format!("diverged: {e}"),
        None => "ok".to_string(),
    };
    let (err_p, err_c) = match &monitor {
        Some(m) => (mean(&m.err_enhanced), mean(&m.err_conventional)),
        None => (None, None),
    };
    let metrics = RunMetrics {
        scenario: spec.name.clone(),
        controller: strategy.name().to_string(),
        seed: spec.seed,
        status,
        t_end_s: spec.t_end,
        restoration,
        mean_pred_err_proposed: err_p,
        mean_pred_err_conventional: err_c,
        identification_timing: IdentTiming::from_samples(&t_no_gamma, &t_gamma),
        max_lifted_norm: max_lifted,
        bibo,
        margins,
        warnings,
    };
    Ok(RunOutcome {
        metrics,
        rows,
        trajectory: traj,
        snapshot,
        final_snapshot,
        divergence,
    })
}

/// Serialize trajectory rows as CSV; optional fields are left empty.
pub fn trajectory_csv(rows: &[TrajectoryRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| MgError::InvalidArgument(e.to_string()))?;
    }
    w.into_inner()
        .map_err(|e| MgError::InvalidArgument(e.to_string()))
}

/// Write `trajectory.csv` and `summary.json` into `out_dir`.
pub fn write_outputs(outcome: &RunOutcome, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(
        out_dir.join(TRAJECTORY_FILE),
        trajectory_csv(&outcome.rows)?,
    )?;
    let json = serde_json::to_string_pretty(&outcome.metrics)
        .map_err(|e| MgError::InvalidArgument(e.to_string()))?;
    fs::write(out_dir.join(SUMMARY_FILE), json)?;
    Ok(())
}

/// Run, write outputs, and surface divergence as an error after the partial
/// outputs are on disk.
pub fn run_scenario(spec: &ScenarioSpec, out_dir: &Path) -> Result<RunMetrics> {
    let mut outcome = execute(spec, &RunOptions::default())?;
    write_outputs(&outcome, out_dir)?;
    match outcome.divergence.take() {
        Some(e) => Err(e),
        None => Ok(outcome.metrics),
    }
}
