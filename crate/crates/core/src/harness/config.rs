//! Scenario file schema (SI units, named in keys) and its per-unit normalization.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::der::{DerMode, DerUnit};
use crate::error::{MgError, Result};
use crate::ident::{HankelLayout, OkidConfig};
use crate::lqr::CostWeights;
use crate::network::{Line, Load};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseFile {
    pub s_base_va: f64,
    pub v_base_v: f64,
    pub f_nom_hz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineFile {
    pub from: usize,
    pub to: usize,
    pub r_ohm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_ohm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_h: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadFile {
    pub bus: usize,
    pub p_w: f64,
    pub q_var: f64,
    #[serde(default = "one")]
    pub v_nom_pu: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub n_bus: usize,
    pub lines: Vec<LineFile>,
    #[serde(default)]
    pub loads: Vec<LoadFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerFile {
    #[serde(default)]
    pub name: String,
    pub bus: usize,
    pub mode: DerMode,
    pub sigma_omega_rad_per_ws: f64,
    pub sigma_v_v_per_var: f64,
    pub tau_v_s: f64,
    pub tf_s: f64,
    pub p_ref_w: f64,
    pub q_ref_var: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventFile {
    Islanding {
        t_s: f64,
    },
    LoadStep {
        t_s: f64,
        bus: usize,
        dp_w: f64,
        dq_var: f64,
    },
    IrradianceDrop {
        t_s: f64,
        der: usize,
        dp_w: f64,
    },
}

impl EventFile {
    fn time(&self) -> f64 {
        match self {
            EventFile::Islanding { t_s } => *t_s,
            EventFile::LoadStep { t_s, .. } => *t_s,
            EventFile::IrradianceDrop { t_s, .. } => *t_s,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingFile {
    #[serde(default = "default_dt")]
    pub primary_dt_s: f64,
    #[serde(default = "default_ts")]
    pub secondary_ts_s: f64,
}

fn default_dt() -> f64 {
    1e-4
}
fn default_ts() -> f64 {
    0.03
}

impl Default for TimingFile {
    fn default() -> Self {
        Self {
            primary_dt_s: default_dt(),
            secondary_ts_s: default_ts(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementFile {
    pub noise_sigma_pu: f64,
    pub delay_mean_s: f64,
    pub delay_sigma_s: f64,
    pub ambient_sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentificationFile {
    pub window_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub t_opt_s: f64,
    #[serde(default = "half")]
    pub gamma0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_r: Option<usize>,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default)]
    pub hankel_layout: HankelLayout,
    #[serde(default = "default_dither")]
    pub dither_fraction: f64,
}

fn half() -> f64 {
    0.5
}
fn default_ridge() -> f64 {
    1e-8
}
fn default_dither() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrFile {
    pub q_v: f64,
    pub q_sin: f64,
    pub q_cos: f64,
    pub q_omega: f64,
    pub r_p: f64,
    pub r_q: f64,
    pub u_bound_va: f64,
    #[serde(default = "yes")]
    pub warm_start: bool,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_iter")]
    pub max_iter: usize,
}

fn yes() -> bool {
    true
}
fn default_tol() -> f64 {
    1e-9
}
fn default_iter() -> usize {
    10_000
}

/// PI gains on per-unit voltage error and frequency error in Hz. The PI output
/// is a per-unit setpoint offset, limited to `output_limit_va`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiGains {
    pub kp_v: f64,
    pub ki_v: f64,
    pub kp_f: f64,
    pub ki_f: f64,
    #[serde(default = "default_pi_limit")]
    pub output_limit_va: f64,
}

fn default_pi_limit() -> f64 {
    20_000.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsFile {
    #[serde(default = "default_band_v")]
    pub band_v_pu: f64,
    #[serde(default = "default_band_f")]
    pub band_f_hz: f64,
}

fn default_band_v() -> f64 {
    0.01
}
fn default_band_f() -> f64 {
    0.05
}

impl Default for MetricsFile {
    fn default() -> Self {
        Self {
            band_v_pu: default_band_v(),
            band_f_hz: default_band_f(),
        }
    }
}

/// Secondary controller selected for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Proposed,
    Okid,
    Edmdc,
    Pi,
    None,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 5] = [
        ControllerKind::Proposed,
        ControllerKind::Okid,
        ControllerKind::Edmdc,
        ControllerKind::Pi,
        ControllerKind::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Proposed => "proposed",
            ControllerKind::Okid => "okid",
            ControllerKind::Edmdc => "edmdc",
            ControllerKind::Pi => "pi",
            ControllerKind::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| MgError::UnknownStrategy(s.to_string()))
    }
}

/// On-disk scenario document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub base: BaseFile,
    pub network: NetworkFile,
    pub ders: Vec<DerFile>,
    #[serde(default)]
    pub events: Vec<EventFile>,
    pub t_end_s: f64,
    pub controller: ControllerKind,
    #[serde(default = "default_lag")]
    pub secondary_enable_lag_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub timing: TimingFile,
    pub measurement: MeasurementFile,
    pub identification: IdentificationFile,
    pub lqr: LqrFile,
    pub pi: PiGains,
    #[serde(default)]
    pub metrics: MetricsFile,
    /// Free-form reference data (e.g. inner-loop gains) carried for documentation only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub documentation: Option<serde_json::Value>,
}

fn default_lag() -> f64 {
    0.1
}

/// Event with quantities in per-unit and bus indices resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    Islanding {
        t: f64,
    },
    LoadStep {
        t: f64,
        bus: usize,
        dp: f64,
        dq: f64,
    },
    IrradianceDrop {
        t: f64,
        der: usize,
        dp: f64,
    },
}

impl Event {
    pub fn time(&self) -> f64 {
        match *self {
            Event::Islanding { t }
            | Event::LoadStep { t, .. }
            | Event::IrradianceDrop { t, .. } => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasurementModel {
    pub noise_sigma: f64,
    pub delay_mean: f64,
    pub delay_sigma: f64,
    pub ambient_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrSettings {
    pub weights: CostWeights,
    /// Symmetric input bound in per-unit.
    pub bound: f64,
    pub warm_start: bool,
    pub tol: f64,
    pub max_iter: usize,
}

/// Validated scenario with every quantity in per-unit.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub name: String,
    pub s_base: f64,
    pub v_base: f64,
    pub f_nom: f64,
    pub n_bus: usize,
    pub lines: Vec<Line>,
    pub loads: Vec<Load>,
    pub der_buses: Vec<usize>,
    pub der_names: Vec<String>,
    pub ders: Vec<DerUnit>,
    pub events: Vec<Event>,
    pub t_end: f64,
    pub controller: ControllerKind,
    pub secondary_enable_lag: f64,
    pub seed: u64,
    pub dt: f64,
    pub ts: f64,
    pub measurement: MeasurementModel,
    pub okid: OkidConfig,
    pub dither_fraction: f64,
    pub lqr: LqrSettings,
    pub pi: PiGains,
    pub band_v: f64,
    pub band_f: f64,
    pub file: ScenarioFile,
}

impl ScenarioSpec {
    pub fn n_der(&self) -> usize {
        self.ders.len()
    }

    /// Time at which secondary control comes online.
    pub fn secondary_start(&self) -> f64 {
        let island = self.events.iter().find_map(|e| match e {
            Event::Islanding { t } => Some(*t),
            _ => None,
        });
        island.unwrap_or(0.0) + self.secondary_enable_lag
    }

    pub fn first_event_time(&self) -> f64 {
        self.events.first().map(|e| e.time()).unwrap_or(0.0)
    }

    pub fn with_controller(mut self, c: ControllerKind) -> Self {
        self.controller = c;
        self.file.controller = c;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.file.seed = seed;
        self
    }

    pub fn with_t_end(mut self, t_end: f64) -> Result<Self> {
        self.file.t_end_s = t_end;
        ScenarioSpec::from_file(self.file)
    }

    /// Number of secondary samples, `floor(t_end / ts) + 1`.
    pub fn n_samples(&self) -> usize {
        (self.t_end / self.ts + 1e-9).floor() as usize + 1
    }
}

fn positive(path: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(MgError::config(
            path,
            format!("must be positive and finite, got {x}"),
        ))
    }
}

fn non_negative(path: &str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(MgError::config(
            path,
            format!("must be non-negative and finite, got {x}"),
        ))
    }
}

impl ScenarioSpec {
    pub fn from_file(f: ScenarioFile) -> Result<Self> {
        positive("base.s_base_va", f.base.s_base_va)?;
        positive("base.v_base_v", f.base.v_base_v)?;
        positive("base.f_nom_hz", f.base.f_nom_hz)?;
        let s_base = f.base.s_base_va;
        let v_base = f.base.v_base_v;
        let z_base = v_base * v_base / s_base;
        let w_nom = 2.0 * std::f64::consts::PI * f.base.f_nom_hz;
        let n_bus = f.network.n_bus;
        if n_bus == 0 {
            return Err(MgError::config("network.n_bus", "must be at least 1"));
        }
        let mut lines = Vec::new();
        for (k, l) in f.network.lines.iter().enumerate() {
            let p = format!("network.lines[{k}]");
            non_negative(&format!("{p}.r_ohm"), l.r_ohm)?;
            let x = match (l.x_ohm, l.l_h) {
                (Some(x), None) => x,
                (None, Some(lh)) => w_nom * lh,
                _ => {
                    return Err(MgError::config(
                        &p,
                        "exactly one of x_ohm or l_h is required",
                    ))
                }
            };
            if !x.is_finite() {
                return Err(MgError::config(format!("{p}.x"), "must be finite"));
            }
            if l.from >= n_bus || l.to >= n_bus {
                return Err(MgError::config(&p, "bus index out of range"));
            }
            lines.push(Line {
                from: l.from,
                to: l.to,
                r: l.r_ohm / z_base,
                x: x / z_base,
            });
        }
        let mut loads = Vec::new();
        for (k, ld) in f.network.loads.iter().enumerate() {
            let p = format!("network.loads[{k}]");
            if ld.bus >= n_bus {
                return Err(MgError::config(&p, "bus index out of range"));
            }
            positive(&format!("{p}.v_nom_pu"), ld.v_nom_pu)?;
            loads.push(Load {
                bus: ld.bus,
                p: ld.p_w / s_base,
                q: ld.q_var / s_base,
                v_nom: ld.v_nom_pu,
            });
        }
        if f.ders.is_empty() {
            return Err(MgError::config("ders", "at least one DER is required"));
        }
        let mut ders = Vec::new();
        let mut der_buses = Vec::new();
        let mut der_names = Vec::new();
        for (k, d) in f.ders.iter().enumerate() {
            let p = format!("ders[{k}]");
            if d.bus >= n_bus {
                return Err(MgError::config(&p, "bus index out of range"));
            }
            if der_buses.contains(&d.bus) {
                return Err(MgError::config(&p, "two DERs on one bus"));
            }
            positive(
                &format!("{p}.sigma_omega_rad_per_ws"),
                d.sigma_omega_rad_per_ws,
            )?;
            positive(&format!("{p}.sigma_v_v_per_var"), d.sigma_v_v_per_var)?;
            positive(&format!("{p}.tau_v_s"), d.tau_v_s)?;
            positive(&format!("{p}.tf_s"), d.tf_s)?;
            der_buses.push(d.bus);
            der_names.push(if d.name.is_empty() {
                format!("DER{}", k + 1)
            } else {
                d.name.clone()
            });
            ders.push(DerUnit {
                mode: d.mode,
                sigma_omega: d.sigma_omega_rad_per_ws * s_base,
                sigma_v: d.sigma_v_v_per_var * s_base / v_base,
                tau_v: d.tau_v_s,
                tf: d.tf_s,
                p_ref: d.p_ref_w / s_base,
                q_ref: d.q_ref_var / s_base,
                p_filt: 0.0,
                q_filt: 0.0,
            });
        }
        let mut events = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for (k, e) in f.events.iter().enumerate() {
            let p = format!("events[{k}]");
            let t = e.time();
            non_negative(&format!("{p}.t_s"), t)?;
            if t < last {
                return Err(MgError::config(&p, "events must be sorted by time"));
            }
            last = t;
            events.push(match *e {
                EventFile::Islanding { t_s } => Event::Islanding { t: t_s },
                EventFile::LoadStep {
                    t_s,
                    bus,
                    dp_w,
                    dq_var,
                } => {
                    if bus >= n_bus {
                        return Err(MgError::config(&p, "bus index out of range"));
                    }
                    Event::LoadStep {
                        t: t_s,
                        bus,
                        dp: dp_w / s_base,
                        dq: dq_var / s_base,
                    }
                }
                EventFile::IrradianceDrop { t_s, der, dp_w } => {
                    if der >= ders.len() {
                        return Err(MgError::config(&p, "DER index out of range"));
                    }
                    if ders[der].mode != DerMode::NonControllable {
                        return Err(MgError::config(
                            &p,
                            "irradiance drop targets a controllable DER",
                        ));
                    }
                    Event::IrradianceDrop {
                        t: t_s,
                        der,
                        dp: dp_w / s_base,
                    }
                }
            });
        }
        positive("t_end_s", f.t_end_s)?;
        if f.t_end_s <= last {
            return Err(MgError::config(
                "t_end_s",
                "must exceed the last event time",
            ));
        }
        non_negative("secondary_enable_lag_s", f.secondary_enable_lag_s)?;
        positive("timing.primary_dt_s", f.timing.primary_dt_s)?;
        positive("timing.secondary_ts_s", f.timing.secondary_ts_s)?;
        if f.timing.primary_dt_s > crate::sim::MAX_PRIMARY_DT {
            return Err(MgError::config(
                "timing.primary_dt_s",
                "must not exceed 1 ms",
            ));
        }
        let ratio = f.timing.secondary_ts_s / f.timing.primary_dt_s;
        if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
            return Err(MgError::config(
                "timing.secondary_ts_s",
                "must be an integer multiple of the primary step",
            ));
        }
        let m = &f.measurement;
        non_negative("measurement.noise_sigma_pu", m.noise_sigma_pu)?;
        non_negative("measurement.delay_mean_s", m.delay_mean_s)?;
        non_negative("measurement.delay_sigma_s", m.delay_sigma_s)?;
        non_negative("measurement.ambient_sigma", m.ambient_sigma)?;
        let id = &f.identification;
        if id.window_n < 2 {
            return Err(MgError::config(
                "identification.window_n",
                "must be at least 2",
            ));
        }
        positive("identification.t_opt_s", id.t_opt_s)?;
        non_negative("identification.dither_fraction", id.dither_fraction)?;
        let t_opt_steps = (id.t_opt_s / f.timing.secondary_ts_s).round() as usize;
        let okid = OkidConfig {
            n: id.window_n,
            eta: id.eta.unwrap_or(1.0 / id.window_n as f64),
            t_opt_steps,
            gamma0: id.gamma0,
            rank_r: id.rank_r,
            ridge: id.ridge,
            layout: id.hankel_layout,
            v_nom: 1.0,
        };
        okid.validate()
            .map_err(|e| MgError::config("identification", e.to_string()))?;
        let lq = &f.lqr;
        positive("lqr.u_bound_va", lq.u_bound_va)?;
        positive("lqr.tol", lq.tol)?;
        let weights = CostWeights {
            q_v: lq.q_v,
            q_sin: lq.q_sin,
            q_cos: lq.q_cos,
            q_omega: lq.q_omega,
            r_p: lq.r_p,
            r_q: lq.r_q,
        };
        crate::lqr::build_cost(&weights, 1).map_err(|e| MgError::config("lqr", e.to_string()))?;
        let pi = f.pi;
        for (name, g) in [
            ("kp_v", pi.kp_v),
            ("ki_v", pi.ki_v),
            ("kp_f", pi.kp_f),
            ("ki_f", pi.ki_f),
        ] {
            non_negative(&format!("pi.{name}"), g)?;
        }
        positive("pi.output_limit_va", pi.output_limit_va)?;
        positive("metrics.band_v_pu", f.metrics.band_v_pu)?;
        positive("metrics.band_f_hz", f.metrics.band_f_hz)?;
        crate::network::build_network(n_bus, &lines, &loads, &der_buses)
            .map_err(|e| MgError::config("network", e.to_string()))?;
        Ok(Self {
            name: f.name.clone(),
            s_base,
            v_base,
            f_nom: f.base.f_nom_hz,
            n_bus,
            lines,
            loads,
            der_buses,
            der_names,
            ders,
            events,
            t_end: f.t_end_s,
            controller: f.controller,
            secondary_enable_lag: f.secondary_enable_lag_s,
            seed: f.seed,
            dt: f.timing.primary_dt_s,
            ts: f.timing.secondary_ts_s,
            measurement: MeasurementModel {
                noise_sigma: m.noise_sigma_pu,
                delay_mean: m.delay_mean_s,
                delay_sigma: m.delay_sigma_s,
                ambient_sigma: m.ambient_sigma,
            },
            okid,
            dither_fraction: id.dither_fraction,
            lqr: LqrSettings {
                weights,
                bound: lq.u_bound_va / s_base,
                warm_start: lq.warm_start,
                tol: lq.tol,
                max_iter: lq.max_iter,
            },
            pi,
            band_v: f.metrics.band_v_pu,
            band_f: f.metrics.band_f_hz,
            file: f,
        })
    }
}

/// Parse and validate a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| {
        MgError::config(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    ScenarioSpec::from_file(file)
}

/// Load a scenario from disk.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| MgError::config(path.display().to_string(), e.to_string()))?;
    parse_scenario(&text)
}

pub const MG4_JSON: &str = include_str!("../../scenarios/mg4.json");
pub const MG13_JSON: &str = include_str!("../../scenarios/mg13.json");

/// Scenario shipped with the crate, by name (`mg4` or `mg13`).
pub fn bundled_scenario(name: &str) -> Result<ScenarioSpec> {
    match name {
        "mg4" => parse_scenario(MG4_JSON),
        "mg13" => parse_scenario(MG13_JSON),
        other => Err(MgError::config(
            "scenario",
            format!("no bundled scenario `{other}`"),
        )),
    }
}
