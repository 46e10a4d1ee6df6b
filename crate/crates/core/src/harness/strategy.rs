//! Secondary-control strategies behind one trait, registered by name.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use super::config::{LqrSettings, PiGains, ScenarioSpec};
use super::measurement::PmuSample;
use super::pi::{pi_step, PiState};
use crate::error::{MgError, Result};
use crate::ident::{edmdc_baseline, IdentifiedModel, MeasurementWindow, OkidEngine};
use crate::lqr::{build_cost, compute_gain, solve_dare, ControllerState, CostMatrices};

/// Inputs available to a strategy at one secondary step.
#[derive(Debug, Clone, Copy)]
pub struct ControlContext<'a> {
    /// Steps since secondary control came online.
    pub k: usize,
    pub t: f64,
    /// Latest `N` samples and the inputs that drove them, when enough history exists.
    pub window: Option<&'a MeasurementWindow>,
    /// Lifted latest sample relative to the window anchor.
    pub z: Option<&'a DVector<f64>>,
    pub latest: &'a PmuSample,
    pub ts: f64,
    pub f_nom: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ControlOutput {
    /// `[dP*; dQ*]` for every DER, per-unit.
    pub u: DVector<f64>,
    pub model: Option<IdentifiedModel>,
    pub ident_time: Option<Duration>,
    pub gamma_updated: bool,
    pub warning: Option<String>,
}

/// Model, gain and cost in force at some instant, for offline analysis.
#[derive(Debug, Clone)]
pub struct ControllerSnapshot {
    pub model: IdentifiedModel,
    pub k: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub cost: CostMatrices,
}

pub trait SecondaryController {
    fn name(&self) -> &str;

    /// Whether the harness should add excitation to the issued inputs.
    fn needs_excitation(&self) -> bool {
        false
    }

    fn gamma(&self) -> Option<f64> {
        None
    }

    fn step(&mut self, ctx: &ControlContext) -> ControlOutput;

    fn snapshot(&self) -> Option<ControllerSnapshot> {
        None
    }
}

/// Source of a fresh lifted model per window.
pub trait Identifier {
    fn identify(&mut self, w: &MeasurementWindow) -> Result<(IdentifiedModel, bool)>;

    fn gamma(&self) -> Option<f64> {
        None
    }
}

impl Identifier for OkidEngine {
    fn identify(&mut self, w: &MeasurementWindow) -> Result<(IdentifiedModel, bool)> {
        let step = OkidEngine::identify(self, w)?;
        Ok((step.model, step.gamma_search.is_some()))
    }

    fn gamma(&self) -> Option<f64> {
        Some(OkidEngine::gamma(self))
    }
}

pub struct EdmdcIdentifier {
    pub v_nom: f64,
    pub ridge: f64,
}

impl Identifier for EdmdcIdentifier {
    fn identify(&mut self, w: &MeasurementWindow) -> Result<(IdentifiedModel, bool)> {
        Ok((edmdc_baseline(w, self.v_nom, self.ridge)?, false))
    }
}

/// Identify, re-solve the Riccati equation, and apply saturated feedback.
pub struct LqrStrategy {
    name: String,
    ident: Box<dyn Identifier>,
    cost: CostMatrices,
    settings: LqrSettings,
    ctrl: ControllerState,
    last_model: Option<IdentifiedModel>,
}

impl LqrStrategy {
    pub fn new(
        name: &str,
        ident: Box<dyn Identifier>,
        n_der: usize,
        settings: &LqrSettings,
    ) -> Result<Self> {
        let cost = build_cost(&settings.weights, n_der)?;
        Ok(Self {
            name: name.to_string(),
            ident,
            ctrl: ControllerState::new(2 * n_der, 4 * n_der, settings.bound),
            cost,
            settings: settings.clone(),
            last_model: None,
        })
    }

    fn redesign(&mut self, model: &IdentifiedModel) -> Result<()> {
        let warm = if self.settings.warm_start {
            self.ctrl.s.as_ref()
        } else {
            None
        };
        let sol = solve_dare(
            &model.a,
            &model.b,
            &self.cost.q,
            &self.cost.r,
            self.settings.tol,
            self.settings.max_iter,
            warm,
        )?;
        let k = compute_gain(&model.a, &model.b, &sol.s, &self.cost.r)?;
        self.ctrl.k = k;
        self.ctrl.s = Some(sol.s);
        Ok(())
    }
}

impl SecondaryController for LqrStrategy {
    fn name(&self) -> &str {
        &self.name
    }

    fn needs_excitation(&self) -> bool {
        true
    }

    fn gamma(&self) -> Option<f64> {
        self.ident.gamma()
    }

    fn step(&mut self, ctx: &ControlContext) -> ControlOutput {
        let n_u = self.ctrl.k.nrows();
        let mut out = ControlOutput {
            u: DVector::zeros(n_u),
            ..ControlOutput::default()
        };
        let (Some(w), Some(z)) = (ctx.window, ctx.z) else {
            return out;
        };
        let start = Instant::now();
        let identified = self.ident.identify(w);
        out.ident_time = Some(start.elapsed());
        match identified {
            Ok((model, gamma_updated)) => {
                out.gamma_updated = gamma_updated;
                if let Err(e) = self.redesign(&model) {
                    out.warning = Some(format!("holding previous gain: {e}"));
                }
                self.last_model = Some(model.clone());
                out.model = Some(model);
            }
            Err(e) => out.warning = Some(format!("identification skipped: {e}")),
        }
        out.u = self.ctrl.control(z);
        out
    }

    fn snapshot(&self) -> Option<ControllerSnapshot> {
        Some(ControllerSnapshot {
            model: self.last_model.clone()?,
            k: self.ctrl.k.clone(),
            s: self.ctrl.s.clone()?,
            cost: self.cost.clone(),
        })
    }
}

/// Per-DER decoupled PI on local measurements. The PI output is a setpoint
/// offset; each step sends the part of it not yet delivered, rate-limited to
/// the input bound.
pub struct PiStrategy {
    gains: PiGains,
    states: Vec<PiState>,
    /// Offset already sent, `[dP; dQ]` per DER.
    sent: DVector<f64>,
    limit: f64,
    bound: f64,
}

impl PiStrategy {
    pub fn new(gains: PiGains, n_der: usize, limit: f64, bound: f64) -> Self {
        Self {
            gains,
            states: vec![PiState::default(); n_der],
            sent: DVector::zeros(2 * n_der),
            limit,
            bound,
        }
    }
}

impl SecondaryController for PiStrategy {
    fn name(&self) -> &str {
        "pi"
    }

    fn step(&mut self, ctx: &ControlContext) -> ControlOutput {
        let n = self.states.len();
        let mut target = DVector::zeros(2 * n);
        let two_pi = 2.0 * std::f64::consts::PI;
        for i in 0..n {
            let v_err = 1.0 - ctx.latest.v[i];
            let f_err = -ctx.latest.omega[i] / two_pi;
            let (dp, dq) = pi_step(
                &self.gains,
                v_err,
                f_err,
                ctx.ts,
                &mut self.states[i],
                self.limit,
            );
            target[i] = dp;
            target[n + i] = dq;
        }
        let u = (target - &self.sent).map(|x| x.clamp(-self.bound, self.bound));
        self.sent += &u;
        ControlOutput {
            u,
            ..ControlOutput::default()
        }
    }
}

/// Primary control only.
pub struct NoControl {
    n_u: usize,
}

impl SecondaryController for NoControl {
    fn name(&self) -> &str {
        "none"
    }

    fn step(&mut self, _ctx: &ControlContext) -> ControlOutput {
        ControlOutput {
            u: DVector::zeros(self.n_u),
            ..ControlOutput::default()
        }
    }
}

pub type StrategyFactory = fn(&ScenarioSpec) -> Result<Box<dyn SecondaryController>>;

fn make_proposed(spec: &ScenarioSpec) -> Result<Box<dyn SecondaryController>> {
    let engine = OkidEngine::enhanced(spec.okid.clone())?;
    Ok(Box::new(LqrStrategy::new(
        "proposed",
        Box::new(engine),
        spec.n_der(),
        &spec.lqr,
    )?))
}

fn make_okid(spec: &ScenarioSpec) -> Result<Box<dyn SecondaryController>> {
    let engine = OkidEngine::conventional(spec.okid.clone())?;
    Ok(Box::new(LqrStrategy::new(
        "okid",
        Box::new(engine),
        spec.n_der(),
        &spec.lqr,
    )?))
}

fn make_edmdc(spec: &ScenarioSpec) -> Result<Box<dyn SecondaryController>> {
    let ident = EdmdcIdentifier {
        v_nom: spec.okid.v_nom,
        ridge: spec.okid.ridge,
    };
    Ok(Box::new(LqrStrategy::new(
        "edmdc",
        Box::new(ident),
        spec.n_der(),
        &spec.lqr,
    )?))
}

fn make_pi(spec: &ScenarioSpec) -> Result<Box<dyn SecondaryController>> {
    Ok(Box::new(PiStrategy::new(
        spec.pi,
        spec.n_der(),
        spec.pi.output_limit_va / spec.s_base,
        spec.lqr.bound,
    )))
}

fn make_none(spec: &ScenarioSpec) -> Result<Box<dyn SecondaryController>> {
    Ok(Box::new(NoControl {
        n_u: 2 * spec.n_der(),
    }))
}

/// Name-indexed table of strategy constructors.
pub struct StrategyRegistry {
    factories: BTreeMap<String, StrategyFactory>,
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: StrategyFactory) -> Option<StrategyFactory> {
        self.factories.insert(name.to_string(), factory)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, name: &str, spec: &ScenarioSpec) -> Result<Box<dyn SecondaryController>> {
        let f = self
            .factories
            .get(name)
            .ok_or_else(|| MgError::UnknownStrategy(name.to_string()))?;
        f(spec)
    }
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("proposed", make_proposed);
        r.register("okid", make_okid);
        r.register("edmdc", make_edmdc);
        r.register("pi", make_pi);
        r.register("none", make_none);
        r
    }
}
