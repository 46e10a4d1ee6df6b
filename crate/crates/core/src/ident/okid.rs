//! Windowed OKID pipeline with adaptive realization exponent.

use nalgebra::DMatrix;

use super::era::{
    build_hankels, era_output_matrix, estimate_c, optimize_gamma, realize_ab, truncated_svd,
    update_gamma, GammaSearch, HankelLayout,
};
use super::lifting::{LiftedData, MeasurementWindow};
use super::markov::estimate_markov;
use super::model::IdentifiedModel;
use crate::error::{MgError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OkidConfig {
    /// Window length in samples.
    pub n: usize,
    pub eta: f64,
    /// Secondary steps between gamma updates.
    pub t_opt_steps: usize,
    pub gamma0: f64,
    /// Truncation rank; `None` means the lifted dimension.
    pub rank_r: Option<usize>,
    pub ridge: f64,
    pub layout: HankelLayout,
    pub v_nom: f64,
}

impl OkidConfig {
    pub fn with_window(n: usize) -> Self {
        Self {
            n,
            eta: 1.0 / n as f64,
            t_opt_steps: 20,
            gamma0: 0.5,
            rank_r: None,
            ridge: 1e-8,
            layout: HankelLayout::default(),
            v_nom: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(MgError::InvalidArgument(
                "window length must be positive".into(),
            ));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(MgError::InvalidArgument(format!(
                "eta {} outside (0, 1]",
                self.eta
            )));
        }
        if self.t_opt_steps < 2 {
            return Err(MgError::InvalidArgument(
                "gamma update period must exceed one control period".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma0) {
            return Err(MgError::InvalidArgument("gamma0 outside [0, 1]".into()));
        }
        if self.rank_r == Some(0) {
            return Err(MgError::InvalidArgument("rank must be at least 1".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(MgError::InvalidArgument(
                "ridge must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Result of one identification step.
#[derive(Debug, Clone)]
pub struct OkidStep {
    pub model: IdentifiedModel,
    pub gamma_search: Option<GammaSearch>,
}

/// Stateful identifier: keeps the smoothed `(A, B)`, the current gamma and the
/// step counter that gates gamma updates.
#[derive(Debug, Clone)]
pub struct OkidEngine {
    cfg: OkidConfig,
    adapt_gamma: bool,
    gamma: f64,
    prev: Option<(DMatrix<f64>, DMatrix<f64>)>,
    k: usize,
}

impl OkidEngine {
    /// Enhanced variant: gamma re-optimised every `t_opt_steps` steps.
    pub fn enhanced(cfg: OkidConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            gamma: cfg.gamma0,
            cfg,
            adapt_gamma: true,
            prev: None,
            k: 0,
        })
    }

    /// Conventional variant: gamma pinned at one half.
    pub fn conventional(cfg: OkidConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            gamma: 0.5,
            cfg,
            adapt_gamma: false,
            prev: None,
            k: 0,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn config(&self) -> &OkidConfig {
        &self.cfg
    }

    pub fn steps(&self) -> usize {
        self.k
    }

    /// Identify from one window. The step counter advances even when the
    /// window cannot be identified, so gamma gating stays tied to time.
    pub fn identify(&mut self, w: &MeasurementWindow) -> Result<OkidStep> {
        if w.len() != self.cfg.n {
            self.k += 1;
            return Err(MgError::Dimension(format!(
                "window has {} samples, expected {}",
                w.len(),
                self.cfg.n
            )));
        }
        let data = LiftedData::from_window(w, self.cfg.v_nom);
        self.identify_data(&data.y, &data.z, &w.u)
    }

    /// Identify from raw outputs `y`, states `z` and inputs `u` sharing one
    /// sample axis; column `j` of `u` drives the transition into sample `j`.
    pub fn identify_data(
        &mut self,
        y: &DMatrix<f64>,
        z: &DMatrix<f64>,
        u: &DMatrix<f64>,
    ) -> Result<OkidStep> {
        let k = self.k;
        self.k += 1;
        let cfg = &self.cfg;
        if y.ncols() != z.ncols() || y.ncols() != u.ncols() {
            return Err(MgError::Dimension(format!(
                "sample counts differ: y {}, z {}, u {}",
                y.ncols(),
                z.ncols(),
                u.ncols()
            )));
        }
        let n_s = z.nrows();
        let p = y.nrows();
        let m = u.nrows();
        let h = estimate_markov(y, u, cfg.layout.markov_blocks(y.ncols()), cfg.ridge)?;
        let (hh, hp) = build_hankels(&h, cfg.layout)?;
        let rank = cfg.rank_r.unwrap_or(n_s).min(n_s);
        let svd = truncated_svd(&hh, rank);
        let c = estimate_c(y, z, cfg.ridge);
        let mut gamma_search = None;
        if self.adapt_gamma && k > 0 && k.is_multiple_of(cfg.t_opt_steps) {
            let search = optimize_gamma(&svd, &c, m, self.gamma, cfg.ridge)?;
            self.gamma = update_gamma(self.gamma, search.gamma, cfg.eta, k, cfg.t_opt_steps);
            gamma_search = Some(search);
        }
        let prev = self.prev.as_ref().map(|(a, b)| (a, b));
        let (a, b) = realize_ab(&svd, &hp, self.gamma, cfg.eta, prev, n_s, m)?;
        let c_markov = era_output_matrix(&svd, self.gamma, p, n_s);
        self.prev = Some((a.clone(), b.clone()));
        Ok(OkidStep {
            model: IdentifiedModel {
                a,
                b,
                c,
                c_markov,
                gamma_opt: self.gamma,
                rank_r: svd.rank(),
            },
            gamma_search,
        })
    }
}

/// Single-window conventional OKID (gamma = 1/2, no history).
pub fn conventional_okid(w: &MeasurementWindow, cfg: &OkidConfig) -> Result<IdentifiedModel> {
    Ok(OkidEngine::conventional(cfg.clone())?.identify(w)?.model)
}
