//! DER primary-control primitives: unified droop dynamics, power filter, setpoint updates.

use serde::{Deserialize, Serialize};

use crate::error::{MgError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerMode {
    GridForming,
    GridFollowing,
    NonControllable,
}

/// One DER with all quantities already in per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct DerUnit {
    pub mode: DerMode,
    /// rad/s per pu active power
    pub sigma_omega: f64,
    /// pu voltage per pu reactive power
    pub sigma_v: f64,
    pub tau_v: f64,
    pub tf: f64,
    pub p_ref: f64,
    pub q_ref: f64,
    pub p_filt: f64,
    pub q_filt: f64,
}

impl DerUnit {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !(ok(self.sigma_omega) && ok(self.sigma_v) && ok(self.tau_v) && ok(self.tf)) {
            return Err(MgError::InvalidNetwork(
                "DER gains and time constants must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn controllable(&self) -> bool {
        self.mode != DerMode::NonControllable
    }
}

/// Exact zero-order-hold step of the first-order power filter.
pub fn filter_step(x: f64, u: f64, tf: f64, dt: f64) -> f64 {
    u + (x - u) * (-dt / tf).exp()
}

/// Angle and voltage rates of the unified droop / inverse-droop law.
pub fn droop_derivatives(der: &DerUnit, p: f64, q: f64, u: (f64, f64)) -> (f64, f64) {
    let kv = der.sigma_v / der.tau_v;
    let dtheta = -der.sigma_omega * (p - der.p_ref) + der.sigma_omega * u.0;
    let dv = -kv * (q - der.q_ref) + kv * u.1;
    (dtheta, dv)
}

/// Accumulate a secondary-control increment into the power references.
pub fn apply_setpoint_update(der: &mut DerUnit, index: usize, dp: f64, dq: f64) -> Result<()> {
    if !der.controllable() {
        return Err(MgError::NotControllable(index));
    }
    der.p_ref += dp;
    der.q_ref += dq;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> DerUnit {
        DerUnit {
            mode: DerMode::GridForming,
            sigma_omega: 2.14e-3 * 30e3,
            sigma_v: 1e-3 * 30e3 / 480.0,
            tau_v: 0.05,
            tf: 0.02857,
            p_ref: 0.5,
            q_ref: 0.1,
            p_filt: 0.0,
            q_filt: 0.0,
        }
    }

    #[test]
    fn filter_step_response() {
        assert!((filter_step(0.0, 1.0, 0.3, 0.3) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((filter_step(0.0, 1.0, 0.3, 0.3) - 0.63212).abs() < 1e-5);
        assert_eq!(filter_step(0.7, 0.7, 0.1, 0.01), 0.7);
        let x = filter_step(0.0, 1.0, 0.02857, 1e-4);
        assert!((x - (1.0 - (-1e-4f64 / 0.02857).exp())).abs() < 1e-18);
        assert!((x - 3.4941e-3).abs() < 1e-7);
    }

    #[test]
    fn droop_equilibrium_and_linearity() {
        let d = unit();
        assert_eq!(
            droop_derivatives(&d, d.p_ref, d.q_ref, (0.0, 0.0)),
            (0.0, 0.0)
        );
        let (w, _) = droop_derivatives(&d, d.p_ref, d.q_ref, (0.02, 0.0));
        assert_eq!(w, d.sigma_omega * 0.02);
    }

    #[test]
    fn droop_frequency_rate_matches_si_arithmetic() {
        let d = unit();
        let dp_pu = 100.0 / 30e3;
        let (w, _) = droop_derivatives(&d, d.p_ref + dp_pu, d.q_ref, (0.0, 0.0));
        assert!((w + 0.214).abs() < 1e-12);
    }

    #[test]
    fn setpoint_updates_accumulate() {
        let mut d = unit();
        apply_setpoint_update(&mut d, 0, 0.0, 0.0).unwrap();
        assert_eq!((d.p_ref, d.q_ref), (0.5, 0.1));
        apply_setpoint_update(&mut d, 0, 0.1, 0.0).unwrap();
        assert!((d.p_ref - 0.6).abs() < 1e-15);
    }

    #[test]
    fn non_controllable_rejects_updates() {
        let mut d = unit();
        d.mode = DerMode::NonControllable;
        assert!(matches!(
            apply_setpoint_update(&mut d, 3, 0.1, 0.0),
            Err(MgError::NotControllable(3))
        ));
    }
}
