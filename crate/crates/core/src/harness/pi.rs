//! Decoupled PI secondary control.

use super::config::PiGains;

/// Integrator states for one DER.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PiState {
    pub int_v: f64,
    pub int_f: f64,
}

fn channel(kp: f64, ki: f64, e: f64, dt: f64, integ: &mut f64, bound: f64) -> f64 {
    let candidate = *integ + e * dt;
    let raw = kp * e + ki * candidate;
    let out = raw.clamp(-bound, bound);
    // conditional integration: freeze while saturated in the direction of the error
    let saturated = raw != out && raw.signum() == e.signum();
    if !saturated {
        *integ = candidate;
    }
    out
}

/// PI outputs `(dP*, dQ*)` from the frequency error (Hz) and voltage error (pu),
/// each clamped to `[-bound, bound]`.
pub fn pi_step(
    g: &PiGains,
    v_err: f64,
    f_err: f64,
    dt: f64,
    st: &mut PiState,
    bound: f64,
) -> (f64, f64) {
    let dp = channel(g.kp_f, g.ki_f, f_err, dt, &mut st.int_f, bound);
    let dq = channel(g.kp_v, g.ki_v, v_err, dt, &mut st.int_v, bound);
    (dp, dq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gains(kp: f64, ki: f64) -> PiGains {
        PiGains {
            kp_v: kp,
            ki_v: ki,
            kp_f: kp,
            ki_f: ki,
            output_limit_va: 1.0,
        }
    }

    #[test]
    fn zero_error_zero_output() {
        let mut st = PiState::default();
        assert_eq!(
            pi_step(&gains(1.0, 1.0), 0.0, 0.0, 0.03, &mut st, 1.0),
            (0.0, 0.0)
        );
    }

    #[test]
    fn integral_ramps() {
        let mut st = PiState::default();
        let g = gains(0.0, 2.0);
        let mut out = (0.0, 0.0);
        for _ in 0..10 {
            out = pi_step(&g, 0.01, 0.01, 0.03, &mut st, 10.0);
        }
        assert!((out.1 - 2.0 * 0.01 * 0.3).abs() < 1e-12);
        assert!((out.0 - 2.0 * 0.01 * 0.3).abs() < 1e-12);
    }

    #[test]
    fn anti_windup_holds_integrator() {
        let mut st = PiState::default();
        let g = gains(0.0, 100.0);
        for _ in 0..1000 {
            let (_, dq) = pi_step(&g, 1.0, 0.0, 0.03, &mut st, 0.5);
            assert!(dq <= 0.5);
        }
        assert!(st.int_v * 100.0 <= 0.5 + 100.0 * 0.03);
        let (_, dq) = pi_step(&g, -1.0, 0.0, 0.03, &mut st, 0.5);
        assert!(dq < 0.5);
    }
}
