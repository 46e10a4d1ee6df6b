use thiserror::Error;

/// Errors raised by the simulation, identification and control layers.
#[derive(Debug, Error)]
pub enum MgError {
    #[error("network is disconnected: bus {0} unreachable from bus 0")]
    Disconnected(usize),
    #[error("singular Kron reduction block")]
    SingularReduction,
    #[error("invalid network definition: {0}")]
    InvalidNetwork(String),
    #[error("setpoint update rejected: DER {0} is not controllable")]
    NotControllable(usize),
    #[error("simulation diverged at t = {t:.4} s: {reason}")]
    Divergence { t: f64, reason: String },
    #[error("unexcited system: input matrix is identically zero")]
    Unexcited,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-invertible singular value power (gamma = {0})")]
    SingularPower(f64),
    #[error(
        "Riccati iteration did not converge after {iters} iterations (residual {residual:.3e})"
    )]
    DareNoConvergence { iters: usize, residual: f64 },
    #[error("Riccati iteration hit an indefinite R + B'SB")]
    DareIndefinite,
    #[error("singular matrix in gain computation")]
    SingularGain,
    #[error("equilibrium solve failed: {0}")]
    Equilibrium(String),
    #[error("configuration error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl MgError {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        MgError::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, MgError>;
