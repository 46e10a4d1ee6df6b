//! Online identification of the lifted microgrid model.

pub mod edmdc;
pub mod era;
pub mod lifting;
pub mod markov;
pub mod model;
pub mod okid;

pub use edmdc::{edmdc_baseline, edmdc_fit};
pub use era::{
    build_hankels, estimate_c, optimize_gamma, realize_ab, truncated_svd, update_gamma,
    GammaSearch, HankelLayout, TruncatedSvd,
};
pub use lifting::{lift_observables, LiftedData, MeasurementWindow};
pub use markov::{estimate_markov, input_toeplitz};
pub use model::{predict_one_step, prediction_error, IdentifiedModel};
pub use okid::{conventional_okid, OkidConfig, OkidEngine, OkidStep};
