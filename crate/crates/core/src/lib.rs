//! Reduced-order inverter microgrid simulation with online Koopman identification
//! (enhanced OKID/ERA), LQR secondary control, stability diagnostics and a
//! scenario harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod der;
pub mod error;
pub mod harness;
pub mod ident;
pub mod linalg;
pub mod lqr;
pub mod network;
pub mod sim;
pub mod stability;
pub mod uncertainty;

pub use error::{MgError, Result};
