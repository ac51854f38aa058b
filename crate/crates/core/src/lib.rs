//! Twin-field quantum digital signatures: finite-size security bounds,
//! parameter optimization and Monte Carlo validation.
//!
//! The analytic core is generic over the scalar type; the aliases below fix
//! it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod estimation;
pub mod mathcore;
pub mod optimizer;
pub mod scalar;
pub mod security;
pub mod simulator;

pub use error::{Error, Result};
pub use estimation::{Diagnostics, EstimationOptions};
pub use mathcore::{
    binary_entropy, fluctuate, hoeffding_delta, inverse_binary_entropy, serfling_lambda, serfling_upsilon, Direction,
};
pub use scalar::Real;

pub type SystemParams = channel::SystemParams<f64>;
pub type ProtocolParams = channel::ProtocolParams<f64>;
pub type SecurityBudget = mathcore::SecurityBudget<f64>;
pub type ChannelObservables = channel::ChannelObservables<f64>;
pub type SignatureReport = security::SignatureReport<f64>;
pub type Analysis = security::Analysis<f64>;

pub type SystemParamsF32 = channel::SystemParams<f32>;
pub type ProtocolParamsF32 = channel::ProtocolParams<f32>;
pub type SecurityBudgetF32 = mathcore::SecurityBudget<f32>;
