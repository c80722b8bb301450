//! Simulation, estimation and fitting for continuous-variable entanglement
//! made by mixing one squeezed beam with vacuum on a balanced beam splitter.
//!
//! * [`gaussian`]: covariance-matrix states and the optical maps acting on
//!   them (beam splitter, rotation, loss, classical noise).
//! * [`source`]: the below-threshold squeezer model and the two-mode state
//!   it produces.
//! * [`criteria`]: EPR (Reid), Duan and entanglement-of-formation figures of
//!   merit.
//! * [`sampling`]: seeded homodyne records and the matching estimators.
//! * [`fitting`]: squeezer-parameter recovery and excess-noise inversion.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;
pub mod error;
pub mod fitting;
pub mod gaussian;
pub mod sampling;
pub mod source;
pub mod units;

pub use criteria::{
    conditional_variance, duan_inseparability, eof_symmetric, epr_product, epr_pure_vclass,
    vclass_loss_margin, Direction, DuanResult, EprResult,
};
pub use error::{Error, Result};
pub use fitting::{fit_excess_noise, fit_squeezer_model, FitResult, FixedCavity, VarianceDataset};
pub use gaussian::{GaussianState, Quadrature, Side, TwoModeStats};
pub use sampling::{EstimateReport, SampleBatch};
pub use source::{build_vclass_state, ArmLoss, ExcessNoise, NoiseLocation, SourceParams};

/// Crate version embedded in every exported artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
