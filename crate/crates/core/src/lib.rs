//! Dose finding for two-drug combination trials under the BOIN and Keyboard
//! interval designs, with data-dependent early completion based on dose
//! retainment probabilities.
//!
//! The numeric modules are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which is what the command line,
//! service and file formats use.

// `!(x > 0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod early;
pub mod engine;
pub mod error;
pub mod grid;
pub mod isotonic;
pub mod scalar;
pub mod scenario;
pub mod simulator;
pub mod special;

pub use design::{Decision, DesignKind, RetainmentSet};
pub use early::{BoundaryStatus, CompletionVariant, GridStep};
pub use engine::{CohortOutcome, TrialStatus};
pub use error::{Error, Result};
pub use grid::{Dose, DoseGrid, Matrix};
pub use isotonic::Direction;
pub use scalar::Real;

pub type DesignParams = design::DesignParams<f64>;
pub type Boundaries = design::Boundaries<f64>;
pub type DecisionRules = design::DecisionRules<f64>;
pub type CompletionConfig = early::CompletionConfig<f64>;
pub type CompletionTable = early::CompletionTable<f64>;
pub type RateMatrix = isotonic::RateMatrix<f64>;
pub type TrialConfig = engine::TrialConfig<f64>;
pub type TrialState = engine::TrialState<f64>;
pub type Engine = engine::Engine<f64>;
pub type Transition = engine::Transition<f64>;
pub type CohortReport = engine::CohortReport<f64>;
pub type Scenario = scenario::Scenario<f64>;
pub type DesignSpec = simulator::DesignSpec<f64>;
pub type SimConfig = simulator::SimConfig<f64>;
