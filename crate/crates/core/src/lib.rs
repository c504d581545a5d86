//! Markov persuasion processes: exact persuasive-LP planning, optimism–pessimism
//! online learners and regret diagnostics.
//!
//! The numerical layers are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases. The experiment harness
//! runs in `f64`.

pub mod envsim;
pub mod error;
pub mod harness;
pub mod estimation;
pub mod io;
pub mod learners;
pub mod lp;
pub mod model;
pub mod persuasion;
pub mod planner;
pub mod scalar;

pub use error::{MppError, Result};
pub use scalar::Scalar;

pub type Tabular = model::TabularMpp<f64>;
pub type Linear = model::LinearMpp<f64>;
pub type Scheme = model::SignalingScheme<f64>;
pub type Policy = model::SignalingPolicy<f64>;
pub type TabularF32 = model::TabularMpp<f32>;
pub type SchemeF32 = model::SignalingScheme<f32>;
