//! InfoRank: unbiased learning-to-rank where a conditional mutual
//! information penalty keeps relevance estimates independent of the
//! observation factor.

pub mod click;
pub mod data;
pub mod error;
pub mod eval;
pub mod info;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision model, the default everywhere.
pub type Model = model::ModelParams<f64>;
pub type ModelF32 = model::ModelParams<f32>;
pub type Gradients = model::GradientSet<f64>;
pub type Heads = info::PointwiseHeads<f64>;
pub type HeadsF32 = info::PointwiseHeads<f32>;
pub type Outcome = training::TrainOutcome<f64>;
