//! Deterministic parameter-server simulator with ordered momentum (OrMo) and
//! the usual asynchronous baselines.
//!
//! The core is generic over the scalar type; `f64` aliases are exported at the
//! crate root for the common case.

pub mod engine;
pub mod harness;
pub mod optim;
pub mod problems;
pub mod rng;
mod scalar;
pub mod vector;
pub mod verify;

pub use scalar::Scalar;

pub type Optimizer64 = optim::Optimizer<f64>;
pub type HyperParams64 = optim::HyperParams<f64>;
pub type Problem64 = problems::Problem<f64>;
pub type RunOutput64 = engine::RunOutput<f64>;
pub type LemmaVerifier64 = verify::LemmaVerifier<f64>;
pub type Optimizer32 = optim::Optimizer<f32>;
pub type Problem32 = problems::Problem<f32>;
