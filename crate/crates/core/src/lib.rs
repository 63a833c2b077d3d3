//! Noisy low-rank matrix completion by iterative singular value
//! thresholding under general Bernoulli sampling, with a Monte Carlo harness
//! for checking error rates and stochastic-term bounds.

pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod probe;
pub mod rng;
pub mod sampling;
pub mod svt;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, IndexSet, SvdFactors};
pub use sampling::{MarginalSummary, NoiseModel, ObservationSet, SamplingModel};
pub use svt::{CompletionConfig, CompletionResult, LambdaChoice, LambdaRule, StopRule};
