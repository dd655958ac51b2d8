//! Joint estimation of sparse vector-autoregressive models across many
//! subjects.
//!
//! Each subject's transition matrix is decomposed into a common part shared
//! by everybody and a unique part, `Φᵏ = Γ⁰ + Γᵏ`, and both parts are
//! estimated under (optionally adaptive) ℓ₁ penalties with an accelerated
//! proximal-gradient solver. Penalties are chosen by blocked or
//! rolling-window cross-validation on one-step forecast error.
//!
//! All numerical code is generic over the scalar type through [`Real`];
//! `f64` aliases are provided at the crate root for the common case.

pub mod cv;
pub mod error;
pub mod estimate;
pub mod metrics;
pub mod scalar;
pub mod simulate;
pub mod solver;
pub mod var;
pub mod weights;

pub use error::{Error, Result};
pub use scalar::Real;

pub use cv::{CvScheme, CvTable, FoldPlan};
pub use estimate::{Estimate, EstimationConfig, Method};
pub use metrics::{ConfusionCounts, MetricsReport};
pub use simulate::{Condition, GeneratedDataset, HeterogeneitySpec};
pub use solver::{EffectsDecomposition, LambdaGrid, PenaltySpec, SolverConfig, StepRule};
pub use var::{MultiSubjectSeries, RegressionForm, SubjectSeries, VarModel};
pub use weights::{AdaptiveWeights, InitialEstimates, InitialMethod};

/// Dense matrix used for data, coefficients and weights.
pub type Matrix<T> = nalgebra::DMatrix<T>;

pub type VarModel64 = VarModel<f64>;
pub type VarModel32 = VarModel<f32>;
pub type SubjectSeries64 = SubjectSeries<f64>;
pub type MultiSubjectSeries64 = MultiSubjectSeries<f64>;
pub type RegressionForm64 = RegressionForm<f64>;
pub type EffectsDecomposition64 = EffectsDecomposition<f64>;
pub type AdaptiveWeights64 = AdaptiveWeights<f64>;
pub type GeneratedDataset64 = GeneratedDataset<f64>;
pub type Estimate64 = Estimate<f64>;
pub type Matrix64 = Matrix<f64>;
