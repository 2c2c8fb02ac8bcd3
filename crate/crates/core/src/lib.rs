//! Spatial Cramér–von Mises test of bivariate independence for stationary
//! random fields.
//!
//! The crate covers the full pipeline: Matérn field simulation by circulant
//! embedding, copula alternatives, the inner-form CvM statistic built from
//! marginal kernel matrices, asymptotic critical values from the weighted
//! chi-squared limit, permutation inference, three competing tests, and a
//! reproducible experiment harness with CSV / LaTeX reporting.

pub mod cli;
pub mod competing;
pub mod copula;
pub mod critical;
pub mod error;
pub mod exec;
pub mod harness;
pub mod matern;
pub mod pair;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod special;
pub mod statistic;
pub mod weights;

pub use error::{CvmError, Result};
pub use exec::Execution;
pub use matern::{FieldGrid, MaternParams, MixingRegime};
pub use pair::UnitPair;
pub use statistic::{compute_cvm_statistic, cvm_permutation_pvalue, CvMResult};
pub use weights::{CorrectionPair, EigenvalueSum, KernelMatrix, WeightRegistry, WeightSpec};
