//! Deductive estimation of a survival probability `P(T > t)` under
//! non-ignorable dropout with double-sampling.
//!
//! The pipeline: parse a [`data::Dataset`], build its
//! [`support::DiscretizedSupport`], fit a [`models::WorkingModelFit`], and
//! solve the Gateaux estimating equation in [`engine`].

pub mod baseline;
pub mod data;
pub mod engine;
pub mod estimand;
pub mod models;
pub mod numeric;
pub mod root;
pub mod sim;
pub mod support;

pub use data::{canonical_sort, parse_csv, ColumnSpec, DataError, Dataset, ObservedRecord, Outcome};
pub use engine::{estimate, estimate_many, DeductiveEstimator, EstimateError, EstimationResult, EstimatorConfig};
pub use estimand::{tau_of_distribution, DiscreteDistribution};
pub use models::{FitOptions, SelectionFormula, Variant, WorkingModelFit};
pub use support::{build_support, DiscretizedSupport};
