//! Generative models, the replicate harness, descriptive statistics, the
//! recency restriction, and the synthetic cohort.

pub mod describe;
pub mod gamma;
pub mod gm;
pub mod harness;
pub mod pepfar;

pub use describe::{descriptive_stats, DescriptiveStats};
pub use gamma::{apply_gamma_restriction, GammaError};
pub use gm::{generate, true_tau, true_tau_mc, GenerativeModel};
pub use harness::{run_replicates, EstimatorKind, HarnessConfig, ReplicateSummary, SimulationRow};
