//! Replicate harness: bias, coverage and spread of each estimator.

use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gm::{generate, true_tau, GenerativeModel, DEFAULT_T};
use crate::baseline::{km_complete_case, km_stratified, DEFAULT_BOOTSTRAP};
use crate::data::Dataset;
use crate::engine::{DeductiveEstimator, EstimatorConfig, DEFAULT_EPSILON};
use crate::models::{FitOptions, SelectionFormula, Variant};
use crate::numeric::{mean, sample_sd};
use crate::support::build_support;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    DeCox,
    DeLn,
    DeCoxWrongS,
    DeLnWrongS,
    DeCoxAlphaZero,
    DeLnAlphaZero,
    KmS,
    KmC,
}

impl EstimatorKind {
    pub const ALL: [Self; 8] = [
        Self::DeCox,
        Self::DeLn,
        Self::DeCoxWrongS,
        Self::DeLnWrongS,
        Self::DeCoxAlphaZero,
        Self::DeLnAlphaZero,
        Self::KmS,
        Self::KmC,
    ];

    /// Display label.
    pub fn label(self) -> &'static str {
        match self {
            Self::DeCox => "DE.Cox",
            Self::DeLn => "DE.LN",
            Self::DeCoxWrongS => "DE.Cox.WrongS",
            Self::DeLnWrongS => "DE.LN.WrongS",
            Self::DeCoxAlphaZero => "DE.Cox(alpha=0)",
            Self::DeLnAlphaZero => "DE.LN(alpha=0)",
            Self::KmS => "KM.S",
            Self::KmC => "KM.C",
        }
    }

    /// Command-line name.
    pub fn key(self) -> &'static str {
        match self {
            Self::DeCox => "de-cox",
            Self::DeLn => "de-ln",
            Self::DeCoxWrongS => "de-cox-wrongs",
            Self::DeLnWrongS => "de-ln-wrongs",
            Self::DeCoxAlphaZero => "de-cox-a0",
            Self::DeLnAlphaZero => "de-ln-a0",
            Self::KmS => "km-s",
            Self::KmC => "km-c",
        }
    }

    /// Estimator config for the deductive kinds.
    pub fn deductive_config(self, epsilon: f64) -> Option<EstimatorConfig> {
        let (variant, selection, alpha_zero) = match self {
            Self::DeCox => (Variant::Cox, SelectionFormula::Full, false),
            Self::DeLn => (Variant::LogNormal, SelectionFormula::Full, false),
            Self::DeCoxWrongS => (Variant::Cox, SelectionFormula::InterceptOnly, false),
            Self::DeLnWrongS => (Variant::LogNormal, SelectionFormula::InterceptOnly, false),
            Self::DeCoxAlphaZero => (Variant::Cox, SelectionFormula::Full, true),
            Self::DeLnAlphaZero => (Variant::LogNormal, SelectionFormula::Full, true),
            Self::KmS | Self::KmC => return None,
        };
        Some(EstimatorConfig {
            fit: FitOptions {
                variant,
                selection,
                w_in_observed: false,
            },
            epsilon,
            alpha_zero,
        })
    }
}

impl FromStr for EstimatorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let k = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|e| e.key() == k || e.label().to_ascii_lowercase() == k)
            .ok_or_else(|| {
                let keys: Vec<&str> = Self::ALL.iter().map(|e| e.key()).collect();
                format!("unknown estimator '{s}' (expected one of {})", keys.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub t: f64,
    pub epsilon: f64,
    pub n_boot: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            t: DEFAULT_T,
            epsilon: DEFAULT_EPSILON,
            n_boot: DEFAULT_BOOTSTRAP,
        }
    }
}

/// A point estimate with its 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub estimator: String,
    /// Percentage points.
    pub bias: f64,
    /// Percent.
    pub cp: f64,
    /// Percentage points.
    pub sd: f64,
    pub n_replicates: usize,
    pub n_failures: usize,
}

fn mix(seed: u64, a: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs every requested estimator on one dataset; `None` marks a failure.
pub fn estimate_all(data: &Dataset, estimators: &[EstimatorKind], cfg: &HarnessConfig, boot_seed: u64) -> Vec<Option<IntervalEstimate>> {
    let support = build_support(data);
    estimators
        .iter()
        .map(|&kind| {
            let out = match kind {
                EstimatorKind::KmC => km_complete_case(data, cfg.t).map_err(|e| e.to_string()).map(|r| IntervalEstimate {
                    estimate: r.estimate,
                    ci_lo: r.ci_lo,
                    ci_hi: r.ci_hi,
                }),
                EstimatorKind::KmS => km_stratified(data, cfg.t, cfg.n_boot, boot_seed)
                    .map_err(|e| e.to_string())
                    .map(|r| IntervalEstimate {
                        estimate: r.estimate,
                        ci_lo: r.ci_lo,
                        ci_hi: r.ci_hi,
                    }),
                _ => {
                    let config = kind.deductive_config(cfg.epsilon).expect("deductive kind");
                    DeductiveEstimator::new(data, &support, config)
                        .and_then(|est| est.estimate(cfg.t))
                        .map_err(|e| e.to_string())
                        .map(|r| IntervalEstimate {
                            estimate: r.tau_hat,
                            ci_lo: r.ci_lo,
                            ci_hi: r.ci_hi,
                        })
                }
            };
            match out {
                Ok(v) => Some(v),
                Err(e) => {
                    debug!("{} failed: {e}", kind.label());
                    None
                }
            }
        })
        .collect()
}

pub fn summarize(kind: EstimatorKind, results: &[Option<IntervalEstimate>], truth: f64) -> ReplicateSummary {
    let ok: Vec<&IntervalEstimate> = results.iter().flatten().collect();
    let est: Vec<f64> = ok.iter().map(|r| r.estimate).collect();
    let covered = ok.iter().filter(|r| r.ci_lo <= truth && truth <= r.ci_hi).count();
    let (bias, sd, cp) = if ok.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        (
            100.0 * (mean(&est) - truth),
            100.0 * sample_sd(&est),
            100.0 * covered as f64 / ok.len() as f64,
        )
    };
    ReplicateSummary {
        estimator: kind.label().to_string(),
        bias,
        cp,
        sd,
        n_replicates: results.len(),
        n_failures: results.len() - ok.len(),
    }
}

/// Per-replicate estimates, `[replicate][estimator]`.
pub fn replicate_estimates(
    gm: GenerativeModel,
    n: usize,
    estimators: &[EstimatorKind],
    reps: usize,
    seed: u64,
    cfg: &HarnessConfig,
) -> Vec<Vec<Option<IntervalEstimate>>> {
    let done = AtomicUsize::new(0);
    let step = (reps / 10).max(1);
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let stream = ((n as u64) << 32) | rep as u64;
            let data = generate(gm, n, seed, stream);
            let out = estimate_all(&data, estimators, cfg, mix(seed, stream));
            let k = done.fetch_add(1, Ordering::Relaxed) + 1;
            if k.is_multiple_of(step) || k == reps {
                info!("{gm} n={n}: {k}/{reps} replicates");
            }
            out
        })
        .collect()
}

pub fn run_replicates(
    gm: GenerativeModel,
    n: usize,
    estimators: &[EstimatorKind],
    reps: usize,
    seed: u64,
    cfg: &HarnessConfig,
) -> Vec<ReplicateSummary> {
    let all = replicate_estimates(gm, n, estimators, reps, seed, cfg);
    let truth = true_tau(gm, cfg.t);
    estimators
        .iter()
        .enumerate()
        .map(|(k, &kind)| {
            let column: Vec<Option<IntervalEstimate>> = all.iter().map(|row| row[k]).collect();
            summarize(kind, &column, truth)
        })
        .collect()
}

/// A summary row tagged with its design point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow {
    pub gm: u8,
    pub n: usize,
    pub estimator: String,
    pub bias: f64,
    pub cp: f64,
    pub sd: f64,
    pub n_fail: usize,
}

impl SimulationRow {
    pub fn new(gm: GenerativeModel, n: usize, s: &ReplicateSummary) -> Self {
        Self {
            gm: gm.number(),
            n,
            estimator: s.estimator.clone(),
            bias: s.bias,
            cp: s.cp,
            sd: s.sd,
            n_fail: s.n_failures,
        }
    }
}

pub fn write_rows<W: Write>(rows: &[SimulationRow], writer: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["gm", "n", "estimator", "bias", "cp", "sd", "n_fail"])?;
    for r in rows {
        wtr.write_record([
            r.gm.to_string(),
            r.n.to_string(),
            r.estimator.clone(),
            format!("{:.2}", r.bias),
            format!("{:.1}", r.cp),
            format!("{:.2}", r.sd),
            r.n_fail.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
