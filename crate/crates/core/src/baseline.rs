//! Kaplan-Meier comparators: complete-case and stratum-weighted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, ObservedRecord};
use crate::numeric::{quantile, sample_sd, Z_975};

pub const DEFAULT_BOOTSTRAP: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("no complete cases")]
    NoCompleteCases,
    #[error("stratum r_obs={0} has no complete cases")]
    EmptyStratum(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub t: f64,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Kaplan-Meier survival at `t` with the Greenwood variance.
pub fn kaplan_meier(obs: &[(f64, bool)], t: f64) -> (f64, f64) {
    let mut sorted = obs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut at_risk = sorted.len() as f64;
    let mut s = 1.0;
    let mut greenwood = 0.0;
    let mut k = 0;
    while k < sorted.len() && sorted[k].0 <= t {
        let x = sorted[k].0;
        let mut d = 0.0;
        let mut m = 0.0;
        while k < sorted.len() && sorted[k].0 == x {
            m += 1.0;
            if sorted[k].1 {
                d += 1.0;
            }
            k += 1;
        }
        if d > 0.0 {
            s *= 1.0 - d / at_risk;
            if at_risk > d {
                greenwood += d / (at_risk * (at_risk - d));
            }
        }
        at_risk -= m;
    }
    (s, s * greenwood.sqrt())
}

fn outcomes<'a>(records: impl IntoIterator<Item = &'a ObservedRecord>) -> Vec<(f64, bool)> {
    records
        .into_iter()
        .filter_map(|r| r.outcome.map(|o| (o.x, o.event)))
        .collect()
}

/// Unweighted Kaplan-Meier on all records with an observed `(x, delta)`.
pub fn km_complete_case(data: &Dataset, t: f64) -> Result<BaselineResult, BaselineError> {
    let obs = outcomes(data.records());
    if obs.is_empty() {
        return Err(BaselineError::NoCompleteCases);
    }
    let (estimate, se) = kaplan_meier(&obs, t);
    Ok(BaselineResult {
        t,
        estimate,
        se,
        ci_lo: estimate - Z_975 * se,
        ci_hi: estimate + Z_975 * se,
    })
}

fn stratified_point(records: &[&ObservedRecord], t: f64) -> Option<f64> {
    let n = records.len() as f64;
    let mut value = 0.0;
    for r in [false, true] {
        let members: Vec<&ObservedRecord> = records.iter().copied().filter(|x| x.r_obs == r).collect();
        if members.is_empty() {
            continue;
        }
        let obs = outcomes(members.iter().copied());
        if obs.is_empty() {
            return None;
        }
        value += members.len() as f64 / n * kaplan_meier(&obs, t).0;
    }
    Some(value)
}

/// `P(R_obs = 1) KM_1(t) + P(R_obs = 0) KM_0^S(t)` with a percentile
/// bootstrap interval over whole-dataset resamples. The reported `se` is the
/// bootstrap standard deviation.
pub fn km_stratified(data: &Dataset, t: f64, n_boot: usize, seed: u64) -> Result<BaselineResult, BaselineError> {
    for r in 0..2 {
        if !data.stratum(r).is_empty() && !data.stratum(r).iter().any(|x| x.outcome.is_some()) {
            return Err(BaselineError::EmptyStratum(r));
        }
    }
    let all: Vec<&ObservedRecord> = data.records().iter().collect();
    let estimate = stratified_point(&all, t).ok_or(BaselineError::NoCompleteCases)?;
    if n_boot == 0 {
        return Ok(BaselineResult {
            t,
            estimate,
            se: 0.0,
            ci_lo: estimate,
            ci_hi: estimate,
        });
    }
    let n = all.len();
    let mut reps: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .filter_map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let sample: Vec<&ObservedRecord> = (0..n).map(|_| all[rng.random_range(0..n)]).collect();
            // a resample with no double-samples carries no stratum-0 estimate
            stratified_point(&sample, t)
        })
        .collect();
    reps.sort_by(f64::total_cmp);
    let (ci_lo, ci_hi) = if reps.is_empty() {
        (estimate, estimate)
    } else {
        (quantile(&reps, 0.025), quantile(&reps, 0.975))
    };
    Ok(BaselineResult {
        t,
        estimate,
        se: sample_sd(&reps),
        ci_lo,
        ci_hi,
    })
}
