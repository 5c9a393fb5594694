//! Synthetic data shaped like a double-sampled HIV care cohort: age and CD4
//! as baseline covariates, the dropout time as the dropout-only covariate,
//! times in years on a daily grid.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::gm::replicate_rng;
use crate::data::{canonical_sort, ColumnSpec, Dataset, ObservedRecord, Outcome};
use crate::numeric::expit;

pub const COHORT_N: usize = 1773;
pub const COHORT_DROPOUTS: usize = 673;
pub const COHORT_DOUBLE_SAMPLED: usize = 91;
pub const COHORT_SEED: u64 = 20_070_401;

const DAYS_PER_YEAR: f64 = 365.25;

pub fn cohort_columns() -> ColumnSpec {
    ColumnSpec::with_covariates(&["age", "cd4"], &["dropout_time"])
}

/// Picks exactly `k` indices with probability increasing in `weights`
/// (weighted sampling without replacement by exponential keys).
fn weighted_pick<R: Rng>(weights: &[f64], k: usize, rng: &mut R) -> Vec<bool> {
    let mut keys: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let e: f64 = Exp1.sample(rng);
            (e / w, i)
        })
        .collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut chosen = vec![false; weights.len()];
    for &(_, i) in keys.iter().take(k) {
        chosen[i] = true;
    }
    chosen
}

fn to_years(days: u32) -> f64 {
    (f64::from(days) / DAYS_PER_YEAR * 1e4).round() / 1e4
}

/// Generates a cohort with exactly `n` subjects, `m` dropouts and `m1`
/// double-sampled dropouts.
pub fn synthetic_cohort(n: usize, m: usize, m1: usize, seed: u64) -> Dataset {
    assert!(m <= n && m1 <= m, "need m1 <= m <= n");
    let mut rng = replicate_rng(seed, 0);
    let mut ages = Vec::with_capacity(n);
    let mut cd4s = Vec::with_capacity(n);
    let mut c_days = Vec::with_capacity(n);
    let mut t_days = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = StandardNormal.sample(&mut rng);
        let age = (35.0 + 9.0 * a).round().clamp(18.0, 70.0);
        let b: f64 = StandardNormal.sample(&mut rng);
        let cd4 = ((150f64.ln() + 0.8 * b).exp() / 10.0).round().clamp(1.0, 80.0) * 10.0;
        let c = rng.random_range(60..=1460u32);
        // Weibull(shape 0.8) with higher hazard at low CD4 and older age
        let rate = 0.12 * ((age - 35.0) * 0.02 - (cd4 / 150.0).ln() * 0.5).exp();
        let e: f64 = Exp1.sample(&mut rng);
        let t_years = (e / rate).powf(1.0 / 0.8);
        let t = (t_years * DAYS_PER_YEAR).ceil().clamp(1.0, 1e7) as u32;
        ages.push(age);
        cd4s.push(cd4);
        c_days.push(c);
        t_days.push(t);
    }
    let drop_w: Vec<f64> = (0..n).map(|i| expit(-0.3 - (cd4s[i] / 150.0).ln() * 0.4)).collect();
    let dropout = weighted_pick(&drop_w, m, &mut rng);
    let mut l_days = vec![0u32; n];
    for i in 0..n {
        if dropout[i] {
            let x = t_days[i].min(c_days[i]);
            l_days[i] = rng.random_range(0..x);
        }
    }
    // tracing favours recent dropouts
    let ds_w: Vec<f64> = (0..n)
        .map(|i| {
            if dropout[i] {
                let recency = f64::from(c_days[i] - l_days[i]) / DAYS_PER_YEAR;
                expit(1.0 - 1.2 * recency)
            } else {
                0.0
            }
        })
        .collect();
    let dropout_idx: Vec<usize> = (0..n).filter(|&i| dropout[i]).collect();
    let sub_w: Vec<f64> = dropout_idx.iter().map(|&i| ds_w[i]).collect();
    let picked = weighted_pick(&sub_w, m1, &mut rng);
    let mut double = vec![false; n];
    for (k, &i) in dropout_idx.iter().enumerate() {
        double[i] = picked[k];
    }
    let records = (0..n)
        .map(|i| {
            let x = t_days[i].min(c_days[i]);
            let outcome = Outcome {
                x: to_years(x),
                event: t_days[i] <= c_days[i],
            };
            ObservedRecord {
                c: to_years(c_days[i]),
                r_obs: !dropout[i],
                z: vec![ages[i], cd4s[i]],
                w: vec![dropout[i].then(|| to_years(l_days[i]))],
                s: double[i],
                outcome: (!dropout[i] || double[i]).then_some(outcome),
                source_row: i + 1,
            }
        })
        .collect();
    canonical_sort(records)
}

/// The bundled cohort: 1773 subjects, 673 dropouts, 91 double-sampled.
pub fn default_cohort() -> Dataset {
    synthetic_cohort(COHORT_N, COHORT_DROPOUTS, COHORT_DOUBLE_SAMPLED, COHORT_SEED)
}
