//! Descriptive statistics of a generative model from one large draw.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::gm::{generate_latent, replicate_rng, GenerativeModel, LatentSubject, DEFAULT_T};
use crate::numeric::quantile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub gm: u8,
    pub n: usize,
    /// `P(T > 0.7)` in the sample.
    pub tau: f64,
    pub p_robs0: f64,
    pub p_s1_given_robs0: f64,
    /// 10th and 90th percentiles of the selection probability among dropouts.
    pub selection_deciles: (f64, f64),
    pub p_delta1: f64,
    /// 10th and 90th percentiles of `X` where observed.
    pub x_deciles: (f64, f64),
    /// Partial correlation of `T` and `C` given `Z` and `R_obs`.
    pub pcorr_t_c_given_z_robs: f64,
    /// Partial correlation of `T` and `C` given `Z` and `L` among observed dropouts.
    pub pcorr_t_c_given_z_l_dropout: f64,
}

fn residuals(y: &[f64], x: &DMatrix<f64>) -> DVector<f64> {
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * x;
    let beta = xtx.cholesky().expect("full-rank regressors").solve(&(x.transpose() * &yv));
    yv - x * beta
}

/// Correlation of `a` and `b` after regressing each on the columns of `x`.
pub fn partial_correlation(a: &[f64], b: &[f64], x: &DMatrix<f64>) -> f64 {
    let ra = residuals(a, x);
    let rb = residuals(b, x);
    ra.dot(&rb) / (ra.norm() * rb.norm())
}

pub fn describe_subjects(gm: GenerativeModel, subjects: &[LatentSubject]) -> DescriptiveStats {
    let n = subjects.len();
    let tau = subjects.iter().filter(|s| s.t > DEFAULT_T).count() as f64 / n as f64;
    let dropouts: Vec<&LatentSubject> = subjects.iter().filter(|s| !s.r_obs).collect();
    let m = dropouts.len() as f64;
    let p_s1 = dropouts.iter().filter(|s| s.s).count() as f64 / m;
    let mut sel: Vec<f64> = dropouts.iter().map(|s| s.selection_prob).collect();
    sel.sort_by(f64::total_cmp);
    let observed: Vec<&LatentSubject> = subjects.iter().filter(|s| s.r_obs || s.s).collect();
    let p_delta1 = observed.iter().filter(|s| s.t <= s.c).count() as f64 / observed.len() as f64;
    let mut xs: Vec<f64> = observed.iter().map(|s| s.t.min(s.c)).collect();
    xs.sort_by(f64::total_cmp);

    let pooled = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => subjects[i].z,
        _ => f64::from(u8::from(subjects[i].r_obs)),
    });
    let ts: Vec<f64> = subjects.iter().map(|s| s.t).collect();
    let cs: Vec<f64> = subjects.iter().map(|s| s.c).collect();
    let pc1 = partial_correlation(&ts, &cs, &pooled);

    let within = DMatrix::from_fn(dropouts.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => dropouts[i].z,
        _ => dropouts[i].l,
    });
    let td: Vec<f64> = dropouts.iter().map(|s| s.t).collect();
    let cd: Vec<f64> = dropouts.iter().map(|s| s.c).collect();
    let pc2 = partial_correlation(&td, &cd, &within);

    DescriptiveStats {
        gm: gm.number(),
        n,
        tau,
        p_robs0: m / n as f64,
        p_s1_given_robs0: p_s1,
        selection_deciles: (quantile(&sel, 0.1), quantile(&sel, 0.9)),
        p_delta1,
        x_deciles: (quantile(&xs, 0.1), quantile(&xs, 0.9)),
        pcorr_t_c_given_z_robs: pc1,
        pcorr_t_c_given_z_l_dropout: pc2,
    }
}

/// Descriptive statistics from `n_mc` draws.
pub fn descriptive_stats(gm: GenerativeModel, n_mc: usize, seed: u64) -> DescriptiveStats {
    let mut rng = replicate_rng(seed, 0);
    let subjects = generate_latent(gm, n_mc, &mut rng);
    describe_subjects(gm, &subjects)
}
