//! Recency restriction of double-samples: a double-sampled dropout counts only
//! if `c - L <= gamma`; otherwise its outcome is masked and `s` is reset.

use thiserror::Error;

use crate::data::{canonical_sort, Dataset};

#[derive(Debug, Error, PartialEq)]
pub enum GammaError {
    #[error("dropout time column {index} is not among the {w_dim} w columns")]
    MissingDropoutTime { index: usize, w_dim: usize },
    #[error("gamma must be positive, got {0}")]
    InvalidGamma(f64),
}

/// Masks double-samples with `c - w[l_index] > gamma`. `gamma = inf` is the
/// identity.
pub fn apply_gamma_restriction(data: &Dataset, gamma: f64, l_index: usize) -> Result<Dataset, GammaError> {
    if l_index >= data.w_dim() {
        return Err(GammaError::MissingDropoutTime {
            index: l_index,
            w_dim: data.w_dim(),
        });
    }
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(GammaError::InvalidGamma(gamma));
    }
    let records = data
        .records()
        .iter()
        .cloned()
        .map(|mut r| {
            if !r.r_obs && r.s {
                let l = r.w[l_index].expect("dropouts carry w");
                if r.c - l > gamma {
                    r.s = false;
                    r.outcome = None;
                }
            }
            r
        })
        .collect();
    Ok(canonical_sort(records))
}
