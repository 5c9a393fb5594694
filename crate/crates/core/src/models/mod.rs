//! Working-model fits for the factorized distribution on the support:
//! empirical marginals, the logistic selection model, and the `(X, Delta)`
//! tables built from Cox or log-normal regressions.

pub mod cox;
pub mod logistic;
pub mod lognormal;
pub mod working;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::ObservedRecord;

pub use cox::{fit_cox, fit_cox_quadruple, CoxFit, CoxQuadruple, FailureRole};
pub use logistic::{fit_selection, SelectionFormula, SelectionModel};
pub use lognormal::{fit_lognormal, fit_lognormal_quadruple, LogNormalFit, LogNormalQuadruple};
pub use working::{fit_empirical_marginals, FitOptions, Variant, WorkingModelFit, XDeltaTables};

/// Newton iteration cap shared by the logistic and Cox fits.
pub const MAX_NEWTON_ITER: usize = 100;
/// Sup-norm gradient tolerance for the logistic and Cox fits.
pub const GRADIENT_TOL: f64 = 1e-8;
/// Relative log-likelihood change tolerance for the log-normal fit.
pub const LOGLIK_REL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("logistic selection model: complete or quasi-complete separation")]
    SeparationDetected { model: Box<SelectionModel> },
    #[error("logistic selection model: all observed dropouts have the same s")]
    DegenerateSelection,
    #[error("{model}: no convergence after {iterations} iterations (gradient {gradient:.3e})")]
    NonConvergence {
        model: String,
        iterations: usize,
        gradient: f64,
    },
    #[error("{model}: event log-times have zero variance")]
    ZeroVariance { model: String },
    #[error("{what}: need at least {needed} records, found {found}")]
    InsufficientData {
        what: String,
        needed: usize,
        found: usize,
    },
    #[error("row {row}: covariate w is NA but is used as a regressor")]
    MissingCovariate { row: usize },
    #[error("every (x, delta) mass is zero in stratum r_obs={stratum}")]
    AllMassZero { stratum: usize },
    #[error("alpha = {alpha}: every (x, delta) mass in stratum r_obs={stratum} is clamped to zero")]
    DegenerateExtension { stratum: usize, alpha: f64 },
}

/// Regressor vector `(z, w)` (or `z` alone) for one record or cell.
pub(crate) fn regressors(z: &[f64], w: &[Option<f64>], use_w: bool) -> Option<Vec<f64>> {
    let mut v = z.to_vec();
    if use_w {
        for x in w {
            v.push((*x)?);
        }
    }
    Some(v)
}

/// Design matrix (one row per record) without an intercept column.
pub(crate) fn design<'a>(
    records: impl IntoIterator<Item = &'a ObservedRecord>,
    use_w: bool,
) -> Result<DMatrix<f64>, ModelError> {
    let rows = records
        .into_iter()
        .map(|r| {
            regressors(&r.z, &r.w, use_w).ok_or(ModelError::MissingCovariate { row: r.source_row })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let p = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
}

/// Columns that vary within the fitting subset; constant columns are
/// dropped from the fit and get a zero coefficient.
pub(crate) fn varying_columns(x: &DMatrix<f64>) -> Vec<usize> {
    (0..x.ncols())
        .filter(|&j| {
            let col = x.column(j);
            col.iter().any(|&v| v != col[0])
        })
        .collect()
}

pub(crate) fn select_columns(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |i, j| x[(i, cols[j])])
}

pub(crate) fn scatter(coef: &[f64], cols: &[usize], p: usize) -> Vec<f64> {
    let mut full = vec![0.0; p];
    for (&c, &b) in cols.iter().zip(coef) {
        full[c] = b;
    }
    full
}

/// Serializable summary of every fit, for diagnostics dumps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub variant: Variant,
    pub p_robs: [f64; 2],
    pub c_max: [f64; 2],
    pub selection: SelectionModel,
    pub cox: Option<CoxQuadruple>,
    pub lognormal: Option<LogNormalQuadruple>,
    pub fallback_cells: [usize; 2],
}
