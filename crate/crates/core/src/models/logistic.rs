//! Logistic regression for the double-sampling selection probability
//! `P(S = 1 | r_obs = 0, z, w)`, fitted by iteratively reweighted least squares.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{design, scatter, select_columns, varying_columns, ModelError, GRADIENT_TOL, MAX_NEWTON_ITER};
use crate::data::Dataset;
use crate::numeric::{expit, solve_spd};

/// Linear predictors beyond this magnitude on a training point are taken as
/// evidence of separation.
const SEPARATION_ETA: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SelectionFormula {
    /// Intercept plus all `z` and `w` columns.
    #[default]
    Full,
    /// Intercept only (a deliberately misspecified selection model).
    InterceptOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionModel {
    pub formula: SelectionFormula,
    /// `[intercept, z.., w..]`; zeros past the intercept for the
    /// intercept-only formula.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub separated: bool,
}

impl SelectionModel {
    pub fn linear_predictor(&self, z: &[f64], w: &[Option<f64>]) -> f64 {
        let mut eta = self.coefficients[0];
        let rest = &self.coefficients[1..];
        let values = z.iter().copied().chain(w.iter().map(|v| v.unwrap_or(0.0)));
        for (b, v) in rest.iter().zip(values) {
            eta += b * v;
        }
        eta
    }

    pub fn predict(&self, z: &[f64], w: &[Option<f64>]) -> f64 {
        expit(self.linear_predictor(z, w))
    }
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub separated: bool,
}

fn log_likelihood(x: &DMatrix<f64>, y: &[bool], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            // log(1 + exp(e)) computed stably
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            if yi {
                e - softplus
            } else {
                -softplus
            }
        })
        .sum()
}

/// Maximum-likelihood logistic regression. `x` must already contain the
/// intercept column.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[bool]) -> LogisticFit {
    let p = x.ncols();
    let mut beta = DVector::<f64>::zeros(p);
    let mut ll = log_likelihood(x, y, &beta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_NEWTON_ITER {
        let eta = x * &beta;
        let prob: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let resid = DVector::from_iterator(y.len(), y.iter().zip(&prob).map(|(&yi, &pi)| f64::from(u8::from(yi)) - pi));
        let grad = x.transpose() * &resid;
        if grad.amax() <= GRADIENT_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let weights: Vec<f64> = prob.iter().map(|&pi| (pi * (1.0 - pi)).max(1e-300)).collect();
        let mut info = DMatrix::<f64>::zeros(p, p);
        for (i, &wi) in weights.iter().enumerate() {
            let row = x.row(i);
            info += row.transpose() * row * wi;
        }
        let Some(step) = solve_spd(info, &grad) else {
            break;
        };
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial = &beta + &step * scale;
            let trial_ll = log_likelihood(x, y, &trial);
            if trial_ll >= ll - 1e-12 * ll.abs() {
                beta = trial;
                ll = trial_ll;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let eta = x * &beta;
    let separated = !converged || eta.iter().any(|e| e.abs() > SEPARATION_ETA);
    LogisticFit {
        coefficients: beta.iter().copied().collect(),
        converged,
        iterations,
        separated,
    }
}

/// Fits the selection model on the observed dropouts.
///
/// Separation is reported as [`ModelError::SeparationDetected`] carrying the
/// fit reached at the iteration cap.
pub fn fit_selection(data: &Dataset, formula: SelectionFormula) -> Result<SelectionModel, ModelError> {
    let dropouts = data.stratum(0);
    let y: Vec<bool> = dropouts.iter().map(|r| r.s).collect();
    if y.iter().all(|&s| s) || y.iter().all(|&s| !s) {
        return Err(ModelError::DegenerateSelection);
    }
    let raw = design(dropouts, true)?;
    let p = raw.ncols();
    let cols = match formula {
        SelectionFormula::Full => varying_columns(&raw),
        SelectionFormula::InterceptOnly => Vec::new(),
    };
    let reduced = select_columns(&raw, &cols);
    let x = DMatrix::from_fn(reduced.nrows(), reduced.ncols() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            reduced[(i, j - 1)]
        }
    });
    let fit = fit_logistic(&x, &y);
    let mut coefficients = vec![fit.coefficients[0]];
    coefficients.extend(scatter(&fit.coefficients[1..], &cols, p));
    let model = SelectionModel {
        formula,
        coefficients,
        converged: fit.converged,
        iterations: fit.iterations,
        separated: fit.separated,
    };
    if model.separated {
        warn!("selection model separated after {} iterations", model.iterations);
        return Err(ModelError::SeparationDetected { model: Box::new(model) });
    }
    Ok(model)
}

/// Log-likelihood of a logistic model at given coefficients (intercept first),
/// exposed for brute-force checks.
pub fn logistic_log_likelihood(x: &DMatrix<f64>, y: &[bool], beta: &[f64]) -> f64 {
    log_likelihood(x, y, &DVector::from_column_slice(beta))
}
