//! Cox proportional hazards with Breslow ties and the Breslow baseline.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{design, select_columns, varying_columns, ModelError, GRADIENT_TOL, MAX_NEWTON_ITER};
use crate::data::{Dataset, ObservedRecord};
use crate::numeric::solve_spd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureRole {
    /// Failure is `delta = 1` (a death).
    Death,
    /// Failure is `delta = 0`; deaths act as censoring.
    Censoring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub stratum: usize,
    pub role: FailureRole,
    /// One entry per regressor; dropped (constant) regressors get zero.
    pub coefficients: Vec<f64>,
    /// Regressor means used for centering the baseline.
    pub centers: Vec<f64>,
    /// `(time, cumulative hazard)` at each distinct failure time.
    pub baseline: Vec<(f64, f64)>,
    pub converged: bool,
    pub iterations: usize,
    pub log_partial_likelihood: f64,
    pub gradient_norm: f64,
}

impl CoxFit {
    pub fn linear_predictor(&self, v: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(v.iter().zip(&self.centers))
            .map(|(b, (x, c))| if *b == 0.0 { 0.0 } else { b * (x - c) })
            .sum()
    }

    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        let k = self.baseline.partition_point(|&(s, _)| s <= t);
        if k == 0 {
            0.0
        } else {
            self.baseline[k - 1].1
        }
    }

    pub fn survival(&self, v: &[f64], t: f64) -> f64 {
        (-self.cumulative_hazard(t) * self.linear_predictor(v).exp()).exp()
    }
}

struct PartialLikelihood {
    loglik: f64,
    grad: DVector<f64>,
    info: DMatrix<f64>,
}

/// Breslow log partial likelihood with gradient and observed information.
/// `order` sorts the records by decreasing time.
fn partial_likelihood(times: &[f64], events: &[bool], x: &DMatrix<f64>, order: &[usize], beta: &DVector<f64>) -> PartialLikelihood {
    let p = x.ncols();
    let eta = x * beta;
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let mut s0 = 0.0;
    let mut s1 = DVector::<f64>::zeros(p);
    let mut s2 = DMatrix::<f64>::zeros(p, p);
    let mut loglik = 0.0;
    let mut grad = DVector::<f64>::zeros(p);
    let mut info = DMatrix::<f64>::zeros(p, p);
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let mut end = k;
        let mut d = 0.0;
        let mut xsum = DVector::<f64>::zeros(p);
        while end < order.len() && times[order[end]] == t {
            let i = order[end];
            let r = (eta[i] - shift).exp();
            let xi = x.row(i).transpose();
            s0 += r;
            s1 += &xi * r;
            s2 += &xi * xi.transpose() * r;
            if events[i] {
                d += 1.0;
                loglik += eta[i];
                xsum += &xi;
            }
            end += 1;
        }
        if d > 0.0 {
            loglik -= d * (s0.ln() + shift);
            let mean = &s1 / s0;
            grad += xsum - &mean * d;
            info += (&s2 / s0 - &mean * mean.transpose()) * d;
        }
        k = end;
    }
    PartialLikelihood { loglik, grad, info }
}

/// Fits a Cox model to `(times, events)` with regressors `x` (no intercept).
pub fn fit_cox(times: &[f64], events: &[bool], x: &DMatrix<f64>) -> Result<CoxFit, ModelError> {
    let n = times.len();
    let p = x.ncols();
    let cols = varying_columns(x);
    let reduced = select_columns(x, &cols);
    let q = cols.len();
    let col_means: Vec<f64> = (0..q).map(|j| reduced.column(j).mean()).collect();
    let centered = DMatrix::from_fn(n, q, |i, j| reduced[(i, j)] - col_means[j]);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));

    let mut beta = DVector::<f64>::zeros(q);
    let mut pl = partial_likelihood(times, events, &centered, &order, &beta);
    let mut converged = false;
    let mut flat = 0;
    let mut iterations = 0;
    if !events.iter().any(|&e| e) {
        converged = true;
    }
    while !converged && iterations < MAX_NEWTON_ITER {
        if q == 0 || pl.grad.amax() <= GRADIENT_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let Some(step) = solve_spd(pl.info.clone(), &pl.grad) else {
            break;
        };
        let mut scale = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let trial = &beta + &step * scale;
            let cand = partial_likelihood(times, events, &centered, &order, &trial);
            if cand.loglik.is_finite() && cand.loglik >= pl.loglik - 1e-12 * pl.loglik.abs() {
                next = Some((trial, cand));
                break;
            }
            scale *= 0.5;
        }
        let Some((trial, cand)) = next else {
            break;
        };
        let change = (cand.loglik - pl.loglik).abs();
        beta = trial;
        pl = cand;
        // monotone likelihood: coefficients drift while the likelihood stalls
        if change <= 1e-12 * pl.loglik.abs().max(1.0) {
            flat += 1;
            if flat >= 3 {
                break;
            }
        } else {
            flat = 0;
        }
    }
    let gradient_norm = if q == 0 { 0.0 } else { pl.grad.amax() };
    if !converged {
        if flat >= 3 || gradient_norm <= GRADIENT_TOL * n as f64 {
            warn!("cox fit stopped on a flat partial likelihood (gradient {gradient_norm:.2e})");
        } else {
            return Err(ModelError::NonConvergence {
                model: "cox".into(),
                iterations,
                gradient: gradient_norm,
            });
        }
    }

    // Breslow baseline on centered regressors
    let eta = &centered * &beta;
    let mut baseline = Vec::new();
    let mut cum = 0.0;
    let mut risk = 0.0;
    let mut k = 0;
    let mut steps = Vec::new();
    while k < n {
        let t = times[order[k]];
        let mut d = 0.0;
        while k < n && times[order[k]] == t {
            risk += eta[order[k]].exp();
            if events[order[k]] {
                d += 1.0;
            }
            k += 1;
        }
        if d > 0.0 {
            steps.push((t, d / risk));
        }
    }
    for (t, h) in steps.into_iter().rev() {
        cum += h;
        baseline.push((t, cum));
    }

    let mut coefficients = vec![0.0; p];
    let mut centers = vec![0.0; p];
    for (j, &c) in cols.iter().enumerate() {
        coefficients[c] = beta[j];
        centers[c] = col_means[j];
    }
    Ok(CoxFit {
        stratum: 0,
        role: FailureRole::Death,
        coefficients,
        centers,
        baseline,
        converged,
        iterations,
        log_partial_likelihood: pl.loglik,
        gradient_norm,
    })
}

/// The four independent fits: `T` and `C` within each stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxQuadruple {
    pub t0: CoxFit,
    pub c0: CoxFit,
    pub t1: CoxFit,
    pub c1: CoxFit,
}

impl CoxQuadruple {
    pub fn pair(&self, stratum: usize) -> (&CoxFit, &CoxFit) {
        if stratum == 0 {
            (&self.t0, &self.c0)
        } else {
            (&self.t1, &self.c1)
        }
    }
}

pub(crate) fn fitting_records(data: &Dataset, stratum: usize) -> Vec<&ObservedRecord> {
    data.stratum(stratum).iter().filter(|r| r.outcome.is_some()).collect()
}

fn fit_one(records: &[&ObservedRecord], use_w: bool, stratum: usize, role: FailureRole) -> Result<CoxFit, ModelError> {
    if records.is_empty() {
        return Err(ModelError::InsufficientData {
            what: format!("cox fit, stratum r_obs={stratum}"),
            needed: 1,
            found: 0,
        });
    }
    let x = design(records.iter().copied(), use_w)?;
    let times: Vec<f64> = records.iter().map(|r| r.outcome.unwrap().x).collect();
    let events: Vec<bool> = records
        .iter()
        .map(|r| r.outcome.unwrap().event == (role == FailureRole::Death))
        .collect();
    let mut fit = fit_cox(&times, &events, &x)?;
    fit.stratum = stratum;
    fit.role = role;
    Ok(fit)
}

/// Fits `T` and `C` on the double-sampled dropouts (`z, w` regressors) and on
/// the non-dropouts (`z`, plus `w` when `w_in_observed`).
pub fn fit_cox_quadruple(data: &Dataset, w_in_observed: bool) -> Result<CoxQuadruple, ModelError> {
    let r0 = fitting_records(data, 0);
    let r1 = fitting_records(data, 1);
    Ok(CoxQuadruple {
        t0: fit_one(&r0, true, 0, FailureRole::Death)?,
        c0: fit_one(&r0, true, 0, FailureRole::Censoring)?,
        t1: fit_one(&r1, w_in_observed, 1, FailureRole::Death)?,
        c1: fit_one(&r1, w_in_observed, 1, FailureRole::Censoring)?,
    })
}
