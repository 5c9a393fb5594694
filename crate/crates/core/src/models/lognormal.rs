//! Censored log-normal (accelerated failure time) regression.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cox::{fitting_records, FailureRole};
use super::{design, select_columns, varying_columns, ModelError, LOGLIK_REL_TOL};
use crate::data::{Dataset, ObservedRecord};
use crate::numeric::{mills, norm_log_sf, norm_sf};

const MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogNormalFit {
    pub stratum: usize,
    pub role: FailureRole,
    pub intercept: f64,
    /// One entry per regressor; dropped (constant) regressors get zero.
    pub slopes: Vec<f64>,
    pub sigma: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood of the log-times (the Jacobian term is omitted).
    pub log_likelihood: f64,
    /// No failures in the fitting set: the fitted law puts no mass on any
    /// finite time.
    pub no_failures: bool,
}

impl LogNormalFit {
    pub fn location(&self, v: &[f64]) -> f64 {
        self.intercept
            + self
                .slopes
                .iter()
                .zip(v)
                .map(|(b, x)| if *b == 0.0 { 0.0 } else { b * x })
                .sum::<f64>()
    }

    /// `P(T > t)` with the location shifted by `shift`.
    pub fn survival_shifted(&self, v: &[f64], t: f64, shift: f64) -> f64 {
        if self.no_failures {
            return 1.0;
        }
        if t <= 0.0 {
            return 1.0;
        }
        norm_sf((t.ln() - self.location(v) - shift) / self.sigma)
    }

    pub fn survival(&self, v: &[f64], t: f64) -> f64 {
        self.survival_shifted(v, t, 0.0)
    }
}

/// Log-likelihood, gradient and negative Hessian in `(intercept, slopes, log sigma)`.
fn evaluate(y: &[f64], events: &[bool], x: &DMatrix<f64>, theta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
    let q = x.ncols();
    let dim = q + 2;
    let tau = theta[dim - 1];
    let sigma = tau.exp();
    let mut ll = 0.0;
    let mut grad = DVector::<f64>::zeros(dim);
    let mut info = DMatrix::<f64>::zeros(dim, dim);
    let mut row = DVector::<f64>::zeros(dim - 1);
    for i in 0..y.len() {
        row[0] = 1.0;
        let mut mu = theta[0];
        for j in 0..q {
            row[j + 1] = x[(i, j)];
            mu += theta[j + 1] * x[(i, j)];
        }
        let u = (y[i] - mu) / sigma;
        let (l, g_mu, g_tau, h_mumu, h_mutau, h_tautau) = if events[i] {
            (-0.5 * u * u - tau, u / sigma, u * u - 1.0, -1.0 / (sigma * sigma), -2.0 * u / sigma, -2.0 * u * u)
        } else {
            let m = mills(u);
            let dm = m * (m - u);
            (
                norm_log_sf(u),
                m / sigma,
                u * m,
                -dm / (sigma * sigma),
                -(u * dm + m) / sigma,
                -u * m - u * u * dm,
            )
        };
        ll += l;
        for a in 0..dim - 1 {
            grad[a] += g_mu * row[a];
            for b in 0..dim - 1 {
                info[(a, b)] -= h_mumu * row[a] * row[b];
            }
            info[(a, dim - 1)] -= h_mutau * row[a];
            info[(dim - 1, a)] -= h_mutau * row[a];
        }
        grad[dim - 1] += g_tau;
        info[(dim - 1, dim - 1)] -= h_tautau;
    }
    (ll, grad, info)
}

fn damped_solve(info: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let n = info.nrows();
    let mut lambda = 0.0;
    let scale = info.diagonal().amax().max(1e-12);
    loop {
        let a = info + DMatrix::<f64>::identity(n, n) * (lambda * scale);
        if let Some(ch) = a.cholesky() {
            return ch.solve(grad);
        }
        lambda = if lambda == 0.0 { 1e-8 } else { lambda * 10.0 };
        if lambda > 1e8 {
            return grad / scale;
        }
    }
}

/// Maximum-likelihood fit of `log T ~ N(b0 + x'b, sigma^2)` with right
/// censoring. `x` carries no intercept column.
pub fn fit_lognormal(times: &[f64], events: &[bool], x: &DMatrix<f64>) -> Result<LogNormalFit, ModelError> {
    let n = times.len();
    let p = x.ncols();
    let n_events = events.iter().filter(|&&e| e).count();
    if n_events == 0 {
        return Ok(LogNormalFit {
            stratum: 0,
            role: FailureRole::Death,
            intercept: 0.0,
            slopes: vec![0.0; p],
            sigma: 1.0,
            converged: true,
            iterations: 0,
            log_likelihood: 0.0,
            no_failures: true,
        });
    }
    let y: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let cols = varying_columns(x);
    let xr = select_columns(x, &cols);
    let q = cols.len();

    // least squares on all log-times for a start
    let design_full = DMatrix::from_fn(n, q + 1, |i, j| if j == 0 { 1.0 } else { xr[(i, j - 1)] });
    let yv = DVector::from_column_slice(&y);
    let xtx = design_full.transpose() * &design_full;
    let xty = design_full.transpose() * &yv;
    let start = xtx
        .clone()
        .cholesky()
        .map(|c| c.solve(&xty))
        .unwrap_or_else(|| {
            let mut s = DVector::zeros(q + 1);
            s[0] = yv.mean();
            s
        });
    let resid = &yv - &design_full * &start;
    let rss = resid.norm_squared() / n as f64;
    if n_events == n && rss <= 1e-24 * (1.0 + yv.amax().powi(2)) {
        return Err(ModelError::ZeroVariance { model: "log-normal".into() });
    }
    let mut theta = DVector::<f64>::zeros(q + 2);
    theta.rows_mut(0, q + 1).copy_from(&start);
    theta[q + 1] = 0.5 * rss.max(1e-6).ln();

    let (mut ll, mut grad, mut info) = evaluate(&y, events, &xr, &theta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let step = damped_solve(&info, &grad);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial = &theta + &step * scale;
            let eval = evaluate(&y, events, &xr, &trial);
            if eval.0.is_finite() && eval.0 >= ll {
                accepted = Some((trial, eval));
                break;
            }
            scale *= 0.5;
        }
        let Some((trial, (next_ll, g, h))) = accepted else {
            // no ascent possible along the step: at a maximum to machine precision
            converged = grad.amax() <= 1e-6 * (n as f64).max(1.0);
            break;
        };
        let change = (next_ll - ll).abs();
        theta = trial;
        ll = next_ll;
        grad = g;
        info = h;
        if change <= LOGLIK_REL_TOL * ll.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    let sigma = theta[q + 1].exp();
    if !sigma.is_finite() || sigma < 1e-10 {
        return Err(ModelError::ZeroVariance { model: "log-normal".into() });
    }
    if !converged {
        let g = grad.amax();
        if g > 1e-4 * (n as f64).max(1.0) {
            return Err(ModelError::NonConvergence {
                model: "log-normal".into(),
                iterations,
                gradient: g,
            });
        }
        warn!("log-normal fit hit the iteration cap (gradient {g:.2e})");
    }
    let mut slopes = vec![0.0; p];
    for (j, &c) in cols.iter().enumerate() {
        slopes[c] = theta[j + 1];
    }
    Ok(LogNormalFit {
        stratum: 0,
        role: FailureRole::Death,
        intercept: theta[0],
        slopes,
        sigma,
        converged,
        iterations,
        log_likelihood: ll,
        no_failures: false,
    })
}

/// Log-likelihood (log-time scale) at given parameters; for brute-force checks.
pub fn lognormal_log_likelihood(times: &[f64], events: &[bool], x: &DMatrix<f64>, intercept: f64, slopes: &[f64], sigma: f64) -> f64 {
    let mut theta = DVector::<f64>::zeros(slopes.len() + 2);
    theta[0] = intercept;
    for (j, b) in slopes.iter().enumerate() {
        theta[j + 1] = *b;
    }
    theta[slopes.len() + 1] = sigma.ln();
    let y: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    evaluate(&y, events, x, &theta).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogNormalQuadruple {
    pub t0: LogNormalFit,
    pub c0: LogNormalFit,
    pub t1: LogNormalFit,
    pub c1: LogNormalFit,
}

impl LogNormalQuadruple {
    pub fn pair(&self, stratum: usize) -> (&LogNormalFit, &LogNormalFit) {
        if stratum == 0 {
            (&self.t0, &self.c0)
        } else {
            (&self.t1, &self.c1)
        }
    }
}

fn fit_one(records: &[&ObservedRecord], use_w: bool, stratum: usize, role: FailureRole) -> Result<LogNormalFit, ModelError> {
    if records.is_empty() {
        return Err(ModelError::InsufficientData {
            what: format!("log-normal fit, stratum r_obs={stratum}"),
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
    let mut fit = fit_lognormal(&times, &events, &x)?;
    fit.stratum = stratum;
    fit.role = role;
    Ok(fit)
}

pub fn fit_lognormal_quadruple(data: &Dataset, w_in_observed: bool) -> Result<LogNormalQuadruple, ModelError> {
    let r0 = fitting_records(data, 0);
    let r1 = fitting_records(data, 1);
    Ok(LogNormalQuadruple {
        t0: fit_one(&r0, true, 0, FailureRole::Death)?,
        c0: fit_one(&r0, true, 0, FailureRole::Censoring)?,
        t1: fit_one(&r1, w_in_observed, 1, FailureRole::Death)?,
        c1: fit_one(&r1, w_in_observed, 1, FailureRole::Censoring)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncensored_without_covariates_is_sample_moments() {
        let times = [0.5, 1.0, 1.5, 2.5, 4.0];
        let logs: Vec<f64> = times.iter().map(|t: &f64| t.ln()).collect();
        let m = logs.iter().sum::<f64>() / 5.0;
        let sd = (logs.iter().map(|l| (l - m).powi(2)).sum::<f64>() / 5.0).sqrt();
        let fit = fit_lognormal(&times, &[true; 5], &DMatrix::zeros(5, 0)).unwrap();
        assert!((fit.intercept - m).abs() < 1e-8);
        assert!((fit.sigma - sd).abs() < 1e-8);
        assert!(fit.converged);
    }

    #[test]
    fn identical_event_times_are_rejected() {
        let r = fit_lognormal(&[2.0; 4], &[true; 4], &DMatrix::zeros(4, 0));
        assert!(matches!(r, Err(ModelError::ZeroVariance { .. })));
    }

    #[test]
    fn no_failures_gives_unit_survival() {
        let fit = fit_lognormal(&[1.0, 2.0], &[false, false], &DMatrix::zeros(2, 0)).unwrap();
        assert!(fit.no_failures);
        assert_eq!(fit.survival(&[], 5.0), 1.0);
    }

    #[test]
    fn uninformative_censoring_matches_uncensored_subsample() {
        let ev = [0.4, 0.9, 1.3, 2.2, 3.1, 0.7];
        let mut times = ev.to_vec();
        let mut events = vec![true; ev.len()];
        times.extend([1e-12, 1e-12]);
        events.extend([false, false]);
        // censoring near zero carries no information: log S(c) ~ 0
        let a = fit_lognormal(&ev, &[true; 6], &DMatrix::zeros(6, 0)).unwrap();
        let b = fit_lognormal(&times, &events, &DMatrix::zeros(8, 0)).unwrap();
        assert!((a.intercept - b.intercept).abs() < 1e-4);
        assert!((a.sigma - b.sigma).abs() < 1e-4);
    }
}
