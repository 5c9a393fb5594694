//! Numerical Gateaux derivatives of `tau` at the extended working
//! distribution, the estimating equation in `alpha`, and the final estimate.

use std::collections::HashMap;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::estimand::{survival_product_limit, Atom, DiscreteDistribution};
use crate::models::{FitOptions, ModelError, WorkingModelFit};
use crate::numeric::Z_975;
use crate::root::brent;
use crate::support::{build_support, DiscretizedSupport, SupportError, SupportPoint};

pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Scan points for bracketing the estimating equation, by magnitude.
const SCAN: [f64; 8] = [0.125, 0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0];
const EXPANSION: [f64; 4] = [10.0, 20.0, 40.0, 50.0];
const XTOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("support: {0}")]
    Support(#[from] SupportError),
    #[error("working model: {0}")]
    Model(#[from] ModelError),
    #[error("solver: no root in [-{limit}, {limit}] at t={t}; |sum| is smallest ({residual:.3e}) at alpha={best_alpha}")]
    NoRoot {
        t: f64,
        best_alpha: f64,
        residual: f64,
        limit: f64,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub fit: FitOptions,
    pub epsilon: f64,
    /// Report `tau(F(0))` without solving for `alpha`.
    pub alpha_zero: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            epsilon: DEFAULT_EPSILON,
            alpha_zero: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub bracket: Option<(f64, f64)>,
    pub iterations: usize,
    pub evaluations: usize,
    pub residual: f64,
    /// Every scan interval where the estimating function changed sign.
    pub sign_changes: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub t: f64,
    pub tau_hat: f64,
    pub alpha_hat: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub epsilon: f64,
    #[serde(skip)]
    pub gateaux_values: Vec<f64>,
    pub solver: SolverDiagnostics,
}

/// `[functional(perturbed G) - functional(G)] / eps` at one support point.
pub fn gateaux_functional(g: &DiscreteDistribution, flat: usize, eps: f64, functional: impl Fn(&DiscreteDistribution) -> f64) -> f64 {
    (functional(&g.perturb(flat, eps)) - functional(g)) / eps
}

/// Evaluates `tau` at `G` and at its point-mass perturbations without
/// rebuilding the whole table: a perturbation at a support point only changes
/// the `z`-marginal and the `(x, delta)` table of that point's `z`.
#[derive(Debug, Clone)]
pub struct TauEvaluator {
    t: f64,
    /// Per stratum: `(x, event)` of each outcome triple, by triple index.
    atom_of: [Vec<Option<(f64, bool)>>; 2],
    /// Stratum 1: joint mass of each cell at each triple.
    joint1: Vec<Vec<f64>>,
    /// Stratum 0: total cell mass, selected mass, and selected masses per triple.
    cell0: Vec<(f64, f64, Vec<f64>)>,
    groups: Vec<(Vec<usize>, Vec<usize>)>,
    cell_z: [Vec<usize>; 2],
    pr: Vec<f64>,
    km: Vec<f64>,
    tau: f64,
}

struct Perturbation {
    r: usize,
    cell: usize,
    triple: usize,
    eps: f64,
}

impl TauEvaluator {
    pub fn new(g: &DiscreteDistribution, t: f64) -> Self {
        let sup = g.support();
        let p = g.probs();
        let atom_of = [0, 1].map(|r| {
            sup.stratum(r)
                .triples
                .iter()
                .map(|tr| tr.outcome.map(|o| (o.x, o.event)))
                .collect::<Vec<_>>()
        });
        let s1 = sup.stratum(1);
        let joint1 = (0..s1.cells.len())
            .map(|c| (0..s1.triples.len()).map(|j| p[s1.flat(c, j)]).collect())
            .collect();
        let s0 = sup.stratum(0);
        let cell0 = (0..s0.cells.len())
            .map(|c| {
                let masses: Vec<f64> = (0..s0.triples.len()).map(|j| p[s0.flat(c, j)]).collect();
                let total = masses.iter().sum();
                let sel: Vec<f64> = masses
                    .iter()
                    .zip(&atom_of[0])
                    .map(|(&m, a)| if a.is_some() { m } else { 0.0 })
                    .collect();
                (total, sel.iter().sum(), sel)
            })
            .collect();
        let nz = sup.z_values().len();
        let mut groups = vec![(Vec::new(), Vec::new()); nz];
        for (c, &k) in s0.cell_z.iter().enumerate() {
            groups[k].0.push(c);
        }
        for (c, &k) in s1.cell_z.iter().enumerate() {
            groups[k].1.push(c);
        }
        let mut ev = Self {
            t,
            atom_of,
            joint1,
            cell0,
            groups,
            cell_z: [s0.cell_z.clone(), s1.cell_z.clone()],
            pr: vec![0.0; nz],
            km: vec![1.0; nz],
            tau: 0.0,
        };
        for k in 0..nz {
            let (pr, atoms) = ev.group_table(k, None);
            ev.pr[k] = pr;
            ev.km[k] = survival_product_limit(&atoms, t);
        }
        ev.tau = ev.pr.iter().zip(&ev.km).map(|(p, s)| p * s).sum();
        ev
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Unnormalized `(x, delta)` table and `z`-mass of group `k`, optionally
    /// under a perturbation.
    fn group_table(&self, k: usize, pert: Option<&Perturbation>) -> (f64, Vec<Atom>) {
        let scale = pert.map_or(1.0, |q| 1.0 - q.eps);
        let hit = |r: usize, c: usize| pert.filter(|q| q.r == r && q.cell == c);
        let mut atoms = Vec::new();
        let mut pr = 0.0;
        let (cells0, cells1) = &self.groups[k];
        for &c in cells1 {
            let row = &self.joint1[c];
            let bump = hit(1, c);
            for (j, &m) in row.iter().enumerate() {
                let mut mass = scale * m;
                if bump.is_some_and(|q| q.triple == j) {
                    mass += bump.unwrap().eps;
                }
                pr += mass;
                if let Some((x, event)) = self.atom_of[1][j] {
                    if mass > 0.0 {
                        atoms.push(Atom { x, event, mass });
                    }
                }
            }
        }
        for &c in cells0 {
            let (total, sel_total, sel) = &self.cell0[c];
            let bump = hit(0, c);
            let mut m0 = scale * total;
            let mut denom = scale * sel_total;
            let mut extra = None;
            if let Some(q) = bump {
                m0 += q.eps;
                if self.atom_of[0][q.triple].is_some() {
                    denom += q.eps;
                    extra = Some((q.triple, q.eps));
                }
            }
            pr += m0;
            if denom <= 0.0 {
                continue;
            }
            for (j, &m) in sel.iter().enumerate() {
                let mut num = scale * m;
                if let Some((jj, e)) = extra {
                    if jj == j {
                        num += e;
                    }
                }
                if num > 0.0 {
                    let (x, event) = self.atom_of[0][j].expect("selected triple");
                    atoms.push(Atom {
                        x,
                        event,
                        mass: m0 * num / denom,
                    });
                }
            }
        }
        (pr, atoms)
    }

    /// `tau` of `(1 - eps) G + eps * point mass` at a support point.
    pub fn perturbed_tau(&self, point: &SupportPoint, eps: f64) -> f64 {
        let k = self.cell_z[point.r_obs][point.cell];
        let pert = Perturbation {
            r: point.r_obs,
            cell: point.cell,
            triple: point.triple,
            eps,
        };
        let (pr_new, atoms) = self.group_table(k, Some(&pert));
        let km_new = survival_product_limit(&atoms, self.t);
        (1.0 - eps) * (self.tau - self.pr[k] * self.km[k]) + pr_new * km_new
    }

    pub fn gateaux(&self, point: &SupportPoint, eps: f64) -> f64 {
        (self.perturbed_tau(point, eps) - self.tau) / eps
    }
}

/// Fits the working models once and serves estimates at any `t`.
pub struct DeductiveEstimator<'a> {
    fit: WorkingModelFit<'a>,
    config: EstimatorConfig,
    /// Distinct support points of the records, with multiplicities.
    points: Vec<(SupportPoint, usize)>,
    /// Index into `points` for each record, in dataset order.
    record_point: Vec<usize>,
}

impl<'a> DeductiveEstimator<'a> {
    pub fn new(data: &Dataset, support: &'a DiscretizedSupport, config: EstimatorConfig) -> Result<Self, EstimateError> {
        if !(config.epsilon > 0.0 && config.epsilon < 1.0) {
            return Err(EstimateError::InvalidArgument(format!("epsilon must be in (0, 1), got {}", config.epsilon)));
        }
        support.require_both_strata()?;
        let fit = WorkingModelFit::fit(data, support, config.fit)?;
        let mut index: HashMap<usize, usize> = HashMap::new();
        let mut points: Vec<(SupportPoint, usize)> = Vec::new();
        let mut record_point = Vec::with_capacity(data.n());
        for rec in data.records() {
            let flat = support.index_of(rec)?;
            let slot = *index.entry(flat).or_insert_with(|| {
                points.push((support.point(flat), 0));
                points.len() - 1
            });
            points[slot].1 += 1;
            record_point.push(slot);
        }
        Ok(Self {
            fit,
            config,
            points,
            record_point,
        })
    }

    pub fn fit(&self) -> &WorkingModelFit<'a> {
        &self.fit
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.record_point.len()
    }

    fn evaluator(&self, alpha: f64, t: f64) -> Result<TauEvaluator, EstimateError> {
        let g = self.fit.assemble(alpha)?;
        Ok(TauEvaluator::new(&g, t))
    }

    fn point_gateaux(&self, ev: &TauEvaluator) -> Vec<f64> {
        let eps = self.config.epsilon;
        self.points.par_iter().map(|(p, _)| ev.gateaux(p, eps)).collect()
    }

    /// Gateaux derivative at every record, in dataset order.
    pub fn gateaux_values(&self, alpha: f64, t: f64) -> Result<Vec<f64>, EstimateError> {
        let ev = self.evaluator(alpha, t)?;
        let per_point = self.point_gateaux(&ev);
        Ok(self.record_point.iter().map(|&i| per_point[i]).collect())
    }

    /// Left side of the estimating equation, and `tau(F(alpha))`.
    pub fn sum_gateaux(&self, alpha: f64, t: f64) -> Result<(f64, f64), EstimateError> {
        let ev = self.evaluator(alpha, t)?;
        let per_point = self.point_gateaux(&ev);
        let sum = self.points.iter().zip(&per_point).map(|((_, m), g)| *m as f64 * g).sum();
        Ok((sum, ev.tau()))
    }

    pub fn solve_alpha(&self, t: f64) -> Result<(f64, SolverDiagnostics), EstimateError> {
        let n = self.n() as f64;
        let ftol = n * 1e-6;
        let mut diag = SolverDiagnostics::default();
        let eval = |alpha: f64, diag: &mut SolverDiagnostics| -> Result<f64, EstimateError> {
            diag.evaluations += 1;
            self.sum_gateaux(alpha, t).map(|(s, _)| s)
        };
        let f0 = eval(0.0, &mut diag)?;
        if f0.abs() <= ftol {
            diag.residual = f0;
            return Ok((0.0, diag));
        }
        // scan each side outward; a side stops at the first degenerate extension
        let mut sides: [Vec<(f64, f64)>; 2] = [vec![(0.0, f0)], vec![(0.0, f0)]];
        let mut open = [true, true];
        let mut best = (0.0, f0);
        let mut limit = 0.0;
        for stage in [&SCAN[..], &EXPANSION[..]] {
            for &mag in stage {
                for (side, sign) in [(0, -1.0), (1, 1.0)] {
                    if !open[side] {
                        continue;
                    }
                    let alpha = sign * mag;
                    match eval(alpha, &mut diag) {
                        Ok(v) => {
                            if v.abs() < best.1.abs() {
                                best = (alpha, v);
                            }
                            let prev = *sides[side].last().unwrap();
                            if prev.1.signum() != v.signum() {
                                diag.sign_changes.push(if sign > 0.0 { (prev.0, alpha) } else { (alpha, prev.0) });
                            }
                            sides[side].push((alpha, v));
                        }
                        Err(EstimateError::Model(ModelError::DegenerateExtension { .. })) => {
                            debug!("alpha={alpha}: extension degenerate, closing scan side");
                            open[side] = false;
                        }
                        Err(e) => return Err(e),
                    }
                }
                limit = mag;
            }
            if !diag.sign_changes.is_empty() {
                break;
            }
        }
        let Some(&(lo, hi)) = diag
            .sign_changes
            .iter()
            .min_by(|a, b| a.0.abs().min(a.1.abs()).total_cmp(&b.0.abs().min(b.1.abs())))
        else {
            diag.residual = best.1;
            return Err(EstimateError::NoRoot {
                t,
                best_alpha: best.0,
                residual: best.1,
                limit,
            });
        };
        if diag.sign_changes.len() > 1 {
            warn!("estimating equation changes sign {} times; using the root nearest 0", diag.sign_changes.len());
        }
        let lookup = |a: f64| {
            sides
                .iter()
                .flat_map(|s| s.iter())
                .find(|p| p.0 == a)
                .map(|p| p.1)
                .expect("scanned point")
        };
        let (flo, fhi) = (lookup(lo), lookup(hi));
        let mut evals = 0;
        let root = brent(
            |a| {
                evals += 1;
                self.sum_gateaux(a, t).map(|(s, _)| s)
            },
            lo,
            hi,
            flo,
            fhi,
            ftol,
            XTOL,
            200,
        )?;
        diag.evaluations += evals;
        diag.bracket = Some((lo, hi));
        diag.iterations = root.iterations;
        diag.residual = root.fx;
        Ok((root.x, diag))
    }

    /// Estimate at one time point.
    pub fn estimate(&self, t: f64) -> Result<EstimationResult, EstimateError> {
        if t < 0.0 || !t.is_finite() {
            return Err(EstimateError::InvalidArgument(format!("t must be nonnegative, got {t}")));
        }
        let (alpha, solver) = if self.config.alpha_zero {
            (0.0, SolverDiagnostics::default())
        } else {
            self.solve_alpha(t)?
        };
        let ev = self.evaluator(alpha, t)?;
        let per_point = self.point_gateaux(&ev);
        let gateaux_values: Vec<f64> = self.record_point.iter().map(|&i| per_point[i]).collect();
        let n = gateaux_values.len() as f64;
        let se = gateaux_values.iter().map(|g| g * g).sum::<f64>().sqrt() / n;
        let tau_hat = ev.tau();
        Ok(EstimationResult {
            t,
            tau_hat,
            alpha_hat: alpha,
            se,
            ci_lo: tau_hat - Z_975 * se,
            ci_hi: tau_hat + Z_975 * se,
            epsilon: self.config.epsilon,
            gateaux_values,
            solver,
        })
    }
}

/// Fit, solve and estimate at a single `t`.
pub fn estimate(data: &Dataset, config: EstimatorConfig, t: f64) -> Result<EstimationResult, EstimateError> {
    let support = build_support(data);
    DeductiveEstimator::new(data, &support, config)?.estimate(t)
}

/// Estimates at several time points sharing one fit; each `t` succeeds or
/// fails independently.
pub fn estimate_many(data: &Dataset, config: EstimatorConfig, ts: &[f64]) -> Result<Vec<Result<EstimationResult, EstimateError>>, EstimateError> {
    let support = build_support(data);
    let est = DeductiveEstimator::new(data, &support, config)?;
    Ok(ts.iter().map(|&t| est.estimate(t)).collect())
}
