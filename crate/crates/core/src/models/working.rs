//! The working distribution on the support and its one-parameter extension.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::cox::{fit_cox_quadruple, CoxQuadruple};
use super::logistic::{fit_selection, SelectionFormula, SelectionModel};
use super::lognormal::{fit_lognormal_quadruple, LogNormalQuadruple};
use super::{regressors, FitSummary, ModelError};
use crate::data::Dataset;
use crate::estimand::DiscreteDistribution;
use crate::support::DiscretizedSupport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Cox,
    #[serde(rename = "lognormal")]
    LogNormal,
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cox" => Ok(Self::Cox),
            "lognormal" | "log-normal" | "ln" => Ok(Self::LogNormal),
            other => Err(format!("unknown variant '{other}' (expected cox or lognormal)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct FitOptions {
    pub variant: Variant,
    pub selection: SelectionFormula,
    /// Use `w` as a regressor in the non-dropout outcome fits. Off by
    /// default since `w` is usually undefined for non-dropouts.
    pub w_in_observed: bool,
}

#[derive(Debug, Clone)]
enum Fits {
    Cox(CoxQuadruple),
    LogNormal(LogNormalQuadruple),
}

/// One `(x, delta)` atom of a stratum table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableAtom {
    /// Triple index within the stratum.
    pub triple: usize,
    /// Index into the stratum's sorted x grid.
    pub grid: usize,
    pub x: f64,
    pub event: bool,
}

#[derive(Debug, Clone)]
struct StratumModel {
    grid: Vec<f64>,
    atoms: Vec<TableAtom>,
    regressors: Vec<Vec<f64>>,
    base: Vec<Vec<f64>>,
    c_max: f64,
}

/// Normalized `(x, delta)` tables at one `alpha`: `tables[r][cell][atom]`.
#[derive(Debug, Clone, PartialEq)]
pub struct XDeltaTables {
    pub alpha: f64,
    pub tables: [Vec<Vec<f64>>; 2],
    /// Cells whose own table was all zero and took the pooled table.
    pub fallback_cells: [Vec<usize>; 2],
}

/// Fitted factors of the working distribution over a fixed support.
#[derive(Debug, Clone)]
pub struct WorkingModelFit<'a> {
    support: &'a DiscretizedSupport,
    options: FitOptions,
    p_robs: [f64; 2],
    p_zw: [Vec<f64>; 2],
    selection: SelectionModel,
    selection_prob: Vec<f64>,
    fits: Fits,
    strata: [StratumModel; 2],
}

/// Empirical `P(R_obs)` and `P(Z, W | R_obs)` on the support cells.
pub fn fit_empirical_marginals(data: &Dataset, support: &DiscretizedSupport) -> ([f64; 2], [Vec<f64>; 2]) {
    let n = data.n() as f64;
    let p_robs = [data.m() as f64 / n, (data.n() - data.m()) as f64 / n];
    let p_zw = [0, 1].map(|r| {
        let st = support.stratum(r);
        let recs = data.stratum(r);
        let mut counts = vec![0.0; st.cells.len()];
        for rec in recs {
            if let Some(c) = st.cell_index(rec) {
                counts[c] += 1.0;
            }
        }
        let total = recs.len() as f64;
        counts.iter_mut().for_each(|c| *c /= total);
        counts
    });
    (p_robs, p_zw)
}

fn normalize(v: &mut [f64]) -> bool {
    let total: f64 = v.iter().sum();
    if total > 0.0 && total.is_finite() {
        v.iter_mut().for_each(|m| *m /= total);
        true
    } else {
        v.iter_mut().for_each(|m| *m = 0.0);
        false
    }
}

/// Eq. (9)-style product table from survival curves on the grid
/// (`s[j]` is the survivor at grid point `j`; the mass at `j` is the drop
/// from `j - 1`).
fn product_masses(atoms: &[TableAtom], s_t: &[f64], s_c: &[f64]) -> Vec<f64> {
    let drop = |s: &[f64], j: usize| {
        let prev = if j == 0 { 1.0 } else { s[j - 1] };
        (prev - s[j]).max(0.0)
    };
    atoms
        .iter()
        .map(|a| {
            if a.event {
                drop(s_t, a.grid) * s_c[a.grid]
            } else {
                s_t[a.grid] * drop(s_c, a.grid)
            }
        })
        .collect()
}

/// Upper bin edges for log-normal binning: midpoints, and infinity last.
fn midpoints(grid: &[f64]) -> Vec<f64> {
    let mut edges: Vec<f64> = grid.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    edges.push(f64::INFINITY);
    edges
}

impl<'a> WorkingModelFit<'a> {
    pub fn fit(data: &Dataset, support: &'a DiscretizedSupport, options: FitOptions) -> Result<Self, ModelError> {
        let (p_robs, p_zw) = fit_empirical_marginals(data, support);
        let selection = match fit_selection(data, options.selection) {
            Ok(m) => m,
            Err(ModelError::SeparationDetected { model }) => {
                warn!("continuing with the selection fit reached at the iteration cap");
                *model
            }
            Err(e) => return Err(e),
        };
        let st0 = support.stratum(0);
        let selection_prob = st0.cells.iter().map(|c| selection.predict(&c.z, &c.w)).collect();
        let fits = match options.variant {
            super::Variant::Cox => Fits::Cox(fit_cox_quadruple(data, options.w_in_observed)?),
            super::Variant::LogNormal => Fits::LogNormal(fit_lognormal_quadruple(data, options.w_in_observed)?),
        };

        let mut strata = Vec::with_capacity(2);
        for r in 0..2 {
            let st = support.stratum(r);
            let use_w = r == 0 || options.w_in_observed;
            let regs = st
                .cells
                .iter()
                .map(|c| regressors(&c.z, &c.w, use_w).ok_or(ModelError::MissingCovariate { row: 0 }))
                .collect::<Result<Vec<_>, _>>()?;
            let mut grid: Vec<f64> = st.triples.iter().filter_map(|t| t.outcome.map(|o| o.x)).collect();
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            let atoms = st
                .outcome_triples()
                .into_iter()
                .map(|j| {
                    let o = st.triples[j].outcome.unwrap();
                    TableAtom {
                        triple: j,
                        grid: grid.partition_point(|&g| g < o.x),
                        x: o.x,
                        event: o.event,
                    }
                })
                .collect();
            let c_max = data.stratum(r).iter().map(|rec| rec.c).fold(f64::NEG_INFINITY, f64::max);
            strata.push(StratumModel {
                grid,
                atoms,
                regressors: regs,
                base: Vec::new(),
                c_max,
            });
        }
        let strata: [StratumModel; 2] = strata.try_into().expect("two strata");
        let mut fit = Self {
            support,
            options,
            p_robs,
            p_zw,
            selection,
            selection_prob,
            fits,
            strata,
        };
        for r in 0..2 {
            let base = (0..fit.strata[r].regressors.len())
                .map(|c| {
                    let mut m = fit.raw_masses(r, c, 0.0);
                    if !normalize(&mut m) {
                        debug!("stratum {r} cell {c}: all (x, delta) masses are zero");
                    }
                    m
                })
                .collect();
            fit.strata[r].base = base;
        }
        Ok(fit)
    }

    /// Unnormalized Eq. (9) masses for one cell; `shift` moves the log-normal
    /// T location (ignored for Cox).
    fn raw_masses(&self, r: usize, cell: usize, shift: f64) -> Vec<f64> {
        let sm = &self.strata[r];
        let v = &sm.regressors[cell];
        let (s_t, s_c): (Vec<f64>, Vec<f64>) = match &self.fits {
            Fits::Cox(q) => {
                let (t, c) = q.pair(r);
                sm.grid.iter().map(|&x| (t.survival(v, x), c.survival(v, x))).unzip()
            }
            Fits::LogNormal(q) => {
                let (t, c) = q.pair(r);
                midpoints(&sm.grid)
                    .into_iter()
                    .map(|b| {
                        if b.is_infinite() {
                            (0.0, 0.0)
                        } else {
                            (t.survival_shifted(v, b, shift), c.survival(v, b))
                        }
                    })
                    .unzip()
            }
        };
        product_masses(&sm.atoms, &s_t, &s_c)
    }

    /// Extended and normalized `(x, delta)` tables at `alpha`.
    pub fn xdelta_tables(&self, alpha: f64) -> Result<XDeltaTables, ModelError> {
        let mut tables: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
        let mut fallback_cells = [Vec::new(), Vec::new()];
        for r in 0..2 {
            let sm = &self.strata[r];
            let mut cells = Vec::with_capacity(sm.base.len());
            let mut empty = Vec::new();
            for (c, base) in sm.base.iter().enumerate() {
                let table = if alpha == 0.0 {
                    base.clone()
                } else {
                    let mut m = match self.options.variant {
                        Variant::Cox => base
                            .iter()
                            .zip(&sm.atoms)
                            .map(|(&p, a)| p * (1.0 + alpha * a.x / sm.c_max).max(0.0))
                            .collect(),
                        Variant::LogNormal => self.raw_masses(r, c, alpha),
                    };
                    normalize(&mut m);
                    m
                };
                if table.iter().all(|&m| m == 0.0) && !sm.atoms.is_empty() {
                    empty.push(c);
                }
                cells.push(table);
            }
            if !empty.is_empty() {
                let mut pooled = vec![0.0; sm.atoms.len()];
                for (c, t) in cells.iter().enumerate() {
                    for (p, m) in pooled.iter_mut().zip(t) {
                        *p += self.p_zw[r][c] * m;
                    }
                }
                if !normalize(&mut pooled) {
                    return Err(if alpha == 0.0 {
                        ModelError::AllMassZero { stratum: r }
                    } else {
                        ModelError::DegenerateExtension { stratum: r, alpha }
                    });
                }
                for &c in &empty {
                    cells[c].clone_from(&pooled);
                }
            }
            fallback_cells[r] = empty;
            tables[r] = cells;
        }
        Ok(XDeltaTables {
            alpha,
            tables,
            fallback_cells,
        })
    }

    /// The full working distribution `F(alpha)` on the support.
    pub fn assemble(&self, alpha: f64) -> Result<DiscreteDistribution<'a>, ModelError> {
        let tables = self.xdelta_tables(alpha)?;
        Ok(self.assemble_from(&tables))
    }

    pub fn assemble_from(&self, tables: &XDeltaTables) -> DiscreteDistribution<'a> {
        let support = self.support;
        let mut probs = vec![0.0; support.len()];
        for r in 0..2 {
            let st = support.stratum(r);
            let sm = &self.strata[r];
            for c in 0..st.cells.len() {
                let base = self.p_robs[r] * self.p_zw[r][c];
                if r == 0 {
                    let pi = self.selection_prob[c];
                    for (j, t) in st.triples.iter().enumerate() {
                        if !t.s {
                            probs[st.flat(c, j)] = base * (1.0 - pi);
                        }
                    }
                    for (a, m) in sm.atoms.iter().zip(&tables.tables[r][c]) {
                        probs[st.flat(c, a.triple)] = base * pi * m;
                    }
                } else {
                    for (a, m) in sm.atoms.iter().zip(&tables.tables[r][c]) {
                        probs[st.flat(c, a.triple)] = base * m;
                    }
                }
            }
        }
        let total: f64 = probs.iter().sum();
        if total > 0.0 {
            probs.iter_mut().for_each(|p| *p /= total);
        }
        DiscreteDistribution::new(support, probs)
    }

    pub fn support(&self) -> &'a DiscretizedSupport {
        self.support
    }

    pub fn options(&self) -> FitOptions {
        self.options
    }

    pub fn p_robs(&self) -> [f64; 2] {
        self.p_robs
    }

    pub fn p_zw(&self, r: usize) -> &[f64] {
        &self.p_zw[r]
    }

    pub fn selection(&self) -> &SelectionModel {
        &self.selection
    }

    /// Fitted `P(S = 1 | r_obs = 0, cell)` per stratum-0 cell.
    pub fn selection_prob(&self) -> &[f64] {
        &self.selection_prob
    }

    pub fn atoms(&self, r: usize) -> &[TableAtom] {
        &self.strata[r].atoms
    }

    pub fn c_max(&self, r: usize) -> f64 {
        self.strata[r].c_max
    }

    pub fn summary(&self) -> FitSummary {
        let fallback = self.xdelta_tables(0.0).map(|t| t.fallback_cells.map(|v| v.len())).unwrap_or([0, 0]);
        FitSummary {
            variant: self.options.variant,
            p_robs: self.p_robs,
            c_max: [self.strata[0].c_max, self.strata[1].c_max],
            selection: self.selection.clone(),
            cox: match &self.fits {
                Fits::Cox(q) => Some(q.clone()),
                Fits::LogNormal(_) => None,
            },
            lognormal: match &self.fits {
                Fits::LogNormal(q) => Some(q.clone()),
                Fits::Cox(_) => None,
            },
            fallback_cells: fallback,
        }
    }
}
