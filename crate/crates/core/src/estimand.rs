//! The target functional `tau(G) = sum_z pr(z) * S_t[pr(X, Delta | z)]` for a
//! distribution `G` on the support.

use crate::support::DiscretizedSupport;

/// A probability table indexed by flat support position.
#[derive(Debug, Clone)]
pub struct DiscreteDistribution<'a> {
    support: &'a DiscretizedSupport,
    probs: Vec<f64>,
}

impl PartialEq for DiscreteDistribution<'_> {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.support, other.support) && self.probs == other.probs
    }
}

impl<'a> DiscreteDistribution<'a> {
    pub fn new(support: &'a DiscretizedSupport, probs: Vec<f64>) -> Self {
        assert_eq!(probs.len(), support.len(), "one probability per support point");
        Self { support, probs }
    }

    pub fn uniform(support: &'a DiscretizedSupport) -> Self {
        let n = support.len();
        Self::new(support, vec![1.0 / n as f64; n])
    }

    pub fn point_mass(support: &'a DiscretizedSupport, flat: usize) -> Self {
        let mut probs = vec![0.0; support.len()];
        probs[flat] = 1.0;
        Self::new(support, probs)
    }

    pub fn support(&self) -> &'a DiscretizedSupport {
        self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// `(1 - eps) G + eps * point mass at flat`.
    pub fn perturb(&self, flat: usize, eps: f64) -> Self {
        let mut probs: Vec<f64> = self.probs.iter().map(|p| (1.0 - eps) * p).collect();
        probs[flat] += eps;
        Self::new(self.support, probs)
    }
}

/// A weighted `(x, delta)` observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub x: f64,
    pub event: bool,
    pub mass: f64,
}

/// Product-limit survival at `t` on weighted atoms. Events are processed
/// before censorings at the same `x`; an empty or zero-mass table gives 1.
pub fn survival_product_limit(atoms: &[Atom], t: f64) -> f64 {
    let mut sorted: Vec<Atom> = atoms.iter().copied().filter(|a| a.mass > 0.0).collect();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x));
    // at-risk mass as suffix sums over distinct x
    let mut groups: Vec<(f64, f64, f64)> = Vec::new();
    for a in &sorted {
        match groups.last_mut() {
            Some(g) if g.0 == a.x => {
                g.1 += a.mass;
                if a.event {
                    g.2 += a.mass;
                }
            }
            _ => groups.push((a.x, a.mass, if a.event { a.mass } else { 0.0 })),
        }
    }
    let mut at_risk = vec![0.0; groups.len() + 1];
    for k in (0..groups.len()).rev() {
        at_risk[k] = at_risk[k + 1] + groups[k].1;
    }
    let mut s = 1.0;
    for (k, &(x, _, d)) in groups.iter().enumerate() {
        if x > t {
            break;
        }
        if d > 0.0 && at_risk[k] > 0.0 {
            s *= (1.0 - d / at_risk[k]).max(0.0);
        }
    }
    s
}

/// The six identifying components of a distribution on the support.
///
/// Outcome tables are indexed by the stratum's outcome triples (see
/// [`crate::support::Stratum::outcome_triples`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet {
    pub p_robs1: f64,
    /// `P(Z = z | R_obs = 1)` per entry of the support's `z_values`.
    pub p_z_given_r1: Vec<f64>,
    /// `P(X, Delta | Z = z, R_obs = 1)` per `z_values` entry.
    pub p_xd_given_z_r1: Vec<Vec<f64>>,
    pub p_robs0: f64,
    /// `P(Z, W | R_obs = 0)` per stratum-0 cell.
    pub p_zw_given_r0: Vec<f64>,
    /// `P(X, Delta | Z, W, R_obs = 0, S = 1)` per stratum-0 cell.
    pub p_xd_given_zw_r0_s1: Vec<Vec<f64>>,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

pub fn components_from_distribution(g: &DiscreteDistribution) -> ComponentSet {
    let sup = g.support();
    let p = g.probs();
    let nz = sup.z_values().len();
    let s1 = sup.stratum(1);
    let s0 = sup.stratum(0);
    let out1 = s1.outcome_triples();
    let out0 = s0.outcome_triples();

    let p_robs1: f64 = (s1.offset()..s1.offset() + s1.len()).map(|i| p[i]).sum();
    let p_robs0: f64 = (s0.offset()..s0.offset() + s0.len()).map(|i| p[i]).sum();

    let mut joint_z1 = vec![0.0; nz];
    let mut joint_zxd1 = vec![vec![0.0; out1.len()]; nz];
    for c in 0..s1.cells.len() {
        let k = s1.cell_z[c];
        for (a, &j) in out1.iter().enumerate() {
            let m = p[s1.flat(c, j)];
            joint_z1[k] += m;
            joint_zxd1[k][a] += m;
        }
    }
    let p_z_given_r1 = joint_z1.iter().map(|&m| ratio(m, p_robs1)).collect();
    let p_xd_given_z_r1 = joint_zxd1
        .iter()
        .zip(&joint_z1)
        .map(|(row, &tot)| row.iter().map(|&m| ratio(m, tot)).collect())
        .collect();

    let mut p_zw_given_r0 = Vec::with_capacity(s0.cells.len());
    let mut p_xd_given_zw_r0_s1 = Vec::with_capacity(s0.cells.len());
    for c in 0..s0.cells.len() {
        let cell_mass: f64 = (0..s0.triples.len()).map(|j| p[s0.flat(c, j)]).sum();
        p_zw_given_r0.push(ratio(cell_mass, p_robs0));
        let selected: Vec<f64> = out0.iter().map(|&j| p[s0.flat(c, j)]).collect();
        let sel_total: f64 = selected.iter().sum();
        p_xd_given_zw_r0_s1.push(selected.iter().map(|&m| ratio(m, sel_total)).collect());
    }

    ComponentSet {
        p_robs1,
        p_z_given_r1,
        p_xd_given_z_r1,
        p_robs0,
        p_zw_given_r0,
        p_xd_given_zw_r0_s1,
    }
}

impl ComponentSet {
    /// `pr(z)` mixing both strata, for each `z_values` entry.
    pub fn z_marginal(&self, support: &DiscretizedSupport) -> Vec<f64> {
        let mut pz: Vec<f64> = self.p_z_given_r1.iter().map(|&q| self.p_robs1 * q).collect();
        let s0 = support.stratum(0);
        for (c, &q) in self.p_zw_given_r0.iter().enumerate() {
            pz[s0.cell_z[c]] += self.p_robs0 * q;
        }
        pz
    }

    /// `pr(X, Delta | Z = z)` as atoms over both strata's outcome triples,
    /// normalized by `pr(z)`; `None` when `pr(z) = 0`.
    pub fn marginal_xdelta_given_z(&self, support: &DiscretizedSupport, z_index: usize) -> Option<Vec<Atom>> {
        let pz = self.z_marginal(support)[z_index];
        if pz <= 0.0 {
            return None;
        }
        let s1 = support.stratum(1);
        let s0 = support.stratum(0);
        let mut atoms = Vec::new();
        let w1 = self.p_robs1 * self.p_z_given_r1[z_index];
        for (a, &j) in s1.outcome_triples().iter().enumerate() {
            let o = s1.triples[j].outcome.expect("outcome triple");
            atoms.push(Atom {
                x: o.x,
                event: o.event,
                mass: w1 * self.p_xd_given_z_r1[z_index][a],
            });
        }
        let out0 = s0.outcome_triples();
        for c in (0..s0.cells.len()).filter(|&c| s0.cell_z[c] == z_index) {
            let w0 = self.p_robs0 * self.p_zw_given_r0[c];
            for (a, &j) in out0.iter().enumerate() {
                let o = s0.triples[j].outcome.expect("outcome triple");
                atoms.push(Atom {
                    x: o.x,
                    event: o.event,
                    mass: w0 * self.p_xd_given_zw_r0_s1[c][a],
                });
            }
        }
        let total: f64 = atoms.iter().map(|a| a.mass).sum();
        for a in &mut atoms {
            a.mass = ratio(a.mass, total);
        }
        Some(atoms)
    }
}

/// `tau(G)` at time `t`.
pub fn tau_of_distribution(g: &DiscreteDistribution, t: f64) -> f64 {
    let sup = g.support();
    let comps = components_from_distribution(g);
    let pz = comps.z_marginal(sup);
    let mut tau = 0.0;
    for (k, &w) in pz.iter().enumerate() {
        if let Some(atoms) = comps.marginal_xdelta_given_z(sup, k) {
            tau += w * survival_product_limit(&atoms, t);
        }
    }
    tau
}
