//! Checks shared by the property suites and the acceptance run. Each returns
//! `Err` with a description of the first mismatch.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use deductive_core::data::{canonical_sort, ObservedRecord, Outcome};
use deductive_core::engine::{gateaux_functional, TauEvaluator};
use deductive_core::estimand::{components_from_distribution, survival_product_limit, Atom};
use deductive_core::models::logistic::fit_logistic;
use deductive_core::models::{fit_cox, fit_lognormal};
use deductive_core::sim::{apply_gamma_restriction, generate, GenerativeModel};
use deductive_core::{build_support, tau_of_distribution, Dataset, DiscreteDistribution, FitOptions, Variant, WorkingModelFit};
use nalgebra::DMatrix;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn gm(k: u8) -> GenerativeModel {
    GenerativeModel::from_number(k).unwrap()
}

type Q = Ratio<i128>;

/// Product-limit survival in exact arithmetic; atoms are `(x, event, mass)`.
pub fn km_exact(atoms: &[(i64, bool, i64)], t: i64) -> Q {
    let mut times: Vec<i64> = atoms.iter().map(|a| a.0).collect();
    times.sort_unstable();
    times.dedup();
    let mut s = Q::from_integer(1);
    for &u in times.iter().filter(|&&u| u <= t) {
        let at_risk: i64 = atoms.iter().filter(|a| a.0 >= u).map(|a| a.2).sum();
        let deaths: i64 = atoms.iter().filter(|a| a.0 == u && a.1).map(|a| a.2).sum();
        if deaths > 0 {
            s *= Q::from_integer(1) - Q::new(deaths as i128, at_risk as i128);
        }
    }
    s
}

pub fn check_product_limit(atoms: &[(i64, bool, i64)], t: i64) -> Check {
    let float: Vec<Atom> = atoms
        .iter()
        .map(|&(x, e, m)| Atom {
            x: x as f64,
            event: e,
            mass: m as f64,
        })
        .collect();
    let got = survival_product_limit(&float, t as f64);
    let q = km_exact(atoms, t);
    let want = *q.numer() as f64 / *q.denom() as f64;
    ensure!((got - want).abs() < 1e-12, "atoms {atoms:?} t={t}: {got} vs exact {q}");
    Ok(())
}

pub fn random_km_instance(rng: &mut ChaCha8Rng) -> (Vec<(i64, bool, i64)>, i64) {
    let k = rng.random_range(1..=6);
    let atoms = (0..k)
        .map(|_| (rng.random_range(1..=6), rng.random_bool(0.6), rng.random_range(1..=5)))
        .collect();
    (atoms, rng.random_range(0..=7))
}

/// A record on a tiny lattice: z and w binary, x in {1, 2}.
pub fn small_record(r_obs: bool, z: u8, w: u8, s: bool, x: u8, event: bool) -> ObservedRecord {
    let s = s && !r_obs;
    ObservedRecord {
        c: 3.0,
        r_obs,
        z: vec![f64::from(z)],
        w: vec![(!r_obs).then_some(0.5 + f64::from(w))],
        s,
        outcome: (r_obs || s).then_some(Outcome { x: f64::from(x), event }),
        source_row: 0,
    }
}

pub fn random_small_dataset(rng: &mut ChaCha8Rng) -> Dataset {
    let n = rng.random_range(1..=6);
    canonical_sort(
        (0..n)
            .map(|_| {
                small_record(
                    rng.random(),
                    rng.random_range(0..2),
                    rng.random_range(0..2),
                    rng.random(),
                    rng.random_range(1..3),
                    rng.random(),
                )
            })
            .collect(),
    )
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Components against indicator sums, with probabilities on a 1/1024 lattice
/// so that every sum is exact. `Ok(false)` when the support exceeds 20 points.
pub fn check_components(data: &Dataset, raw: &[u32]) -> Result<bool, String> {
    let sup = build_support(data);
    if sup.is_empty() || sup.len() > 20 {
        return Ok(false);
    }
    let mut k: Vec<u32> = (0..sup.len()).map(|i| raw[i % raw.len()] % 9).collect();
    let used: u32 = k[..sup.len() - 1].iter().sum();
    k[sup.len() - 1] = 1024 - used;
    let probs: Vec<f64> = k.iter().map(|&v| f64::from(v) / 1024.0).collect();
    let g = DiscreteDistribution::new(&sup, probs.clone());
    let comps = components_from_distribution(&g);
    let recs: Vec<ObservedRecord> = (0..sup.len()).map(|i| sup.record_at(i)).collect();
    let sum = |pred: &dyn Fn(&ObservedRecord) -> bool| -> f64 { recs.iter().zip(&probs).filter(|(r, _)| pred(r)).map(|(_, p)| p).sum() };

    let p1 = sum(&|r| r.r_obs);
    let p0 = sum(&|r| !r.r_obs);
    ensure!(comps.p_robs1 == p1 && comps.p_robs0 == p0, "P(R_obs): {} {} vs {p1} {p0}", comps.p_robs1, comps.p_robs0);
    let s1 = sup.stratum(1);
    for (k, z) in sup.z_values().iter().enumerate() {
        let pz = sum(&|r| r.r_obs && &r.z == z);
        ensure!(comps.p_z_given_r1[k] == ratio(pz, p1), "P(z | r=1) at {z:?}");
        for (a, &j) in s1.outcome_triples().iter().enumerate() {
            let o = s1.triples[j].outcome;
            let m = sum(&|r| r.r_obs && &r.z == z && r.outcome == o);
            ensure!(comps.p_xd_given_z_r1[k][a] == ratio(m, pz), "P(x, delta | z, r=1) at {z:?} {o:?}");
        }
    }
    let s0 = sup.stratum(0);
    for (c, cell) in s0.cells.iter().enumerate() {
        let in_cell = |r: &ObservedRecord| !r.r_obs && r.z == cell.z && r.w == cell.w;
        ensure!(comps.p_zw_given_r0[c] == ratio(sum(&in_cell), p0), "P(z, w | r=0) at cell {c}");
        let sel = sum(&|r| in_cell(r) && r.s);
        for (a, &j) in s0.outcome_triples().iter().enumerate() {
            let o = s0.triples[j].outcome;
            let m = sum(&|r| in_cell(r) && r.s && r.outcome == o);
            ensure!(comps.p_xd_given_zw_r0_s1[c][a] == ratio(m, sel), "P(x, delta | z, w, r=0, s=1) at cell {c} {o:?}");
        }
    }
    Ok(true)
}

/// Maximizes `f` over a box by repeatedly zooming a regular grid.
pub fn zoom_max(f: &dyn Fn(&[f64]) -> f64, center: &[f64], half_width: f64) -> Vec<f64> {
    let k = 40i32;
    let mut c = center.to_vec();
    let mut h = half_width;
    for _ in 0..14 {
        let mut best = (f64::NEG_INFINITY, c.clone());
        for idx in 0..(k + 1).pow(c.len() as u32) {
            let mut p = c.clone();
            let mut rem = idx;
            for v in p.iter_mut() {
                *v += h * (2.0 * f64::from(rem % (k + 1)) / f64::from(k) - 1.0);
                rem /= k + 1;
            }
            let val = f(&p);
            if val > best.0 {
                best = (val, p);
            }
        }
        c = best.1;
        h /= 4.0;
    }
    c
}

fn breslow_loglik(times: &[f64], events: &[bool], x: &[f64], beta: f64) -> f64 {
    let mut ll = 0.0;
    for i in (0..times.len()).filter(|&i| events[i]) {
        let risk: f64 = (0..times.len()).filter(|&j| times[j] >= times[i]).map(|j| (beta * x[j]).exp()).sum();
        ll += beta * x[i] - risk.ln();
    }
    ll
}

pub fn check_cox(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 60;
    let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for xi in &x {
        let e: f64 = Exp1.sample(&mut rng);
        let t = e * (-0.7 * xi).exp();
        let c = rng.random_range(0.3..3.0);
        // rounding creates ties
        times.push((t.min(c) * 10.0).ceil() / 10.0);
        events.push(t <= c);
    }
    let fit = fit_cox(&times, &events, &DMatrix::from_column_slice(n, 1, &x)).map_err(|e| e.to_string())?;
    let oracle = zoom_max(&|b| breslow_loglik(&times, &events, &x, b[0]), &[0.0], 5.0)[0];
    ensure!((fit.coefficients[0] - oracle).abs() < 1e-3, "cox seed {seed}: {} vs {oracle}", fit.coefficients[0]);
    Ok(())
}

fn logistic_loglik(x: &[f64], y: &[bool], b: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let p = 1.0 / (1.0 + (-(b[0] + b[1] * xi)).exp());
            if yi {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

pub fn check_logistic(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 150;
    let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y: Vec<bool> = x.iter().map(|xi| rng.random_bool(1.0 / (1.0 + (-(0.4 - 1.1 * xi)).exp()))).collect();
    let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    let fit = fit_logistic(&design, &y);
    let oracle = zoom_max(&|b| logistic_loglik(&x, &y, b), &[0.0, 0.0], 5.0);
    for k in 0..2 {
        ensure!((fit.coefficients[k] - oracle[k]).abs() < 1e-4, "logistic seed {seed}: {:?} vs {oracle:?}", fit.coefficients);
    }
    Ok(())
}

fn lognormal_loglik(times: &[f64], events: &[bool], b: &[f64]) -> f64 {
    let sigma = b[1].exp();
    let norm = Normal::new(0.0, 1.0).unwrap();
    times
        .iter()
        .zip(events)
        .map(|(&t, &e)| {
            let u = (t.ln() - b[0]) / sigma;
            if e {
                norm.ln_pdf(u) - sigma.ln()
            } else {
                norm.sf(u).ln()
            }
        })
        .sum()
}

pub fn check_lognormal(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 120;
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = StandardNormal.sample(&mut rng);
        let t = (0.3 + 0.8 * a).exp();
        let c = rng.random_range(0.5..4.0);
        times.push(t.min(c));
        events.push(t <= c);
    }
    let fit = fit_lognormal(&times, &events, &DMatrix::zeros(n, 0)).map_err(|e| e.to_string())?;
    let oracle = zoom_max(&|b| lognormal_loglik(&times, &events, b), &[0.0, 0.0], 3.0);
    ensure!((fit.intercept - oracle[0]).abs() < 1e-2, "lognormal seed {seed}: intercept {} vs {}", fit.intercept, oracle[0]);
    ensure!((fit.sigma - oracle[1].exp()).abs() < 1e-2, "lognormal seed {seed}: sigma {} vs {}", fit.sigma, oracle[1].exp());
    Ok(())
}

/// Mean of `x` among points with an observed outcome.
fn observed_mean(g: &DiscreteDistribution) -> f64 {
    let sup = g.support();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, p) in g.probs().iter().enumerate() {
        if let Some(o) = sup.record_at(i).outcome {
            num += p * o.x;
            den += p;
        }
    }
    num / den
}

/// Numerical Gateaux derivative of the observed-outcome mean against its
/// influence function. For this functional the finite-difference error is
/// `-IF (b - D) eps / (D + eps (b - D))` with `b` the point's observed
/// indicator and `D = P(observed)`, so `err / eps` must approach
/// `-IF (b - D) / D`.
pub fn check_gateaux_mean(seed: u64) -> Check {
    let data = generate(GenerativeModel::Gm1, 25, seed, 0);
    let sup = build_support(&data);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..sup.len()).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let g = DiscreteDistribution::new(&sup, raw.iter().map(|v| v / total).collect());
    let mu = observed_mean(&g);
    let p_obs: f64 = (0..sup.len()).filter(|&i| sup.record_at(i).outcome.is_some()).map(|i| g.probs()[i]).sum();
    let mut checked = 0;
    for k in (0..sup.len()).step_by(7) {
        let rec = sup.record_at(k);
        let b = if rec.outcome.is_some() { 1.0 } else { 0.0 };
        let influence = rec.outcome.map_or(0.0, |o| (o.x - mu) / p_obs);
        let slope = -influence * (b - p_obs) / p_obs;
        for eps in [1e-3, 1e-4, 1e-5] {
            let err = gateaux_functional(&g, k, eps, observed_mean) - influence;
            // first-order term, its O(eps) correction and roundoff
            let tol = 0.02 * slope.abs() + 1e-10 / eps;
            ensure!((err / eps - slope).abs() <= tol, "point {k} eps {eps}: err/eps {} vs slope {slope}", err / eps);
        }
        if slope.abs() > 1e-3 {
            checked += 1;
        }
    }
    ensure!(checked >= 5, "only {checked} informative points checked");
    Ok(())
}

/// Every extended table and assembled distribution sums to one.
pub fn check_normalization(k: u8, stream: u64, variant: Variant, alphas: &[f64]) -> Check {
    let data = generate(gm(k), 80, 31, stream);
    let sup = build_support(&data);
    let fit = WorkingModelFit::fit(&data, &sup, FitOptions { variant, ..Default::default() }).map_err(|e| e.to_string())?;
    for &alpha in alphas {
        let Ok(tables) = fit.xdelta_tables(alpha) else { continue };
        for r in 0..2 {
            for row in &tables.tables[r] {
                let s: f64 = row.iter().sum();
                ensure!((s - 1.0).abs() < 1e-12, "alpha {alpha}: cell sums to {s}");
                ensure!(row.iter().all(|&m| m >= 0.0), "alpha {alpha}: negative mass");
            }
        }
        let g = fit.assemble_from(&tables);
        ensure!((g.total() - 1.0).abs() < 1e-12, "alpha {alpha}: total {}", g.total());
        ensure!(g.probs().iter().all(|&p| p >= 0.0), "alpha {alpha}: negative probability");
        let comps = components_from_distribution(&g);
        ensure!((comps.p_robs0 + comps.p_robs1 - 1.0).abs() < 1e-12, "alpha {alpha}: P(R_obs)");
        let zw: f64 = comps.p_zw_given_r0.iter().sum();
        ensure!((zw - 1.0).abs() < 1e-12, "alpha {alpha}: P(z, w | r=0) sums to {zw}");
        for row in comps.p_xd_given_zw_r0_s1.iter().chain(&comps.p_xd_given_z_r1) {
            let s: f64 = row.iter().sum();
            ensure!(s == 0.0 || (s - 1.0).abs() < 1e-12, "alpha {alpha}: outcome row sums to {s}");
        }
    }
    Ok(())
}

/// The unextended Cox working distribution, rebuilt from the fitted curves.
fn unextended_cox(fit: &WorkingModelFit) -> Vec<f64> {
    let sup = fit.support();
    let summary = fit.summary();
    let cox = summary.cox.as_ref().unwrap();
    let mut probs = vec![0.0; sup.len()];
    for r in 0..2 {
        let st = sup.stratum(r);
        let (t_fit, c_fit) = cox.pair(r);
        let mut grid: Vec<f64> = fit.atoms(r).iter().map(|a| a.x).collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        for (c, cell) in st.cells.iter().enumerate() {
            let mut v = cell.z.clone();
            if r == 0 {
                v.extend(cell.w.iter().map(|w| w.unwrap()));
            }
            let before = |x: f64| grid.iter().copied().rfind(|&g| g < x);
            let masses: Vec<f64> = fit
                .atoms(r)
                .iter()
                .map(|a| {
                    let prev = before(a.x);
                    let st_prev = prev.map_or(1.0, |p| t_fit.survival(&v, p));
                    let sc_prev = prev.map_or(1.0, |p| c_fit.survival(&v, p));
                    if a.event {
                        (st_prev - t_fit.survival(&v, a.x)) * c_fit.survival(&v, a.x)
                    } else {
                        t_fit.survival(&v, a.x) * (sc_prev - c_fit.survival(&v, a.x))
                    }
                })
                .collect();
            let total: f64 = masses.iter().sum();
            let base = fit.p_robs()[r] * fit.p_zw(r)[c];
            let pi = if r == 0 { fit.selection_prob()[c] } else { 1.0 };
            for (j, t) in st.triples.iter().enumerate() {
                if r == 0 && !t.s {
                    probs[st.flat(c, j)] = base * (1.0 - pi);
                }
            }
            for (a, m) in fit.atoms(r).iter().zip(&masses) {
                probs[st.flat(c, a.triple)] = base * pi * m / total;
            }
        }
    }
    let total: f64 = probs.iter().sum();
    probs.iter().map(|p| p / total).collect()
}

/// `assemble(0)` equals the unextended Cox working distribution.
pub fn check_alpha_zero(k: u8, stream: u64) -> Check {
    let data = generate(gm(k), 120, 17, stream);
    let sup = build_support(&data);
    let fit = WorkingModelFit::fit(&data, &sup, FitOptions::default()).map_err(|e| e.to_string())?;
    ensure!(fit.summary().fallback_cells == [0, 0], "GM-{k} stream {stream}: fallback cells present");
    let g = fit.assemble(0.0).map_err(|e| e.to_string())?;
    let want = unextended_cox(&fit);
    for (a, b) in g.probs().iter().zip(&want) {
        ensure!((a - b).abs() < 1e-13, "GM-{k} stream {stream}: {a} vs {b}");
    }
    Ok(())
}

/// Perturbing a point mass toward itself changes nothing.
pub fn check_fixed_point(stream: u64) -> Check {
    let data = generate(GenerativeModel::Gm2, 40, 2, stream);
    let sup = build_support(&data);
    for flat in (0..sup.len()).step_by(11) {
        let g = DiscreteDistribution::point_mass(&sup, flat);
        for eps in [1e-4, 0.5, 1.0] {
            ensure!(g.perturb(flat, eps) == g, "point {flat} eps {eps}: perturbation moved the point mass");
        }
        let d = gateaux_functional(&g, flat, 1e-4, |h| tau_of_distribution(h, 0.7));
        ensure!(d.abs() < 1e-9, "point {flat}: Gateaux derivative {d}");
        let fast = TauEvaluator::new(&g, 0.7).gateaux(&sup.point(flat), 1e-4);
        ensure!(fast.abs() < 1e-9, "point {flat}: fast Gateaux derivative {fast}");
    }
    Ok(())
}

/// Every record of a simulated dataset maps to a support point carrying it.
pub fn check_membership(k: u8, stream: u64) -> Check {
    let data = generate(gm(k), 60, 99, stream);
    let sup = build_support(&data);
    for rec in data.records() {
        let i = sup.index_of(rec).map_err(|e| e.to_string())?;
        let back = sup.record_at(i);
        ensure!(
            (back.r_obs, &back.z, &back.w, back.s, back.outcome) == (rec.r_obs, &rec.z, &rec.w, rec.s, rec.outcome),
            "GM-{k} stream {stream}: record {} maps to a different point",
            rec.source_row
        );
    }
    Ok(())
}

fn double_sampled(d: &Dataset) -> Vec<usize> {
    let mut rows: Vec<usize> = d.records().iter().filter(|r| r.s).map(|r| r.source_row).collect();
    rows.sort_unstable();
    rows
}

/// Idempotence at one gamma and nesting across two.
pub fn check_gamma(k: u8, stream: u64, g1: f64, g2: f64) -> Check {
    let data = generate(gm(k), 120, 5, stream);
    let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
    let once = apply_gamma_restriction(&data, lo, 0).map_err(|e| e.to_string())?;
    let twice = apply_gamma_restriction(&once, lo, 0).map_err(|e| e.to_string())?;
    ensure!(once.records() == twice.records(), "gamma {lo} is not idempotent");
    let wide = apply_gamma_restriction(&data, hi, 0).map_err(|e| e.to_string())?;
    let kept_lo = double_sampled(&once);
    let kept_hi = double_sampled(&wide);
    ensure!(kept_lo.iter().all(|r| kept_hi.contains(r)), "gamma {lo} keeps a double-sample that {hi} masks");
    ensure!(kept_hi.len() <= data.m1(), "gamma {hi} added double-samples");
    ensure!(once.n() == data.n() && once.m() == data.m(), "gamma changed n or m");
    Ok(())
}
