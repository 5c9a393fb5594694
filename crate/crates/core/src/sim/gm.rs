//! The two generative models of the simulation study.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{canonical_sort, Dataset, ObservedRecord, Outcome};
use crate::numeric::{expit, norm_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GenerativeModel {
    /// Weibull survival, uniform administrative censoring.
    Gm1,
    /// Independent log-normal survival and censoring.
    Gm2,
}

impl GenerativeModel {
    pub fn number(self) -> u8 {
        match self {
            Self::Gm1 => 1,
            Self::Gm2 => 2,
        }
    }

    pub fn from_number(k: u8) -> Option<Self> {
        match k {
            1 => Some(Self::Gm1),
            2 => Some(Self::Gm2),
            _ => None,
        }
    }
}

impl std::fmt::Display for GenerativeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GM-{}", self.number())
    }
}

pub const DEFAULT_T: f64 = 0.7;

/// One subject with every latent quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentSubject {
    pub z: f64,
    /// Never drops out.
    pub r: bool,
    pub t: f64,
    pub c: f64,
    /// Dropout time (drawn for everyone, meaningful when `r = 0`).
    pub l: f64,
    pub r_obs: bool,
    /// Double-sampling probability (dropouts only; NaN otherwise).
    pub selection_prob: f64,
    pub s: bool,
}

impl LatentSubject {
    /// The observed record implied by the masking rules.
    pub fn observe(&self, row: usize) -> ObservedRecord {
        let outcome = (self.r_obs || self.s).then(|| Outcome {
            x: self.t.min(self.c),
            event: self.t <= self.c,
        });
        ObservedRecord {
            c: self.c,
            r_obs: self.r_obs,
            z: vec![self.z],
            w: vec![(!self.r_obs).then_some(self.l)],
            s: self.s,
            outcome,
            source_row: row,
        }
    }
}

/// Draws one subject.
pub fn draw_subject<R: Rng + ?Sized>(gm: GenerativeModel, rng: &mut R) -> LatentSubject {
    let z = rng.random_range(-2.0..=2.0);
    let r = rng.random_bool((z + 3.0) / 6.0);
    let (t, c) = match gm {
        GenerativeModel::Gm1 => {
            // survivor exp(-e^z t^5)
            let e: f64 = Exp1.sample(rng);
            let t = (e * (-z).exp()).powf(0.2);
            let c = rng.random_range(0.5..=2.0);
            (t, c)
        }
        GenerativeModel::Gm2 => {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            ((z + 0.5 * a).exp(), (z + 0.5 * b).exp())
        }
    };
    let u: f64 = rng.random();
    let l = t / 3.0 + u * (t - t / 3.0);
    let r_obs = r || t.min(c) < l;
    let (selection_prob, s) = if r_obs {
        (f64::NAN, false)
    } else {
        let eta = match gm {
            GenerativeModel::Gm1 => (l + z + 1.0) / 2.0,
            GenerativeModel::Gm2 => (l - z + 1.0) / 2.0,
        };
        let p = expit(eta);
        (p, rng.random_bool(p))
    };
    LatentSubject {
        z,
        r,
        t,
        c,
        l,
        r_obs,
        selection_prob,
        s,
    }
}

/// RNG for replicate `stream` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn generate_latent(gm: GenerativeModel, n: usize, rng: &mut ChaCha8Rng) -> Vec<LatentSubject> {
    (0..n).map(|_| draw_subject(gm, rng)).collect()
}

/// A canonical observed dataset of size `n` from stream `stream` of `seed`.
pub fn generate(gm: GenerativeModel, n: usize, seed: u64, stream: u64) -> Dataset {
    let mut rng = replicate_rng(seed, stream);
    let subjects = generate_latent(gm, n, &mut rng);
    canonical_sort(subjects.iter().enumerate().map(|(i, s)| s.observe(i + 1)).collect())
}

/// Monte Carlo `P(T > t)` from `n_mc` latent draws.
pub fn true_tau_mc(gm: GenerativeModel, t: f64, n_mc: usize, seed: u64) -> f64 {
    let mut rng = replicate_rng(seed, u64::MAX);
    let alive = (0..n_mc).filter(|_| draw_subject(gm, &mut rng).t > t).count();
    alive as f64 / n_mc as f64
}

/// `P(T > t | Z = z)`.
pub fn conditional_survival(gm: GenerativeModel, z: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    match gm {
        GenerativeModel::Gm1 => (-(z.exp()) * t.powi(5)).exp(),
        GenerativeModel::Gm2 => norm_cdf((z - t.ln()) / 0.5),
    }
}

/// `P(T > t)` by composite Simpson quadrature over `Z ~ U[-2, 2]`.
pub fn true_tau(gm: GenerativeModel, t: f64) -> f64 {
    let k = 4000;
    let h = 4.0 / k as f64;
    let mut acc = 0.0;
    for i in 0..=k {
        let z = -2.0 + i as f64 * h;
        let w = if i == 0 || i == k {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * conditional_survival(gm, z, t);
    }
    acc * h / 3.0 / 4.0
}
