//! Small numerical helpers shared by the model fits.

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn expit(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal upper tail `1 - Phi(x)`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

pub fn norm_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Inverse Mills ratio `phi(x) / (1 - Phi(x))`.
pub fn mills(x: f64) -> f64 {
    if x > 30.0 {
        let x2 = x * x;
        x / (1.0 - 1.0 / x2 + 3.0 / (x2 * x2))
    } else {
        (norm_log_pdf(x) - norm_sf(x).ln()).exp()
    }
}

/// `log(1 - Phi(x))`, accurate in the far upper tail.
pub fn norm_log_sf(x: f64) -> f64 {
    if x > 30.0 {
        norm_log_pdf(x) - mills(x).ln()
    } else {
        norm_sf(x).ln()
    }
}

/// Solves `a * x = b` for symmetric positive definite `a`; `None` if the
/// Cholesky factorization fails.
pub fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.cholesky().map(|c| c.solve(b))
}

/// Sample quantile with linear interpolation between order statistics
/// (the default definition in most statistics packages).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (divisor `n - 1`).
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Two-sided 95% standard normal quantile.
pub const Z_975: f64 = 1.959_963_984_540_054;
