//! Bracketed scalar root finding (Brent's method).

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
    /// Final bracket width.
    pub width: f64,
}

/// Finds a root of `f` in `[a, b]` given `fa = f(a)` and `fb = f(b)` of
/// opposite signs. Stops when `|f| <= ftol` or the bracket is narrower than
/// `xtol`.
#[allow(clippy::too_many_arguments)]
pub fn brent<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    ftol: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<Root, E> {
    assert!(fa * fb <= 0.0, "root not bracketed");
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut mflag = true;
    for it in 0..max_iter {
        if fb.abs() <= ftol || (b - a).abs() <= xtol {
            return Ok(Root {
                x: b,
                fx: fb,
                iterations: it,
                width: (b - a).abs(),
            });
        }
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc)) + b * fa * fc / ((fb - fa) * (fb - fc)) + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let between = if lo < b { s > lo && s < b } else { s > b && s < lo };
        let bisect = !between
            || (mflag && (s - b).abs() >= (b - c).abs() / 2.0)
            || (!mflag && (s - b).abs() >= (c - d).abs() / 2.0)
            || (mflag && (b - c).abs() < xtol)
            || (!mflag && (c - d).abs() < xtol);
        if bisect {
            s = 0.5 * (a + b);
        }
        mflag = bisect;
        let fs = f(s)?;
        d = c;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Ok(Root {
        x: b,
        fx: fb,
        iterations: max_iter,
        width: (b - a).abs(),
    })
}
