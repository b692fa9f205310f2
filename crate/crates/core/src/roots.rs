//! Bracketed scalar root finding.
//!
//! Every root the crate needs (the inner `tau` equation, the outer `beta`
//! stationarity condition, `Q` inversion and the calibration loops) is the
//! zero of a continuous function with a known sign change, so the only
//! solver here is Brent's method: inverse quadratic interpolation guarded by
//! bisection, which never leaves the bracket.

use crate::error::{Error, Result};

/// Outcome of a bracketed solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    /// Width of the final bracket.
    pub width: f64,
    pub iterations: usize,
}

/// Find a zero of `f` on `[lo, hi]`.
///
/// `f_lo` and `f_hi` are the already-evaluated endpoint values; they must
/// have opposite signs (or one of them is zero). Iteration stops when the
/// bracket is narrower than `xtol` (plus a few ulps of the iterate) or an
/// exact zero is hit. Passing `xtol = 0` runs to machine precision.
pub fn brent<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    f_lo: f64,
    f_hi: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(f_lo.is_finite() && f_hi.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite bracket values f({lo}) = {f_lo}, f({hi}) = {f_hi}"
        )));
    }
    if f_lo == 0.0 {
        return Ok(Root {
            x: lo,
            fx: 0.0,
            width: 0.0,
            iterations: 0,
        });
    }
    if f_hi == 0.0 {
        return Ok(Root {
            x: hi,
            fx: 0.0,
            width: 0.0,
            iterations: 0,
        });
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Internal(format!(
            "no sign change on [{lo}, {hi}]: f = ({f_lo}, {f_hi})"
        )));
    }

    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f_lo, f_hi);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;

    for iter in 1..=max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(Root {
                x: b,
                fx: fb,
                width: (c - b).abs(),
                iterations: iter,
            });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
        if !fb.is_finite() {
            return Err(Error::Numerical(format!(
                "f({b}) = {fb} during root search"
            )));
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        detail: format!(
            "bracket [{}, {}] still wider than {xtol}",
            b.min(c),
            b.max(c)
        ),
    })
}

/// Evaluate the endpoints and run [`brent`].
pub fn brent_on<F>(mut f: F, lo: f64, hi: f64, xtol: f64, max_iter: usize) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    brent(f, lo, hi, f_lo, f_hi, xtol, max_iter)
}
