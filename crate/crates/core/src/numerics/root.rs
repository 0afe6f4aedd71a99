use super::Tolerance;
use crate::error::{Error, Result};

/// Brent's method on `[lo, hi]`: inverse quadratic / secant steps guarded by
/// bisection. Requires `f(lo)` and `f(hi)` to bracket a root.
pub fn find_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: Tolerance) -> Result<f64> {
    tol.validate()?;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::Domain(format!("invalid bracket [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa.is_nan() || fb.is_nan() {
        return Err(Error::Numerics("NaN at bracket endpoint".into()));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoRoot { lo, hi });
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..tol.max_iter {
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
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol.abs.max(tol.rel * b.abs());
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if fb.is_nan() {
            return Err(Error::Numerics(format!("NaN at x={b}")));
        }
    }
    Err(Error::Numerics(format!(
        "root finder exhausted {} iterations near {b}",
        tol.max_iter
    )))
}

/// Golden-section minimization of a unimodal `f` on `[lo, hi]`.
/// Returns `(argmin, min)`.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, xtol: f64) -> Result<(f64, f64)> {
    if !(lo <= hi) || !(xtol > 0.0) {
        return Err(Error::Domain(format!("invalid interval [{lo}, {hi}] or xtol {xtol}")));
    }
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > xtol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    // endpoints may beat the interior for monotone objectives
    let mid = 0.5 * (a + b);
    let candidates = [(mid, f(mid)), (lo, f(lo)), (hi, f(hi))];
    let best = candidates
        .into_iter()
        .fold((mid, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
    Ok(best)
}
