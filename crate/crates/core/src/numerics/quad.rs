use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::Tolerance;
use crate::error::{Error, Result};

// 15-point Kronrod abscissae (positive half) and weights, with the embedded
// 7-point Gauss weights on every other node.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature of `f` over `[a, b]`.
///
/// `b` may be `f64::INFINITY`, in which case the interval is mapped onto
/// `[0, 1)` through `x = a + t/(1-t)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<f64> {
    tol.validate()?;
    if a.is_nan() || b.is_nan() {
        return Err(Error::Domain("integration limit is NaN".into()));
    }
    if b == f64::INFINITY {
        return integrate_to_inf(f, a, tol);
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain(format!("unsupported limits [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, tol).map(|v| -v);
    }
    adaptive(&f, a, b, tol)
}

/// `∫_a^∞ f(x) dx` via the substitution `x = a + t/(1-t)`.
pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: F, a: f64, tol: Tolerance) -> Result<f64> {
    let mapped = |t: f64| {
        let s = 1.0 - t;
        let x = a + t / s;
        let v = f(x);
        if v == 0.0 {
            0.0
        } else {
            v / (s * s)
        }
    };
    adaptive(&mapped, 0.0, 1.0, tol)
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: Tolerance) -> Result<f64> {
    let (value, error) = gauss_kronrod(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;

    for _ in 0..tol.max_iter {
        if !total.is_finite() {
            return Err(Error::Numerics(format!("non-finite integrand on [{a}, {b}]")));
        }
        if total_err <= tol.abs.max(tol.rel * total.abs()) {
            return Ok(total);
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval cannot be split further in floating point
            heap.push(worst);
            break;
        }
        let (v1, e1) = gauss_kronrod(f, worst.a, mid);
        let (v2, e2) = gauss_kronrod(f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }

    // re-sum to shed accumulated rounding from the running totals
    let total: f64 = heap.iter().map(|s| s.value).sum();
    let total_err: f64 = heap.iter().map(|s| s.error).sum();
    if total_err <= tol.abs.max(tol.rel * total.abs()) {
        Ok(total)
    } else {
        Err(Error::Numerics(format!(
            "quadrature on [{a}, {b}] did not converge: estimate {total}, error {total_err}"
        )))
    }
}
