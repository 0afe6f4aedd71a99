use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Absolute edge length of the initial simplex around each start.
    pub initial_step: f64,
    pub xtol: f64,
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            initial_step: 0.25,
            xtol: 1e-6,
            ftol: 1e-10,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Index into the `starts` slice that produced the optimum.
    pub start_index: usize,
}

/// Nelder-Mead minimization from every start; returns the best run.
///
/// Ties are broken by start order, so the result does not depend on how
/// the runs are scheduled.
pub fn minimize_simplex<F: Fn(&[f64]) -> f64>(
    f: F,
    starts: &[Vec<f64>],
    opts: SimplexOptions,
) -> Result<SimplexResult> {
    if opts.max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
    }
    if starts.is_empty() {
        return Err(Error::InvalidParameter("at least one start is required".into()));
    }
    let dim = starts[0].len();
    if dim == 0 || starts.iter().any(|s| s.len() != dim) {
        return Err(Error::InvalidParameter("starts must share a nonzero dimension".into()));
    }

    let mut best: Option<SimplexResult> = None;
    for (i, start) in starts.iter().enumerate() {
        let mut run = nelder_mead(&f, start, &opts);
        run.start_index = i;
        let better = match &best {
            None => true,
            Some(b) => run.value < b.value,
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("starts is non-empty"))
}

fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64], opts: &SimplexOptions) -> SimplexResult {
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;

    let n = start.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut evaluations = 0usize;
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), eval(start)));
    evaluations += 1;
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += opts.initial_step;
        let v = eval(&p);
        evaluations += 1;
        simplex.push((p, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread_f = simplex
            .iter()
            .skip(1)
            .map(|p| (p.1 - simplex[0].1).abs())
            .fold(0.0, f64::max);
        let spread_x = simplex
            .iter()
            .skip(1)
            .flat_map(|p| p.0.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread_x <= opts.xtol && spread_f <= opts.ftol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (p, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(p) {
                *c += x / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(REFLECT);
        let fr = eval(&xr);
        evaluations += 1;
        if fr < simplex[0].1 {
            let xe = along(EXPAND);
            let fe = eval(&xe);
            evaluations += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(CONTRACT * REFLECT);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-CONTRACT);
            let fc = eval(&xc);
            (xc, fc)
        };
        evaluations += 1;
        if fc < fr.min(simplex[n].1) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for p in simplex.iter_mut().skip(1) {
            for (x, b) in p.0.iter_mut().zip(&best) {
                *x = b + SHRINK * (*x - b);
            }
            p.1 = eval(&p.0);
            evaluations += 1;
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    SimplexResult {
        x,
        value,
        iterations,
        evaluations,
        converged,
        start_index: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_quadratic() {
        let r = minimize_simplex(
            |c| (c[0] - 0.8).powi(2),
            &[vec![0.1]],
            SimplexOptions {
                initial_step: 0.1,
                xtol: 1e-9,
                ftol: 1e-16,
                max_iter: 1000,
            },
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock_smoke() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize_simplex(
            rosen,
            &[vec![-1.2, 1.0]],
            SimplexOptions {
                initial_step: 0.1,
                xtol: 1e-10,
                ftol: 1e-14,
                max_iter: 5000,
            },
        )
        .unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4, "{:?}", r.x);
        assert!((r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn zero_iterations_rejected() {
        let r = minimize_simplex(
            |x| x[0],
            &[vec![0.0]],
            SimplexOptions {
                max_iter: 0,
                ..SimplexOptions::default()
            },
        );
        assert!(r.is_err());
    }

    #[test]
    fn best_start_wins() {
        // two basins; the second start sits in the deeper one
        let f = |x: &[f64]| ((x[0] - 1.0).powi(2) * (x[0] + 2.0).powi(2)) - 0.1 * x[0];
        let r = minimize_simplex(f, &[vec![-2.5], vec![1.5]], SimplexOptions::default()).unwrap();
        assert_eq!(r.start_index, 1);
    }
}
