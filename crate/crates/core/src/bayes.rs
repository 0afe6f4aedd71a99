//! Posterior estimation of layer widths from ceded amounts.
//!
//! The contract is parameterized by widths `(d_0, d_1, ...)` with cut points
//! at their cumulative sums: nothing ceded on `[0, d_0)`, slope 1 on the
//! next width, flat on the one after, and so on. With three widths that is
//! `M_0 = d_0`, `M_1 = d_0 + d_1`, `M_2 = d_0 + d_1 + d_2`, ceding `x - d_0`
//! on `[M_0, M_1)`, `d_1` on `[M_1, M_2)` and `x + d_1 - M_2` beyond.

use statrs::distribution::{Continuous, ContinuousCDF, Exp, Gamma};
use std::fmt;
use std::str::FromStr;

use crate::contracts::{Contract, Piece};
use crate::distributions::ClaimDistribution;
use crate::error::{Error, Result};
use crate::numerics::rng_stream;

/// Distance within which a ceded value counts as sitting on a flat height.
pub const ATOM_TOLERANCE: f64 = 1e-9;

/// Prior on one positive parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    Exponential { mean: f64 },
    Gamma { shape: f64, rate: f64 },
}

impl Prior {
    pub fn exponential(mean: f64) -> Result<Self> {
        let p = Prior::Exponential { mean };
        p.validate()?;
        Ok(p)
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        let p = Prior::Gamma { shape, rate };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior::Exponential { mean } => mean > 0.0 && mean.is_finite(),
            Prior::Gamma { shape, rate } => shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "prior hyperparameters must be positive: {self}"
            )))
        }
    }

    fn with_dist<T>(&self, f: impl FnOnce(&dyn ContinuousLike) -> T) -> T {
        match *self {
            Prior::Exponential { mean } => f(&Exp::new(1.0 / mean).expect("validated")),
            Prior::Gamma { shape, rate } => f(&Gamma::new(shape, rate).expect("validated")),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.with_dist(|d| d.pdf_at(x))
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.with_dist(|d| d.quantile_at(p))
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Prior::Exponential { mean } => mean,
            Prior::Gamma { shape, rate } => shape / rate,
        }
    }

    pub fn std_dev(&self) -> f64 {
        match *self {
            Prior::Exponential { mean } => mean,
            Prior::Gamma { shape, rate } => shape.sqrt() / rate,
        }
    }
}

trait ContinuousLike {
    fn pdf_at(&self, x: f64) -> f64;
    fn quantile_at(&self, p: f64) -> f64;
}

impl<D: Continuous<f64, f64> + ContinuousCDF<f64, f64>> ContinuousLike for D {
    fn pdf_at(&self, x: f64) -> f64 {
        self.pdf(x)
    }
    fn quantile_at(&self, p: f64) -> f64 {
        self.inverse_cdf(p)
    }
}

impl fmt::Display for Prior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Prior::Exponential { mean } => write!(f, "exp({mean})"),
            Prior::Gamma { shape, rate } => write!(f, "gamma({shape},{rate})"),
        }
    }
}

impl FromStr for Prior {
    type Err = Error;

    /// `exp(mean)` or `gamma(shape,rate)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s
            .split_once('(')
            .ok_or_else(|| Error::Parse(format!("expected name(args): {s:?}")))?;
        let args: Vec<f64> = rest
            .strip_suffix(')')
            .ok_or_else(|| Error::Parse(format!("missing ')': {s:?}")))?
            .split(',')
            .map(|a| {
                a.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number in {s:?}")))
            })
            .collect::<Result<_>>()?;
        match (name.trim(), args.as_slice()) {
            ("exp", [m]) => Prior::exponential(*m),
            ("gamma", [a, b]) => Prior::gamma(*a, *b),
            _ => Err(Error::Parse(format!("unknown prior {s:?}"))),
        }
    }
}

/// Independent priors on the widths, plus an optional prior on the claim
/// scale (off by default: the claim distribution is treated as known).
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub widths: Vec<Prior>,
    pub scale: Option<Prior>,
}

impl PriorSpec {
    pub fn new(widths: Vec<Prior>) -> Result<Self> {
        if widths.is_empty() {
            return Err(Error::InvalidParameter("need at least one width prior".into()));
        }
        Ok(PriorSpec { widths, scale: None })
    }

    pub fn with_scale(mut self, prior: Prior) -> Self {
        self.scale = Some(prior);
        self
    }

    fn axes(&self) -> Vec<Prior> {
        let mut a = self.widths.clone();
        a.extend(self.scale);
        a
    }

    pub fn dims(&self) -> usize {
        self.widths.len() + usize::from(self.scale.is_some())
    }

    /// Parses `d0=exp(1),d1=exp(1),d2=gamma(2,3)`; names are optional and
    /// order is positional.
    pub fn parse(s: &str) -> Result<Self> {
        let mut widths = Vec::new();
        let mut depth = 0;
        let mut start = 0;
        let mut items = Vec::new();
        for (i, ch) in s.char_indices() {
            match ch {
                '(' => depth += 1,
                ')' => depth -= 1,
                ',' if depth == 0 => {
                    items.push(&s[start..i]);
                    start = i + 1;
                }
                _ => {}
            }
        }
        items.push(&s[start..]);
        for item in items.into_iter().filter(|i| !i.trim().is_empty()) {
            let spec = item.split_once('=').map_or(item, |(_, v)| v);
            widths.push(spec.parse()?);
        }
        PriorSpec::new(widths)
    }
}

/// Ceded-loss contract for the widths `d`.
pub fn width_contract(widths: &[f64]) -> Result<Contract> {
    if widths.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidParameter(format!("widths must be positive: {widths:?}")));
    }
    let cuts: Vec<f64> = widths
        .iter()
        .scan(0.0, |acc, &w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    Contract::alternating(&cuts)
}

fn obs_loglik(y: f64, pieces: &[Piece], dist: &ClaimDistribution) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::ImpossibleObservation(y));
    }
    for p in pieces {
        if p.slope == 0.0 {
            if (y - p.ceded_at_start).abs() <= ATOM_TOLERANCE {
                return Ok((dist.cdf(p.end) - dist.cdf(p.start)).ln());
            }
        } else if y > p.ceded_at_start && y < p.ceded_at_end() {
            return dist.ln_pdf(p.start + y - p.ceded_at_start);
        }
    }
    Err(Error::ImpossibleObservation(y))
}

/// Mixed atom + shifted-density log-likelihood of ceded values `y` under
/// widths `d`.
pub fn censored_loglik(y: &[f64], widths: &[f64], dist: &ClaimDistribution) -> Result<f64> {
    let pieces = width_contract(widths)?.pieces();
    let mut total = 0.0;
    for &v in y {
        total += obs_loglik(v, &pieces, dist)?;
    }
    Ok(total)
}

/// Claim distribution with its scale replaced (mean for the exponential).
pub fn rescaled(dist: &ClaimDistribution, scale: f64) -> Result<ClaimDistribution> {
    match dist {
        ClaimDistribution::Exponential { .. } => ClaimDistribution::exponential(scale),
        ClaimDistribution::Weibull { shape, .. } => ClaimDistribution::weibull(scale, *shape),
        ClaimDistribution::Empirical(_) => Err(Error::UnsupportedForEmpirical),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSettings {
    pub points_per_dim: usize,
    /// Lower and upper prior quantiles bounding each axis.
    pub lower_q: f64,
    pub upper_q: f64,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            points_per_dim: 64,
            lower_q: 0.0005,
            upper_q: 0.9995,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetropolisSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl MetropolisSettings {
    pub fn with_seed(seed: u64) -> Self {
        MetropolisSettings {
            iterations: 40_000,
            burn_in: 10_000,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PosteriorMethod {
    Grid(GridSettings),
    Metropolis(MetropolisSettings),
    /// Grid up to three dimensions, Metropolis beyond.
    Auto {
        grid: GridSettings,
        mcmc: MetropolisSettings,
    },
}

impl PosteriorMethod {
    pub fn auto(seed: u64) -> Self {
        PosteriorMethod::Auto {
            grid: GridSettings::default(),
            mcmc: MetropolisSettings::with_seed(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostics {
    Grid {
        points: usize,
        /// Prior mass inside the grid box (midpoint rule).
        prior_mass: f64,
    },
    Metropolis {
        acceptance: f64,
        /// Batch-means standard error of each posterior mean.
        std_error: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEstimate {
    /// Widths first, then the claim scale when it is estimated.
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Estimates after each outer round.
    pub trace: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl PosteriorEstimate {
    pub fn std_dev(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }

    pub fn widths(&self, n: usize) -> &[f64] {
        &self.mean[..n]
    }
}

fn log_target(y: &[f64], theta: &[f64], prior: &PriorSpec, dist: &ClaimDistribution) -> Result<f64> {
    let k = prior.widths.len();
    let dist = match prior.scale {
        Some(_) => rescaled(dist, theta[k])?,
        None => dist.clone(),
    };
    match censored_loglik(y, &theta[..k], &dist) {
        Ok(v) => Ok(v),
        Err(Error::ImpossibleObservation(_)) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// Posterior means and variances of the widths under squared-error loss.
pub fn posterior_mean(
    y: &[f64],
    prior: &PriorSpec,
    dist: &ClaimDistribution,
    method: PosteriorMethod,
) -> Result<PosteriorEstimate> {
    let est = match method {
        PosteriorMethod::Grid(g) => grid_posterior(y, prior, dist, g)?,
        PosteriorMethod::Metropolis(m) => metropolis_posterior(y, prior, dist, m)?,
        PosteriorMethod::Auto { grid, mcmc } => {
            if prior.dims() <= 3 {
                grid_posterior(y, prior, dist, grid)?
            } else {
                metropolis_posterior(y, prior, dist, mcmc)?
            }
        }
    };
    Ok(PosteriorEstimate {
        trace: vec![est.mean.clone()],
        ..est
    })
}

fn grid_posterior(
    y: &[f64],
    prior: &PriorSpec,
    dist: &ClaimDistribution,
    g: GridSettings,
) -> Result<PosteriorEstimate> {
    if g.points_per_dim < 1 || !(0.0 < g.lower_q && g.lower_q < g.upper_q && g.upper_q < 1.0) {
        return Err(Error::InvalidParameter("invalid grid settings".into()));
    }
    let axes = prior.axes();
    let dims = axes.len();
    let n = g.points_per_dim;
    // per-axis midpoints and log prior weights
    let mut nodes = Vec::with_capacity(dims);
    let mut log_w = Vec::with_capacity(dims);
    let mut prior_mass = 1.0;
    for a in &axes {
        let (lo, hi) = (a.quantile(g.lower_q), a.quantile(g.upper_q));
        let width = (hi - lo) / n as f64;
        let xs: Vec<f64> = (0..n).map(|i| lo + (i as f64 + 0.5) * width).collect();
        let ws: Vec<f64> = xs.iter().map(|&x| a.pdf(x) * width).collect();
        prior_mass *= ws.iter().sum::<f64>();
        log_w.push(ws.iter().map(|w| w.ln()).collect::<Vec<_>>());
        nodes.push(xs);
    }

    let total = n.pow(dims as u32);
    let mut log_post = Vec::with_capacity(total);
    let mut idx = vec![0usize; dims];
    let mut theta = vec![0.0; dims];
    for _ in 0..total {
        let mut lp = 0.0;
        for d in 0..dims {
            theta[d] = nodes[d][idx[d]];
            lp += log_w[d][idx[d]];
        }
        log_post.push(lp + log_target(y, &theta, prior, dist)?);
        for d in (0..dims).rev() {
            idx[d] += 1;
            if idx[d] < n {
                break;
            }
            idx[d] = 0;
        }
    }

    let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateData);
    }
    let mut z = 0.0;
    let mut m1 = vec![0.0; dims];
    let mut m2 = vec![0.0; dims];
    let mut idx = vec![0usize; dims];
    for lp in &log_post {
        let w = (lp - max).exp();
        z += w;
        for d in 0..dims {
            let x = nodes[d][idx[d]];
            m1[d] += w * x;
            m2[d] += w * x * x;
        }
        for d in (0..dims).rev() {
            idx[d] += 1;
            if idx[d] < n {
                break;
            }
            idx[d] = 0;
        }
    }
    let mean: Vec<f64> = m1.iter().map(|s| s / z).collect();
    let variance = m2.iter().zip(&mean).map(|(s, m)| (s / z - m * m).max(0.0)).collect();
    Ok(PosteriorEstimate {
        mean,
        variance,
        trace: Vec::new(),
        diagnostics: Diagnostics::Grid {
            points: total,
            prior_mass,
        },
    })
}

fn metropolis_posterior(
    y: &[f64],
    prior: &PriorSpec,
    dist: &ClaimDistribution,
    m: MetropolisSettings,
) -> Result<PosteriorEstimate> {
    if m.iterations < 100 {
        return Err(Error::InvalidParameter(
            "need at least 100 Metropolis iterations".into(),
        ));
    }
    let axes = prior.axes();
    let dims = axes.len();
    let log_post = |theta: &[f64]| -> Result<f64> {
        if theta.iter().any(|&t| t <= 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        let lp: f64 = axes.iter().zip(theta).map(|(a, &t)| a.pdf(t).ln()).sum();
        if lp == f64::NEG_INFINITY {
            return Ok(lp);
        }
        Ok(lp + log_target(y, theta, prior, dist)?)
    };

    let mut stream = rng_stream(m.seed, 0);
    let mut x: Vec<f64> = axes.iter().map(|a| a.quantile(0.5)).collect();
    let mut lx = log_post(&x)?;
    if lx == f64::NEG_INFINITY {
        // walk the prior quantiles until a point with support turns up
        for level in [0.25, 0.75, 0.1, 0.9, 0.01, 0.99] {
            x = axes.iter().map(|a| a.quantile(level)).collect();
            lx = log_post(&x)?;
            if lx > f64::NEG_INFINITY {
                break;
            }
        }
        if lx == f64::NEG_INFINITY {
            return Err(Error::DegenerateData);
        }
    }
    let base_step: Vec<f64> = axes.iter().map(|a| 0.1 * a.std_dev()).collect();
    let mut scale = 1.0;
    let mut accepted_window = 0usize;
    let mut accepted = 0usize;
    let kept = m.iterations;
    let mut draws: Vec<Vec<f64>> = Vec::with_capacity(kept);
    for it in 0..(m.burn_in + m.iterations) {
        let prop: Vec<f64> = x
            .iter()
            .zip(&base_step)
            .map(|(&xi, &s)| xi + scale * s * stream.standard_normal())
            .collect();
        let lp = log_post(&prop)?;
        let accept = lp > f64::NEG_INFINITY && (lp - lx >= 0.0 || stream.uniform_open().ln() < lp - lx);
        if accept {
            x = prop;
            lx = lp;
        }
        if it < m.burn_in {
            accepted_window += usize::from(accept);
            if (it + 1) % 100 == 0 {
                let rate = accepted_window as f64 / 100.0;
                if rate > 0.3 {
                    scale *= 1.25;
                } else if rate < 0.2 {
                    scale *= 0.8;
                }
                accepted_window = 0;
            }
        } else {
            accepted += usize::from(accept);
            draws.push(x.clone());
        }
    }

    let nd = draws.len() as f64;
    let mean: Vec<f64> = (0..dims)
        .map(|d| draws.iter().map(|t| t[d]).sum::<f64>() / nd)
        .collect();
    let variance: Vec<f64> = (0..dims)
        .map(|d| draws.iter().map(|t| (t[d] - mean[d]).powi(2)).sum::<f64>() / (nd - 1.0))
        .collect();
    let batches = 50;
    let per = draws.len() / batches;
    let std_error = (0..dims)
        .map(|d| {
            let bm: Vec<f64> = (0..batches)
                .map(|b| draws[b * per..(b + 1) * per].iter().map(|t| t[d]).sum::<f64>() / per as f64)
                .collect();
            let mu = bm.iter().sum::<f64>() / batches as f64;
            let v = bm.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
            (v / batches as f64).sqrt()
        })
        .collect();
    Ok(PosteriorEstimate {
        mean,
        variance,
        trace: Vec::new(),
        diagnostics: Diagnostics::Metropolis {
            acceptance: accepted as f64 / kept as f64,
            std_error,
        },
    })
}

/// Relative change below which the outer loop stops.
pub const ROUND_TOLERANCE: f64 = 1e-6;

/// Re-censors `x_raw` through the ladder of the current estimates, refits,
/// and repeats for up to `rounds` rounds or until the estimates stop moving.
pub fn iterate_estimation(
    x_raw: &[f64],
    prior: &PriorSpec,
    dist: &ClaimDistribution,
    init: &[f64],
    rounds: usize,
    method: PosteriorMethod,
) -> Result<PosteriorEstimate> {
    if rounds < 1 {
        return Err(Error::InvalidParameter("rounds must be >= 1".into()));
    }
    if init.len() != prior.widths.len() {
        return Err(Error::InvalidParameter(format!(
            "init has {} widths, prior has {}",
            init.len(),
            prior.widths.len()
        )));
    }
    let k = init.len();
    let mut current = init.to_vec();
    let mut trace = Vec::new();
    let mut last: Option<PosteriorEstimate> = None;
    for _ in 0..rounds {
        let contract = width_contract(&current)?;
        let y: Vec<f64> = x_raw.iter().map(|&x| contract.ceded(x)).collect();
        let est = posterior_mean(&y, prior, dist, method)?;
        let next = est.mean[..k].to_vec();
        trace.push(est.mean.clone());
        let change = next
            .iter()
            .zip(&current)
            .map(|(a, b)| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        current = next;
        last = Some(est);
        if change <= ROUND_TOLERANCE {
            break;
        }
    }
    let est = last.expect("rounds >= 1");
    Ok(PosteriorEstimate { trace, ..est })
}

/// Mean and between-repetition variance of each estimated parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedEstimate {
    pub estimates: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub rounds_used: Vec<usize>,
}

/// Independent repetitions: repetition `r` draws `n` claims from stream
/// `(seed, r)` and runs [`iterate_estimation`].
pub fn repeat_estimation(
    dist: &ClaimDistribution,
    prior: &PriorSpec,
    init: &[f64],
    n: usize,
    reps: usize,
    rounds: usize,
    seed: u64,
    grid: GridSettings,
) -> Result<RepeatedEstimate> {
    if reps < 1 {
        return Err(Error::InvalidParameter("reps must be >= 1".into()));
    }
    let mut estimates = Vec::with_capacity(reps);
    let mut rounds_used = Vec::with_capacity(reps);
    for r in 0..reps {
        let mut stream = rng_stream(seed, r as u64);
        let x = dist.sample_from(&mut stream, n);
        let method = PosteriorMethod::Auto {
            grid,
            mcmc: MetropolisSettings::with_seed(seed.wrapping_add(r as u64)),
        };
        let est = iterate_estimation(&x, prior, dist, init, rounds, method)?;
        rounds_used.push(est.trace.len());
        estimates.push(est.mean);
    }
    let dims = estimates[0].len();
    let nr = reps as f64;
    let mean: Vec<f64> = (0..dims)
        .map(|d| estimates.iter().map(|e| e[d]).sum::<f64>() / nr)
        .collect();
    let variance = (0..dims)
        .map(|d| {
            if reps < 2 {
                0.0
            } else {
                estimates.iter().map(|e| (e[d] - mean[d]).powi(2)).sum::<f64>() / (nr - 1.0)
            }
        })
        .collect();
    Ok(RepeatedEstimate {
        estimates,
        mean,
        variance,
        rounds_used,
    })
}
