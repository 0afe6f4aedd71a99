//! Multi-layer extensions of a base contract that keep a translative,
//! monotone risk measure of total risk unchanged, and their Monte Carlo
//! check on CTE and VaR.

use std::fmt;
use std::str::FromStr;

use crate::contracts::{Contract, Piece};
use crate::distributions::ClaimDistribution;
use crate::error::{Error, Result};
use crate::numerics::golden_section;
use crate::risk::{cte_from_samples, empirical_var};

/// Companion points of an extension: `f(M*_i) = level_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSolve {
    pub base: Contract,
    pub cuts: Vec<f64>,
    /// Solved `M*` points, one per flat.
    pub m_star: Vec<f64>,
    /// Flat heights the base must reach at each `M*`.
    pub levels: Vec<f64>,
}

impl ShiftSolve {
    /// `max_i |f(M*_i) - level_i|`.
    pub fn max_residual(&self) -> f64 {
        self.m_star
            .iter()
            .zip(&self.levels)
            .map(|(&m, &l)| (self.base.ceded(m) - l).abs())
            .fold(0.0, f64::max)
    }
}

/// Smallest `x >= from` with `f(x) >= level` (piecewise-linear inversion).
fn first_reach(f: &Contract, level: f64, from: f64, cap: f64) -> Result<f64> {
    if f.ceded(from) >= level {
        return Ok(from);
    }
    for p in f.pieces() {
        if p.end <= from || p.slope == 0.0 {
            continue;
        }
        let start = p.start.max(from);
        let at_start = p.ceded(start);
        if p.ceded_at_end() >= level {
            let x = start + (level - at_start) / p.slope;
            if x > cap {
                break;
            }
            return Ok(x);
        }
    }
    Err(Error::ExtensionInfeasible(format!(
        "base never reaches {level} between {from} and {cap}"
    )))
}

fn check_cuts(cuts: &[f64]) -> Result<()> {
    for w in cuts.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::LayerOrder(format!(
                "cuts must increase ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if cuts.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(Error::LayerOrder("cuts must be positive and finite".into()));
    }
    Ok(())
}

fn push(bps: &mut Vec<f64>, slopes: &mut Vec<f64>, x: f64, s: f64) {
    bps.push(x);
    slopes.push(s);
}

/// Base pieces restricted to `[lo, hi)`.
fn copy_base(bps: &mut Vec<f64>, slopes: &mut Vec<f64>, pieces: &[Piece], lo: f64, hi: f64) {
    for p in pieces {
        if p.end <= lo || p.start >= hi {
            continue;
        }
        push(bps, slopes, p.start.max(lo), p.slope);
    }
}

/// `g = f` on `[0, M_1)`; slope 1 on `[M_1, M_2)`; flat at
/// `M_2 - M_1 + f(M_1)` until `f` reaches it at `M*_2`; then slope 1 on
/// `[M*_i, M_{i+1})` and flat at `M_{i+1} - M*_i + f(M*_i)` until `M*_{i+1}`;
/// slope 1 after the last `M*`. `g >= f` everywhere.
pub fn build_preserving_extension(f: &Contract, cuts: &[f64], search_cap: f64) -> Result<(Contract, ShiftSolve)> {
    check_cuts(cuts)?;
    let mut solve = ShiftSolve {
        base: f.clone(),
        cuts: cuts.to_vec(),
        m_star: Vec::new(),
        levels: Vec::new(),
    };
    if cuts.is_empty() {
        return Ok((f.clone(), solve));
    }
    if cuts.len() == 1 {
        return Err(Error::InvalidParameter("need at least two cuts (or none)".into()));
    }
    let pieces = f.pieces();
    let mut bps = Vec::new();
    let mut slopes = Vec::new();
    copy_base(&mut bps, &mut slopes, &pieces, 0.0, cuts[0]);
    if bps.is_empty() {
        push(&mut bps, &mut slopes, 0.0, 1.0);
    }
    push(&mut bps, &mut slopes, cuts[0], 1.0);
    // start of the current slope-1 run and the base value there
    let (mut run_start, mut run_value) = (cuts[0], f.ceded(cuts[0]));
    for (i, &m) in cuts.iter().enumerate().skip(1) {
        let level = m - run_start + run_value;
        let m_star = first_reach(f, level, m, search_cap)?;
        if let Some(&next) = cuts.get(i + 1) {
            if m_star > next {
                return Err(Error::ExtensionInfeasible(format!(
                    "M*_{} = {m_star} passes the next cut {next}",
                    i + 1
                )));
            }
        }
        push(&mut bps, &mut slopes, m, 0.0);
        push(&mut bps, &mut slopes, m_star, 1.0);
        solve.m_star.push(m_star);
        solve.levels.push(level);
        run_start = m_star;
        run_value = f.ceded(m_star);
    }
    let g = Contract::general(&bps, &slopes)?;
    Ok((g, solve))
}

/// Extension built for the convex-combination criterion, with its
/// admissible `omega*` interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexExtension {
    pub contract: Contract,
    pub solve: ShiftSolve,
    /// Intervals `[M_{2j-1}, M*_{2j}]` making up `A`.
    pub admissible_set: Vec<(f64, f64)>,
    pub a_min: f64,
    pub a_max: f64,
    /// `a_min / (a_min + a_max)`.
    pub omega_upper: f64,
}

/// Cuts come in pairs `(M_{2j-1}, M_{2j})`: `g` follows `f`, runs with
/// slope 1 on `[M_{2j-1}, M_{2j})`, stays flat until `f` catches up at
/// `M*_{2j}`, then follows `f` again. `A` is the union of
/// `[M_{2j-1}, M*_{2j}]`, and `a_min`, `a_max` are the extremes of
/// `|2 f(x) - x|` over `A`.
pub fn build_convex_extension(f: &Contract, cuts: &[f64], omega_star: f64, search_cap: f64) -> Result<ConvexExtension> {
    check_cuts(cuts)?;
    if cuts.is_empty() {
        return Err(Error::EmptyAdmissibleSet);
    }
    if cuts.len() % 2 != 0 {
        return Err(Error::InvalidParameter("convex extension needs cuts in pairs".into()));
    }
    let pieces = f.pieces();
    let mut bps = Vec::new();
    let mut slopes = Vec::new();
    let mut solve = ShiftSolve {
        base: f.clone(),
        cuts: cuts.to_vec(),
        m_star: Vec::new(),
        levels: Vec::new(),
    };
    let mut set = Vec::new();
    let mut resume = 0.0;
    for pair in cuts.chunks(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if lo < resume {
            return Err(Error::ExtensionInfeasible(format!(
                "cut {lo} falls before the previous catch-up point {resume}"
            )));
        }
        copy_base(&mut bps, &mut slopes, &pieces, resume, lo);
        if bps.is_empty() {
            push(&mut bps, &mut slopes, 0.0, 1.0);
        }
        let level = hi - lo + f.ceded(lo);
        let m_star = first_reach(f, level, hi, search_cap)?;
        push(&mut bps, &mut slopes, lo, 1.0);
        push(&mut bps, &mut slopes, hi, 0.0);
        solve.m_star.push(m_star);
        solve.levels.push(level);
        set.push((lo, m_star));
        resume = m_star;
    }
    copy_base(&mut bps, &mut slopes, &pieces, resume, f64::INFINITY);
    let contract = Contract::general(&bps, &slopes)?;

    let (a_min, a_max) = extremes_on_set(f, &set)?;
    let omega_upper = if a_min + a_max > 0.0 {
        a_min / (a_min + a_max)
    } else {
        0.0
    };
    if !(omega_star > 0.0 && omega_star < omega_upper) {
        return Err(Error::OmegaOutOfBound {
            omega: omega_star,
            upper: omega_upper,
        });
    }
    Ok(ConvexExtension {
        contract,
        solve,
        admissible_set: set,
        a_min,
        a_max,
        omega_upper,
    })
}

/// Points per interval of `A` in the extreme search.
pub const EXTREME_GRID: usize = 4096;

/// Min and max of `|2 f(x) - x|` on a union of closed intervals.
pub fn extremes_on_set(f: &Contract, set: &[(f64, f64)]) -> Result<(f64, f64)> {
    extremes_with_grid(f, set, EXTREME_GRID)
}

pub fn extremes_with_grid(f: &Contract, set: &[(f64, f64)], points: usize) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Err(Error::EmptyAdmissibleSet);
    }
    let a = |x: f64| (2.0 * f.ceded(x) - x).abs();
    let mut lo_best = (f64::INFINITY, 0.0);
    let mut hi_best = (f64::NEG_INFINITY, 0.0);
    let mut cell = 0.0;
    for &(l, r) in set {
        let step = (r - l) / points as f64;
        cell = f64::max(cell, step);
        for i in 0..=points {
            let x = if i == points { r } else { l + step * i as f64 };
            let v = a(x);
            if v < lo_best.0 {
                lo_best = (v, x);
            }
            if v > hi_best.0 {
                hi_best = (v, x);
            }
        }
    }
    // refine inside the neighbouring cells, clamped to the owning interval
    let owner = |x: f64| set.iter().find(|(l, r)| *l <= x && x <= *r).copied().unwrap_or((x, x));
    let (l, r) = owner(lo_best.1);
    let (ll, rr) = ((lo_best.1 - cell).max(l), (lo_best.1 + cell).min(r));
    let (_, refined_min) = golden_section(a, ll, rr, 1e-12)?;
    let (l, r) = owner(hi_best.1);
    let (ll, rr) = ((hi_best.1 - cell).max(l), (hi_best.1 + cell).min(r));
    let (_, neg_max) = golden_section(|x| -a(x), ll, rr, 1e-12)?;
    Ok((lo_best.0.min(refined_min), hi_best.0.max(-neg_max)))
}

/// Sample-based risk measure on total risk.
#[derive(Clone)]
pub enum RiskMeasure {
    Cte {
        alpha: f64,
    },
    Var {
        alpha: f64,
    },
    /// User estimate from a sample list.
    Custom {
        name: String,
        estimate: std::sync::Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for RiskMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for RiskMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RiskMeasure::Cte { alpha } => write!(f, "cte:{alpha}"),
            RiskMeasure::Var { alpha } => write!(f, "var:{alpha}"),
            RiskMeasure::Custom { name, .. } => write!(f, "custom:{name}"),
        }
    }
}

impl FromStr for RiskMeasure {
    type Err = Error;

    /// `cte:0.1` or `var:0.1`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, level) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("expected cte:<alpha> or var:<alpha>, got {s:?}")))?;
        let alpha: f64 = level
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad level in {s:?}")))?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Parse(format!("level {alpha} outside (0, 1)")));
        }
        match kind.trim() {
            "cte" => Ok(RiskMeasure::Cte { alpha }),
            "var" => Ok(RiskMeasure::Var { alpha }),
            other => Err(Error::Parse(format!("unknown risk measure {other:?}"))),
        }
    }
}

impl RiskMeasure {
    pub fn evaluate(&self, samples: &[f64]) -> Result<f64> {
        match self {
            RiskMeasure::Cte { alpha } => Ok(cte_from_samples(samples, *alpha)?.value),
            RiskMeasure::Var { alpha } => empirical_var(samples, *alpha),
            RiskMeasure::Custom { estimate, .. } => Ok(estimate(samples)),
        }
    }

    /// `rho(s + 1) - rho(s) = 1` on a shifted copy of `samples`.
    pub fn translative_on(&self, samples: &[f64]) -> Result<bool> {
        let shifted: Vec<f64> = samples.iter().map(|v| v + 1.0).collect();
        let base = self.evaluate(samples)?;
        let moved = self.evaluate(&shifted)?;
        Ok(((moved - base) - 1.0).abs() <= 1e-9 * base.abs().max(1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoVerification {
    pub rho_f: f64,
    pub rho_g: f64,
    /// `rho_g - rho_f`.
    pub diff: f64,
    /// Batch-means standard error of `diff`.
    pub std_error: f64,
    pub samples: usize,
    pub pass: bool,
    /// Translativity spot-check (custom measures only; always true otherwise).
    pub translative: bool,
}

/// Batches used for the standard error in [`mc_verify_rho`].
pub const BATCHES: usize = 50;

/// Estimates `rho(X - f(X) + premium)` and `rho(X - g(X) + premium)` on one
/// shared sample; passes when `|diff| <= 3 SE`.
pub fn mc_verify_rho(
    f: &Contract,
    g: &Contract,
    dist: &ClaimDistribution,
    rho: &RiskMeasure,
    premium: f64,
    n: usize,
    seed: u64,
) -> Result<RhoVerification> {
    if n < BATCHES * 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least {} samples",
            BATCHES * 2
        )));
    }
    let xs = dist.sample(n, seed);
    let tf: Vec<f64> = xs.iter().map(|&x| f.retained(x) + premium).collect();
    let tg: Vec<f64> = xs.iter().map(|&x| g.retained(x) + premium).collect();
    let rho_f = rho.evaluate(&tf)?;
    let rho_g = rho.evaluate(&tg)?;
    let per = n / BATCHES;
    let mut diffs = Vec::with_capacity(BATCHES);
    for b in 0..BATCHES {
        let range = b * per..(b + 1) * per;
        diffs.push(rho.evaluate(&tg[range.clone()])? - rho.evaluate(&tf[range])?);
    }
    let mean = diffs.iter().sum::<f64>() / BATCHES as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (BATCHES as f64 - 1.0);
    let std_error = (var / BATCHES as f64).sqrt();
    let diff = rho_g - rho_f;
    let translative = match rho {
        RiskMeasure::Custom { .. } => rho.translative_on(&tf)?,
        _ => true,
    };
    Ok(RhoVerification {
        rho_f,
        rho_g,
        diff,
        std_error,
        samples: n,
        pass: diff.abs() <= 3.0 * std_error,
        translative,
    })
}

/// A contract that is not produced by the construction: slope 1 on
/// `[d/2, 3d/4)`, flat until `5d/4`, then `x - d`. It cedes below `d`.
pub fn below_deductible_flat(d: f64) -> Result<Contract> {
    Contract::alternating(&[0.5 * d, 0.75 * d, 1.25 * d])
}
