//! Risk functionals of a (distribution, contract) pair: moments, VaR/CTE of
//! the insurer's total risk `T = X - h(X) + premium`, the variance and
//! exponential-utility combinations, and closed-form ladder oracles.

use serde::{Deserialize, Serialize};

use crate::contracts::{Contract, LadderParams, Piece};
use crate::distributions::ClaimDistribution;
use crate::error::{Error, Result};
use crate::numerics::{golden_section, integrate, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Ceded,
    Retained,
}

/// Pieces of `h` (ceded) or `x - h` (retained).
fn side_pieces(c: &Contract, side: Side) -> Vec<Piece> {
    let pieces = c.pieces();
    match side {
        Side::Ceded => pieces,
        Side::Retained => pieces
            .into_iter()
            .map(|p| Piece {
                start: p.start,
                end: p.end,
                slope: 1.0 - p.slope,
                ceded_at_start: p.start - p.ceded_at_start,
            })
            .collect(),
    }
}

fn side_value(c: &Contract, side: Side, x: f64) -> f64 {
    match side {
        Side::Ceded => c.ceded(x),
        Side::Retained => c.retained(x),
    }
}

/// `E[h(X)]` as the sum of survival integrals over the sloped pieces.
pub fn expected_ceded(dist: &ClaimDistribution, c: &Contract) -> Result<f64> {
    expected_side(dist, c, Side::Ceded)
}

pub fn expected_retained(dist: &ClaimDistribution, c: &Contract) -> Result<f64> {
    expected_side(dist, c, Side::Retained)
}

fn expected_side(dist: &ClaimDistribution, c: &Contract, side: Side) -> Result<f64> {
    let mut total = 0.0;
    for p in side_pieces(c, side) {
        if p.slope != 0.0 {
            total += p.slope * dist.tail_integral(p.start, p.end)?;
        }
    }
    Ok(total)
}

/// `E[(v(X) - v(q))_+]` for the nondecreasing side function `v`.
fn upper_partial(dist: &ClaimDistribution, c: &Contract, side: Side, q: f64) -> Result<f64> {
    let mut total = 0.0;
    for p in side_pieces(c, side) {
        if p.slope == 0.0 || p.end <= q {
            continue;
        }
        total += p.slope * dist.tail_integral(p.start.max(q), p.end)?;
    }
    Ok(total)
}

fn second_moment(dist: &ClaimDistribution, c: &Contract, side: Side) -> Result<f64> {
    let kinks = c.breakpoints();
    dist.expect(
        |x| side_value(c, side, x).powi(2),
        |x| {
            let slope = match side {
                Side::Ceded => c.slope_at(x),
                Side::Retained => 1.0 - c.slope_at(x),
            };
            2.0 * side_value(c, side, x) * slope
        },
        &kinks,
    )
}

fn variance_side(dist: &ClaimDistribution, c: &Contract, side: Side) -> Result<f64> {
    if let (Some(share), false) = (c.proportional_share(), dist.is_empirical()) {
        let s = if side == Side::Ceded { share } else { 1.0 - share };
        return Ok(s * s * dist.variance());
    }
    let m1 = expected_side(dist, c, side)?;
    let m2 = second_moment(dist, c, side)?;
    Ok((m2 - m1 * m1).max(0.0))
}

pub fn var_ceded(dist: &ClaimDistribution, c: &Contract) -> Result<f64> {
    variance_side(dist, c, Side::Ceded)
}

pub fn var_retained(dist: &ClaimDistribution, c: &Contract) -> Result<f64> {
    variance_side(dist, c, Side::Retained)
}

/// `Q = omega Var(h(X)) + (1 - omega) Var(X - h(X))`.
pub fn q_combination(dist: &ClaimDistribution, c: &Contract, omega: f64) -> Result<f64> {
    check_omega(omega)?;
    Ok(omega * var_ceded(dist, c)? + (1.0 - omega) * var_retained(dist, c)?)
}

fn check_omega(omega: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::InvalidParameter(format!("omega {omega} outside [0, 1]")));
    }
    Ok(())
}

/// Best proportional share for the variance combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProportionalOptimum {
    /// Numerical argmin over `c in [0, 1]`.
    pub share: f64,
    /// `Q* / Var(X)` at `share`.
    pub factor: f64,
    /// Calculus answer `1 - omega`.
    pub closed_form_share: f64,
    /// The `1 / (1 + omega)` share quoted in the source, kept for display.
    pub quoted_share: f64,
    /// `Q / Var(X)` at the quoted share.
    pub quoted_factor: f64,
}

impl ProportionalOptimum {
    pub fn q_star(&self, dist: &ClaimDistribution) -> f64 {
        self.factor * dist.variance()
    }
}

pub fn optimal_proportional_q(omega: f64) -> Result<ProportionalOptimum> {
    check_omega(omega)?;
    let factor = |c: f64| omega * c * c + (1.0 - omega) * (1.0 - c) * (1.0 - c);
    let (share, value) = golden_section(factor, 0.0, 1.0, 1e-10)?;
    let quoted_share = 1.0 / (1.0 + omega);
    Ok(ProportionalOptimum {
        share,
        factor: value,
        closed_form_share: 1.0 - omega,
        quoted_share,
        quoted_factor: factor(quoted_share),
    })
}

/// `E[exp(t v(X))]` for `v` = ceded or retained, via
/// `1 + sum over sloped pieces of int t s e^{t v(x)} S(x) dx`.
pub fn mgf_of(dist: &ClaimDistribution, c: &Contract, side: Side, t: f64) -> Result<f64> {
    if let ClaimDistribution::Empirical(s) = dist {
        return Ok(s.mean_of(|x| (t * side_value(c, side, x)).exp()));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let pieces = side_pieces(c, side);
    let last = pieces.last().expect("non-empty");
    if t * last.slope > 0.0 && t * last.slope >= dist.mgf_abscissa() {
        return Err(Error::Domain(format!(
            "t = {t} is beyond the MGF abscissa {} of {dist}",
            dist.mgf_abscissa() / last.slope
        )));
    }
    let mut total = 1.0;
    for p in &pieces {
        if p.slope == 0.0 {
            continue;
        }
        total += band_mgf_term(dist, p, t)?;
    }
    Ok(total)
}

/// `int_a^b t s exp(t (v + s (x - a))) S(x) dx` for one piece.
fn band_mgf_term(dist: &ClaimDistribution, p: &Piece, t: f64) -> Result<f64> {
    let (a, b, s, v) = (p.start, p.end, p.slope, p.ceded_at_start);
    match dist {
        ClaimDistribution::Exponential { mean } => {
            let lambda = 1.0 / mean;
            let kappa = t * s - lambda;
            let scale = t * s * (t * v - lambda * a).exp();
            let width = b - a;
            let integral = if b.is_infinite() {
                -1.0 / kappa
            } else if kappa == 0.0 {
                width
            } else {
                (kappa * width).exp_m1() / kappa
            };
            Ok(scale * integral)
        }
        _ => {
            let top = b.min(dist.upper_cap());
            if top <= a {
                return Ok(0.0);
            }
            integrate(
                |x| t * s * (t * (v + s * (x - a))).exp() * dist.survival(x),
                a,
                top,
                Tolerance::quadrature(),
            )
        }
    }
}

/// `omega E[e^{-beta h(X)}] + (1 - omega) E[e^{-beta (X - h(X))}]`.
pub fn utility_combination(dist: &ClaimDistribution, c: &Contract, omega: f64, beta: f64) -> Result<f64> {
    check_omega(omega)?;
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be > 0, got {beta}")));
    }
    Ok(omega * mgf_of(dist, c, Side::Ceded, -beta)? + (1.0 - omega) * mgf_of(dist, c, Side::Retained, -beta)?)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// `VaR_alpha(T)`, the `(1 - alpha)`-quantile of `X - h(X) + premium`.
pub fn var_total(dist: &ClaimDistribution, c: &Contract, alpha: f64, premium: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let q = dist.quantile(1.0 - alpha)?;
    Ok(c.retained(q) + premium)
}

/// Exact `CTE_alpha(T) = VaR + E[(T - VaR)_+] / alpha`.
pub fn cte_total(dist: &ClaimDistribution, c: &Contract, alpha: f64, premium: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let q = dist.quantile(1.0 - alpha)?;
    Ok(c.retained(q) + premium + upper_partial(dist, c, Side::Retained, q)? / alpha)
}

/// Exact `CTE_alpha(h(X))`.
pub fn cte_ceded(dist: &ClaimDistribution, c: &Contract, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let q = dist.quantile(1.0 - alpha)?;
    Ok(c.ceded(q) + upper_partial(dist, c, Side::Ceded, q)? / alpha)
}

/// Monte Carlo CTE with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CteEstimate {
    pub value: f64,
    pub var: f64,
    pub std_error: f64,
    pub samples: usize,
    /// No sample strictly above VaR; `value` falls back to VaR.
    pub degenerate: bool,
}

/// Type-1 empirical `(1 - alpha)`-quantile of `values`.
pub fn empirical_var(values: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if values.is_empty() {
        return Err(Error::DegenerateData);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = ((n as f64 * (1.0 - alpha) - 1e-9).ceil() as usize).clamp(1, n);
    Ok(sorted[k - 1])
}

/// `VaR + mean((v - VaR)_+) / alpha` with `SE = sd(psi) / sqrt(n)` for
/// `psi_i = VaR + (v_i - VaR)_+ / alpha`.
pub fn cte_from_samples(values: &[f64], alpha: f64) -> Result<CteEstimate> {
    let var = empirical_var(values, alpha)?;
    let n = values.len() as f64;
    let psi = values.iter().map(|&v| var + (v - var).max(0.0) / alpha);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for p in psi {
        sum += p;
        sum_sq += p * p;
    }
    let mean = sum / n;
    let sd = if values.len() > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0).sqrt()
    } else {
        0.0
    };
    Ok(CteEstimate {
        value: mean,
        var,
        std_error: sd / n.sqrt(),
        samples: values.len(),
        degenerate: !values.iter().any(|&v| v > var),
    })
}

/// Sample size and seed for Monte Carlo estimates. There is no default seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McSettings {
    pub samples: usize,
    pub seed: u64,
}

impl McSettings {
    pub const DEFAULT_SAMPLES: usize = 1_000_000;

    pub fn new(samples: usize, seed: u64) -> Result<Self> {
        if samples < 2 {
            return Err(Error::InvalidParameter("need at least 2 samples".into()));
        }
        Ok(McSettings { samples, seed })
    }

    pub fn with_seed(seed: u64) -> Self {
        McSettings {
            samples: Self::DEFAULT_SAMPLES,
            seed,
        }
    }
}

pub fn cte_total_mc(
    dist: &ClaimDistribution,
    c: &Contract,
    alpha: f64,
    premium: f64,
    mc: McSettings,
) -> Result<CteEstimate> {
    let xs = dist.sample(mc.samples, mc.seed);
    let totals: Vec<f64> = xs.iter().map(|&x| c.retained(x) + premium).collect();
    cte_from_samples(&totals, alpha)
}

pub fn cte_ceded_mc(dist: &ClaimDistribution, c: &Contract, alpha: f64, mc: McSettings) -> Result<CteEstimate> {
    let xs = dist.sample(mc.samples, mc.seed);
    let ceded: Vec<f64> = xs.iter().map(|&x| c.ceded(x)).collect();
    cte_from_samples(&ceded, alpha)
}

/// Ladder expectation written band by band:
/// `int_{M*_0}^{M*_1} S + sum_{j=1}^{L-1} int_{M*_{2j}}^{M*_{2j+1}} S
///  + int_{M*_{2L}}^inf x dF - M*_{2L} S(M*_{2L})`.
pub fn expected_ceded_closed_form(p: &LadderParams, dist: &ClaimDistribution) -> Result<f64> {
    if dist.is_empirical() {
        return Err(Error::UnsupportedForEmpirical);
    }
    let ms = p.m_star();
    let l = p.layers();
    let tol = Tolerance::quadrature();
    let mut total = 0.0;
    for j in 0..l {
        total += integrate(|x| dist.survival(x), ms[2 * j], ms[2 * j + 1], tol)?;
    }
    let last = ms[2 * l];
    let cap = dist.upper_cap().max(last);
    let tail = integrate(|x| x * dist.pdf(x).unwrap_or(0.0), last, cap, tol)?;
    Ok(total + tail - last * dist.survival(last))
}

/// Heights reached after each full band: `H_0 = 0`, `H_j = sum_{i<j} (M*_{2i+1} - M*_{2i})`.
fn band_heights(ms: &[f64], layers: usize) -> Vec<f64> {
    let mut h = vec![0.0];
    for j in 0..layers {
        h.push(h[j] + ms[2 * j + 1] - ms[2 * j]);
    }
    h
}

/// Ceded-loss MGF of a ladder in closed form:
/// `1 - e^{t H_L} S(M*_{2L}) + sum_{j<L} int_{M*_{2j}}^{M*_{2j+1}} t e^{t(x + H_j - M*_{2j})} S(x) dx
///  + int_{M*_{2L}}^inf e^{t(x + H_L - M*_{2L})} dF(x)`.
pub fn mgf_ceded(p: &LadderParams, dist: &ClaimDistribution, t: f64) -> Result<f64> {
    if dist.is_empirical() {
        return Err(Error::UnsupportedForEmpirical);
    }
    if t > 0.0 && t >= dist.mgf_abscissa() {
        return Err(Error::Domain(format!(
            "t = {t} is beyond the MGF abscissa {} of {dist}",
            dist.mgf_abscissa()
        )));
    }
    let ms = p.m_star();
    let l = p.layers();
    let h = band_heights(&ms, l);
    let tol = Tolerance::quadrature();
    let last = ms[2 * l];
    let mut total = 1.0 - (t * h[l]).exp() * dist.survival(last);
    for j in 0..l {
        let (a, b, hj) = (ms[2 * j], ms[2 * j + 1], h[j]);
        total += integrate(|x| t * (t * (x + hj - a)).exp() * dist.survival(x), a, b, tol)?;
    }
    let cap = dist.upper_cap().max(last);
    total += integrate(
        |x| (t * (x + h[l] - last)).exp() * dist.pdf(x).unwrap_or(0.0),
        last,
        cap,
        tol,
    )?;
    Ok(total)
}

/// Retained-loss MGF of a ladder in closed form:
/// `S(0) - e^{t R} S(M*_{2L}) + int_0^{M*_0} t e^{tx} S
///  + sum_{j=1}^{L} int_{M*_{2j-1}}^{M*_{2j}} t e^{t(x - H_j)} S + e^{t R} S(M*_{2L})`
/// with `R = M*_{2L} - H_L` the retention cap.
pub fn mgf_retained(p: &LadderParams, dist: &ClaimDistribution, t: f64) -> Result<f64> {
    if dist.is_empirical() {
        return Err(Error::UnsupportedForEmpirical);
    }
    let ms = p.m_star();
    let l = p.layers();
    let h = band_heights(&ms, l);
    let tol = Tolerance::quadrature();
    let last = ms[2 * l];
    let cap_term = (t * (last - h[l])).exp() * dist.survival(last);
    // F(0) covers an atom at zero
    let mut total = dist.cdf(0.0) + dist.survival(0.0) - cap_term + cap_term;
    total += integrate(|x| t * (t * x).exp() * dist.survival(x), 0.0, ms[0], tol)?;
    for j in 1..=l {
        let (a, b, hj) = (ms[2 * j - 1], ms[2 * j], h[j]);
        total += integrate(|x| t * (t * (x - hj)).exp() * dist.survival(x), a, b, tol)?;
    }
    Ok(total)
}

/// One row of risk output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub dist: String,
    pub contract_id: String,
    pub alpha: f64,
    pub omega: f64,
    pub beta: f64,
    pub premium: f64,
    pub e_ceded: f64,
    pub var_ceded: f64,
    pub var_retained: f64,
    pub var_level: f64,
    pub cte_total: f64,
    pub cte_ceded: f64,
    pub q: f64,
    pub u: f64,
}

impl RiskReport {
    pub const COLUMNS: [&'static str; 14] = [
        "dist",
        "contract_id",
        "alpha",
        "omega",
        "beta",
        "premium",
        "e_ceded",
        "var_ceded",
        "var_retained",
        "var_level",
        "cte_total",
        "cte_ceded",
        "q",
        "u",
    ];

    /// Full report with the expectation-principle premium `E[h(X)]`
    /// unless `premium` is given.
    pub fn compute(
        dist: &ClaimDistribution,
        c: &Contract,
        alpha: f64,
        omega: f64,
        beta: f64,
        premium: Option<f64>,
    ) -> Result<Self> {
        let e_ceded = expected_ceded(dist, c)?;
        let premium = premium.unwrap_or(e_ceded);
        let var_c = var_ceded(dist, c)?;
        let var_r = var_retained(dist, c)?;
        Ok(RiskReport {
            dist: dist.to_string(),
            contract_id: c.label(),
            alpha,
            omega,
            beta,
            premium,
            e_ceded,
            var_ceded: var_c,
            var_retained: var_r,
            var_level: dist.quantile(1.0 - alpha)?,
            cte_total: cte_total(dist, c, alpha, premium)?,
            cte_ceded: cte_ceded(dist, c, alpha)?,
            q: omega * var_c + (1.0 - omega) * var_r,
            u: utility_combination(dist, c, omega, beta)?,
        })
    }

    /// Values in column order, full precision.
    pub fn values(&self) -> Vec<String> {
        let nums = [
            self.alpha,
            self.omega,
            self.beta,
            self.premium,
            self.e_ceded,
            self.var_ceded,
            self.var_retained,
            self.var_level,
            self.cte_total,
            self.cte_ceded,
            self.q,
            self.u,
        ];
        let mut out = vec![self.dist.clone(), self.contract_id.clone()];
        out.extend(nums.iter().map(|v| v.to_string()));
        out
    }
}
