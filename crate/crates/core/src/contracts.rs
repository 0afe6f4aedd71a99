//! Ceded-loss functions `h`, the layer-extension step and the closed-form
//! k-layer ladder.
//!
//! A [`Contract`] is continuous, starts at `h(0) = 0` and has slopes in
//! `[0, 1]` (in practice `{0, 1}`, a single proportional slope `c`, or a
//! mix of those), so both `h` and `x - h(x)` are nondecreasing.

use std::fmt;
use std::str::FromStr;

use crate::distributions::ClaimDistribution;
use crate::error::{Error, Result};

/// One linear piece `[start, end)` of a contract.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub start: f64,
    /// `f64::INFINITY` for the last piece.
    pub end: f64,
    pub slope: f64,
    /// Ceded amount at `start`.
    pub ceded_at_start: f64,
}

impl Piece {
    pub fn ceded(&self, x: f64) -> f64 {
        self.ceded_at_start + self.slope * (x - self.start)
    }

    pub fn ceded_at_end(&self) -> f64 {
        if self.end.is_infinite() {
            if self.slope == 0.0 {
                self.ceded_at_start
            } else {
                f64::INFINITY
            }
        } else {
            self.ceded(self.end)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Piecewise {
        breakpoints: Vec<f64>,
        slopes: Vec<f64>,
        values: Vec<f64>,
    },
    Proportional(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contract {
    repr: Repr,
}

impl Contract {
    /// Builds a `{0,1}`-slope contract from `breakpoints` (starting at 0,
    /// nondecreasing) and one slope per piece. Zero-length pieces are
    /// dropped and consecutive equal slopes merged.
    pub fn from_pieces(breakpoints: &[f64], slopes: &[f64]) -> Result<Self> {
        if let Some(s) = slopes.iter().find(|&&s| s != 0.0 && s != 1.0) {
            return Err(Error::InvalidParameter(format!("slope {s} not in {{0, 1}}")));
        }
        Contract::general(breakpoints, slopes)
    }

    /// Like [`Contract::from_pieces`] but any slope in `[0, 1]` is allowed,
    /// e.g. a proportional piece followed by layers.
    pub fn general(breakpoints: &[f64], slopes: &[f64]) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != slopes.len() {
            return Err(Error::InvalidParameter(format!(
                "need one slope per breakpoint ({} breakpoints, {} slopes)",
                breakpoints.len(),
                slopes.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "first breakpoint must be 0, got {}",
                breakpoints[0]
            )));
        }
        for w in breakpoints.windows(2) {
            if !(w[1] >= w[0]) || !w[1].is_finite() {
                return Err(Error::LayerOrder(format!(
                    "breakpoints must be nondecreasing and finite ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if let Some(s) = slopes.iter().find(|&&s| !(0.0..=1.0).contains(&s)) {
            return Err(Error::InvalidParameter(format!("slope {s} outside [0, 1]")));
        }

        let mut bps: Vec<f64> = Vec::with_capacity(breakpoints.len());
        let mut sls: Vec<f64> = Vec::with_capacity(slopes.len());
        for (i, (&x, &s)) in breakpoints.iter().zip(slopes).enumerate() {
            let zero_length = breakpoints.get(i + 1).is_some_and(|&next| next == x);
            if zero_length {
                continue;
            }
            if sls.last() == Some(&s) {
                continue;
            }
            // a surviving piece may start where a dropped one did
            if bps.last() == Some(&x) {
                sls.pop();
                bps.pop();
                if sls.last() == Some(&s) {
                    continue;
                }
            }
            bps.push(x);
            sls.push(s);
        }
        if bps.is_empty() || bps[0] != 0.0 {
            bps.insert(0, 0.0);
            sls.insert(0, *slopes.last().expect("non-empty"));
        }
        if sls.len() == 1 && sls[0] > 0.0 && sls[0] < 1.0 {
            return Ok(Contract {
                repr: Repr::Proportional(sls[0]),
            });
        }
        let mut values = Vec::with_capacity(bps.len());
        let mut acc = 0.0;
        for i in 0..bps.len() {
            if i > 0 {
                acc += sls[i - 1] * (bps[i] - bps[i - 1]);
            }
            values.push(acc);
        }
        Ok(Contract {
            repr: Repr::Piecewise {
                breakpoints: bps,
                slopes: sls,
                values,
            },
        })
    }

    /// `h(x) = max(x - d, 0)`.
    pub fn stop_loss(deductible: f64) -> Result<Self> {
        if !(deductible.is_finite() && deductible >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "deductible must be >= 0, got {deductible}"
            )));
        }
        Contract::from_pieces(&[0.0, deductible], &[0.0, 1.0])
    }

    /// `h(x) = c x`. Shares of exactly 0 or 1 are stored as `{0,1}`-slope
    /// contracts.
    pub fn proportional(share: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&share) {
            return Err(Error::InvalidParameter(format!("share {share} outside [0, 1]")));
        }
        if share == 0.0 || share == 1.0 {
            return Contract::from_pieces(&[0.0], &[share]);
        }
        Ok(Contract {
            repr: Repr::Proportional(share),
        })
    }

    /// No cession.
    pub fn none() -> Self {
        Contract::from_pieces(&[0.0], &[0.0]).expect("valid")
    }

    /// Slope 0 on `[0, cuts[0])`, then alternating 1, 0, 1, ... at each cut.
    pub fn alternating(cuts: &[f64]) -> Result<Self> {
        let mut bps = vec![0.0];
        let mut slopes = vec![0.0];
        for (i, &c) in cuts.iter().enumerate() {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::LayerOrder(format!("cut {c} is not a finite nonnegative number")));
            }
            bps.push(c);
            slopes.push(if i % 2 == 0 { 1.0 } else { 0.0 });
        }
        Contract::from_pieces(&bps, &slopes)
    }

    pub fn ceded(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        match &self.repr {
            Repr::Proportional(c) => c * x,
            Repr::Piecewise {
                breakpoints,
                slopes,
                values,
            } => {
                let i = breakpoints.partition_point(|&b| b <= x) - 1;
                values[i] + slopes[i] * (x - breakpoints[i])
            }
        }
    }

    pub fn retained(&self, x: f64) -> f64 {
        x.max(0.0) - self.ceded(x)
    }

    /// Slope of `h` just to the right of `x`.
    pub fn slope_at(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Proportional(c) => *c,
            Repr::Piecewise {
                breakpoints, slopes, ..
            } => slopes[breakpoints.partition_point(|&b| b <= x.max(0.0)) - 1],
        }
    }

    pub fn pieces(&self) -> Vec<Piece> {
        match &self.repr {
            Repr::Proportional(c) => vec![Piece {
                start: 0.0,
                end: f64::INFINITY,
                slope: *c,
                ceded_at_start: 0.0,
            }],
            Repr::Piecewise {
                breakpoints,
                slopes,
                values,
            } => (0..breakpoints.len())
                .map(|i| Piece {
                    start: breakpoints[i],
                    end: breakpoints.get(i + 1).copied().unwrap_or(f64::INFINITY),
                    slope: slopes[i],
                    ceded_at_start: values[i],
                })
                .collect(),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.repr {
            Repr::Proportional(_) => vec![0.0],
            Repr::Piecewise { breakpoints, .. } => breakpoints.clone(),
        }
    }

    pub fn last_breakpoint(&self) -> f64 {
        *self.breakpoints().last().expect("non-empty")
    }

    pub fn proportional_share(&self) -> Option<f64> {
        match self.repr {
            Repr::Proportional(c) => Some(c),
            Repr::Piecewise { .. } => None,
        }
    }

    /// `sup_x h(x)`, infinite unless the last piece is flat.
    pub fn max_ceded(&self) -> f64 {
        self.pieces().last().expect("non-empty").ceded_at_end()
    }

    /// Heights of the flat pieces (atoms of `h(X)` for a continuous `X`),
    /// paired with the `[start, end)` interval of claims mapped onto each.
    pub fn flats(&self) -> Vec<(f64, f64, f64)> {
        self.pieces()
            .into_iter()
            .filter(|p| p.slope == 0.0)
            .map(|p| (p.ceded_at_start, p.start, p.end))
            .collect()
    }

    /// Plain-text form: one `(breakpoint, slope)` pair per line.
    pub fn to_text(&self) -> String {
        self.pieces()
            .iter()
            .map(|p| format!("({}, {})\n", p.start, p.slope))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut bps = Vec::new();
        let mut slopes = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let inner = line.trim_start_matches('(').trim_end_matches(')');
            let (x, s) = inner
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("expected (breakpoint, slope): {line:?}")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("not a number: {v:?} in {line:?}")))
            };
            bps.push(parse(x)?);
            slopes.push(parse(s)?);
        }
        if bps.len() == 1 && bps[0] == 0.0 && slopes[0] > 0.0 && slopes[0] < 1.0 {
            return Contract::proportional(slopes[0]);
        }
        Contract::general(&bps, &slopes)
    }

    /// Short identifier used in report rows.
    pub fn label(&self) -> String {
        if let Some(c) = self.proportional_share() {
            return format!("prop:{c}");
        }
        let pieces = self.pieces();
        match pieces.as_slice() {
            [p] if p.slope == 0.0 => "none".into(),
            [p] if p.slope == 1.0 => "prop:1".into(),
            [a, b] if a.slope == 0.0 && b.slope == 1.0 => format!("stoploss:{}", b.start),
            _ => {
                let bps: Vec<String> = pieces.iter().skip(1).map(|p| format!("{}", p.start)).collect();
                format!("pl:{}", bps.join("/"))
            }
        }
    }

    /// Inverse of [`Contract::label`] for alternating contracts: `none`,
    /// `prop:c`, `stoploss:d`, `pl:b1/b2/...` (slope 0 first).
    pub fn from_label(s: &str) -> Result<Contract> {
        let s = s.trim();
        if s == "none" {
            return Ok(Contract::none());
        }
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("unknown contract label {s:?}")))?;
        let num = |v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {v:?} in {s:?}")))
        };
        match kind.trim() {
            "prop" => Contract::proportional(num(rest)?),
            "stoploss" => Contract::stop_loss(num(rest)?),
            "pl" => {
                let cuts = rest.split('/').map(num).collect::<Result<Vec<_>>>()?;
                Contract::alternating(&cuts)
            }
            other => Err(Error::Parse(format!("unknown contract kind {other:?}"))),
        }
    }
}

impl fmt::Display for Contract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for Contract {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Contract::from_text(s)
    }
}

/// Parameters of the equal-deductible k-layer ladder: base deductible `d`
/// and cut points `M_1 < ... < M_k` with `M_1 > d`, `M_{j+1} > M_j + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderParams {
    pub alpha: f64,
    pub deductible: f64,
    pub cuts: Vec<f64>,
}

impl LadderParams {
    pub fn new(alpha: f64, deductible: f64, cuts: Vec<f64>) -> Result<Self> {
        let p = LadderParams {
            alpha,
            deductible,
            cuts,
        };
        p.validate()?;
        Ok(p)
    }

    /// Cuts from gap widths: `M_1 = d + g_1`, `M_{j+1} = M_j + d + g_{j+1}`.
    pub fn from_gaps(alpha: f64, deductible: f64, gaps: &[f64]) -> Result<Self> {
        let mut cuts = Vec::with_capacity(gaps.len());
        let mut prev = 0.0;
        for &g in gaps {
            prev += deductible + g;
            cuts.push(prev);
        }
        LadderParams::new(alpha, deductible, cuts)
    }

    pub fn stop_loss(alpha: f64, deductible: f64) -> Result<Self> {
        LadderParams::new(alpha, deductible, Vec::new())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.deductible.is_finite() && self.deductible > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "deductible must be > 0, got {}",
                self.deductible
            )));
        }
        let mut floor = 0.0;
        for (j, &m) in self.cuts.iter().enumerate() {
            if !(m.is_finite() && m > floor + self.deductible) {
                return Err(Error::LayerOrder(format!(
                    "M_{} = {m} must exceed {} (previous cut + d)",
                    j + 1,
                    floor + self.deductible
                )));
            }
            floor = m;
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.cuts.len()
    }

    pub fn gaps(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cuts
            .iter()
            .map(|&m| {
                let g = m - prev - self.deductible;
                prev = m;
                g
            })
            .collect()
    }

    /// `M*_0 = d, M*_1 = M_1, M*_2 = M_1 + d, ..., M*_{2k} = M_k + d`.
    pub fn m_star(&self) -> Vec<f64> {
        let mut out = vec![self.deductible];
        for &m in &self.cuts {
            out.push(m);
            out.push(m + self.deductible);
        }
        out
    }

    /// Same cuts-as-gaps with a different base deductible.
    pub fn with_deductible(&self, deductible: f64) -> Result<Self> {
        LadderParams::from_gaps(self.alpha, deductible, &self.gaps())
    }
}

/// Closed-form ladder: 0 on `[0,d)`, slope 1 on `[d,M_1)`, flat on
/// `[M_1, M_1+d)`, ..., slope 1 from `M_k + d` on.
pub fn build_ladder(p: &LadderParams) -> Result<Contract> {
    p.validate()?;
    Contract::alternating(&p.m_star())
}

/// One step of the layer-extension recursion: `f_prev` below `cut`, and
/// `f_prev(cut) + base(x - cut)` from `cut` on.
pub fn extend_one_layer(f_prev: &Contract, base: &Contract, cut: f64) -> Result<Contract> {
    let last = f_prev.last_breakpoint();
    if !(cut.is_finite() && cut > last) {
        return Err(Error::LayerOrder(format!(
            "cut {cut} must lie beyond the last breakpoint {last}"
        )));
    }
    if f_prev.proportional_share().is_some() || base.proportional_share().is_some() {
        return Err(Error::InvalidParameter(
            "layer extension needs {0,1}-slope contracts".into(),
        ));
    }
    let mut bps = Vec::new();
    let mut slopes = Vec::new();
    for p in f_prev.pieces() {
        bps.push(p.start);
        slopes.push(p.slope);
    }
    for p in base.pieces() {
        bps.push(cut + p.start);
        slopes.push(p.slope);
    }
    Contract::from_pieces(&bps, &slopes)
}

/// `P(h(X) <= t)` by inverting the contract piece by piece.
pub fn ceded_cdf(contract: &Contract, dist: &ClaimDistribution, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let mut sup_x = 0.0;
    for p in contract.pieces() {
        if p.ceded_at_start > t {
            break;
        }
        sup_x = if p.slope == 0.0 {
            p.end
        } else {
            (p.start + (t - p.ceded_at_start) / p.slope).min(p.end)
        };
    }
    if sup_x.is_infinite() {
        1.0
    } else {
        dist.cdf(sup_x)
    }
}

/// Ladder CDF written band by band in `M*` notation: on the j-th slope-1
/// band of heights `[H_j, H_j + M*_{2j+1} - M*_{2j})` the CDF is
/// `F(t + M*_{2j} - H_j)`, where `H_j` sums the earlier band widths.
pub fn ladder_cdf_closed_form(p: &LadderParams, dist: &ClaimDistribution, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let ms = p.m_star();
    let bands = p.layers() + 1;
    let mut height = 0.0;
    for j in 0..bands {
        let start = ms[2 * j];
        let width = ms.get(2 * j + 1).map_or(f64::INFINITY, |&e| e - start);
        if t < height + width {
            return dist.cdf(t + start - height);
        }
        height += width;
    }
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViolationKind {
    /// `h(x) > max(x - d_alpha, 0)`.
    AboveStopLoss,
    /// `h(x) < 0` or `h(x) > x`.
    OutOfRange,
    /// `h` or `x - h` decreases, or `h` is steeper than 1.
    NotMonotone,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub x: f64,
    pub ceded: f64,
    pub bound: f64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub first_violation: Option<Violation>,
    pub points_checked: usize,
}

/// Number of uniform grid points used by the feasibility and property
/// checks.
pub const FEASIBILITY_GRID: usize = 10_000;

/// Feasibility against the stop-loss band `0 <= h(x) <= max(x - d_alpha, 0)`
/// on breakpoints (±ε) plus a uniform grid up to `upper`.
pub fn is_feasible_up_to(contract: &Contract, d_alpha: f64, upper: f64) -> FeasibilityReport {
    let grid = check_grid(contract, upper);
    let tol = 1e-12;
    let mut prev: Option<(f64, f64)> = None;
    for &x in &grid {
        let h = contract.ceded(x);
        let bound = (x - d_alpha).max(0.0);
        let not_monotone =
            prev.is_some_and(|(px, ph)| h < ph - tol || (x - h) < (px - ph) - tol || (h - ph) > (x - px) + tol);
        let violation = if h < -tol || h > x + tol {
            Some((ViolationKind::OutOfRange, x))
        } else if not_monotone {
            Some((ViolationKind::NotMonotone, x))
        } else if h > bound + tol * x.max(1.0) {
            Some((ViolationKind::AboveStopLoss, bound))
        } else {
            None
        };
        if let Some((kind, bound)) = violation {
            return FeasibilityReport {
                feasible: false,
                first_violation: Some(Violation {
                    x,
                    ceded: h,
                    bound,
                    kind,
                }),
                points_checked: grid.len(),
            };
        }
        prev = Some((x, h));
    }
    FeasibilityReport {
        feasible: true,
        first_violation: None,
        points_checked: grid.len(),
    }
}

/// [`is_feasible_up_to`] with the grid running to `quantile(1 - 1e-6)` of
/// `dist` (or past the last breakpoint, whichever is larger).
pub fn is_feasible_for(contract: &Contract, d_alpha: f64, dist: &ClaimDistribution) -> FeasibilityReport {
    let top = dist.quantile(1.0 - 1e-6).unwrap_or(d_alpha);
    is_feasible_up_to(contract, d_alpha, top)
}

/// [`is_feasible_up_to`] with a grid reaching twice past the last
/// breakpoint or `d_alpha`.
pub fn is_feasible(contract: &Contract, d_alpha: f64) -> FeasibilityReport {
    let top = 2.0 * contract.last_breakpoint().max(d_alpha) + 1.0;
    is_feasible_up_to(contract, d_alpha, top)
}

/// Breakpoints, breakpoints ± ε and a uniform grid on `[0, upper]`, sorted.
pub fn check_grid(contract: &Contract, upper: f64) -> Vec<f64> {
    let upper = upper.max(contract.last_breakpoint());
    let mut grid: Vec<f64> = (0..=FEASIBILITY_GRID)
        .map(|i| upper * i as f64 / FEASIBILITY_GRID as f64)
        .collect();
    for b in contract.breakpoints() {
        let eps = 1e-9 * b.max(1.0);
        grid.extend([b, b + eps]);
        if b > eps {
            grid.push(b - eps);
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const D: f64 = 23.0259;

    fn table1_ladder() -> LadderParams {
        LadderParams::new(0.1, D, vec![24.4258, 48.4516]).unwrap()
    }

    #[test]
    fn stop_loss_below_deductible() {
        let c = Contract::stop_loss(D).unwrap();
        assert_eq!(c.ceded(20.0), 0.0);
        assert!((c.ceded(30.0) - (30.0 - D)).abs() < 1e-12);
        assert_eq!(c.label(), "stoploss:23.0259");
    }

    #[test]
    fn labels_roundtrip() {
        let ladder = build_ladder(&table1_ladder()).unwrap();
        for c in [
            Contract::none(),
            Contract::proportional(0.3).unwrap(),
            Contract::stop_loss(D).unwrap(),
            ladder,
        ] {
            assert_eq!(Contract::from_label(&c.label()).unwrap(), c);
        }
        assert!(Contract::from_label("xl:3").is_err());
        assert!(Contract::from_label("stoploss:abc").is_err());
    }

    #[test]
    fn ladder_values() {
        let p = table1_ladder();
        let c = build_ladder(&p).unwrap();
        let (m1, m2) = (p.cuts[0], p.cuts[1]);
        assert!((c.ceded(m1) - (m1 - D)).abs() < 1e-12);
        assert!((c.ceded(30.0) - 1.3999).abs() < 1e-9);
        let t = 0.37;
        assert!((c.ceded(m1 + D + t) - (m1 + D + t - 2.0 * D)).abs() < 1e-12);
        let x = m2 + D + 1.0;
        assert!((c.ceded(x) - (x - 3.0 * D)).abs() < 1e-12);
        assert!((c.ceded(m2 + 0.5 * D) - (m2 - 2.0 * D)).abs() < 1e-12);
    }

    #[test]
    fn zero_cuts_is_stop_loss() {
        let c = build_ladder(&LadderParams::stop_loss(0.1, D).unwrap()).unwrap();
        assert_eq!(c, Contract::stop_loss(D).unwrap());
    }

    #[test]
    fn ladder_rejects_bad_order() {
        assert!(matches!(
            LadderParams::new(0.1, 5.0, vec![4.0]),
            Err(Error::LayerOrder(_))
        ));
        assert!(matches!(
            LadderParams::new(0.1, 5.0, vec![6.0, 10.0]),
            Err(Error::LayerOrder(_))
        ));
        assert!(LadderParams::new(0.1, 5.0, vec![6.0, 11.5]).is_ok());
        assert!(LadderParams::new(1.0, 5.0, vec![]).is_err());
    }

    #[test]
    fn gaps_roundtrip() {
        let p = LadderParams::from_gaps(0.1, 2.0, &[1.0, 3.0]).unwrap();
        assert_eq!(p.cuts, vec![3.0, 8.0]);
        assert_eq!(p.gaps(), vec![1.0, 3.0]);
        assert_eq!(p.m_star(), vec![2.0, 3.0, 5.0, 8.0, 10.0]);
    }

    #[test]
    fn single_extension_makes_one_flat() {
        let base = Contract::stop_loss(D).unwrap();
        let m1 = 24.4258;
        let c = extend_one_layer(&base, &base, m1).unwrap();
        let flats = c.flats();
        assert_eq!(flats.len(), 2);
        assert_eq!(flats[1].1, m1);
        assert!((flats[1].2 - (m1 + D)).abs() < 1e-12);
        assert!((flats[1].0 - (m1 - D)).abs() < 1e-12);
    }

    #[test]
    fn far_extension_leaves_range_unchanged() {
        let base = Contract::stop_loss(D).unwrap();
        let c = extend_one_layer(&base, &base, 1e6).unwrap();
        for i in 0..1000 {
            let x = i as f64 * 0.5;
            assert_eq!(c.ceded(x), base.ceded(x));
        }
    }

    #[test]
    fn extension_order_error() {
        let base = Contract::stop_loss(D).unwrap();
        assert!(matches!(
            extend_one_layer(&base, &base, D - 1.0),
            Err(Error::LayerOrder(_))
        ));
    }

    #[test]
    fn two_extensions_match_closed_form() {
        let p = table1_ladder();
        let base = Contract::stop_loss(D).unwrap();
        let f1 = extend_one_layer(&base, &base, p.cuts[0]).unwrap();
        let f2 = extend_one_layer(&f1, &base, p.cuts[1]).unwrap();
        let ladder = build_ladder(&p).unwrap();
        for i in 0..1000 {
            let x = i as f64 * 0.1;
            assert!((f2.ceded(x) - ladder.ceded(x)).abs() <= 1e-12);
        }
        assert_eq!(f2, ladder);
    }

    #[test]
    fn canonical_merging() {
        let c = Contract::from_pieces(&[0.0, 1.0, 1.0, 2.0, 3.0], &[0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(c.breakpoints(), vec![0.0, 1.0, 3.0]);
        assert_eq!(c.ceded(5.0), 2.0);
        let all_zero = Contract::from_pieces(&[0.0, 0.0, 4.0], &[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(all_zero, Contract::stop_loss(4.0).unwrap());
        assert!(Contract::from_pieces(&[0.0, 2.0, 1.0], &[0.0, 1.0, 0.0]).is_err());
        assert!(Contract::from_pieces(&[1.0], &[0.0]).is_err());
        assert!(Contract::from_pieces(&[0.0, 1.0], &[0.0, 0.5]).is_err());
    }

    #[test]
    fn proportional_extremes_normalize() {
        assert_eq!(Contract::proportional(0.0).unwrap(), Contract::none());
        assert_eq!(Contract::proportional(1.0).unwrap().ceded(7.0), 7.0);
        assert_eq!(Contract::proportional(0.25).unwrap().ceded(8.0), 2.0);
        assert!(Contract::proportional(1.5).is_err());
    }

    #[test]
    fn text_roundtrip_examples() {
        let c = build_ladder(&table1_ladder()).unwrap();
        let text = c.to_text();
        assert!(text.starts_with("(0, 0)\n(23.0259, 1)\n(24.4258, 0)\n"));
        assert_eq!(Contract::from_text(&text).unwrap(), c);
        let p = Contract::proportional(0.3).unwrap();
        assert_eq!(p.to_text(), "(0, 0.3)\n");
        assert_eq!(Contract::from_text(&p.to_text()).unwrap(), p);
        assert!(Contract::from_text("(0, 0)\n(x, 1)").is_err());
    }

    #[test]
    fn cdf_atoms_and_limits() {
        let dist = ClaimDistribution::exponential(10.0).unwrap();
        let d = dist.quantile(0.9).unwrap();
        let sl = Contract::stop_loss(d).unwrap();
        assert!((ceded_cdf(&sl, &dist, 0.0) - 0.9).abs() < 1e-12);
        assert!(ceded_cdf(&sl, &dist, 1e9) > 1.0 - 1e-12);
        assert_eq!(ceded_cdf(&sl, &dist, -1.0), 0.0);

        let p = LadderParams::new(0.1, d, vec![24.4258, 48.4516]).unwrap();
        let c = build_ladder(&p).unwrap();
        let h1 = p.cuts[0] - d;
        let atom = ceded_cdf(&c, &dist, h1) - ceded_cdf(&c, &dist, h1 - 1e-12);
        let direct = dist.cdf(p.cuts[0] + d) - dist.cdf(p.cuts[0]);
        assert!((atom - direct).abs() < 1e-9, "{atom} vs {direct}");
    }

    #[test]
    fn cdf_closed_form_matches_inversion() {
        let dist = ClaimDistribution::weibull(3.0, 2.0).unwrap();
        let p = LadderParams::from_gaps(0.1, 1.2, &[0.7, 1.1, 0.4]).unwrap();
        let c = build_ladder(&p).unwrap();
        for i in 0..2000 {
            let t = i as f64 * 0.005;
            let a = ceded_cdf(&c, &dist, t);
            let b = ladder_cdf_closed_form(&p, &dist, t);
            assert!((a - b).abs() < 1e-14, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn atom_mass_monte_carlo() {
        let dist = ClaimDistribution::exponential(10.0).unwrap();
        let p = table1_ladder();
        let c = build_ladder(&p).unwrap();
        let h1 = p.cuts[0] - p.deductible;
        let xs = dist.sample(1_000_000, 5);
        let hits = xs.iter().filter(|&&x| (c.ceded(x) - h1).abs() < 1e-12).count() as f64 / 1e6;
        let exact = dist.cdf(p.cuts[0] + p.deductible) - dist.cdf(p.cuts[0]);
        let se = (exact * (1.0 - exact) / 1e6).sqrt();
        assert!((hits - exact).abs() < 4.0 * se, "{hits} vs {exact}");
    }

    #[test]
    fn feasibility_examples() {
        let d_alpha = D;
        let ladder = build_ladder(&table1_ladder()).unwrap();
        assert!(is_feasible(&ladder, d_alpha).feasible);

        let low = build_ladder(&LadderParams::new(0.1, 15.0, vec![40.0]).unwrap()).unwrap();
        let r = is_feasible(&low, d_alpha);
        assert!(!r.feasible);
        let v = r.first_violation.unwrap();
        assert_eq!(v.kind, ViolationKind::AboveStopLoss);
        assert!(v.x > 15.0 && v.x <= d_alpha);
        let mid = 0.5 * (15.0 + d_alpha);
        assert!(low.ceded(mid) > (mid - d_alpha).max(0.0));

        let full = Contract::proportional(1.0).unwrap();
        assert!(!is_feasible(&full, d_alpha).feasible);
        assert!(is_feasible(&full, 0.0).feasible);
    }

    fn ladder_strategy() -> impl Strategy<Value = LadderParams> {
        (0.5f64..30.0, prop::collection::vec(0.01f64..40.0, 0..4))
            .prop_map(|(d, gaps)| LadderParams::from_gaps(0.1, d, &gaps).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn contract_invariants_on_grid(p in ladder_strategy()) {
            let c = build_ladder(&p).unwrap();
            let grid = check_grid(&c, c.last_breakpoint() * 1.5 + 1.0);
            let mut prev: Option<(f64, f64)> = None;
            for &x in &grid {
                let h = c.ceded(x);
                prop_assert!(h >= 0.0 && h <= x + 1e-12);
                if let Some((px, ph)) = prev {
                    prop_assert!(h >= ph - 1e-12);
                    prop_assert!(x - h >= px - ph - 1e-12);
                    prop_assert!((h - ph).abs() <= (x - px) + 1e-12);
                }
                prev = Some((x, h));
            }
        }

        #[test]
        fn ladder_equals_iterated_extension(p in ladder_strategy()) {
            let base = Contract::stop_loss(p.deductible).unwrap();
            let mut f = base.clone();
            for &m in &p.cuts {
                f = extend_one_layer(&f, &base, m).unwrap();
            }
            let c = build_ladder(&p).unwrap();
            for x in check_grid(&c, c.last_breakpoint() * 1.5 + 1.0) {
                prop_assert!((f.ceded(x) - c.ceded(x)).abs() <= 1e-12);
            }
        }

        #[test]
        fn text_roundtrip(p in ladder_strategy()) {
            let c = build_ladder(&p).unwrap();
            let back = Contract::from_text(&c.to_text()).unwrap();
            prop_assert_eq!(back, c);
        }

        #[test]
        fn ceded_cdf_is_a_cdf(p in ladder_strategy(), mean in 1.0f64..20.0) {
            let dist = ClaimDistribution::exponential(mean).unwrap();
            let c = build_ladder(&p).unwrap();
            let top = c.ceded(dist.upper_cap()) + 1.0;
            let mut prev = 0.0;
            for i in 0..=400 {
                let t = top * i as f64 / 400.0;
                let v = ceded_cdf(&c, &dist, t);
                prop_assert!(v >= prev - 1e-15 && v <= 1.0);
                prev = v;
            }
            prop_assert!(prev > 1.0 - 1e-9);
            // atoms plus continuous mass account for everything
            let atoms: f64 = c.flats().iter().map(|&(_, a, b)| dist.cdf(b) - dist.cdf(a)).sum();
            let continuous: f64 = c.pieces().iter().filter(|q| q.slope == 1.0)
                .map(|q| dist.cdf(q.end) - dist.cdf(q.start)).sum();
            prop_assert!((atoms + continuous - 1.0).abs() < 1e-8);
        }
    }
}
