//! Fitting ladder gap widths to a secondary criterion (variance or
//! exponential-utility combination) on top of the CTE-optimal deductible.

use crate::contracts::{build_ladder, is_feasible_for, Contract, LadderParams};
use crate::distributions::ClaimDistribution;
use crate::error::{Error, Result};
use crate::numerics::{find_root, minimize_simplex, SimplexOptions, SimplexResult, Tolerance};
use crate::risk::{expected_ceded, optimal_proportional_q, q_combination, utility_combination, RiskReport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// Minimize `(Q_ladder - Q*)^2` with `Q*` the best proportional Q.
    VarianceCombination { omega: f64 },
    /// Minimize `U_ladder`.
    UtilityCombination { omega: f64, beta: f64 },
}

impl Criterion {
    pub fn omega(&self) -> f64 {
        match *self {
            Criterion::VarianceCombination { omega } | Criterion::UtilityCombination { omega, .. } => omega,
        }
    }

    /// Beta reported alongside; the variance criterion does not use it.
    pub fn beta(&self) -> f64 {
        match *self {
            Criterion::VarianceCombination { .. } => 1.0,
            Criterion::UtilityCombination { beta, .. } => beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Deductible fixed at `d_alpha`; premiums differ from the stop-loss.
    #[default]
    StrictFeasible,
    /// Deductible re-solved so `E[ladder] = E[(X - d_alpha)_+]`; the
    /// stop-loss bound is violated on `(d, d_alpha)`.
    PremiumMatched,
}

#[derive(Debug, Clone)]
pub struct CalibrationProblem {
    pub dist: ClaimDistribution,
    pub alpha: f64,
    pub layers: usize,
    pub criterion: Criterion,
    pub mode: Mode,
    pub options: SimplexOptions,
    /// Quantile-spaced starts, on top of the stop-loss-limit start.
    pub restarts: usize,
}

impl CalibrationProblem {
    pub fn new(dist: ClaimDistribution, alpha: f64, layers: usize, criterion: Criterion) -> Result<Self> {
        let p = CalibrationProblem {
            dist,
            alpha,
            layers,
            criterion,
            mode: Mode::default(),
            options: SimplexOptions::default(),
            restarts: 5,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(Error::InvalidParameter("need at least one layer cut".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        let omega = self.criterion.omega();
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::InvalidParameter(format!("omega {omega} outside [0, 1]")));
        }
        if let Criterion::UtilityCombination { beta, .. } = self.criterion {
            if !(beta > 0.0) {
                return Err(Error::InvalidParameter(format!("beta must be > 0, got {beta}")));
            }
        }
        if !(self.options.xtol > 0.0 && self.options.ftol > 0.0) || self.options.max_iter < 1 {
            return Err(Error::InvalidParameter("optimizer tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn d_alpha(&self) -> Result<f64> {
        self.dist.quantile(1.0 - self.alpha)
    }

    /// Target of the variance criterion, `Q* = min_c Q(cX)`.
    pub fn q_star(&self) -> Result<f64> {
        Ok(optimal_proportional_q(self.criterion.omega())?.q_star(&self.dist))
    }

    /// Criterion value of an arbitrary contract.
    pub fn objective_of(&self, c: &Contract) -> Result<f64> {
        match self.criterion {
            Criterion::VarianceCombination { omega } => {
                let q = q_combination(&self.dist, c, omega)?;
                Ok((q - self.q_star()?).powi(2))
            }
            Criterion::UtilityCombination { omega, beta } => utility_combination(&self.dist, c, omega, beta),
        }
    }

    /// Ladder for the given gap widths under this problem's mode.
    pub fn ladder_from_gaps(&self, gaps: &[f64]) -> Result<LadderParams> {
        let d_alpha = self.d_alpha()?;
        let p = LadderParams::from_gaps(self.alpha, d_alpha, gaps)?;
        match self.mode {
            Mode::StrictFeasible => Ok(p),
            Mode::PremiumMatched => {
                let target = self.dist.stop_loss_premium(d_alpha)?;
                premium_match(&self.dist, &p, target)
            }
        }
    }

    pub fn objective_at_gaps(&self, gaps: &[f64]) -> Result<f64> {
        let p = self.ladder_from_gaps(gaps)?;
        self.objective_of(&build_ladder(&p)?)
    }

    /// Same objective addressed by cut points `M_1 < ... < M_k` (strict
    /// mode deductible).
    pub fn objective_at_cuts(&self, cuts: &[f64]) -> Result<f64> {
        let p = LadderParams::new(self.alpha, self.d_alpha()?, cuts.to_vec())?;
        self.objective_at_gaps(&p.gaps())
    }

    /// Starting gap vectors: `restarts` quantile-spaced guesses, then one
    /// with every cut past the distribution's upper cap (the stop-loss
    /// limit).
    pub fn starts(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for s in 0..self.restarts {
            let level = (s as f64 + 0.5) / self.restarts as f64;
            let g = self.dist.quantile(level).unwrap_or(1.0).max(1e-6);
            out.push(vec![g; self.layers]);
        }
        out.push(vec![self.dist.upper_cap().max(1.0); self.layers]);
        out
    }
}

/// Re-solves the base deductible so `E[ladder] = target`, holding the gap
/// widths fixed.
pub fn premium_match(dist: &ClaimDistribution, p: &LadderParams, target: f64) -> Result<LadderParams> {
    let gaps = p.gaps();
    let residual = |d: f64| -> f64 {
        LadderParams::from_gaps(p.alpha, d, &gaps)
            .and_then(|q| build_ladder(&q))
            .and_then(|c| expected_ceded(dist, &c))
            .map_or(f64::NAN, |e| e - target)
    };
    let hi = dist.quantile(1.0 - 1e-9)?;
    let lo = hi * 1e-12;
    if !(target > 0.0) {
        return Err(Error::NoRoot { lo, hi });
    }
    let (r_lo, r_hi) = (residual(lo), residual(hi));
    if !(r_lo > 0.0 && r_hi < 0.0) {
        return Err(Error::NoRoot { lo, hi });
    }
    let d = find_root(residual, lo, hi, Tolerance::root())?;
    LadderParams::from_gaps(p.alpha, d, &gaps)
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub params: LadderParams,
    pub contract: Contract,
    pub report: RiskReport,
    pub objective: f64,
    pub stop_loss_objective: f64,
    pub stop_loss_premium: f64,
    /// `E[ladder] - E[stop-loss]`.
    pub premium_gap: f64,
    /// Ladder stays below `(x - d_alpha)_+` everywhere.
    pub feasible: bool,
    pub optimizer: SimplexResult,
}

fn calibrate(problem: &CalibrationProblem) -> Result<Calibration> {
    problem.validate()?;
    let d_alpha = problem.d_alpha()?;
    let stop_loss = Contract::stop_loss(d_alpha)?;
    let stop_loss_objective = problem.objective_of(&stop_loss)?;
    let stop_loss_premium = problem.dist.stop_loss_premium(d_alpha)?;

    let f = |z: &[f64]| -> f64 {
        let gaps: Vec<f64> = z.iter().map(|v| v.exp()).collect();
        problem.objective_at_gaps(&gaps).unwrap_or(f64::INFINITY)
    };
    let starts: Vec<Vec<f64>> = problem
        .starts()
        .into_iter()
        .map(|g| g.iter().map(|v| v.ln()).collect())
        .collect();
    let best = minimize_simplex(f, &starts, problem.options)?;
    if !best.value.is_finite() {
        return Err(Error::Calibration {
            best: best.value,
            reason: "objective not finite at any start".into(),
        });
    }
    if !best.converged {
        return Err(Error::Calibration {
            best: best.value,
            reason: format!("simplex stopped after {} iterations", best.iterations),
        });
    }
    let gaps: Vec<f64> = best.x.iter().map(|v| v.exp()).collect();
    let params = problem.ladder_from_gaps(&gaps)?;
    let contract = build_ladder(&params)?;
    let c = problem.criterion;
    let report = RiskReport::compute(&problem.dist, &contract, problem.alpha, c.omega(), c.beta(), None)?;
    Ok(Calibration {
        feasible: is_feasible_for(&contract, d_alpha, &problem.dist).feasible,
        premium_gap: report.e_ceded - stop_loss_premium,
        params,
        contract,
        report,
        objective: best.value,
        stop_loss_objective,
        stop_loss_premium,
        optimizer: best,
    })
}

pub fn calibrate_variance(problem: &CalibrationProblem) -> Result<Calibration> {
    if !matches!(problem.criterion, Criterion::VarianceCombination { .. }) {
        return Err(Error::InvalidParameter(
            "calibrate_variance needs a variance criterion".into(),
        ));
    }
    calibrate(problem)
}

pub fn calibrate_utility(problem: &CalibrationProblem) -> Result<Calibration> {
    if !matches!(problem.criterion, Criterion::UtilityCombination { .. }) {
        return Err(Error::InvalidParameter(
            "calibrate_utility needs a utility criterion".into(),
        ));
    }
    calibrate(problem)
}

/// Dispatches on the problem's criterion.
pub fn calibrate_problem(problem: &CalibrationProblem) -> Result<Calibration> {
    calibrate(problem)
}
