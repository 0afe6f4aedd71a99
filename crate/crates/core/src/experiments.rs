//! Table drivers shared by the CLI and the acceptance run.

use crate::bayes::{repeat_estimation, GridSettings, PriorSpec};
use crate::calibrate::{calibrate_problem, CalibrationProblem, Criterion, Mode};
use crate::contracts::Contract;
use crate::distributions::ClaimDistribution;
use crate::error::Result;
use crate::risk::{cte_ceded, expected_ceded, q_combination, utility_combination};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
    Int(u64),
}

impl Cell {
    /// Full precision (shortest round-trip form).
    pub fn full(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
        }
    }

    pub fn rounded(&self, decimals: usize) -> String {
        match self {
            Cell::Num(v) if v.is_finite() => format!("{v:.decimals$}"),
            other => other.full(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// One message per failed row or failed directional check.
    pub failures: Vec<String>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Table::default()
        }
    }

    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn num(&self, row: usize, name: &str) -> Option<f64> {
        match self.rows.get(row)?.get(self.column(name)?)? {
            Cell::Num(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            Cell::Text(_) => None,
        }
    }

    /// Pipe table with numbers at `decimals` places.
    pub fn to_markdown(&self, decimals: usize) -> String {
        let mut out = String::new();
        out.push_str(&format!("| {} |\n", self.columns.join(" | ")));
        out.push_str(&format!("|{}\n", "---|".repeat(self.columns.len())));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.rounded(decimals)).collect();
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
        out
    }
}

/// Exp(10), Exp(8), Exp(4), Weibull(1,2), Weibull(3,2).
pub fn default_distributions() -> Vec<ClaimDistribution> {
    vec![
        ClaimDistribution::exponential(10.0).unwrap(),
        ClaimDistribution::exponential(8.0).unwrap(),
        ClaimDistribution::exponential(4.0).unwrap(),
        ClaimDistribution::weibull(1.0, 2.0).unwrap(),
        ClaimDistribution::weibull(3.0, 2.0).unwrap(),
    ]
}

#[derive(Debug, Clone)]
pub struct CalibrationConfig {
    pub dists: Vec<ClaimDistribution>,
    pub alpha: f64,
    pub omega: f64,
    pub beta: f64,
    /// Number of cuts `M_1 < ... < M_k`.
    pub cuts: usize,
    pub mode: Mode,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            dists: default_distributions(),
            alpha: 0.1,
            omega: 0.2,
            beta: 1.0,
            cuts: 2,
            mode: Mode::StrictFeasible,
        }
    }
}

fn cut_columns(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("m{i}")).collect()
}

fn calibration_table(cfg: &CalibrationConfig, criterion: Criterion, tail: &[&str]) -> Table {
    let mut cols = vec!["dist".to_string(), "d_alpha".to_string()];
    cols.extend(cut_columns(cfg.cuts));
    cols.extend(["e_sl", "e_ladder", "cte_ceded_sl", "cte_ceded_ladder"].map(String::from));
    cols.extend(tail.iter().map(|s| s.to_string()));
    cols.extend(["feasible", "improved", "status"].map(String::from));
    let mut table = Table {
        columns: cols,
        ..Table::default()
    };
    let utility = matches!(criterion, Criterion::UtilityCombination { .. });
    for dist in &cfg.dists {
        match calibration_row(cfg, dist, criterion) {
            Ok((mut row, improved)) => {
                if !improved {
                    let what = if utility { "U" } else { "Q" };
                    table.failures.push(format!("{dist}: {what}_2-layer exceeds {what}_SL"));
                }
                row.push(Cell::Text(if improved { "yes" } else { "no" }.into()));
                row.push(Cell::Text("ok".into()));
                table.rows.push(row);
            }
            Err(e) => {
                table.failures.push(format!("{dist}: {e}"));
                let mut row = vec![Cell::Text(dist.to_string())];
                row.resize(table.columns.len() - 1, Cell::Num(f64::NAN));
                row.push(Cell::Text(format!("error: {e}")));
                table.rows.push(row);
            }
        }
    }
    table
}

fn calibration_row(
    cfg: &CalibrationConfig,
    dist: &ClaimDistribution,
    criterion: Criterion,
) -> Result<(Vec<Cell>, bool)> {
    let problem = CalibrationProblem::new(dist.clone(), cfg.alpha, cfg.cuts, criterion)?.with_mode(cfg.mode);
    let cal = calibrate_problem(&problem)?;
    let d_alpha = problem.d_alpha()?;
    let sl = Contract::stop_loss(d_alpha)?;
    let mut row = vec![Cell::Text(dist.to_string()), Cell::Num(cal.params.deductible)];
    row.extend(cal.params.cuts.iter().map(|&m| Cell::Num(m)));
    row.push(Cell::Num(cal.stop_loss_premium));
    row.push(Cell::Num(expected_ceded(dist, &cal.contract)?));
    row.push(Cell::Num(cte_ceded(dist, &sl, cfg.alpha)?));
    row.push(Cell::Num(cte_ceded(dist, &cal.contract, cfg.alpha)?));
    let improved = match criterion {
        Criterion::VarianceCombination { omega } => {
            let q_sl = q_combination(dist, &sl, omega)?;
            let q_ladder = q_combination(dist, &cal.contract, omega)?;
            row.push(Cell::Num(problem.q_star()?));
            row.push(Cell::Num(q_sl));
            row.push(Cell::Num(q_ladder));
            q_ladder <= q_sl + 1e-9 * q_sl.abs().max(1.0)
        }
        Criterion::UtilityCombination { omega, beta } => {
            let u_sl = utility_combination(dist, &sl, omega, beta)?;
            let u_ladder = utility_combination(dist, &cal.contract, omega, beta)?;
            row.push(Cell::Num(u_sl));
            row.push(Cell::Num(u_ladder));
            u_ladder <= u_sl + 1e-12
        }
    };
    row.push(Cell::Text(if cal.feasible { "yes" } else { "no" }.into()));
    Ok((row, improved))
}

/// Variance-combination calibration per distribution.
pub fn run_table1(cfg: &CalibrationConfig) -> Table {
    calibration_table(
        cfg,
        Criterion::VarianceCombination { omega: cfg.omega },
        &["q_star", "q_sl", "q_ladder"],
    )
}

/// Exponential-utility calibration per distribution.
pub fn run_table2(cfg: &CalibrationConfig) -> Table {
    calibration_table(
        cfg,
        Criterion::UtilityCombination {
            omega: cfg.omega,
            beta: cfg.beta,
        },
        &["u_sl", "u_ladder"],
    )
}

#[derive(Debug, Clone)]
pub struct EstimationConfig {
    pub dists: Vec<ClaimDistribution>,
    pub prior: PriorSpec,
    pub init: Vec<f64>,
    pub n: usize,
    pub reps: usize,
    pub rounds: usize,
    pub seed: u64,
    pub grid: GridSettings,
}

impl EstimationConfig {
    /// Exp(1) claims, Exp(1) priors on three widths, 100 claims, 100
    /// repetitions, init (0.20, 0.15, 0.02).
    pub fn standard(seed: u64) -> Self {
        EstimationConfig {
            dists: vec![ClaimDistribution::exponential(1.0).unwrap()],
            prior: PriorSpec::parse("d0=exp(1),d1=exp(1),d2=exp(1)").unwrap(),
            init: vec![0.20, 0.15, 0.02],
            n: 100,
            reps: 100,
            rounds: 10,
            seed,
            grid: GridSettings::default(),
        }
    }
}

/// Posterior-mean widths per distribution: mean and between-repetition
/// variance of each width, plus the average number of rounds.
pub fn run_table3(cfg: &EstimationConfig) -> Table {
    let dims = cfg.prior.dims();
    let mut cols = vec!["dist", "prior", "n", "reps"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    for i in 0..dims {
        cols.push(format!("d{i}_mean"));
        cols.push(format!("d{i}_var"));
    }
    cols.push("rounds_mean".into());
    cols.push("status".into());
    let mut table = Table {
        columns: cols,
        ..Table::default()
    };
    let prior_label = cfg
        .prior
        .widths
        .iter()
        .enumerate()
        .map(|(i, p)| format!("d{i}={p}"))
        .collect::<Vec<_>>()
        .join(" ");
    for dist in &cfg.dists {
        let mut row = vec![
            Cell::Text(dist.to_string()),
            Cell::Text(prior_label.clone()),
            Cell::Int(cfg.n as u64),
            Cell::Int(cfg.reps as u64),
        ];
        match repeat_estimation(
            dist, &cfg.prior, &cfg.init, cfg.n, cfg.reps, cfg.rounds, cfg.seed, cfg.grid,
        ) {
            Ok(r) => {
                for i in 0..dims {
                    row.push(Cell::Num(r.mean[i]));
                    row.push(Cell::Num(r.variance[i]));
                }
                let rounds = r.rounds_used.iter().sum::<usize>() as f64 / r.rounds_used.len() as f64;
                row.push(Cell::Num(rounds));
                let finite = r.mean.iter().chain(&r.variance).all(|v| v.is_finite());
                if !finite {
                    table.failures.push(format!("{dist}: non-finite estimate"));
                }
                row.push(Cell::Text(if finite { "ok" } else { "non-finite" }.into()));
            }
            Err(e) => {
                table.failures.push(format!("{dist}: {e}"));
                row.resize(table.columns.len() - 1, Cell::Num(f64::NAN));
                row.push(Cell::Text(format!("error: {e}")));
            }
        }
        table.rows.push(row);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(dist: ClaimDistribution) -> CalibrationConfig {
        CalibrationConfig {
            dists: vec![dist],
            ..CalibrationConfig::default()
        }
    }

    #[test]
    fn empty_tables() {
        let cfg = CalibrationConfig {
            dists: vec![],
            ..CalibrationConfig::default()
        };
        let t = run_table1(&cfg);
        assert!(t.rows.is_empty() && t.ok());
        assert!(run_table2(&cfg).rows.is_empty());
        let mut e = EstimationConfig::standard(1);
        e.dists.clear();
        assert!(run_table3(&e).rows.is_empty());
    }

    #[test]
    fn table1_exp10_row() {
        let t = run_table1(&one(ClaimDistribution::exponential(10.0).unwrap()));
        assert!(t.ok(), "{:?}", t.failures);
        assert!((t.num(0, "d_alpha").unwrap() - 23.0259).abs() < 1e-3);
        assert!((t.num(0, "e_sl").unwrap() - 1.0).abs() < 1e-3);
        assert!(t.num(0, "q_ladder").unwrap() <= t.num(0, "q_sl").unwrap());
        assert!(t.num(0, "m1").unwrap() > 23.0259);
    }

    #[test]
    fn table2_exp10_row() {
        let t = run_table2(&one(ClaimDistribution::exponential(10.0).unwrap()));
        assert!(t.ok(), "{:?}", t.failures);
        assert!(t.num(0, "u_ladder").unwrap() <= t.num(0, "u_sl").unwrap());
    }

    #[test]
    fn table3_single_rep() {
        let mut cfg = EstimationConfig::standard(7);
        cfg.reps = 1;
        cfg.rounds = 2;
        cfg.grid.points_per_dim = 16;
        let t = run_table3(&cfg);
        assert!(t.ok(), "{:?}", t.failures);
        assert_eq!(t.num(0, "d0_var"), Some(0.0));
        assert!(t.num(0, "d1_mean").unwrap().is_finite());
    }

    #[test]
    fn markdown_rounds_to_four_places() {
        let mut t = Table::new(&["a", "b"]);
        t.rows.push(vec![Cell::Text("x".into()), Cell::Num(1.23456789)]);
        let md = t.to_markdown(4);
        assert!(md.contains("| x | 1.2346 |"));
        assert_eq!(t.rows[0][1].full(), "1.23456789");
    }
}
