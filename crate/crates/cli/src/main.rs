use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ini::Ini;

use reinlayer::bayes::{GridSettings, PriorSpec};
use reinlayer::calibrate::{calibrate_problem, CalibrationProblem, Criterion, Mode};
use reinlayer::experiments::{run_table1, run_table2, run_table3, CalibrationConfig, Cell, EstimationConfig, Table};
use reinlayer::rho_ext::{build_preserving_extension, mc_verify_rho, RiskMeasure};
use reinlayer::risk::{expected_ceded, RiskReport};
use reinlayer::{ClaimDistribution, Contract};

/// Directory for output files when `--output` is not given.
const OUTPUT_DIR_ENV: &str = "REINLAYER_OUTPUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "reinlayer", version, about = "Multi-layer reinsurance experiments")]
struct Cli {
    /// key=value config file with [section] headers; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output format: csv (full precision) or md (4 decimals).
    #[arg(long, global = true, value_enum)]
    out: Option<Format>,

    /// Output file. Defaults to $REINLAYER_OUTPUT_DIR/<command>.<ext>, else stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Variance-combination calibration per distribution.
    Table1(TableArgs),
    /// Exponential-utility calibration per distribution.
    Table2(TableArgs),
    /// Repeated Bayesian estimation of ladder widths.
    Table3(Table3Args),
    /// Calibrate one ladder.
    Calibrate(CalibrateArgs),
    /// Monte Carlo check that a constructed extension keeps the risk measure.
    Verify(VerifyArgs),
    /// Risk report for one contract.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Md,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Format as ValueEnum>::from_str(s, true)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Strict,
    Match,
}

impl FromStr for ModeArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <ModeArg as ValueEnum>::from_str(s, true)
    }
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Strict => Mode::StrictFeasible,
            ModeArg::Match => Mode::PremiumMatched,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CriterionArg {
    Variance,
    Utility,
}

impl FromStr for CriterionArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <CriterionArg as ValueEnum>::from_str(s, true)
    }
}

#[derive(Args, Debug)]
struct TableArgs {
    /// Claim distribution, repeatable, e.g. "exp(mean=10)" or "weibull(scale=1, shape=2)".
    /// Default: Exp(10), Exp(8), Exp(4), Weibull(1,2), Weibull(3,2).
    #[arg(long = "dist")]
    dists: Vec<String>,
    /// Tail level alpha [default: 0.1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight omega on the ceded side [default: 0.2].
    #[arg(long)]
    omega: Option<f64>,
    /// Risk aversion beta (utility table) [default: 1].
    #[arg(long)]
    beta: Option<f64>,
    /// Number of cut points M_1..M_k [default: 2].
    #[arg(long)]
    cuts: Option<usize>,
    /// strict keeps d = d_alpha; match re-solves d to the stop-loss premium [default: strict].
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Accepted for symmetry; the tables are deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct Table3Args {
    /// Claim distribution, repeatable [default: exp(mean=1)].
    #[arg(long = "claim-dist")]
    dists: Vec<String>,
    /// Width priors, e.g. "d0=exp(1),d1=exp(1),d2=gamma(2,3)".
    #[arg(long)]
    priors: Option<String>,
    /// Claims per repetition [default: 100].
    #[arg(long)]
    n: Option<usize>,
    /// Repetitions [default: 100].
    #[arg(long)]
    reps: Option<usize>,
    /// Initial widths, comma separated [default: 0.20,0.15,0.02].
    #[arg(long)]
    init: Option<String>,
    /// Maximum re-censoring rounds [default: 10].
    #[arg(long)]
    rounds: Option<usize>,
    /// Grid points per dimension [default: 64].
    #[arg(long)]
    grid: Option<usize>,
    /// Seed (required here or in the config file).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Claim distribution [default: exp(mean=10)].
    #[arg(long)]
    dist: Option<String>,
    /// Tail level alpha [default: 0.1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of cut points [default: 2].
    #[arg(long)]
    layers: Option<usize>,
    /// Objective [default: variance].
    #[arg(long, value_enum)]
    criterion: Option<CriterionArg>,
    /// Weight omega [default: 0.2].
    #[arg(long)]
    omega: Option<f64>,
    /// Risk aversion beta [default: 1].
    #[arg(long)]
    beta: Option<f64>,
    /// Deductible mode [default: strict].
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Accepted for symmetry; calibration is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Claim distribution [default: exp(mean=10)].
    #[arg(long)]
    dist: Option<String>,
    /// Base contract: stoploss:<d>, prop:<c> or pl:<b1>/<b2>/... [default: stoploss at d_alpha].
    #[arg(long)]
    base: Option<String>,
    /// Cut points for the extension, comma separated.
    #[arg(long)]
    cuts: Option<String>,
    /// Compare the base against this contract instead of the constructed extension.
    #[arg(long)]
    against: Option<String>,
    /// Risk measure, repeatable: cte:<alpha> or var:<alpha> [default: cte:0.1 and var:0.1].
    #[arg(long = "rho")]
    rhos: Vec<String>,
    /// Fixed premium added to both sides [default: E of the base contract].
    #[arg(long)]
    premium: Option<f64>,
    /// Monte Carlo samples [default: 1000000].
    #[arg(long)]
    n: Option<usize>,
    /// Seed (required here or in the config file).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Claim distribution [default: exp(mean=10)].
    #[arg(long)]
    dist: Option<String>,
    /// Contract label (none, prop:c, stoploss:d, pl:b1/b2/...) or a file of "(x, slope)" lines.
    #[arg(long)]
    contract: Option<String>,
    /// Tail level alpha [default: 0.1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight omega [default: 0.2].
    #[arg(long)]
    omega: Option<f64>,
    /// Risk aversion beta [default: 1].
    #[arg(long)]
    beta: Option<f64>,
    /// Premium [default: expected ceded loss].
    #[arg(long)]
    premium: Option<f64>,
}

#[derive(Debug)]
enum CliError {
    /// Exit code 2.
    Config(String),
    /// Exit code 1.
    Failure(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Failure(m) => write!(f, "{m}"),
        }
    }
}

fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn failure(e: impl fmt::Display) -> CliError {
    CliError::Failure(e.to_string())
}

/// Flag value, else `[section] key`, else the general section.
struct Settings {
    ini: Option<Ini>,
    section: &'static str,
}

impl Settings {
    fn load(path: Option<&Path>, section: &'static str) -> Result<Self, CliError> {
        let ini = match path {
            Some(p) => Some(Ini::load_from_file_noescape(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?),
            None => None,
        };
        Ok(Settings { ini, section })
    }

    fn raw(&self, key: &str) -> Option<String> {
        let ini = self.ini.as_ref()?;
        ini.section(Some(self.section))
            .and_then(|s| s.get(key))
            .or_else(|| ini.general_section().get(key))
            .map(|v| v.trim().to_string())
    }

    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| config_err(format!("[{}] {key} = {v:?}: {e}", self.section))),
            None => Ok(None),
        }
    }

    fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    /// Repeatable flag; the config form separates entries with ';'.
    fn list(&self, flag: Vec<String>, key: &str) -> Vec<String> {
        if !flag.is_empty() {
            return flag;
        }
        self.raw(key)
            .map(|v| {
                v.split(';')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            })
            .unwrap_or_default()
    }

    fn seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        self.pick(flag, "seed")?
            .ok_or_else(|| config_err("this command needs --seed (or seed = ... in the config file)"))
    }
}

fn parse_dist(s: &str) -> Result<ClaimDistribution, CliError> {
    s.parse().map_err(config_err)
}

fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| config_err(format!("bad number {v:?} in {s:?}")))
        })
        .collect()
}

fn parse_contract(s: &str) -> Result<Contract, CliError> {
    match Contract::from_label(s) {
        Ok(c) => Ok(c),
        Err(label_err) => {
            let path = Path::new(s);
            if path.is_file() {
                let text = std::fs::read_to_string(path).map_err(config_err)?;
                Contract::from_text(&text).map_err(config_err)
            } else {
                Err(config_err(label_err))
            }
        }
    }
}

fn calibration_config(a: TableArgs, s: &Settings) -> Result<CalibrationConfig, CliError> {
    let defaults = CalibrationConfig::default();
    let dists = s.list(a.dists, "dists");
    Ok(CalibrationConfig {
        dists: if dists.is_empty() {
            defaults.dists
        } else {
            dists.iter().map(|d| parse_dist(d)).collect::<Result<_, _>>()?
        },
        alpha: s.or(a.alpha, "alpha", defaults.alpha)?,
        omega: s.or(a.omega, "omega", defaults.omega)?,
        beta: s.or(a.beta, "beta", defaults.beta)?,
        cuts: s.or(a.cuts, "cuts", defaults.cuts)?,
        mode: s.or(a.mode, "mode", ModeArg::Strict)?.into(),
    })
}

fn check_calibration(cfg: &CalibrationConfig) -> Result<(), CliError> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(config_err(format!("alpha {} outside (0, 1)", cfg.alpha)));
    }
    if !(0.0..=1.0).contains(&cfg.omega) {
        return Err(config_err(format!("omega {} outside [0, 1]", cfg.omega)));
    }
    if !(cfg.beta > 0.0) {
        return Err(config_err(format!("beta must be > 0, got {}", cfg.beta)));
    }
    if cfg.cuts < 1 {
        return Err(config_err("cuts must be >= 1"));
    }
    Ok(())
}

fn estimation_config(a: Table3Args, s: &Settings) -> Result<EstimationConfig, CliError> {
    let seed = s.seed(a.seed)?;
    let mut cfg = EstimationConfig::standard(seed);
    let dists = s.list(a.dists, "claim-dist");
    if !dists.is_empty() {
        cfg.dists = dists.iter().map(|d| parse_dist(d)).collect::<Result<_, _>>()?;
    }
    if let Some(p) = s.pick::<String>(a.priors, "priors")? {
        cfg.prior = PriorSpec::parse(&p).map_err(config_err)?;
    }
    if let Some(i) = s.pick::<String>(a.init, "init")? {
        cfg.init = parse_list(&i)?;
    }
    cfg.n = s.or(a.n, "n", cfg.n)?;
    cfg.reps = s.or(a.reps, "reps", cfg.reps)?;
    cfg.rounds = s.or(a.rounds, "rounds", cfg.rounds)?;
    cfg.grid = GridSettings {
        points_per_dim: s.or(a.grid, "grid", cfg.grid.points_per_dim)?,
        ..cfg.grid
    };
    if cfg.init.len() != cfg.prior.dims() {
        return Err(config_err(format!(
            "init has {} widths but priors cover {}",
            cfg.init.len(),
            cfg.prior.dims()
        )));
    }
    if cfg.init.iter().any(|v| !(*v > 0.0)) {
        return Err(config_err("init widths must be > 0"));
    }
    if cfg.n < 1 || cfg.reps < 1 || cfg.rounds < 1 || cfg.grid.points_per_dim < 2 {
        return Err(config_err("n, reps and rounds must be >= 1 and grid >= 2"));
    }
    Ok(cfg)
}

fn run_calibrate(a: CalibrateArgs, s: &Settings) -> Result<Table, CliError> {
    let dist = parse_dist(&s.or(a.dist, "dist", "exp(mean=10)".to_string())?)?;
    let alpha = s.or(a.alpha, "alpha", 0.1)?;
    let layers = s.or(a.layers, "layers", 2)?;
    let omega = s.or(a.omega, "omega", 0.2)?;
    let beta = s.or(a.beta, "beta", 1.0)?;
    let mode: Mode = s.or(a.mode, "mode", ModeArg::Strict)?.into();
    let criterion = match s.or(a.criterion, "criterion", CriterionArg::Variance)? {
        CriterionArg::Variance => Criterion::VarianceCombination { omega },
        CriterionArg::Utility => Criterion::UtilityCombination { omega, beta },
    };
    let problem = CalibrationProblem::new(dist.clone(), alpha, layers, criterion)
        .map_err(config_err)?
        .with_mode(mode);
    let cal = calibrate_problem(&problem).map_err(failure)?;

    let mut cols = vec!["dist", "criterion", "mode", "deductible"];
    let cut_names: Vec<String> = (1..=layers).map(|i| format!("m{i}")).collect();
    cols.extend(cut_names.iter().map(|s| s.as_str()));
    cols.extend([
        "objective",
        "stop_loss_objective",
        "e_ladder",
        "e_sl",
        "premium_gap",
        "feasible",
        "iterations",
    ]);
    let mut t = Table::new(&cols);
    let mut row = vec![
        Cell::Text(dist.to_string()),
        Cell::Text(
            match criterion {
                Criterion::VarianceCombination { .. } => "variance",
                Criterion::UtilityCombination { .. } => "utility",
            }
            .into(),
        ),
        Cell::Text(
            match mode {
                Mode::StrictFeasible => "strict",
                Mode::PremiumMatched => "match",
            }
            .into(),
        ),
        Cell::Num(cal.params.deductible),
    ];
    row.extend(cal.params.cuts.iter().map(|&m| Cell::Num(m)));
    row.extend([
        Cell::Num(cal.objective),
        Cell::Num(cal.stop_loss_objective),
        Cell::Num(cal.report.e_ceded),
        Cell::Num(cal.stop_loss_premium),
        Cell::Num(cal.premium_gap),
        Cell::Text(if cal.feasible { "yes" } else { "no" }.into()),
        Cell::Int(cal.optimizer.iterations as u64),
    ]);
    t.rows.push(row);
    if cal.objective > cal.stop_loss_objective {
        t.failures.push(format!(
            "calibrated objective {} exceeds stop-loss {}",
            cal.objective, cal.stop_loss_objective
        ));
    }
    Ok(t)
}

fn run_verify(a: VerifyArgs, s: &Settings) -> Result<Table, CliError> {
    let seed = s.seed(a.seed)?;
    let dist = parse_dist(&s.or(a.dist, "dist", "exp(mean=10)".to_string())?)?;
    let n = s.or(a.n, "n", 1_000_000)?;
    let rhos = s.list(a.rhos, "rho");
    let rhos: Vec<RiskMeasure> = if rhos.is_empty() {
        vec![RiskMeasure::Cte { alpha: 0.1 }, RiskMeasure::Var { alpha: 0.1 }]
    } else {
        rhos.iter()
            .map(|r| r.parse().map_err(config_err))
            .collect::<Result<_, _>>()?
    };
    let base = match s.pick::<String>(a.base, "base")? {
        Some(b) => parse_contract(&b)?,
        None => {
            let alpha = match rhos[0] {
                RiskMeasure::Cte { alpha } | RiskMeasure::Var { alpha } => alpha,
                RiskMeasure::Custom { .. } => 0.1,
            };
            Contract::stop_loss(dist.quantile(1.0 - alpha).map_err(config_err)?).map_err(config_err)?
        }
    };
    let other = match (
        s.pick::<String>(a.against, "against")?,
        s.pick::<String>(a.cuts, "cuts")?,
    ) {
        (Some(g), _) => parse_contract(&g)?,
        (None, Some(cuts)) => {
            let cuts = parse_list(&cuts)?;
            build_preserving_extension(&base, &cuts, dist.upper_cap())
                .map_err(failure)?
                .0
        }
        (None, None) => return Err(config_err("verify needs --cuts or --against")),
    };
    let premium = match s.pick(a.premium, "premium")? {
        Some(p) => p,
        None => expected_ceded(&dist, &base).map_err(failure)?,
    };
    let mut t = Table::new(&[
        "dist",
        "rho",
        "base",
        "other",
        "premium",
        "rho_base",
        "rho_other",
        "diff",
        "std_error",
        "n",
        "pass",
    ]);
    for rho in &rhos {
        let r = mc_verify_rho(&base, &other, &dist, rho, premium, n, seed).map_err(failure)?;
        if !r.pass {
            t.failures
                .push(format!("{rho}: diff {} exceeds 3 x {}", r.diff, r.std_error));
        }
        t.rows.push(vec![
            Cell::Text(dist.to_string()),
            Cell::Text(rho.to_string()),
            Cell::Text(base.label()),
            Cell::Text(other.label()),
            Cell::Num(premium),
            Cell::Num(r.rho_f),
            Cell::Num(r.rho_g),
            Cell::Num(r.diff),
            Cell::Num(r.std_error),
            Cell::Int(r.samples as u64),
            Cell::Text(if r.pass { "PASS" } else { "FAIL" }.into()),
        ]);
    }
    Ok(t)
}

fn run_report(a: ReportArgs, s: &Settings) -> Result<Table, CliError> {
    let dist = parse_dist(&s.or(a.dist, "dist", "exp(mean=10)".to_string())?)?;
    let alpha = s.or(a.alpha, "alpha", 0.1)?;
    let contract = match s.pick::<String>(a.contract, "contract")? {
        Some(c) => parse_contract(&c)?,
        None => Contract::stop_loss(dist.quantile(1.0 - alpha).map_err(config_err)?).map_err(config_err)?,
    };
    let omega = s.or(a.omega, "omega", 0.2)?;
    let beta = s.or(a.beta, "beta", 1.0)?;
    let premium = s.pick(a.premium, "premium")?;
    let r = RiskReport::compute(&dist, &contract, alpha, omega, beta, premium).map_err(failure)?;
    let mut t = Table::new(&RiskReport::COLUMNS);
    let mut row = vec![Cell::Text(r.dist.clone()), Cell::Text(r.contract_id.clone())];
    row.extend(
        [
            r.alpha,
            r.omega,
            r.beta,
            r.premium,
            r.e_ceded,
            r.var_ceded,
            r.var_retained,
            r.var_level,
            r.cte_total,
            r.cte_ceded,
            r.q,
            r.u,
        ]
        .map(Cell::Num),
    );
    t.rows.push(row);
    Ok(t)
}

fn render(t: &Table, format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Md => Ok(t.to_markdown(4).into_bytes()),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&t.columns).map_err(failure)?;
            for row in &t.rows {
                w.write_record(row.iter().map(Cell::full)).map_err(failure)?;
            }
            w.into_inner().map_err(failure)
        }
    }
}

fn emit(bytes: &[u8], target: Option<PathBuf>, name: &str, format: Format) -> Result<(), CliError> {
    let ext = match format {
        Format::Csv => "csv",
        Format::Md => "md",
    };
    let path = target.or_else(|| {
        std::env::var_os(OUTPUT_DIR_ENV)
            .filter(|d| !d.is_empty())
            .map(|d| PathBuf::from(d).join(format!("{name}.{ext}")))
    });
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(failure)?;
            }
            std::fs::write(&p, bytes).map_err(|e| failure(format!("{}: {e}", p.display())))
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes).map_err(failure)
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let (name, section) = match &cli.command {
        Command::Table1(_) => ("table1", "table1"),
        Command::Table2(_) => ("table2", "table2"),
        Command::Table3(_) => ("table3", "table3"),
        Command::Calibrate(_) => ("calibrate", "calibrate"),
        Command::Verify(_) => ("verify", "verify"),
        Command::Report(_) => ("report", "report"),
    };
    let s = Settings::load(cli.config.as_deref(), section)?;
    let format = s.or(cli.out, "out", Format::Csv)?;
    let output = s.pick::<PathBuf>(cli.output, "output")?;
    let table = match cli.command {
        Command::Table1(a) => {
            let cfg = calibration_config(a, &s)?;
            check_calibration(&cfg)?;
            run_table1(&cfg)
        }
        Command::Table2(a) => {
            let cfg = calibration_config(a, &s)?;
            check_calibration(&cfg)?;
            run_table2(&cfg)
        }
        Command::Table3(a) => run_table3(&estimation_config(a, &s)?),
        Command::Calibrate(a) => run_calibrate(a, &s)?,
        Command::Verify(a) => run_verify(a, &s)?,
        Command::Report(a) => run_report(a, &s)?,
    };
    emit(&render(&table, format)?, output, name, format)?;
    for f in &table.failures {
        eprintln!("FAIL {f}");
    }
    Ok(table.ok())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("reinlayer: {e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                CliError::Failure(_) => ExitCode::from(1),
            }
        }
    }
}
