use std::fs;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_reinlayer"));
    c.env_remove("REINLAYER_OUTPUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn help_lists_subcommands_and_flags() {
    let o = run(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for sub in ["table1", "table2", "table3", "calibrate", "verify", "report"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    let o = run(&["table3", "--help"]);
    let text = stdout(&o);
    for flag in [
        "--claim-dist",
        "--priors",
        "--n",
        "--reps",
        "--init",
        "--seed",
        "--out",
        "--output",
        "--config",
    ] {
        assert!(text.contains(flag), "{flag} missing");
    }
}

#[test]
fn table1_single_row_csv() {
    let o = run(&["table1", "--dist", "exp(mean=10)"]);
    assert_eq!(o.status.code(), Some(0));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let headers = rdr.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let d: f64 = rows[0][col("d_alpha")].parse().unwrap();
    let e: f64 = rows[0][col("e_sl")].parse().unwrap();
    assert!((d - 23.0259).abs() < 1e-3);
    assert!((e - 1.0).abs() < 1e-3);
    assert_eq!(&rows[0][col("improved")], "yes");
}

#[test]
fn tables_are_byte_identical_across_runs() {
    for args in [
        vec!["table1"],
        vec!["table2"],
        vec!["table3", "--reps", "2", "--rounds", "2", "--grid", "12", "--seed", "11"],
    ] {
        let a = run(&args);
        let b = run(&args);
        assert!(a.status.success(), "{args:?}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn markdown_uses_four_decimals() {
    let o = run(&["report", "--contract", "stoploss:5", "--out", "md"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("| dist | contract_id |"));
    assert!(text.contains("| 0.1000 |"));
}

#[test]
fn stochastic_commands_need_a_seed() {
    assert_eq!(run(&["table3"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--cuts", "30,40"]).status.code(), Some(2));
}

#[test]
fn bad_input_is_a_config_error() {
    assert_eq!(run(&["report", "--dist", "pareto(a=1)"]).status.code(), Some(2));
    assert_eq!(run(&["table1", "--alpha", "1.5"]).status.code(), Some(2));
    assert_eq!(run(&["table1", "--out", "xlsx"]).status.code(), Some(2));
    assert_eq!(run(&["report", "--contract", "xl:3"]).status.code(), Some(2));
}

#[test]
fn verify_pass_and_adversarial_fail() {
    let o = run(&["verify", "--seed", "5", "--n", "100000", "--cuts", "30,40,55"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("PASS"));
    let o = run(&[
        "verify",
        "--seed",
        "5",
        "--n",
        "200000",
        "--against",
        "pl:11.51/17.27/28.78",
        "--rho",
        "cte:0.1",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    fs::write(
        &cfg,
        "out = md\n\n[report]\ndist = exp(mean=4)\ncontract = stoploss:9\nalpha = 0.05\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let o = run(&["report", "--config", cfg]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("exp(mean=4)") && text.contains("| 0.0500 |"));
    let o = run(&["report", "--config", cfg, "--alpha", "0.2", "--out", "csv"]);
    let text = stdout(&o);
    assert!(text.contains(",0.2,"), "{text}");
    assert!(run(&["report", "--config", "/nonexistent.ini"]).status.code() == Some(2));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["report", "--out", "md"])
        .env("REINLAYER_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let written = fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(written.contains("stoploss:"));
    let explicit = dir.path().join("sub/x.csv");
    let o = run(&["report", "--output", explicit.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(fs::read_to_string(explicit).unwrap().starts_with("dist,contract_id"));
}
