use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ddm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddm")).args(args).output().expect("spawn ddm")
}

fn code(args: &[&str]) -> i32 {
    ddm(args).status.code().expect("exit code")
}

fn stdout(args: &[&str]) -> String {
    let out = ddm(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

const SMALL_SWEEP: [&str; 10] = ["--m", "4", "--n", "10", "--iters", "3", "--cov-samples", "3", "--pilot-draws", "500"];

fn sweep(extra: &[&str]) -> Vec<String> {
    let mut args = vec!["ddm-sweep"];
    args.extend(SMALL_SWEEP);
    args.extend(["--block-size", "5"]);
    args.extend(extra);
    if !extra.contains(&"--eval-samples") {
        args.extend(["--eval-samples", "200"]);
    }
    stdout(&args).lines().map(String::from).collect()
}

#[test]
fn invalid_arguments_exit_2() {
    assert_eq!(code(&["ddm-sweep", "--no-such-flag"]), 2);
    assert_eq!(code(&["ddm-sweep", "--p-grid", "0.5,1.2"]), 2);
    assert_eq!(code(&["ddm-sweep", "--designs", "matching"]), 2);
    assert_eq!(code(&["mse-sweep", "--model", "cubic-only"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
}

#[test]
fn help_exits_0() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["ddm-sweep", "--help"]), 0);
}

#[test]
fn missing_files_exit_4() {
    assert_eq!(code(&["plot", "--input", "/nonexistent/results.csv"]), 4);
    assert_eq!(code(&["ddm-sweep", "--config", "/nonexistent/run.toml"]), 4);
    assert_eq!(code(&["gen-data", "--kind", "ingest", "--input", "/nonexistent/x.csv"]), 4);
}

#[test]
fn malformed_config_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "bad.toml");
    std::fs::write(&cfg, "sead = 3\n").unwrap();
    assert_eq!(code(&["ddm-sweep", "--config", &cfg]), 2);
}

#[test]
fn flags_override_config_and_config_overrides_defaults() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "run.toml");
    std::fs::write(&cfg, "seed = 17\ndesigns = \"bernoulli\"\np_grid = [0.5, 0.75]\n").unwrap();
    let from_config = sweep(&["--config", &cfg]);
    assert!(from_config[0].contains("seed=17"), "{}", from_config[0]);
    assert!(from_config[2..].iter().all(|l| l.starts_with("bernoulli,")));
    assert!(from_config.iter().any(|l| l.starts_with("bernoulli,0.75,")));

    let flagged = sweep(&["--config", &cfg, "--seed", "3", "--p-grid", "0.6"]);
    assert!(flagged[0].contains("seed=3"));
    assert!(flagged[2..].iter().all(|l| l.starts_with("bernoulli,0.6,")));

    let defaults = sweep(&["--designs", "bernoulli"]);
    assert!(defaults[0].contains("seed=1"));
}

#[test]
fn results_have_schema_header_and_columns() {
    let lines = sweep(&["--designs", "bernoulli,complete", "--p-grid", "0.5", "--reps", "2"]);
    assert_eq!(lines[0], "# schema=ddm-results/v1 command=ddm-sweep seed=1");
    assert_eq!(lines[1], "design,p,phi,metric,value,ci_lo,ci_hi,rep");
    for line in &lines[2..] {
        assert_eq!(line.split(',').count(), 8, "{line}");
    }
    assert!(lines.iter().any(|l| l.ends_with(",all")));
}

#[test]
fn bernoulli_sweep_agrees_with_closed_form() {
    let lines = sweep(&["--designs", "bernoulli", "--p-grid", "0.5,0.9", "--reps", "1", "--eval-samples", "20000"]);
    for p in ["0.5", "0.9"] {
        let field = |metric: &str| -> Vec<f64> {
            let line = lines
                .iter()
                .find(|l| l.starts_with(&format!("bernoulli,{p},")) && l.contains(&format!(",{metric},")))
                .unwrap_or_else(|| panic!("no {metric} row for p = {p}"));
            line.split(',').skip(4).take(3).map(|v| v.parse().unwrap()).collect()
        };
        let mc = field("ddm_objective");
        let exact = field("ddm_objective_closed_form")[0];
        // 4-sigma band instead of the printed 95% interval
        let half = (mc[2] - mc[1]) / 2.0 / 1.96 * 4.0;
        assert!((mc[0] - exact).abs() <= half, "p = {p}: {} vs {exact}", mc[0]);
    }
}

#[test]
fn output_file_matches_stdout() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "r.csv");
    let args = ["gen-data", "--kind", "random", "--m", "3", "--n", "5", "--seed", "9"];
    let printed = stdout(&args);
    let mut with_out = args.to_vec();
    with_out.extend(["--out", &out]);
    stdout(&with_out);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), printed);
}

#[test]
fn plot_draws_one_series_per_design() {
    let dir = TempDir::new().unwrap();
    let results = path(&dir, "r.csv");
    let mut args = vec!["ddm-sweep"];
    args.extend(SMALL_SWEEP);
    args.extend(["--block-size", "5", "--designs", "bernoulli,complete,gsw", "--p-grid", "0.5,0.7", "--out", &results]);
    stdout(&args);
    let svg = stdout(&["plot", "--input", &results]);
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert_eq!(svg.matches(r#"<g class="series""#).count(), 3);
    assert_eq!(svg.matches(r#"class="curve""#).count(), 3);
    assert!(svg.contains(r#"class="axes""#));
}

#[test]
fn plot_of_empty_results_is_not_an_error() {
    let dir = TempDir::new().unwrap();
    let results = path(&dir, "empty.csv");
    std::fs::write(
        &results,
        "# schema=ddm-results/v1 command=ddm-sweep seed=1\ndesign,p,phi,metric,value,ci_lo,ci_hi,rep\n",
    )
    .unwrap();
    let svg = stdout(&["plot", "--input", &results]);
    assert_eq!(svg.matches(r#"<g class="series""#).count(), 0);
}

#[test]
fn plot_rejects_unknown_schema() {
    let dir = TempDir::new().unwrap();
    let results = path(&dir, "old.csv");
    std::fs::write(&results, "# schema=ddm-results/v0\ndesign,p\n").unwrap();
    assert_eq!(code(&["plot", "--input", &results]), 2);
}

#[test]
fn hardness_report_checks_planted_instance() {
    let text = stdout(&["hardness-demo", "--seed", "2"]);
    assert!(text.starts_with("# ddm-hardness-report/v1"));
    assert!(text.contains("unsplit sets: 0"));
    assert!(!text.contains("FAILED"), "{text}");
    assert!(text.contains("five-atom design"));
}

#[test]
fn hardness_report_flags_bad_witness() {
    let dir = TempDir::new().unwrap();
    let inst = path(&dir, "inst.txt");
    // one set over all four elements: all-plus leaves it unsplit
    std::fs::write(&inst, "4 1\n1 2 3 4\n").unwrap();
    let text = stdout(&["hardness-demo", "--input", &inst, "--witness", "1,1,1,1"]);
    assert!(text.contains("invalid witness"), "{text}");
    assert!(text.contains("skipped"));
}

#[test]
fn ingest_round_trip_through_gen_data() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "x.csv");
    std::fs::write(&input, "age,income,score\n1,10,3\n2,30,1\n3,20,2\n4,50,7\n5,40,5\n").unwrap();
    let text = stdout(&["gen-data", "--kind", "ingest", "--input", &input, "--seed", "1"]);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# schema=ddm-data/v1 kind=ingest"));
    let rows: Vec<Vec<f64>> = lines
        .filter(|l| !l.starts_with('#') && !l.chars().next().unwrap().is_alphabetic())
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.len() == 5));
    let max_norm = (0..5)
        .map(|c| rows.iter().map(|r| r[c] * r[c]).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    assert!((max_norm - 1.0).abs() < 1e-9);
}

#[test]
fn constant_covariate_is_invalid_input() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "x.csv");
    std::fs::write(&input, "1,2\n1,3\n1,4\n").unwrap();
    assert_eq!(code(&["gen-data", "--kind", "ingest", "--input", &input]), 2);
}

#[test]
fn mse_sweep_reports_ratio_rows() {
    let text = stdout(&[
        "mse-sweep", "--n", "24", "--d", "20", "--p-grid", "0.5", "--iters", "3", "--cov-samples", "3", "--reps", "50",
        "--block-size", "4", "--pilot-draws", "500", "--phi", "0.5",
    ]);
    assert!(text.lines().any(|l| l.starts_with("mwu,0.5,0.5,best_other_ratio,")), "{text}");
    assert!(text.lines().any(|l| l.starts_with("bernoulli,0.5,") && l.contains(",mse_closed_form,")));
}

#[test]
fn sequential_and_parallel_runs_match() {
    let a = sweep(&["--designs", "mwu,gsw", "--p-grid", "0.6", "--reps", "1"]);
    let b = sweep(&["--designs", "mwu,gsw", "--p-grid", "0.6", "--reps", "1", "--sequential"]);
    assert_eq!(a, b);
}

#[test]
fn gen_data_writes_to_unwritable_path_exits_4() {
    assert!(!Path::new("/nonexistent").exists());
    assert_eq!(code(&["gen-data", "--kind", "random", "--out", "/nonexistent/dir/out.csv"]), 4);
}
