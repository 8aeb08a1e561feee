use std::path::Path;
use std::process::Command as Process;

use isddp::cli::{
    emit_report, parse_args, read_lower_bounds, Command, Report, COMPARISON_COLUMNS, RUN_COLUMNS,
};
use isddp::model::{inventory_instance, save_model};
use isddp::portfolio::{compare_policies, generate_instance, PortfolioConfig};
use isddp::sddp::{self, ErrorSchedule, RunOptions, StoppingRule, UpperBoundMode};

fn bin() -> Process {
    Process::new(env!("CARGO_BIN_EXE_isddp"))
}

fn write_tiny(dir: &Path) -> String {
    let path = dir.join("tiny.json");
    std::fs::write(&path, save_model(&inventory_instance(3, 2, 5))).unwrap();
    path.to_string_lossy().into_owned()
}

fn exit_code(args: &[&str]) -> i32 {
    match parse_args(args) {
        Ok(_) => 0,
        Err(e) => e.exit_code(),
    }
}

#[test]
fn sddp_mode_parses_to_the_exact_schedule() {
    let cfg = parse_args(["isddp", "solve", "--model", "m.json", "--mode", "sddp", "--gap-tol", "0.1"]).unwrap();
    let Command::Solve(s) = cfg.command else { panic!("expected solve") };
    assert_eq!(s.schedule, ErrorSchedule::Exact);
    assert_eq!(s.gap_tol, 0.1);
    assert_eq!(s.model, Path::new("m.json"));
}

#[test]
fn relative_decay_descriptor_is_echoed() {
    let cfg = parse_args(["isddp", "solve", "--model", "m.json", "--schedule", "reldecay:0.1,0.01"]).unwrap();
    let Command::Solve(s) = cfg.command else { panic!("expected solve") };
    assert_eq!(s.schedule, ErrorSchedule::RelativeDecay { eps_bar: 0.1, eps0: 0.01 });
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(exit_code(&["isddp", "solve", "--model", "m.json", "--schedule", "reldecay:0.01,0.1"]), 2);
    assert_eq!(exit_code(&["isddp", "solve", "--model", "m.json", "--bogus"]), 2);
    assert_eq!(exit_code(&["isddp", "solve", "--model", "m.json", "--schedule", "const:0.1"]), 2);
    assert_eq!(exit_code(&["isddp", "solve", "--model", "m.json", "--mode", "sddp", "--schedule", "captable:9"]), 2);
    assert_eq!(exit_code(&["isddp", "solve", "--model", "m.json", "--mode", "isddp"]), 2);
    assert_eq!(exit_code(&["isddp", "solve", "--model", "m.json", "--ub", "window:1"]), 2);
    assert_eq!(exit_code(&["isddp", "frobnicate"]), 2);
    assert_eq!(exit_code(&["isddp", "--threads", "0", "verify-nlcuts"]), 2);
    assert_eq!(exit_code(&["isddp", "solve", "--model", "m.json", "--schedule", "captable:12", "--threads", "2"]), 0);
}

#[test]
fn thread_count_falls_back_to_the_environment() {
    let out = bin().args(["verify-nlcuts", "--list"]).env("ISDDP_THREADS", "0").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["verify-nlcuts", "--list"]).env("ISDDP_THREADS", "2").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("square-coupling"));
}

fn run_report(iters: usize) -> sddp::RunReport {
    let options = RunOptions {
        stopping: StoppingRule { gap_tol: f64::NEG_INFINITY, max_iters: iters, ub_every: 1 },
        upper_bound: UpperBoundMode::Window { samples: 10 },
        record_time: false,
        ..RunOptions::default()
    };
    sddp::run(&inventory_instance(3, 2, 5), &ErrorSchedule::Exact, &options, 0).unwrap()
}

#[test]
fn empty_run_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    emit_report(Report::Run(&run_report(0)), &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{}\n", RUN_COLUMNS.join(",")));
}

#[test]
fn three_iterations_read_back_with_monotone_lower_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    emit_report(Report::Run(&run_report(3)), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let rows = read_lower_bounds(&text).unwrap();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert!(rows.windows(2).all(|w| w[1].1 >= w[0].1));
    // The first row has no upper bound yet: a window needs two costs.
    assert!(text.lines().nth(1).unwrap().contains(",,,,"));
}

#[test]
fn comparison_report_is_a_single_row() {
    let model = generate_instance(&PortfolioConfig::new(2, 3, 2, 1));
    let r = compare_policies(&model, &ErrorSchedule::Exact, &ErrorSchedule::PivotCapTable { i_max: 4 }, 4, 20, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    emit_report(Report::Comparison(&r), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], COMPARISON_COLUMNS.join(","));
    assert!(lines[0].contains("policy_gap_percent") && lines[0].contains("work_reduction_percent"));
    assert_eq!(lines[1].split(',').count(), COMPARISON_COLUMNS.len());
}

#[test]
fn solve_then_verify_and_simulate_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_tiny(dir.path());
    let report = dir.path().join("run.csv");
    let cuts = dir.path().join("cuts.csv");
    let out = bin()
        .args(["solve", "--model", &model, "--mode", "sddp", "--ub", "none", "--max-iters", "12"])
        .args(["--report", report.to_str().unwrap(), "--cuts", cuts.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("iterations 12"));
    assert_eq!(read_lower_bounds(&std::fs::read_to_string(&report).unwrap()).unwrap().len(), 12);

    let out = bin().args(["verify-cuts", "--model", &model, "--cuts", cuts.to_str().unwrap(), "--samples", "50"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).matches("pass").count(), 2);

    let out = bin().args(["simulate", "--model", &model, "--cuts", cuts.to_str().unwrap(), "--sim", "40"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("scenarios 40"));

    // Lift one cut well above the cost-to-go.
    let text = std::fs::read_to_string(&cuts).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[3].split(',').map(String::from).collect();
    fields[2] = "1000".into();
    lines[3] = fields.join(",");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let out = bin().args(["verify-cuts", "--model", &model, "--cuts", bad.to_str().unwrap(), "--samples", "20"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn solver_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let infeasible = r#"{"horizon": 2, "state_dims": [1, 1], "initial_state": [0.0],
        "stages": [
            {"realizations": [{"A": [[1.0]], "B": [[0.0]], "b": [1.0], "c": [1.0], "p": 1.0}]},
            {"realizations": [{"A": [[1.0]], "B": [[1.0]], "b": [-1.0], "c": [1.0], "p": 1.0}]}
        ]}"#;
    let path = dir.path().join("bad.json");
    std::fs::write(&path, infeasible).unwrap();
    let out = bin().args(["solve", "--model", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
    let out = bin().args(["solve", "--model", dir.path().join("missing.json").to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn report_goes_to_stdout_without_a_path() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_tiny(dir.path());
    let out = bin().args(["solve", "--model", &model, "--schedule", "vanish:1,1", "--max-iters", "4", "--ub", "none"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(read_lower_bounds(&text).unwrap().len(), 4);
}

#[test]
fn bench_writes_summary_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("bench.csv");
    let out = bin()
        .args(["bench-portfolio", "--M", "3", "--T", "3", "--n", "2", "--seed", "2", "--iters", "5", "--sim", "30"])
        .args(["--out", summary.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&summary).unwrap();
    assert!(text.starts_with("M,T,n,seed,i_max,iterations,"));
    assert_eq!(text.lines().count(), 2);
    let traces = std::fs::read_to_string(dir.path().join("bench-traces.csv")).unwrap();
    assert_eq!(traces.lines().count(), 1 + 2 * 5);
    assert!(traces.lines().nth(6).unwrap().starts_with("isddp,1,"));
}

#[test]
fn verify_nlcuts_reports_a_table() {
    let out = bin().args(["verify-nlcuts", "--fixture", "box-active-sum", "--x-step", "0.01"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().next().unwrap().starts_with("fixture"));
    assert!(text.lines().nth(1).unwrap().starts_with("box-active-sum"));
    assert!(text.lines().nth(1).unwrap().ends_with("pass"));
    let out = bin().args(["verify-nlcuts", "--fixture", "no-such-fixture"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
