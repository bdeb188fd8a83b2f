use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use isosand_core::export::GraphDocument;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn isosand(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isosand"))
        .args(args)
        .env("ISOSAND_OUT", root)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn build_graph_square_has_two_directions() {
    let dir = tempfile::tempdir().unwrap();
    let o = isosand(dir.path(), &["build-graph", "--graph", "square", "--radius", "10", "-o", "sq"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc = GraphDocument::read(&dir.path().join("sq/graph.json")).unwrap();
    assert_eq!(doc.schema_version, 1);
    assert_eq!(doc.d, 2);
    assert_eq!(doc.palette.len(), 2);
    let diag = doc.diagnostics.as_ref().unwrap();
    assert!((diag.bilipschitz.as_ref().unwrap().lower - 0.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn build_graph_multigrid_round_trips_through_checks() {
    let dir = tempfile::tempdir().unwrap();
    let o = isosand(
        dir.path(),
        &["build-graph", "--graph", "multigrid", "--d", "5", "--radius", "12", "--k", "0.3", "-o", "mg"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc = GraphDocument::read(&dir.path().join("mg/graph.json")).unwrap();
    assert_eq!(doc.d, 5);
    assert!(doc.weights.contains_key("0.3"));
    let g = doc.to_graph().unwrap();
    assert_eq!(g.num_vertices(), doc.vertices.len());
}

#[test]
fn bad_offsets_are_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = isosand(
        dir.path(),
        &["build-graph", "--graph", "multigrid", "--d", "5", "--offsets", "0.1,0.2", "--radius", "8"],
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("offsets"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&isosand(p, &["frobnicate"])), 2);
    assert_eq!(code(&isosand(p, &["simulate", "--graph", "square", "--k", "0", "-n", "100"])), 2);
    assert_eq!(code(&isosand(p, &["simulate", "--graph", "square", "--k", "0.5"])), 2);
    assert_eq!(code(&isosand(p, &["simulate", "--k", "0.5", "-n", "10"])), 2);
    assert_eq!(code(&isosand(p, &["weights", "--graph", "square", "--k", "1.2"])), 2);
}

#[test]
fn weights_at_zero_are_tangents() {
    let dir = tempfile::tempdir().unwrap();
    let o = isosand(dir.path(), &["weights", "--graph", "multigrid", "--radius", "10", "--k", "0,0.5", "-o", "w"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("PASS k=0 conductance = tan"));
    assert!(dir.path().join("w/weights_k0.5_vertices.csv").exists());
}

#[test]
fn green_cross_validates() {
    let dir = tempfile::tempdir().unwrap();
    let o = isosand(
        dir.path(),
        &["green", "--graph", "square", "--radius", "20", "--k", "0,0.5", "--cross-validate", "-o", "g"],
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let rows = read_csv(&dir.path().join("g/green_k0.5.csv"));
    assert!(!rows.is_empty());
    assert!(stdout(&o).contains("PASS k=0.5 CG vs Neumann"));
}

#[test]
fn square_scenario_runs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("square_k05_n1e4.toml");
    let cfg = cfg.to_str().unwrap();
    let a = isosand(dir.path(), &["simulate", "-c", cfg, "-o", "a"]);
    assert_eq!(code(&a), 0, "{}", stdout(&a));
    assert!(!stdout(&a).contains("FAIL"));
    let b = isosand(dir.path(), &["simulate", "-c", cfg, "-o", "b", "--workers", "3"]);
    assert_eq!(code(&b), 0);
    for name in ["state_k0.5_n10000.csv", "summary.csv"] {
        let x = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
    let svg = std::fs::read_to_string(dir.path().join("a/odometer_k0.5_n10000.svg")).unwrap();
    assert!(svg.contains(r#"<g id="predicted""#) && svg.contains(r#"<g id="empirical""#));
    assert!(svg.contains("<path"));
}

#[test]
fn multigrid_scenario_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("multigrid_d5_k03_n1e4.toml");
    let o = isosand(dir.path(), &["simulate", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(dir.path().join("multigrid_d5_k03_n1e4/report.json").exists());
}

#[test]
fn sweep_scenario_error_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("square_k05_sweep.toml");
    let o = isosand(dir.path(), &["limit-shape", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let rows = read_csv(&dir.path().join("square_k05_sweep/convergence.csv"));
    assert_eq!(rows.len(), 3);
    let errs: Vec<f64> = rows.iter().map(|r| r[6].parse().unwrap()).collect();
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
    let o = isosand(dir.path(), &["simulate", "-c", cfg.to_str().unwrap(), "-o", "sim"]);
    assert_eq!(code(&o), 0);
    assert_eq!(read_csv(&dir.path().join("sim/summary.csv")).len(), 3);
}

#[test]
fn single_n_has_one_row_and_no_trend() {
    let dir = tempfile::tempdir().unwrap();
    let o = isosand(
        dir.path(),
        &["limit-shape", "--graph", "square", "--radius", "40", "--k", "0.5", "-n", "1000", "-o", "one"],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(read_csv(&dir.path().join("one/convergence.csv")).len(), 1);
    assert!(!stdout(&o).contains("WARN"));
}

#[test]
fn non_monotone_trend_fails_unless_soft() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["limit-shape", "--graph", "square", "--radius", "60", "--k", "0.5", "-n", "10000,1000"];
    let o = isosand(dir.path(), &args);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("WARN"));
    let mut soft = args.to_vec();
    soft.push("--soft-fail");
    let o = isosand(dir.path(), &soft);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("WARN"));
}

#[test]
fn circle_sweep_scales_like_k_squared() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("circle_k_sweep.toml");
    let o = isosand(dir.path(), &["limit-shape", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let rows = read_csv(&dir.path().join("circle_k_sweep/circle.csv"));
    assert_eq!(rows.len(), 3);
    for r in &rows[1..] {
        let ratio: f64 = r[2].parse().unwrap();
        let k2: f64 = r[3].parse().unwrap();
        assert!(ratio / k2 < 2.0 && k2 / ratio < 2.0);
    }
    let last: f64 = rows[2][1].parse().unwrap();
    assert!(last < 1e-2);
}

#[test]
fn verify_runs_the_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = isosand(
        dir.path(),
        &["verify", "--graph", "square", "--radius", "40", "--k", "0.3,0.5", "-n", "3000", "--green", "--seed", "11"],
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("PASS k0.5_n3000 random order = FIFO"));
    assert!(!out.contains("FAIL"));
    assert!(dir.path().join("verify/verify.json").exists());
}
