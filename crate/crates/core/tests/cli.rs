use std::path::Path;
use std::process::{Command, Output};

use pipevd::io::{read_matrix, read_vector, write_matrix};
use pipevd::pipeline::CostModel;

fn pipevd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pipevd")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = pipevd(&["gen", "--dist", "geometric", "--n", "96", "--seed", "7", "--out", p(d)]);
        assert_eq!(code(&out), 0, "{out:?}");
    }
    assert_eq!(std::fs::read(a.join("matrix.evd")).unwrap(), std::fs::read(b.join("matrix.evd")).unwrap());
    assert_eq!(std::fs::read(a.join("spectrum.evd")).unwrap(), std::fs::read(b.join("spectrum.evd")).unwrap());
}

#[test]
fn gen_sidecar_follows_cluster0() {
    let dir = tempfile::tempdir().unwrap();
    let out = pipevd(&["gen", "--dist", "cluster0", "--n", "64", "--cond", "1e4", "--lmax", "10", "--out", p(dir.path())]);
    assert_eq!(code(&out), 0);
    let lambda = read_vector(dir.path().join("spectrum.evd")).unwrap();
    assert_eq!(lambda.len(), 64);
    assert_eq!(lambda.iter().filter(|&&x| x == 10.0).count(), 1);
    assert_eq!(lambda.iter().filter(|&&x| x == 10.0 / 1e4).count(), 63);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&pipevd(&["gen", "--dist", "lognormal"])), 2);
    assert_eq!(code(&pipevd(&["solve", "--n", "32", "--band", "64", "--out", "/nonexistent/dir/x"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = pipevd(&["solve", "--n", "32", "--band", "4", "--skew", "0.3", "--out", p(dir.path())]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&pipevd(&["verify", "--out", p(&dir.path().join("missing"))])), 2);
}

#[test]
fn single_worker_orders_write_identical_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for order in ["sequential", "pipelined"] {
        let out_dir = dir.path().join(order);
        let out = pipevd(&["solve", "--n", "80", "--band", "8", "--workers", "1", "--order", order, "--out", p(&out_dir)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        files.push((std::fs::read(out_dir.join("lambda.evd")).unwrap(), std::fs::read(out_dir.join("q.evd")).unwrap()));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn conventional_and_pipelined_both_verify() {
    let dir = tempfile::tempdir().unwrap();
    let gen = pipevd(&["gen", "--dist", "normal", "--n", "96", "--seed", "3", "--out", p(dir.path())]);
    assert_eq!(code(&gen), 0);
    let matrix = dir.path().join("matrix.evd");
    for order in ["conventional", "pipelined"] {
        let out_dir = dir.path().join(order);
        let args = ["solve", "--matrix", p(&matrix), "--workers", "3", "--band", "8", "--order", order, "--out", p(&out_dir)];
        assert_eq!(code(&pipevd(&args)), 0);
        let v = pipevd(&["verify", "--out", p(&out_dir), "--matrix", p(&matrix)]);
        assert_eq!(code(&v), 0);
        let report: serde_json::Value = serde_json::from_str(&stdout(&v)).unwrap();
        assert!(report["backward"].as_f64().unwrap() <= 1e-15);
        assert!(report["ortho"].as_f64().unwrap() <= 1e-15);
    }
}

#[test]
fn corrupted_eigenvectors_fail_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out = pipevd(&["solve", "--n", "64", "--band", "8", "--workers", "2", "--out", p(dir.path())]);
    assert_eq!(code(&out), 0);
    assert_eq!(code(&pipevd(&["verify", "--out", p(dir.path())])), 0);
    let q_path = dir.path().join("q.evd");
    let mut q = read_matrix(&q_path).unwrap();
    q[(5, 7)] += 1e-3;
    write_matrix(&q_path, &q).unwrap();
    assert_eq!(code(&pipevd(&["verify", "--out", p(dir.path())])), 1);
}

#[test]
fn values_only_solve_is_checked_against_the_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["solve", "--n", "128", "--dist", "arithmetic", "--band", "16", "--workers", "4", "--vectors", "off"];
    let out = pipevd(&[&args[..], &["--out", p(dir.path())]].concat());
    assert_eq!(code(&out), 0);
    assert!(!dir.path().join("q.evd").exists());
    let v = pipevd(&["verify", "--out", p(dir.path())]);
    assert_eq!(code(&v), 0, "{}", stdout(&v));
    let report: serde_json::Value = serde_json::from_str(&stdout(&v)).unwrap();
    assert!(report["max_gap"].as_f64().unwrap() <= report["tolerance"].as_f64().unwrap());
}

#[test]
fn solve_writes_a_manifest_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = pipevd(&["solve", "--n", "64", "--band", "8", "--workers", "2", "--skew", "auto", "--out", p(dir.path())]);
    assert_eq!(code(&out), 0);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["workers"], 2);
    assert_eq!(m["config"]["back_skew"], "auto");
    assert_eq!(m["generated"]["dist"], "uniform");
    assert!(m["throughput"].as_f64().unwrap() > 0.0);
    assert!(m["accuracy"]["bound_ok"].as_bool().unwrap());
    for key in ["lambda", "q", "trace", "ledger", "flops"] {
        assert!(Path::new(m["artifacts"][key].as_str().unwrap()).exists(), "{key}");
    }
    let ledger = std::fs::read_to_string(dir.path().join("ledger.csv")).unwrap();
    assert!(ledger.starts_with("src,dst,stage,words\n") && ledger.contains("w0,all,SBR,"));
    let flops = std::fs::read_to_string(dir.path().join("flops.csv")).unwrap();
    assert!(flops.starts_with("stage,multiply_adds\n") && flops.contains("BC-Back,"));
}

#[test]
fn simulate_reports_makespans() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("unit.json");
    std::fs::write(&model, CostModel::unit(64).to_json()).unwrap();
    let out = pipevd(&["simulate", "--model", p(&model), "--workers", "2", "--band", "8"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("pipelined makespan: 6\n") && text.contains("sequential makespan: 7\n"), "{text}");

    let out = pipevd(&["simulate", "--n", "1024", "--workers", "1"]);
    assert!(stdout(&out).contains("ratio: 1.0000"));

    let trace = dir.path().join("sim.ndjson");
    let out = pipevd(&["simulate", "--workers", "4", "--trace", p(&trace)]);
    let ratio: f64 = stdout(&out).lines().last().unwrap().trim_start_matches("ratio: ").parse().unwrap();
    assert!(ratio < 1.0);
    assert!(std::fs::read_to_string(trace).unwrap().lines().count() > 4);

    std::fs::write(&model, "{\"unit\": true}").unwrap();
    assert_eq!(code(&pipevd(&["simulate", "--model", p(&model)])), 2);
}
