use std::path::Path;
use std::process::{Command, Output};

use sketchguard::batching::{BatchConfig, Policy, RepKind};
use sketchguard::redundancy::MappingKind;
use sketchguard::simnet::{PartitionSpec, ShardPolicy, SimConfig, SketchSpec};

fn sg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sketchguard"))
        .args(args)
        .env_remove("SKETCHGUARD_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gen_trace(dir: &Path) -> String {
    let p = dir.join("trace.txt");
    let o = sg(&["gen-trace", "--flows", "300", "--items", "4000", "--seed", "5", "--out", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    p.to_str().unwrap().to_string()
}

fn write_config(dir: &Path, mapping: MappingKind, f: usize) -> String {
    let cfg = SimConfig {
        k: 4,
        f,
        mapping,
        partition: PartitionSpec::default(),
        sketch: SketchSpec::Dims { d: 4, w: 64 },
        batch: BatchConfig::new(50, Policy::Incremental, RepKind::CntDiff),
        cycles: 10,
        seed: 1,
        shard: ShardPolicy::Hash,
        verify: true,
    };
    let p = dir.join(format!("{mapping}.json"));
    std::fs::write(&p, serde_json::to_string(&cfg).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn matrix_check_prints_determinants() {
    let o = sg(&["matrix", "--k", "5", "--f", "3", "--check"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.lines().any(|l| l.split_whitespace().eq(["1", "2", "4", "7", "11"])), "{s}");
    assert!(s.contains("determinants: 1,3,6,3,8,6,1,3,3,1"), "{s}");
    assert!(s.contains("spans: ok"));
}

#[test]
fn recover_demo_prints_equations() {
    let o = sg(&["recover-demo", "--k", "5", "--f", "3", "--failed", "D1,D2,D3", "--verify-items", "500"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("D1 = 2R1 - 2R2 + R3 - D4 - 3D5"), "{s}");
    assert!(s.contains("verify: ok"), "{s}");

    let o = sg(&["recover-demo", "--k", "4", "--mapping", "distributed", "--failed", "0,1,2"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_and_io_errors_exit_two() {
    assert_eq!(sg(&["matrix", "--k", "0", "--f", "1"]).status.code(), Some(2));
    assert_eq!(sg(&["matrix", "--k", "3"]).status.code(), Some(2));
    assert_eq!(sg(&["bogus"]).status.code(), Some(2));
    let o = sg(&["beta", "--trace", "/nonexistent/trace", "--B", "10", "--out", "/tmp/x.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(sg(&["--help"]).status.code(), Some(0));
}

#[test]
fn gen_trace_honours_seed_env() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    let o = sg(&["gen-trace", "--flows", "50", "--items", "200", "--seed", "9", "--out", a.to_str().unwrap()]);
    assert!(o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_sketchguard"))
        .args(["gen-trace", "--flows", "50", "--items", "200", "--out", b.to_str().unwrap()])
        .env("SKETCHGUARD_SEED", "9")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn simulate_writes_reports_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let trace = gen_trace(dir.path());
    let cfg = write_config(dir.path(), MappingKind::Dedicated, 1);
    let mut digests = Vec::new();
    for run in ["r1", "r2"] {
        let out = dir.path().join(run);
        let o = sg(&["simulate", "--config", &cfg, "--trace", &trace, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("report.csv").exists());
        let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["command"], "simulate");
        let r: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
        digests.push(r["final_sum_digest"].clone());
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn simulate_unrecoverable_needs_allow_loss() {
    let dir = tempfile::tempdir().unwrap();
    let trace = gen_trace(dir.path());
    let cfg = write_config(dir.path(), MappingKind::Distributed, 1);
    let failures = dir.path().join("failures.json");
    std::fs::write(&failures, r#"[{"node":0,"cycle":3},{"node":1,"cycle":3},{"node":2,"cycle":3}]"#).unwrap();
    let out = dir.path().join("out");
    let base = ["simulate", "--config", &cfg, "--trace", &trace, "--failures", failures.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_eq!(sg(&base).status.code(), Some(1));
    let mut args = base.to_vec();
    args.push("--allow-loss");
    assert_eq!(sg(&args).status.code(), Some(0));
}

#[test]
fn beta_and_mre_write_csv_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let trace = gen_trace(dir.path());
    let beta = dir.path().join("beta.csv");
    let o = sg(&["beta", "--trace", &trace, "--B", "50,200", "--out", beta.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(beta.exists() && dir.path().join("beta.csv.manifest.json").exists());

    let mre = dir.path().join("mre.csv");
    let o = sg(&["mre", "--trace", &trace, "--B", "100", "--fail-at", "0.3,0.6", "--out", mre.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(&mre).unwrap();
    assert_eq!(rows.lines().count(), 3, "{rows}");
}
