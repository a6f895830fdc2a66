use std::path::Path;
use std::process::{Command, Output};

fn surro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surro"))
        .args(args)
        .env_remove("SURRO_LOG")
        .output()
        .expect("binary runs")
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn demo_prints_the_three_knapsack_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = surro(&["demo", "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("(   2,   17)"));
    assert!(text.contains("(  12,    7)"));
    let rows: serde_json::Value = serde_json::from_slice(&read(&dir.path().join("demo.json"))).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 3);
    assert!(dir.path().join("manifest-demo.json").is_file());
}

#[test]
fn gen_is_byte_identical_across_runs_and_workers() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, workers) in [(&a, "1"), (&b, "3")] {
        let out = surro(&["gen", "--family", "knapsack", "--n-train", "50", "--seed", "7", "--workers", workers, "--out", s(dir.path())]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["train.jsonl", "test.jsonl", "family.json"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
    let lines = String::from_utf8(read(&a.path().join("train.jsonl"))).unwrap();
    assert_eq!(lines.lines().count(), 50);
}

#[test]
fn manifest_reruns_reproduce_the_dataset() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(surro(&["gen", "--n-train", "6", "--n-test", "4", "--seed", "11", "--out", s(a.path())]).status.success());
    let manifest = a.path().join("manifest-gen.json");
    let out = surro(&["gen", "--config", s(&manifest), "--out", s(b.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["train.jsonl", "test.jsonl", "family.json"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
}

#[test]
fn train_eval_bench_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    assert!(surro(&["gen", "--n-train", "12", "--n-test", "10", "--seed", "3", "--out", d]).status.success());

    let train = surro(&["train", "--out", d, "--workers", "1"]);
    let code = train.status.code().unwrap();
    assert!(code == 0 || code == 2, "{}", String::from_utf8_lossy(&train.stderr));
    let stdout = String::from_utf8(train.stdout).unwrap();
    assert_eq!(code == 2, stdout.starts_with("NOT_CONVERGED"));
    let theta = read(&dir.path().join("theta.json"));
    assert!(dir.path().join("report.json").is_file());

    // Same config with more workers gives the same artifact.
    let other = tempfile::tempdir().unwrap();
    for f in ["train.jsonl", "test.jsonl", "family.json"] {
        std::fs::copy(dir.path().join(f), other.path().join(f)).unwrap();
    }
    surro(&["train", "--out", s(other.path()), "--workers", "4"]);
    assert_eq!(theta, read(&other.path().join("theta.json")));

    assert!(surro(&["eval", "--out", d]).status.success());
    let csv = String::from_utf8(read(&dir.path().join("eval.csv"))).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "instance,err_discrete,err_continuous,opt_gap,restored,pre_restore_delta");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    for row in rows {
        let gap: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert!(gap >= -1e-6);
    }

    assert!(surro(&["bench", "--out", d]).status.success());
    let bench = String::from_utf8(read(&dir.path().join("bench.csv"))).unwrap();
    assert!(bench.starts_with("instance,method,wall_time_s,objective,status\n"));
    assert_eq!(bench.lines().count(), 1 + 30);
    let profile = String::from_utf8(read(&dir.path().join("profile.csv"))).unwrap();
    assert!(profile.starts_with("t_s,milp_full,dfsom,milp_to_target\n"));
    for cmd in ["gen", "train", "eval", "bench"] {
        assert!(dir.path().join(format!("manifest-{cmd}.json")).is_file());
    }
}

#[test]
fn missing_dataset_is_a_path_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = surro(&["train", "--out", s(&dir.path().join("nothing"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}

#[test]
fn malformed_config_reports_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"n_train\": \"many\"\n}\n").unwrap();
    let out = surro(&["gen", "--config", s(&path)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn log_level_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_surro"))
        .args(["demo", "--out", s(dir.path())])
        .env("SURRO_LOG", "info")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("demo"));
}

#[test]
fn hybrid_flags_reach_the_family() {
    let dir = tempfile::tempdir().unwrap();
    let out = surro(&["gen", "--family", "hybrid", "--T", "4", "--S", "2", "--n-train", "2", "--n-test", "1", "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fam: serde_json::Value = serde_json::from_slice(&read(&dir.path().join("family.json"))).unwrap();
    assert_eq!(fam["family"], "hybrid");
    assert_eq!(fam["horizon"], 4);
    assert_eq!(fam["levels"], 2);
}
