use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn featacq(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_featacq"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_dataset(dir: &Path) {
    let mut text = String::new();
    for i in 0..40 {
        let t = i as f64 / 7.0;
        let a = t.sin();
        let b = (1.3 * t).cos();
        let label = if a + 0.5 * b > 0.0 { 1 } else { 0 };
        text += &format!("{a},{b},{},{},{label}\n", a + b, 2.0 * a - b);
    }
    fs::write(dir.join("d.csv"), text).unwrap();
}

#[test]
fn complete_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let args = |out| {
        [
            "complete", "--data", "d.csv", "--label-col", "last", "--observed", "0.6", "--lambda1", "1",
            "--lambda2", "1", "--seed", "7", "--out", out,
        ]
    };
    assert!(featacq(&args("a"), dir.path()).status.success());
    assert!(featacq(&args("b"), dir.path()).status.success());
    for f in ["recovered.csv", "metrics.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    let grid = fs::read_to_string(dir.path().join("a/recovered.csv")).unwrap();
    assert_eq!(grid.lines().count(), 40);
    assert!(grid.lines().all(|l| l.split(',').count() == 4));
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["observed_cells"], 96);
}

#[test]
fn simulate_writes_one_file_per_replicate_and_a_mean() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("plan.json"), r#"{"rounds": 3, "replicates": 2, "batch_size": 5}"#).unwrap();
    let o = featacq(&["simulate", "--config", "plan.json", "--out", "runs", "--strategy", "random"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let runs = dir.path().join("runs");
    for f in ["replicate_000.csv", "replicate_001.csv", "mean.csv"] {
        let text = fs::read_to_string(runs.join(f)).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "round,cumulative_cost,queried_entries,recon_rel,recon_msq,train_objective,test_accuracy,test_auc"
        );
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 3);
        assert!(rows[2].starts_with("3,10.0000000000,10,"));
    }
    let saved = fs::read_to_string(runs.join("config.json")).unwrap();
    assert!(saved.contains("\"strategy\": \"random\""));
}

#[test]
fn bench_poss_agrees_with_exhaustive_search() {
    let dir = tempfile::tempdir().unwrap();
    let o = featacq(&["bench-poss", "--pool", "10", "--trials", "100", "--seed", "3", "--out", "t.csv"], dir.path());
    assert!(o.status.success());
    let table = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(table.lines().count(), 101);
    let matches = table.lines().skip(1).filter(|l| l.ends_with(",1")).count();
    assert!(matches >= 95, "{matches}");
    assert!(stdout(&o).starts_with("agreement "));
}

#[test]
fn bound_and_lemma3_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = featacq(&["bound", "--rows", "40", "--cols", "30", "--rank", "3", "--seed", "2"], dir.path());
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["within_bound"], true);
    assert_eq!(report["omega_size"], 720);
    let o = featacq(&["lemma3", "--trials", "100", "--max-size", "8", "--seed", "1"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("held 100/100"));
}

#[test]
fn errors_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let o = featacq(&["simulate", "--out", "x", "--unknown-flag"], dir.path());
    assert!(!o.status.success());

    fs::write(dir.path().join("bad.json"), r#"{"rounds": 3, "typo_key": 1}"#).unwrap();
    let o = featacq(&["simulate", "--config", "bad.json", "--out", "x"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("typo_key"));

    let o = featacq(&["complete", "--data", "missing.csv"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("featacq: error:"));

    fs::write(dir.path().join("one.csv"), "1,2,3,1\n4,5,6,1\n").unwrap();
    let o = featacq(&["complete", "--data", "one.csv"], dir.path());
    assert!(!o.status.success());
}
