use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn eh_sched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eh-sched"))
        .args(args)
        .env("EH_SCHED_LOG", "error")
        .output()
        .expect("binary runs")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn metric(dir: &Path, key: &str) -> f64 {
    csv_rows(&dir.join("metrics.csv"))
        .into_iter()
        .find(|r| r[0] == key)
        .unwrap_or_else(|| panic!("no {key} in metrics.csv"))[1]
        .parse()
        .unwrap()
}

fn write(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_builtin_writes_all_artifacts() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = eh_sched(&["run", "table1-s1tilde", "--out", out]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stdout).contains("utility 75.73"));

    assert!((metric(dir.path(), "utility") - 75.7325).abs() < 0.01);
    assert!((metric(dir.path(), "utility_improvement_pct") - 9.6133).abs() < 0.3);
    assert!(metric(dir.path(), "jain_index") > 0.0);
    assert!(metric(dir.path(), "bits_4") > 0.0);

    let sched = csv_rows(&dir.path().join("schedule.csv"));
    assert_eq!(sched.len(), 6);
    assert_eq!(sched[0][0], "p");
    assert_eq!(sched[0].len(), 11);
    for (n, row) in sched[1..].iter().enumerate() {
        assert_eq!(row[0], format!("tau_{n}"));
    }
    let trace = csv_rows(&dir.path().join("trace.csv"));
    assert_eq!(trace[0], ["iter", "utility"]);
    let us: Vec<f64> = trace[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(us.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn one_user_one_slot_spends_everything() {
    let dir = TempDir::new().unwrap();
    let file = write(
        &dir,
        "one.json",
        r#"{"name": "one", "path_loss_db": [25], "slot_lengths": [4], "harvests": [8]}"#,
    );
    let out = dir.path().join("out");
    let res = eh_sched(&["run", &file, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let sched = csv_rows(&out.join("schedule.csv"));
    assert_eq!(sched, vec![vec!["p", "2"], vec!["tau_0", "4"]]);
}

#[test]
fn single_early_harvest_is_spread() {
    let dir = TempDir::new().unwrap();
    let file = write(
        &dir,
        "early.json",
        r#"{
  "name": "early",
  "path_loss_db": [25, 30, 35],
  "slot_lengths": [10, 10, 10, 10, 10],
  "harvests": [60, 0, 0, 0, 0]
}"#,
    );
    let out = dir.path().join("out");
    let res = eh_sched(&["run", &file, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let sched = csv_rows(&out.join("schedule.csv"));
    let p: Vec<f64> = sched[0][1..].iter().map(|v| v.parse().unwrap()).collect();
    assert!(p.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-5)), "{p:?}");
    let spent: f64 = p.iter().map(|x| 10.0 * x).sum();
    assert!(spent <= 60.0 * (1.0 + 1e-5));
    let trace = csv_rows(&out.join("trace.csv"));
    let us: Vec<f64> = trace[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(us.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn schema_errors_name_the_line() {
    let dir = TempDir::new().unwrap();
    let file = write(
        &dir,
        "bad.json",
        "{\n  \"name\": \"bad\",\n  \"path_loss_db\": [25],\n  \"slot_lengths\": [10, -1],\n  \"harvests\": [1, 2]\n}\n",
    );
    let res = eh_sched(&["run", &file, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("bad.json:4:"), "{err}");

    let file = write(&dir, "typo.json", "{\n  \"name\": \"x\",\n  \"path_loss\": [25]\n}\n");
    let res = eh_sched(&["run", &file]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("typo.json:3:"));

    let res = eh_sched(&["run", "no-such-scenario"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn iteration_cap_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let file = write(
        &dir,
        "capped.json",
        r#"{
  "name": "capped",
  "path_loss_db": [25, 28, 31, 34, 37],
  "slot_lengths": [10, 12, 5, 7, 4, 15, 20, 2, 10, 15],
  "harvests": [20, 100, 1, 1, 1, 70, 100, 1, 10, 40],
  "solver": {"max_bcd_iters": 2}
}"#,
    );
    let res = eh_sched(&["run", &file, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(csv_rows(&dir.path().join("trace.csv")).len(), 6);
}

#[test]
fn multistart_reports_the_best_run() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = eh_sched(&["run", "table1-s1tilde", "--out", out, "--multistart", "3", "--seed", "11"]);
    assert_eq!(res.status.code(), Some(0));
    assert!(metric(dir.path(), "utility") >= 75.7325 - 1e-4);
}

#[test]
fn reproduce_table1() {
    let dir = TempDir::new().unwrap();
    let res = eh_sched(&["reproduce", "table1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("table1.csv"));
    assert_eq!(rows[0][..4], ["scenario", "utility", "baseline_utility", "improvement_pct"]);
    let expected = [75.7273, 75.7325, 78.2339, 78.2314];
    assert_eq!(rows.len(), 5);
    for (row, u) in rows[1..].iter().zip(expected) {
        assert!((row[1].parse::<f64>().unwrap() - u).abs() < 0.01, "{row:?}");
        assert!(dir.path().join(&row[0]).join("schedule.csv").exists());
    }
}

#[test]
fn reproduce_table2() {
    let dir = TempDir::new().unwrap();
    let res = eh_sched(&["reproduce", "table2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("table2.csv"));
    assert_eq!(rows.len(), 7);
    let seq2 = &rows[2];
    assert_eq!(seq2[2], "20 100 1 1 1 70 100 1 10 40");
    assert!((seq2[5].parse::<f64>().unwrap() - 7.85).abs() < 0.1);
}

#[test]
fn reproduce_user_sweep() {
    let dir = TempDir::new().unwrap();
    let res = eh_sched(&["reproduce", "sweep-users", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("sweep_users.csv"));
    assert_eq!(rows.len(), 1 + 3 * 7);
    for r in &rows[1..] {
        let jain_bcd: f64 = r[5].parse().unwrap();
        let jain_sg: f64 = r[6].parse().unwrap();
        assert!(jain_bcd > 0.0 && jain_bcd <= 1.0 && jain_sg > 0.0 && jain_sg <= 1.0);
    }
    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
    assert!(dir.path().join("sweep-25db-8u").join("metrics.csv").exists());
}

#[test]
fn oracle_agrees_on_a_tiny_instance() {
    let dir = TempDir::new().unwrap();
    let file = write(
        &dir,
        "tiny.json",
        r#"{"name": "tiny", "path_loss_db": [20, 23], "slot_lengths": [1, 2], "harvests": [3, 1]}"#,
    );
    let res = eh_sched(&["oracle", &file, "--step", "0.05"]);
    assert_eq!(res.status.code(), Some(0));
    let text = String::from_utf8_lossy(&res.stdout);
    let value = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(key))
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    assert!((value("refined_utility") - value("bcd_utility")).abs() < 1e-3);

    let res = eh_sched(&["oracle", "table1-s1"]);
    assert_eq!(res.status.code(), Some(1));
}
