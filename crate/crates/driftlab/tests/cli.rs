use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use driftlab::plan::{Plan, StrategyName};
use driftlab::run::{cmd_calibrate, cmd_run};
use driftlab_core::strategies::DetectorKind;

fn driftlab(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_driftlab"));
    cmd.args(args)
        .env_remove("DRIFTLAB_OUT_DIR")
        .env_remove("DRIFTLAB_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn driftlab")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// One feature, stepping from ~0 to ~100 at row `step`; target 2x + small
/// wiggle.
fn step_csv(dir: &Path, n: usize, step: usize) -> PathBuf {
    let mut s = String::from("x,target\n");
    for i in 0..n {
        let base = if i < step { 0.0 } else { 100.0 };
        let x = base + (i * 37 % 101) as f64 / 100.0;
        s.push_str(&format!(
            "{x},{}\n",
            2.0 * x + ((i * 13 % 7) as f64 - 3.0) / 10.0
        ));
    }
    let p = dir.join("step.csv");
    fs::write(&p, s).unwrap();
    p
}

fn write_plan(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("plan.txt");
    fs::write(&p, body).unwrap();
    p
}

const SMALL_NET: &str = "hidden = 8,8,8\nepochs = 5\npasses = 10\n";

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = driftlab(
            &[
                "synth",
                "friedman",
                "--out",
                out.to_str().unwrap(),
                "--seed",
                "3",
            ],
            &[],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["friedman.csv", "friedman.schedule"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let csv = fs::read_to_string(a.join("friedman.csv")).unwrap();
    assert_eq!(csv.lines().count(), 15_001);
    assert!(csv.starts_with("x1,x2,x3,x4,x5,x6,x7,x8,x9,x10,target\n"));
    let schedule = fs::read_to_string(a.join("friedman.schedule")).unwrap();
    assert_eq!(
        schedule,
        "real 4500\nvirtual 6000\nreal 7500\nvirtual 9000\nreal 10500\n"
    );
    assert_eq!(schedule.lines().count(), 5);

    let o = driftlab(
        &[
            "synth",
            "mixed",
            "--out",
            a.to_str().unwrap(),
            "--seed",
            "3",
        ],
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let mixed = fs::read_to_string(a.join("mixed.csv")).unwrap();
    assert!(mixed.starts_with("b1,b2,d1,d2,d3,d4,target\n"));
}

#[test]
fn unwritable_output_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let out = blocker.join("sub");
    let o = driftlab(&["synth", "mixed", "--out", out.to_str().unwrap()], &[]);
    assert!(!o.status.success());
    let msg = stderr(&o);
    assert!(
        msg.starts_with("driftlab: ") && msg.contains("sub"),
        "{msg}"
    );
}

#[test]
fn budget_strategies_without_udd_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(
        dir.path(),
        "dataset = synth:friedman\nstrategies = no_retrain, uninformed\n",
    );
    let o = driftlab(&["run", "--plan", plan.to_str().unwrap()], &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("budget source"), "{}", stderr(&o));
}

#[test]
fn bad_csv_cell_is_reported_with_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "a,b,target\n1,2,3\n4,inf,6\n").unwrap();
    let plan = write_plan(
        dir.path(),
        "dataset = bad.csv\ntask = regression\nstrategies = no_retrain\n",
    );
    let o = driftlab(&["run", "--plan", plan.to_str().unwrap()], &[]);
    assert!(!o.status.success());
    let msg = stderr(&o);
    assert!(msg.contains("row 2") && msg.contains("\"b\""), "{msg}");

    let plan = write_plan(
        dir.path(),
        "dataset = missing.csv\ntask = regression\nstrategies = no_retrain\n",
    );
    let o = driftlab(&["run", "--plan", plan.to_str().unwrap()], &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("missing.csv"), "{}", stderr(&o));
}

#[test]
fn task_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(
        dir.path(),
        "dataset = synth:mixed\ntask = regression\nstrategies = udd\n",
    );
    let err = Plan::load(&plan).unwrap_err().to_string();
    assert!(err.contains("classification"), "{err}");
}

#[test]
fn calibration_routes_to_the_right_stream() {
    let dir = tempfile::tempdir().unwrap();
    // 3000 rows: validation is 150..450, the feature steps at 300.
    step_csv(dir.path(), 3_000, 300);
    let plan = write_plan(
        dir.path(),
        &format!(
            "dataset = step.csv\ntask = regression\nstrategies = udd\ndropout = 0\n{SMALL_NET}"
        ),
    );
    let plan = Plan::load(&plan).unwrap();

    // Without dropout the uncertainty stream is identically zero.
    let udd = cmd_calibrate(&plan, DetectorKind::Udd).unwrap();
    assert!(udd.fallback);
    assert_eq!(udd.alpha, 0.002);
    assert!(udd.counts.iter().all(|&(_, n)| n == 0));

    // The features carry one step.
    let kswin = cmd_calibrate(&plan, DetectorKind::Kswin).unwrap();
    assert!(!kswin.fallback);
    let chosen = kswin
        .counts
        .iter()
        .find(|(a, _)| *a == kswin.alpha)
        .unwrap();
    assert_eq!(chosen.1, 1);

    let o = driftlab(
        &[
            "calibrate",
            "--plan",
            dir.path().join("plan.txt").to_str().unwrap(),
            "--strategy",
            "udd",
        ],
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("alpha = 2e-3"), "{stdout}");
}

#[test]
fn friedman_no_retrain_and_udd_table() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(
        dir.path(),
        &format!("dataset = synth:friedman\nstrategies = no_retrain, udd\n{SMALL_NET}"),
    );
    let plan = Plan::load(&plan).unwrap();
    let outcome = cmd_run(&plan).unwrap();
    assert_eq!(outcome.rows.len(), 2);
    let udd = outcome.get(StrategyName::Udd).unwrap();
    let row = outcome
        .rows
        .iter()
        .find(|r| r.strategy == StrategyName::Udd)
        .unwrap();
    assert_eq!(row.retrain_count, udd.runs[0].detections.len());
    let table = fs::read_to_string(plan.out_dir.join("results.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    let traj = fs::read_to_string(plan.out_dir.join("runs/udd.trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count() - 1, outcome.dataset.len() * 85 / 100);
    let flagged = traj.lines().skip(1).filter(|l| l.ends_with(",1")).count();
    assert_eq!(flagged, row.retrain_count);
}

#[test]
fn run_is_reproducible_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    step_csv(dir.path(), 2_000, 1_200);
    let plan = write_plan(
        dir.path(),
        &format!(
            "dataset = step.csv\ntask = regression\n\
             strategies = udd, no_retrain, uninformed, equal_distribution, kswin_limited, adwin_error\n\
             {SMALL_NET}"
        ),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = driftlab(
        &["run", "--plan", plan.to_str().unwrap()],
        &[("DRIFTLAB_OUT_DIR", &a)],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_driftlab"));
    let o = cmd
        .args(["run", "--plan", plan.to_str().unwrap()])
        .env("DRIFTLAB_OUT_DIR", &b)
        .env("DRIFTLAB_THREADS", "1")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<PathBuf> = fs::read_dir(a.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    names.sort();
    assert_eq!(names.len(), 3 * 10);
    for p in names {
        let rel = p.strip_prefix(&a).unwrap();
        assert_eq!(
            fs::read(&p).unwrap(),
            fs::read(b.join(rel)).unwrap(),
            "{}",
            rel.display()
        );
    }
    for f in ["results.csv", "manifest.txt"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert!(!a.join("detection_metrics.csv").exists());
}
