//! Report files of a plan run.
//!
//! ```text
//! out_dir/
//!   results.csv                  strategy,metric,value,retrain_count,labels_acquired,alpha,budget
//!   detection_metrics.csv        run,mtd,fac,mdc,matched   (only with known drifts)
//!   runs/<run>.detections.csv    time,source,p_value,feature
//!   runs/<run>.trajectory.csv    t,u,detected   (one row per stream instance)
//!   runs/<run>.deciles.csv       decile,mean_uncertainty,error,count
//!   manifest.txt                 seeds, alphas, calibration counts, config hash, file hashes
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! file is a pure function of the plan.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use driftlab_core::strategies::RunRecord;
use driftlab_core::stream::StreamDataset;

use crate::error::{io_err, Error, Result};
use crate::plan::Plan;
use crate::run::{AlphaSource, ResultRow, RunOutcome};

pub const RESULTS_FILE: &str = "results.csv";
pub const DETECTION_METRICS_FILE: &str = "detection_metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const RUNS_DIR: &str = "runs";

/// sha256 of the plan's canonical form.
pub fn config_hash(plan: &Plan) -> String {
    hex::encode(Sha256::digest(plan.canonical().as_bytes()))
}

/// Write every report. Returns `(relative path, sha256)` of each file
/// except the manifest, sorted by path.
pub fn write_all(plan: &Plan, outcome: &RunOutcome) -> Result<Vec<(String, String)>> {
    let dir = &outcome.out_dir;
    let runs_dir = dir.join(RUNS_DIR);
    fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;
    let mut files = Vec::new();
    let mut emit = |name: String, body: String| -> Result<()> {
        let path = dir.join(&name);
        fs::write(&path, body.as_bytes()).map_err(io_err(&path))?;
        files.push((name, hex::encode(Sha256::digest(body.as_bytes()))));
        Ok(())
    };

    emit(RESULTS_FILE.into(), results_csv(&outcome.rows)?)?;
    let reports = outcome.detection_reports()?;
    if outcome.drifts.is_some() {
        let mut rows = vec![vec![
            "run".into(),
            "mtd".into(),
            "fac".into(),
            "mdc".into(),
            "matched".into(),
        ]];
        for (label, r) in &reports {
            rows.push(vec![
                label.clone(),
                r.mtd.map(|v| v.to_string()).unwrap_or_default(),
                r.fac.to_string(),
                r.mdc.to_string(),
                r.matched.to_string(),
            ]);
        }
        emit(DETECTION_METRICS_FILE.into(), to_csv(&rows)?)?;
    }
    for s in &outcome.strategies {
        for (i, run) in s.runs.iter().enumerate() {
            let label = s.label(i);
            emit(
                format!("{RUNS_DIR}/{label}.detections.csv"),
                detections_csv(run)?,
            )?;
            emit(
                format!("{RUNS_DIR}/{label}.trajectory.csv"),
                trajectory_csv(run)?,
            )?;
            emit(
                format!("{RUNS_DIR}/{label}.deciles.csv"),
                deciles_csv(run, &outcome.dataset)?,
            )?;
        }
    }
    files.sort();
    let manifest = manifest(plan, outcome, &files);
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(io_err(&path))?;
    Ok(files)
}

fn to_csv(rows: &[Vec<String>]) -> Result<String> {
    let csv_err = |source| Error::Csv {
        path: Path::new("<memory>").to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

/// Alphas span 1e-1 to 1e-90, so they are written in exponent form.
pub fn fmt_alpha(a: f64) -> String {
    format!("{a:e}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn results_csv(rows: &[ResultRow]) -> Result<String> {
    let mut out = vec![[
        "strategy",
        "metric",
        "value",
        "retrain_count",
        "labels_acquired",
        "alpha",
        "budget",
    ]
    .map(String::from)
    .to_vec()];
    for r in rows {
        out.push(vec![
            r.strategy.as_str().into(),
            r.metric.into(),
            r.value.to_string(),
            r.retrain_count.to_string(),
            r.labels_acquired.to_string(),
            r.alpha.map(fmt_alpha).unwrap_or_default(),
            opt(r.budget),
        ]);
    }
    to_csv(&out)
}

pub fn detections_csv(run: &RunRecord) -> Result<String> {
    let mut rows = vec![["time", "source", "p_value", "feature"]
        .map(String::from)
        .to_vec()];
    for d in &run.detections {
        rows.push(vec![
            d.time_index.to_string(),
            d.source.as_str().into(),
            opt(d.p_value),
            opt(d.feature_index),
        ]);
    }
    to_csv(&rows)
}

/// `t,u,detected`; `detected` is 1 where the run retrained.
pub fn trajectory_csv(run: &RunRecord) -> Result<String> {
    let mut s = String::from("t,u,detected\n");
    let mut retrains = run.retrain_times.iter().peekable();
    for p in &run.predictions {
        let hit = retrains.next_if(|&&t| t == p.t).is_some();
        let _ = writeln!(s, "{},{},{}", p.t, p.score.value, u8::from(hit));
    }
    Ok(s)
}

pub fn deciles_csv(run: &RunRecord, ds: &StreamDataset) -> Result<String> {
    let report = run.decile_report(ds)?;
    let mut rows = vec![["decile", "mean_uncertainty", "error", "count"]
        .map(String::from)
        .to_vec()];
    for (i, d) in report.deciles.iter().enumerate() {
        rows.push(vec![
            (i + 1).to_string(),
            d.mean_uncertainty.to_string(),
            d.error.to_string(),
            d.count.to_string(),
        ]);
    }
    to_csv(&rows)
}

fn manifest(plan: &Plan, outcome: &RunOutcome, files: &[(String, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "config_hash = {}", config_hash(plan));
    let _ = writeln!(s, "\n[plan]");
    s.push_str(&plan.canonical());
    let ds = &outcome.dataset;
    let _ = writeln!(s, "\n[dataset]");
    let _ = writeln!(s, "name = {}", ds.name());
    let _ = writeln!(s, "instances = {}", ds.len());
    let _ = writeln!(s, "features = {}", ds.n_features());
    if let Some(d) = &outcome.drifts {
        let join = |v: &[usize]| {
            v.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(s, "real_drifts = {}", join(&d.real));
        let _ = writeln!(s, "virtual_drifts = {}", join(&d.virtual_));
    }
    for (name, alpha) in [("udd", &outcome.alpha_udd), ("kswin", &outcome.alpha_kswin)] {
        let Some(alpha) = alpha else { continue };
        let _ = writeln!(s, "\n[alpha.{name}]");
        let _ = writeln!(s, "alpha = {}", fmt_alpha(alpha.alpha()));
        match alpha {
            AlphaSource::Override(_) => {
                let _ = writeln!(s, "source = plan");
            }
            AlphaSource::Calibrated(c) => {
                let _ = writeln!(s, "source = calibrated");
                let _ = writeln!(s, "fallback = {}", c.fallback);
                let counts: Vec<String> = c
                    .counts
                    .iter()
                    .map(|(a, n)| format!("{}:{n}", fmt_alpha(*a)))
                    .collect();
                let _ = writeln!(s, "counts = {}", counts.join(","));
            }
        }
    }
    let _ = writeln!(s, "\n[runs]");
    for st in &outcome.strategies {
        for (i, r) in st.runs.iter().enumerate() {
            let _ = writeln!(
                s,
                "{} seed={} retrains={} labels={}",
                st.label(i),
                r.seed,
                r.retrain_times.len(),
                r.labels_acquired
            );
            for w in &r.warnings {
                let _ = writeln!(s, "{} warning: {w}", st.label(i));
            }
        }
    }
    let _ = writeln!(s, "\n[files]");
    for (name, hash) in files {
        let _ = writeln!(s, "{hash}  {name}");
    }
    s
}
