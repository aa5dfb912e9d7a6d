//! The three CLI commands.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use driftlab_core::metrics::{self, DetectionReport, DEFAULT_MATCH_WINDOW};
use driftlab_core::strategies::{
    Calibration, DetectorKind, Experiment, Model, RunRecord, StrategyKind,
};
use driftlab_core::stream::StreamDataset;
use driftlab_core::synth::{self, DriftSchedule, SynthKind};

use crate::error::{io_err, Result};
use crate::ingest;
use crate::plan::{KnownDrifts, Plan, StrategyName};
use crate::report;

/// Write `<kind>.csv` and `<kind>.schedule` for the paper-like schedule.
pub fn cmd_synth(kind: SynthKind, out_dir: &Path, seed: u64) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let schedule = DriftSchedule::like_paper(seed);
    let ds = synth::synth_dataset(kind, &schedule, &Default::default(), &Default::default());
    let csv = out_dir.join(format!("{}.csv", kind.as_str()));
    let sidecar = out_dir.join(format!("{}.schedule", kind.as_str()));
    ingest::write_csv(&ds, &ingest::synth_columns(kind), &csv)?;
    ingest::write_schedule(&schedule, &sidecar)?;
    Ok((csv, sidecar))
}

/// Alpha calibration for one detector on the plan's validation range.
pub fn cmd_calibrate(plan: &Plan, kind: DetectorKind) -> Result<Calibration> {
    let (ds, _) = plan.load_dataset()?;
    let exp = Experiment::new(&ds, plan.model_config(&ds)?, plan.seed)?;
    let initial = exp.initial_model()?;
    Ok(exp.calibrate(&initial, kind)?)
}

/// Where an alpha came from.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaSource {
    Override(f64),
    Calibrated(Calibration),
}

impl AlphaSource {
    pub fn alpha(&self) -> f64 {
        match self {
            AlphaSource::Override(a) => *a,
            AlphaSource::Calibrated(c) => c.alpha,
        }
    }
}

/// All runs of one listed strategy (several for `uninformed`).
#[derive(Debug, Clone)]
pub struct StrategyRuns {
    pub name: StrategyName,
    pub kind: StrategyKind,
    pub runs: Vec<RunRecord>,
}

impl StrategyRuns {
    /// File-name label of run `i`.
    pub fn label(&self, i: usize) -> String {
        if self.runs.len() == 1 {
            self.name.as_str().to_string()
        } else {
            format!("{}_{}", self.name.as_str(), i + 1)
        }
    }
}

/// One line of the results table. Multi-seed strategies report the mean
/// metric and mean label count over their runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub strategy: StrategyName,
    pub metric: &'static str,
    pub value: f64,
    pub retrain_count: usize,
    pub labels_acquired: f64,
    pub alpha: Option<f64>,
    pub budget: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dataset: StreamDataset,
    pub drifts: Option<KnownDrifts>,
    pub alpha_udd: Option<AlphaSource>,
    pub alpha_kswin: Option<AlphaSource>,
    /// Listed plan order.
    pub strategies: Vec<StrategyRuns>,
    pub rows: Vec<ResultRow>,
    pub out_dir: PathBuf,
    /// Relative file name and sha256 of every emitted file, sorted.
    pub files: Vec<(String, String)>,
}

impl RunOutcome {
    pub fn get(&self, name: StrategyName) -> Option<&StrategyRuns> {
        self.strategies.iter().find(|s| s.name == name)
    }

    /// Detection metrics of every run against the known real drifts.
    pub fn detection_reports(&self) -> Result<Vec<(String, DetectionReport)>> {
        let Some(drifts) = &self.drifts else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        for s in &self.strategies {
            for (i, r) in s.runs.iter().enumerate() {
                let report = metrics::detection_metrics(
                    &drifts.real,
                    &r.retrain_times,
                    DEFAULT_MATCH_WINDOW,
                )?;
                out.push((s.label(i), report));
            }
        }
        Ok(out)
    }
}

/// Run every strategy of the plan and write the reports to its output
/// directory.
pub fn cmd_run(plan: &Plan) -> Result<RunOutcome> {
    fs::create_dir_all(&plan.out_dir).map_err(io_err(&plan.out_dir))?;
    let (ds, drifts) = plan.load_dataset()?;
    let exp = Experiment::new(&ds, plan.model_config(&ds)?, plan.seed)?;
    let initial = exp.initial_model()?;

    let wants = |f: fn(StrategyName) -> bool| plan.strategies.iter().any(|&s| f(s));
    let alpha_udd = if plan.strategies.contains(&StrategyName::Udd) {
        Some(resolve_alpha(
            &exp,
            &initial,
            plan.alpha_udd,
            DetectorKind::Udd,
        )?)
    } else {
        None
    };
    let alpha_kswin = if wants(StrategyName::uses_kswin) {
        Some(resolve_alpha(
            &exp,
            &initial,
            plan.alpha_kswin,
            DetectorKind::Kswin,
        )?)
    } else {
        None
    };

    // UDD first: its retraining count is the budget of the matched baselines.
    let udd = alpha_udd
        .as_ref()
        .map(|a| exp.run_udd(&initial, a.alpha()))
        .transpose()?;
    let budget = udd.as_ref().map(|r| r.retrain_times.len());

    let others: Vec<StrategyName> = plan
        .strategies
        .iter()
        .copied()
        .filter(|&s| s != StrategyName::Udd)
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.threads())
        .build()?;
    let job = |name: StrategyName| -> Result<Vec<RunRecord>> {
        let budget = || budget.expect("budget-matched strategies require udd");
        let kswin_alpha = || alpha_kswin.as_ref().expect("kswin alpha resolved").alpha();
        Ok(match name {
            StrategyName::NoRetrain => vec![exp.run_no_retrain(&initial)?],
            StrategyName::Udd => unreachable!("udd runs first"),
            StrategyName::Uninformed => {
                exp.run_uninformed(&initial, budget(), &plan.uninformed_seeds)?
            }
            StrategyName::EqualDistribution => {
                vec![exp.run_equal_distribution(&initial, budget())?]
            }
            StrategyName::KswinLimited => {
                vec![exp.run_kswin(&initial, kswin_alpha(), Some(budget()))?]
            }
            StrategyName::KswinUnlimited => vec![exp.run_kswin(&initial, kswin_alpha(), None)?],
            StrategyName::AdwinError => {
                vec![exp.run_adwin_error(&initial, plan.adwin_error_delta)?]
            }
        })
    };
    let results: Vec<Result<Vec<RunRecord>>> =
        pool.install(|| others.par_iter().map(|&n| job(n)).collect());

    let mut by_name: Vec<(StrategyName, Vec<RunRecord>)> = others
        .into_iter()
        .zip(results)
        .map(|(n, r)| r.map(|r| (n, r)))
        .collect::<Result<_>>()?;
    if let Some(r) = udd {
        by_name.push((StrategyName::Udd, vec![r]));
    }
    let strategies: Vec<StrategyRuns> = plan
        .strategies
        .iter()
        .map(|&name| {
            let idx = by_name
                .iter()
                .position(|(n, _)| *n == name)
                .expect("every strategy ran");
            let (_, runs) = by_name.swap_remove(idx);
            StrategyRuns {
                name,
                kind: runs[0].strategy,
                runs,
            }
        })
        .collect();
    let rows = strategies
        .iter()
        .map(|s| result_row(s, &ds))
        .collect::<Result<Vec<_>>>()?;

    let mut outcome = RunOutcome {
        dataset: ds,
        drifts,
        alpha_udd,
        alpha_kswin,
        strategies,
        rows,
        out_dir: plan.out_dir.clone(),
        files: Vec::new(),
    };
    outcome.files = report::write_all(plan, &outcome)?;
    Ok(outcome)
}

fn resolve_alpha(
    exp: &Experiment<'_>,
    initial: &Model,
    fixed: Option<f64>,
    kind: DetectorKind,
) -> Result<AlphaSource> {
    Ok(match fixed {
        Some(a) => AlphaSource::Override(a),
        None => AlphaSource::Calibrated(exp.calibrate(initial, kind)?),
    })
}

fn result_row(s: &StrategyRuns, ds: &StreamDataset) -> Result<ResultRow> {
    let reports = s
        .runs
        .iter()
        .map(|r| r.prediction_report(ds))
        .collect::<Result<Vec<_>, _>>()?;
    let n = reports.len() as f64;
    let (metric, value) = match reports[0].rmse {
        Some(_) => (
            "rmse",
            reports
                .iter()
                .map(|r| r.rmse.unwrap_or(f64::NAN))
                .sum::<f64>()
                / n,
        ),
        None => (
            "mcc",
            reports
                .iter()
                .map(|r| r.mcc.unwrap_or(f64::NAN))
                .sum::<f64>()
                / n,
        ),
    };
    Ok(ResultRow {
        strategy: s.name,
        metric,
        value,
        retrain_count: reports[0].retrain_count,
        labels_acquired: reports
            .iter()
            .map(|r| r.labels_acquired as f64)
            .sum::<f64>()
            / n,
        alpha: s.kind.alpha(),
        budget: s.kind.budget(),
    })
}
