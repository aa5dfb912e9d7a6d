//! Experiment plan files.
//!
//! A plan is flat `key = value` text. `#` starts a comment, blank lines are
//! ignored, keys may appear once. Relative paths are resolved against the
//! directory holding the plan.
//!
//! | key                 | default                 | meaning                                   |
//! |---------------------|-------------------------|-------------------------------------------|
//! | `dataset`           | required                | `synth:friedman`, `synth:mixed` or a CSV  |
//! | `task`              | from synthetic kind     | `regression` / `classification`           |
//! | `label_column`      | `target`                | CSV label column                          |
//! | `schedule`          | `<csv stem>.schedule`   | known drift points, if present            |
//! | `synth_seed`        | `seed`                  | generator seed for synthetic datasets     |
//! | `hidden`            | `64,32,16`              | hidden layer widths (3 to 5 layers)       |
//! | `dropout`           | `0.1`                   | dropout rate after every hidden layer     |
//! | `passes`            | 100 / 50 by task        | Monte Carlo forward passes                |
//! | `epochs`            | `100`                   |                                           |
//! | `batch_size`        | `32`                    |                                           |
//! | `learning_rate`     | `0.001`                 | Adam step size                            |
//! | `weight_decay`      | `0.01`                  | L2 penalty on weights                     |
//! | `strategies`        | required                | comma-separated strategy names            |
//! | `seed`              | `1`                     | model, dropout and partition seed         |
//! | `uninformed_seeds`  | five derived seeds      | comma-separated                           |
//! | `alpha.udd`         | calibrated              | skip UDD calibration                      |
//! | `alpha.kswin`       | calibrated              | skip KSWIN calibration                    |
//! | `adwin_error_delta` | `0.002`                 |                                           |
//! | `out_dir`           | `out`                   | overridden by `DRIFTLAB_OUT_DIR`          |
//! | `threads`           | number of strategies    | overridden by `DRIFTLAB_THREADS`          |
//!
//! Strategy names: `no_retrain`, `udd`, `uninformed`, `equal_distribution`,
//! `kswin_limited`, `kswin_unlimited`, `adwin_error`. The budget-matched
//! ones (`uninformed`, `equal_distribution`, `kswin_limited`) take their
//! retraining count from the UDD run, so they need `udd` in the same plan.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use driftlab_core::nnet::{NetworkSpec, OutputHead, TrainConfig};
use driftlab_core::rng::derive_seed;
use driftlab_core::strategies::ModelConfig;
use driftlab_core::stream::StreamDataset;
use driftlab_core::synth::{self, DriftSchedule, SynthKind};
use driftlab_core::Task;

use crate::error::{io_err, Error, Result};
use crate::ingest;

pub const ENV_OUT_DIR: &str = "DRIFTLAB_OUT_DIR";
pub const ENV_THREADS: &str = "DRIFTLAB_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StrategyName {
    NoRetrain,
    Udd,
    Uninformed,
    EqualDistribution,
    KswinLimited,
    KswinUnlimited,
    AdwinError,
}

impl StrategyName {
    pub const ALL: [StrategyName; 7] = [
        StrategyName::NoRetrain,
        StrategyName::Udd,
        StrategyName::Uninformed,
        StrategyName::EqualDistribution,
        StrategyName::KswinLimited,
        StrategyName::KswinUnlimited,
        StrategyName::AdwinError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyName::NoRetrain => "no_retrain",
            StrategyName::Udd => "udd",
            StrategyName::Uninformed => "uninformed",
            StrategyName::EqualDistribution => "equal_distribution",
            StrategyName::KswinLimited => "kswin_limited",
            StrategyName::KswinUnlimited => "kswin_unlimited",
            StrategyName::AdwinError => "adwin_error",
        }
    }

    /// Takes its retraining count from the UDD run.
    pub fn budget_matched(self) -> bool {
        matches!(
            self,
            StrategyName::Uninformed | StrategyName::EqualDistribution | StrategyName::KswinLimited
        )
    }

    pub fn uses_kswin(self) -> bool {
        matches!(
            self,
            StrategyName::KswinLimited | StrategyName::KswinUnlimited
        )
    }
}

impl FromStr for StrategyName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synth(SynthKind),
    Csv(PathBuf),
}

/// Known drift points of a dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnownDrifts {
    pub real: Vec<usize>,
    pub virtual_: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub dataset: DatasetSource,
    pub task: Option<Task>,
    pub label_column: String,
    pub schedule: Option<PathBuf>,
    pub synth_seed: Option<u64>,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub passes: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Listed order, duplicates removed.
    pub strategies: Vec<StrategyName>,
    pub seed: u64,
    pub uninformed_seeds: Vec<u64>,
    pub alpha_udd: Option<f64>,
    pub alpha_kswin: Option<f64>,
    pub adwin_error_delta: f64,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
}

impl Plan {
    /// Read a plan file and apply the environment overrides.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut plan = Self::parse(&text, base)?;
        plan.apply_env(|k| std::env::var(k).ok())?;
        Ok(plan)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |reason: String| Error::PlanSyntax {
                line: i + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected `key = value`, got {line:?}")))?;
            let key = key.trim().to_string();
            if entries.contains_key(&key) {
                return Err(syntax(format!("duplicate key {key:?}")));
            }
            entries.insert(key, (i + 1, value.trim().to_string()));
        }
        let mut fields = Fields { entries };

        let seed = fields.parse("seed")?.unwrap_or(1);
        let dataset = match fields.take("dataset") {
            None => return Err(Error::Plan("missing required key `dataset`".into())),
            Some((line, v)) => match v.strip_prefix("synth:") {
                Some(kind) => {
                    DatasetSource::Synth(kind.parse().map_err(|_| Error::PlanSyntax {
                        line,
                        reason: format!("unknown synthetic kind {kind:?}"),
                    })?)
                }
                None => DatasetSource::Csv(base.join(v)),
            },
        };
        let task = match fields.take("task") {
            None => None,
            Some((line, v)) => Some(match v.as_str() {
                "regression" => Task::Regression,
                "classification" => Task::Classification,
                other => {
                    return Err(Error::PlanSyntax {
                        line,
                        reason: format!("unknown task {other:?}"),
                    })
                }
            }),
        };
        let strategies: Vec<StrategyName> = match fields.list("strategies")? {
            None => return Err(Error::Plan("missing required key `strategies`".into())),
            Some(list) => {
                let mut out: Vec<StrategyName> = Vec::new();
                for s in list {
                    if !out.contains(&s) {
                        out.push(s);
                    }
                }
                out
            }
        };
        let plan = Plan {
            dataset,
            task,
            label_column: fields
                .take("label_column")
                .map_or_else(|| ingest::DEFAULT_LABEL_COLUMN.to_string(), |(_, v)| v),
            schedule: fields.take("schedule").map(|(_, v)| base.join(v)),
            synth_seed: fields.parse("synth_seed")?,
            hidden: fields.list("hidden")?.unwrap_or_else(|| vec![64, 32, 16]),
            dropout: fields.parse("dropout")?.unwrap_or(0.1),
            passes: fields.parse("passes")?,
            epochs: fields.parse("epochs")?.unwrap_or(100),
            batch_size: fields.parse("batch_size")?.unwrap_or(32),
            learning_rate: fields.parse("learning_rate")?.unwrap_or(1e-3),
            weight_decay: fields.parse("weight_decay")?.unwrap_or(1e-2),
            strategies,
            seed,
            uninformed_seeds: fields.list("uninformed_seeds")?.unwrap_or_else(|| {
                (0..5)
                    .map(|i| derive_seed(derive_seed(seed, 100), i))
                    .collect()
            }),
            alpha_udd: fields.parse("alpha.udd")?,
            alpha_kswin: fields.parse("alpha.kswin")?,
            adwin_error_delta: fields.parse("adwin_error_delta")?.unwrap_or(0.002),
            out_dir: base.join(
                fields
                    .take("out_dir")
                    .map_or_else(|| "out".to_string(), |(_, v)| v),
            ),
            threads: fields.parse("threads")?,
        };
        if let Some((key, (line, _))) = fields.entries.into_iter().next() {
            return Err(Error::PlanSyntax {
                line,
                reason: format!("unknown key {key:?}"),
            });
        }
        plan.validate()?;
        Ok(plan)
    }

    /// `DRIFTLAB_OUT_DIR` and `DRIFTLAB_THREADS` replace the plan values.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(dir) = lookup(ENV_OUT_DIR).filter(|d| !d.is_empty()) {
            self.out_dir = PathBuf::from(dir);
        }
        if let Some(t) = lookup(ENV_THREADS).filter(|t| !t.is_empty()) {
            let n: usize = t
                .parse()
                .map_err(|_| Error::Plan(format!("{ENV_THREADS}={t:?} is not a thread count")))?;
            self.threads = Some(n);
        }
        self.validate()
    }

    fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Plan("strategy list is empty".into()));
        }
        if let Some(s) = self.strategies.iter().find(|s| s.budget_matched()) {
            if !self.strategies.contains(&StrategyName::Udd) {
                return Err(Error::Plan(format!(
                    "{} needs a budget source: add udd to the strategies",
                    s.as_str()
                )));
            }
        }
        if self.uninformed_seeds.is_empty() {
            return Err(Error::Plan("uninformed_seeds is empty".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Plan("threads must be >= 1".into()));
        }
        if self.passes == Some(0) {
            return Err(Error::Plan("passes must be >= 1".into()));
        }
        for (key, a) in [
            ("alpha.udd", self.alpha_udd),
            ("alpha.kswin", self.alpha_kswin),
        ] {
            if let Some(a) = a {
                if !(a > 0.0 && a < 1.0) {
                    return Err(Error::Plan(format!("{key} must be in (0, 1), got {a}")));
                }
            }
        }
        if let (DatasetSource::Synth(kind), Some(task)) = (&self.dataset, self.task) {
            if kind.task() != task {
                return Err(Error::Plan(format!(
                    "dataset synth:{} is a {} stream, plan says {}",
                    kind.as_str(),
                    task_name(kind.task()),
                    task_name(task)
                )));
            }
        }
        if matches!(self.dataset, DatasetSource::Csv(_)) && self.task.is_none() {
            return Err(Error::Plan("CSV datasets need `task`".into()));
        }
        Ok(())
    }

    pub fn threads(&self) -> usize {
        self.threads.unwrap_or(self.strategies.len())
    }

    /// Load the dataset and its known drift points (if any).
    pub fn load_dataset(&self) -> Result<(StreamDataset, Option<KnownDrifts>)> {
        match &self.dataset {
            DatasetSource::Synth(kind) => {
                let schedule = DriftSchedule::like_paper(self.synth_seed.unwrap_or(self.seed));
                let ds = synth::synth_dataset(
                    *kind,
                    &schedule,
                    &Default::default(),
                    &Default::default(),
                );
                let drifts = KnownDrifts {
                    real: schedule.real_drifts().to_vec(),
                    virtual_: schedule.virtual_drifts().to_vec(),
                };
                Ok((ds, Some(drifts)))
            }
            DatasetSource::Csv(path) => {
                let task = self.task.expect("validated");
                let ds = ingest::load_csv(path, task, &self.label_column)?;
                if task == Task::Classification && ds.n_classes().unwrap_or(0) < 2 {
                    return Err(Error::Plan(format!(
                        "{}: classification needs at least two distinct labels",
                        path.display()
                    )));
                }
                let sidecar = match &self.schedule {
                    Some(p) => Some(p.clone()),
                    None => Some(path.with_extension("schedule")).filter(|p| p.is_file()),
                };
                let drifts = sidecar
                    .map(|p| ingest::read_schedule(&p))
                    .transpose()?
                    .map(|(real, virtual_)| KnownDrifts { real, virtual_ });
                Ok((ds, drifts))
            }
        }
    }

    pub fn model_config(&self, ds: &StreamDataset) -> Result<ModelConfig> {
        let (output, head) = match ds.task() {
            Task::Regression => (1, OutputHead::Linear),
            Task::Classification => (
                ds.n_classes().expect("classification dataset"),
                OutputHead::Softmax,
            ),
        };
        Ok(ModelConfig {
            spec: NetworkSpec::uniform(ds.n_features(), &self.hidden, output, head, self.dropout)?,
            train: TrainConfig {
                learning_rate: self.learning_rate,
                epochs: self.epochs,
                batch_size: self.batch_size,
                weight_decay: self.weight_decay,
                ..TrainConfig::default()
            },
            passes: self
                .passes
                .unwrap_or_else(|| ModelConfig::default_passes(ds.task())),
            standardize_target: true,
        })
    }

    /// Every setting that influences results, one `key = value` per line.
    /// The output directory and thread count are left out.
    pub fn canonical(&self) -> String {
        let join = |v: &[String]| v.join(",");
        let mut s = String::new();
        let dataset = match &self.dataset {
            DatasetSource::Synth(k) => format!("synth:{}", k.as_str()),
            DatasetSource::Csv(p) => p.display().to_string(),
        };
        let opt = |v: Option<String>| v.unwrap_or_default();
        let lines: Vec<(&str, String)> = vec![
            ("dataset", dataset),
            ("task", opt(self.task.map(|t| task_name(t).to_string()))),
            ("label_column", self.label_column.clone()),
            (
                "schedule",
                opt(self.schedule.as_ref().map(|p| p.display().to_string())),
            ),
            ("synth_seed", opt(self.synth_seed.map(|v| v.to_string()))),
            (
                "hidden",
                join(
                    &self
                        .hidden
                        .iter()
                        .map(ToString::to_string)
                        .collect::<Vec<_>>(),
                ),
            ),
            ("dropout", self.dropout.to_string()),
            ("passes", opt(self.passes.map(|v| v.to_string()))),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            (
                "strategies",
                join(
                    &self
                        .strategies
                        .iter()
                        .map(|s| s.as_str().to_string())
                        .collect::<Vec<_>>(),
                ),
            ),
            ("seed", self.seed.to_string()),
            (
                "uninformed_seeds",
                join(
                    &self
                        .uninformed_seeds
                        .iter()
                        .map(ToString::to_string)
                        .collect::<Vec<_>>(),
                ),
            ),
            ("alpha.udd", opt(self.alpha_udd.map(|v| v.to_string()))),
            ("alpha.kswin", opt(self.alpha_kswin.map(|v| v.to_string()))),
            ("adwin_error_delta", self.adwin_error_delta.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

pub fn task_name(task: Task) -> &'static str {
    match task {
        Task::Regression => "regression",
        Task::Classification => "classification",
    }
}

struct Fields {
    entries: BTreeMap<String, (usize, String)>,
}

impl Fields {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| Error::PlanSyntax {
                line,
                reason: format!("bad value for {key}: {v:?}"),
            }),
        }
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|item| {
                    item.parse().map_err(|_| Error::PlanSyntax {
                        line,
                        reason: format!("bad item in {key}: {item:?}"),
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}
