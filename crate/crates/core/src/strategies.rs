//! Retraining strategies over a partitioned stream.
//!
//! Every strategy runs the same prequential loop: predict instance `t` with
//! Monte Carlo Dropout, then let a trigger decide whether to retrain. On a
//! trigger the labels of the most recent batch (up to and including `t`) are
//! acquired, feature standardization is refitted on the grown pool, and a
//! fresh network is trained from scratch. The new model serves `t + 1`
//! onwards.
//!
//! | strategy             | trigger                                      |
//! |----------------------|----------------------------------------------|
//! | `no_retrain`         | never                                        |
//! | `udd`                | ADWIN on the uncertainty stream              |
//! | `uninformed`         | `budget` uniformly random times              |
//! | `equal_distribution` | `budget` evenly spaced times                 |
//! | `kswin_limited`      | the `budget` KSWIN alarms with smallest p    |
//! | `kswin_unlimited`    | every KSWIN alarm on the input features      |
//! | `adwin_error`        | ADWIN on the prediction error (all labels)   |
//!
//! Detectors are reset after each retraining.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::index;

use crate::detectors::{Adwin, DriftSignal, Kswin, KswinConfig, SignalSource};
use crate::metrics::{self, DecileReport};
use crate::nnet::{Network, NetworkSpec, TrainConfig};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stream::{LabeledInstance, Partition, Standardizer, StreamDataset, TrainingPool};
use crate::uncertainty::{self, UncertaintyScore};
use crate::{Error, Result, Target, Task};

/// Seed labels for [`derive_seed`].
const SEED_PREDICT: u64 = 1;
const SEED_MODEL: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub spec: NetworkSpec,
    pub train: TrainConfig,
    /// Monte Carlo forward passes per prediction.
    pub passes: usize,
    /// Standardize regression targets on the pool (predictions and variances
    /// are mapped back to target units).
    pub standardize_target: bool,
}

impl ModelConfig {
    /// 100 passes for regression, 50 for classification.
    pub fn default_passes(task: Task) -> usize {
        match task {
            Task::Regression => 100,
            Task::Classification => 50,
        }
    }
}

/// A network plus the transforms fitted on its training pool.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    net: Network,
    features: Standardizer,
    /// `(mean, sd)` of regression targets.
    target: Option<(f64, f64)>,
    task: Task,
    trained_through: usize,
}

impl Model {
    /// Train from scratch on the pool. `seed` drives initialization, shuffle
    /// order and training dropout masks.
    pub fn fit(
        ds: &StreamDataset,
        pool: &TrainingPool,
        cfg: &ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        if cfg.spec.input_dim() != ds.n_features() {
            return Err(Error::DimensionMismatch {
                expected: ds.n_features(),
                found: cfg.spec.input_dim(),
            });
        }
        if cfg.spec.head().task() != ds.task() {
            return Err(Error::TaskMismatch(format!(
                "{:?} head on a {:?} dataset",
                cfg.spec.head(),
                ds.task()
            )));
        }
        let indices = pool.indices();
        if indices.is_empty() {
            return Err(Error::Empty("training pool"));
        }
        let features = Standardizer::fit_pool(ds, pool)?;
        let inputs: Vec<Vec<f64>> = indices
            .iter()
            .map(|&i| features.transform(&ds.get(i).x))
            .collect();
        let raw: Vec<Target> = indices.iter().map(|&i| ds.get(i).y).collect();

        let target = match ds.task() {
            Task::Regression if cfg.standardize_target => {
                let ys: Vec<f64> = raw.iter().filter_map(Target::as_real).collect();
                let n = ys.len() as f64;
                let mean = ys.iter().sum::<f64>() / n;
                let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
                Some((mean, var.sqrt().max(Standardizer::SCALE_FLOOR)))
            }
            _ => None,
        };
        let targets: Vec<Target> = match target {
            Some((m, s)) => raw
                .iter()
                .map(|t| Target::Real((t.as_real().expect("regression target") - m) / s))
                .collect(),
            None => raw,
        };

        let mut net = Network::init(cfg.spec.clone(), derive_seed(seed, 0))?;
        let train_cfg = TrainConfig {
            seed: derive_seed(seed, 1),
            batch_size: cfg.train.batch_size.min(inputs.len()),
            ..cfg.train
        };
        net.train(&inputs, &targets, &train_cfg)?;
        Ok(Self {
            net,
            features,
            target,
            task: ds.task(),
            trained_through: pool.max_index().expect("non-empty pool"),
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.features
    }

    /// Largest dataset index whose label this model was trained on.
    pub fn trained_through(&self) -> usize {
        self.trained_through
    }

    /// Score an instance. The uncertainty is measured on the network's own
    /// outputs (standardized units when targets are standardized); the
    /// prediction is mapped back to target units.
    pub fn predict(&self, x: &[f64], passes: usize, seed: u64) -> Result<UncertaintyScore> {
        let z = self.features.transform(x);
        let sample = self.net.mc_predict(&z, passes, seed)?;
        let mut score = uncertainty::score(&sample, self.task)?;
        if let Some((m, s)) = self.target {
            score.prediction.iter_mut().for_each(|p| *p = m + s * *p);
        }
        Ok(score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategyKind {
    NoRetrain,
    Uninformed { budget: usize },
    EqualDistribution { budget: usize },
    KswinLimited { alpha: f64, budget: usize },
    Udd { alpha: f64 },
    KswinUnlimited { alpha: f64 },
    AdwinError { delta: f64 },
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::NoRetrain => "no_retrain",
            StrategyKind::Uninformed { .. } => "uninformed",
            StrategyKind::EqualDistribution { .. } => "equal_distribution",
            StrategyKind::KswinLimited { .. } => "kswin_limited",
            StrategyKind::Udd { .. } => "udd",
            StrategyKind::KswinUnlimited { .. } => "kswin_unlimited",
            StrategyKind::AdwinError { .. } => "adwin_error",
        }
    }

    pub fn budget(&self) -> Option<usize> {
        match *self {
            StrategyKind::Uninformed { budget }
            | StrategyKind::EqualDistribution { budget }
            | StrategyKind::KswinLimited { budget, .. } => Some(budget),
            _ => None,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            StrategyKind::KswinLimited { alpha, .. }
            | StrategyKind::Udd { alpha }
            | StrategyKind::KswinUnlimited { alpha } => Some(alpha),
            StrategyKind::AdwinError { delta } => Some(delta),
            _ => None,
        }
    }
}

/// One stream prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub t: usize,
    pub score: UncertaintyScore,
    /// Largest label index the serving model was trained on.
    pub trained_through: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub predictions: Vec<Prediction>,
    /// Signals that caused a retraining, in time order.
    pub detections: Vec<DriftSignal>,
    pub retrain_times: Vec<usize>,
    pub labels_acquired: usize,
    pub pool: TrainingPool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionReport {
    pub rmse: Option<f64>,
    pub mcc: Option<f64>,
    pub n_evaluated: usize,
    pub retrain_count: usize,
    pub labels_acquired: usize,
}

impl RunRecord {
    pub fn detection_times(&self) -> Vec<usize> {
        self.detections.iter().map(|d| d.time_index).collect()
    }

    /// RMSE or MCC over the stream region.
    pub fn prediction_report(&self, ds: &StreamDataset) -> Result<PredictionReport> {
        let (rmse, mcc) = match ds.task() {
            Task::Regression => {
                let pred: Vec<f64> = self.predictions.iter().map(|p| p.score.point()).collect();
                let y: Vec<f64> = self
                    .predictions
                    .iter()
                    .map(|p| ds.get(p.t).y.as_real().expect("regression target"))
                    .collect();
                (Some(metrics::rmse(&pred, &y)?), None)
            }
            Task::Classification => {
                let pred: Vec<usize> = self
                    .predictions
                    .iter()
                    .map(|p| p.score.predicted_class.expect("classification score"))
                    .collect();
                let y: Vec<usize> = self
                    .predictions
                    .iter()
                    .map(|p| ds.get(p.t).y.as_class().expect("class target"))
                    .collect();
                let k = ds.n_classes().expect("classification dataset");
                (None, Some(metrics::mcc(&pred, &y, k)?))
            }
        };
        Ok(PredictionReport {
            rmse,
            mcc,
            n_evaluated: self.predictions.len(),
            retrain_count: self.retrain_times.len(),
            labels_acquired: self.labels_acquired,
        })
    }

    /// `(uncertainty, squared error | correctness)` per prediction.
    pub fn decile_records(&self, ds: &StreamDataset) -> Vec<(f64, f64)> {
        self.predictions
            .iter()
            .map(|p| {
                let contribution = match ds.get(p.t).y {
                    Target::Real(y) => (p.score.point() - y) * (p.score.point() - y),
                    Target::Class(c) => f64::from(u8::from(p.score.predicted_class == Some(c))),
                };
                (p.score.value, contribution)
            })
            .collect()
    }

    pub fn decile_report(&self, ds: &StreamDataset) -> Result<DecileReport> {
        metrics::decile_analysis(&self.decile_records(ds), ds.task())
    }
}

/// Decides, after each prediction, whether to retrain.
trait Trigger {
    fn observe(
        &mut self,
        t: usize,
        inst: &LabeledInstance,
        score: &UncertaintyScore,
    ) -> Result<Option<DriftSignal>>;

    fn after_retrain(&mut self) {}
}

struct Never;

impl Trigger for Never {
    fn observe(
        &mut self,
        _: usize,
        _: &LabeledInstance,
        _: &UncertaintyScore,
    ) -> Result<Option<DriftSignal>> {
        Ok(None)
    }
}

/// Fires at precomputed times.
struct Scheduled {
    signals: Vec<DriftSignal>,
    next: usize,
}

impl Scheduled {
    fn new(mut signals: Vec<DriftSignal>) -> Self {
        signals.sort_by_key(|s| s.time_index);
        signals.dedup_by_key(|s| s.time_index);
        Self { signals, next: 0 }
    }

    fn at_times(times: impl IntoIterator<Item = usize>) -> Self {
        Self::new(
            times
                .into_iter()
                .map(|t| DriftSignal::new(t, SignalSource::Schedule))
                .collect(),
        )
    }
}

impl Trigger for Scheduled {
    fn observe(
        &mut self,
        t: usize,
        _: &LabeledInstance,
        _: &UncertaintyScore,
    ) -> Result<Option<DriftSignal>> {
        match self.signals.get(self.next) {
            Some(s) if s.time_index == t => {
                self.next += 1;
                Ok(Some(*s))
            }
            _ => Ok(None),
        }
    }
}

struct UncertaintyAdwin(Adwin);

impl Trigger for UncertaintyAdwin {
    fn observe(
        &mut self,
        t: usize,
        _: &LabeledInstance,
        score: &UncertaintyScore,
    ) -> Result<Option<DriftSignal>> {
        Ok(self
            .0
            .update(score.value)?
            .then(|| DriftSignal::new(t, SignalSource::UncertaintyAdwin)))
    }

    fn after_retrain(&mut self) {
        self.0.reset();
    }
}

struct ErrorAdwin(Adwin);

/// `|y - y_hat|` for regression, the 0/1 misclassification indicator for
/// classification.
fn prediction_error(inst: &LabeledInstance, score: &UncertaintyScore) -> f64 {
    match inst.y {
        Target::Real(y) => (y - score.point()).abs(),
        Target::Class(c) => f64::from(u8::from(score.predicted_class != Some(c))),
    }
}

impl Trigger for ErrorAdwin {
    fn observe(
        &mut self,
        t: usize,
        inst: &LabeledInstance,
        score: &UncertaintyScore,
    ) -> Result<Option<DriftSignal>> {
        Ok(self
            .0
            .update(prediction_error(inst, score))?
            .then(|| DriftSignal::new(t, SignalSource::ErrorAdwin)))
    }

    fn after_retrain(&mut self) {
        self.0.reset();
    }
}

struct KswinTrigger(Kswin);

impl Trigger for KswinTrigger {
    fn observe(
        &mut self,
        t: usize,
        inst: &LabeledInstance,
        _: &UncertaintyScore,
    ) -> Result<Option<DriftSignal>> {
        let step = self.0.update(t, &inst.x)?;
        Ok(if step.detected { step.best } else { None })
    }

    fn after_retrain(&mut self) {
        self.0.reset();
    }
}

/// Which detector an alpha is calibrated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    /// ADWIN on the validation uncertainty stream.
    Udd,
    /// KSWIN on the validation input features.
    Kswin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub alpha: f64,
    /// Detection count at each grid value, most sensitive first.
    pub counts: Vec<(f64, usize)>,
    /// The default was used because no grid value produced a detection.
    pub fallback: bool,
}

/// Sensitivity grid, most sensitive first: 0.1, 0.05, 0.01, 0.002, then
/// 1e-6 down to 1e-90 in steps of four decades.
pub fn alpha_grid() -> Vec<f64> {
    let mut grid = Vec::from([0.1, 0.05, 1e-2, 2e-3]);
    let mut exp = -6i32;
    while exp >= -90 {
        grid.push(decade(exp));
        exp -= 4;
    }
    grid
}

fn decade(exp: i32) -> f64 {
    // parse rather than powi so 1e-90 is the exact literal value
    let s = format!("1e{exp}");
    s.parse().expect("valid float literal")
}

/// Largest alpha with exactly one detection. Without one, the smallest
/// positive count wins (ties to the larger alpha). With no detection at any
/// grid value the default 0.002 is returned.
pub fn select_alpha(counts: &[(f64, usize)]) -> (f64, bool) {
    let best = counts
        .iter()
        .filter(|(_, c)| *c >= 1)
        .min_by(|a, b| a.1.cmp(&b.1).then(b.0.total_cmp(&a.0)));
    match best {
        Some(&(alpha, _)) => (alpha, false),
        None => (Adwin::DEFAULT_DELTA, true),
    }
}

/// A dataset, its partition and the model configuration shared by every
/// strategy run.
#[derive(Debug, Clone)]
pub struct Experiment<'a> {
    ds: &'a StreamDataset,
    part: Partition,
    cfg: ModelConfig,
    seed: u64,
}

impl<'a> Experiment<'a> {
    pub fn new(ds: &'a StreamDataset, cfg: ModelConfig, seed: u64) -> Result<Self> {
        let part = Partition::of(ds)?;
        if cfg.passes == 0 {
            return Err(Error::InvalidConfig("passes must be >= 1".into()));
        }
        Ok(Self {
            ds,
            part,
            cfg,
            seed,
        })
    }

    pub fn dataset(&self) -> &StreamDataset {
        self.ds
    }

    pub fn partition(&self) -> &Partition {
        &self.part
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn model_seed(&self, retrain_index: usize) -> u64 {
        derive_seed(derive_seed(self.seed, SEED_MODEL), retrain_index as u64)
    }

    fn predict_seed(&self, t: usize) -> u64 {
        derive_seed(derive_seed(self.seed, SEED_PREDICT), t as u64)
    }

    /// The model trained on the initial training range.
    pub fn initial_model(&self) -> Result<Model> {
        Model::fit(
            self.ds,
            &TrainingPool::new(self.part.train.clone()),
            &self.cfg,
            self.model_seed(0),
        )
    }

    fn run_loop(
        &self,
        strategy: StrategyKind,
        initial: &Model,
        trigger: &mut dyn Trigger,
    ) -> Result<RunRecord> {
        let mut model = initial.clone();
        let mut pool = TrainingPool::new(self.part.train.clone());
        let mut predictions = Vec::with_capacity(self.part.stream.len());
        let mut detections = Vec::new();
        let mut retrain_times = Vec::new();
        for t in self.part.stream.clone() {
            let inst = self.ds.get(t);
            let score = model.predict(&inst.x, self.cfg.passes, self.predict_seed(t))?;
            let signal = trigger.observe(t, inst, &score)?;
            predictions.push(Prediction {
                t,
                score,
                trained_through: model.trained_through(),
            });
            if let Some(signal) = signal {
                pool.acquire_recent(&self.part, t)?;
                retrain_times.push(t);
                detections.push(signal);
                model = Model::fit(
                    self.ds,
                    &pool,
                    &self.cfg,
                    self.model_seed(retrain_times.len()),
                )?;
                trigger.after_retrain();
            }
        }
        Ok(RunRecord {
            strategy,
            seed: self.seed,
            predictions,
            detections,
            retrain_times,
            labels_acquired: pool.labels_acquired(),
            pool,
            warnings: Vec::new(),
        })
    }

    pub fn run_no_retrain(&self, initial: &Model) -> Result<RunRecord> {
        self.run_loop(StrategyKind::NoRetrain, initial, &mut Never)
    }

    /// ADWIN on the uncertainty stream; retrain on every detection.
    pub fn run_udd(&self, initial: &Model, alpha: f64) -> Result<RunRecord> {
        let mut trigger = UncertaintyAdwin(Adwin::new(alpha)?);
        self.run_loop(StrategyKind::Udd { alpha }, initial, &mut trigger)
    }

    /// One run per seed, each retraining at `budget` times drawn uniformly
    /// without replacement from the stream region.
    pub fn run_uninformed(
        &self,
        initial: &Model,
        budget: usize,
        seeds: &[u64],
    ) -> Result<Vec<RunRecord>> {
        let len = self.part.stream.len();
        if budget > len {
            return Err(Error::OutOfRange(format!(
                "budget {budget} exceeds stream length {len}"
            )));
        }
        seeds
            .iter()
            .map(|&s| {
                let mut rng = rng_from_seed(s);
                let picks = index::sample(&mut rng, len, budget);
                let mut trigger =
                    Scheduled::at_times(picks.into_iter().map(|i| self.part.stream.start + i));
                let mut record =
                    self.run_loop(StrategyKind::Uninformed { budget }, initial, &mut trigger)?;
                record.seed = s;
                Ok(record)
            })
            .collect()
    }

    /// Retraining times `stream_start + round(k L / (budget + 1))`.
    pub fn equal_distribution_times(&self, budget: usize) -> Vec<usize> {
        let len = self.part.stream.len();
        let denom = budget + 1;
        (1..=budget)
            .map(|k| self.part.stream.start + (2 * k * len + denom) / (2 * denom))
            .collect()
    }

    pub fn run_equal_distribution(&self, initial: &Model, budget: usize) -> Result<RunRecord> {
        let mut trigger = Scheduled::at_times(self.equal_distribution_times(budget));
        self.run_loop(
            StrategyKind::EqualDistribution { budget },
            initial,
            &mut trigger,
        )
    }

    /// KSWIN over the stream features with no retraining; every alarm with
    /// its p-value.
    pub fn kswin_alarms(&self, alpha: f64) -> Result<Vec<DriftSignal>> {
        let mut kswin = Kswin::new(KswinConfig::new(alpha))?;
        let mut alarms = Vec::new();
        for t in self.part.stream.clone() {
            let step = kswin.update(t, &self.ds.get(t).x)?;
            if step.detected {
                alarms.extend(step.best);
            }
        }
        Ok(alarms)
    }

    /// Unlimited: every alarm retrains. Limited: a detector-only first pass
    /// collects alarms, the `budget` smallest p-values are kept, and a second
    /// pass retrains exactly there.
    pub fn run_kswin(
        &self,
        initial: &Model,
        alpha: f64,
        budget: Option<usize>,
    ) -> Result<RunRecord> {
        match budget {
            None => {
                let mut trigger = KswinTrigger(Kswin::new(KswinConfig::new(alpha))?);
                self.run_loop(
                    StrategyKind::KswinUnlimited { alpha },
                    initial,
                    &mut trigger,
                )
            }
            Some(budget) => {
                let mut alarms = self.kswin_alarms(alpha)?;
                let found = alarms.len();
                alarms.sort_by(|a, b| {
                    a.p_value
                        .unwrap_or(1.0)
                        .total_cmp(&b.p_value.unwrap_or(1.0))
                        .then(a.time_index.cmp(&b.time_index))
                });
                alarms.truncate(budget);
                let mut trigger = Scheduled::new(alarms);
                let mut record = self.run_loop(
                    StrategyKind::KswinLimited { alpha, budget },
                    initial,
                    &mut trigger,
                )?;
                if found < budget {
                    record.warnings.push(format!(
                        "kswin_limited: first pass found {found} alarms for a budget of {budget}"
                    ));
                }
                Ok(record)
            }
        }
    }

    /// ADWIN on the prediction error. Needs every label, so
    /// `labels_acquired` is the stream length.
    pub fn run_adwin_error(&self, initial: &Model, delta: f64) -> Result<RunRecord> {
        let mut trigger = ErrorAdwin(Adwin::new(delta)?);
        let mut record =
            self.run_loop(StrategyKind::AdwinError { delta }, initial, &mut trigger)?;
        record.labels_acquired = self.part.stream.len();
        Ok(record)
    }

    /// Uncertainty of the initial model on the validation range.
    pub fn validation_uncertainty(&self, initial: &Model) -> Result<Vec<f64>> {
        self.part
            .validation
            .clone()
            .map(|t| {
                initial
                    .predict(&self.ds.get(t).x, self.cfg.passes, self.predict_seed(t))
                    .map(|s| s.value)
            })
            .collect()
    }

    /// Sweep the alpha grid over the validation range and pick the value
    /// yielding one detection (see [`select_alpha`]).
    pub fn calibrate(&self, initial: &Model, kind: DetectorKind) -> Result<Calibration> {
        let grid = alpha_grid();
        let counts: Vec<(f64, usize)> = match kind {
            DetectorKind::Udd => {
                let u = self.validation_uncertainty(initial)?;
                grid.iter()
                    .map(|&a| {
                        let mut adwin = Adwin::new(a)?;
                        for &v in &u {
                            adwin.update(v)?;
                        }
                        Ok((a, adwin.detections()))
                    })
                    .collect::<Result<_>>()?
            }
            DetectorKind::Kswin => grid
                .iter()
                .map(|&a| {
                    let mut kswin = Kswin::new(KswinConfig::new(a))?;
                    for t in self.part.validation.clone() {
                        kswin.update(t, &self.ds.get(t).x)?;
                    }
                    Ok((a, kswin.detections()))
                })
                .collect::<Result<_>>()?,
        };
        let (alpha, fallback) = select_alpha(&counts);
        Ok(Calibration {
            alpha,
            counts,
            fallback,
        })
    }
}
