//! Datasets, the train / validation / stream partition, the growing pool of
//! labelled indices used for retraining, and feature standardization.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result, Target, Task};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub x: Vec<f64>,
    pub y: Target,
    pub t: usize,
    /// Which drift regime generated the instance (0 for real-world data).
    pub segment_id: usize,
}

/// An ordered, immutable data stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamDataset {
    name: String,
    task: Task,
    n_features: usize,
    n_classes: Option<usize>,
    instances: Vec<LabeledInstance>,
}

impl StreamDataset {
    /// Validates feature dimensions, target kinds and class ranges. For
    /// classification `n_classes` defaults to `max label + 1`.
    pub fn new(
        name: impl Into<String>,
        task: Task,
        instances: Vec<LabeledInstance>,
        n_classes: Option<usize>,
    ) -> Result<Self> {
        let first = instances.first().ok_or(Error::Empty("dataset"))?;
        let n_features = first.x.len();
        if n_features == 0 {
            return Err(Error::Empty("feature vector"));
        }
        let mut max_class = 0;
        for (i, inst) in instances.iter().enumerate() {
            if inst.x.len() != n_features {
                return Err(Error::DimensionMismatch {
                    expected: n_features,
                    found: inst.x.len(),
                });
            }
            if inst.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("dataset features"));
            }
            match (task, inst.y) {
                (Task::Regression, Target::Real(v)) if v.is_finite() => {}
                (Task::Classification, Target::Class(c)) => max_class = max_class.max(c),
                _ => {
                    return Err(Error::TaskMismatch(format!(
                        "instance {i} has target {:?} in a {task:?} dataset",
                        inst.y
                    )))
                }
            }
        }
        let n_classes = match task {
            Task::Regression => None,
            Task::Classification => {
                let k = n_classes.unwrap_or(max_class + 1);
                if max_class >= k {
                    return Err(Error::OutOfRange(format!(
                        "class {max_class} with {k} classes"
                    )));
                }
                Some(k.max(2))
            }
        };
        Ok(Self {
            name: name.into(),
            task,
            n_features,
            n_classes,
            instances,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> Option<usize> {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[LabeledInstance] {
        &self.instances
    }

    pub fn get(&self, t: usize) -> &LabeledInstance {
        &self.instances[t]
    }
}

/// Round-half-up of `n * pct / 100` in integer arithmetic.
fn percent(n: usize, pct: usize) -> usize {
    (n * pct + 50) / 100
}

/// Contiguous 5% training / 10% validation / remaining stream split, plus
/// the retraining batch size (1% of the total length).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub stream: Range<usize>,
    pub retrain_batch_size: usize,
}

impl Partition {
    pub const MIN_LEN: usize = 100;

    pub fn of_len(n: usize) -> Result<Self> {
        if n < Self::MIN_LEN {
            return Err(Error::DatasetTooSmall {
                len: n,
                min: Self::MIN_LEN,
            });
        }
        let train_end = percent(n, 5);
        let val_end = train_end + percent(n, 10);
        Ok(Self {
            train: 0..train_end,
            validation: train_end..val_end,
            stream: val_end..n,
            retrain_batch_size: percent(n, 1).max(1),
        })
    }

    pub fn of(ds: &StreamDataset) -> Result<Self> {
        Self::of_len(ds.len())
    }
}

/// Indices whose labels the model may train on: the initial training range
/// plus every batch acquired at a retraining point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingPool {
    base: Range<usize>,
    acquired: Vec<Range<usize>>,
    labels_acquired: usize,
}

impl TrainingPool {
    pub fn new(base: Range<usize>) -> Self {
        Self {
            base,
            acquired: Vec::new(),
            labels_acquired: 0,
        }
    }

    pub fn base(&self) -> Range<usize> {
        self.base.clone()
    }

    /// Newly acquired ranges, one per acquisition that added labels.
    pub fn acquired(&self) -> &[Range<usize>] {
        &self.acquired
    }

    pub fn labels_acquired(&self) -> usize {
        self.labels_acquired
    }

    pub fn len(&self) -> usize {
        self.base.len() + self.labels_acquired
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All pool indices in ascending order.
    pub fn indices(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.base.clone().collect();
        for r in &self.acquired {
            out.extend(r.clone());
        }
        out.sort_unstable();
        out
    }

    /// Largest index in the pool.
    pub fn max_index(&self) -> Option<usize> {
        self.acquired
            .iter()
            .filter(|r| !r.is_empty())
            .map(|r| r.end - 1)
            .chain((!self.base.is_empty()).then(|| self.base.end - 1))
            .max()
    }

    /// Acquire the labels of the `retrain_batch_size` most recent instances
    /// up to and including `t`, clipped to the stream region and minus any
    /// index already acquired. Returns the number of new labels.
    pub fn acquire_recent(&mut self, part: &Partition, t: usize) -> Result<usize> {
        if !part.stream.contains(&t) {
            return Err(Error::OutOfRange(format!(
                "t = {t} outside stream region {:?}",
                part.stream
            )));
        }
        let start = (t + 1)
            .saturating_sub(part.retrain_batch_size)
            .max(part.stream.start);
        #[allow(clippy::single_range_in_vec_init)]
        let mut pieces = vec![start..t + 1];
        for have in &self.acquired {
            pieces = pieces
                .into_iter()
                .flat_map(|p| subtract(p, have.clone()))
                .collect();
        }
        let mut added = 0;
        for p in pieces.into_iter().filter(|p| !p.is_empty()) {
            added += p.len();
            self.acquired.push(p);
        }
        self.labels_acquired += added;
        Ok(added)
    }
}

fn subtract(a: Range<usize>, b: Range<usize>) -> Vec<Range<usize>> {
    if b.end <= a.start || b.start >= a.end {
        return vec![a];
    }
    let mut out = Vec::with_capacity(2);
    if a.start < b.start {
        out.push(a.start..b.start);
    }
    if b.end < a.end {
        out.push(b.end..a.end);
    }
    out
}

/// Per-feature affine standardization fitted on a set of indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub const SCALE_FLOOR: f64 = 1e-8;

    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        let first = rows.first().ok_or(Error::Empty("standardization pool"))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in &rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.len(),
                });
            }
            mean.iter_mut().zip(r.iter()).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in &rows {
            var.iter_mut()
                .zip(r.iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m) * (v - m));
        }
        let scale = var
            .into_iter()
            .map(|s| (s / n).sqrt().max(Self::SCALE_FLOOR))
            .collect();
        Ok(Self { mean, scale })
    }

    /// Fit on the pool's feature vectors.
    pub fn fit_pool(ds: &StreamDataset, pool: &TrainingPool) -> Result<Self> {
        let idx = pool.indices();
        Self::fit(idx.iter().map(|&i| ds.get(i).x.as_slice()))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reg_dataset(n: usize) -> StreamDataset {
        let inst = (0..n)
            .map(|t| LabeledInstance {
                x: vec![t as f64, 1.0],
                y: Target::Real(t as f64),
                t,
                segment_id: 0,
            })
            .collect();
        StreamDataset::new("toy", Task::Regression, inst, None).unwrap()
    }

    #[test]
    fn partition_examples() {
        let p = Partition::of_len(10_000).unwrap();
        assert_eq!(p.train, 0..500);
        assert_eq!(p.validation, 500..1500);
        assert_eq!(p.stream, 1500..10_000);
        assert_eq!(p.retrain_batch_size, 100);

        let p = Partition::of_len(100).unwrap();
        assert_eq!((p.train, p.validation, p.stream), (0..5, 5..15, 15..100));
        assert_eq!(p.retrain_batch_size, 1);

        assert!(matches!(
            Partition::of_len(50),
            Err(Error::DatasetTooSmall { len: 50, min: 100 })
        ));
    }

    #[test]
    fn acquire_examples() {
        let part = Partition::of_len(10_000).unwrap();
        let mut pool = TrainingPool::new(part.train.clone());
        assert_eq!(pool.acquire_recent(&part, 2000).unwrap(), 100);
        assert_eq!(pool.acquired(), &[1901..2001]);
        assert_eq!(pool.acquire_recent(&part, 2050).unwrap(), 50);
        assert_eq!(pool.acquired()[1], 2001..2051);
        assert_eq!(pool.labels_acquired(), 150);

        let mut pool = TrainingPool::new(part.train.clone());
        assert_eq!(pool.acquire_recent(&part, 1500).unwrap(), 1);
        assert_eq!(pool.acquired(), &[1500..1501]);
        assert!(pool.acquire_recent(&part, 1499).is_err());
        assert!(pool.acquire_recent(&part, 10_000).is_err());
    }

    #[test]
    fn pool_indices_cover_base_and_acquired() {
        let part = Partition::of_len(1_000).unwrap();
        let mut pool = TrainingPool::new(part.train.clone());
        pool.acquire_recent(&part, 400).unwrap();
        let idx = pool.indices();
        assert_eq!(idx.len(), 50 + 10);
        assert_eq!(pool.max_index(), Some(400));
        assert_eq!(pool.len(), idx.len());
    }

    #[test]
    fn standardize_examples() {
        let rows = [[5.0, 8.0], [5.0, 12.0]];
        let s = Standardizer::fit(rows.iter().map(|r| r.as_slice())).unwrap();
        // constant feature collapses to zero; mean 10, sd 2 maps 14 to 2
        assert_eq!(s.transform(&[5.0, 14.0]), vec![0.0, 2.0]);

        let rows = [[-1.0], [1.0]];
        let s = Standardizer::fit(rows.iter().map(|r| r.as_slice())).unwrap();
        assert!((s.transform(&[0.3])[0] - 0.3).abs() < 1e-9);

        assert!(Standardizer::fit(core::iter::empty::<&[f64]>()).is_err());
    }

    #[test]
    fn fit_pool_uses_pool_rows_only() {
        let ds = reg_dataset(200);
        let pool = TrainingPool::new(0..10);
        let s = Standardizer::fit_pool(&ds, &pool).unwrap();
        assert!((s.mean()[0] - 4.5).abs() < 1e-12);
    }

    #[test]
    fn dataset_validates_targets() {
        let inst = vec![LabeledInstance {
            x: vec![1.0],
            y: Target::Class(0),
            t: 0,
            segment_id: 0,
        }];
        assert!(StreamDataset::new("x", Task::Regression, inst.clone(), None).is_err());
        let ds = StreamDataset::new("x", Task::Classification, inst, None).unwrap();
        assert_eq!(ds.n_classes(), Some(2));
    }

    proptest! {
        #[test]
        fn partition_covers(n in 100usize..200_000) {
            let p = Partition::of_len(n).unwrap();
            prop_assert_eq!(p.train.start, 0);
            prop_assert_eq!(p.train.end, p.validation.start);
            prop_assert_eq!(p.validation.end, p.stream.start);
            prop_assert_eq!(p.stream.end, n);
            prop_assert!(p.retrain_batch_size >= 1);
            prop_assert!(!p.train.is_empty() && !p.stream.is_empty());
        }

        #[test]
        fn labels_counter_matches_union(ts in prop::collection::vec(0usize..3_000, 0..20)) {
            let part = Partition::of_len(5_000).unwrap();
            let mut pool = TrainingPool::new(part.train.clone());
            let mut union = alloc::collections::BTreeSet::new();
            for t in ts {
                let t = part.stream.start + t;
                pool.acquire_recent(&part, t).unwrap();
                let lo = (t + 1).saturating_sub(part.retrain_batch_size).max(part.stream.start);
                union.extend(lo..=t);
            }
            prop_assert_eq!(pool.labels_acquired(), union.len());
            let idx = pool.indices();
            let mut dedup = idx.clone();
            dedup.dedup();
            prop_assert_eq!(idx.len(), dedup.len());
        }

        #[test]
        fn standardize_roundtrip(
            rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 2..30),
            probe in prop::collection::vec(-100.0f64..100.0, 3),
        ) {
            let s = Standardizer::fit(rows.iter().map(|r| r.as_slice())).unwrap();
            prop_assume!(s.scale().iter().all(|&sc| sc > 1e-3));
            let back = s.inverse(&s.transform(&probe));
            for (a, b) in back.iter().zip(&probe) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
