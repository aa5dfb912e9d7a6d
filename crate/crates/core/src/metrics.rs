//! Detection-quality and prediction-quality metrics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::detectors::DriftSignal;
use crate::{Error, Result, Task};

/// Matching window between a true drift and a detection, in instances.
pub const DEFAULT_MATCH_WINDOW: usize = 600;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    /// Mean delay from true drift to its matched detection; `None` without
    /// any match.
    pub mtd: Option<f64>,
    /// Detections not matched to a true drift.
    pub fac: usize,
    /// True drifts without a matched detection.
    pub mdc: usize,
    pub matched: usize,
    pub matching_window: usize,
}

/// Greedy matching in time order: each true drift `tau` takes the earliest
/// unmatched detection in `(tau, tau + window]`.
pub fn detection_metrics(
    truth: &[usize],
    detections: &[usize],
    window: usize,
) -> Result<DetectionReport> {
    if window == 0 {
        return Err(Error::InvalidConfig(
            "matching window must be positive".into(),
        ));
    }
    if detections.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig(
            "detections must be time-sorted".into(),
        ));
    }
    let mut used = vec![false; detections.len()];
    let mut delays = Vec::new();
    let mut sorted_truth = truth.to_vec();
    sorted_truth.sort_unstable();
    for &tau in &sorted_truth {
        let hit = detections
            .iter()
            .enumerate()
            .find(|&(i, &d)| !used[i] && d > tau && d <= tau + window);
        if let Some((i, &d)) = hit {
            used[i] = true;
            delays.push((d - tau) as f64);
        }
    }
    let matched = delays.len();
    Ok(DetectionReport {
        mtd: (matched > 0).then(|| delays.iter().sum::<f64>() / matched as f64),
        fac: detections.len() - matched,
        mdc: truth.len() - matched,
        matched,
        matching_window: window,
    })
}

/// [`detection_metrics`] over drift signals.
pub fn detection_report(
    truth: &[usize],
    signals: &[DriftSignal],
    window: usize,
) -> Result<DetectionReport> {
    let times: Vec<usize> = signals.iter().map(|s| s.time_index).collect();
    detection_metrics(truth, &times, window)
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Empty("rmse input"));
    }
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: predictions.len(),
            found: targets.len(),
        });
    }
    let mse = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / predictions.len() as f64;
    Ok(mse.sqrt())
}

/// K x K confusion matrix, rows = actual, columns = predicted.
pub fn confusion_matrix(predicted: &[usize], actual: &[usize], k: usize) -> Result<Vec<Vec<u64>>> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            found: predicted.len(),
        });
    }
    let mut m = vec![vec![0u64; k]; k];
    for (&p, &a) in predicted.iter().zip(actual) {
        if p >= k || a >= k {
            return Err(Error::OutOfRange(format!(
                "label {} with K = {k}",
                p.max(a)
            )));
        }
        m[a][p] += 1;
    }
    Ok(m)
}

/// Generalized (Gorodkin) MCC from a confusion matrix; 0 when the
/// denominator vanishes.
pub fn mcc_from_confusion(m: &[Vec<u64>]) -> f64 {
    let k = m.len();
    let s: f64 = m.iter().flatten().map(|&v| v as f64).sum();
    let c: f64 = (0..k).map(|i| m[i][i] as f64).sum();
    let t: Vec<f64> = (0..k)
        .map(|i| m[i].iter().map(|&v| v as f64).sum())
        .collect();
    let p: Vec<f64> = (0..k)
        .map(|j| m.iter().map(|row| row[j] as f64).sum())
        .collect();
    let pt: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|v| v * v).sum();
    let tt: f64 = t.iter().map(|v| v * v).sum();
    let denom = ((s * s - pp) * (s * s - tt)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (c * s - pt) / denom
    }
}

pub fn mcc(predicted: &[usize], actual: &[usize], k: usize) -> Result<f64> {
    Ok(mcc_from_confusion(&confusion_matrix(predicted, actual, k)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decile {
    pub mean_uncertainty: f64,
    /// RMSE (regression) or accuracy (classification) within the decile.
    pub error: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecileReport {
    pub task: Task,
    pub deciles: Vec<Decile>,
}

/// Sort by uncertainty (stable) and cut into ten contiguous groups, earlier
/// groups taking the remainder. `records` are `(uncertainty, contribution)`
/// with contribution = squared error (regression) or 1/0 correctness
/// (classification).
pub fn decile_analysis(records: &[(f64, f64)], task: Task) -> Result<DecileReport> {
    if records.len() < 10 {
        return Err(Error::InvalidConfig(format!(
            "decile analysis needs at least 10 records, got {}",
            records.len()
        )));
    }
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let base = sorted.len() / 10;
    let extra = sorted.len() % 10;
    let mut deciles = Vec::with_capacity(10);
    let mut start = 0;
    for g in 0..10 {
        let len = base + usize::from(g < extra);
        let group = &sorted[start..start + len];
        start += len;
        let n = len as f64;
        let mean_u = group.iter().map(|r| r.0).sum::<f64>() / n;
        let mean_c = group.iter().map(|r| r.1).sum::<f64>() / n;
        let error = match task {
            Task::Regression => mean_c.sqrt(),
            Task::Classification => mean_c,
        };
        deciles.push(Decile {
            mean_uncertainty: mean_u,
            error,
            count: len,
        });
    }
    Ok(DecileReport { task, deciles })
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::Empty("spearman needs two points"));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}
