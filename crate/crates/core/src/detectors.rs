//! Change detectors for real-valued streams.
//!
//! [`Adwin`] keeps a variable-length window as an exponential histogram and
//! drops its oldest part whenever two sub-windows have significantly
//! different means (Bifet & Gavaldà, 2007). [`Kswin`] runs a two-sample
//! Kolmogorov–Smirnov test per input feature between the recent and the
//! older part of a sliding window.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Where a drift signal came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalSource {
    UncertaintyAdwin,
    ErrorAdwin,
    Kswin,
    /// Retraining point chosen by a schedule rather than a detector.
    Schedule,
}

impl SignalSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SignalSource::UncertaintyAdwin => "uncertainty_adwin",
            SignalSource::ErrorAdwin => "error_adwin",
            SignalSource::Kswin => "kswin",
            SignalSource::Schedule => "schedule",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSignal {
    pub time_index: usize,
    pub source: SignalSource,
    /// KSWIN only.
    pub p_value: Option<f64>,
    /// KSWIN only.
    pub feature_index: Option<usize>,
}

impl DriftSignal {
    pub fn new(time_index: usize, source: SignalSource) -> Self {
        Self {
            time_index,
            source,
            p_value: None,
            feature_index: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Bucket {
    sum: f64,
    /// Sum of squared deviations from the bucket mean.
    m2: f64,
}

/// ADWIN change detector with confidence parameter `delta`.
#[derive(Debug, Clone)]
pub struct Adwin {
    delta: f64,
    /// `levels[i]` holds buckets of `2^i` elements, oldest at the front.
    levels: Vec<VecDeque<Bucket>>,
    width: usize,
    total: f64,
    /// Sum of squared deviations from the window mean.
    m2: f64,
    detections: usize,
}

impl Adwin {
    pub const DEFAULT_DELTA: f64 = 0.002;
    /// Buckets per level before the two oldest merge into the next level.
    pub const MAX_BUCKETS: usize = 5;
    /// Sub-windows shorter than this are never compared.
    pub const MIN_SUBWINDOW: usize = 5;
    /// No cut is attempted until the window is longer than this.
    pub const MIN_WIDTH: usize = 10;

    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ADWIN delta {delta} outside (0, 1)"
            )));
        }
        Ok(Self {
            delta,
            levels: Vec::new(),
            width: 0,
            total: 0.0,
            m2: 0.0,
            detections: 0,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn mean(&self) -> f64 {
        if self.width == 0 {
            0.0
        } else {
            self.total / self.width as f64
        }
    }

    /// Population variance of the current window.
    pub fn variance(&self) -> f64 {
        if self.width == 0 {
            0.0
        } else {
            self.m2 / self.width as f64
        }
    }

    pub fn detections(&self) -> usize {
        self.detections
    }

    /// Number of buckets at each level.
    pub fn bucket_counts(&self) -> Vec<usize> {
        self.levels.iter().map(VecDeque::len).collect()
    }

    /// Sum of the element counts of all buckets.
    pub fn bucket_width(&self) -> usize {
        self.levels
            .iter()
            .enumerate()
            .map(|(i, l)| l.len() << i)
            .sum()
    }

    /// Forget the whole window, keeping `delta` and the detection count.
    pub fn reset(&mut self) {
        self.levels.clear();
        self.width = 0;
        self.total = 0.0;
        self.m2 = 0.0;
    }

    /// Insert a value and test every bucket boundary for a cut. Returns
    /// `true` when change was detected (and the older part dropped).
    pub fn update(&mut self, value: f64) -> Result<bool> {
        if !value.is_finite() {
            return Err(Error::NonFinite("ADWIN input"));
        }
        self.insert(value);
        let changed = self.detect();
        if changed {
            self.detections += 1;
        }
        Ok(changed)
    }

    fn insert(&mut self, value: f64) {
        if self.width > 0 {
            let n = self.width as f64;
            let mean = self.total / n;
            self.m2 += n * (value - mean) * (value - mean) / (n + 1.0);
        }
        self.width += 1;
        self.total += value;
        if self.levels.is_empty() {
            self.levels.push(VecDeque::new());
        }
        self.levels[0].push_back(Bucket {
            sum: value,
            m2: 0.0,
        });
        self.compress();
    }

    fn compress(&mut self) {
        let mut level = 0;
        while level < self.levels.len() && self.levels[level].len() > Self::MAX_BUCKETS {
            let n = (1usize << level) as f64;
            let a = self.levels[level].pop_front().expect("level over capacity");
            let b = self.levels[level].pop_front().expect("level over capacity");
            let diff = a.sum / n - b.sum / n;
            let merged = Bucket {
                sum: a.sum + b.sum,
                m2: a.m2 + b.m2 + n * n * diff * diff / (2.0 * n),
            };
            if level + 1 == self.levels.len() {
                self.levels.push(VecDeque::new());
            }
            self.levels[level + 1].push_back(merged);
            level += 1;
        }
    }

    fn drop_oldest_bucket(&mut self) {
        let Some(level) = self.levels.iter().rposition(|l| !l.is_empty()) else {
            return;
        };
        let bucket = self.levels[level].pop_front().expect("non-empty level");
        let n_b = (1usize << level) as f64;
        self.width -= 1 << level;
        self.total -= bucket.sum;
        if self.width == 0 {
            self.total = 0.0;
            self.m2 = 0.0;
        } else {
            let n = self.width as f64;
            let diff = bucket.sum / n_b - self.total / n;
            self.m2 -= bucket.m2 + n_b * n * diff * diff / (n_b + n);
            self.m2 = self.m2.max(0.0);
        }
        while self.levels.last().is_some_and(VecDeque::is_empty) {
            self.levels.pop();
        }
    }

    /// Variance-based cut threshold for sub-windows of `n0` (older) and `n1`
    /// (newer) elements.
    fn cut_threshold(&self, n0: usize, n1: usize) -> f64 {
        let n = self.width as f64;
        let log_term = (2.0 * n.ln() / self.delta).ln();
        let m = 1.0 / (n0 - Self::MIN_SUBWINDOW + 1) as f64
            + 1.0 / (n1 - Self::MIN_SUBWINDOW + 1) as f64;
        (2.0 * m * self.variance() * log_term).sqrt() + 2.0 / 3.0 * log_term * m
    }

    fn detect(&mut self) -> bool {
        let mut changed = false;
        'shrink: loop {
            if self.width <= Self::MIN_WIDTH {
                break;
            }
            let mut n0 = 0usize;
            let mut sum0 = 0.0;
            for level in (0..self.levels.len()).rev() {
                let count = self.levels[level].len();
                for k in 0..count {
                    // the newest bucket is never moved to the older side
                    if level == 0 && k + 1 == count {
                        break 'shrink;
                    }
                    n0 += 1 << level;
                    sum0 += self.levels[level][k].sum;
                    let n1 = self.width - n0;
                    if n0 < Self::MIN_SUBWINDOW || n1 < Self::MIN_SUBWINDOW {
                        continue;
                    }
                    let mean0 = sum0 / n0 as f64;
                    let mean1 = (self.total - sum0) / n1 as f64;
                    if (mean0 - mean1).abs() > self.cut_threshold(n0, n1) {
                        changed = true;
                        self.drop_oldest_bucket();
                        continue 'shrink;
                    }
                }
            }
            break;
        }
        changed
    }
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`, computed
/// exactly by merging the sorted samples.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("KS sample"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("KS sample"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic two-sample p-value for statistic `d` with sample sizes `n`
/// and `m`, clamped to `(0, 1]`.
pub fn ks_p_value(d: f64, n: usize, m: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::OutOfRange(format!(
            "KS statistic {d} outside [0, 1]"
        )));
    }
    if n == 0 || m == 0 {
        return Err(Error::Empty("KS sample size"));
    }
    let en = (n as f64 * m as f64) / (n + m) as f64;
    let sqrt_en = en.sqrt();
    let lambda = d * (sqrt_en + 0.12 + 0.11 / sqrt_en);
    Ok(kolmogorov_tail(lambda, 1e-10).clamp(f64::MIN_POSITIVE, 1.0))
}

/// `2 * sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lambda^2)`, stopping once a term is
/// below `rel_tol` times the running sum.
pub(crate) fn kolmogorov_tail(lambda: f64, rel_tol: f64) -> f64 {
    // the alternating series converges too slowly to be useful here, and the
    // tail probability is 1 to double precision
    if lambda < 0.2 {
        return 1.0;
    }
    let a2 = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 2.0;
    for j in 1..=10_000u32 {
        let jf = f64::from(j);
        let term = sign * (a2 * jf * jf).exp();
        sum += term;
        if term.abs() <= rel_tol * sum.abs() || term == 0.0 {
            break;
        }
        sign = -sign;
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KswinConfig {
    pub alpha: f64,
    pub window_size: usize,
    pub stat_size: usize,
}

impl KswinConfig {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            window_size: 200,
            stat_size: 100,
        }
    }
}

/// Outcome of one KSWIN step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KswinStep {
    pub detected: bool,
    /// Smallest p-value over features of this step's tests, if any ran.
    pub best: Option<DriftSignal>,
}

/// Per-feature KSWIN: once a feature's window is full, the most recent
/// `stat_size` values are tested against all older values in the window.
#[derive(Debug, Clone)]
pub struct Kswin {
    cfg: KswinConfig,
    buffers: Vec<VecDeque<f64>>,
    last_p_values: Vec<f64>,
    detections: usize,
}

impl Kswin {
    pub fn new(cfg: KswinConfig) -> Result<Self> {
        if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "KSWIN alpha {} outside (0, 1)",
                cfg.alpha
            )));
        }
        if cfg.stat_size == 0 || cfg.stat_size >= cfg.window_size {
            return Err(Error::InvalidConfig(format!(
                "KSWIN needs 0 < stat_size ({}) < window_size ({})",
                cfg.stat_size, cfg.window_size
            )));
        }
        Ok(Self {
            cfg,
            buffers: Vec::new(),
            last_p_values: Vec::new(),
            detections: 0,
        })
    }

    pub fn config(&self) -> &KswinConfig {
        &self.cfg
    }

    pub fn detections(&self) -> usize {
        self.detections
    }

    pub fn last_p_values(&self) -> &[f64] {
        &self.last_p_values
    }

    pub fn buffered(&self) -> usize {
        self.buffers.first().map_or(0, VecDeque::len)
    }

    pub fn reset(&mut self) {
        self.buffers.iter_mut().for_each(VecDeque::clear);
    }

    pub fn update(&mut self, time_index: usize, x: &[f64]) -> Result<KswinStep> {
        if self.buffers.is_empty() {
            if x.is_empty() {
                return Err(Error::Empty("KSWIN feature vector"));
            }
            self.buffers = (0..x.len())
                .map(|_| VecDeque::with_capacity(self.cfg.window_size))
                .collect();
            self.last_p_values = alloc::vec![1.0; x.len()];
        } else if x.len() != self.buffers.len() {
            return Err(Error::DimensionMismatch {
                expected: self.buffers.len(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("KSWIN input"));
        }

        let mut best: Option<DriftSignal> = None;
        let split = self.cfg.window_size - self.cfg.stat_size;
        for (f, (buf, &v)) in self.buffers.iter_mut().zip(x).enumerate() {
            if buf.len() == self.cfg.window_size {
                buf.pop_front();
            }
            buf.push_back(v);
            if buf.len() < self.cfg.window_size {
                continue;
            }
            let (older, recent) = buf.make_contiguous().split_at(split);
            let d = ks_statistic(recent, older)?;
            let p = ks_p_value(d, recent.len(), older.len())?;
            self.last_p_values[f] = p;
            if best.and_then(|b| b.p_value).is_none_or(|bp| p < bp) {
                best = Some(DriftSignal {
                    time_index,
                    source: SignalSource::Kswin,
                    p_value: Some(p),
                    feature_index: Some(f),
                });
            }
        }
        let detected = best
            .and_then(|b| b.p_value)
            .is_some_and(|p| p < self.cfg.alpha);
        if detected {
            self.detections += 1;
            self.reset();
        }
        Ok(KswinStep { detected, best })
    }
}
