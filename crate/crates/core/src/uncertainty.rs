//! Aggregation of a [`PredictiveSample`] into a point prediction and a scalar
//! uncertainty: predictive entropy (bits) for classifiers, population
//! variance of the passes for regressors.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::nnet::PredictiveSample;
use crate::{Error, Result, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UncertaintyKind {
    EntropyBits,
    Variance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyScore {
    pub kind: UncertaintyKind,
    pub value: f64,
    /// Mean class-probability vector, or a single element for regression.
    pub prediction: Vec<f64>,
    pub predicted_class: Option<usize>,
}

impl UncertaintyScore {
    /// Scalar prediction for regression scores.
    pub fn point(&self) -> f64 {
        self.prediction[0]
    }
}

/// Component-wise mean over the passes.
pub fn predictive_mean(sample: &PredictiveSample) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(Error::Empty("predictive sample"));
    }
    let mut mean = vec![0.0; sample.dim()];
    for pass in sample.passes() {
        mean.iter_mut().zip(pass).for_each(|(m, p)| *m += p);
    }
    let t = sample.len() as f64;
    mean.iter_mut().for_each(|m| *m /= t);
    Ok(mean)
}

/// Shannon entropy in bits, with `0 * log2(0) = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::Empty("probability vector"));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidProbability(format!(
            "negative or non-finite entry in {p:?}"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidProbability(format!("entries sum to {sum}")));
    }
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log2()).sum();
    Ok(h.max(0.0))
}

/// Population variance (divide by `T`) of scalar passes.
pub fn variance(sample: &PredictiveSample) -> Result<f64> {
    if sample.dim() != 1 {
        return Err(Error::TaskMismatch(format!(
            "variance needs scalar passes, got dimension {}",
            sample.dim()
        )));
    }
    // Shift by the first pass so identical passes give exactly zero (the
    // plain mean of T equal values can be off by an ulp).
    let shift = sample.pass(0)[0];
    let t = sample.len() as f64;
    let mean = sample.passes().map(|p| p[0] - shift).sum::<f64>() / t;
    Ok(sample
        .passes()
        .map(|p| (p[0] - shift - mean) * (p[0] - shift - mean))
        .sum::<f64>()
        / t)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in v.iter().enumerate() {
        match best {
            Some((_, b)) if x <= b => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}

pub fn score(sample: &PredictiveSample, task: Task) -> Result<UncertaintyScore> {
    match task {
        Task::Classification => {
            if sample.dim() < 2 {
                return Err(Error::TaskMismatch(
                    "classification needs probability-vector passes".into(),
                ));
            }
            let mean = predictive_mean(sample)?;
            let value = entropy(&mean)?;
            Ok(UncertaintyScore {
                kind: UncertaintyKind::EntropyBits,
                value,
                predicted_class: argmax(&mean),
                prediction: mean,
            })
        }
        Task::Regression => {
            let value = variance(sample)?;
            let mean = predictive_mean(sample)?;
            Ok(UncertaintyScore {
                kind: UncertaintyKind::Variance,
                value,
                prediction: mean,
                predicted_class: None,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(passes: &[&[f64]]) -> PredictiveSample {
        PredictiveSample::from_passes(passes.iter().copied()).unwrap()
    }

    fn scalar(values: &[f64]) -> PredictiveSample {
        PredictiveSample::from_passes(values.iter().map(|v| [*v])).unwrap()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(
            predictive_mean(&sample(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap(),
            vec![0.5, 0.5]
        );
        assert_eq!(
            predictive_mean(&sample(&[&[0.2, 0.8]])).unwrap(),
            vec![0.2, 0.8]
        );
        let m = predictive_mean(&sample(&[&[0.1, 0.9], &[0.3, 0.7], &[0.2, 0.8]])).unwrap();
        assert!((m[0] - 0.2).abs() < 1e-15 && (m[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn empty_sample_rejected() {
        let none: [&[f64]; 0] = [];
        assert!(PredictiveSample::from_passes(none).is_err());
        assert!(PredictiveSample::from_passes([&[1.0][..], &[1.0, 2.0][..]]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(entropy(&[1.0, 0.0]).unwrap(), 0.0);
        // -0.9 log2 0.9 - 0.1 log2 0.1, evaluated with natural logs
        let oracle = -(0.9 * 0.9f64.ln() + 0.1 * 0.1f64.ln()) / core::f64::consts::LN_2;
        assert!((oracle - 0.468_996).abs() < 1e-5);
        assert!((entropy(&[0.9, 0.1]).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_invalid_vectors() {
        assert!(entropy(&[0.6, 0.6]).is_err());
        assert!(entropy(&[1.2, -0.2]).is_err());
        assert!(entropy(&[]).is_err());
    }

    #[test]
    fn variance_examples() {
        assert_eq!(variance(&scalar(&[5.0, 5.0, 5.0])).unwrap(), 0.0);
        assert!((variance(&scalar(&[1.0, 2.0, 3.0])).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(variance(&scalar(&[4.2])).unwrap(), 0.0);
        assert_eq!(variance(&scalar(&[0.1 + 0.2; 100])).unwrap(), 0.0);
        assert!(variance(&sample(&[&[0.5, 0.5]])).is_err());
    }

    #[test]
    fn score_examples() {
        let s = score(&sample(&[&[1.0, 0.0], &[1.0, 0.0]]), Task::Classification).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.predicted_class, Some(0));

        let s = score(&scalar(&[1.0, 2.0, 3.0]), Task::Regression).unwrap();
        assert!((s.value - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.point(), 2.0);
        assert_eq!(s.kind, UncertaintyKind::Variance);

        let s = score(&sample(&[&[0.5, 0.5]]), Task::Classification).unwrap();
        assert_eq!(s.value, 1.0);
        assert_eq!(s.predicted_class, Some(0));

        assert!(score(&scalar(&[0.5]), Task::Classification).is_err());
        assert!(score(&sample(&[&[0.5, 0.5]]), Task::Regression).is_err());
    }

    fn prob_vector() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 2..8).prop_filter_map("nonzero mass", |raw| {
            let s: f64 = raw.iter().sum();
            (s > 1e-6).then(|| raw.iter().map(|v| v / s).collect())
        })
    }

    proptest! {
        #[test]
        fn entropy_permutation_invariant(p in prob_vector(), rot in 0usize..8) {
            let mut q = p.clone();
            let k = rot % q.len();
            q.rotate_left(k);
            q.reverse();
            prop_assert!((entropy(&p).unwrap() - entropy(&q).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn entropy_bounded_by_uniform(p in prob_vector()) {
            let k = p.len();
            let uniform = vec![1.0 / k as f64; k];
            let h_max = entropy(&uniform).unwrap();
            prop_assert!((h_max - (k as f64).log2()).abs() < 1e-9);
            let h = entropy(&p).unwrap();
            prop_assert!(h >= 0.0 && h <= h_max + 1e-12);
        }

        #[test]
        fn variance_zero_iff_constant(values in prop::collection::vec(-100.0f64..100.0, 1..40)) {
            let v = variance(&scalar(&values)).unwrap();
            let first = values[0];
            let constant = values.iter().all(|x| (x - first).abs() <= 1e-12);
            prop_assert!(v >= 0.0);
            prop_assert_eq!(constant, v <= 1e-12);
        }

        #[test]
        fn variance_translation_invariant(
            values in prop::collection::vec(-10.0f64..10.0, 1..40),
            c in -100.0f64..100.0,
        ) {
            let shifted: Vec<f64> = values.iter().map(|v| v + c).collect();
            let a = variance(&scalar(&values)).unwrap();
            let b = variance(&scalar(&shifted)).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
