//! Synthetic drifting streams with known drift points.
//!
//! Two generators: Friedman #1 regression (ten uniform features, five of them
//! relevant) and the Mixed classification stream (two Booleans, two relevant
//! and two noise discrete features). Each runs under a [`DriftSchedule`] of
//! *real* drifts, which change the concept, and *virtual* drifts, which only
//! reshape the density of the noise features within their usual range.
//!
//! A real drift switches the concept to a new regime and also moves the
//! relevant features somewhere the current model has not seen: Friedman's
//! relevant features move to a new unit cube (the concept is evaluated on
//! cube-local coordinates, so targets keep their scale), and Mixed's Boolean
//! encodings contract towards 0.5. Moving the inputs is what makes a real
//! drift visible without labels: for a frozen network the uncertainty of an
//! instance is a function of its inputs alone, so a drift that kept `P(x)`
//! fixed would be invisible to any label-free detector. Setting the shift
//! (or contraction) to its neutral value gives a pure concept change.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::rng::rng_from_seed;
use crate::stream::{LabeledInstance, StreamDataset};
use crate::{Error, Result, Target, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SynthKind {
    Friedman,
    Mixed,
}

impl SynthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthKind::Friedman => "friedman",
            SynthKind::Mixed => "mixed",
        }
    }

    pub fn task(self) -> Task {
        match self {
            SynthKind::Friedman => Task::Regression,
            SynthKind::Mixed => Task::Classification,
        }
    }
}

impl core::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "friedman" => Ok(SynthKind::Friedman),
            "mixed" => Ok(SynthKind::Mixed),
            other => Err(Error::InvalidConfig(format!(
                "unknown synthetic kind {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DriftKind {
    Real,
    Virtual,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DriftSchedule {
    real_drifts: Vec<usize>,
    virtual_drifts: Vec<usize>,
    length: usize,
    seed: u64,
}

impl DriftSchedule {
    pub fn new(
        real_drifts: Vec<usize>,
        virtual_drifts: Vec<usize>,
        length: usize,
        seed: u64,
    ) -> Result<Self> {
        for (name, list) in [("real", &real_drifts), ("virtual", &virtual_drifts)] {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidSchedule(format!(
                    "{name} drift indices not strictly increasing"
                )));
            }
            if let Some(&t) = list.iter().find(|&&t| t == 0 || t >= length) {
                return Err(Error::InvalidSchedule(format!(
                    "{name} drift at {t} outside (0, {length})"
                )));
            }
        }
        if let Some(t) = real_drifts.iter().find(|t| virtual_drifts.contains(t)) {
            return Err(Error::InvalidSchedule(format!(
                "{t} is both a real and a virtual drift"
            )));
        }
        Ok(Self {
            real_drifts,
            virtual_drifts,
            length,
            seed,
        })
    }

    /// 15,000 instances; real drifts at 4,500 / 7,500 / 10,500 and virtual
    /// drifts at 6,000 / 9,000, all after the 5% + 10% calibration prefix.
    /// Both generators use the same indices.
    pub fn like_paper(seed: u64) -> Self {
        Self::new(vec![4_500, 7_500, 10_500], vec![6_000, 9_000], 15_000, seed)
            .expect("static schedule is valid")
    }

    pub fn real_drifts(&self) -> &[usize] {
        &self.real_drifts
    }

    pub fn virtual_drifts(&self) -> &[usize] {
        &self.virtual_drifts
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// All drifts in time order.
    pub fn events(&self) -> Vec<(usize, DriftKind)> {
        let mut ev: Vec<(usize, DriftKind)> = self
            .real_drifts
            .iter()
            .map(|&t| (t, DriftKind::Real))
            .chain(self.virtual_drifts.iter().map(|&t| (t, DriftKind::Virtual)))
            .collect();
        ev.sort_by_key(|e| e.0);
        ev
    }

    /// Number of real drifts strictly before `t`: a drift at `d` changes
    /// the instances after `d`.
    pub fn real_regime(&self, t: usize) -> usize {
        self.real_drifts.partition_point(|&d| d < t)
    }

    /// Number of virtual drifts strictly before `t`.
    pub fn virtual_regime(&self, t: usize) -> usize {
        self.virtual_drifts.partition_point(|&d| d < t)
    }

    /// Number of drifts of either kind at or before `t`.
    pub fn segment(&self, t: usize) -> usize {
        self.real_regime(t) + self.virtual_regime(t)
    }
}

/// Knobs of the Friedman generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FriedmanConfig {
    /// Standard deviation of the additive Gaussian noise.
    pub noise_sd: f64,
    /// Relevant features of real regime `r` are drawn from
    /// `U[r * shift, r * shift + 1]`.
    pub real_input_shift: f64,
    /// Noise features of virtual regime `v` are `u^(p^v)` with `u ~ U[0,1]`
    /// (see [`warp_noise`]).
    pub virtual_power: f64,
}

impl Default for FriedmanConfig {
    fn default() -> Self {
        Self {
            noise_sd: 1.0,
            real_input_shift: 1.0,
            virtual_power: 3.0,
        }
    }
}

/// Fixed derangement of the five relevant feature roles (a 5-cycle, so every
/// power below 5 is itself a derangement).
fn feature_role(regime: usize, role: usize) -> usize {
    (role + regime) % 5
}

/// Noiseless Friedman #1 target of real regime `regime` on region-local
/// relevant features `u` (five values in `[0, 1]`). Regime 0 is
/// `10 sin(pi u1 u2) + 20 (u3 - 0.5)^2 + 10 u4 + 5 u5`; later regimes
/// permute the roles and scale the sine amplitude by `1 + 0.5 r`.
pub fn friedman_target(regime: usize, u: &[f64]) -> f64 {
    let f = |role: usize| u[feature_role(regime, role)];
    let amp = 1.0 + 0.5 * regime as f64;
    amp * 10.0 * (core::f64::consts::PI * f(0) * f(1)).sin()
        + 20.0 * (f(2) - 0.5) * (f(2) - 0.5)
        + 10.0 * f(3)
        + 5.0 * f(4)
}

/// Noise-feature draw of virtual regime `v` from `u ~ U[0,1]`: `u^(p^v)`.
/// The support stays `[0, 1]`; every virtual drift concentrates the density
/// further towards 0, into territory the earlier data already covered.
pub fn warp_noise(v: usize, power: f64, u: f64) -> f64 {
    if v == 0 {
        u
    } else {
        u.powf(power.powi(v as i32))
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * core::f64::consts::PI * u2).cos()
}

pub fn friedman_stream(schedule: &DriftSchedule, cfg: &FriedmanConfig) -> Vec<LabeledInstance> {
    let mut rng = rng_from_seed(schedule.seed);
    (0..schedule.length)
        .map(|t| {
            let r = schedule.real_regime(t);
            let v = schedule.virtual_regime(t);
            let offset = r as f64 * cfg.real_input_shift;
            let u: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
            let noise: Vec<f64> = (0..5)
                .map(|_| warp_noise(v, cfg.virtual_power, rng.random::<f64>()))
                .collect();
            let eps = cfg.noise_sd * standard_normal(&mut rng);
            let y = friedman_target(r, &u) + eps;
            let mut x: Vec<f64> = u.iter().map(|ui| ui + offset).collect();
            x.extend(noise);
            LabeledInstance {
                x,
                y: Target::Real(y),
                t,
                segment_id: schedule.segment(t),
            }
        })
        .collect()
}

/// Knobs of the Mixed generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedConfig {
    /// Noise features take the levels `{0, ..., 9} / 9`, uniform in regime
    /// 0 and skewed by [`warp_noise`] with this power afterwards.
    pub virtual_power: f64,
    /// Boolean features of real regime `r` are encoded as
    /// `0.5 +- 0.5 * c^r`.
    pub boolean_contraction: f64,
}

impl Default for MixedConfig {
    fn default() -> Self {
        Self {
            virtual_power: 3.0,
            boolean_contraction: 0.5,
        }
    }
}

/// Curve separating the numeric condition of the Mixed concept.
fn mixed_boundary(d2: f64) -> f64 {
    0.5 + 0.3 * (3.0 * core::f64::consts::PI * d2).sin()
}

/// Label of the Mixed concept in real regime `regime`, on region-local
/// discrete features. Positive iff at least two of `b1`, `b2` and the
/// numeric condition hold; odd regimes flip the numeric inequality.
pub fn mixed_label(regime: usize, b1: bool, b2: bool, d1: f64, d2: f64) -> usize {
    let boundary = mixed_boundary(d2);
    let numeric = if regime.is_multiple_of(2) {
        d1 < boundary
    } else {
        d1 > boundary
    };
    usize::from(u8::from(b1) + u8::from(b2) + u8::from(numeric) >= 2)
}

pub fn mixed_stream(schedule: &DriftSchedule, cfg: &MixedConfig) -> Vec<LabeledInstance> {
    let mut rng = rng_from_seed(schedule.seed);
    let level = |rng: &mut ChaCha8Rng| rng.random_range(0..10usize) as f64 / 9.0;
    (0..schedule.length)
        .map(|t| {
            let r = schedule.real_regime(t);
            let v = schedule.virtual_regime(t);
            let b1 = rng.random::<bool>();
            let b2 = rng.random::<bool>();
            let d1 = level(&mut rng);
            let d2 = level(&mut rng);
            let noise_level = |rng: &mut ChaCha8Rng| {
                let w = warp_noise(v, cfg.virtual_power, rng.random::<f64>());
                ((w * 10.0) as usize).min(9) as f64 / 9.0
            };
            let d3 = noise_level(&mut rng);
            let d4 = noise_level(&mut rng);
            let half = 0.5 * cfg.boolean_contraction.powi(r as i32);
            let encode = |b: bool| if b { 0.5 + half } else { 0.5 - half };
            let y = mixed_label(r, b1, b2, d1, d2);
            LabeledInstance {
                x: vec![encode(b1), encode(b2), d1, d2, d3, d4],
                y: Target::Class(y),
                t,
                segment_id: schedule.segment(t),
            }
        })
        .collect()
}

/// Materialize a synthetic stream as a dataset.
pub fn synth_dataset(
    kind: SynthKind,
    schedule: &DriftSchedule,
    friedman: &FriedmanConfig,
    mixed: &MixedConfig,
) -> StreamDataset {
    let (instances, classes) = match kind {
        SynthKind::Friedman => (friedman_stream(schedule, friedman), None),
        SynthKind::Mixed => (mixed_stream(schedule, mixed), Some(2)),
    };
    StreamDataset::new(kind.as_str(), kind.task(), instances, classes)
        .expect("generators emit well-formed instances")
}
