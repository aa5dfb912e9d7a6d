//! Feedforward network with inverted dropout, Adam training and Monte Carlo
//! Dropout inference.
//!
//! Hidden layers are rectified-linear and each one is followed by a dropout
//! layer; the input and output layers are never masked. With inverted dropout
//! survivors are scaled by `1 / (1 - rate)`, so a zero rate is an exact
//! identity and a masked pass agrees with the plain pass in expectation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

use crate::rng::{derive_seed, rng_from_seed, StreamRng};
use crate::{Error, Result, Target, Task};

/// Output head of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputHead {
    /// Identity output trained with mean squared error.
    Linear,
    /// Softmax output trained with categorical cross-entropy.
    Softmax,
}

impl OutputHead {
    pub fn task(self) -> Task {
        match self {
            OutputHead::Linear => Task::Regression,
            OutputHead::Softmax => Task::Classification,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    layer_sizes: Vec<usize>,
    head: OutputHead,
    dropout_rates: Vec<f64>,
}

impl NetworkSpec {
    pub const MIN_HIDDEN: usize = 3;
    pub const MAX_HIDDEN: usize = 5;

    /// Architecture used by the drift experiments: three to five hidden
    /// layers, one dropout rate per hidden layer.
    pub fn new(layer_sizes: Vec<usize>, head: OutputHead, dropout_rates: Vec<f64>) -> Result<Self> {
        let spec = Self::unconstrained(layer_sizes, head, dropout_rates)?;
        let hidden = spec.hidden_layers();
        if !(Self::MIN_HIDDEN..=Self::MAX_HIDDEN).contains(&hidden) {
            return Err(Error::InvalidSpec(format!(
                "{hidden} hidden layers, expected {}..={}",
                Self::MIN_HIDDEN,
                Self::MAX_HIDDEN
            )));
        }
        Ok(spec)
    }

    /// Any depth, including no hidden layer at all. Used by the gradient
    /// checking harness, which needs tiny networks.
    pub fn unconstrained(
        layer_sizes: Vec<usize>,
        head: OutputHead,
        dropout_rates: Vec<f64>,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least input and output sizes, got {} entries",
                layer_sizes.len()
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidSpec("layer sizes must be positive".into()));
        }
        let hidden = layer_sizes.len() - 2;
        if dropout_rates.len() != hidden {
            return Err(Error::InvalidSpec(format!(
                "{} dropout rates for {hidden} hidden layers",
                dropout_rates.len()
            )));
        }
        if let Some(r) = dropout_rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(Error::InvalidSpec(format!(
                "dropout rate {r} outside [0, 1)"
            )));
        }
        if head == OutputHead::Softmax && layer_sizes[layer_sizes.len() - 1] < 2 {
            return Err(Error::InvalidSpec(
                "softmax head needs at least two outputs".into(),
            ));
        }
        Ok(Self {
            layer_sizes,
            head,
            dropout_rates,
        })
    }

    /// Convenience constructor with the same dropout rate after every
    /// hidden layer.
    pub fn uniform(
        input: usize,
        hidden: &[usize],
        output: usize,
        head: OutputHead,
        rate: f64,
    ) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(sizes, head, vec![rate; hidden.len()])
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn head(&self) -> OutputHead {
        self.head
    }

    pub fn dropout_rates(&self) -> &[f64] {
        &self.dropout_rates
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.layer_sizes[self.layer_sizes.len() - 1]
    }

    pub fn hidden_layers(&self) -> usize {
        self.layer_sizes.len() - 2
    }

    /// Copy of this spec with every dropout rate replaced.
    pub fn with_dropout(&self, rate: f64) -> Result<Self> {
        Self::unconstrained(
            self.layer_sizes.clone(),
            self.head,
            vec![rate; self.hidden_layers()],
        )
    }
}

/// Whether a forward pass samples dropout masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dropout {
    Inactive,
    /// Masks are a pure function of `mask_seed`.
    Active {
        mask_seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    n_in: usize,
    n_out: usize,
    /// Row-major `n_out x n_in`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Dense {
    fn forward_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.n_in)
                .zip(&self.biases)
                .map(|(row, b)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()),
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Sample dropout masks while training (in addition to MC inference).
    pub dropout_in_training: bool,
    /// L2 penalty `wd/2 * |W|^2` on the weights (biases are not penalized).
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            dropout_in_training: true,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mean training loss (dropout inactive) before and after training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSummary {
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// The `T` stochastic forward-pass outputs for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSample {
    dim: usize,
    data: Vec<f64>,
}

impl PredictiveSample {
    pub fn from_passes<I, P>(passes: I) -> Result<Self>
    where
        I: IntoIterator<Item = P>,
        P: AsRef<[f64]>,
    {
        let mut dim = None;
        let mut data = Vec::new();
        for pass in passes {
            let pass = pass.as_ref();
            match dim {
                None => dim = Some(pass.len()),
                Some(d) if d != pass.len() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: pass.len(),
                    })
                }
                _ => {}
            }
            data.extend_from_slice(pass);
        }
        match dim {
            None => Err(Error::Empty("predictive sample has no passes")),
            Some(0) => Err(Error::Empty("predictive sample passes are empty vectors")),
            Some(dim) => Ok(Self { dim, data }),
        }
    }

    /// Number of passes `T`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pass(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn passes(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }
}

/// Per-layer activations kept for backpropagation.
struct Trace {
    /// Input to each dense layer (post activation and mask).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Mask scale factor per hidden unit (`0` or `1/(1-r)`); empty if unmasked.
    masks: Vec<Vec<f64>>,
    output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Dense>,
}

impl Network {
    /// Fan-in scaled uniform weights, zero biases.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let limit = (6.0 / n_in as f64).sqrt();
                let weights = (0..n_in * n_out)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                Dense {
                    n_in,
                    n_out,
                    weights,
                    biases: vec![0.0; n_out],
                }
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// `(fan_in, fan_out)` for every weight matrix, input side first.
    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.n_in, l.n_out)).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Flattened parameters: per layer, weights (row-major) then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: self.parameter_count(),
                found: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, tail) = tail.split_at(l.biases.len());
            l.biases.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64], dropout: Dropout) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut rng = match dropout {
            Dropout::Active { mask_seed } => Some(rng_from_seed(mask_seed)),
            Dropout::Inactive => None,
        };
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&cur, &mut next);
            core::mem::swap(&mut cur, &mut next);
            if i < last {
                relu_in_place(&mut cur);
                if let Some(rng) = rng.as_mut() {
                    apply_dropout(&mut cur, self.spec.dropout_rates[i], rng);
                }
            }
        }
        if self.spec.head == OutputHead::Softmax {
            softmax_in_place(&mut cur);
        }
        Ok(cur)
    }

    fn forward_traced(&self, x: &[f64], mut rng: Option<&mut StreamRng>) -> Trace {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut masks = Vec::with_capacity(last);
        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.n_out);
            layer.forward_into(&cur, &mut z);
            inputs.push(cur);
            if i < last {
                let mut h = z.clone();
                relu_in_place(&mut h);
                let mask = match rng.as_deref_mut() {
                    Some(rng) => sample_mask(h.len(), self.spec.dropout_rates[i], rng),
                    None => Vec::new(),
                };
                if !mask.is_empty() {
                    h.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                }
                pre.push(z);
                masks.push(mask);
                cur = h;
            } else {
                cur = z;
            }
        }
        if self.spec.head == OutputHead::Softmax {
            softmax_in_place(&mut cur);
        }
        Trace {
            inputs,
            pre,
            masks,
            output: cur,
        }
    }

    fn check_target(&self, target: &Target) -> Result<()> {
        match (self.spec.head, target) {
            (OutputHead::Linear, Target::Real(v)) => {
                if self.spec.output_dim() != 1 {
                    return Err(Error::TaskMismatch(format!(
                        "scalar target for a {}-output linear head",
                        self.spec.output_dim()
                    )));
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite("target"));
                }
                Ok(())
            }
            (OutputHead::Softmax, Target::Class(c)) => {
                if *c >= self.spec.output_dim() {
                    return Err(Error::OutOfRange(format!(
                        "class {c} for a {}-class head",
                        self.spec.output_dim()
                    )));
                }
                Ok(())
            }
            (head, t) => Err(Error::TaskMismatch(format!(
                "{head:?} head cannot take a {:?} target",
                t.task()
            ))),
        }
    }

    fn loss_of(&self, output: &[f64], target: &Target) -> f64 {
        match *target {
            Target::Real(y) => {
                output.iter().map(|o| (o - y) * (o - y)).sum::<f64>() / output.len() as f64
            }
            Target::Class(c) => -output[c].max(f64::MIN_POSITIVE).ln(),
        }
    }

    /// Per-sample loss with dropout inactive: squared error for the linear
    /// head, cross-entropy for the softmax head.
    pub fn loss(&self, x: &[f64], target: &Target) -> Result<f64> {
        self.check_target(target)?;
        let out = self.forward(x, Dropout::Inactive)?;
        Ok(self.loss_of(&out, target))
    }

    /// Accumulate d(loss)/d(params) for one sample into `grads` (same layout
    /// as [`Network::parameters`]). Returns the sample loss.
    fn backprop(&self, trace: &Trace, target: &Target, grads: &mut [f64]) -> f64 {
        let loss = self.loss_of(&trace.output, target);
        // d loss / d z at the output layer
        let mut delta: Vec<f64> = match *target {
            Target::Real(y) => {
                let k = trace.output.len() as f64;
                trace.output.iter().map(|o| 2.0 * (o - y) / k).collect()
            }
            Target::Class(c) => {
                let mut d = trace.output.clone();
                d[c] -= 1.0;
                d
            }
        };

        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.weights.len() + l.biases.len();
        }

        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &trace.inputs[li];
            let base = offsets[li];
            let (gw, gb) = grads[base..base + layer.weights.len() + layer.biases.len()]
                .split_at_mut(layer.weights.len());
            for (j, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                gb[j] += d;
                gw[j * layer.n_in..(j + 1) * layer.n_in]
                    .iter_mut()
                    .zip(input)
                    .for_each(|(g, a)| *g += d * a);
            }
            if li == 0 {
                break;
            }
            let mut below = vec![0.0; layer.n_in];
            for (j, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                below
                    .iter_mut()
                    .zip(&layer.weights[j * layer.n_in..(j + 1) * layer.n_in])
                    .for_each(|(b, w)| *b += d * w);
            }
            let mask = &trace.masks[li - 1];
            let pre = &trace.pre[li - 1];
            for (k, b) in below.iter_mut().enumerate() {
                let m = if mask.is_empty() { 1.0 } else { mask[k] };
                *b = if pre[k] > 0.0 { *b * m } else { 0.0 };
            }
            delta = below;
        }
        loss
    }

    /// Analytic gradient of the dropout-inactive loss for one sample.
    pub fn gradient(&self, x: &[f64], target: &Target) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.check_target(target)?;
        let trace = self.forward_traced(x, None);
        let mut grads = vec![0.0; self.parameter_count()];
        self.backprop(&trace, target, &mut grads);
        Ok(grads)
    }

    fn mean_loss(&self, inputs: &[Vec<f64>], targets: &[Target]) -> f64 {
        let total: f64 = inputs
            .iter()
            .zip(targets)
            .map(|(x, t)| {
                let trace = self.forward_traced(x, None);
                self.loss_of(&trace.output, t)
            })
            .sum();
        total / inputs.len() as f64
    }

    /// Mini-batch Adam (beta1 0.9, beta2 0.999, eps 1e-8) on squared error
    /// or cross-entropy depending on the head. Shuffle order and dropout masks
    /// come from `cfg.seed`.
    pub fn train(
        &mut self,
        inputs: &[Vec<f64>],
        targets: &[Target],
        cfg: &TrainConfig,
    ) -> Result<TrainSummary> {
        cfg.validate()?;
        if inputs.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                found: targets.len(),
            });
        }
        if inputs.len() < cfg.batch_size {
            return Err(Error::InvalidConfig(format!(
                "{} training instances is fewer than batch size {}",
                inputs.len(),
                cfg.batch_size
            )));
        }
        for x in inputs {
            self.check_input(x)?;
        }
        for t in targets {
            self.check_target(t)?;
        }

        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;

        let initial_loss = self.mean_loss(inputs, targets);
        let n_params = self.parameter_count();
        let mut params = self.parameters();
        let mut m = vec![0.0; n_params];
        let mut v = vec![0.0; n_params];
        let mut grads = vec![0.0; n_params];
        let mut step: i32 = 0;
        let mut rng = rng_from_seed(cfg.seed);
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        let decay: Vec<f64> = self
            .layers
            .iter()
            .flat_map(|l| {
                core::iter::repeat_n(cfg.weight_decay, l.weights.len())
                    .chain(core::iter::repeat_n(0.0, l.biases.len()))
            })
            .collect();

        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                grads.iter_mut().for_each(|g| *g = 0.0);
                for &i in batch {
                    let trace = if cfg.dropout_in_training {
                        let mut mask_rng = rng_from_seed(rng.next_u64());
                        self.forward_traced(&inputs[i], Some(&mut mask_rng))
                    } else {
                        self.forward_traced(&inputs[i], None)
                    };
                    self.backprop(&trace, &targets[i], &mut grads);
                }
                let scale = 1.0 / batch.len() as f64;
                step += 1;
                let bc1 = 1.0 - BETA1.powi(step);
                let bc2 = 1.0 - BETA2.powi(step);
                for k in 0..n_params {
                    let g = grads[k] * scale + decay[k] * params[k];
                    m[k] = BETA1 * m[k] + (1.0 - BETA1) * g;
                    v[k] = BETA2 * v[k] + (1.0 - BETA2) * g * g;
                    let m_hat = m[k] / bc1;
                    let v_hat = v[k] / bc2;
                    params[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + EPS);
                }
                self.set_parameters(&params)?;
            }
        }

        Ok(TrainSummary {
            initial_loss,
            final_loss: self.mean_loss(inputs, targets),
        })
    }

    /// `passes` dropout-active forward passes; pass `i` uses mask seed
    /// `derive_seed(seed, i)`.
    pub fn mc_predict(&self, x: &[f64], passes: usize, seed: u64) -> Result<PredictiveSample> {
        if passes == 0 {
            return Err(Error::InvalidConfig(
                "number of forward passes must be >= 1".into(),
            ));
        }
        self.check_input(x)?;
        let dim = self.spec.output_dim();
        let mut data = Vec::with_capacity(passes * dim);
        for i in 0..passes {
            let out = self.forward(
                x,
                Dropout::Active {
                    mask_seed: derive_seed(seed, i as u64),
                },
            )?;
            data.extend_from_slice(&out);
        }
        Ok(PredictiveSample { dim, data })
    }
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.iter_mut().for_each(|x| *x = (*x - max).exp());
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
}

fn sample_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    if rate == 0.0 {
        return Vec::new();
    }
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
        .collect()
}

/// Inverted dropout: zero each unit with probability `rate`, scale survivors.
pub(crate) fn apply_dropout<R: Rng + ?Sized>(v: &mut [f64], rate: f64, rng: &mut R) {
    if rate == 0.0 {
        return;
    }
    let keep = 1.0 / (1.0 - rate);
    for x in v.iter_mut() {
        if rng.random::<f64>() < rate {
            *x = 0.0;
        } else {
            *x *= keep;
        }
    }
}

/// Max over parameters of `|analytic - fd| / (|analytic| + |fd| + 1e-12)`,
/// with a central finite difference of step `1e-5` on the dropout-inactive
/// loss. Meaningful only away from ReLU kinks: a hidden pre-activation at
/// exactly 0 (zero biases behind a dead layer, say) has no derivative and
/// the two sides disagree.
pub fn gradient_check(net: &Network, x: &[f64], target: &Target) -> Result<f64> {
    const STEP: f64 = 1e-5;
    let analytic = net.gradient(x, target)?;
    let base = net.parameters();
    let mut probe = net.clone();
    let mut params = base.clone();
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        params[k] = base[k] + STEP;
        probe.set_parameters(&params)?;
        let up = probe.loss(x, target)?;
        params[k] = base[k] - STEP;
        probe.set_parameters(&params)?;
        let down = probe.loss(x, target)?;
        params[k] = base[k];
        let fd = (up - down) / (2.0 * STEP);
        let rel = (analytic[k] - fd).abs() / (analytic[k].abs() + fd.abs() + 1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;

    fn spec_regression(rate: f64) -> NetworkSpec {
        NetworkSpec::uniform(3, &[8, 8, 8], 1, OutputHead::Linear, rate).unwrap()
    }

    #[test]
    fn init_chains_shapes() {
        let spec = NetworkSpec::new(
            vec![10, 128, 64, 32, 16, 1],
            OutputHead::Linear,
            vec![0.1; 4],
        )
        .unwrap();
        let net = Network::init(spec, 7).unwrap();
        assert_eq!(
            net.weight_shapes(),
            vec![(10, 128), (128, 64), (64, 32), (32, 16), (16, 1)]
        );
        assert!(net
            .layers
            .iter()
            .all(|l| l.biases.iter().all(|b| *b == 0.0)));
    }

    #[test]
    fn init_is_deterministic() {
        let a = Network::init(spec_regression(0.1), 7).unwrap();
        let b = Network::init(spec_regression(0.1), 7).unwrap();
        let bits = |n: &Network| {
            n.parameters()
                .iter()
                .map(|p| p.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
        let c = Network::init(spec_regression(0.1), 8).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn spec_rejects_bad_shapes() {
        assert!(NetworkSpec::new(vec![10, 1], OutputHead::Linear, vec![]).is_err());
        assert!(NetworkSpec::new(vec![10, 4, 4, 1], OutputHead::Linear, vec![0.1; 2]).is_err());
        assert!(NetworkSpec::new(
            vec![10, 4, 4, 4, 4, 4, 4, 1],
            OutputHead::Linear,
            vec![0.1; 6]
        )
        .is_err());
        assert!(NetworkSpec::new(vec![10, 4, 4, 4, 1], OutputHead::Linear, vec![0.1; 2]).is_err());
        assert!(NetworkSpec::new(
            vec![10, 4, 4, 4, 1],
            OutputHead::Linear,
            vec![0.1, 0.1, 1.0]
        )
        .is_err());
        assert!(NetworkSpec::new(vec![10, 0, 4, 4, 1], OutputHead::Linear, vec![0.1; 3]).is_err());
        assert!(NetworkSpec::unconstrained(vec![1, 1], OutputHead::Linear, vec![]).is_ok());
    }

    #[test]
    fn zero_rate_dropout_is_identity() {
        let net = Network::init(spec_regression(0.0), 3).unwrap();
        let x = [0.3, -1.2, 2.0];
        let plain = net.forward(&x, Dropout::Inactive).unwrap();
        for s in 0..5 {
            let masked = net.forward(&x, Dropout::Active { mask_seed: s }).unwrap();
            assert_eq!(plain, masked);
        }
    }

    #[test]
    fn softmax_head_normalizes() {
        let spec = NetworkSpec::uniform(4, &[6, 6, 6], 3, OutputHead::Softmax, 0.2).unwrap();
        let net = Network::init(spec, 11).unwrap();
        let mut rng = rng_from_seed(5);
        for s in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let out = net.forward(&x, Dropout::Active { mask_seed: s }).unwrap();
            assert!(out.iter().all(|p| *p >= 0.0));
            assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_rejects_bad_input() {
        let net = Network::init(spec_regression(0.1), 1).unwrap();
        assert!(matches!(
            net.forward(&[1.0, 2.0], Dropout::Inactive),
            Err(Error::DimensionMismatch {
                expected: 3,
                found: 2
            })
        ));
        assert!(matches!(
            net.forward(&[1.0, f64::NAN, 0.0], Dropout::Inactive),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn distinct_mask_seeds_give_distinct_outputs() {
        // Enumerate the masks of a 2-unit layer at rate 0.2: the chance two
        // independent masks coincide is sum_m P(m)^2.
        let rate: f64 = 0.2;
        let mut p_same = 0.0;
        for bits in 0..4u32 {
            let dropped = bits.count_ones() as i32;
            let p = rate.powi(dropped) * (1.0 - rate).powi(2 - dropped);
            p_same += p * p;
        }
        assert!((p_same - 0.4624).abs() < 1e-12);
        // Ten independent pairs all coinciding is then below 1e-3 even for
        // two units; the test network is much wider.
        assert!(p_same.powi(10) < 1e-3);

        let net = Network::init(spec_regression(rate), 21).unwrap();
        let x = [0.5, 0.25, -0.75];
        let differs = (0..10u64).any(|k| {
            let a = net
                .forward(
                    &x,
                    Dropout::Active {
                        mask_seed: 2 * k + 1,
                    },
                )
                .unwrap();
            let b = net
                .forward(
                    &x,
                    Dropout::Active {
                        mask_seed: 2 * k + 2,
                    },
                )
                .unwrap();
            a != b
        });
        assert!(differs);
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        for &rate in &[0.1, 0.2, 0.5] {
            let mut rng = rng_from_seed(99);
            let n = 10_000;
            let samples: Vec<f64> = (0..n)
                .map(|_| {
                    let mut v = [1.0];
                    apply_dropout(&mut v, rate, &mut rng);
                    v[0]
                })
                .collect();
            let mean = samples.iter().sum::<f64>() / n as f64;
            let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - 1.0).abs() < 3.0 * se,
                "rate {rate}: mean {mean} se {se}"
            );
        }
    }

    #[test]
    fn output_dimension_matches_spec() {
        let spec = NetworkSpec::uniform(2, &[5, 4, 3, 3], 4, OutputHead::Softmax, 0.1).unwrap();
        let net = Network::init(spec, 2).unwrap();
        for s in 0..5 {
            assert_eq!(
                net.forward(&[1.0, -1.0], Dropout::Active { mask_seed: s })
                    .unwrap()
                    .len(),
                4
            );
        }
    }

    #[test]
    fn regression_learns_linear_map() {
        let inputs: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 199.0]).collect();
        let targets: Vec<Target> = inputs.iter().map(|x| Target::Real(2.0 * x[0])).collect();
        let spec = NetworkSpec::uniform(1, &[16, 16, 16], 1, OutputHead::Linear, 0.0).unwrap();
        let mut net = Network::init(spec, 4).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            seed: 4,
            ..TrainConfig::default()
        };
        let summary = net.train(&inputs, &targets, &cfg).unwrap();
        assert!(summary.final_loss < summary.initial_loss);
        assert!(
            summary.final_loss < 1e-2,
            "train mse {}",
            summary.final_loss
        );
        // held-out points between the training grid
        let held: f64 = (0..50)
            .map(|i| {
                let x = (i as f64 + 0.5) / 50.0;
                let y = net.forward(&[x], Dropout::Inactive).unwrap()[0];
                (y - 2.0 * x) * (y - 2.0 * x)
            })
            .sum::<f64>()
            / 50.0;
        assert!(held < 1e-2, "held-out mse {held}");
    }

    #[test]
    fn dropout_training_still_fits() {
        // the deterministic pass of a dropout-trained net keeps a small bias,
        // so only a large relative drop in loss is required here
        let inputs: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 199.0]).collect();
        let targets: Vec<Target> = inputs.iter().map(|x| Target::Real(2.0 * x[0])).collect();
        let spec = NetworkSpec::uniform(1, &[32, 32, 32], 1, OutputHead::Linear, 0.1).unwrap();
        let mut net = Network::init(spec, 4).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            seed: 4,
            ..TrainConfig::default()
        };
        let summary = net.train(&inputs, &targets, &cfg).unwrap();
        assert!(
            summary.final_loss < summary.initial_loss / 20.0,
            "{summary:?}"
        );
    }

    fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        // centers 2.0 apart along the first axis, unit-width uniform noise
        let mut rng = rng_from_seed(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let cx = if c == 0 { -1.0 } else { 1.0 };
            xs.push(vec![
                cx + rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            ]);
            ys.push(c);
        }
        (xs, ys)
    }

    #[test]
    fn classifier_separates_blobs() {
        let (xs, ys) = blobs(200, 12);
        // nearest-centroid oracle
        let mut centroids = [[0.0; 2]; 2];
        let mut counts = [0.0; 2];
        for (x, &y) in xs.iter().zip(&ys) {
            centroids[y][0] += x[0];
            centroids[y][1] += x[1];
            counts[y] += 1.0;
        }
        for c in 0..2 {
            centroids[c][0] /= counts[c];
            centroids[c][1] /= counts[c];
        }
        let dist = |x: &[f64], c: &[f64; 2]| (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
        let oracle_acc = xs
            .iter()
            .zip(&ys)
            .filter(|(x, &y)| {
                let pred = usize::from(dist(x, &centroids[1]) < dist(x, &centroids[0]));
                pred == y
            })
            .count() as f64
            / xs.len() as f64;
        assert!(oracle_acc >= 0.99);

        let spec = NetworkSpec::uniform(2, &[8, 8, 8], 2, OutputHead::Softmax, 0.1).unwrap();
        let mut net = Network::init(spec, 3).unwrap();
        let targets: Vec<Target> = ys.iter().map(|&c| Target::Class(c)).collect();
        let summary = net.train(&xs, &targets, &TrainConfig::default()).unwrap();
        assert!(summary.final_loss < summary.initial_loss);
        let acc = xs
            .iter()
            .zip(&ys)
            .filter(|(x, &y)| {
                let p = net.forward(x, Dropout::Inactive).unwrap();
                usize::from(p[1] > p[0]) == y
            })
            .count() as f64
            / xs.len() as f64;
        assert!(acc >= 0.99, "accuracy {acc}");
    }

    #[test]
    fn train_validates_inputs() {
        let mut net = Network::init(spec_regression(0.1), 1).unwrap();
        let xs = vec![vec![0.0; 3]; 40];
        let ys = vec![Target::Real(0.0); 40];
        let zero_epochs = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            net.train(&xs, &ys, &zero_epochs),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            net.train(&[], &[], &TrainConfig::default()),
            Err(Error::Empty(_))
        ));
        let mut bad = ys.clone();
        bad[3] = Target::Real(f64::NAN);
        assert!(matches!(
            net.train(&xs, &bad, &TrainConfig::default()),
            Err(Error::NonFinite(_))
        ));
        let classes = vec![Target::Class(0); 40];
        assert!(matches!(
            net.train(&xs, &classes, &TrainConfig::default()),
            Err(Error::TaskMismatch(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let xs: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64 / 64.0, 0.5, -0.5]).collect();
        let ys: Vec<Target> = xs.iter().map(|x| Target::Real(x[0] * 3.0)).collect();
        let cfg = TrainConfig {
            epochs: 5,
            seed: 9,
            ..TrainConfig::default()
        };
        let mut a = Network::init(spec_regression(0.2), 1).unwrap();
        let mut b = a.clone();
        a.train(&xs, &ys, &cfg).unwrap();
        b.train(&xs, &ys, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gradient_check_softmax_small_net() {
        let spec =
            NetworkSpec::unconstrained(vec![4, 3, 2], OutputHead::Softmax, vec![0.2]).unwrap();
        let net = Network::init(spec, 17).unwrap();
        let err = gradient_check(&net, &[0.3, -0.8, 1.1, 0.4], &Target::Class(1)).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn gradient_of_single_weight_is_two_w() {
        let spec = NetworkSpec::unconstrained(vec![1, 1], OutputHead::Linear, vec![]).unwrap();
        let mut net = Network::init(spec, 0).unwrap();
        let w = 0.37;
        net.set_parameters(&[w, 0.0]).unwrap();
        let target = Target::Real(0.0);
        let grad = net.gradient(&[1.0], &target).unwrap();
        assert!((grad[0] - 2.0 * w).abs() < 1e-12);
        // finite difference on the weight
        let h = 1e-5;
        let mut probe = net.clone();
        probe.set_parameters(&[w + h, 0.0]).unwrap();
        let up = probe.loss(&[1.0], &target).unwrap();
        probe.set_parameters(&[w - h, 0.0]).unwrap();
        let down = probe.loss(&[1.0], &target).unwrap();
        assert!(((up - down) / (2.0 * h) - grad[0]).abs() < 1e-6);
        assert!(gradient_check(&net, &[1.0], &target).unwrap() < 1e-6);
    }

    #[test]
    fn gradient_check_random_parameters() {
        let mut rng = rng_from_seed(41);
        for (head, out, target) in [
            (OutputHead::Linear, 1, Target::Real(0.7)),
            (OutputHead::Softmax, 3, Target::Class(2)),
        ] {
            for _ in 0..10 {
                let hidden = rng.random_range(1..4usize);
                let mut sizes = vec![rng.random_range(1..5usize)];
                sizes.extend((0..hidden).map(|_| rng.random_range(1..6usize)));
                sizes.push(out);
                let spec = NetworkSpec::unconstrained(sizes.clone(), head, vec![0.1; hidden]).unwrap();
                let mut net = Network::init(spec, 0).unwrap();
                let params: Vec<f64> = (0..net.parameter_count())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect();
                net.set_parameters(&params).unwrap();
                let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
                let err = gradient_check(&net, &x, &target).unwrap();
                assert!(err < 1e-4, "{sizes:?}: relative error {err}");
            }
        }
    }

    #[test]
    fn rate_zero_mc_variance_is_exactly_zero() {
        let net = Network::init(spec_regression(0.0), 5).unwrap();
        let sample = net.mc_predict(&[0.2, -1.0, 0.7], 100, 9).unwrap();
        assert_eq!(crate::uncertainty::variance(&sample).unwrap(), 0.0);
    }

    #[test]
    fn gradient_check_zero_network() {
        let spec =
            NetworkSpec::unconstrained(vec![2, 3, 1], OutputHead::Linear, vec![0.1]).unwrap();
        let mut net = Network::init(spec, 0).unwrap();
        let zeros = vec![0.0; net.parameter_count()];
        net.set_parameters(&zeros).unwrap();
        let target = Target::Real(1.0);
        let grad = net.gradient(&[0.0, 0.0], &target).unwrap();
        // only the output bias carries gradient: d/db (b - 1)^2 = -2
        let out_bias = grad.len() - 1;
        assert!((grad[out_bias] + 2.0).abs() < 1e-12);
        let h = 1e-5;
        let mut probe = net.clone();
        let mut p = zeros.clone();
        p[out_bias] = h;
        probe.set_parameters(&p).unwrap();
        let up = probe.loss(&[0.0, 0.0], &target).unwrap();
        p[out_bias] = -h;
        probe.set_parameters(&p).unwrap();
        let down = probe.loss(&[0.0, 0.0], &target).unwrap();
        assert!(((up - down) / (2.0 * h) - grad[out_bias]).abs() < 1e-6);
    }

    #[test]
    fn mc_predict_zero_rate_passes_identical() {
        let net = Network::init(spec_regression(0.0), 5).unwrap();
        let sample = net.mc_predict(&[0.1, 0.2, 0.3], 50, 1).unwrap();
        assert_eq!(sample.len(), 50);
        let first = sample.pass(0).to_vec();
        assert!(sample.passes().all(|p| p == first.as_slice()));
    }

    #[test]
    fn mc_predict_single_pass_and_determinism() {
        let net = Network::init(spec_regression(0.2), 5).unwrap();
        let x = [0.1, 0.2, 0.3];
        let one = net.mc_predict(&x, 1, 42).unwrap();
        let direct = net
            .forward(
                &x,
                Dropout::Active {
                    mask_seed: derive_seed(42, 0),
                },
            )
            .unwrap();
        assert_eq!(one.pass(0), direct.as_slice());
        assert_eq!(
            net.mc_predict(&x, 30, 42).unwrap(),
            net.mc_predict(&x, 30, 42).unwrap()
        );
        assert!(net.mc_predict(&x, 0, 42).is_err());
        assert!(net.mc_predict(&[1.0], 3, 42).is_err());
    }
}
