//! Dense feed-forward classifier trained with plain minibatch SGD.
//!
//! Hidden layers use ReLU, the output layer softmax, the loss is mean
//! cross-entropy. Parameters live in one flat vector laid out layer by layer:
//! the `fan_in x fan_out` weight matrix (row-major, one row per input unit)
//! followed by the `fan_out` biases.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ModelSpec {
    layer_sizes: Vec<usize>,
}

impl TryFrom<Vec<usize>> for ModelSpec {
    type Error = Error;

    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Self::new(sizes)
    }
}

impl From<ModelSpec> for Vec<usize> {
    fn from(spec: ModelSpec) -> Self {
        spec.layer_sizes
    }
}

/// Offsets of one weight layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerLayout {
    fn end(&self) -> usize {
        self.bias_offset + self.fan_out
    }
}

impl ModelSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::param(
                "a model needs at least an input and an output layer",
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::param("layer sizes must be positive"));
        }
        if layer_sizes[layer_sizes.len() - 1] < 2 {
            return Err(Error::param("softmax output needs at least 2 classes"));
        }
        Ok(Self { layer_sizes })
    }

    /// The 784-128-10 digit classifier.
    pub fn mnist() -> Self {
        Self {
            layer_sizes: vec![784, 128, 10],
        }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_classes(&self) -> usize {
        self.layer_sizes[self.layer_sizes.len() - 1]
    }

    pub fn layers(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let l = LayerLayout {
                    fan_in: w[0],
                    fan_out: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset = l.end();
                l
            })
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::mnist()
    }
}

/// All trainable parameters of one model, tagged with the spec they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<S = f64> {
    spec: ModelSpec,
    values: Vec<S>,
}

impl<S: Scalar> Weights<S> {
    pub fn from_values(spec: ModelSpec, values: Vec<S>) -> Result<Self> {
        if values.len() != spec.n_params() {
            return Err(Error::Shape {
                expected: spec.n_params(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("parameter {i} is not finite")));
        }
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: ModelSpec) -> Self {
        let values = vec![S::zero(); spec.n_params()];
        Self { spec, values }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn cast<T: Scalar>(&self) -> Weights<T> {
        Weights {
            spec: self.spec.clone(),
            values: self.values.iter().map(|v| T::lit(v.as_f64())).collect(),
        }
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_weights<S: Scalar>(spec: &ModelSpec, seed: u64) -> Weights<S> {
    let mut rng = seed::stream(seed, 0x1417);
    let mut values = vec![S::zero(); spec.n_params()];
    for layer in spec.layers() {
        let limit = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
        for v in &mut values[layer.weight_offset..layer.bias_offset] {
            *v = S::lit(rng.random_range(-limit..=limit));
        }
    }
    Weights {
        spec: spec.clone(),
        values,
    }
}

/// Per-sample activations reused across a batch.
struct Scratch<S> {
    /// `acts[l]` is the output of weight layer `l`: ReLU for hidden layers,
    /// softmax probabilities for the last.
    acts: Vec<Vec<S>>,
    logits: Vec<S>,
    deltas: Vec<Vec<S>>,
}

impl<S: Scalar> Scratch<S> {
    fn new(layers: &[LayerLayout]) -> Self {
        Self {
            acts: layers.iter().map(|l| vec![S::zero(); l.fan_out]).collect(),
            logits: vec![S::zero(); layers[layers.len() - 1].fan_out],
            deltas: layers.iter().map(|l| vec![S::zero(); l.fan_out]).collect(),
        }
    }
}

/// Forward pass for one sample. Keeps the output logits in `scratch.logits`
/// and returns their log-sum-exp, so the loss never takes the log of an
/// underflowed probability.
fn forward_sample<S: Scalar>(
    params: &[S],
    layers: &[LayerLayout],
    x: &[S],
    scratch: &mut Scratch<S>,
) -> S {
    let last = layers.len() - 1;
    let mut max_logit = S::zero();
    for (l, layer) in layers.iter().enumerate() {
        let (before, rest) = scratch.acts.split_at_mut(l);
        let input: &[S] = if l == 0 { x } else { &before[l - 1] };
        let out = &mut rest[0];
        out.copy_from_slice(&params[layer.bias_offset..layer.end()]);
        for (i, &a) in input.iter().enumerate() {
            // Zero inputs contribute nothing; MNIST pixels and ReLU outputs
            // are mostly zero.
            if a == S::zero() {
                continue;
            }
            let row = &params[layer.weight_offset + i * layer.fan_out..][..layer.fan_out];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += a * w;
            }
        }
        if l < last {
            for o in out.iter_mut() {
                if *o < S::zero() {
                    *o = S::zero();
                }
            }
        } else {
            max_logit = out.iter().copied().fold(S::neg_infinity(), S::max);
        }
    }
    scratch.logits.copy_from_slice(&scratch.acts[last]);
    let out = &mut scratch.acts[last];
    let mut sum = S::zero();
    for o in out.iter_mut() {
        *o = (*o - max_logit).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    max_logit + sum.ln()
}

/// Accumulates the cross-entropy gradient of one sample into `grad`, and
/// marks which weight rows it touched. Must follow `forward_sample` on the
/// same input.
fn backward_sample<S: Scalar>(
    params: &[S],
    layers: &[LayerLayout],
    x: &[S],
    label: usize,
    scratch: &mut Scratch<S>,
    grad: &mut [S],
    touched: &mut Touched,
) {
    let last = layers.len() - 1;
    {
        let delta = &mut scratch.deltas[last];
        delta.copy_from_slice(&scratch.acts[last]);
        delta[label] -= S::one();
    }
    for l in (0..=last).rev() {
        let layer = layers[l];
        let input: &[S] = if l == 0 { x } else { &scratch.acts[l - 1] };
        let delta = &scratch.deltas[l];
        for (g, &d) in grad[layer.bias_offset..layer.end()].iter_mut().zip(delta) {
            *g += d;
        }
        for (i, &a) in input.iter().enumerate() {
            if a == S::zero() {
                continue;
            }
            touched.mark(l, i);
            let row = &mut grad[layer.weight_offset + i * layer.fan_out..][..layer.fan_out];
            for (g, &d) in row.iter_mut().zip(delta) {
                *g += a * d;
            }
        }
        if l > 0 {
            let (lower, upper) = scratch.deltas.split_at_mut(l);
            let delta = &upper[0];
            let prev = &mut lower[l - 1];
            for (i, p) in prev.iter_mut().enumerate() {
                // ReLU derivative: zero where the unit was inactive.
                *p = if input[i] > S::zero() {
                    let row = &params[layer.weight_offset + i * layer.fan_out..][..layer.fan_out];
                    row.iter().zip(delta).map(|(&w, &d)| w * d).sum()
                } else {
                    S::zero()
                };
            }
        }
    }
}

/// Rows of each weight matrix that received a nonzero contribution.
struct Touched {
    marks: Vec<Vec<bool>>,
    rows: Vec<Vec<usize>>,
}

impl Touched {
    fn new(layers: &[LayerLayout]) -> Self {
        Self {
            marks: layers.iter().map(|l| vec![false; l.fan_in]).collect(),
            rows: layers.iter().map(|_| Vec::new()).collect(),
        }
    }

    #[inline]
    fn mark(&mut self, layer: usize, row: usize) {
        if !self.marks[layer][row] {
            self.marks[layer][row] = true;
            self.rows[layer].push(row);
        }
    }

    fn clear(&mut self) {
        for (marks, rows) in self.marks.iter_mut().zip(&mut self.rows) {
            for &r in rows.iter() {
                marks[r] = false;
            }
            rows.clear();
        }
    }
}

fn check_width<S: Scalar>(spec: &ModelSpec, batch: &Batch<'_, S>) -> Result<()> {
    if batch.width() != spec.input_size() {
        return Err(Error::Shape {
            expected: spec.input_size(),
            got: batch.width(),
        });
    }
    Ok(())
}

/// Class probabilities, one softmax row per input row.
pub fn forward<S: Scalar>(w: &Weights<S>, batch: Batch<'_, S>) -> Result<Vec<S>> {
    check_width(&w.spec, &batch)?;
    let layers = w.spec.layers();
    let mut scratch = Scratch::new(&layers);
    let mut probs = Vec::with_capacity(batch.len() * w.spec.n_classes());
    for x in batch.rows() {
        forward_sample(&w.values, &layers, x, &mut scratch);
        probs.extend_from_slice(&scratch.acts[layers.len() - 1]);
    }
    Ok(probs)
}

/// Mean cross-entropy over the batch and its gradient with respect to every parameter.
pub fn loss_and_grad<S: Scalar>(
    w: &Weights<S>,
    batch: Batch<'_, S>,
    labels: &[usize],
) -> Result<(S, Vec<S>)> {
    check_width(&w.spec, &batch)?;
    if batch.is_empty() {
        return Err(Error::param("empty batch"));
    }
    if labels.len() != batch.len() {
        return Err(Error::Shape {
            expected: batch.len(),
            got: labels.len(),
        });
    }
    check_labels(labels, w.spec.n_classes())?;
    let mut trainer = StepState::new(&w.spec);
    let rows: Vec<&[S]> = batch.rows().collect();
    let loss = trainer.accumulate(&w.values, rows.iter().copied().zip(labels.iter().copied()));
    let scale = S::from_count(batch.len());
    let grad = trainer.grad.iter().map(|g| *g / scale).collect();
    Ok((loss, grad))
}

fn check_labels(labels: &[usize], n_classes: usize) -> Result<()> {
    match labels.iter().find(|l| **l >= n_classes) {
        Some(l) => Err(Error::param(format!("label {l} outside 0..{n_classes}"))),
        None => Ok(()),
    }
}

/// Buffers for one SGD step; reused across batches.
struct StepState<S> {
    layers: Vec<LayerLayout>,
    scratch: Scratch<S>,
    grad: Vec<S>,
    touched: Touched,
}

impl<S: Scalar> StepState<S> {
    fn new(spec: &ModelSpec) -> Self {
        let layers = spec.layers();
        Self {
            scratch: Scratch::new(&layers),
            grad: vec![S::zero(); spec.n_params()],
            touched: Touched::new(&layers),
            layers,
        }
    }

    /// Sums per-sample gradients into `self.grad`; returns the mean loss.
    fn accumulate<'a>(
        &mut self,
        params: &[S],
        samples: impl Iterator<Item = (&'a [S], usize)>,
    ) -> S {
        let mut total = S::zero();
        let mut n = 0usize;
        for (x, label) in samples {
            let lse = forward_sample(params, &self.layers, x, &mut self.scratch);
            total += lse - self.scratch.logits[label];
            backward_sample(
                params,
                &self.layers,
                x,
                label,
                &mut self.scratch,
                &mut self.grad,
                &mut self.touched,
            );
            n += 1;
        }
        total / S::from_count(n)
    }

    /// `params -= lr * grad / n`, then zero the gradient. Only touched weight
    /// rows (and all biases) can be nonzero, so only those are visited.
    fn apply(&mut self, params: &mut [S], lr: S, n: usize) {
        let scale = S::from_count(n);
        for (l, layer) in self.layers.iter().enumerate() {
            for &row in &self.touched.rows[l] {
                let start = layer.weight_offset + row * layer.fan_out;
                let range = start..start + layer.fan_out;
                for (p, g) in params[range.clone()].iter_mut().zip(&mut self.grad[range]) {
                    *p -= lr * (*g / scale);
                    *g = S::zero();
                }
            }
            let range = layer.bias_offset..layer.end();
            for (p, g) in params[range.clone()].iter_mut().zip(&mut self.grad[range]) {
                *p -= lr * (*g / scale);
                *g = S::zero();
            }
        }
        self.touched.clear();
    }
}

/// One plain SGD step on a single batch: `w - lr * grad`.
pub fn sgd_step<S: Scalar>(
    w: &Weights<S>,
    batch: Batch<'_, S>,
    labels: &[usize],
    learning_rate: S,
) -> Result<(S, Weights<S>)> {
    let (loss, grad) = loss_and_grad(w, batch, labels)?;
    let mut next = w.clone();
    for (p, g) in next.values.iter_mut().zip(&grad) {
        *p -= learning_rate * *g;
    }
    Ok((loss, next))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
    pub validation_fraction: f64,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self {
            patience: 10,
            min_delta: 1e-4,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub early_stopping: Option<EarlyStopping>,
    pub shuffle_seed: u64,
}

impl TrainingConfig {
    /// Local client schedule: five epochs at batch size ten.
    pub fn federated_client() -> Self {
        Self {
            batch_size: 10,
            epochs: 5,
            learning_rate: 0.1,
            early_stopping: None,
            shuffle_seed: 0,
        }
    }

    /// Centralized baseline: batch 32, up to 1,000 epochs with early stopping.
    pub fn centralized() -> Self {
        Self {
            batch_size: 32,
            epochs: 1_000,
            learning_rate: 0.1,
            early_stopping: Some(EarlyStopping::default()),
            shuffle_seed: 0,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::param("batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate must be positive"));
        }
        if let Some(es) = &self.early_stopping {
            if es.patience == 0 {
                return Err(Error::param("early-stopping patience must be positive"));
            }
            if !(es.validation_fraction > 0.0 && es.validation_fraction < 1.0) {
                return Err(Error::param("validation_fraction must lie in (0, 1)"));
            }
            if es.min_delta.is_nan() || es.min_delta < 0.0 {
                return Err(Error::param("min_delta must be nonnegative"));
            }
        }
        if self.batch_size > n {
            return Err(Error::param(format!(
                "batch_size {} exceeds the {n} training samples",
                self.batch_size
            )));
        }
        Ok(())
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self::federated_client()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<S = f64> {
    pub weights: Weights<S>,
    /// Samples the update was trained on (the FedAVG weight).
    pub n_samples: usize,
    pub epochs_run: usize,
    pub best_validation_accuracy: Option<f64>,
}

/// Runs `cfg.epochs` passes of shuffled minibatch SGD starting from `w0`.
///
/// With early stopping, a `validation_fraction` hold-out is carved off first;
/// training stops after `patience` epochs without a validation-accuracy gain
/// of at least `min_delta` and returns the best weights seen.
pub fn train_local<S: Scalar>(
    w0: &Weights<S>,
    data: &Dataset<S>,
    cfg: &TrainingConfig,
) -> Result<TrainOutcome<S>> {
    if data.is_empty() {
        return Err(Error::param("no training data"));
    }
    if data.n_features() != w0.spec.input_size() {
        return Err(Error::Shape {
            expected: w0.spec.input_size(),
            got: data.n_features(),
        });
    }
    check_labels(data.labels(), w0.spec.n_classes())?;

    let mut order: Vec<usize> = (0..data.len()).collect();
    let (train_idx, val_idx) = match &cfg.early_stopping {
        Some(es) => {
            order.shuffle(&mut seed::stream(cfg.shuffle_seed, u64::MAX));
            let n_val = ((es.validation_fraction * data.len() as f64).round() as usize)
                .clamp(1, data.len().saturating_sub(1).max(1));
            if n_val >= data.len() {
                return Err(Error::param("too few samples for a validation split"));
            }
            let val = order.split_off(data.len() - n_val);
            (order, val)
        }
        None => (order, Vec::new()),
    };
    cfg.validate(train_idx.len())?;

    let lr = S::lit(cfg.learning_rate);
    let mut w = w0.clone();
    let mut state = StepState::new(&w.spec);
    let mut order = train_idx.clone();

    let mut best: Option<(f64, Weights<S>)> = None;
    let mut stale = 0usize;
    let mut epochs_run = 0;

    for epoch in 0..cfg.epochs {
        order.copy_from_slice(&train_idx);
        order.shuffle(&mut seed::stream(cfg.shuffle_seed, epoch as u64));
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let loss = state.accumulate(
                &w.values,
                chunk.iter().map(|&i| (data.row(i), data.labels()[i])),
            );
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            state.apply(&mut w.values, lr, chunk.len());
        }
        epochs_run = epoch + 1;

        if let Some(es) = &cfg.early_stopping {
            let acc = subset_accuracy(&w, data, &val_idx);
            match &best {
                Some((best_acc, _)) if acc < best_acc + es.min_delta => {
                    stale += 1;
                    if stale >= es.patience {
                        break;
                    }
                }
                _ => {
                    best = Some((acc, w.clone()));
                    stale = 0;
                }
            }
        }
    }

    let (weights, best_validation_accuracy) = match best {
        Some((acc, bw)) => (bw, Some(acc)),
        None => (w, None),
    };
    Ok(TrainOutcome {
        weights,
        n_samples: train_idx.len(),
        epochs_run,
        best_validation_accuracy,
    })
}

fn subset_accuracy<S: Scalar>(w: &Weights<S>, data: &Dataset<S>, idx: &[usize]) -> f64 {
    let layers = w.spec.layers();
    let mut scratch = Scratch::new(&layers);
    let correct = idx
        .iter()
        .filter(|&&i| {
            forward_sample(&w.values, &layers, data.row(i), &mut scratch);
            argmax(&scratch.acts[layers.len() - 1]) == data.labels()[i]
        })
        .count();
    correct as f64 / idx.len() as f64
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Argmax class per row together with the full probability matrix.
pub fn predict<S: Scalar>(w: &Weights<S>, batch: Batch<'_, S>) -> Result<(Vec<usize>, Vec<S>)> {
    let probs = forward(w, batch)?;
    let k = w.spec.n_classes();
    let classes = probs.chunks_exact(k).map(argmax).collect();
    Ok((classes, probs))
}
