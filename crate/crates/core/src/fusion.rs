//! Linear classification heads over precomputed features.
//!
//! Three modes share one parameterization: `scores = W x + b` with `W` of
//! shape `K x d_in`. The multimodal input is the concatenation
//! `[ground || overhead]`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aggregate::{aggregate, AggregatedFeature, Pooling};
use crate::container::{Container, NamedArray};
use crate::dataset::{DatasetManifest, UrbanObjectRecord};
use crate::error::{Error, Result};
use crate::split::SplitAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    OverheadOnly,
    GroundOnly,
    Multimodal,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::OverheadOnly, Mode::GroundOnly, Mode::Multimodal];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::OverheadOnly => "overhead",
            Mode::GroundOnly => "ground",
            Mode::Multimodal => "multimodal",
        }
    }

    fn tag(self) -> f64 {
        match self {
            Mode::OverheadOnly => 0.0,
            Mode::GroundOnly => 1.0,
            Mode::Multimodal => 2.0,
        }
    }

    fn from_tag(t: f64) -> Result<Self> {
        match t {
            0.0 => Ok(Mode::OverheadOnly),
            1.0 => Ok(Mode::GroundOnly),
            2.0 => Ok(Mode::Multimodal),
            _ => Err(Error::Checkpoint(format!("unknown mode tag {t}"))),
        }
    }

    pub fn needs_ground(self) -> bool {
        self != Mode::OverheadOnly
    }

    pub fn needs_overhead(self) -> bool {
        self != Mode::GroundOnly
    }

    pub fn input_dim(self, d_oh: usize, d_gsv: usize) -> usize {
        match self {
            Mode::OverheadOnly => d_oh,
            Mode::GroundOnly => d_gsv,
            Mode::Multimodal => d_gsv + d_oh,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overhead" | "overhead_only" => Ok(Mode::OverheadOnly),
            "ground" | "ground_only" => Ok(Mode::GroundOnly),
            "multimodal" => Ok(Mode::Multimodal),
            other => Err(Error::invalid(format!("unknown mode {other:?}"))),
        }
    }
}

/// Linear head: `K x d_in` weights (row-major) and `K` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub mode: Mode,
    pub num_classes: usize,
    pub d_oh: usize,
    pub d_gsv: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl FusionModel {
    pub fn zeros(mode: Mode, num_classes: usize, d_oh: usize, d_gsv: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid("need at least 2 classes"));
        }
        let d_in = mode.input_dim(d_oh, d_gsv);
        if (mode.needs_overhead() && d_oh == 0) || (mode.needs_ground() && d_gsv == 0) {
            return Err(Error::invalid(format!(
                "mode {mode} needs nonzero feature dims (d_oh = {d_oh}, d_gsv = {d_gsv})"
            )));
        }
        Ok(FusionModel {
            mode,
            num_classes,
            d_oh,
            d_gsv,
            weights: vec![0.0; num_classes * d_in],
            bias: vec![0.0; num_classes],
        })
    }

    /// Zero bias, weights uniform in `[-1/sqrt(d_in), 1/sqrt(d_in)]`.
    pub fn init(mode: Mode, num_classes: usize, d_oh: usize, d_gsv: usize, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(mode, num_classes, d_oh, d_gsv)?;
        let bound = 1.0 / (m.input_dim() as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut m.weights {
            *w = rng.random_range(-bound..=bound);
        }
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.mode.input_dim(self.d_oh, self.d_gsv)
    }

    /// Assemble the head input from whichever modalities the mode needs.
    pub fn input(
        &self,
        overhead: Option<&[f64]>,
        ground: Option<&AggregatedFeature>,
    ) -> Result<Vec<f64>> {
        let need = |present: bool, modality: &'static str| {
            if present {
                Ok(())
            } else {
                Err(Error::MissingModality {
                    mode: self.mode.as_str(),
                    modality,
                })
            }
        };
        let check = |what: &str, found: usize, expected: usize| {
            if found == expected {
                Ok(())
            } else {
                Err(Error::DimMismatch {
                    what: what.to_owned(),
                    found,
                    expected,
                })
            }
        };
        let mut x = Vec::with_capacity(self.input_dim());
        if self.mode.needs_ground() {
            need(ground.is_some(), "ground")?;
            let g = ground.unwrap();
            check("ground feature", g.dim(), self.d_gsv)?;
            x.extend_from_slice(&g.values);
        }
        if self.mode.needs_overhead() {
            need(overhead.is_some(), "overhead")?;
            let o = overhead.unwrap();
            check("overhead feature", o.len(), self.d_oh)?;
            x.extend_from_slice(o);
        }
        Ok(x)
    }

    /// Raw class scores for an assembled input.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if x.len() != d {
            return Err(Error::DimMismatch {
                what: "model input".into(),
                found: x.len(),
                expected: d,
            });
        }
        Ok(self
            .weights
            .chunks_exact(d)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect())
    }

    pub fn forward(
        &self,
        overhead: Option<&[f64]>,
        ground: Option<&AggregatedFeature>,
    ) -> Result<Vec<f64>> {
        self.scores(&self.input(overhead, ground)?)
    }

    pub fn predict(
        &self,
        overhead: Option<&[f64]>,
        ground: Option<&AggregatedFeature>,
    ) -> Result<Prediction> {
        Ok(Prediction::from_scores(&self.forward(overhead, ground)?))
    }

    /// Model input for a dataset record, or `None` when the record lacks a needed modality.
    pub fn record_input(
        &self,
        record: &UrbanObjectRecord,
        pooling: Pooling,
    ) -> Result<Option<Vec<f64>>> {
        if self.mode.needs_ground() && !record.has_ground() {
            return Ok(None);
        }
        let ground = if self.mode.needs_ground() {
            Some(aggregate(&record.ground_views, pooling)?)
        } else {
            None
        };
        let overhead = record.overhead.to_f64();
        self.input(Some(&overhead), ground.as_ref()).map(Some)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::default();
        c.push(NamedArray::scalar("mode", self.mode.tag()));
        c.push(NamedArray::scalar("num_classes", self.num_classes as f64));
        c.push(NamedArray::vector(
            "dims",
            vec![self.d_oh as f64, self.d_gsv as f64],
        ));
        c.push(NamedArray::new(
            "weights",
            vec![self.num_classes, self.input_dim()],
            self.weights.clone(),
        ));
        c.push(NamedArray::vector("bias", self.bias.clone()));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let mode = Mode::from_tag(c.scalar("mode")?)?;
        let num_classes = as_count(c.scalar("num_classes")?)?;
        let dims = c.get("dims")?;
        let [d_oh, d_gsv] = dims.data.as_slice() else {
            return Err(Error::Checkpoint("dims must hold 2 values".into()));
        };
        let (d_oh, d_gsv) = (as_count(*d_oh)?, as_count(*d_gsv)?);
        let mut m = FusionModel::zeros(mode, num_classes, d_oh, d_gsv)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let w = c.get("weights")?;
        if w.shape != [num_classes, m.input_dim()] {
            return Err(Error::Checkpoint(format!(
                "weights shape {:?} does not match mode {mode} ({num_classes} x {})",
                w.shape,
                m.input_dim()
            )));
        }
        let b = c.get("bias")?;
        if b.shape != [num_classes] {
            return Err(Error::Checkpoint(format!("bias shape {:?}", b.shape)));
        }
        if w.data.iter().chain(&b.data).any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        m.weights = w.data.clone();
        m.bias = b.data.clone();
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

pub(crate) fn as_count(v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Checkpoint(format!("expected a count, found {v}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    pub fn from_scores(scores: &[f64]) -> Self {
        Prediction {
            class: argmax(scores),
            probabilities: softmax(scores),
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// Mean over the batch of `-score[label] + logsumexp(scores)`.
pub fn cross_entropy_loss(scores_batch: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if scores_batch.is_empty() || scores_batch.len() != labels.len() {
        return Err(Error::invalid(format!(
            "loss needs a nonempty batch with one label per row ({} rows, {} labels)",
            scores_batch.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (scores, &label) in scores_batch.iter().zip(labels) {
        if label >= scores.len() {
            return Err(Error::LabelOutOfRange {
                label,
                classes: scores.len(),
            });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numerical("non-finite score in loss".into()));
        }
        total += log_sum_exp(scores) - scores[label];
    }
    Ok(total / scores_batch.len() as f64)
}

/// Batch loss and its gradient with respect to weights (row-major, `K x d_in`) and bias.
pub fn loss_and_gradient(
    model: &FusionModel,
    inputs: &[Vec<f64>],
    labels: &[usize],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let d = model.input_dim();
    let k = model.num_classes;
    let mut grad_w = vec![0.0; k * d];
    let mut grad_b = vec![0.0; k];
    let mut scores_batch = Vec::with_capacity(inputs.len());
    for (x, &label) in inputs.iter().zip(labels) {
        let scores = model.scores(x)?;
        let mut delta = softmax(&scores);
        if label >= k {
            return Err(Error::LabelOutOfRange { label, classes: k });
        }
        delta[label] -= 1.0;
        for (c, dc) in delta.iter().enumerate() {
            grad_b[c] += dc;
            for (g, v) in grad_w[c * d..(c + 1) * d].iter_mut().zip(x) {
                *g += dc * v;
            }
        }
        scores_batch.push(scores);
    }
    let loss = cross_entropy_loss(&scores_batch, labels)?;
    let n = inputs.len() as f64;
    grad_w.iter_mut().for_each(|g| *g /= n);
    grad_b.iter_mut().for_each(|g| *g /= n);
    Ok((loss, grad_w, grad_b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 4,
            lr0: 1e-3,
            lr_decay_factor: 10.0,
            lr_decay_every: 10,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Step schedule: `lr0 / factor^floor(epoch / every)`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr0 / self.lr_decay_factor.powi((epoch / self.lr_decay_every) as i32)
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.lr_decay_every == 0 {
            return Err(Error::invalid("batch size and decay period must be positive"));
        }
        if !(self.lr0 > 0.0 && self.lr_decay_factor > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(
                "learning rate and decay factor must be positive, momentum in [0, 1)",
            ));
        }
        Ok(())
    }
}

/// SGD with momentum (`v <- m v - lr g`, `w <- w + v`) on assembled inputs.
///
/// Returns the mean training loss of each epoch, accumulated over the
/// mini-batches before their updates.
pub fn train_on(
    model: &mut FusionModel,
    inputs: &[Vec<f64>],
    labels: &[usize],
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(Error::invalid(format!(
            "no usable training objects for mode {}",
            model.mode
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut vel_w = vec![0.0; model.weights.len()];
    let mut vel_b = vec![0.0; model.bias.len()];
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut batch_x = Vec::with_capacity(config.batch_size);
    let mut batch_y = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        let lr = config.learning_rate(epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.push(inputs[i].clone());
                batch_y.push(labels[i]);
            }
            let (loss, gw, gb) = loss_and_gradient(model, &batch_x, &batch_y)?;
            epoch_loss += loss * chunk.len() as f64;
            for ((w, v), g) in model.weights.iter_mut().zip(&mut vel_w).zip(&gw) {
                *v = config.momentum * *v - lr * g;
                *w += *v;
            }
            for ((b, v), g) in model.bias.iter_mut().zip(&mut vel_b).zip(&gb) {
                *v = config.momentum * *v - lr * g;
                *b += *v;
            }
        }
        let mean = epoch_loss / inputs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Numerical(format!("training diverged at epoch {epoch}")));
        }
        trace.push(mean);
    }
    Ok(trace)
}

/// Assembled inputs and labels of the records selected by `keep` that have the
/// modalities `model` needs.
pub fn collect_inputs(
    model: &FusionModel,
    manifest: &DatasetManifest,
    pooling: Pooling,
    keep: impl Fn(&UrbanObjectRecord) -> bool,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in manifest.records.iter().filter(|r| keep(r)) {
        if let Some(x) = model.record_input(r, pooling)? {
            xs.push(x);
            ys.push(r.label);
        }
    }
    Ok((xs, ys))
}

/// Train `model` on the training objects of `split`; objects without ground
/// views are skipped for modes that need them.
pub fn train(
    model: &FusionModel,
    manifest: &DatasetManifest,
    split: &SplitAssignment,
    config: &TrainConfig,
    pooling: Pooling,
) -> Result<(FusionModel, Vec<f64>)> {
    let (xs, ys) = collect_inputs(model, manifest, pooling, |r| split.is_train(&r.object_id))?;
    let mut trained = model.clone();
    let trace = train_on(&mut trained, &xs, &ys, config)?;
    Ok((trained, trace))
}
