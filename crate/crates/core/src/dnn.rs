//! Crossbar-backed feed-forward networks.
//!
//! Forward passes feed activations into the crossbar columns and backward
//! passes feed error vectors into the rows of the same arrays, so both see the
//! device nonidealities. Weight updates follow the mixed-precision scheme:
//! gradients accumulate digitally in `chi` and are flushed to the devices as
//! whole pulses of `epsilon` weight units each.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarConfig, ProgramStats, ProgrammingMode, TiledMatrix};
use crate::devices::DeviceParams;
use crate::error::check_len;
use crate::linalg::Matrix;
use crate::rng::{seeded, substream};
use crate::{Error, Result};

static DIGITS: &[u8] = include_bytes!("../data/digits8x8.bin");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    /// Identity on the logits; the softmax lives in the loss.
    SoftmaxOut,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::SoftmaxOut => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = self.apply(z);
                s * (1.0 - s)
            }
            Activation::SoftmaxOut => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    CrossEntropy,
    Mse,
}

impl Loss {
    /// Loss value and its gradient with respect to the logits.
    pub fn evaluate(self, logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
        if label >= logits.len() {
            return Err(Error::Domain(format!("label {label} outside {} classes", logits.len())));
        }
        match self {
            Loss::CrossEntropy => {
                let p = softmax(logits);
                let mut g = p.clone();
                g[label] -= 1.0;
                Ok((-p[label].max(f64::MIN_POSITIVE).ln(), g))
            }
            Loss::Mse => {
                let mut g = logits.to_vec();
                g[label] -= 1.0;
                let l = 0.5 * g.iter().map(|v| v * v).sum::<f64>();
                Ok((l, g))
            }
        }
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: Loss,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 0.05, epochs: 20, batch_size: 16, loss: Loss::CrossEntropy, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParam("need lr > 0, epochs >= 1 and batch_size >= 1".into()));
        }
        Ok(())
    }
}

/// `"dnn"` block of the experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Layer widths including input and output.
    pub sizes: Vec<usize>,
    pub hidden: Activation,
    /// Flush threshold as a fraction of `w_max`.
    pub epsilon_rel: f64,
    pub train: TrainConfig,
    /// Drift evaluation times in units of `drift_t0`.
    pub drift_times: Vec<f64>,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            sizes: vec![64, 64, 10],
            hidden: Activation::Relu,
            epsilon_rel: 1e-3,
            train: TrainConfig::default(),
            drift_times: vec![1.0, 10.0, 100.0, 1000.0, 10000.0],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub weights: TiledMatrix,
    pub chi: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
    /// Digital gain on the crossbar output, set by drift compensation.
    pub gain: f64,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.shape().1
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape().0
    }
}

/// Counters for one or more flushes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct UpdateStats {
    pub pulses: u64,
    /// Weights whose requested value exceeded `±w_max`.
    pub clamps: u64,
    /// Pairs re-programmed because a device ran out of headroom.
    pub refreshes: u64,
}

impl std::ops::AddAssign for UpdateStats {
    fn add_assign(&mut self, o: Self) {
        self.pulses += o.pulses;
        self.clamps += o.clamps;
        self.refreshes += o.refreshes;
    }
}

#[derive(Debug, Clone)]
pub struct MixedPrecisionNet {
    pub layers: Vec<Layer>,
    epsilon: f64,
    programming: ProgrammingMode,
    drift_reference: Option<Vec<f64>>,
}

/// Pre-activations and activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub pre: Vec<Vec<f64>>,
    /// `acts[0]` is the input.
    pub acts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &MixedPrecisionNet) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Matrix::zeros(l.outputs(), l.inputs())).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.outputs()]).collect(),
        }
    }

    pub fn accumulate(&mut self, o: &Gradients) -> Result<()> {
        check_len("gradient layers", self.weights.len(), o.weights.len())?;
        for (a, b) in self.weights.iter_mut().zip(&o.weights) {
            check_len("gradient size", a.as_slice().len(), b.as_slice().len())?;
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&o.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            w.as_mut_slice().iter_mut().for_each(|v| *v *= s);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|v| *v *= s);
        }
    }
}

impl MixedPrecisionNet {
    /// Programs `weights[l]` (shape `out x in`) into fresh crossbars.
    pub fn from_weights<R: Rng + ?Sized>(
        weights: &[Matrix],
        biases: &[Vec<f64>],
        activations: &[Activation],
        params: DeviceParams,
        xbar: &CrossbarConfig,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<(Self, ProgramStats)> {
        if weights.is_empty() {
            return Err(Error::InvalidParam("network needs at least one layer".into()));
        }
        check_len("bias vectors", weights.len(), biases.len())?;
        check_len("activations", weights.len(), activations.len())?;
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParam(format!("epsilon must be > 0, got {epsilon}")));
        }
        let mut layers = Vec::with_capacity(weights.len());
        let mut stats = ProgramStats::default();
        for (i, ((w, b), act)) in weights.iter().zip(biases).zip(activations).enumerate() {
            if i > 0 {
                check_len("layer input width", weights[i - 1].rows(), w.cols())?;
            }
            check_len("bias length", w.rows(), b.len())?;
            let mut tm = TiledMatrix::from_config(w.rows(), w.cols(), params, xbar)?;
            stats += tm.program_matrix(w, xbar.programming, rng)?;
            layers.push(Layer {
                weights: tm,
                chi: Matrix::zeros(w.rows(), w.cols()),
                bias: b.clone(),
                activation: *act,
                gain: 1.0,
            });
        }
        Ok((Self { layers, epsilon, programming: xbar.programming, drift_reference: None }, stats))
    }

    /// Uniform Glorot initialisation with zero biases, clipped to `±w_max`.
    pub fn random<R: Rng + ?Sized>(
        cfg: &NetConfig,
        params: DeviceParams,
        xbar: &CrossbarConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if cfg.sizes.len() < 2 {
            return Err(Error::InvalidParam("sizes needs input and output widths".into()));
        }
        let n = cfg.sizes.len() - 1;
        let weights: Vec<Matrix> = cfg
            .sizes
            .windows(2)
            .map(|p| {
                let bound = (6.0 / (p[0] + p[1]) as f64).sqrt().min(xbar.w_max);
                Matrix::uniform(p[1], p[0], bound, rng)
            })
            .collect();
        let biases: Vec<Vec<f64>> = cfg.sizes[1..].iter().map(|&k| vec![0.0; k]).collect();
        let mut acts = vec![cfg.hidden; n];
        acts[n - 1] = Activation::SoftmaxOut;
        let (net, _) = Self::from_weights(&weights, &biases, &acts, params, xbar, cfg.epsilon_rel * xbar.w_max, rng)?;
        Ok(net)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn now(&self) -> f64 {
        self.layers[0].weights.now()
    }

    pub fn advance_time(&mut self, dt: f64) -> Result<()> {
        for l in &mut self.layers {
            l.weights.advance_time(dt)?;
        }
        Ok(())
    }

    pub fn decoded_weights(&self) -> Vec<Matrix> {
        self.layers.iter().map(|l| l.weights.decoded_weights()).collect()
    }

    /// Inputs must already be scaled into `[-1, 1]`.
    pub fn forward<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<(Vec<f64>, ForwardCache)> {
        check_len("network input", self.input_dim(), x.len())?;
        if let Some(v) = x.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(Error::Domain(format!("network input {v} outside [-1, 1]")));
        }
        let mut cache = ForwardCache { pre: Vec::with_capacity(self.layers.len()), acts: vec![x.to_vec()] };
        for l in &self.layers {
            let a = cache.acts.last().expect("input present");
            let mut z = l.weights.mvm_scaled(a, rng)?;
            for (zi, b) in z.iter_mut().zip(&l.bias) {
                *zi = *zi * l.gain + b;
            }
            let next: Vec<f64> = z.iter().map(|&v| l.activation.apply(v)).collect();
            cache.pre.push(z);
            cache.acts.push(next);
        }
        let logits = cache.acts.last().expect("output present").clone();
        Ok((logits, cache))
    }

    /// Back-propagates `grad_out` (gradient of the loss w.r.t. the returned
    /// logits) through the transposed crossbars.
    pub fn backward<R: Rng + ?Sized>(
        &self,
        cache: &ForwardCache,
        grad_out: &[f64],
        rng: &mut R,
    ) -> Result<Gradients> {
        let n = self.layers.len();
        check_len("cached layers", n, cache.pre.len())?;
        check_len("cached activations", n + 1, cache.acts.len())?;
        for (l, (z, a)) in self.layers.iter().zip(cache.pre.iter().zip(&cache.acts)) {
            check_len("cached pre-activation", l.outputs(), z.len())?;
            check_len("cached activation", l.inputs(), a.len())?;
        }
        check_len("output gradient", self.output_dim(), grad_out.len())?;
        let mut grads = Gradients::zeros_like(self);
        let last = &self.layers[n - 1];
        let mut delta: Vec<f64> = grad_out
            .iter()
            .zip(&cache.pre[n - 1])
            .map(|(g, &z)| g * last.activation.derivative(z))
            .collect();
        for li in (0..n).rev() {
            let a = &cache.acts[li];
            let gw = &mut grads.weights[li];
            for (r, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut gw.as_mut_slice()[r * a.len()..(r + 1) * a.len()];
                for (g, ai) in row.iter_mut().zip(a) {
                    *g = d * ai;
                }
            }
            grads.biases[li].clone_from(&delta);
            if li > 0 {
                let back = self.layers[li].weights.mvm_transpose_scaled(&delta, rng)?;
                let prev = &self.layers[li - 1];
                delta = back
                    .iter()
                    .zip(&cache.pre[li - 1])
                    .map(|(g, &z)| g * prev.activation.derivative(z))
                    .collect();
            }
        }
        Ok(grads)
    }

    /// `chi -= lr * dW`, then flushes every `|chi| >= epsilon` to the devices
    /// as `floor(|chi| / epsilon)` pulses. Biases are updated digitally.
    pub fn apply_update<R: Rng + ?Sized>(&mut self, grads: &Gradients, lr: f64, rng: &mut R) -> Result<UpdateStats> {
        check_len("gradient layers", self.layers.len(), grads.weights.len())?;
        let eps = self.epsilon;
        let mut stats = UpdateStats::default();
        for (l, (gw, gb)) in self.layers.iter_mut().zip(grads.weights.iter().zip(&grads.biases)) {
            check_len("weight gradient", l.chi.as_slice().len(), gw.as_slice().len())?;
            check_len("bias gradient", l.bias.len(), gb.len())?;
            let cols = l.inputs();
            for (i, (chi, g)) in l.chi.as_mut_slice().iter_mut().zip(gw.as_slice()).enumerate() {
                *chi -= lr * g;
                let (n, residual) = flush_count(*chi, eps);
                if n == 0 {
                    continue;
                }
                let out = l.weights.nudge(i / cols, i % cols, *chi > 0.0, n, eps, self.programming, rng)?;
                *chi = residual;
                stats.pulses += out.pulses;
                stats.clamps += u64::from(out.clipped);
                stats.refreshes += u64::from(out.refreshed);
            }
            for (b, g) in l.bias.iter_mut().zip(gb) {
                *b -= lr * g;
            }
        }
        Ok(stats)
    }

    fn calibration_response<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        self.layers
            .iter()
            .map(|l| Ok(l.weights.mvm(&vec![1.0; l.inputs()], rng)?.iter().map(|v| v.abs()).sum()))
            .collect()
    }

    /// Records each layer's summed response to an all-ones input as the
    /// reference for [`MixedPrecisionNet::compensate_drift`].
    pub fn calibrate_drift<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.drift_reference = Some(self.calibration_response(rng)?);
        for l in &mut self.layers {
            l.gain = 1.0;
        }
        Ok(())
    }

    /// Global drift compensation: rescales each layer's output by the ratio
    /// of the reference calibration response to the current one.
    pub fn compensate_drift<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let reference = self
            .drift_reference
            .clone()
            .ok_or_else(|| Error::InvalidParam("calibrate_drift must run before compensate_drift".into()))?;
        let now = self.calibration_response(rng)?;
        for (l, (r, c)) in self.layers.iter_mut().zip(reference.iter().zip(now)) {
            l.gain = if c > 0.0 && *r > 0.0 { r / c } else { 1.0 };
        }
        Ok(())
    }

    pub fn predict<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<usize> {
        Ok(argmax(&self.forward(x, rng)?.0))
    }

    /// Fraction of correctly classified samples.
    pub fn evaluate<R: Rng + ?Sized>(&self, data: &Dataset, rng: &mut R) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut correct = 0usize;
        for (x, &y) in data.inputs.iter().zip(&data.labels) {
            correct += usize::from(self.predict(x, rng)? == y);
        }
        Ok(correct as f64 / data.len() as f64)
    }
}

/// Pulse count and leftover accumulator for one flush; `|residual| < eps`.
pub fn flush_count(chi: f64, eps: f64) -> (u32, f64) {
    let mag = chi.abs();
    if mag < eps {
        return (0, chi);
    }
    let mut n = (mag / eps).floor();
    let mut rest = mag - n * eps;
    while rest >= eps {
        n += 1.0;
        rest -= eps;
    }
    while rest < 0.0 {
        n -= 1.0;
        rest += eps;
    }
    (n.min(f64::from(u32::MAX)) as u32, rest.copysign(chi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Rows scaled into `[0, 1]`.
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        check_len("labels", inputs.len(), labels.len())?;
        if let Some(w) = inputs.first().map(Vec::len) {
            if inputs.iter().any(|r| r.len() != w) {
                return Err(Error::Parse("ragged input rows".into()));
            }
        }
        if let Some(l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Parse(format!("label {l} outside {n_classes} classes")));
        }
        Ok(Self { inputs, labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// The bundled 1797-sample 8x8 handwritten digits set.
    pub fn digits() -> Self {
        let rows: Vec<&[u8]> = DIGITS.chunks_exact(65).collect();
        let inputs = rows.iter().map(|r| r[..64].iter().map(|&p| f64::from(p) / 16.0).collect()).collect();
        let labels = rows.iter().map(|r| usize::from(r[64])).collect();
        Self { inputs, labels, n_classes: 10 }
    }

    /// Parses an IDX3 image file and its IDX1 label file.
    pub fn from_idx(images: &[u8], labels: &[u8]) -> Result<Self> {
        let (dims, pix) = parse_idx(images, 3)?;
        let (ldims, lab) = parse_idx(labels, 1)?;
        check_len("idx label count", dims[0], ldims[0])?;
        let width = dims[1] * dims[2];
        let inputs = pix.chunks_exact(width).map(|r| r.iter().map(|&p| f64::from(p) / 255.0).collect()).collect();
        let labels: Vec<usize> = lab.iter().map(|&l| usize::from(l)).collect();
        let n_classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
        Self::new(inputs, labels, n_classes)
    }

    pub fn load_idx(images: &Path, labels: &Path) -> Result<Self> {
        Self::from_idx(&read_all(images)?, &read_all(labels)?)
    }
}

fn read_all(p: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(p)?.read_to_end(&mut buf)?;
    Ok(buf)
}

fn parse_idx(bytes: &[u8], want_dims: usize) -> Result<(Vec<usize>, &[u8])> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Parse("not an IDX file".into()));
    }
    if bytes[2] != 0x08 {
        return Err(Error::Parse(format!("unsupported IDX element type {:#x}", bytes[2])));
    }
    let nd = usize::from(bytes[3]);
    if nd != want_dims {
        return Err(Error::Parse(format!("expected {want_dims}-d IDX, got {nd}-d")));
    }
    let header = 4 + 4 * nd;
    if bytes.len() < header {
        return Err(Error::Parse("truncated IDX header".into()));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let total: usize = dims.iter().product();
    let body = &bytes[header..];
    if body.len() != total {
        return Err(Error::Parse(format!("IDX body has {} bytes, header promises {total}", body.len())));
    }
    Ok((dims, body))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
}

impl SplitDataset {
    /// Fixed 80/20 split of the bundled digits.
    pub fn digits() -> Self {
        let all = Dataset::digits();
        let mut idx: Vec<usize> = (0..all.len()).collect();
        idx.shuffle(&mut seeded(0x5eed_d161));
        let n_train = all.len() * 4 / 5;
        Self { train: all.subset(&idx[..n_train]), test: all.subset(&idx[n_train..]) }
    }

    /// The four standard MNIST files inside `dir`.
    pub fn mnist_dir(dir: &Path) -> Result<Self> {
        Ok(Self {
            train: Dataset::load_idx(&dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte"))?,
            test: Dataset::load_idx(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    /// Mean training loss over the epoch.
    pub loss: f64,
    /// Test accuracy after the epoch, in `[0, 1]`.
    pub acc: f64,
    pub pulses: u64,
    pub clamps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint {
    pub t: f64,
    pub acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochReport>,
    pub drift_curve: Vec<DriftPoint>,
}

/// Mini-batch SGD through the crossbars. Device time stays frozen during
/// training.
pub fn train(net: &mut MixedPrecisionNet, data: &SplitDataset, cfg: &TrainConfig) -> Result<TrainingReport> {
    cfg.validate()?;
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_len("dataset width", net.input_dim(), data.train.input_dim())?;
    let mut order_rng = substream(cfg.seed, "dnn/order");
    let mut dev_rng = substream(cfg.seed, "dnn/devices");
    let mut eval_rng = substream(cfg.seed, "dnn/eval");
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut report = TrainingReport::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        let mut stats = UpdateStats::default();
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = Gradients::zeros_like(net);
            for &i in batch {
                let (logits, cache) = net.forward(&data.train.inputs[i], &mut dev_rng)?;
                let (l, g) = cfg.loss.evaluate(&logits, data.train.labels[i])?;
                loss_sum += l;
                acc.accumulate(&net.backward(&cache, &g, &mut dev_rng)?)?;
            }
            acc.scale(1.0 / batch.len() as f64);
            stats += net.apply_update(&acc, cfg.lr, &mut dev_rng)?;
        }
        let loss = loss_sum / data.train.len() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss in epoch {epoch}")));
        }
        let acc = net.evaluate(&data.test, &mut eval_rng)?;
        log::debug!("epoch {epoch}: loss {loss:.4} acc {acc:.4} pulses {}", stats.pulses);
        report.epochs.push(EpochReport { loss, acc, pulses: stats.pulses, clamps: stats.clamps });
    }
    Ok(report)
}

/// Test accuracy at each absolute time after programming, with global drift
/// compensation calibrated at the net's current time.
///
/// Every time point reuses a clone of `rng`, so read noise is common across
/// the curve and only drift separates the points.
pub fn infer_with_drift<R: Rng + Clone>(
    net: &MixedPrecisionNet,
    data: &Dataset,
    time_points: &[f64],
    rng: &R,
) -> Result<Vec<DriftPoint>> {
    if time_points.is_empty() {
        return Err(Error::InvalidParam("no time points".into()));
    }
    if time_points.windows(2).any(|w| !(w[1] > w[0])) || !(time_points[0] >= net.now()) {
        return Err(Error::InvalidParam("time points must be strictly increasing and not in the past".into()));
    }
    let mut aged = net.clone();
    aged.calibrate_drift(&mut rng.clone())?;
    let mut curve = Vec::with_capacity(time_points.len());
    for &t in time_points {
        aged.advance_time(t - aged.now())?;
        let mut r = rng.clone();
        aged.compensate_drift(&mut r)?;
        let acc = aged.evaluate(data, &mut r)?;
        curve.push(DriftPoint { t, acc });
    }
    Ok(curve)
}
