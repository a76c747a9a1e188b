//! Probabilistic spiking networks (GLM neurons) trained with score-function
//! gradients.
//!
//! Unit `i` fires at step `t` with probability `sigmoid(u_i(t))` where
//!
//! `u_i(t) = b_i + sum_j w_ij (alpha * s_j)(t) + (beta * y_i)(t)`
//!
//! and `(k * s)(t) = sum_{l=1..K} k[l-1] s(t - l)` is a causal filter over
//! past spikes. Presynaptic sources `s_j` are the inputs followed by the other
//! units; a unit sees its own history only through `beta`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::check_len;
use crate::linalg::Matrix;
use crate::rng::{indexed_substream, substream};
use crate::snn::{encode_grf, encode_rate, SpikeRaster};
use crate::{Error, Result};

pub fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// `log sigmoid(u)` without overflow.
fn log_sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        -(-u).exp().ln_1p()
    } else {
        u - u.exp().ln_1p()
    }
}

/// `k[0] s(t-1) + k[1] s(t-2) + ...`.
pub fn causal_filter(kernel: &[f64], s: &[bool], t: usize) -> f64 {
    kernel
        .iter()
        .enumerate()
        .take(t)
        .filter(|(l, _)| s[t - 1 - l])
        .map(|(_, k)| k)
        .sum()
}

/// Geometric taps `decay^0, decay^1, ...`.
pub fn geometric_kernel(decay: f64, taps: usize) -> Vec<f64> {
    (0..taps).map(|l| decay.powi(l as i32)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmNetwork {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
    /// `n_units x (n_in + n_units)`; diagonal entries of the unit block are unused.
    pub weights: Matrix,
    pub biases: Vec<f64>,
    pub syn_kernel: Vec<f64>,
    pub refr_kernel: Vec<f64>,
    pub t_steps: usize,
}

/// Per-parameter sum of `d log p / d theta` over a rollout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eligibility {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl Eligibility {
    pub fn zeros(net: &GlmNetwork) -> Self {
        Self { weights: Matrix::zeros(net.n_units(), net.n_sources()), biases: vec![0.0; net.n_units()] }
    }

    /// Flattened `[weights..., biases...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.weights.as_slice().iter().chain(&self.biases).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// All units; the outputs are the last `n_out` rows.
    pub output: SpikeRaster,
    pub log_prob: f64,
    pub eligibility: Eligibility,
}

impl GlmNetwork {
    /// All parameters zero. Default kernels: `alpha = 0.6^l` over 5 taps, `beta = [-2]`.
    pub fn new(n_in: usize, n_hidden: usize, n_out: usize, t_steps: usize) -> Result<Self> {
        Self::with_kernels(n_in, n_hidden, n_out, t_steps, geometric_kernel(0.6, 5), vec![-2.0])
    }

    pub fn with_kernels(
        n_in: usize,
        n_hidden: usize,
        n_out: usize,
        t_steps: usize,
        syn_kernel: Vec<f64>,
        refr_kernel: Vec<f64>,
    ) -> Result<Self> {
        if n_out == 0 || t_steps == 0 {
            return Err(Error::InvalidParam("need n_out >= 1 and t_steps >= 1".into()));
        }
        if syn_kernel.is_empty() || refr_kernel.is_empty() {
            return Err(Error::InvalidParam("kernels need at least one tap".into()));
        }
        if !syn_kernel.iter().chain(&refr_kernel).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("kernel taps".into()));
        }
        let n_units = n_hidden + n_out;
        Ok(Self {
            n_in,
            n_hidden,
            n_out,
            weights: Matrix::zeros(n_units, n_in + n_units),
            biases: vec![0.0; n_units],
            syn_kernel,
            refr_kernel,
            t_steps,
        })
    }

    pub fn n_units(&self) -> usize {
        self.n_hidden + self.n_out
    }

    pub fn n_sources(&self) -> usize {
        self.n_in + self.n_units()
    }

    pub fn n_params(&self) -> usize {
        self.weights.as_slice().len() + self.biases.len()
    }

    /// Gaussian weights with standard deviation `sd`; self-connections stay zero.
    pub fn randomize<R: Rng + ?Sized>(&mut self, sd: f64, bias: f64, rng: &mut R) {
        let n_in = self.n_in;
        let units = self.n_units();
        self.weights = Matrix::gaussian(units, self.n_sources(), sd, rng);
        for i in 0..units {
            self.weights[(i, n_in + i)] = 0.0;
        }
        self.biases = vec![bias; units];
    }

    /// Flattened parameters in [`Eligibility::to_vec`] order.
    pub fn params(&self) -> Vec<f64> {
        self.weights.as_slice().iter().chain(&self.biases).copied().collect()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        check_len("parameter vector", self.n_params(), p.len())?;
        let nw = self.weights.as_slice().len();
        self.weights.as_mut_slice().copy_from_slice(&p[..nw]);
        self.biases.copy_from_slice(&p[nw..]);
        let n_in = self.n_in;
        for i in 0..self.n_units() {
            self.weights[(i, n_in + i)] = 0.0;
        }
        Ok(())
    }

    fn source<'a>(&self, j: usize, input: &'a SpikeRaster, own: &'a SpikeRaster) -> &'a [bool] {
        if j < self.n_in {
            &input.events[j]
        } else {
            &own.events[j - self.n_in]
        }
    }

    fn check_rasters(&self, input: &SpikeRaster, own: &SpikeRaster) -> Result<()> {
        check_len("input units", self.n_in, input.n_units())?;
        check_len("unit rows", self.n_units(), own.n_units())?;
        if self.n_in > 0 {
            check_len("input steps", self.t_steps, input.n_steps())?;
        }
        check_len("output steps", self.t_steps, own.n_steps())?;
        Ok(())
    }

    /// Membrane potential of `unit` at step `t` given the spikes before `t`.
    pub fn membrane(&self, unit: usize, t: usize, input: &SpikeRaster, own: &SpikeRaster) -> Result<f64> {
        if unit >= self.n_units() || t >= self.t_steps {
            return Err(Error::InvalidParam(format!("unit {unit} / step {t} out of range")));
        }
        self.check_rasters(input, own)?;
        Ok(self.membrane_unchecked(unit, t, input, own))
    }

    fn membrane_unchecked(&self, unit: usize, t: usize, input: &SpikeRaster, own: &SpikeRaster) -> f64 {
        let row = self.weights.row(unit);
        let mut u = self.biases[unit];
        for (j, w) in row.iter().enumerate() {
            if *w != 0.0 && j != self.n_in + unit {
                u += w * causal_filter(&self.syn_kernel, self.source(j, input, own), t);
            }
        }
        u + causal_filter(&self.refr_kernel, &own.events[unit], t)
    }

    /// Log-probability of `output` given `input`, and its gradient.
    pub fn score(&self, input: &SpikeRaster, output: &SpikeRaster) -> Result<(f64, Eligibility)> {
        self.check_rasters(input, output)?;
        let mut e = Eligibility::zeros(self);
        let mut log_prob = 0.0;
        for t in 0..self.t_steps {
            for i in 0..self.n_units() {
                let u = self.membrane_unchecked(i, t, input, output);
                let y = output.events[i][t];
                log_prob += if y { log_sigmoid(u) } else { log_sigmoid(-u) };
                self.accumulate(&mut e, i, t, u, y, input, output);
            }
        }
        Ok((log_prob, e))
    }

    #[allow(clippy::too_many_arguments)]
    fn accumulate(&self, e: &mut Eligibility, i: usize, t: usize, u: f64, y: bool, input: &SpikeRaster, own: &SpikeRaster) {
        let g = f64::from(u8::from(y)) - sigmoid(u);
        e.biases[i] += g;
        if g == 0.0 {
            return;
        }
        let cols = self.n_sources();
        let row = &mut e.weights.as_mut_slice()[i * cols..(i + 1) * cols];
        for (j, ej) in row.iter_mut().enumerate() {
            if j != self.n_in + i {
                let x = causal_filter(&self.syn_kernel, self.source(j, input, own), t);
                if x != 0.0 {
                    *ej += g * x;
                }
            }
        }
    }

    /// Samples every unit step by step.
    pub fn rollout<R: Rng + ?Sized>(&self, input: &SpikeRaster, rng: &mut R) -> Result<Rollout> {
        let mut own = SpikeRaster::new(self.n_units(), self.t_steps, input.dt)?;
        self.check_rasters(input, &own)?;
        let mut e = Eligibility::zeros(self);
        let mut log_prob = 0.0;
        for t in 0..self.t_steps {
            for i in 0..self.n_units() {
                let u = self.membrane_unchecked(i, t, input, &own);
                let y = rng.random::<f64>() < sigmoid(u);
                own.events[i][t] = y;
                log_prob += if y { log_sigmoid(u) } else { log_sigmoid(-u) };
                self.accumulate(&mut e, i, t, u, y, input, &own);
            }
        }
        Ok(Rollout { output: own, log_prob, eligibility: e })
    }

    /// Rows of the readout units.
    pub fn outputs<'a>(&self, r: &'a SpikeRaster) -> &'a [Vec<bool>] {
        &r.events[self.n_hidden..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    None,
    #[default]
    RunningMean,
}

/// REINFORCE state carried across steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Reinforce {
    pub lr: f64,
    pub mode: BaselineMode,
    pub baseline: Option<f64>,
    pub momentum: f64,
    rollouts: u64,
    seed: u64,
}

impl Reinforce {
    pub fn new(lr: f64, mode: BaselineMode, seed: u64) -> Result<Self> {
        if !(lr >= 0.0) {
            return Err(Error::InvalidParam(format!("lr must be >= 0, got {lr}")));
        }
        Ok(Self { lr, mode, baseline: None, momentum: 0.9, rollouts: 0, seed })
    }

    /// One update from a batch: `theta -= lr * mean((f - b) e)`. Returns the
    /// batch's mean feedback and the rollouts.
    pub fn step<F>(&mut self, net: &mut GlmNetwork, inputs: &[&SpikeRaster], mut f: F) -> Result<(f64, Vec<Rollout>)>
    where
        F: FnMut(usize, &SpikeRaster) -> f64,
    {
        if inputs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut rolls = Vec::with_capacity(inputs.len());
        let mut fs = Vec::with_capacity(inputs.len());
        for (k, x) in inputs.iter().enumerate() {
            let mut rng = indexed_substream(self.seed, "psnn/rollout", self.rollouts);
            self.rollouts += 1;
            let r = net.rollout(x, &mut rng)?;
            let v = f(k, &r.output);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("feedback signal {v}")));
            }
            fs.push(v);
            rolls.push(r);
        }
        let mean_f = fs.iter().sum::<f64>() / fs.len() as f64;
        let b = match self.mode {
            BaselineMode::None => 0.0,
            BaselineMode::RunningMean => *self.baseline.get_or_insert(mean_f),
        };
        let scale = self.lr / inputs.len() as f64;
        let mut p = net.params();
        for (r, fv) in rolls.iter().zip(&fs) {
            let c = scale * (fv - b);
            if c != 0.0 {
                for (pi, ei) in p.iter_mut().zip(r.eligibility.to_vec()) {
                    *pi -= c * ei;
                }
            }
        }
        net.set_params(&p)?;
        if self.mode == BaselineMode::RunningMean {
            self.baseline = Some(self.momentum * b + (1.0 - self.momentum) * mean_f);
        }
        Ok((mean_f, rolls))
    }
}

/// Hamming distance between the readout rows and `target`, counted from step `from`.
pub fn hamming(out: &[Vec<bool>], target: &SpikeRaster, from: usize) -> f64 {
    out.iter()
        .zip(&target.events)
        .map(|(a, b)| a.iter().zip(b).skip(from).filter(|(x, y)| x != y).count())
        .sum::<usize>() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsnnTrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub baseline: BaselineMode,
    /// First step counted by the Hamming loss.
    pub loss_from: usize,
    pub seed: u64,
}

impl Default for PsnnTrainConfig {
    fn default() -> Self {
        Self { lr: 0.05, epochs: 50, batch_size: 8, baseline: BaselineMode::RunningMean, loss_from: 0, seed: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PsnnReport {
    /// Mean feedback per epoch.
    pub loss_curve: Vec<f64>,
    /// Mean readout spikes per sample per epoch.
    pub output_spikes: Vec<f64>,
    pub input_spikes_per_sample: f64,
}

/// REINFORCE over `(input, target)` pairs with the Hamming readout loss.
pub fn train_supervised(
    net: &mut GlmNetwork,
    data: &[(SpikeRaster, SpikeRaster)],
    cfg: &PsnnTrainConfig,
) -> Result<PsnnReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidParam("need epochs >= 1 and batch_size >= 1".into()));
    }
    for (_, y) in data {
        check_len("target rows", net.n_out, y.n_units())?;
        check_len("target steps", net.t_steps, y.n_steps())?;
    }
    let mut trainer = Reinforce::new(cfg.lr, cfg.baseline, cfg.seed)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle = substream(cfg.seed, "psnn/order");
    let mut report = PsnnReport {
        input_spikes_per_sample: data.iter().map(|(x, _)| x.spike_count()).sum::<usize>() as f64 / data.len() as f64,
        ..PsnnReport::default()
    };
    let n_hidden = net.n_hidden;
    for _ in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle);
        let (mut loss, mut spikes) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let inputs: Vec<&SpikeRaster> = batch.iter().map(|&i| &data[i].0).collect();
            let (_, rolls) = trainer.step(net, &inputs, |k, out| hamming(&out.events[n_hidden..], &data[batch[k]].1, cfg.loss_from))?;
            for (k, r) in rolls.iter().enumerate() {
                loss += hamming(&r.output.events[n_hidden..], &data[batch[k]].1, cfg.loss_from);
                spikes += r.output.events[n_hidden..].iter().flatten().filter(|&&s| s).count() as f64;
            }
        }
        report.loss_curve.push(loss / data.len() as f64);
        report.output_spikes.push(spikes / data.len() as f64);
    }
    Ok(report)
}

/// Mean Hamming loss of fresh rollouts.
pub fn evaluate(net: &GlmNetwork, data: &[(SpikeRaster, SpikeRaster)], loss_from: usize, seed: u64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (k, (x, y)) in data.iter().enumerate() {
        let r = net.rollout(x, &mut indexed_substream(seed, "psnn/eval", k as u64))?;
        total += hamming(net.outputs(&r.output), y, loss_from);
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoder {
    #[default]
    Rate,
    Grf,
}

/// `"psnn"` block of the experiment config for the band classification task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodingTaskConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub n_fields: usize,
    pub sigma: f64,
    pub delta_t: usize,
    pub kernel_decay: f64,
    pub refractory: f64,
    pub train: PsnnTrainConfig,
}

impl Default for EncodingTaskConfig {
    fn default() -> Self {
        Self {
            n_train: 64,
            n_test: 64,
            n_fields: 5,
            sigma: 0.15,
            delta_t: 30,
            kernel_decay: 1.0,
            refractory: -2.0,
            train: PsnnTrainConfig { lr: 0.05, epochs: 100, batch_size: 8, loss_from: 15, ..PsnnTrainConfig::default() },
        }
    }
}

/// Label of the band task: class 1 iff `0.3 < v < 0.7`.
pub fn band_label(v: f64) -> usize {
    usize::from(v > 0.3 && v < 0.7)
}

/// One readout row that fires on every step from `from` for class 1 and stays
/// silent for class 0.
pub fn class_target(class: usize, t_steps: usize, from: usize) -> Result<SpikeRaster> {
    let mut r = SpikeRaster::new(1, t_steps, 1.0)?;
    if class == 1 {
        for t in from..t_steps {
            r.events[0][t] = true;
        }
    }
    Ok(r)
}

/// Encodes a value with `n_fields` Gaussian receptive fields, either as one
/// latency spike per field or as Bernoulli spike trains at the field responses.
pub fn encode_value<R: Rng + ?Sized>(v: f64, enc: Encoder, cfg: &EncodingTaskConfig, rng: &mut R) -> Result<SpikeRaster> {
    match enc {
        Encoder::Grf => encode_grf(&[v], cfg.n_fields, cfg.delta_t, cfg.sigma),
        Encoder::Rate => {
            let resp: Vec<f64> = (0..cfg.n_fields)
                .map(|i| {
                    let c = i as f64 / (cfg.n_fields - 1) as f64;
                    (-(v - c).powi(2) / (2.0 * cfg.sigma * cfg.sigma)).exp()
                })
                .collect();
            encode_rate(&resp, cfg.delta_t, rng)
        }
    }
}

fn band_split(cfg: &EncodingTaskConfig, enc: Encoder, seed: u64, task: &str, n: usize) -> Result<Vec<(SpikeRaster, SpikeRaster)>> {
    let mut vals = substream(seed, &format!("psnn/{task}/values"));
    let mut spikes = substream(seed, &format!("psnn/{task}/spikes"));
    (0..n)
        .map(|_| {
            let v: f64 = vals.random();
            let x = encode_value(v, enc, cfg, &mut spikes)?;
            let y = class_target(band_label(v), cfg.delta_t, cfg.train.loss_from)?;
            Ok((x, y))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingReport {
    pub encoder: Encoder,
    pub train: PsnnReport,
    pub final_loss: f64,
    pub input_spikes_per_sample: f64,
}

/// Band classification of a scalar from rate- or time-encoded inputs with a
/// single-layer GLM network with one readout unit.
pub fn encoding_task(cfg: &EncodingTaskConfig, enc: Encoder, seed: u64) -> Result<EncodingReport> {
    let train = band_split(cfg, enc, seed, "train", cfg.n_train)?;
    let test = band_split(cfg, enc, seed, "test", cfg.n_test)?;
    let mut net = GlmNetwork::with_kernels(
        cfg.n_fields,
        0,
        1,
        cfg.delta_t,
        geometric_kernel(cfg.kernel_decay, cfg.delta_t),
        vec![cfg.refractory],
    )?;
    let tc = PsnnTrainConfig { seed, ..cfg.train.clone() };
    let report = train_supervised(&mut net, &train, &tc)?;
    let final_loss = evaluate(&net, &test, tc.loss_from, child(seed))?;
    let input_spikes_per_sample = test.iter().map(|(x, _)| x.spike_count()).sum::<usize>() as f64 / test.len() as f64;
    Ok(EncodingReport { encoder: enc, train: report, final_loss, input_spikes_per_sample })
}

fn child(seed: u64) -> u64 {
    crate::rng::child_seed(seed, "psnn/test-rollouts")
}

/// `"psnn"` block for the teacher raster task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetRasterConfig {
    pub n_in: usize,
    pub n_out: usize,
    pub t_steps: usize,
    pub input_rate: f64,
    pub target_rate: f64,
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for TargetRasterConfig {
    fn default() -> Self {
        Self { n_in: 10, n_out: 2, t_steps: 20, input_rate: 0.2, target_rate: 0.2, steps: 2000, lr: 0.05, batch_size: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRasterReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Mean feedback over consecutive windows of 100 steps.
    pub loss_curve: Vec<f64>,
}

/// Learns to reproduce a random teacher raster from a fixed Poisson input.
pub fn target_raster_task(cfg: &TargetRasterConfig, seed: u64) -> Result<TargetRasterReport> {
    if cfg.steps == 0 {
        return Err(Error::InvalidParam("steps must be >= 1".into()));
    }
    let mut rng = substream(seed, "psnn/teacher");
    let input = encode_rate(&vec![cfg.input_rate; cfg.n_in], cfg.t_steps, &mut rng)?;
    let target = encode_rate(&vec![cfg.target_rate; cfg.n_out], cfg.t_steps, &mut rng)?;
    let mut net = GlmNetwork::new(cfg.n_in, 0, cfg.n_out, cfg.t_steps)?;
    let eval = |net: &GlmNetwork, tag: &str| -> Result<f64> {
        let data = vec![(input.clone(), target.clone())];
        let reps = 200;
        let mut s = 0.0;
        for k in 0..reps {
            s += evaluate(net, &data, 0, crate::rng::child_seed(seed, &format!("{tag}/{k}")))?;
        }
        Ok(s / f64::from(reps))
    };
    let initial_loss = eval(&net, "psnn/eval-initial")?;
    let mut trainer = Reinforce::new(cfg.lr, BaselineMode::RunningMean, seed)?;
    let mut curve = Vec::new();
    let mut window = 0.0;
    let batch: Vec<&SpikeRaster> = vec![&input; cfg.batch_size.max(1)];
    for s in 0..cfg.steps {
        let (f, _) = trainer.step(&mut net, &batch, |_, out| hamming(&out.events, &target, 0))?;
        window += f;
        if (s + 1) % 100 == 0 {
            curve.push(window / 100.0);
            window = 0.0;
        }
    }
    let final_loss = eval(&net, "psnn/eval-final")?;
    Ok(TargetRasterReport { initial_loss, final_loss, loss_curve: curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn raster(rows: &[&[usize]], steps: usize) -> SpikeRaster {
        let mut r = SpikeRaster::new(rows.len(), steps, 1.0).unwrap();
        for (u, ts) in rows.iter().enumerate() {
            for &t in *ts {
                r.events[u][t] = true;
            }
        }
        r
    }

    #[test]
    fn zero_network_membrane_is_zero() {
        let net = GlmNetwork::with_kernels(2, 0, 1, 6, vec![1.0, 0.5], vec![0.0]).unwrap();
        let x = raster(&[&[0, 2], &[1]], 6);
        let y = raster(&[&[3]], 6);
        for t in 0..6 {
            assert_eq!(net.membrane(0, t, &x, &y).unwrap(), 0.0);
        }
    }

    #[test]
    fn silent_history_leaves_bias() {
        let mut net = GlmNetwork::new(2, 1, 1, 5).unwrap();
        net.randomize(1.0, 0.0, &mut seeded(1));
        net.biases = vec![0.3, -1.2];
        let x = raster(&[&[], &[]], 5);
        let y = raster(&[&[], &[]], 5);
        assert_eq!(net.membrane(1, 4, &x, &y).unwrap(), -1.2);
    }

    #[test]
    fn taps_start_at_lag_one() {
        let mut net = GlmNetwork::with_kernels(1, 0, 1, 6, vec![1.0, 0.5], vec![0.0]).unwrap();
        net.weights[(0, 0)] = 2.0;
        net.biases[0] = 0.25;
        let y = raster(&[&[]], 6);
        let x = raster(&[&[3]], 6);
        assert_eq!(net.membrane(0, 3, &x, &y).unwrap(), 0.25);
        assert_eq!(net.membrane(0, 4, &x, &y).unwrap(), 0.25 + 2.0);
        assert_eq!(net.membrane(0, 5, &x, &y).unwrap(), 0.25 + 1.0);
    }

    #[test]
    fn refractory_kernel_uses_own_history() {
        let net = GlmNetwork::new(0, 0, 1, 4).unwrap();
        let x = SpikeRaster::new(0, 4, 1.0).unwrap();
        let y = raster(&[&[1]], 4);
        assert_eq!(net.membrane(0, 2, &x, &y).unwrap(), -2.0);
        assert_eq!(net.membrane(0, 3, &x, &y).unwrap(), 0.0);
    }

    #[test]
    fn zero_network_log_prob() {
        let net = GlmNetwork::with_kernels(3, 1, 2, 7, vec![1.0], vec![0.0]).unwrap();
        let x = encode_rate(&[0.5; 3], 7, &mut seeded(2)).unwrap();
        let r = net.rollout(&x, &mut seeded(3)).unwrap();
        assert!((r.log_prob - 3.0 * 7.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn strongly_negative_bias_silences() {
        let mut net = GlmNetwork::new(2, 0, 3, 50).unwrap();
        net.biases = vec![-20.0; 3];
        let x = encode_rate(&[0.3, 0.3], 50, &mut seeded(2)).unwrap();
        for s in 0..20 {
            assert_eq!(net.rollout(&x, &mut seeded(s)).unwrap().output.spike_count(), 0);
        }
        assert!(sigmoid(-20.0) < 1e-8);
    }

    #[test]
    fn rollout_score_agrees_with_replay() {
        let mut net = GlmNetwork::new(3, 2, 2, 12).unwrap();
        net.randomize(0.8, -0.5, &mut seeded(4));
        let x = encode_rate(&[0.3; 3], 12, &mut seeded(5)).unwrap();
        let r = net.rollout(&x, &mut seeded(6)).unwrap();
        let (lp, e) = net.score(&x, &r.output).unwrap();
        assert!((lp - r.log_prob).abs() < 1e-12);
        assert_eq!(e, r.eligibility);
    }

    #[test]
    fn self_weights_stay_zero() {
        let mut net = GlmNetwork::new(1, 1, 1, 4).unwrap();
        net.randomize(1.0, 0.0, &mut seeded(0));
        let p: Vec<f64> = (0..net.n_params()).map(|i| i as f64 + 1.0).collect();
        net.set_params(&p).unwrap();
        assert_eq!(net.weights[(0, 1)], 0.0);
        assert_eq!(net.weights[(1, 2)], 0.0);
        let x = encode_rate(&[0.5], 4, &mut seeded(1)).unwrap();
        let r = net.rollout(&x, &mut seeded(2)).unwrap();
        assert_eq!(r.eligibility.weights[(0, 1)], 0.0);
        assert_eq!(r.eligibility.weights[(1, 2)], 0.0);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut net = GlmNetwork::new(2, 0, 1, 5).unwrap();
        net.randomize(0.5, 0.1, &mut seeded(0));
        let before = net.clone();
        let x = encode_rate(&[0.5, 0.5], 5, &mut seeded(1)).unwrap();
        let y = SpikeRaster::new(1, 5, 1.0).unwrap();
        let cfg = PsnnTrainConfig { lr: 0.0, epochs: 3, ..PsnnTrainConfig::default() };
        let rep = train_supervised(&mut net, &[(x, y)], &cfg).unwrap();
        assert_eq!(net, before);
        assert_eq!(rep.loss_curve.len(), 3);
    }

    #[test]
    fn non_finite_feedback_is_an_error() {
        let mut net = GlmNetwork::new(1, 0, 1, 3).unwrap();
        let x = encode_rate(&[0.5], 3, &mut seeded(1)).unwrap();
        let mut tr = Reinforce::new(0.1, BaselineMode::None, 0).unwrap();
        assert!(matches!(tr.step(&mut net, &[&x], |_, _| f64::NAN), Err(Error::NonFinite(_))));
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let mut net = GlmNetwork::new(1, 0, 1, 3).unwrap();
        assert!(matches!(train_supervised(&mut net, &[], &PsnnTrainConfig::default()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn band_task_helpers() {
        assert_eq!((band_label(0.2), band_label(0.5), band_label(0.7)), (0, 1, 0));
        assert_eq!(class_target(0, 6, 3).unwrap().events[0], vec![false; 6]);
        assert_eq!(class_target(1, 6, 3).unwrap().events[0], vec![false, false, false, true, true, true]);
    }
}
