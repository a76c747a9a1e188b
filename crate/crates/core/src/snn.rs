//! Deterministic spiking networks.
//!
//! Leaky integrate-and-fire neurons, rate and Gaussian-receptive-field spike
//! encoders, a rectangular-window STDP rule, multi-memristive synapses with
//! round-robin arbitration and the crossbar spike-propagation path
//! `I_k = sum_j (G+_kj - G-_kj) V_j`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crossbar::TiledMatrix;
use crate::devices::{DeviceParams, DeviceState, Pulse};
use crate::error::check_len;
use crate::rng::substream;
use crate::{Error, Result};

/// Binary spike events, `events[unit][step]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeRaster {
    pub dt: f64,
    pub events: Vec<Vec<bool>>,
}

impl SpikeRaster {
    pub fn new(n_units: usize, n_steps: usize, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParam(format!("dt must be > 0, got {dt}")));
        }
        Ok(Self { dt, events: vec![vec![false; n_steps]; n_units] })
    }

    pub fn n_units(&self) -> usize {
        self.events.len()
    }

    pub fn n_steps(&self) -> usize {
        self.events.first().map_or(0, Vec::len)
    }

    pub fn spike_count(&self) -> usize {
        self.events.iter().flatten().filter(|&&e| e).count()
    }

    /// Units spiking at `step`.
    pub fn active_at(&self, step: usize) -> Vec<usize> {
        (0..self.n_units()).filter(|&u| self.events[u][step]).collect()
    }

    /// Step of the unit's first spike, if any.
    pub fn first_spike(&self, unit: usize) -> Option<usize> {
        self.events[unit].iter().position(|&e| e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifNeuron {
    pub v: f64,
    pub v_thresh: f64,
    pub v_reset: f64,
    /// Per-step decay of the membrane potential, in `[0, 1)`.
    pub leak_lambda: f64,
}

impl LifNeuron {
    pub fn new(v_thresh: f64, v_reset: f64, leak_lambda: f64) -> Result<Self> {
        if !(v_reset < v_thresh) || !(0.0..1.0).contains(&leak_lambda) {
            return Err(Error::InvalidParam("need v_reset < v_thresh and leak in [0, 1)".into()));
        }
        Ok(Self { v: v_reset, v_thresh, v_reset, leak_lambda })
    }

    /// `v <- lambda v + input`; spikes and resets when `v >= v_thresh`.
    pub fn step(&mut self, input: f64) -> bool {
        self.v = self.leak_lambda * self.v + input;
        if self.v >= self.v_thresh {
            self.v = self.v_reset;
            true
        } else {
            false
        }
    }
}

fn check_unit_interval(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(Error::Domain(format!("encoder value {v} outside [0, 1]"))),
        None => Ok(()),
    }
}

/// One unit per value, independent Bernoulli(value) spikes per step.
pub fn encode_rate<R: Rng + ?Sized>(values: &[f64], t_steps: usize, rng: &mut R) -> Result<SpikeRaster> {
    check_unit_interval(values)?;
    let mut r = SpikeRaster::new(values.len(), t_steps, 1.0)?;
    for (row, &v) in r.events.iter_mut().zip(values) {
        for e in row.iter_mut() {
            *e = rng.random::<f64>() < v;
        }
    }
    Ok(r)
}

/// Response below which a receptive field stays silent.
pub const GRF_CUTOFF: f64 = 0.05;

/// Gaussian receptive field time encoding. Value `k` drives units
/// `k * n_fields .. (k + 1) * n_fields`; field `i` (centre `i / (n_fields - 1)`)
/// fires once at step `round((1 - r_i) (delta_t - 1))` unless `r_i < GRF_CUTOFF`.
pub fn encode_grf(values: &[f64], n_fields: usize, delta_t: usize, sigma: f64) -> Result<SpikeRaster> {
    check_unit_interval(values)?;
    if n_fields < 2 || delta_t < 1 || !(sigma > 0.0) {
        return Err(Error::InvalidParam("need n_fields >= 2, delta_t >= 1, sigma > 0".into()));
    }
    let mut r = SpikeRaster::new(values.len() * n_fields, delta_t, 1.0)?;
    for (k, &v) in values.iter().enumerate() {
        for i in 0..n_fields {
            let c = i as f64 / (n_fields - 1) as f64;
            let resp = (-(v - c).powi(2) / (2.0 * sigma * sigma)).exp();
            if resp < GRF_CUTOFF {
                continue;
            }
            let step = ((1.0 - resp) * (delta_t - 1) as f64).round() as usize;
            r.events[k * n_fields + i][step] = true;
        }
    }
    Ok(r)
}

/// Crossbar spike propagation: a spike applies `v_read` to its column, so the
/// row currents (in weight units) are `sum_j W_kj s_j`.
pub fn propagate_spikes<R: Rng + ?Sized>(weights: &TiledMatrix, spikes: &[bool], rng: &mut R) -> Result<Vec<f64>> {
    let x: Vec<f64> = spikes.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
    weights.mvm(&x, rng)
}

/// Round-robin selector deciding which device of a synapse is programmed.
/// One arbiter is normally shared by a whole population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arbiter {
    counter: usize,
    n: usize,
}

impl Arbiter {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParam("arbiter needs N >= 1".into()));
        }
        Ok(Self { counter: 0, n })
    }

    pub fn counter(&self) -> usize {
        self.counter
    }

    /// Returns the current device index and advances the counter.
    pub fn next_device(&mut self) -> usize {
        let i = self.counter;
        self.counter = (self.counter + 1) % self.n;
        i
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Potentiate,
    Depress,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiMemristiveSynapse {
    pub devices: Vec<DeviceState>,
}

impl MultiMemristiveSynapse {
    pub fn new(n: usize, params: &DeviceParams) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParam("synapse needs N >= 1 devices".into()));
        }
        Ok(Self { devices: vec![DeviceState::new(params); n] })
    }

    pub fn n(&self) -> usize {
        self.devices.len()
    }

    /// Sum of independent noisy reads of every device.
    pub fn read<R: Rng + ?Sized>(&self, params: &DeviceParams, now: f64, rng: &mut R) -> Result<f64> {
        self.devices.iter().map(|d| d.read(params, now, rng)).sum()
    }

    /// Programs the device selected by `arbiter`: `pulses` SET pulses to
    /// potentiate, one RESET to depress.
    pub fn program<R: Rng + ?Sized>(
        &mut self,
        arbiter: &mut Arbiter,
        direction: Direction,
        pulses: u32,
        params: &DeviceParams,
        now: f64,
        rng: &mut R,
    ) -> Result<usize> {
        if pulses == 0 {
            return Err(Error::InvalidParam("pulses must be >= 1".into()));
        }
        let idx = arbiter.next_device() % self.n();
        let pulse = match direction {
            Direction::Potentiate => Pulse::set(pulses),
            Direction::Depress => Pulse::reset(),
        };
        self.devices[idx].apply_pulse(params, pulse, now, rng)?;
        Ok(idx)
    }

    /// Raises the arbiter-selected device by `dg` in expectation, with the
    /// pulse amplitude matched to the device's headroom.
    pub fn program_step<R: Rng + ?Sized>(
        &mut self,
        arbiter: &mut Arbiter,
        dg: f64,
        params: &DeviceParams,
        now: f64,
        rng: &mut R,
    ) -> Result<()> {
        let idx = arbiter.next_device() % self.n();
        let dev = &mut self.devices[idx];
        let g = dev.drifted(params, now)?;
        let room = params.g_max - g;
        if room <= 0.0 {
            return Ok(());
        }
        let amp = dg.min(room) / (params.set_step_fraction * room);
        dev.apply_pulse(params, Pulse::set_scaled(1, amp), now, rng)
    }
}

/// Rectangular-window STDP with pulse-count magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StdpRule {
    pub window_steps: usize,
    pub dw_plus: u32,
    pub dw_minus: u32,
}

impl Default for StdpRule {
    fn default() -> Self {
        Self { window_steps: 5, dw_plus: 1, dw_minus: 1 }
    }
}

/// Plasticity decisions taken at one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StdpEvents {
    pub potentiate: bool,
    pub depress: bool,
}

impl StdpRule {
    pub fn validate(&self) -> Result<()> {
        if self.window_steps == 0 {
            return Err(Error::InvalidParam("window_steps must be >= 1".into()));
        }
        Ok(())
    }

    /// Decisions at step `t`. A post spike at `t` potentiates when a pre spike
    /// fell in `(t - window, t]`. A pre spike at `s = t - window + 1` depresses
    /// once its window `[s, t]` has closed without a post spike.
    pub fn events(&self, pre: &[bool], post: &[bool], t: usize) -> StdpEvents {
        let w = self.window_steps;
        let lo = (t + 1).saturating_sub(w);
        let potentiate = self.dw_plus > 0 && post[t] && pre[lo..=t].iter().any(|&p| p);
        let depress = self.dw_minus > 0 && t + 1 >= w && pre[lo] && !post[lo..=t].iter().any(|&p| p);
        StdpEvents { potentiate, depress }
    }
}

/// Applies [`StdpRule::events`] at step `t` through [`MultiMemristiveSynapse::program`].
#[allow(clippy::too_many_arguments)]
pub fn stdp_update<R: Rng + ?Sized>(
    rule: &StdpRule,
    pre: &[bool],
    post: &[bool],
    t: usize,
    synapse: &mut MultiMemristiveSynapse,
    arbiter: &mut Arbiter,
    params: &DeviceParams,
    now: f64,
    rng: &mut R,
) -> Result<StdpEvents> {
    check_len("post raster", pre.len(), post.len())?;
    if t >= pre.len() {
        return Err(Error::InvalidParam(format!("step {t} outside raster of {} steps", pre.len())));
    }
    let ev = rule.events(pre, post, t);
    if ev.potentiate {
        synapse.program(arbiter, Direction::Potentiate, rule.dw_plus, params, now, rng)?;
    }
    if ev.depress {
        for _ in 0..rule.dw_minus {
            synapse.program(arbiter, Direction::Depress, 1, params, now, rng)?;
        }
    }
    Ok(ev)
}

/// Which counter picks the device to program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arbitration {
    /// One counter shared by every synapse.
    #[default]
    Global,
    PerSynapse,
}

/// `"snn"` block of the experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationConfig {
    pub n_synapses: usize,
    pub frac_correlated: f64,
    pub n_per_synapse: usize,
    /// Spike probability per step of every input.
    pub rate: f64,
    pub corr_c: f64,
    pub steps: usize,
    pub rule: StdpRule,
    pub arbitration: Arbitration,
    /// Weight change per STDP pulse as a fraction of the device window.
    pub unit_step: f64,
    pub initial_weight: f64,
    pub v_thresh: f64,
    pub leak_lambda: f64,
    /// Seconds per simulation step (drives drift).
    pub dt: f64,
    pub histogram_bins: usize,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self {
            n_synapses: 1000,
            frac_correlated: 0.1,
            n_per_synapse: 1,
            rate: 0.02,
            corr_c: 0.75,
            steps: 5000,
            rule: StdpRule::default(),
            arbitration: Arbitration::Global,
            unit_step: 2.5e-4,
            initial_weight: 0.5,
            v_thresh: 40.0,
            leak_lambda: 0.5,
            dt: 1e-3,
            histogram_bins: 20,
        }
    }
}

impl CorrelationConfig {
    pub fn validate(&self) -> Result<()> {
        self.rule.validate()?;
        let ok = self.n_synapses >= 2
            && self.frac_correlated > 0.0
            && self.frac_correlated < 1.0
            && self.n_per_synapse >= 1
            && self.rate > 0.0
            && self.rate <= 1.0
            && (0.0..=1.0).contains(&self.corr_c)
            && self.steps >= 1
            && self.unit_step > 0.0
            && (0.0..=1.0).contains(&self.initial_weight)
            && self.dt > 0.0
            && self.histogram_bins >= 1;
        if !ok {
            return Err(Error::InvalidParam("correlation experiment parameters out of range".into()));
        }
        let n_corr = self.n_correlated();
        if n_corr == 0 || n_corr == self.n_synapses {
            return Err(Error::InvalidParam("both synapse groups must be non-empty".into()));
        }
        Ok(())
    }

    pub fn n_correlated(&self) -> usize {
        (self.n_synapses as f64 * self.frac_correlated).round() as usize
    }
}

/// Poisson inputs where the first `n_corr` units copy a shared master train
/// with probability `sqrt(c)` and fill in independently to keep `rate`.
pub fn correlated_inputs<R: Rng + ?Sized>(
    n_units: usize,
    n_corr: usize,
    rate: f64,
    corr_c: f64,
    steps: usize,
    rng: &mut R,
) -> Result<SpikeRaster> {
    let mut r = SpikeRaster::new(n_units, steps, 1.0)?;
    let copy = corr_c.sqrt();
    let fill = if copy * rate >= 1.0 { 0.0 } else { rate * (1.0 - copy) / (1.0 - rate * copy) };
    for t in 0..steps {
        let master = rng.random::<f64>() < rate;
        for (u, row) in r.events.iter_mut().enumerate() {
            row[t] = if u < n_corr {
                let copied = master && rng.random::<f64>() < copy;
                copied || rng.random::<f64>() < fill
            } else {
                rng.random::<f64>() < rate
            };
        }
    }
    Ok(r)
}

/// Signed synapse: potentiation steps `plus`, depression steps `minus`.
#[derive(Debug, Clone, PartialEq)]
struct DifferentialSynapse {
    plus: MultiMemristiveSynapse,
    minus: MultiMemristiveSynapse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub correlated: Vec<u64>,
    pub uncorrelated: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub n_per_synapse: usize,
    pub mean_corr: f64,
    pub std_corr: f64,
    pub mean_unc: f64,
    pub std_unc: f64,
    /// `(mean_corr - mean_unc) / sqrt(std_corr^2 + std_unc^2)`.
    pub separation: f64,
    pub post_spikes: usize,
    pub potentiations: u64,
    pub depressions: u64,
    /// Final normalised weights, correlated group first.
    pub weights: Vec<f64>,
    pub histogram: Histogram,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

pub fn separation_score(corr: &[f64], unc: &[f64]) -> f64 {
    let (mc, sc) = mean_std(corr);
    let (mu, su) = mean_std(unc);
    let s = (sc * sc + su * su).sqrt();
    if s == 0.0 {
        if mc == mu {
            0.0
        } else {
            (mc - mu).signum() * f64::INFINITY
        }
    } else {
        (mc - mu) / s
    }
}

/// Temporal correlation detection with multi-memristive synapses.
///
/// One LIF neuron integrates `sum_i w_i s_i(t)` over all inputs, where
/// `w_i = (sum G+ - sum G-) / (N (g_max - g_min))` is read from the devices at
/// every spike. STDP decisions program one device of the signed group chosen
/// by the arbiter with a step of `N * unit_step` of the device window, so the
/// noiseless weight trajectory does not depend on `N`.
pub fn correlation_experiment(cfg: &CorrelationConfig, params: &DeviceParams, seed: u64) -> Result<SeparationReport> {
    cfg.validate()?;
    params.validate()?;
    let n = cfg.n_synapses;
    let n_corr = cfg.n_correlated();
    let big_n = cfg.n_per_synapse;
    let range = params.range();
    let mut in_rng = substream(seed, "snn/inputs");
    let mut dev_rng = substream(seed, "snn/devices");
    let inputs = correlated_inputs(n, n_corr, cfg.rate, cfg.corr_c, cfg.steps, &mut in_rng)?;

    let mut init = MultiMemristiveSynapse::new(big_n, params)?;
    for d in &mut init.devices {
        *d = DeviceState::with_conductance(params, params.g_min + cfg.initial_weight * range, 0.0);
    }
    let base = MultiMemristiveSynapse::new(big_n, params)?;
    let mut syn = vec![DifferentialSynapse { plus: init, minus: base }; n];
    let mut global = Arbiter::new(big_n)?;
    let mut local = vec![global; n];
    let dg = big_n as f64 * cfg.unit_step * range;
    let norm = big_n as f64 * range;

    let weight = |s: &DifferentialSynapse, now: f64, rng: &mut dyn rand::RngCore| -> Result<f64> {
        Ok((s.plus.read(params, now, rng)? - s.minus.read(params, now, rng)?) / norm)
    };

    let mut neuron = LifNeuron::new(cfg.v_thresh, 0.0, cfg.leak_lambda)?;
    let mut post = vec![false; cfg.steps];
    let (mut pot, mut dep) = (0u64, 0u64);
    let active: Vec<Vec<usize>> = (0..cfg.steps).map(|t| inputs.active_at(t)).collect();
    let w = cfg.rule.window_steps;
    for t in 0..cfg.steps {
        let now = t as f64 * cfg.dt;
        let mut drive = 0.0;
        for &i in &active[t] {
            drive += weight(&syn[i], now, &mut dev_rng)?;
        }
        post[t] = neuron.step(drive);
        let lo = (t + 1).saturating_sub(w);
        let mut candidates: Vec<usize> = active[lo..=t].iter().flatten().copied().collect();
        candidates.sort_unstable();
        candidates.dedup();
        for i in candidates {
            let ev = cfg.rule.events(&inputs.events[i], &post, t);
            let arb = match cfg.arbitration {
                Arbitration::Global => &mut global,
                Arbitration::PerSynapse => &mut local[i],
            };
            if ev.potentiate {
                for _ in 0..cfg.rule.dw_plus {
                    syn[i].plus.program_step(arb, dg, params, now, &mut dev_rng)?;
                }
                pot += 1;
            }
            if ev.depress {
                for _ in 0..cfg.rule.dw_minus {
                    syn[i].minus.program_step(arb, dg, params, now, &mut dev_rng)?;
                }
                dep += 1;
            }
        }
    }

    let end = cfg.steps as f64 * cfg.dt;
    let mut read_rng = substream(seed, "snn/final-read");
    let weights: Vec<f64> = syn.iter().map(|s| weight(s, end, &mut read_rng)).collect::<Result<_>>()?;
    let (corr, unc) = weights.split_at(n_corr);
    let (mean_corr, std_corr) = mean_std(corr);
    let (mean_unc, std_unc) = mean_std(unc);
    let histogram = histogram(corr, unc, cfg.histogram_bins);
    Ok(SeparationReport {
        n_per_synapse: big_n,
        mean_corr,
        std_corr,
        mean_unc,
        std_unc,
        separation: separation_score(corr, unc),
        post_spikes: post.iter().filter(|&&p| p).count(),
        potentiations: pot,
        depressions: dep,
        weights,
        histogram,
    })
}

fn histogram(corr: &[f64], unc: &[f64], bins: usize) -> Histogram {
    let lo = corr.iter().chain(unc).copied().fold(f64::INFINITY, f64::min);
    let hi = corr.iter().chain(unc).copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let count = |v: &[f64]| {
        let mut c = vec![0u64; bins];
        for x in v {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            c[b] += 1;
        }
        c
    };
    Histogram { edges, correlated: count(corr), uncorrelated: count(unc) }
}

/// Relative costs of the add-only spiking evaluation versus dense multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencyModel {
    pub c_add: f64,
    pub c_mul: f64,
    /// Spike probability per time step.
    pub p: f64,
    /// `T / dt`.
    pub ratio_t_dt: f64,
}

impl Default for EfficiencyModel {
    fn default() -> Self {
        Self { c_add: 1.0, c_mul: 4.0, p: 0.01, ratio_t_dt: 100.0 }
    }
}

impl EfficiencyModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.c_add > 0.0 && self.c_mul > 0.0 && (0.0..=1.0).contains(&self.p) && self.ratio_t_dt >= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam("need c_add, c_mul > 0, p in [0, 1], T/dt >= 1".into()))
        }
    }
}

/// `(c_add p T/dt < c_mul, c_mul - c_add p T/dt)`.
pub fn snn_efficiency_favorable(m: &EfficiencyModel) -> Result<(bool, f64)> {
    m.validate()?;
    let lhs = m.c_add * m.p * m.ratio_t_dt;
    Ok((lhs < m.c_mul, m.c_mul - lhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn lif_without_input_decays_silently() {
        let mut n = LifNeuron::new(1.0, 0.0, 0.8).unwrap();
        n.v = 0.9;
        for k in 1..50 {
            assert!(!n.step(0.0));
            assert!((n.v - 0.9 * 0.8f64.powi(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn lif_period_matches_geometric_sum() {
        let (lam, i, th): (f64, f64, f64) = (0.9, 0.3, 2.0);
        let k = (1..).find(|&k| i * (1.0 - lam.powi(k)) / (1.0 - lam) >= th).unwrap() as usize;
        let mut n = LifNeuron::new(th, 0.0, lam).unwrap();
        let spikes: Vec<usize> = (1..=5 * k).filter(|_| n.step(i)).collect();
        let expect: Vec<usize> = (1..=5).map(|j| j * k).collect();
        assert_eq!(spikes, expect);
    }

    #[test]
    fn lif_threshold_is_inclusive() {
        let mut n = LifNeuron::new(1.0, -0.5, 0.0).unwrap();
        assert!(n.step(1.0));
        assert_eq!(n.v, -0.5);
    }

    #[test]
    fn rate_encoder_extremes_and_mean() {
        let mut rng = seeded(1);
        let r = encode_rate(&[0.0, 1.0, 0.25], 10_000, &mut rng).unwrap();
        assert!(r.events[0].iter().all(|e| !e));
        assert!(r.events[1].iter().all(|&e| e));
        let rate = r.events[2].iter().filter(|&&e| e).count() as f64 / 1e4;
        assert!((rate - 0.25).abs() <= 0.015);
        assert!(encode_rate(&[1.2], 3, &mut rng).is_err());
    }

    #[test]
    fn grf_hand_example() {
        let r = encode_grf(&[0.5], 3, 10, 0.5).unwrap();
        assert_eq!((0..3).map(|u| r.first_spike(u)).collect::<Vec<_>>(), vec![Some(4), Some(0), Some(4)]);
        assert_eq!(r.spike_count(), 3);
    }

    #[test]
    fn grf_centre_fires_first_and_far_values_are_silent() {
        let r = encode_grf(&[0.25], 5, 20, 0.1).unwrap();
        assert_eq!(r.first_spike(1), Some(0));
        let silent = encode_grf(&[0.5], 2, 20, 0.05).unwrap();
        assert_eq!(silent.spike_count(), 0);
        assert!(encode_grf(&[-0.1], 3, 10, 0.5).is_err());
    }

    #[test]
    fn synapse_reads_sum_devices() {
        let p = DeviceParams::ideal();
        let s = MultiMemristiveSynapse::new(7, &p).unwrap();
        assert!((s.read(&p, 0.0, &mut seeded(0)).unwrap() - 7.0 * p.g_min).abs() < 1e-12);
        let noisy = DeviceParams { read_noise_rel: 0.05, ..p };
        let mut s = MultiMemristiveSynapse::new(7, &noisy).unwrap();
        for (i, d) in s.devices.iter_mut().enumerate() {
            d.g_programmed = 1.0 + i as f64;
        }
        let total = s.read(&noisy, 0.0, &mut seeded(3)).unwrap();
        let mut rng = seeded(3);
        let want: f64 = s.devices.iter().map(|d| d.read(&noisy, 0.0, &mut rng).unwrap()).sum();
        assert_eq!(total, want);
    }

    #[test]
    fn round_robin_programs_each_device_equally() {
        let p = DeviceParams::ideal();
        let mut s = MultiMemristiveSynapse::new(3, &p).unwrap();
        let mut arb = Arbiter::new(3).unwrap();
        let mut hits = [0; 3];
        for _ in 0..6 {
            hits[s.program(&mut arb, Direction::Potentiate, 1, &p, 0.0, &mut seeded(0)).unwrap()] += 1;
        }
        assert_eq!(hits, [2, 2, 2]);
        let g1 = p.g_min + p.set_step_fraction * p.range();
        let g2 = g1 + p.set_step_fraction * (p.g_max - g1);
        assert!(s.devices.iter().all(|d| (d.g_programmed - g2).abs() < 1e-12));
        s.program(&mut arb, Direction::Depress, 1, &p, 0.0, &mut seeded(0)).unwrap();
        assert_eq!(s.devices[0].g_programmed, p.g_min);
    }

    #[test]
    fn single_device_synapse_always_uses_device_zero() {
        let p = DeviceParams::ideal();
        let mut s = MultiMemristiveSynapse::new(1, &p).unwrap();
        let mut arb = Arbiter::new(1).unwrap();
        for _ in 0..4 {
            assert_eq!(s.program(&mut arb, Direction::Potentiate, 2, &p, 0.0, &mut seeded(0)).unwrap(), 0);
        }
    }

    fn raster(len: usize, at: &[usize]) -> Vec<bool> {
        (0..len).map(|t| at.contains(&t)).collect()
    }

    #[test]
    fn stdp_examples() {
        let rule = StdpRule { window_steps: 4, dw_plus: 1, dw_minus: 1 };
        let pre = raster(20, &[5]);
        let post = raster(20, &[7]);
        assert!(rule.events(&pre, &post, 7).potentiate);
        assert!((0..20).all(|t| !rule.events(&pre, &post, t).depress));

        let pre = raster(20, &[9]);
        let none = raster(20, &[]);
        let dep: Vec<usize> = (0..20).filter(|&t| rule.events(&pre, &none, t).depress).collect();
        assert_eq!(dep, vec![12]);
        assert!((0..20).all(|t| !rule.events(&pre, &none, t).potentiate));

        assert!((0..20).all(|t| rule.events(&none, &none, t) == StdpEvents::default()));
    }

    #[test]
    fn stdp_update_without_spikes_leaves_synapse() {
        let p = DeviceParams::ideal();
        let mut s = MultiMemristiveSynapse::new(2, &p).unwrap();
        s.devices[1].g_programmed = 5.0;
        let before = s.clone();
        let mut arb = Arbiter::new(2).unwrap();
        let quiet = vec![false; 10];
        for t in 0..10 {
            stdp_update(&StdpRule::default(), &quiet, &quiet, t, &mut s, &mut arb, &p, 0.0, &mut seeded(0)).unwrap();
        }
        assert_eq!(s, before);
        assert_eq!(arb.counter(), 0);
    }

    #[test]
    fn efficiency_worked_examples() {
        let m = EfficiencyModel { c_add: 1.0, c_mul: 4.0, p: 0.01, ratio_t_dt: 100.0 };
        assert_eq!(snn_efficiency_favorable(&m).unwrap(), (true, 3.0));
        let m = EfficiencyModel { c_add: 1.0, c_mul: 4.0, p: 1.0, ratio_t_dt: 4.0 };
        assert_eq!(snn_efficiency_favorable(&m).unwrap(), (false, 0.0));
        let m = EfficiencyModel { c_add: 2.0, c_mul: 3.0, p: 0.0, ratio_t_dt: 50.0 };
        assert_eq!(snn_efficiency_favorable(&m).unwrap(), (true, 3.0));
        assert!(snn_efficiency_favorable(&EfficiencyModel { p: 1.5, ..m }).is_err());
    }

    #[test]
    fn spike_propagation_sums_active_columns() {
        use crate::crossbar::{CrossbarConfig, ProgrammingMode};
        use crate::linalg::Matrix;
        let w = Matrix::from_rows(&[vec![0.5, -0.25, 0.1], vec![-1.0, 0.75, 0.0]]).unwrap();
        let cfg = CrossbarConfig { programming: ProgrammingMode::SingleShot, ..CrossbarConfig::default() };
        let mut tm = TiledMatrix::from_config(2, 3, DeviceParams::ideal(), &cfg).unwrap();
        tm.program_matrix(&w, cfg.programming, &mut seeded(0)).unwrap();
        let i = propagate_spikes(&tm, &[true, false, true], &mut seeded(1)).unwrap();
        assert!((i[0] - 0.6).abs() < 1e-12 && (i[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlated_inputs_keep_rate() {
        let steps = 20_000;
        let r = correlated_inputs(200, 100, 0.05, 0.75, steps, &mut seeded(2)).unwrap();
        let rate = |u: std::ops::Range<usize>| {
            let n = u.len() as f64;
            u.map(|i| r.events[i].iter().filter(|&&e| e).count()).sum::<usize>() as f64 / (n * steps as f64)
        };
        // The correlated group inherits the master train's count fluctuation.
        assert!((rate(0..100) - 0.05).abs() < 0.004);
        assert!((rate(100..200) - 0.05).abs() < 0.001);
    }
}
