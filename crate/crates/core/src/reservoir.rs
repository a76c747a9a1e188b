//! Echo-state reservoirs with a closed-form linear readout.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::devices::{DeviceParams, VolatileDeviceState};
use crate::error::check_len;
use crate::linalg::Matrix;
use crate::rng::substream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    #[default]
    Tanh,
    Volatile,
}

/// Parameters of the volatile-device nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolatileNodeConfig {
    pub decay_tau: f64,
    pub drive_gain: f64,
    pub dt: f64,
}

impl Default for VolatileNodeConfig {
    fn default() -> Self {
        Self { decay_tau: 5.0, drive_gain: 1.0, dt: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirConfig {
    pub n_nodes: usize,
    pub n_inputs: usize,
    pub connectivity: f64,
    pub rho: f64,
    pub leak: f64,
    pub input_scale: f64,
    pub node_kind: NodeKind,
    pub volatile: VolatileNodeConfig,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            n_nodes: 200,
            n_inputs: 1,
            connectivity: 0.1,
            rho: 0.9,
            leak: 1.0,
            input_scale: 0.5,
            node_kind: NodeKind::Tanh,
            volatile: VolatileNodeConfig::default(),
        }
    }
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 || self.n_inputs == 0 {
            return Err(Error::InvalidParam("need n_nodes >= 1 and n_inputs >= 1".into()));
        }
        if !(self.connectivity > 0.0 && self.connectivity <= 1.0) {
            return Err(Error::InvalidParam(format!("connectivity must be in (0, 1], got {}", self.connectivity)));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParam(format!("rho must be > 0, got {}", self.rho)));
        }
        if !(self.leak > 0.0 && self.leak <= 1.0) {
            return Err(Error::InvalidParam(format!("leak must be in (0, 1], got {}", self.leak)));
        }
        if !(self.input_scale >= 0.0) {
            return Err(Error::InvalidParam("input_scale must be >= 0".into()));
        }
        let v = self.volatile;
        if !(v.decay_tau > 0.0 && v.dt > 0.0 && v.drive_gain >= 0.0) {
            return Err(Error::InvalidParam("volatile nodes need decay_tau > 0, dt > 0, drive_gain >= 0".into()));
        }
        Ok(())
    }
}

fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    if m.rows() != m.cols() {
        return Err(Error::Dimension { what: "square matrix", expected: m.rows(), got: m.cols() });
    }
    if m.rows() == 0 {
        return Ok(0.0);
    }
    let ev = to_dmatrix(m).complex_eigenvalues();
    Ok(ev.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Fixed random recurrent network. The weights are private so they cannot
/// change after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    cfg: ReservoirConfig,
    w_in: Matrix,
    w_rec: Matrix,
    device: DeviceParams,
}

impl Reservoir {
    /// Sparse Gaussian recurrent weights rescaled to spectral radius `rho`,
    /// uniform input weights in `[-input_scale, input_scale]`.
    pub fn new<R: Rng + ?Sized>(cfg: &ReservoirConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_nodes;
        let w_in = Matrix::uniform(n, cfg.n_inputs, cfg.input_scale, rng);
        for _ in 0..16 {
            let raw = Matrix::from_fn(n, n, |_, _| {
                if rng.random::<f64>() < cfg.connectivity {
                    rng.sample::<f64, _>(rand_distr::StandardNormal)
                } else {
                    0.0
                }
            });
            let r = spectral_radius(&raw)?;
            if r > 1e-9 {
                let s = cfg.rho / r;
                let w_rec = Matrix::from_fn(n, n, |i, j| raw[(i, j)] * s);
                return Ok(Self { cfg: cfg.clone(), w_in, w_rec, device: DeviceParams::ideal() });
            }
        }
        Err(Error::Singular("recurrent matrix kept drawing a zero spectrum; raise connectivity".into()))
    }

    /// Builds a reservoir from explicit weights, rescaling `w_rec` to `cfg.rho`
    /// unless it is all zero.
    pub fn from_weights(cfg: &ReservoirConfig, w_in: Matrix, w_rec: Matrix) -> Result<Self> {
        cfg.validate()?;
        check_len("w_in rows", cfg.n_nodes, w_in.rows())?;
        check_len("w_in cols", cfg.n_inputs, w_in.cols())?;
        check_len("w_rec rows", cfg.n_nodes, w_rec.rows())?;
        check_len("w_rec cols", cfg.n_nodes, w_rec.cols())?;
        let r = spectral_radius(&w_rec)?;
        let w_rec = if r > 0.0 { Matrix::from_fn(cfg.n_nodes, cfg.n_nodes, |i, j| w_rec[(i, j)] * cfg.rho / r) } else { w_rec };
        Ok(Self { cfg: cfg.clone(), w_in, w_rec, device: DeviceParams::ideal() })
    }

    pub fn config(&self) -> &ReservoirConfig {
        &self.cfg
    }

    pub fn w_in(&self) -> &Matrix {
        &self.w_in
    }

    pub fn w_rec(&self) -> &Matrix {
        &self.w_rec
    }

    pub fn n_nodes(&self) -> usize {
        self.cfg.n_nodes
    }

    /// One update. Tanh nodes: `(1-a) r + a tanh(W r + W_in x)`. Volatile
    /// nodes: `r` is read as normalized conductance and each device integrates
    /// its drive for one step.
    pub fn step(&self, r: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        check_len("state", self.cfg.n_nodes, r.len())?;
        let mut drive = self.w_rec.matvec(r)?;
        for (d, e) in drive.iter_mut().zip(self.w_in.matvec(x)?) {
            *d += e;
        }
        match self.cfg.node_kind {
            NodeKind::Tanh => {
                let a = self.cfg.leak;
                Ok(r.iter().zip(&drive).map(|(ri, d)| (1.0 - a) * ri + a * d.tanh()).collect())
            }
            NodeKind::Volatile => {
                let v = self.cfg.volatile;
                r.iter()
                    .zip(&drive)
                    .map(|(ri, d)| {
                        let mut cell = VolatileDeviceState::new(self.device, v.decay_tau, v.drive_gain)?;
                        cell.g = self.device.clamp(self.device.g_min + ri.clamp(0.0, 1.0) * self.device.range());
                        cell.step(*d, v.dt)?;
                        Ok(cell.normalized())
                    })
                    .collect()
            }
        }
    }

    /// Runs from `r0` over `inputs` and returns every state.
    pub fn run(&self, r0: &[f64], inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut r = r0.to_vec();
        let mut out = Vec::with_capacity(inputs.len());
        for x in inputs {
            r = self.step(&r, x)?;
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("reservoir state".into()));
            }
            out.push(r.clone());
        }
        Ok(out)
    }

    /// States from the zero state with the first `washout` dropped.
    pub fn collect_states(&self, inputs: &[Vec<f64>], washout: usize) -> Result<Matrix> {
        if washout >= inputs.len() {
            return Err(Error::InvalidParam(format!("washout {washout} must be below sequence length {}", inputs.len())));
        }
        let states = self.run(&vec![0.0; self.cfg.n_nodes], inputs)?;
        Matrix::from_rows(&states[washout..])
    }
}

/// Linear map from `[state, 1]` to outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    /// `n_out x (n_features + 1)`, the last column is the bias.
    pub w_out: Matrix,
    pub ridge_lambda: f64,
}

impl Readout {
    pub fn apply(&self, features: &[f64]) -> Result<Vec<f64>> {
        check_len("features", self.w_out.cols() - 1, features.len())?;
        Ok((0..self.w_out.rows())
            .map(|o| {
                let row = self.w_out.row(o);
                row[..features.len()].iter().zip(features).map(|(w, s)| w * s).sum::<f64>() + row[features.len()]
            })
            .collect())
    }

    /// `sum ||y - W s||^2 + lambda ||W||^2` over the rows.
    pub fn ridge_loss(&self, states: &Matrix, targets: &Matrix) -> Result<f64> {
        let mut loss = 0.0;
        for t in 0..states.rows() {
            let y = self.apply(states.row(t))?;
            loss += y.iter().zip(targets.row(t)).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        let reg: f64 = self.w_out.as_slice().iter().map(|w| w * w).sum();
        Ok(loss + self.ridge_lambda * reg)
    }
}

fn with_bias(states: &Matrix) -> DMatrix<f64> {
    let (rows, cols) = states.shape();
    DMatrix::from_fn(rows, cols + 1, |r, c| if c < cols { states[(r, c)] } else { 1.0 })
}

/// Ridge regression `W = (S^T S + lambda I)^-1 S^T Y` with a bias column in `S`.
/// `lambda = 0` is ordinary least squares and fails on rank-deficient `S`.
pub fn fit_readout(states: &Matrix, targets: &Matrix, ridge_lambda: f64) -> Result<Readout> {
    check_len("target rows", states.rows(), targets.rows())?;
    if states.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(ridge_lambda >= 0.0 && ridge_lambda.is_finite()) {
        return Err(Error::InvalidParam(format!("ridge_lambda must be >= 0, got {ridge_lambda}")));
    }
    let s = with_bias(states);
    let y = to_dmatrix(targets);
    let w = if ridge_lambda > 0.0 {
        let mut a = s.transpose() * &s;
        for i in 0..a.nrows() {
            a[(i, i)] += ridge_lambda;
        }
        let chol = a.cholesky().ok_or_else(|| Error::Singular("ridge normal equations not positive definite".into()))?;
        chol.solve(&(s.transpose() * &y))
    } else {
        let (rows, cols) = s.shape();
        let svd = s.svd(true, true);
        let smax = svd.singular_values.max();
        let tol = smax * 1e-12 * (rows.max(cols) as f64);
        if svd.singular_values.len() < cols || svd.singular_values.min() <= tol {
            return Err(Error::Singular("state matrix is rank deficient; use ridge_lambda > 0".into()));
        }
        svd.solve(&y, tol).map_err(|e| Error::Singular(e.to_string()))?
    };
    let w_t = w.transpose();
    let w_out = Matrix::from_fn(w_t.nrows(), w_t.ncols(), |r, c| w_t[(r, c)]);
    if w_out.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("readout weights".into()));
    }
    Ok(Readout { w_out, ridge_lambda })
}

/// Runs the reservoir from the zero state and applies the readout at every step.
pub fn predict(res: &Reservoir, readout: &Readout, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_len("readout features", res.n_nodes() + 1, readout.w_out.cols())?;
    res.run(&vec![0.0; res.n_nodes()], inputs)?.iter().map(|r| readout.apply(r)).collect()
}

/// NARMA-10 with `u ~ U[0, 0.5]`:
/// `y(t+1) = 0.3 y(t) + 0.05 y(t) sum_{i<10} y(t-i) + 1.5 u(t-9) u(t) + 0.1`.
/// Returns `(u, y)` where `y[t]` is the target for input history `u[..=t]`.
pub fn narma10<R: Rng + ?Sized>(len: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let u: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..0.5)).collect();
    let mut y = vec![0.0; len + 1];
    for t in 0..len {
        let hist: f64 = (0..10).filter(|&i| i <= t).map(|i| y[t - i]).sum();
        let u_lag = if t >= 9 { u[t - 9] } else { 0.0 };
        y[t + 1] = 0.3 * y[t] + 0.05 * y[t] * hist + 1.5 * u_lag * u[t] + 0.1;
    }
    (u, y[1..].to_vec())
}

/// Root-mean-square error over the target standard deviation.
pub fn nrmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_len("prediction", target.len(), pred.len())?;
    if target.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = target.len() as f64;
    let mean = target.iter().sum::<f64>() / n;
    let var = target.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    let mse = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(Error::Domain("target has zero variance".into()));
    }
    Ok((mse / var).sqrt())
}

/// `[u(t), u(t-1), ..., u(t-lags+1)]` with zeros before the start.
pub fn lagged(u: &[f64], lags: usize) -> Result<Matrix> {
    Ok(Matrix::from_fn(u.len(), lags, |t, l| if l <= t { u[t - l] } else { 0.0 }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NarmaConfig {
    pub reservoir: ReservoirConfig,
    pub train_len: usize,
    pub test_len: usize,
    pub washout: usize,
    pub ridge_lambda: f64,
    pub linear_lags: usize,
}

impl Default for NarmaConfig {
    fn default() -> Self {
        Self {
            reservoir: ReservoirConfig::default(),
            train_len: 2000,
            test_len: 1000,
            washout: 100,
            ridge_lambda: 1e-6,
            linear_lags: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarmaReport {
    pub node_kind: NodeKind,
    pub n_nodes: usize,
    pub rho: f64,
    pub train_nrmse: f64,
    pub test_nrmse: f64,
    pub linear_test_nrmse: f64,
    /// First 200 test steps.
    pub test_target: Vec<f64>,
    pub test_prediction: Vec<f64>,
}

/// Trains the readout on NARMA-10 and compares with a ridge regression on
/// the last `linear_lags` raw inputs.
pub fn narma_benchmark(cfg: &NarmaConfig, seed: u64) -> Result<NarmaReport> {
    if cfg.washout >= cfg.train_len || cfg.test_len == 0 {
        return Err(Error::InvalidParam("need washout < train_len and test_len >= 1".into()));
    }
    let res = Reservoir::new(&cfg.reservoir, &mut substream(seed, "reservoir/weights"))?;
    let total = cfg.train_len + cfg.test_len;
    let (u, y) = narma10(total, &mut substream(seed, "reservoir/narma"));
    let inputs: Vec<Vec<f64>> = u.iter().map(|&v| vec![v]).collect();
    let states = res.run(&vec![0.0; res.n_nodes()], &inputs)?;
    let (w, n) = (cfg.washout, cfg.train_len);
    let col = |v: &[f64]| Matrix::from_vec(v.len(), 1, v.to_vec());

    let train_states = Matrix::from_rows(&states[w..n])?;
    let readout = fit_readout(&train_states, &col(&y[w..n])?, cfg.ridge_lambda)?;
    let out = |rows: &[Vec<f64>]| -> Result<Vec<f64>> { rows.iter().map(|r| Ok(readout.apply(r)?[0])).collect() };
    let train_nrmse = nrmse(&out(&states[w..n])?, &y[w..n])?;
    let test_pred = out(&states[n..])?;
    let test_nrmse = nrmse(&test_pred, &y[n..])?;

    let lags = lagged(&u, cfg.linear_lags.max(1))?;
    let lag_rows = |a: usize, b: usize| Matrix::from_rows(&(a..b).map(|t| lags.row(t).to_vec()).collect::<Vec<_>>());
    let lin = fit_readout(&lag_rows(w, n)?, &col(&y[w..n])?, cfg.ridge_lambda)?;
    let lin_pred: Vec<f64> = (n..total).map(|t| Ok(lin.apply(lags.row(t))?[0])).collect::<Result<_>>()?;
    let linear_test_nrmse = nrmse(&lin_pred, &y[n..])?;

    let keep = cfg.test_len.min(200);
    Ok(NarmaReport {
        node_kind: cfg.reservoir.node_kind,
        n_nodes: cfg.reservoir.n_nodes,
        rho: cfg.reservoir.rho,
        train_nrmse,
        test_nrmse,
        linear_test_nrmse,
        test_target: y[n..n + keep].to_vec(),
        test_prediction: test_pred[..keep].to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoStateCheck {
    pub rho: f64,
    pub steps: usize,
    pub initial_distance: f64,
    pub final_distance: f64,
    pub converged: bool,
}

/// Drives two copies from different random states with the same NARMA input
/// and reports their distance after `steps`.
pub fn echo_state_check(res: &Reservoir, steps: usize, seed: u64) -> Result<EchoStateCheck> {
    let n = res.n_nodes();
    let mut rng = substream(seed, "reservoir/esp");
    let lo = if res.config().node_kind == NodeKind::Volatile { 0.0 } else { -1.0 };
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(lo..1.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(lo..1.0)).collect();
    let (u, _) = narma10(steps, &mut rng);
    let inputs: Vec<Vec<f64>> = u.iter().map(|&v| vec![v; res.config().n_inputs]).collect();
    let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let ra = res.run(&a, &inputs)?;
    let rb = res.run(&b, &inputs)?;
    let final_distance = match (ra.last(), rb.last()) {
        (Some(x), Some(y)) => dist(x, y),
        _ => dist(&a, &b),
    };
    Ok(EchoStateCheck {
        rho: res.config().rho,
        steps,
        initial_distance: dist(&a, &b),
        final_distance,
        converged: final_distance < 1e-6,
    })
}
