//! Compressed sensing with a crossbar-resident measurement matrix.
//!
//! Compression is a single analog MVM. Recovery runs soft-thresholding AMP
//! in which every product with `M` and `M^T` is delegated to the same
//! crossbar tiles that performed the compression.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarConfig, ProgramStats, TiledMatrix};
use crate::devices::DeviceParams;
use crate::error::check_len;
use crate::linalg::{norm2, Matrix};
use crate::{Error, Result};

/// NMSE reported for an exact reconstruction.
pub const NMSE_FLOOR_DB: f64 = -300.0;

/// Headroom between the largest matrix entry and the crossbar's `w_max`.
const W_MAX_HEADROOM: f64 = 1.05;

/// Threshold multiplier `lambda_t` in `theta_t = lambda_t * ||z_t|| / sqrt(m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaSchedule {
    Constant { lambda: f64 },
    /// `max(floor, initial * decay^t)`.
    Geometric { initial: f64, decay: f64, floor: f64 },
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule::Constant { lambda: 1.5 }
    }
}

impl LambdaSchedule {
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            LambdaSchedule::Constant { lambda } => lambda,
            LambdaSchedule::Geometric { initial, decay, floor } => (initial * decay.powi(t as i32)).max(floor),
        }
    }
}

/// `"cs"` block of the experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsConfig {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub iters: usize,
    pub schedule: LambdaSchedule,
    /// Independent problems averaged by multi-seed experiments.
    pub seeds: usize,
}

impl Default for CsConfig {
    fn default() -> Self {
        Self { n: 256, m: 128, k: 10, iters: 50, schedule: LambdaSchedule::default(), seeds: 20 }
    }
}

#[derive(Debug, Clone)]
pub struct CsProblem {
    pub n: usize,
    pub m: usize,
    pub sparsity_k: usize,
    /// Crossbar copy of the measurement matrix.
    pub measurement: TiledMatrix,
    /// The float matrix that was programmed.
    pub matrix: Matrix,
    pub program_stats: ProgramStats,
}

impl CsProblem {
    /// Programs `matrix` (m x n) onto crossbar tiles.
    pub fn new<R: Rng + ?Sized>(
        matrix: Matrix,
        sparsity_k: usize,
        params: DeviceParams,
        xbar: &CrossbarConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let (m, n) = matrix.shape();
        if !(0 < m && m <= n) {
            return Err(Error::InvalidParam(format!("need 0 < m <= n, got m={m} n={n}")));
        }
        if sparsity_k > n {
            return Err(Error::InvalidParam(format!("sparsity {sparsity_k} exceeds n={n}")));
        }
        let w_max = matrix.max_abs().max(f64::MIN_POSITIVE) * W_MAX_HEADROOM;
        let mut measurement = TiledMatrix::new(m, n, xbar.tile_dim, params, w_max, xbar.v_read)?;
        let program_stats = measurement.program_matrix(&matrix, xbar.programming, rng)?;
        Ok(Self { n, m, sparsity_k, measurement, matrix, program_stats })
    }

    /// Gaussian sensing matrix with `N(0, 1/m)` entries.
    pub fn gaussian<R: Rng + ?Sized>(
        n: usize,
        m: usize,
        sparsity_k: usize,
        params: DeviceParams,
        xbar: &CrossbarConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if m == 0 || m >= n {
            return Err(Error::InvalidParam(format!("need 0 < m < n, got m={m} n={n}")));
        }
        let matrix = Matrix::gaussian(m, n, 1.0 / (m as f64).sqrt(), rng);
        Self::new(matrix, sparsity_k, params, xbar, rng)
    }

    /// One analog pass `y = M x`. Requires `|x_i| <= 1`.
    pub fn compress<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        check_len("signal", self.n, x.len())?;
        self.measurement.mvm(x, rng)
    }

    /// AMP recovery from `y`. When `x_true` is supplied the per-iteration
    /// NMSE is recorded.
    pub fn amp_recover<R: Rng + ?Sized>(
        &self,
        y: &[f64],
        iters: usize,
        schedule: LambdaSchedule,
        x_true: Option<&[f64]>,
        rng: &mut R,
    ) -> Result<RecoveryTrace> {
        check_len("measurements", self.m, y.len())?;
        if let Some(t) = x_true {
            check_len("ground truth", self.n, t.len())?;
        }
        if iters == 0 {
            return Err(Error::InvalidParam("iters must be >= 1".into()));
        }
        let m = self.m as f64;
        let mut x = vec![0.0; self.n];
        let mut z = y.to_vec();
        let mut trace = RecoveryTrace::default();
        for t in 0..iters {
            let mtz = self.measurement.mvm_transpose_scaled(&z, rng)?;
            let z_norm = norm2(&z);
            if !z_norm.is_finite() {
                return Err(Error::Divergence { iteration: t + 1 });
            }
            let theta = schedule.at(t) * z_norm / m.sqrt();
            let mut active = 0usize;
            for (xi, g) in x.iter_mut().zip(&mtz) {
                let r = *xi + g;
                *xi = soft_threshold(r, theta);
                if r.abs() > theta {
                    active += 1;
                }
            }
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence { iteration: t + 1 });
            }
            let mx = self.measurement.mvm_scaled(&x, rng)?;
            let onsager = active as f64 / m;
            for ((zi, yi), mxi) in z.iter_mut().zip(y).zip(&mx) {
                *zi = yi - mxi + onsager * *zi;
            }
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence { iteration: t + 1 });
            }
            if let Some(truth) = x_true {
                trace.nmse_db.push(nmse(truth, &x)?);
            }
            trace.estimates.push(x.clone());
        }
        trace.iterations_run = iters;
        Ok(trace)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RecoveryTrace {
    pub estimates: Vec<Vec<f64>>,
    /// Empty when no ground truth was supplied.
    pub nmse_db: Vec<f64>,
    pub iterations_run: usize,
}

impl RecoveryTrace {
    pub fn final_estimate(&self) -> Option<&[f64]> {
        self.estimates.last().map(Vec::as_slice)
    }

    pub fn final_nmse(&self) -> Option<f64> {
        self.nmse_db.last().copied()
    }
}

pub fn soft_threshold(r: f64, theta: f64) -> f64 {
    if r > theta {
        r - theta
    } else if r < -theta {
        r + theta
    } else {
        0.0
    }
}

/// `10 log10(||x_hat - x_true||^2 / ||x_true||^2)`, floored at [`NMSE_FLOOR_DB`].
pub fn nmse(x_true: &[f64], x_hat: &[f64]) -> Result<f64> {
    check_len("estimate", x_true.len(), x_hat.len())?;
    let denom: f64 = x_true.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(Error::Domain("NMSE undefined for an all-zero reference".into()));
    }
    let num: f64 = x_true.iter().zip(x_hat).map(|(a, b)| (a - b).powi(2)).sum();
    if num == 0.0 {
        return Ok(NMSE_FLOOR_DB);
    }
    Ok((10.0 * (num / denom).log10()).max(NMSE_FLOOR_DB))
}

/// `k`-sparse signal with Gaussian non-zeros, rescaled so `max |x_i| = 1`.
pub fn sparse_signal<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in sample(rng, n, k.min(n)).into_iter() {
        let v: f64 = StandardNormal.sample(rng);
        x[i] = v;
    }
    let peak = crate::linalg::max_abs(&x);
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v /= peak);
    }
    x
}

/// 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Parses binary PGM (`P5`, maxval <= 255).
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut token = || -> Result<String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Parse("truncated PGM header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        if token()? != "P5" {
            return Err(Error::Parse("only binary PGM (P5) is supported".into()));
        }
        let num = |s: String| s.parse::<usize>().map_err(|e| Error::Parse(format!("PGM header: {e}")));
        let width = num(token()?)?;
        let height = num(token()?)?;
        let maxval = num(token()?)?;
        if maxval == 0 || maxval > 255 {
            return Err(Error::Parse(format!("unsupported PGM maxval {maxval}")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        let start = pos + 1;
        let end = start + width * height;
        if end > bytes.len() {
            return Err(Error::Parse("PGM raster shorter than header claims".into()));
        }
        let scale = 255.0 / maxval as f64;
        let pixels = bytes[start..end]
            .iter()
            .map(|&p| (f64::from(p) * scale).round().min(255.0) as u8)
            .collect();
        Ok(Self { width, height, pixels })
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Result of block-wise image compression and recovery.
#[derive(Debug, Clone)]
pub struct ImageRecovery {
    pub image: GrayImage,
    /// Whole-image NMSE after each iteration.
    pub nmse_db: Vec<f64>,
}

/// Compresses the image in square blocks of `n` pixels (`n` must be a
/// perfect square) with the problem's matrix and recovers each block.
/// Partial edge blocks are zero-padded.
pub fn recover_image<R: Rng + ?Sized>(
    problem: &CsProblem,
    image: &GrayImage,
    iters: usize,
    schedule: LambdaSchedule,
    rng: &mut R,
) -> Result<ImageRecovery> {
    let side = (problem.n as f64).sqrt().round() as usize;
    if side * side != problem.n {
        return Err(Error::InvalidParam(format!("block size n={} is not a perfect square", problem.n)));
    }
    let truth: Vec<f64> = image.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let mut recon_per_iter = vec![vec![0.0; truth.len()]; iters];
    for by in (0..image.height).step_by(side) {
        for bx in (0..image.width).step_by(side) {
            let mut block = vec![0.0; problem.n];
            let mut coords = Vec::with_capacity(problem.n);
            for dy in 0..side {
                for dx in 0..side {
                    let (x, y) = (bx + dx, by + dy);
                    if x < image.width && y < image.height {
                        block[dy * side + dx] = truth[y * image.width + x];
                        coords.push(Some(y * image.width + x));
                    } else {
                        coords.push(None);
                    }
                }
            }
            let meas = problem.compress(&block, rng)?;
            let trace = problem.amp_recover(&meas, iters, schedule, None, rng)?;
            for (it, est) in trace.estimates.iter().enumerate() {
                for (v, c) in est.iter().zip(&coords) {
                    if let Some(i) = c {
                        recon_per_iter[it][*i] = *v;
                    }
                }
            }
        }
    }
    let nmse_db = recon_per_iter
        .iter()
        .map(|r| nmse(&truth, r))
        .collect::<Result<Vec<_>>>()?;
    let last = recon_per_iter.last().map(Vec::as_slice).unwrap_or(&[]);
    let pixels = last.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    Ok(ImageRecovery { image: GrayImage { width: image.width, height: image.height, pixels }, nmse_db })
}
