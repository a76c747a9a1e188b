//! Differential crossbar arrays.
//!
//! Each signed weight is held by a device pair `(G+, G-)`. A non-negative
//! weight `w` maps to `G+ = g_min + (w / w_max) * (g_max - g_min)` with `G-`
//! parked at `g_min`; negative weights swap the roles. An MVM applies
//! `V_j = x_j * v_read` to the columns, sums `I_k = sum_j (G+_kj - G-_kj) V_j`
//! along each row and rescales the currents back to weight units.
//!
//! Matrices larger than [`MAX_DIM`] are split over a [`TiledMatrix`] whose
//! partial products are summed digitally.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::devices::{DeviceParams, DeviceState, Pulse};
use crate::error::check_len;
use crate::linalg::{max_abs, Matrix};
use crate::{Error, Result};

/// Largest crossbar edge that can be operated reliably.
pub const MAX_DIM: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ProgrammingMode {
    /// RESET followed by the open-loop SET train predicted by the device model.
    SingleShot,
    /// Closed-loop program-and-verify; `tol` is a fraction of `g_max - g_min`.
    Iterative { tol: f64, max_iter: u32 },
}

impl Default for ProgrammingMode {
    fn default() -> Self {
        ProgrammingMode::Iterative { tol: 0.005, max_iter: 200 }
    }
}

/// `"crossbar"` block of the experiment config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossbarConfig {
    pub tile_dim: usize,
    pub v_read: f64,
    pub w_max: f64,
    pub programming: ProgrammingMode,
}

impl Default for CrossbarConfig {
    fn default() -> Self {
        Self { tile_dim: 256, v_read: 0.2, w_max: 1.0, programming: ProgrammingMode::default() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProgramStats {
    pub pulses: u64,
    pub unconverged: u64,
}

impl std::ops::AddAssign for ProgramStats {
    fn add_assign(&mut self, o: Self) {
        self.pulses += o.pulses;
        self.unconverged += o.unconverged;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NudgeOutcome {
    pub pulses: u64,
    /// The target device ran out of headroom and the pair was refreshed.
    pub refreshed: bool,
    /// The requested weight lay beyond `±w_max` and was clipped.
    pub clipped: bool,
}

#[derive(Debug, Clone)]
pub struct CrossbarArray {
    rows: usize,
    cols: usize,
    plus: Vec<DeviceState>,
    minus: Vec<DeviceState>,
    params: DeviceParams,
    w_max: f64,
    v_read: f64,
    now: f64,
}

impl CrossbarArray {
    /// An array with every device RESET to `g_min` at time zero.
    pub fn new(rows: usize, cols: usize, params: DeviceParams, w_max: f64, v_read: f64) -> Result<Self> {
        if rows == 0 || cols == 0 || rows > MAX_DIM || cols > MAX_DIM {
            return Err(Error::InvalidParam(format!(
                "crossbar shape {rows}x{cols} outside 1..={MAX_DIM}"
            )));
        }
        if !(w_max > 0.0) || !(v_read > 0.0) {
            return Err(Error::InvalidParam("w_max and v_read must be > 0".into()));
        }
        params.validate()?;
        let cell = DeviceState::new(&params);
        Ok(Self {
            rows,
            cols,
            plus: vec![cell; rows * cols],
            minus: vec![cell; rows * cols],
            params,
            w_max,
            v_read,
            now: 0.0,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn params(&self) -> &DeviceParams {
        &self.params
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn pair(&self, r: usize, c: usize) -> (DeviceState, DeviceState) {
        let i = r * self.cols + c;
        (self.plus[i], self.minus[i])
    }

    /// Advances the read clock; conductances are untouched.
    pub fn advance_time(&mut self, dt: f64) -> Result<()> {
        if !(dt >= 0.0) {
            return Err(Error::InvalidParam(format!("dt must be >= 0, got {dt}")));
        }
        self.now += dt;
        Ok(())
    }

    fn target_pair(&self, w: f64) -> (f64, f64) {
        let g = self.params.g_min + (w.abs() / self.w_max) * self.params.range();
        let g = self.params.clamp(g);
        if w >= 0.0 {
            (g, self.params.g_min)
        } else {
            (self.params.g_min, g)
        }
    }

    fn program_device<R: Rng + ?Sized>(
        params: &DeviceParams,
        dev: &mut DeviceState,
        target: f64,
        mode: ProgrammingMode,
        now: f64,
        rng: &mut R,
    ) -> Result<ProgramStats> {
        match mode {
            ProgrammingMode::SingleShot => {
                let pulses = dev.program_open_loop(params, target, now, rng)?;
                Ok(ProgramStats { pulses: u64::from(pulses), unconverged: 0 })
            }
            ProgrammingMode::Iterative { tol, max_iter } => {
                let out = dev.program_iterative(params, target, tol * params.range(), max_iter, now, rng)?;
                Ok(ProgramStats {
                    pulses: u64::from(out.iters.saturating_sub(1)),
                    unconverged: u64::from(!out.converged),
                })
            }
        }
    }

    fn program_pair<R: Rng + ?Sized>(
        &mut self,
        idx: usize,
        w: f64,
        mode: ProgrammingMode,
        rng: &mut R,
    ) -> Result<ProgramStats> {
        let (gp, gm) = self.target_pair(w);
        let mut stats = Self::program_device(&self.params, &mut self.plus[idx], gp, mode, self.now, rng)?;
        stats += Self::program_device(&self.params, &mut self.minus[idx], gm, mode, self.now, rng)?;
        Ok(stats)
    }

    /// Programs every pair to encode `a` at the current time.
    pub fn program_matrix<R: Rng + ?Sized>(
        &mut self,
        a: &Matrix,
        mode: ProgrammingMode,
        rng: &mut R,
    ) -> Result<ProgramStats> {
        check_len("matrix rows", self.rows, a.rows())?;
        check_len("matrix cols", self.cols, a.cols())?;
        if let Some(&value) = a.as_slice().iter().find(|v| v.abs() > self.w_max || !v.is_finite()) {
            return Err(Error::Range { value, w_max: self.w_max });
        }
        let mut stats = ProgramStats::default();
        for (idx, &w) in a.as_slice().iter().enumerate() {
            stats += self.program_pair(idx, w, mode, rng)?;
        }
        Ok(stats)
    }

    /// Re-programs one pair to `w`, clipped to `±w_max`.
    pub fn reprogram_pair<R: Rng + ?Sized>(
        &mut self,
        r: usize,
        c: usize,
        w: f64,
        mode: ProgrammingMode,
        rng: &mut R,
    ) -> Result<ProgramStats> {
        let w = w.clamp(-self.w_max, self.w_max);
        self.program_pair(r * self.cols + c, w, mode, rng)
    }

    /// Weights implied by the programmed conductances (no drift, no noise).
    pub fn decoded_weights(&self) -> Matrix {
        let scale = self.w_max / self.params.range();
        Matrix::from_fn(self.rows, self.cols, |r, c| {
            let (p, m) = self.pair(r, c);
            (p.g_programmed - m.g_programmed) * scale
        })
    }

    pub fn decoded_weight(&self, r: usize, c: usize) -> f64 {
        let (p, m) = self.pair(r, c);
        (p.g_programmed - m.g_programmed) * self.w_max / self.params.range()
    }

    fn current_scale(&self) -> f64 {
        self.w_max / (self.v_read * self.params.range())
    }

    /// Analog `A x`. Inputs must satisfy `|x_j| <= 1`.
    pub fn mvm<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        check_len("mvm input", self.cols, x.len())?;
        check_unit_range(x)?;
        let mut currents = vec![0.0; self.rows];
        for (k, current) in currents.iter_mut().enumerate() {
            let base = k * self.cols;
            for (j, &xj) in x.iter().enumerate() {
                if xj == 0.0 {
                    continue;
                }
                let gp = self.plus[base + j].read(&self.params, self.now, rng)?;
                let gm = self.minus[base + j].read(&self.params, self.now, rng)?;
                *current += (gp - gm) * xj * self.v_read;
            }
        }
        let s = self.current_scale();
        Ok(currents.into_iter().map(|i| i * s).collect())
    }

    /// Analog `A^T y`: inputs on the rows, currents collected on the columns.
    pub fn mvm_transpose<R: Rng + ?Sized>(&self, y: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        check_len("transposed mvm input", self.rows, y.len())?;
        check_unit_range(y)?;
        let mut currents = vec![0.0; self.cols];
        for (k, &yk) in y.iter().enumerate() {
            if yk == 0.0 {
                continue;
            }
            let base = k * self.cols;
            for (j, current) in currents.iter_mut().enumerate() {
                let gp = self.plus[base + j].read(&self.params, self.now, rng)?;
                let gm = self.minus[base + j].read(&self.params, self.now, rng)?;
                *current += (gp - gm) * yk * self.v_read;
            }
        }
        let s = self.current_scale();
        Ok(currents.into_iter().map(|i| i * s).collect())
    }

    /// Moves the weight at `(r, c)` by `n` steps of `step_w` in the direction
    /// of `positive`, using SET pulses on `G+` (increase) or `G-` (decrease).
    ///
    /// Each pulse amplitude is matched to the device's current headroom so a
    /// noiseless pulse moves the weight by exactly `step_w`. When a device
    /// cannot deliver a full step the pair is re-programmed to the requested
    /// weight instead.
    #[allow(clippy::too_many_arguments)]
    pub fn nudge<R: Rng + ?Sized>(
        &mut self,
        r: usize,
        c: usize,
        positive: bool,
        n: u32,
        step_w: f64,
        refresh_mode: ProgrammingMode,
        rng: &mut R,
    ) -> Result<NudgeOutcome> {
        let idx = r * self.cols + c;
        let dg = step_w * self.params.range() / self.w_max;
        let alpha = self.params.set_step_fraction;
        let mut out = NudgeOutcome::default();
        if self.params.prog_noise_rel == 0.0 && n > 1 {
            // Noiseless pulses add exactly `dg` each, so the train collapses
            // into one scaled pulse when the last step still has headroom.
            let dev = if positive { &mut self.plus[idx] } else { &mut self.minus[idx] };
            let g = dev.drifted(&self.params, self.now)?;
            let last = g + f64::from(n - 1) * dg;
            if alpha * (self.params.g_max - last) >= dg {
                let amp = f64::from(n) * dg / (alpha * (self.params.g_max - g));
                dev.apply_pulse(&self.params, Pulse::set_scaled(1, amp), self.now, rng)?;
                out.pulses = u64::from(n);
                return Ok(out);
            }
        }
        for done in 0..n {
            let g = if positive { &self.plus[idx] } else { &self.minus[idx] }.drifted(&self.params, self.now)?;
            let headroom = alpha * (self.params.g_max - g);
            if headroom < dg {
                let remaining = f64::from(n - done) * step_w;
                let current = self.decoded_weight(r, c);
                let wanted = if positive { current + remaining } else { current - remaining };
                out.clipped = wanted.abs() > self.w_max;
                let stats = self.reprogram_pair(r, c, wanted, refresh_mode, rng)?;
                out.pulses += stats.pulses;
                out.refreshed = true;
                return Ok(out);
            }
            let dev = if positive { &mut self.plus[idx] } else { &mut self.minus[idx] };
            dev.apply_pulse(&self.params, Pulse::set_scaled(1, dg / headroom), self.now, rng)?;
            out.pulses += 1;
        }
        Ok(out)
    }
}

fn check_unit_range(x: &[f64]) -> Result<()> {
    match x.iter().find(|v| !(v.abs() <= 1.0)) {
        Some(v) => Err(Error::Domain(format!("crossbar input {v} outside [-1, 1]; normalize first"))),
        None => Ok(()),
    }
}

/// A matrix spread over a grid of crossbar tiles.
///
/// Edge tiles are trimmed to the matrix edge; this is equivalent to zero
/// padding because padded columns receive zero voltage and padded rows are
/// discarded.
#[derive(Debug)]
pub struct TiledMatrix {
    n_rows: usize,
    n_cols: usize,
    tile_dim: usize,
    tile_grid: (usize, usize),
    tiles: Vec<CrossbarArray>,
    products: AtomicU64,
}

impl Clone for TiledMatrix {
    fn clone(&self) -> Self {
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            tile_dim: self.tile_dim,
            tile_grid: self.tile_grid,
            tiles: self.tiles.clone(),
            products: AtomicU64::new(self.products.load(Ordering::Relaxed)),
        }
    }
}

impl TiledMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        tile_dim: usize,
        params: DeviceParams,
        w_max: f64,
        v_read: f64,
    ) -> Result<Self> {
        if tile_dim == 0 || tile_dim > MAX_DIM {
            return Err(Error::InvalidParam(format!("tile_dim {tile_dim} outside 1..={MAX_DIM}")));
        }
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::InvalidParam("tiled matrix must be non-empty".into()));
        }
        let grid = (n_rows.div_ceil(tile_dim), n_cols.div_ceil(tile_dim));
        let mut tiles = Vec::with_capacity(grid.0 * grid.1);
        for tr in 0..grid.0 {
            for tc in 0..grid.1 {
                let rows = tile_dim.min(n_rows - tr * tile_dim);
                let cols = tile_dim.min(n_cols - tc * tile_dim);
                tiles.push(CrossbarArray::new(rows, cols, params, w_max, v_read)?);
            }
        }
        Ok(Self { n_rows, n_cols, tile_dim, tile_grid: grid, tiles, products: AtomicU64::new(0) })
    }

    pub fn from_config(n_rows: usize, n_cols: usize, params: DeviceParams, cfg: &CrossbarConfig) -> Result<Self> {
        Self::new(n_rows, n_cols, cfg.tile_dim, params, cfg.w_max, cfg.v_read)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn tile_dim(&self) -> usize {
        self.tile_dim
    }

    pub fn tile_grid(&self) -> (usize, usize) {
        self.tile_grid
    }

    pub fn tiles(&self) -> &[CrossbarArray] {
        &self.tiles
    }

    pub fn w_max(&self) -> f64 {
        self.tiles[0].w_max
    }

    pub fn params(&self) -> &DeviceParams {
        &self.tiles[0].params
    }

    pub fn now(&self) -> f64 {
        self.tiles[0].now
    }

    /// Number of analog matrix products issued so far.
    pub fn products(&self) -> u64 {
        self.products.load(Ordering::Relaxed)
    }

    pub fn reset_product_counter(&self) {
        self.products.store(0, Ordering::Relaxed);
    }

    fn locate(&self, r: usize, c: usize) -> (usize, usize, usize) {
        let (tr, tc) = (r / self.tile_dim, c / self.tile_dim);
        (tr * self.tile_grid.1 + tc, r % self.tile_dim, c % self.tile_dim)
    }

    pub fn program_matrix<R: Rng + ?Sized>(
        &mut self,
        a: &Matrix,
        mode: ProgrammingMode,
        rng: &mut R,
    ) -> Result<ProgramStats> {
        check_len("matrix rows", self.n_rows, a.rows())?;
        check_len("matrix cols", self.n_cols, a.cols())?;
        let mut stats = ProgramStats::default();
        for tr in 0..self.tile_grid.0 {
            for tc in 0..self.tile_grid.1 {
                let tile = &mut self.tiles[tr * self.tile_grid.1 + tc];
                let sub = a.sub_matrix(tr * self.tile_dim, tc * self.tile_dim, tile.rows, tile.cols)?;
                stats += tile.program_matrix(&sub, mode, rng)?;
            }
        }
        Ok(stats)
    }

    pub fn decoded_weights(&self) -> Matrix {
        Matrix::from_fn(self.n_rows, self.n_cols, |r, c| self.decoded_weight(r, c))
    }

    pub fn decoded_weight(&self, r: usize, c: usize) -> f64 {
        let (t, lr, lc) = self.locate(r, c);
        self.tiles[t].decoded_weight(lr, lc)
    }

    pub fn advance_time(&mut self, dt: f64) -> Result<()> {
        for t in &mut self.tiles {
            t.advance_time(dt)?;
        }
        Ok(())
    }

    /// Tiled `A x` with inputs bounded by 1.
    pub fn mvm<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        check_len("tiled mvm input", self.n_cols, x.len())?;
        self.products.fetch_add(1, Ordering::Relaxed);
        let mut out = vec![0.0; self.n_rows];
        for tr in 0..self.tile_grid.0 {
            for tc in 0..self.tile_grid.1 {
                let tile = &self.tiles[tr * self.tile_grid.1 + tc];
                let c0 = tc * self.tile_dim;
                let xs = &x[c0..c0 + tile.cols];
                if xs.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let part = tile.mvm(xs, rng)?;
                let r0 = tr * self.tile_dim;
                for (o, p) in out[r0..r0 + tile.rows].iter_mut().zip(part) {
                    *o += p;
                }
            }
        }
        Ok(out)
    }

    /// Tiled `A^T y` with inputs bounded by 1.
    pub fn mvm_transpose<R: Rng + ?Sized>(&self, y: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        check_len("tiled transposed mvm input", self.n_rows, y.len())?;
        self.products.fetch_add(1, Ordering::Relaxed);
        let mut out = vec![0.0; self.n_cols];
        for tr in 0..self.tile_grid.0 {
            for tc in 0..self.tile_grid.1 {
                let tile = &self.tiles[tr * self.tile_grid.1 + tc];
                let r0 = tr * self.tile_dim;
                let ys = &y[r0..r0 + tile.rows];
                if ys.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let part = tile.mvm_transpose(ys, rng)?;
                let c0 = tc * self.tile_dim;
                for (o, p) in out[c0..c0 + tile.cols].iter_mut().zip(part) {
                    *o += p;
                }
            }
        }
        Ok(out)
    }

    /// `A x` for arbitrary `x`: the input is divided by its largest magnitude
    /// before it reaches the array and the result is scaled back.
    pub fn mvm_scaled<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let s = max_abs(x);
        if s == 0.0 || !s.is_finite() {
            check_len("tiled mvm input", self.n_cols, x.len())?;
            if !s.is_finite() {
                return Err(Error::NonFinite("mvm input".into()));
            }
            self.products.fetch_add(1, Ordering::Relaxed);
            return Ok(vec![0.0; self.n_rows]);
        }
        let xs: Vec<f64> = x.iter().map(|v| v / s).collect();
        Ok(self.mvm(&xs, rng)?.into_iter().map(|v| v * s).collect())
    }

    /// `A^T y` for arbitrary `y`, scaled as in [`TiledMatrix::mvm_scaled`].
    pub fn mvm_transpose_scaled<R: Rng + ?Sized>(&self, y: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let s = max_abs(y);
        if s == 0.0 || !s.is_finite() {
            check_len("tiled transposed mvm input", self.n_rows, y.len())?;
            if !s.is_finite() {
                return Err(Error::NonFinite("mvm input".into()));
            }
            self.products.fetch_add(1, Ordering::Relaxed);
            return Ok(vec![0.0; self.n_cols]);
        }
        let ys: Vec<f64> = y.iter().map(|v| v / s).collect();
        Ok(self.mvm_transpose(&ys, rng)?.into_iter().map(|v| v * s).collect())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn nudge<R: Rng + ?Sized>(
        &mut self,
        r: usize,
        c: usize,
        positive: bool,
        n: u32,
        step_w: f64,
        refresh_mode: ProgrammingMode,
        rng: &mut R,
    ) -> Result<NudgeOutcome> {
        let (t, lr, lc) = self.locate(r, c);
        self.tiles[t].nudge(lr, lc, positive, n, step_w, refresh_mode, rng)
    }
}
