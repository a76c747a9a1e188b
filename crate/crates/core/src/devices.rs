//! Phenomenological models of analog memory cells.
//!
//! A non-volatile cell ([`DeviceState`]) has a gradual, saturating SET
//! response, an abrupt RESET, multiplicative programming and read noise, and
//! power-law conductance drift evaluated lazily at read time. A volatile cell
//! ([`VolatileDeviceState`]) relaxes back to `g_min` and serves as a
//! reservoir node.
//!
//! All conductances are in µS, times in seconds.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shared parameters of a device population.
///
/// The defaults are placeholder magnitudes typical of phase-change memory;
/// none of them is a measured value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    pub g_min: f64,
    pub g_max: f64,
    /// Fraction of the remaining headroom `g_max - g` gained by one full SET pulse.
    pub set_step_fraction: f64,
    pub prog_noise_rel: f64,
    pub read_noise_rel: f64,
    pub drift_nu: f64,
    pub drift_t0: f64,
    /// Scales the residual conductance spread left by a noisy RESET.
    pub reset_noise_kappa: f64,
    /// Relative device-to-device spread of the drift exponent. Each
    /// programming event draws the cell's exponent as `nu * max(0, 1 + s z)`.
    pub drift_nu_spread: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            g_min: 0.1,
            g_max: 25.0,
            set_step_fraction: 0.05,
            prog_noise_rel: 0.1,
            read_noise_rel: 0.02,
            drift_nu: 0.05,
            drift_t0: 1.0,
            reset_noise_kappa: 0.5,
            drift_nu_spread: 0.3,
        }
    }
}

impl DeviceParams {
    /// Default conductance window with every noise source and drift disabled.
    pub fn ideal() -> Self {
        Self {
            prog_noise_rel: 0.0,
            read_noise_rel: 0.0,
            drift_nu: 0.0,
            drift_nu_spread: 0.0,
            ..Self::default()
        }
    }

    pub fn range(&self) -> f64 {
        self.g_max - self.g_min
    }

    pub fn clamp(&self, g: f64) -> f64 {
        g.clamp(self.g_min, self.g_max)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self;
        let finite = [
            p.g_min,
            p.g_max,
            p.set_step_fraction,
            p.prog_noise_rel,
            p.read_noise_rel,
            p.drift_nu,
            p.drift_t0,
            p.reset_noise_kappa,
            p.drift_nu_spread,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParam("device parameters must be finite".into()));
        }
        if !(p.g_min > 0.0 && p.g_min < p.g_max) {
            return Err(Error::InvalidParam(format!(
                "need 0 < g_min < g_max, got g_min={} g_max={}",
                p.g_min, p.g_max
            )));
        }
        if !(p.set_step_fraction > 0.0 && p.set_step_fraction <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "set_step_fraction must lie in (0, 1], got {}",
                p.set_step_fraction
            )));
        }
        if p.prog_noise_rel < 0.0 || p.read_noise_rel < 0.0 || p.reset_noise_kappa < 0.0 || p.drift_nu_spread < 0.0 {
            return Err(Error::InvalidParam("noise parameters must be non-negative".into()));
        }
        if p.drift_nu < 0.0 {
            return Err(Error::InvalidParam(format!("drift_nu must be >= 0, got {}", p.drift_nu)));
        }
        if p.drift_t0 <= 0.0 {
            return Err(Error::InvalidParam(format!("drift_t0 must be > 0, got {}", p.drift_t0)));
        }
        Ok(())
    }

    /// Multiplicative drift factor after `elapsed` seconds.
    pub fn drift_factor(&self, elapsed: f64) -> f64 {
        self.drift_factor_scaled(elapsed, 1.0)
    }

    /// Drift factor for a cell whose exponent is `nu_scale * drift_nu`.
    pub fn drift_factor_scaled(&self, elapsed: f64, nu_scale: f64) -> f64 {
        let nu = self.drift_nu * nu_scale;
        if nu == 0.0 || elapsed == 0.0 {
            1.0
        } else {
            ((elapsed + self.drift_t0) / self.drift_t0).powf(-nu)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Set,
    Reset,
}

/// A train of identical programming pulses.
///
/// `amplitude` scales the mean SET increment of each pulse (1.0 is a full
/// pulse). It has no effect on RESET.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub polarity: Polarity,
    pub count: u32,
    pub amplitude: f64,
}

impl Pulse {
    pub fn set(count: u32) -> Self {
        Self { polarity: Polarity::Set, count, amplitude: 1.0 }
    }

    pub fn set_scaled(count: u32, amplitude: f64) -> Self {
        Self { polarity: Polarity::Set, count, amplitude }
    }

    pub fn reset() -> Self {
        Self { polarity: Polarity::Reset, count: 1, amplitude: 1.0 }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        let z: f64 = StandardNormal.sample(rng);
        sd * z
    }
}

/// Outcome of closed-loop programming.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgramOutcome {
    /// Last verify read.
    pub achieved: f64,
    /// Number of read-verify cycles performed.
    pub iters: u32,
    pub converged: bool,
}

/// One non-volatile cell.
///
/// Only the conductance at the last programming event is stored; drift is
/// applied when the cell is read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceState {
    pub g_programmed: f64,
    pub t_last_program: f64,
    /// This cell's drift exponent relative to `drift_nu`.
    pub nu_scale: f64,
}

impl DeviceState {
    /// A freshly RESET cell at `g_min`, programmed at time zero.
    pub fn new(params: &DeviceParams) -> Self {
        Self { g_programmed: params.g_min, t_last_program: 0.0, nu_scale: 1.0 }
    }

    pub fn with_conductance(params: &DeviceParams, g: f64, t: f64) -> Self {
        Self { g_programmed: params.clamp(g), t_last_program: t, nu_scale: 1.0 }
    }

    fn check_clock(&self, now: f64) -> Result<()> {
        if now < self.t_last_program || now.is_nan() {
            Err(Error::ClockMisuse { now, last: self.t_last_program })
        } else {
            Ok(())
        }
    }

    /// Noiseless drifted conductance at `now`.
    pub fn drifted(&self, params: &DeviceParams, now: f64) -> Result<f64> {
        self.check_clock(now)?;
        Ok(params.clamp(self.g_programmed * params.drift_factor_scaled(now - self.t_last_program, self.nu_scale)))
    }

    /// Noisy read at `now`. Does not modify the cell.
    pub fn read<R: Rng + ?Sized>(&self, params: &DeviceParams, now: f64, rng: &mut R) -> Result<f64> {
        let g = self.drifted(params, now)?;
        Ok(params.clamp(g * (1.0 + normal(rng, params.read_noise_rel))))
    }

    /// Applies a pulse train at time `now`.
    ///
    /// Each SET pulse of amplitude `a` adds `alpha * (g_max - g) * (a + sqrt(a) * eta)`
    /// with `eta ~ N(0, prog_noise_rel)`, so a full pulse (`a = 1`) carries a
    /// relative error of `prog_noise_rel`. RESET is abrupt and lands at
    /// `g_min * (1 + |z| * prog_noise_rel * reset_noise_kappa)`.
    pub fn apply_pulse<R: Rng + ?Sized>(
        &mut self,
        params: &DeviceParams,
        pulse: Pulse,
        now: f64,
        rng: &mut R,
    ) -> Result<()> {
        if pulse.count == 0 {
            return Err(Error::InvalidParam("pulse count must be >= 1".into()));
        }
        let mut g = self.drifted(params, now)?;
        match pulse.polarity {
            Polarity::Set => {
                let a = pulse.amplitude;
                if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::InvalidParam(format!("pulse amplitude must be > 0, got {a}")));
                }
                let spread = a.sqrt();
                for _ in 0..pulse.count {
                    let eta = normal(rng, params.prog_noise_rel);
                    let dg = params.set_step_fraction * (params.g_max - g) * (a + spread * eta);
                    g = params.clamp(g + dg);
                }
            }
            Polarity::Reset => {
                let z = normal(rng, 1.0).abs();
                g = params.clamp(params.g_min * (1.0 + z * params.prog_noise_rel * params.reset_noise_kappa));
            }
        }
        if params.drift_nu_spread > 0.0 {
            self.nu_scale = (1.0 + normal(rng, params.drift_nu_spread)).max(0.0);
        }
        self.g_programmed = g;
        self.t_last_program = now;
        Ok(())
    }

    /// Open-loop programming: RESET, then the SET train that would land on
    /// `target` for a noiseless cell starting exactly at `g_min`.
    ///
    /// Returns the number of pulses issued (RESET included).
    pub fn program_open_loop<R: Rng + ?Sized>(
        &mut self,
        params: &DeviceParams,
        target: f64,
        now: f64,
        rng: &mut R,
    ) -> Result<u32> {
        check_target(params, target)?;
        self.apply_pulse(params, Pulse::reset(), now, rng)?;
        let (full, last) = plan_set_train(params, params.g_min, target);
        if full > 0 {
            self.apply_pulse(params, Pulse::set(full), now, rng)?;
        }
        if let Some(a) = last {
            self.apply_pulse(params, Pulse::set_scaled(1, a), now, rng)?;
        }
        Ok(1 + full + u32::from(last.is_some()))
    }

    /// Closed-loop program-and-verify.
    ///
    /// Each cycle reads the cell; if the read is within `tol` of the target
    /// the loop stops. Below target a SET pulse aimed at the target is issued
    /// (full amplitude while the target is further than one full step away);
    /// above `target + tol` the cell is RESET and the approach restarts.
    /// Running out of cycles is not an error: `converged` is false and
    /// `iters == max_iter`.
    pub fn program_iterative<R: Rng + ?Sized>(
        &mut self,
        params: &DeviceParams,
        target: f64,
        tol: f64,
        max_iter: u32,
        now: f64,
        rng: &mut R,
    ) -> Result<ProgramOutcome> {
        check_target(params, target)?;
        if !(tol > 0.0) {
            return Err(Error::InvalidParam(format!("tol must be > 0, got {tol}")));
        }
        if max_iter == 0 {
            return Err(Error::InvalidParam("max_iter must be >= 1".into()));
        }
        let mut achieved = self.read(params, now, rng)?;
        for iter in 1..=max_iter {
            if iter > 1 {
                achieved = self.read(params, now, rng)?;
            }
            if (achieved - target).abs() <= tol {
                return Ok(ProgramOutcome { achieved, iters: iter, converged: true });
            }
            if iter == max_iter {
                break;
            }
            if achieved > target {
                self.apply_pulse(params, Pulse::reset(), now, rng)?;
            } else {
                let full_step = params.set_step_fraction * (params.g_max - achieved);
                let amplitude = if full_step > 0.0 { ((target - achieved) / full_step).min(1.0) } else { 1.0 };
                self.apply_pulse(params, Pulse::set_scaled(1, amplitude), now, rng)?;
            }
        }
        Ok(ProgramOutcome { achieved, iters: max_iter, converged: false })
    }
}

fn check_target(params: &DeviceParams, target: f64) -> Result<()> {
    if target >= params.g_min && target <= params.g_max {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "target conductance {target} outside [{}, {}]",
            params.g_min, params.g_max
        )))
    }
}

/// Full SET pulses plus an optional final partial amplitude taking a
/// noiseless cell from `from` to `target`.
pub fn plan_set_train(params: &DeviceParams, from: f64, target: f64) -> (u32, Option<f64>) {
    const MAX_PULSES: u32 = 4096;
    let alpha = params.set_step_fraction;
    let resolution = 1e-15 * params.range();
    let mut g = from;
    let mut full = 0;
    while target - g > resolution && full < MAX_PULSES {
        let step = alpha * (params.g_max - g);
        if g + step <= target {
            g += step;
            full += 1;
        } else {
            return (full, Some((target - g) / step));
        }
    }
    (full, None)
}

/// Closed-form conductance after `k` noiseless full SET pulses from `g0`.
pub fn set_staircase(params: &DeviceParams, g0: f64, k: u32) -> f64 {
    params.g_max - (params.g_max - g0) * (1.0 - params.set_step_fraction).powi(k as i32)
}

/// Volatile cell used as a reservoir node: decays to `g_min` with time
/// constant `decay_tau` and is driven toward `g_max` by `|input|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolatileDeviceState {
    pub g: f64,
    pub decay_tau: f64,
    /// Drive rate per volt per second.
    pub drive_gain: f64,
    pub params: DeviceParams,
}

impl VolatileDeviceState {
    pub fn new(params: DeviceParams, decay_tau: f64, drive_gain: f64) -> Result<Self> {
        if !(decay_tau > 0.0) {
            return Err(Error::InvalidParam(format!("decay_tau must be > 0, got {decay_tau}")));
        }
        Ok(Self { g: params.g_min, decay_tau, drive_gain, params })
    }

    /// Forward-Euler step of `dg/dt = -(g - g_min)/tau + gain*|u|*(g_max - g)`.
    pub fn step(&mut self, input: f64, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParam(format!("dt must be > 0, got {dt}")));
        }
        let p = &self.params;
        let rate = -(self.g - p.g_min) / self.decay_tau + self.drive_gain * input.abs() * (p.g_max - self.g);
        self.g = p.clamp(self.g + dt * rate);
        Ok(())
    }

    /// Conductance mapped to [0, 1].
    pub fn normalized(&self) -> f64 {
        (self.g - self.params.g_min) / self.params.range()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, proptest, Strategy};

    fn small_params() -> DeviceParams {
        DeviceParams {
            g_min: 1.0,
            g_max: 11.0,
            set_step_fraction: 0.1,
            ..DeviceParams::ideal()
        }
    }

    #[test]
    fn default_params_are_valid() {
        DeviceParams::default().validate().unwrap();
        DeviceParams::ideal().validate().unwrap();
    }

    #[test]
    fn invalid_params_rejected() {
        for p in [
            DeviceParams { g_min: 30.0, ..DeviceParams::default() },
            DeviceParams { set_step_fraction: 0.0, ..DeviceParams::default() },
            DeviceParams { drift_t0: 0.0, ..DeviceParams::default() },
        ] {
            assert!(p.validate().is_err());
        }
    }

    #[test]
    fn set_saturates_at_g_max() {
        let p = small_params();
        let mut d = DeviceState::with_conductance(&p, p.g_max, 0.0);
        d.apply_pulse(&p, Pulse::set(1), 0.0, &mut seeded(1)).unwrap();
        assert_eq!(d.g_programmed, p.g_max);
    }

    #[test]
    fn single_set_from_g_min() {
        let p = small_params();
        let mut d = DeviceState::new(&p);
        d.apply_pulse(&p, Pulse::set(1), 0.0, &mut seeded(1)).unwrap();
        assert!((d.g_programmed - 2.0).abs() < 1e-12);
    }

    #[test]
    fn staircase_matches_closed_form() {
        let p = small_params();
        let mut rng = seeded(2);
        let mut d = DeviceState::new(&p);
        let mut prev = d.g_programmed;
        for k in 1..=20 {
            d.apply_pulse(&p, Pulse::set(1), 0.0, &mut rng).unwrap();
            assert!(d.g_programmed > prev);
            prev = d.g_programmed;
            let closed = p.g_max - (p.g_max - p.g_min) * 0.9f64.powi(k);
            assert!((d.g_programmed - closed).abs() <= 1e-12 * closed);
        }
        let mut batch = DeviceState::new(&p);
        batch.apply_pulse(&p, Pulse::set(20), 0.0, &mut rng).unwrap();
        assert!((batch.g_programmed - d.g_programmed).abs() < 1e-12);
    }

    #[test]
    fn noiseless_reset_lands_on_g_min() {
        let p = small_params();
        let mut d = DeviceState::with_conductance(&p, 7.3, 0.0);
        d.apply_pulse(&p, Pulse::reset(), 1.0, &mut seeded(3)).unwrap();
        assert_eq!(d.g_programmed, p.g_min);
        assert_eq!(d.t_last_program, 1.0);
    }

    #[test]
    fn clock_misuse_is_an_error() {
        let p = small_params();
        let mut d = DeviceState::with_conductance(&p, 5.0, 10.0);
        assert!(matches!(
            d.apply_pulse(&p, Pulse::set(1), 9.0, &mut seeded(1)),
            Err(Error::ClockMisuse { .. })
        ));
        assert!(matches!(d.read(&p, 9.99, &mut seeded(1)), Err(Error::ClockMisuse { .. })));
    }

    #[test]
    fn read_without_elapsed_time_or_drift() {
        let mut p = small_params();
        p.drift_nu = 0.3;
        let d = DeviceState::with_conductance(&p, 6.0, 4.0);
        assert_eq!(d.read(&p, 4.0, &mut seeded(1)).unwrap(), 6.0);
        p.drift_nu = 0.0;
        assert_eq!(d.read(&p, 1e6, &mut seeded(1)).unwrap(), 6.0);
    }

    #[test]
    fn drift_power_law() {
        let p = DeviceParams { drift_nu: 0.05, drift_t0: 2.0, ..small_params() };
        let d = DeviceState::with_conductance(&p, 10.0, 0.0);
        let g = d.read(&p, 9.0 * p.drift_t0, &mut seeded(1)).unwrap();
        assert!((g - 8.912_509_381_337_456).abs() < 1e-9, "{g}");
    }

    #[test]
    fn drift_exponent_spread_statistics() {
        let p = DeviceParams { drift_nu: 0.05, drift_nu_spread: 0.3, ..small_params() };
        let mut rng = seeded(12);
        let n = 20_000;
        let scales: Vec<f64> = (0..n)
            .map(|_| {
                let mut d = DeviceState::new(&p);
                d.apply_pulse(&p, Pulse::set(3), 0.0, &mut rng).unwrap();
                d.nu_scale
            })
            .collect();
        let mean = scales.iter().sum::<f64>() / n as f64;
        let var = scales.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
        assert!((var.sqrt() - 0.3).abs() < 0.01, "{}", var.sqrt());
        assert!(scales.iter().all(|s| *s >= 0.0));
        // the drawn exponent is what the cell then drifts with
        let mut d = DeviceState::with_conductance(&p, 10.0, 0.0);
        d.apply_pulse(&p, Pulse::set(1), 0.0, &mut rng).unwrap();
        let t = 50.0;
        let want = d.g_programmed * ((t + p.drift_t0) / p.drift_t0).powf(-p.drift_nu * d.nu_scale);
        assert!((d.drifted(&p, t).unwrap() - want).abs() < 1e-12);
        assert!(want < d.g_programmed);
    }

    #[test]
    fn read_does_not_mutate() {
        let p = DeviceParams::default();
        let d = DeviceState::with_conductance(&p, 12.0, 0.0);
        let before = d;
        let _ = d.read(&p, 100.0, &mut seeded(5)).unwrap();
        assert_eq!(d, before);
    }

    #[test]
    fn iterative_floor_target_uses_reset() {
        let p = DeviceParams::default();
        let mut d = DeviceState::with_conductance(&p, 20.0, 0.0);
        let out = d.program_iterative(&p, p.g_min, 0.05, 50, 0.0, &mut seeded(4)).unwrap();
        assert!(out.converged);
        assert!(out.iters <= 2, "{out:?}");
    }

    #[test]
    fn iterative_noiseless_within_staircase_bound() {
        let p = small_params();
        let tol = 0.01 * p.range();
        let bound = ((tol / p.range()).ln() / 0.9f64.ln()).ceil() as u32 + 1;
        for target in [3.3, 6.0, 8.7, 10.95] {
            let mut d = DeviceState::new(&p);
            let out = d.program_iterative(&p, target, tol, 200, 0.0, &mut seeded(1)).unwrap();
            assert!(out.converged);
            assert!((out.achieved - target).abs() <= tol);
            assert!(out.iters <= bound, "target {target}: {} > {bound}", out.iters);
        }
    }

    #[test]
    fn iterative_rejects_out_of_range_target() {
        let p = small_params();
        let mut d = DeviceState::new(&p);
        assert!(matches!(
            d.program_iterative(&p, 12.0, 0.1, 10, 0.0, &mut seeded(1)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn iterative_reports_non_convergence() {
        let p = DeviceParams::default();
        let mut d = DeviceState::new(&p);
        let out = d.program_iterative(&p, 24.9, 1e-6, 3, 0.0, &mut seeded(1)).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iters, 3);
    }

    #[test]
    fn iterative_spread_under_programming_noise() {
        let p = DeviceParams { prog_noise_rel: 0.05, read_noise_rel: 0.0, drift_nu: 0.0, ..DeviceParams::default() };
        let tol = 0.01 * p.range();
        let mut rng = seeded(11);
        let achieved: Vec<f64> = (0..1000)
            .map(|_| {
                let mut d = DeviceState::new(&p);
                d.program_iterative(&p, 12.0, tol, 500, 0.0, &mut rng).unwrap().achieved
            })
            .collect();
        let mean = achieved.iter().sum::<f64>() / 1000.0;
        let sd = (achieved.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / 999.0).sqrt();
        assert!(sd <= 1.5 * tol, "sd {sd} tol {tol}");
    }

    #[test]
    fn open_loop_noiseless_hits_target() {
        let p = DeviceParams::ideal();
        for target in [p.g_min, 0.37, 5.0, 12.5, 24.0] {
            let mut d = DeviceState::with_conductance(&p, 18.0, 0.0);
            d.program_open_loop(&p, target, 0.0, &mut seeded(1)).unwrap();
            assert!((d.g_programmed - target).abs() < 1e-9 * p.range(), "{target}");
        }
    }

    #[test]
    fn volatile_rest_and_decay() {
        let p = DeviceParams::ideal();
        let mut v = VolatileDeviceState::new(p, 1.0, 1.0).unwrap();
        v.step(0.0, 0.01).unwrap();
        assert_eq!(v.g, p.g_min);
        v.g = 10.0;
        let mut prev = v.g;
        for _ in 0..100 {
            v.step(0.0, 0.01).unwrap();
            assert!(v.g < prev && v.g >= p.g_min);
            prev = v.g;
        }
        assert!(v.step(0.0, 0.0).is_err());
    }

    #[test]
    fn volatile_euler_against_fine_step_and_exact_solution() {
        let p = DeviceParams::ideal();
        let tau = 0.5;
        let gain = 0.8;
        let u = 1.5;
        let run = |dt: f64| {
            let mut v = VolatileDeviceState::new(p, tau, gain).unwrap();
            let steps = (5.0 * tau / dt).round() as usize;
            for _ in 0..steps {
                v.step(u, dt).unwrap();
            }
            v.g
        };
        let coarse = run(tau / 100.0);
        let fine = run(tau / 1e4);
        assert!(((coarse - fine) / fine).abs() < 0.02);
        // Linear ODE: g' = -(g - g_min)/tau + k (g_max - g).
        let k = gain * u;
        let rate = 1.0 / tau + k;
        let g_inf = (p.g_min / tau + k * p.g_max) / rate;
        let exact = g_inf + (p.g_min - g_inf) * (-rate * 5.0 * tau).exp();
        assert!(((fine - exact) / exact).abs() < 1e-3);
    }

    fn pulse_strategy() -> impl Strategy<Value = (bool, u32, f64, f64)> {
        (any::<bool>(), 1u32..5, 0.05f64..1.0, 0.0f64..50.0)
    }

    proptest! {
        #[test]
        fn conductance_stays_in_window(ops in prop::collection::vec(pulse_strategy(), 1..40), seed in any::<u64>()) {
            let p = DeviceParams::default();
            let mut rng = seeded(seed);
            let mut d = DeviceState::new(&p);
            let mut now = 0.0;
            for (set, count, amp, dt) in ops {
                now += dt;
                let pulse = if set { Pulse::set_scaled(count, amp) } else { Pulse::reset() };
                d.apply_pulse(&p, pulse, now, &mut rng).unwrap();
                prop_assert!(d.g_programmed >= p.g_min && d.g_programmed <= p.g_max);
                let r = d.read(&p, now + dt, &mut rng).unwrap();
                prop_assert!(r >= p.g_min && r <= p.g_max);
            }
        }

        #[test]
        fn noiseless_drift_is_monotone(g in 0.2f64..25.0, t1 in 0.0f64..1e4, dt in 0.0f64..1e4) {
            let p = DeviceParams { read_noise_rel: 0.0, ..DeviceParams::default() };
            let d = DeviceState::with_conductance(&p, g, 0.0);
            let a = d.read(&p, t1, &mut seeded(0)).unwrap();
            let b = d.read(&p, t1 + dt, &mut seeded(0)).unwrap();
            prop_assert!(b <= a);
        }

        #[test]
        fn accumulative_closed_form(g0 in 0.1f64..25.0, k in 0u32..60) {
            let p = DeviceParams::ideal();
            let mut d = DeviceState::with_conductance(&p, g0, 0.0);
            if k > 0 {
                d.apply_pulse(&p, Pulse::set(k), 0.0, &mut seeded(0)).unwrap();
            }
            let closed = set_staircase(&p, g0, k);
            prop_assert!((d.g_programmed - closed).abs() <= 1e-12 * closed);
        }

        #[test]
        fn identical_seeds_identical_trajectories(seed in any::<u64>()) {
            let p = DeviceParams::default();
            let run = |seed| {
                let mut rng = seeded(seed);
                let mut d = DeviceState::new(&p);
                let mut out = Vec::new();
                for i in 0..20 {
                    let pulse = if i % 7 == 6 { Pulse::reset() } else { Pulse::set(1) };
                    d.apply_pulse(&p, pulse, i as f64, &mut rng).unwrap();
                    out.push(d.read(&p, i as f64 + 0.5, &mut rng).unwrap().to_bits());
                }
                out
            };
            prop_assert_eq!(run(seed), run(seed));
        }
    }
}
