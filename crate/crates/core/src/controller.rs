//! Residual-driven gate control of the bidirectional switch.
//!
//! Each controller sample low-pass filters the measured line current, runs
//! one Kalman update on the filtered value and compares the residual against
//! `±i_th`. Inside the band the switch conducts; outside it the switch opens
//! and the limiter resistor carries the current. After `bypass_cycles` full
//! fundamental cycles inside the band the vacuum breaker latches closed.

use std::f64::consts::{PI, SQRT_2};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::circuit::{Diagnostics, DriveSample, SwitchDriver};
use crate::error::{Error, Result};
use crate::kf::{kf_step, CovarianceUpdate, KfModel, KfState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    /// Residual threshold (A).
    pub i_th: f64,
    /// Low-pass corner (Hz).
    pub lpf_cutoff: f64,
    /// Controller and filter sample rate (Hz).
    pub sample_rate: f64,
    /// Quiet fundamental cycles required before the breaker closes.
    pub bypass_cycles: u32,
    /// Fundamental frequency the estimator is tuned to (Hz).
    pub f0: f64,
    pub kf_q: f64,
    pub kf_r: f64,
    /// Standard deviation of the initial state covariance (A).
    pub kf_sigma: f64,
}

impl ControllerConfig {
    /// Settings used with the laboratory prototype. `kf_q` and `i_th` are
    /// tuned on the worst-case energization so the estimate re-tracks the
    /// line current about two cycles after switch-on.
    pub fn lab_prototype() -> Self {
        Self {
            i_th: 0.05,
            lpf_cutoff: 1000.0,
            sample_rate: 10_000.0,
            bypass_cycles: 3,
            f0: 50.0,
            kf_q: 3e-5,
            kf_r: 1.0,
            kf_sigma: SQRT_2 * 2300.0 / 220.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.i_th > 0.0) {
            return Err(Error::invalid("i_th", "must be > 0"));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::invalid("sample_rate", "must be > 0"));
        }
        if !(self.lpf_cutoff > 0.0 && self.lpf_cutoff < 0.5 * self.sample_rate) {
            return Err(Error::invalid("lpf_cutoff", "must lie in (0, sample_rate/2)"));
        }
        if self.bypass_cycles < 1 {
            return Err(Error::invalid("bypass_cycles", "must be >= 1"));
        }
        if !(self.kf_sigma.is_finite() && self.kf_sigma >= 0.0) {
            return Err(Error::invalid("kf_sigma", "must be finite and >= 0"));
        }
        KfModel::new(self.f0, self.sample_rate, self.kf_q, self.kf_r)?;
        Ok(())
    }

    /// Quiet samples needed to close the breaker.
    pub fn bypass_samples(&self) -> u64 {
        (self.bypass_cycles as f64 * self.sample_rate / self.f0).round() as u64
    }
}

/// Second-order Butterworth low-pass, bilinear transform with prewarping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowPass {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

/// Transposed direct-form II memory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LpfState {
    z1: f64,
    z2: f64,
}

impl LowPass {
    pub fn butterworth(cutoff: f64, sample_rate: f64) -> Self {
        let k = (PI * cutoff / sample_rate).tan();
        let k2 = k * k;
        let norm = 1.0 / (1.0 + SQRT_2 * k + k2);
        let b0 = k2 * norm;
        Self {
            b0,
            b1: 2.0 * b0,
            b2: b0,
            a1: 2.0 * (k2 - 1.0) * norm,
            a2: (1.0 - SQRT_2 * k + k2) * norm,
        }
    }

    /// Numerator and denominator coefficients `([b0, b1, b2], [1, a1, a2])`.
    pub fn coefficients(&self) -> ([f64; 3], [f64; 3]) {
        ([self.b0, self.b1, self.b2], [1.0, self.a1, self.a2])
    }

    pub fn step(&self, state: &LpfState, x: f64) -> (LpfState, f64) {
        let y = self.b0 * x + state.z1;
        let next = LpfState {
            z1: self.b1 * x - self.a1 * y + state.z2,
            z2: self.b2 * x - self.a2 * y,
        };
        (next, y)
    }
}

/// Filters one raw sample with the configured low-pass.
pub fn lpf_step(config: &ControllerConfig, state: &LpfState, raw_sample: f64) -> (LpfState, f64) {
    LowPass::butterworth(config.lpf_cutoff, config.sample_rate).step(state, raw_sample)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub lpf: LpfState,
    pub kf: KfState,
    pub gate_on: bool,
    pub vcb_closed: bool,
    pub quiet_samples: u64,
    pub index: usize,
}

impl ControllerState {
    pub fn initial(config: &ControllerConfig) -> Self {
        Self {
            lpf: LpfState::default(),
            kf: KfState::with_sigma(config.kf_sigma),
            gate_on: true,
            vcb_closed: false,
            quiet_samples: 0,
            index: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerOutput {
    pub gate_on: bool,
    pub vcb_closed: bool,
    pub diagnostics: Diagnostics,
}

/// Gate decision: conduct inside the band (ties conduct) or once bypassed.
pub fn gate_decision(residual: f64, i_th: f64, vcb_closed: bool) -> bool {
    vcb_closed || residual.abs() <= i_th
}

/// Controller with its filter coefficients and signal model precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controller {
    pub config: ControllerConfig,
    lpf: LowPass,
    model: KfModel,
    bypass_samples: u64,
}

impl Controller {
    pub fn new(config: ControllerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            lpf: LowPass::butterworth(config.lpf_cutoff, config.sample_rate),
            model: KfModel::new(config.f0, config.sample_rate, config.kf_q, config.kf_r)?,
            bypass_samples: config.bypass_samples(),
            config,
        })
    }

    pub fn model(&self) -> &KfModel {
        &self.model
    }

    pub fn initial_state(&self) -> ControllerState {
        ControllerState::initial(&self.config)
    }

    pub fn step(&self, state: &ControllerState, raw_sample: f64) -> Result<(ControllerState, ControllerOutput)> {
        let (lpf, filtered) = self.lpf.step(&state.lpf, raw_sample);
        let kf = kf_step(
            &self.model,
            &state.kf,
            filtered,
            CovarianceUpdate::Standard,
            state.index,
        )?;
        let residual = crate::kf::residual(filtered, kf.estimate);
        let vcb_closed = state.vcb_closed || state.quiet_samples >= self.bypass_samples;
        let quiet = residual.abs() <= self.config.i_th;
        let quiet_samples = if quiet { state.quiet_samples + 1 } else { 0 };
        let gate_on = gate_decision(residual, self.config.i_th, vcb_closed);
        let next = ControllerState {
            lpf,
            kf: kf.next,
            gate_on,
            vcb_closed,
            quiet_samples,
            index: state.index + 1,
        };
        Ok((
            next,
            ControllerOutput {
                gate_on,
                vcb_closed,
                diagnostics: Diagnostics {
                    filtered,
                    estimate: kf.estimate,
                    residual,
                },
            },
        ))
    }

    /// Runs the controller open loop over a recorded current sequence.
    pub fn replay(&self, samples: &[f64]) -> Result<Vec<ControllerOutput>> {
        let mut state = self.initial_state();
        samples
            .iter()
            .map(|&y| {
                let (next, out) = self.step(&state, y)?;
                state = next;
                Ok(out)
            })
            .collect()
    }
}

/// One controller sample: filter, estimate, residual, gate, breaker latch.
pub fn controller_step(
    config: &ControllerConfig,
    state: &ControllerState,
    raw_sample: f64,
) -> Result<(ControllerState, ControllerOutput)> {
    Controller::new(*config)?.step(state, raw_sample)
}

/// Closed-loop switch driver: samples the line current every `decimation`
/// plant steps (with optional seeded measurement noise) and holds the gate in
/// between.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    controller: Controller,
    state: ControllerState,
    decimation: usize,
    noise: Option<(ChaCha8Rng, Normal<f64>)>,
    held: DriveSample,
}

impl ClosedLoop {
    pub fn new(config: ControllerConfig, plant_dt: f64, noise_rms: f64, seed: u64) -> Result<Self> {
        let controller = Controller::new(config)?;
        let ratio = 1.0 / (config.sample_rate * plant_dt);
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 {
            return Err(Error::invalid(
                "sample_rate",
                "controller period must be an integer multiple of dt",
            ));
        }
        if !(noise_rms.is_finite() && noise_rms >= 0.0) {
            return Err(Error::invalid("noise_rms", "must be finite and >= 0"));
        }
        let noise = if noise_rms > 0.0 {
            let normal = Normal::new(0.0, noise_rms).map_err(|e| Error::invalid("noise_rms", e.to_string()))?;
            Some((ChaCha8Rng::seed_from_u64(seed), normal))
        } else {
            None
        };
        Ok(Self {
            state: controller.initial_state(),
            controller,
            decimation: ratio.round() as usize,
            noise,
            held: DriveSample::gate(true),
        })
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }
}

impl SwitchDriver for ClosedLoop {
    fn drive(&mut self, step: usize, _t: f64, line_current: f64) -> Result<DriveSample> {
        if step.is_multiple_of(self.decimation) {
            let noise = match &mut self.noise {
                Some((rng, normal)) => normal.sample(rng),
                None => 0.0,
            };
            let (next, out) = self.controller.step(&self.state, line_current + noise)?;
            self.state = next;
            self.held = DriveSample {
                gate_on: out.gate_on,
                vcb_closed: out.vcb_closed,
                diagnostics: Some(out.diagnostics),
            };
        }
        Ok(self.held)
    }

    fn has_diagnostics(&self) -> bool {
        true
    }
}

/// Result of the analytic limiter sizing.
#[derive(Debug, Clone, PartialEq)]
pub struct LimiterSizing {
    pub resistance: f64,
    /// Set when the formula returns a non-positive resistance.
    pub warning: Option<String>,
}

/// Analytic limiter resistance `(L/kT)·ln(V_m/(Z·i2 − V_m))` for a permitted
/// peak `i2` reached a fraction `k` of a cycle after saturation onset.
///
/// Advisory only: the expression is undefined for `Z·i2 ≤ V_m` and falls to
/// zero at `Z·i2 = 2·V_m`. Validate any value it gives by simulation.
pub fn size_limiter_resistor(l_total: f64, k: f64, period: f64, v_peak: f64, z: f64, i2: f64) -> Result<LimiterSizing> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::Domain(format!("k = {k} must lie in (0, 1]")));
    }
    for (name, v) in [
        ("l_total", l_total),
        ("period", period),
        ("v_peak", v_peak),
        ("z", z),
        ("i2", i2),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("{name} = {v} must be finite and > 0")));
        }
    }
    let excess = z * i2 - v_peak;
    if excess <= 0.0 {
        return Err(Error::Domain(format!(
            "limiter sizing undefined: i2 = {i2} A gives Z·i2 = {:.6} V, which does not exceed V_m = {v_peak:.6} V",
            z * i2
        )));
    }
    let resistance = l_total / (k * period) * (v_peak / excess).ln();
    let warning = (resistance <= 0.0).then(|| {
        format!("non-positive resistance {resistance:.6} Ω: Z·i2 exceeds 2·V_m, the formula gives no usable limiter")
    });
    Ok(LimiterSizing { resistance, warning })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ControllerConfig {
        ControllerConfig::lab_prototype()
    }

    #[test]
    fn lpf_unity_dc_gain() {
        let lp = LowPass::butterworth(1000.0, 10_000.0);
        let mut s = LpfState::default();
        let mut y = 0.0;
        for _ in 0..2000 {
            (s, y) = lp.step(&s, 3.7);
        }
        assert!((y - 3.7).abs() < 1e-6);
    }

    #[test]
    fn lpf_zero_in_zero_out() {
        let c = cfg();
        let (s, y) = lpf_step(&c, &LpfState::default(), 0.0);
        assert_eq!(y, 0.0);
        assert_eq!(s, LpfState::default());
    }

    #[test]
    fn lpf_attenuates_a_decade_above_corner() {
        // 200 Hz corner at 10 kHz, probed at 2 kHz. Bilinear Butterworth
        // magnitude 1/sqrt(1 + (tan(πf/fs)/tan(πfc/fs))^4) = −42.50 dB.
        let (fc, fs, f) = (200.0, 10_000.0, 2000.0);
        let lp = LowPass::butterworth(fc, fs);
        let mut s = LpfState::default();
        let n = 20_000;
        let (mut c, mut q) = (0.0, 0.0);
        for k in 0..n {
            let w = 2.0 * PI * f * k as f64 / fs;
            let (next, y) = lp.step(&s, w.sin());
            s = next;
            if k >= n / 2 {
                c += y * w.sin();
                q += y * w.cos();
            }
        }
        let amp = 2.0 * c.hypot(q) / (n / 2) as f64;
        let db = 20.0 * amp.log10();
        assert!(db <= -38.0, "{db}");
        assert!((db - (-42.5006096616187)).abs() < 1e-6, "{db}");
    }

    #[test]
    fn gate_truth_table() {
        let th = 1.0;
        assert!(gate_decision(0.5, th, false));
        assert!(gate_decision(-0.5, th, false));
        assert!(!gate_decision(1.5, th, false));
        assert!(!gate_decision(-1.5, th, false));
        for r in [0.5, -0.5, 1.5, -1.5] {
            assert!(gate_decision(r, th, true));
        }
        assert!(gate_decision(1.0, th, false));
        assert!(gate_decision(-1.0, th, false));
    }

    #[test]
    fn quiet_input_closes_breaker_after_exact_cycles() {
        let c = cfg();
        let ctl = Controller::new(c).unwrap();
        let out = ctl.replay(&vec![0.0; 1000]).unwrap();
        let n = c.bypass_samples() as usize;
        assert_eq!(n, 600);
        assert!(out.iter().all(|o| o.gate_on));
        let first = out.iter().position(|o| o.vcb_closed).unwrap();
        assert_eq!(first, n);
        assert!(out[first..].iter().all(|o| o.vcb_closed));
    }

    #[test]
    fn free_function_matches_controller() {
        let c = cfg();
        let ctl = Controller::new(c).unwrap();
        let s0 = ctl.initial_state();
        let (a, oa) = controller_step(&c, &s0, 2.5).unwrap();
        let (b, ob) = ctl.step(&s0, 2.5).unwrap();
        assert_eq!(a, b);
        assert_eq!(oa, ob);
    }

    #[test]
    fn sizing_boundaries() {
        let l = 5e-3 + 2.2 / (2.0 * PI * 50.0);
        let z = 2.13f64.hypot(2.0 * PI * 50.0 * l);
        let vm = 220.0 * SQRT_2;
        let at_two = size_limiter_resistor(l, 0.25, 0.02, vm, z, 2.0 * vm / z).unwrap();
        assert!(at_two.resistance.abs() < 1e-12);
        assert!(matches!(
            size_limiter_resistor(l, 0.25, 0.02, vm, z, vm / z),
            Err(Error::Domain(_))
        ));
        let beyond = size_limiter_resistor(l, 0.25, 0.02, vm, z, 3.0 * vm / z).unwrap();
        assert!(beyond.resistance < 0.0 && beyond.warning.is_some());
    }

    #[test]
    fn sizing_with_unit_log() {
        // ln argument e: i2 = V_m(1 + 1/e)/Z, so R = L/(kT).
        let l = 5e-3 + 2.2 / (2.0 * PI * 50.0);
        let z = 2.13f64.hypot(2.0 * PI * 50.0 * l);
        let vm = 220.0 * SQRT_2;
        let i2 = vm * (1.0 + (-1.0f64).exp()) / z;
        let r = size_limiter_resistor(l, 0.25, 0.02, vm, z, i2).unwrap();
        assert!((r.resistance - 2.4005634992086793).abs() < 1e-9, "{}", r.resistance);
        assert!(r.warning.is_none());
    }
}
