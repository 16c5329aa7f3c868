//! Single-phase energization circuit and its fixed-step integrator.
//!
//! Topology, in loop order: sinusoidal source, source R/L, the limiter
//! network (bidirectional switch ∥ limiter resistor ∥ RC snubber ∥ MOV),
//! winding R/L, then the magnetizing shunt (saturable core ∥ core-loss
//! resistance). The secondary is open.
//!
//! States are the series inductor current, the core flux and the snubber
//! capacitor voltage. Each step is an implicit trapezoidal update solved by
//! Newton iteration; the limiter-network voltage is an algebraic variable that
//! is re-solved from the states under the active switch mode, so switching
//! never leaves a stale derivative in the trapezoidal history.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::transformer::{NameplateParams, SaturableCore};
use crate::waveform::WaveformRecord;

/// Source, series impedance and limiter-network parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitParams {
    /// Source peak voltage (V).
    pub v_peak: f64,
    /// Supply frequency (Hz).
    pub f0: f64,
    pub source_r: f64,
    pub source_l: f64,
    pub winding_r: f64,
    pub winding_l: f64,
    pub limiter_r: f64,
    pub snubber_r: f64,
    pub snubber_c: f64,
    pub mov_clamp_v: f64,
    pub mov_ref_i: f64,
    pub mov_alpha: f64,
    /// Source phase at the closing instant (rad); 0 is a rising zero crossing.
    pub energize_angle: f64,
    /// Optional on-state resistance of the bidirectional switch (Ω), 0 = ideal.
    pub switch_on_r: f64,
}

impl CircuitParams {
    /// The laboratory prototype: 220 V / 50 Hz source with 1 Ω + 5 mH source
    /// impedance, 10 Ω limiter, 15 Ω + 47 nF snubber, and the winding
    /// impedance of the 2.3 kVA transformer.
    pub fn lab_prototype() -> Self {
        let np = NameplateParams::lab_transformer();
        Self {
            v_peak: 220.0 * SQRT_2,
            f0: 50.0,
            source_r: 1.0,
            source_l: 5e-3,
            winding_r: np.series_z_real,
            winding_l: np.winding_l(),
            limiter_r: 10.0,
            snubber_r: 15.0,
            snubber_c: 47e-9,
            mov_clamp_v: 270.0,
            mov_ref_i: 1e-3,
            mov_alpha: 25.0,
            energize_angle: 0.0,
            switch_on_r: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive: [(&'static str, f64); 11] = [
            ("v_peak", self.v_peak),
            ("f0", self.f0),
            ("source_r", self.source_r),
            ("source_l", self.source_l),
            ("winding_r", self.winding_r),
            ("winding_l", self.winding_l),
            ("limiter_r", self.limiter_r),
            ("snubber_r", self.snubber_r),
            ("snubber_c", self.snubber_c),
            ("mov_clamp_v", self.mov_clamp_v),
            ("mov_ref_i", self.mov_ref_i),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(name, "must be finite and > 0"));
            }
        }
        if !(self.mov_alpha.is_finite() && self.mov_alpha >= 1.0) {
            return Err(Error::invalid("mov_alpha", "must be >= 1"));
        }
        if !self.energize_angle.is_finite() {
            return Err(Error::invalid("energize_angle", "must be finite"));
        }
        if !(self.switch_on_r.is_finite() && self.switch_on_r >= 0.0) {
            return Err(Error::invalid("switch_on_r", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI * self.f0
    }

    pub fn period(&self) -> f64 {
        1.0 / self.f0
    }

    /// Loop resistance excluding the limiter network.
    pub fn series_r(&self) -> f64 {
        self.source_r + self.winding_r
    }

    /// Loop inductance excluding the magnetizing branch.
    pub fn series_l(&self) -> f64 {
        self.source_l + self.winding_l
    }

    pub fn source_voltage(&self, t: f64) -> f64 {
        self.v_peak * (self.omega() * t + self.energize_angle).sin()
    }

    /// Series RL equivalent with the switch closed or open (limiter inserted),
    /// without the magnetizing branch.
    pub fn series_rl(&self, switch_closed: bool) -> SeriesRl {
        let r = if switch_closed {
            self.series_r() + self.switch_on_r
        } else {
            self.series_r() + self.limiter_r
        };
        SeriesRl {
            v_peak: self.v_peak,
            omega: self.omega(),
            r,
            l: self.series_l(),
        }
    }
}

/// A sinusoidally driven series RL loop, `v(t) = v_peak·sin(ωt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRl {
    pub v_peak: f64,
    pub omega: f64,
    pub r: f64,
    pub l: f64,
}

impl SeriesRl {
    /// Adds a series inductance (e.g. an unsaturated magnetizing branch with
    /// core loss disabled).
    pub fn with_extra_l(mut self, l: f64) -> Self {
        self.l += l;
        self
    }

    pub fn z(&self) -> f64 {
        self.r.hypot(self.omega * self.l)
    }

    pub fn phi(&self) -> f64 {
        (self.omega * self.l / self.r).atan()
    }

    pub fn time_constant(&self) -> f64 {
        self.l / self.r
    }
}

/// Line current with the switch closed at `t0` from zero current.
///
/// `t` and `t0` are on the source time axis, where the source is
/// `v_peak·sin(ωt)`.
pub fn closed_form_on_current(rl: &SeriesRl, t: f64, t0: f64) -> f64 {
    let amp = rl.v_peak / rl.z();
    let phi = rl.phi();
    -amp * (rl.omega * t0 - phi).sin() * (-(rl.r / rl.l) * (t - t0)).exp() + amp * (rl.omega * t - phi).sin()
}

/// Line current after a switching instant `t2` carrying current `i1`.
pub fn closed_form_off_current(rl: &SeriesRl, t: f64, t2: f64, i1: f64) -> f64 {
    let amp = rl.v_peak / rl.z();
    let phi = rl.phi();
    (i1 - amp * (rl.omega * t2 - phi).sin()) * (-(rl.r / rl.l) * (t - t2)).exp() + amp * (rl.omega * t - phi).sin()
}

/// Varistor current, `sign(v)·I_ref·(|v|/V_clamp)^α`.
pub fn mov_current(params: &CircuitParams, v: f64) -> f64 {
    params.mov_ref_i * (v.abs() / params.mov_clamp_v).powf(params.mov_alpha) * v.signum()
}

fn mov_conductance(params: &CircuitParams, v: f64) -> f64 {
    params.mov_alpha * params.mov_ref_i / params.mov_clamp_v
        * (v.abs() / params.mov_clamp_v).powf(params.mov_alpha - 1.0)
}

/// Electrical state of the limiter network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchMode {
    /// Switch off: line current is diverted into the limiter, snubber and MOV.
    Open,
    /// Bidirectional switch gated on.
    Conducting,
    /// Vacuum breaker closed across the whole network.
    Bypassed,
}

impl SwitchMode {
    pub fn from_gate(gate_on: bool) -> Self {
        if gate_on {
            SwitchMode::Conducting
        } else {
            SwitchMode::Open
        }
    }

    pub fn is_closed(self) -> bool {
        self != SwitchMode::Open
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub core_flux: f64,
    pub line_current: f64,
    pub snubber_v: f64,
    pub switch_closed: bool,
}

impl SimState {
    /// De-energized circuit holding the core's remnant flux.
    pub fn initial(core: &SaturableCore) -> Self {
        Self {
            t: 0.0,
            core_flux: core.remnant_flux,
            line_current: 0.0,
            snubber_v: 0.0,
            switch_closed: true,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.core_flux.is_finite() && self.line_current.is_finite() && self.snubber_v.is_finite()
    }
}

/// Instantaneous branch quantities derived from a state and a switch mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSplit {
    /// Voltage across the limiter network (V).
    pub ssicl_v: f64,
    /// Switch (or breaker) branch current.
    pub switch_i: f64,
    pub limiter_i: f64,
    pub snubber_i: f64,
    pub mov_i: f64,
    /// Voltage across the magnetizing branch (V).
    pub magnetizing_v: f64,
}

/// Integrates one step with the switch gated `gate_on` for its whole length.
pub fn step(
    params: &CircuitParams,
    core: &SaturableCore,
    state: &SimState,
    dt: f64,
    gate_on: bool,
) -> Result<SimState> {
    Plant::new(params, core).step(state, dt, SwitchMode::from_gate(gate_on))
}

/// The circuit bound to a core model.
#[derive(Debug, Clone, Copy)]
pub struct Plant<'a> {
    pub params: &'a CircuitParams,
    pub core: &'a SaturableCore,
}

const NEWTON_MAX_ITER: usize = 60;

impl<'a> Plant<'a> {
    pub fn new(params: &'a CircuitParams, core: &'a SaturableCore) -> Self {
        Self { params, core }
    }

    /// Linear part of the limiter-network conductance for a mode, or `None`
    /// when the network is shorted.
    fn network_g(&self, mode: SwitchMode) -> Option<f64> {
        let p = self.params;
        let base = 1.0 / p.limiter_r + 1.0 / p.snubber_r;
        match mode {
            SwitchMode::Open => Some(base),
            SwitchMode::Conducting if p.switch_on_r > 0.0 => Some(base + 1.0 / p.switch_on_r),
            _ => None,
        }
    }

    /// Solves the network KCL for its voltage. Returns the voltage and its
    /// conductance `d(current)/dv`, infinite when shorted.
    fn network_voltage(&self, line_current: f64, snubber_v: f64, mode: SwitchMode) -> (f64, f64) {
        let Some(g) = self.network_g(mode) else {
            return (0.0, f64::INFINITY);
        };
        let p = self.params;
        let injected = line_current + snubber_v / p.snubber_r;
        if injected == 0.0 {
            return (0.0, g + mov_conductance(p, 0.0));
        }
        // f(v) = g·v + i_mov(v) − injected is increasing; the MOV only adds
        // same-signed current, so the root lies between 0 and injected/g.
        let (mut lo, mut hi) = if injected > 0.0 {
            (0.0, injected / g)
        } else {
            (injected / g, 0.0)
        };
        let mut v = injected / g;
        for _ in 0..200 {
            let f = g * v + mov_current(p, v) - injected;
            if f > 0.0 {
                hi = v;
            } else {
                lo = v;
            }
            let df = g + mov_conductance(p, v);
            let mut next = v - f / df;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - v).abs() <= 1e-13 * (1.0 + v.abs()) {
                v = next;
                break;
            }
            v = next;
        }
        (v, g + mov_conductance(p, v))
    }

    /// Branch currents and node voltages for a state under a mode.
    pub fn split(&self, state: &SimState, mode: SwitchMode) -> BranchSplit {
        let p = self.params;
        let (v, _) = self.network_voltage(state.line_current, state.snubber_v, mode);
        let snubber_i = (v - state.snubber_v) / p.snubber_r;
        let (limiter_i, mov_i) = if mode == SwitchMode::Bypassed {
            (0.0, 0.0)
        } else {
            (v / p.limiter_r, mov_current(p, v))
        };
        let switch_i = match mode {
            SwitchMode::Open => 0.0,
            _ => state.line_current - limiter_i - snubber_i - mov_i,
        };
        let magnetizing_v = self.magnetizing_voltage(state, v);
        BranchSplit {
            ssicl_v: v,
            switch_i,
            limiter_i,
            snubber_i,
            mov_i,
            magnetizing_v,
        }
    }

    fn magnetizing_voltage(&self, state: &SimState, ssicl_v: f64) -> f64 {
        let core = self.core;
        if core.core_loss_r.is_finite() {
            core.core_loss_r * (state.line_current - core.magnetizing_current(state.core_flux))
        } else {
            // Without core loss the series current equals the core current,
            // so the branch voltage follows from the loop equation.
            let p = self.params;
            let l_inc = core.incremental_inductance(state.core_flux);
            let drive = p.source_voltage(state.t) - p.series_r() * state.line_current - ssicl_v;
            drive * l_inc / (l_inc + p.series_l())
        }
    }

    /// One implicit trapezoidal step of length `dt` in a fixed switch mode.
    pub fn step(&self, state: &SimState, dt: f64, mode: SwitchMode) -> Result<SimState> {
        let fault = |detail: String| Error::IntegratorFault { t: state.t, detail };
        if !state.is_finite() {
            return Err(fault(format!("non-finite state entering step: {state:?}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(fault(format!("invalid step {dt}")));
        }
        let p = self.params;
        let core = self.core;
        let h2 = 0.5 * dt;
        let r = p.series_r();
        let l = p.series_l();
        let c = p.snubber_c;
        let rs = p.snubber_r;
        let gc = core.core_loss_g();
        let knee = core.flux_knee;
        let t1 = state.t + dt;

        let (vs0, _) = self.network_voltage(state.line_current, state.snubber_v, mode);
        let loop_hist = p.source_voltage(state.t) - r * state.line_current - vs0;
        let shunt_hist = if gc > 0.0 {
            state.line_current - core.magnetizing_current(state.core_flux)
        } else {
            0.0
        };
        let snub_hist = (vs0 - state.snubber_v) / rs;
        let v1 = p.source_voltage(t1);

        let residual = |y: &Vector3<f64>| -> (Vector3<f64>, Matrix3<f64>) {
            let (i, flux, vc) = (y[0], y[1], y[2]);
            let (vs, g_net) = self.network_voltage(i, vc, mode);
            let (dvs_di, dvs_dvc) = if g_net.is_infinite() {
                (0.0, 0.0)
            } else {
                (1.0 / g_net, 1.0 / (rs * g_net))
            };
            let f = Vector3::new(
                l * (i - state.line_current) + (flux - state.core_flux) - h2 * (loop_hist + v1 - r * i - vs),
                gc * (flux - state.core_flux) - h2 * (shunt_hist + i - core.magnetizing_current(flux)),
                c * (vc - state.snubber_v) - h2 * (snub_hist + (vs - vc) / rs),
            );
            let jac = Matrix3::new(
                l + h2 * (r + dvs_di),
                1.0,
                h2 * dvs_dvc,
                -h2,
                gc + h2 / core.incremental_inductance(flux),
                0.0,
                -h2 * dvs_di / rs,
                0.0,
                c - h2 * (dvs_dvc - 1.0) / rs,
            );
            (f, jac)
        };

        let mut y = Vector3::new(state.line_current, state.core_flux, state.snubber_v);
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let (f, jac) = residual(&y);
            let Some(delta) = jac.lu().solve(&f) else {
                return Err(fault("singular Newton matrix".into()));
            };
            let mut next = y - delta;
            // Never let one update jump across the knee: stop on it and let
            // the next iteration pick the slope of the far segment.
            let side = y[1].abs() - knee;
            let next_side = next[1].abs() - knee;
            if side != 0.0 && side.signum() != next_side.signum() && y[1].signum() * next[1].signum() >= 0.0 {
                let target = knee.copysign(if y[1] != 0.0 { y[1] } else { next[1] });
                let s = (target - y[1]) / (next[1] - y[1]);
                next = y + (next - y) * s;
                next[1] = target;
            }
            let small = (next[0] - y[0]).abs() <= 1e-12 * (1.0 + next[0].abs())
                && (next[1] - y[1]).abs() <= 1e-13 * (1.0 + next[1].abs())
                && (next[2] - y[2]).abs() <= 1e-10 * (1.0 + next[2].abs());
            y = next;
            if !(y[0].is_finite() && y[1].is_finite() && y[2].is_finite()) {
                return Err(fault(format!("Newton iterate diverged: {y:?}")));
            }
            if small {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(fault(format!(
                "Newton did not converge in {NEWTON_MAX_ITER} iterations"
            )));
        }
        Ok(SimState {
            t: t1,
            core_flux: y[1],
            line_current: y[0],
            snubber_v: y[2],
            switch_closed: mode.is_closed(),
        })
    }
}

/// Controller diagnostics reported alongside a gate decision.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub filtered: f64,
    pub estimate: f64,
    pub residual: f64,
}

/// What drives the switch for the step starting at a given instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSample {
    pub gate_on: bool,
    pub vcb_closed: bool,
    pub diagnostics: Option<Diagnostics>,
}

impl DriveSample {
    pub fn gate(gate_on: bool) -> Self {
        Self {
            gate_on,
            vcb_closed: false,
            diagnostics: None,
        }
    }

    pub fn mode(&self) -> SwitchMode {
        if self.vcb_closed {
            SwitchMode::Bypassed
        } else {
            SwitchMode::from_gate(self.gate_on)
        }
    }
}

/// Source of switch commands for [`run`]: a fixed trajectory or a controller.
pub trait SwitchDriver {
    /// Called once per integration step, before the step, with the measured
    /// line current at `t`.
    fn drive(&mut self, step: usize, t: f64, line_current: f64) -> Result<DriveSample>;

    /// Whether [`DriveSample::diagnostics`] is populated.
    fn has_diagnostics(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysOn;

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysOff;

impl SwitchDriver for AlwaysOn {
    fn drive(&mut self, _: usize, _: f64, _: f64) -> Result<DriveSample> {
        Ok(DriveSample::gate(true))
    }
}

impl SwitchDriver for AlwaysOff {
    fn drive(&mut self, _: usize, _: f64, _: f64) -> Result<DriveSample> {
        Ok(DriveSample::gate(false))
    }
}

/// Open-loop gate trajectory: starts at `initial` and flips at each listed
/// instant. A flip takes effect on the first step starting at or after it.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSchedule {
    pub initial: bool,
    pub toggles: Vec<f64>,
}

impl GateSchedule {
    pub fn new(initial: bool, toggles: Vec<f64>) -> Self {
        Self { initial, toggles }
    }

    pub fn gate_at(&self, t: f64) -> bool {
        // Small slack so a toggle placed on a step boundary is not missed to
        // rounding in n·dt.
        let flips = self.toggles.iter().filter(|&&tt| t >= tt - 1e-12).count();
        self.initial ^ (flips % 2 == 1)
    }
}

impl SwitchDriver for GateSchedule {
    fn drive(&mut self, _: usize, t: f64, _: f64) -> Result<DriveSample> {
        Ok(DriveSample::gate(self.gate_at(t)))
    }
}

/// Integration and recording settings for [`run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub duration: f64,
    pub dt: f64,
    pub sample_rate: f64,
}

impl RunConfig {
    pub fn new(duration: f64, dt: f64, sample_rate: f64) -> Self {
        Self {
            duration,
            dt,
            sample_rate,
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Integration steps per recorded sample.
    pub fn decimation(&self) -> usize {
        (1.0 / (self.sample_rate * self.dt)).round() as usize
    }

    pub fn validate(&self, f0: f64) -> Result<()> {
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::invalid("duration", "must be finite and >= 0"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be > 0"));
        }
        if self.dt > 1.0 / (50.0 * f0) * (1.0 + 1e-12) {
            return Err(Error::invalid("dt", "must not exceed 1/(50·f0)"));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::invalid("sample_rate", "must be > 0"));
        }
        let ratio = 1.0 / (self.sample_rate * self.dt);
        if ratio < 1.0 - 1e-9 {
            return Err(Error::invalid("sample_rate", "must not exceed 1/dt"));
        }
        if (ratio - ratio.round()).abs() > 1e-6 {
            return Err(Error::invalid("sample_rate", "1/(sample_rate·dt) must be an integer"));
        }
        Ok(())
    }
}

pub mod channel {
    pub const SOURCE_V: &str = "source_v";
    pub const LINE_CURRENT: &str = "line_current";
    pub const SWITCH_CURRENT: &str = "switch_current";
    pub const LIMITER_CURRENT: &str = "limiter_current";
    pub const SNUBBER_CURRENT: &str = "snubber_current";
    pub const MOV_CURRENT: &str = "mov_current";
    pub const SSICL_V: &str = "ssicl_v";
    pub const MAGNETIZING_V: &str = "magnetizing_v";
    pub const CORE_FLUX: &str = "core_flux";
    pub const GATE: &str = "gate";
    pub const VCB: &str = "vcb";
    pub const FILTERED: &str = "filtered";
    pub const ESTIMATE: &str = "estimate";
    pub const RESIDUAL: &str = "residual";

    /// Channels present in every record.
    pub const PLANT: [&str; 11] = [
        SOURCE_V,
        LINE_CURRENT,
        SWITCH_CURRENT,
        LIMITER_CURRENT,
        SNUBBER_CURRENT,
        MOV_CURRENT,
        SSICL_V,
        MAGNETIZING_V,
        CORE_FLUX,
        GATE,
        VCB,
    ];

    /// Appended when the switch is driven by a controller.
    pub const CONTROLLER: [&str; 3] = [FILTERED, ESTIMATE, RESIDUAL];
}

/// Simulates the circuit from the core's remnant-flux initial state.
pub fn run(
    params: &CircuitParams,
    core: &SaturableCore,
    driver: &mut dyn SwitchDriver,
    cfg: &RunConfig,
) -> Result<WaveformRecord> {
    params.validate()?;
    core.validate()?;
    cfg.validate(params.f0)?;

    let mut names: Vec<&str> = channel::PLANT.to_vec();
    let with_diag = driver.has_diagnostics();
    if with_diag {
        names.extend(channel::CONTROLLER);
    }
    let mut record = WaveformRecord::new(cfg.sample_rate, &names);
    record.push_meta("dt_s", format!("{:e}", cfg.dt));
    record.push_meta("duration_s", format!("{:e}", cfg.duration));

    let n_steps = cfg.steps();
    if n_steps == 0 {
        return Ok(record);
    }
    let decimation = cfg.decimation();
    let plant = Plant::new(params, core);
    let mut state = SimState::initial(core);
    let mut row = vec![0.0; names.len()];

    for n in 0..=n_steps {
        let t = n as f64 * cfg.dt;
        state.t = t;
        let drive = driver.drive(n, t, state.line_current)?;
        let mode = drive.mode();
        if n % decimation == 0 {
            let s = plant.split(&state, mode);
            row[0] = params.source_voltage(t);
            row[1] = state.line_current;
            row[2] = s.switch_i;
            row[3] = s.limiter_i;
            row[4] = s.snubber_i;
            row[5] = s.mov_i;
            row[6] = s.ssicl_v;
            row[7] = s.magnetizing_v;
            row[8] = state.core_flux;
            row[9] = if drive.gate_on { 1.0 } else { 0.0 };
            row[10] = if drive.vcb_closed { 1.0 } else { 0.0 };
            if with_diag {
                let d = drive.diagnostics.unwrap_or_default();
                row[11] = d.filtered;
                row[12] = d.estimate;
                row[13] = d.residual;
            }
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::IntegratorFault {
                    t,
                    detail: format!("channel `{}` is {}", names[k], row[k]),
                });
            }
            record.push_row(t, &row);
        }
        if n < n_steps {
            state = plant.step(&state, cfg.dt, mode)?;
            if !state.is_finite() {
                return Err(Error::IntegratorFault {
                    t,
                    detail: "state became non-finite".into(),
                });
            }
        }
    }
    Ok(record)
}
