//! Scenario definition, loading, execution and metric extraction.
//!
//! Scenarios are TOML documents with one table per subsystem and units in
//! every key name:
//!
//! ```toml
//! [scenario]
//! name = "lab-worst-case"
//!
//! [circuit]
//! v_rms_v = 220.0
//! f0_hz = 50.0
//! source_r_ohm = 1.0
//! source_l_h = 0.005
//! limiter_r_ohm = 10.0
//! snubber_r_ohm = 15.0
//! snubber_c_f = 47e-9
//! mov_clamp_v = 270.0
//! mov_ref_i_a = 1e-3
//! mov_alpha = 25.0
//! energize_angle_deg = 0.0
//!
//! [nameplate]
//! rated_va = 2300.0
//! # ...
//!
//! [core]
//! knee_pu = 1.15
//! sat_ratio = 0.0884
//! remnant_pu = 0.8
//!
//! [controller]          # omit for an uncontrolled energization
//! i_th_a = 0.1
//! # ...
//!
//! [run]
//! duration_s = 0.3
//! dt_s = 5e-6
//! sample_rate_hz = 100000.0
//! seed = 1
//! noise_rms_a = 0.0
//! ```

use std::f64::consts::SQRT_2;

use crate::circuit::{channel, run, AlwaysOn, CircuitParams, RunConfig, SwitchDriver};
use crate::controller::{ClosedLoop, ControllerConfig};
use crate::error::{Error, Result, Violation};
use crate::transformer::{core_from_nameplate, CoreCalibration, NameplateParams, SaturableCore};
use crate::waveform::WaveformRecord;

/// Saturation slope ratio that puts the unlimited worst-case first peak of
/// the laboratory transformer at about 25 A (knee 1.15 pu, zero-crossing
/// energization, 0.8 pu remnant flux). See `calibrate_sat_ratio`.
pub const LAB_SAT_RATIO: f64 = 0.0884;

/// Minimum recorder rate accepted for metric extraction (Hz).
pub const MIN_RECORDER_RATE: f64 = 10_000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub circuit: CircuitParams,
    pub nameplate: NameplateParams,
    pub core: CoreCalibration,
    /// `None` runs the energization uncontrolled (switch permanently closed).
    pub controller: Option<ControllerConfig>,
    pub duration: f64,
    pub dt: f64,
    /// Recorder rate (Hz).
    pub sample_rate: f64,
    pub seed: u64,
    /// RMS of the white noise added to the controller's current samples (A).
    pub noise_rms: f64,
}

impl Scenario {
    /// Laboratory prototype, worst-case energization, controller attached.
    pub fn lab_prototype() -> Self {
        let nameplate = NameplateParams::lab_transformer();
        Self {
            name: "lab-prototype".into(),
            circuit: CircuitParams::lab_prototype(),
            nameplate,
            core: CoreCalibration {
                knee_pu: 1.15,
                sat_ratio: LAB_SAT_RATIO,
                remnant_pu: 0.8,
            },
            controller: Some(ControllerConfig::lab_prototype()),
            duration: 0.3,
            dt: 5e-6,
            sample_rate: 100_000.0,
            seed: 1,
            noise_rms: 0.0,
        }
    }

    pub fn without_controller(&self) -> Self {
        Self {
            controller: None,
            ..self.clone()
        }
    }

    pub fn with_angle_deg(mut self, angle_deg: f64) -> Self {
        self.circuit.energize_angle = angle_deg.to_radians();
        self
    }

    pub fn with_remnant_pu(mut self, remnant_pu: f64) -> Self {
        self.core.remnant_pu = remnant_pu;
        self
    }

    pub fn period(&self) -> f64 {
        self.circuit.period()
    }

    pub fn core_model(&self) -> Result<SaturableCore> {
        core_from_nameplate(&self.nameplate, &self.core)
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig::new(self.duration, self.dt, self.sample_rate)
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        let mut check = |prefix: &str, r: Result<()>| {
            if let Err(e) = r {
                v.push(violation_from(prefix, e));
            }
        };
        check("circuit", self.circuit.validate());
        check("nameplate", self.nameplate.validate());
        check("core", self.core.validate());
        if let Some(c) = &self.controller {
            check("controller", c.validate());
        }
        if (self.circuit.f0 - self.nameplate.f0).abs() > 1e-9 * self.circuit.f0.abs() {
            v.push(Violation::new("nameplate.f0_hz", "must equal circuit.f0_hz"));
        }
        if let Some(c) = &self.controller {
            if (c.f0 - self.circuit.f0).abs() > 1e-9 * self.circuit.f0.abs() {
                v.push(Violation::new("controller.f0", "must equal circuit.f0_hz"));
            }
        }
        let f0 = self.circuit.f0;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            v.push(Violation::new("run.dt_s", "must be > 0"));
        } else if f0 > 0.0 && self.dt > 1.0 / (50.0 * f0) * (1.0 + 1e-12) {
            v.push(Violation::new("run.dt_s", "must not exceed 1/(50·f0)"));
        }
        if !(self.duration.is_finite() && f0 > 0.0 && self.duration >= 5.0 / f0 * (1.0 - 1e-12)) {
            v.push(Violation::new(
                "run.duration_s",
                "must cover at least 5 fundamental cycles",
            ));
        }
        if !(self.sample_rate >= MIN_RECORDER_RATE) {
            v.push(Violation::new(
                "run.sample_rate_hz",
                format!("must be >= {MIN_RECORDER_RATE} Hz"),
            ));
        } else if self.dt > 0.0 {
            if let Err(e) = self.run_config().validate(f0) {
                v.push(violation_from("run", e));
            }
        }
        if let (Some(c), true) = (&self.controller, self.dt > 0.0) {
            let ratio = 1.0 / (c.sample_rate * self.dt);
            if c.sample_rate > 0.0 && (ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6) {
                v.push(Violation::new(
                    "controller.sample_rate_hz",
                    "controller period must be an integer multiple of run.dt_s",
                ));
            }
        }
        if !(self.noise_rms.is_finite() && self.noise_rms >= 0.0) {
            v.push(Violation::new("run.noise_rms_a", "must be finite and >= 0"));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}

fn violation_from(prefix: &str, e: Error) -> Violation {
    match e {
        Error::InvalidParameter { field, reason } => Violation::new(format!("{prefix}.{field}"), reason),
        other => Violation::new(prefix, other.to_string()),
    }
}

/// Scalar outcome of one energization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    /// Largest |line current| in the first two fundamental cycles (A).
    pub first_peak: f64,
    /// Largest |line current| in the final fundamental cycle (A).
    pub steady_peak: f64,
    /// Unlimited first peak over limited first peak, for paired runs.
    pub limiting_ratio: Option<f64>,
    /// Instant the bypass breaker closed.
    pub bypass_time: Option<f64>,
    /// Instant after which the estimate stays within 5 % of the steady peak
    /// of the filtered current.
    pub settle_time: Option<f64>,
    /// Energy dissipated in the limiter resistor (J).
    pub limiter_energy: f64,
}

/// Extracts [`RunMetrics`] from a recorded run.
pub fn metrics_from_record(rec: &WaveformRecord, f0: f64, duration: f64) -> RunMetrics {
    let period = 1.0 / f0;
    let time = rec.time();
    let line = rec.channel(channel::LINE_CURRENT).unwrap_or(&[]);
    let peak_in = |range: std::ops::Range<usize>| line[range].iter().fold(0.0f64, |m, &i| m.max(i.abs()));
    let first_peak = peak_in(rec.window(0.0, 2.0 * period));
    let steady_peak = peak_in(rec.window(duration - period, duration + 1.0 / rec.sample_rate()));

    let bypass_time = rec
        .channel(channel::VCB)
        .and_then(|vcb| vcb.iter().position(|&v| v > 0.5))
        .map(|k| time[k]);

    let settle_time = match (rec.channel(channel::ESTIMATE), rec.channel(channel::FILTERED)) {
        (Some(est), Some(filt)) if !time.is_empty() => {
            let band = 0.05 * steady_peak;
            match (0..time.len()).rev().find(|&k| (est[k] - filt[k]).abs() >= band) {
                None => Some(time[0]),
                Some(k) if k + 1 < time.len() => Some(time[k + 1]),
                Some(_) => None,
            }
        }
        _ => None,
    };

    let limiter_energy = match (rec.channel(channel::LIMITER_CURRENT), rec.channel(channel::SSICL_V)) {
        (Some(i), Some(v)) => {
            let p: Vec<f64> = i.iter().zip(v).map(|(i, v)| i * v).collect();
            trapezoid(time, &p)
        }
        _ => 0.0,
    };

    RunMetrics {
        first_peak,
        steady_peak,
        limiting_ratio: None,
        bypass_time,
        settle_time,
        limiter_energy,
    }
}

fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1]))
        .sum()
}

/// Runs one scenario deterministically and extracts its metrics.
pub fn run_scenario(s: &Scenario) -> Result<(WaveformRecord, RunMetrics)> {
    run_inner(s).map_err(|e| Error::Scenario {
        scenario: s.name.clone(),
        source: Box::new(e),
    })
}

fn run_inner(s: &Scenario) -> Result<(WaveformRecord, RunMetrics)> {
    s.validate()?;
    let core = s.core_model()?;
    let mut driver: Box<dyn SwitchDriver> = match &s.controller {
        Some(cfg) => Box::new(ClosedLoop::new(*cfg, s.dt, s.noise_rms, s.seed)?),
        None => Box::new(AlwaysOn),
    };
    let mut rec = run(&s.circuit, &core, driver.as_mut(), &s.run_config())?;
    rec.push_meta("scenario", s.name.clone());
    rec.push_meta("seed", s.seed.to_string());
    rec.push_meta(
        "energize_angle_deg",
        format!("{}", s.circuit.energize_angle.to_degrees()),
    );
    rec.push_meta("remnant_pu", format!("{}", s.core.remnant_pu));
    rec.push_meta("controlled", if s.controller.is_some() { "true" } else { "false" });
    let metrics = metrics_from_record(&rec, s.circuit.f0, s.duration);
    Ok((rec, metrics))
}

/// Limited and unlimited runs of the same plant and initial conditions.
#[derive(Debug, Clone)]
pub struct PairedRun {
    pub limited: (WaveformRecord, RunMetrics),
    pub unlimited: (WaveformRecord, RunMetrics),
}

impl PairedRun {
    pub fn limiting_ratio(&self) -> Option<f64> {
        self.limited.1.limiting_ratio
    }
}

/// Runs `s` with and without its controller; the limited metrics carry the
/// limiting ratio.
pub fn run_paired(s: &Scenario) -> Result<PairedRun> {
    if s.controller.is_none() {
        return Err(Error::Validation(vec![Violation::new(
            "controller",
            "a paired run needs a controller section",
        )]));
    }
    let unlimited = run_scenario(&s.without_controller())?;
    let mut limited = run_scenario(s)?;
    limited.1.limiting_ratio = ratio(unlimited.1.first_peak, limited.1.first_peak);
    Ok(PairedRun { limited, unlimited })
}

pub(crate) fn ratio(unlimited: f64, limited: f64) -> Option<f64> {
    (limited > 0.0).then(|| unlimited / limited)
}

/// Three scenarios with the source phase shifted by 0, −120° and +120°.
pub fn balanced_three_phase(base: &Scenario) -> [Scenario; 3] {
    let angle = base.circuit.energize_angle.to_degrees();
    [0.0, -120.0, 120.0].map(|shift| {
        let mut s = base.clone().with_angle_deg(angle + shift);
        s.name = format!("{}-phase{:+}", base.name, shift as i32);
        s
    })
}

/// Three fully independent closed-loop runs, one per phase, executed
/// concurrently. Each slot carries that phase's own outcome.
pub fn three_phase_run(
    configs: &[ControllerConfig; 3],
    scenarios: &[Scenario; 3],
) -> [Result<(WaveformRecord, RunMetrics)>; 3] {
    let phases: Vec<Scenario> = scenarios
        .iter()
        .zip(configs)
        .map(|(s, c)| Scenario {
            controller: Some(*c),
            ..s.clone()
        })
        .collect();
    let mut out = std::thread::scope(|scope| {
        let handles: Vec<_> = phases.iter().map(|s| scope.spawn(move || run_scenario(s))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("phase worker panicked"))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .enumerate()
    .map(|(phase, r)| {
        r.map_err(|e| Error::Phase {
            phase,
            source: Box::new(e),
        })
    });
    [out.next().unwrap(), out.next().unwrap(), out.next().unwrap()]
}

/// Finds the saturation slope ratio that gives an unlimited first peak of
/// `target_peak` for the scenario's plant and initial conditions, by
/// bisection on `sat_ratio` (the peak falls monotonically as it grows).
pub fn calibrate_sat_ratio(base: &Scenario, target_peak: f64, lo: f64, hi: f64) -> Result<f64> {
    let mut s = base.without_controller();
    s.duration = 5.0 * s.period();
    let peak = |ratio: f64| -> Result<f64> {
        let mut t = s.clone();
        t.core.sat_ratio = ratio;
        Ok(run_scenario(&t)?.1.first_peak)
    };
    let (mut lo, mut hi) = (lo, hi);
    let (p_lo, p_hi) = (peak(lo)?, peak(hi)?);
    if !(p_lo >= target_peak && p_hi <= target_peak) {
        return Err(Error::Domain(format!(
            "target {target_peak} A not bracketed: {p_lo} A at {lo}, {p_hi} A at {hi}"
        )));
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if peak(mid)? > target_peak {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-6 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// Loading

/// Parses and validates a scenario document.
pub fn load_scenario(config_text: &str) -> Result<Scenario> {
    let doc: toml::Table = config_text.parse().map_err(|e: toml::de::Error| {
        let (line, column) = e.span().map(|s| line_col(config_text, s.start)).unwrap_or((0, 0));
        Error::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let mut reader = Reader { violations: Vec::new() };
    let scenario = reader.scenario(&doc);
    if !reader.violations.is_empty() {
        return Err(Error::Validation(reader.violations));
    }
    let scenario = scenario.expect("no violations implies a scenario");
    scenario.validate()?;
    Ok(scenario)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, column)
}

struct Reader {
    violations: Vec<Violation>,
}

struct Section<'a> {
    name: &'static str,
    table: Option<&'a toml::Table>,
}

impl Reader {
    fn section<'a>(&mut self, doc: &'a toml::Table, name: &'static str, required: bool) -> Section<'a> {
        match doc.get(name) {
            Some(toml::Value::Table(t)) => Section { name, table: Some(t) },
            Some(_) => {
                self.violations.push(Violation::new(name, "must be a table"));
                Section { name, table: None }
            }
            None => {
                if required {
                    self.violations.push(Violation::new(name, "missing section"));
                }
                Section { name, table: None }
            }
        }
    }

    fn unknown_keys(&mut self, sec: &Section<'_>, known: &[&str]) {
        if let Some(t) = sec.table {
            for key in t.keys() {
                if !known.contains(&key.as_str()) {
                    self.violations
                        .push(Violation::new(format!("{}.{key}", sec.name), "unknown key"));
                }
            }
        }
    }

    fn opt_f64(&mut self, sec: &Section<'_>, key: &str) -> Option<f64> {
        let value = sec.table?.get(key)?;
        match value {
            toml::Value::Float(f) => Some(*f),
            toml::Value::Integer(i) => Some(*i as f64),
            _ => {
                self.violations
                    .push(Violation::new(format!("{}.{key}", sec.name), "must be a number"));
                None
            }
        }
    }

    fn req_f64(&mut self, sec: &Section<'_>, key: &str) -> Option<f64> {
        let present = sec.table.is_some_and(|t| t.contains_key(key));
        if !present {
            if sec.table.is_some() {
                self.violations
                    .push(Violation::new(format!("{}.{key}", sec.name), "missing required value"));
            }
            return None;
        }
        self.opt_f64(sec, key)
    }

    fn opt_u64(&mut self, sec: &Section<'_>, key: &str) -> Option<u64> {
        let value = sec.table?.get(key)?;
        match value {
            toml::Value::Integer(i) if *i >= 0 => Some(*i as u64),
            _ => {
                self.violations.push(Violation::new(
                    format!("{}.{key}", sec.name),
                    "must be a non-negative integer",
                ));
                None
            }
        }
    }

    fn req_u64(&mut self, sec: &Section<'_>, key: &str) -> Option<u64> {
        if sec.table.is_some_and(|t| !t.contains_key(key)) {
            self.violations
                .push(Violation::new(format!("{}.{key}", sec.name), "missing required value"));
            return None;
        }
        self.opt_u64(sec, key)
    }

    fn scenario(&mut self, doc: &toml::Table) -> Option<Scenario> {
        for key in doc.keys() {
            if !["scenario", "circuit", "nameplate", "core", "controller", "run"].contains(&key.as_str()) {
                self.violations.push(Violation::new(key.clone(), "unknown section"));
            }
        }
        let meta = self.section(doc, "scenario", false);
        self.unknown_keys(&meta, &["name"]);
        let name = match meta.table.and_then(|t| t.get("name")) {
            Some(toml::Value::String(s)) => s.clone(),
            Some(_) => {
                self.violations
                    .push(Violation::new("scenario.name", "must be a string"));
                String::new()
            }
            None => "scenario".to_string(),
        };

        let np = self.nameplate(doc);
        let circuit = self.circuit(doc, np.as_ref());
        let core = self.core(doc);
        let f0 = circuit.as_ref().map(|c| c.f0);
        let controller = self.controller(doc, f0, np.as_ref());

        let run = self.section(doc, "run", true);
        self.unknown_keys(&run, &["duration_s", "dt_s", "sample_rate_hz", "seed", "noise_rms_a"]);
        let duration = self.req_f64(&run, "duration_s");
        let dt = self.req_f64(&run, "dt_s");
        let sample_rate = self.req_f64(&run, "sample_rate_hz");
        let seed = self.opt_u64(&run, "seed").unwrap_or(0);
        let noise_rms = self.opt_f64(&run, "noise_rms_a").unwrap_or(0.0);

        Some(Scenario {
            name,
            circuit: circuit?,
            nameplate: np?,
            core: core?,
            controller: controller?,
            duration: duration?,
            dt: dt?,
            sample_rate: sample_rate?,
            seed,
            noise_rms,
        })
    }

    fn nameplate(&mut self, doc: &toml::Table) -> Option<NameplateParams> {
        let sec = self.section(doc, "nameplate", true);
        const KEYS: [&str; 8] = [
            "rated_va",
            "v_primary_v",
            "v_secondary_v",
            "series_z_real_ohm",
            "series_z_imag_ohm",
            "x_m_ohm",
            "r_c_ohm",
            "f0_hz",
        ];
        self.unknown_keys(&sec, &KEYS);
        let v: Vec<Option<f64>> = KEYS.iter().map(|k| self.req_f64(&sec, k)).collect();
        Some(NameplateParams {
            rated_va: v[0]?,
            v_primary: v[1]?,
            v_secondary: v[2]?,
            series_z_real: v[3]?,
            series_z_imag: v[4]?,
            x_m: v[5]?,
            r_c: v[6]?,
            f0: v[7]?,
        })
    }

    fn circuit(&mut self, doc: &toml::Table, np: Option<&NameplateParams>) -> Option<CircuitParams> {
        let sec = self.section(doc, "circuit", true);
        self.unknown_keys(
            &sec,
            &[
                "v_rms_v",
                "f0_hz",
                "source_r_ohm",
                "source_l_h",
                "winding_r_ohm",
                "winding_l_h",
                "limiter_r_ohm",
                "snubber_r_ohm",
                "snubber_c_f",
                "mov_clamp_v",
                "mov_ref_i_a",
                "mov_alpha",
                "energize_angle_deg",
                "switch_on_r_ohm",
            ],
        );
        let v_rms = self.req_f64(&sec, "v_rms_v");
        let f0 = self.req_f64(&sec, "f0_hz");
        let source_r = self.req_f64(&sec, "source_r_ohm");
        let source_l = self.req_f64(&sec, "source_l_h");
        // The winding impedance defaults to the nameplate series impedance.
        let winding_r = self
            .opt_f64(&sec, "winding_r_ohm")
            .or_else(|| np.map(|n| n.series_z_real));
        let winding_l = self.opt_f64(&sec, "winding_l_h").or_else(|| np.map(|n| n.winding_l()));
        let limiter_r = self.req_f64(&sec, "limiter_r_ohm");
        let snubber_r = self.req_f64(&sec, "snubber_r_ohm");
        let snubber_c = self.req_f64(&sec, "snubber_c_f");
        let mov_clamp_v = self.req_f64(&sec, "mov_clamp_v");
        let mov_ref_i = self.req_f64(&sec, "mov_ref_i_a");
        let mov_alpha = self.req_f64(&sec, "mov_alpha");
        let angle = self.req_f64(&sec, "energize_angle_deg");
        let switch_on_r = self.opt_f64(&sec, "switch_on_r_ohm").unwrap_or(0.0);
        sec.table?;
        Some(CircuitParams {
            v_peak: SQRT_2 * v_rms?,
            f0: f0?,
            source_r: source_r?,
            source_l: source_l?,
            winding_r: winding_r?,
            winding_l: winding_l?,
            limiter_r: limiter_r?,
            snubber_r: snubber_r?,
            snubber_c: snubber_c?,
            mov_clamp_v: mov_clamp_v?,
            mov_ref_i: mov_ref_i?,
            mov_alpha: mov_alpha?,
            energize_angle: angle?.to_radians(),
            switch_on_r,
        })
    }

    fn core(&mut self, doc: &toml::Table) -> Option<CoreCalibration> {
        let sec = self.section(doc, "core", true);
        self.unknown_keys(&sec, &["knee_pu", "sat_ratio", "remnant_pu"]);
        let knee_pu = self.req_f64(&sec, "knee_pu");
        let sat_ratio = self.req_f64(&sec, "sat_ratio");
        let remnant_pu = self.req_f64(&sec, "remnant_pu");
        Some(CoreCalibration {
            knee_pu: knee_pu?,
            sat_ratio: sat_ratio?,
            remnant_pu: remnant_pu?,
        })
    }

    fn controller(
        &mut self,
        doc: &toml::Table,
        f0: Option<f64>,
        np: Option<&NameplateParams>,
    ) -> Option<Option<ControllerConfig>> {
        let sec = self.section(doc, "controller", false);
        if sec.table.is_none() {
            return Some(None);
        }
        self.unknown_keys(
            &sec,
            &[
                "i_th_a",
                "lpf_cutoff_hz",
                "sample_rate_hz",
                "bypass_cycles",
                "kf_q",
                "kf_r",
                "kf_sigma_a",
            ],
        );
        let i_th = self.req_f64(&sec, "i_th_a");
        let lpf_cutoff = self.req_f64(&sec, "lpf_cutoff_hz");
        let sample_rate = self.req_f64(&sec, "sample_rate_hz");
        let bypass_cycles = self.req_u64(&sec, "bypass_cycles");
        let kf_q = self.req_f64(&sec, "kf_q");
        let kf_r = self.req_f64(&sec, "kf_r");
        let kf_sigma = self
            .opt_f64(&sec, "kf_sigma_a")
            .or_else(|| np.map(|n| n.rated_peak_current()));
        let bypass_cycles = match bypass_cycles.map(u32::try_from) {
            Some(Ok(n)) => Some(n),
            Some(Err(_)) => {
                self.violations
                    .push(Violation::new("controller.bypass_cycles", "out of range"));
                None
            }
            None => None,
        };
        Some(Some(ControllerConfig {
            i_th: i_th?,
            lpf_cutoff: lpf_cutoff?,
            sample_rate: sample_rate?,
            bypass_cycles: bypass_cycles?,
            f0: f0?,
            kf_q: kf_q?,
            kf_r: kf_r?,
            kf_sigma: kf_sigma?,
        }))
    }
}

/// Serializes a scenario back to its document form.
pub fn scenario_to_toml(s: &Scenario) -> String {
    let c = &s.circuit;
    let n = &s.nameplate;
    let k = &s.core;
    let mut out = format!(
        "[scenario]\nname = {name:?}\n\n\
         [circuit]\nv_rms_v = {v:?}\nf0_hz = {f0:?}\nsource_r_ohm = {sr:?}\nsource_l_h = {sl:?}\n\
         winding_r_ohm = {wr:?}\nwinding_l_h = {wl:?}\nlimiter_r_ohm = {lr:?}\nsnubber_r_ohm = {snr:?}\n\
         snubber_c_f = {snc:?}\nmov_clamp_v = {mc:?}\nmov_ref_i_a = {mi:?}\nmov_alpha = {ma:?}\n\
         energize_angle_deg = {ang:?}\nswitch_on_r_ohm = {ron:?}\n\n\
         [nameplate]\nrated_va = {va:?}\nv_primary_v = {v1:?}\nv_secondary_v = {v2:?}\n\
         series_z_real_ohm = {zr:?}\nseries_z_imag_ohm = {zi:?}\nx_m_ohm = {xm:?}\nr_c_ohm = {rc:?}\nf0_hz = {nf:?}\n\n\
         [core]\nknee_pu = {kp:?}\nsat_ratio = {sat:?}\nremnant_pu = {rem:?}\n\n",
        name = s.name,
        v = c.v_peak / SQRT_2,
        f0 = c.f0,
        sr = c.source_r,
        sl = c.source_l,
        wr = c.winding_r,
        wl = c.winding_l,
        lr = c.limiter_r,
        snr = c.snubber_r,
        snc = c.snubber_c,
        mc = c.mov_clamp_v,
        mi = c.mov_ref_i,
        ma = c.mov_alpha,
        ang = c.energize_angle.to_degrees(),
        ron = c.switch_on_r,
        va = n.rated_va,
        v1 = n.v_primary,
        v2 = n.v_secondary,
        zr = n.series_z_real,
        zi = n.series_z_imag,
        xm = n.x_m,
        rc = n.r_c,
        nf = n.f0,
        kp = k.knee_pu,
        sat = k.sat_ratio,
        rem = k.remnant_pu,
    );
    if let Some(ctl) = &s.controller {
        out.push_str(&format!(
            "[controller]\ni_th_a = {:?}\nlpf_cutoff_hz = {:?}\nsample_rate_hz = {:?}\nbypass_cycles = {}\n\
             kf_q = {:?}\nkf_r = {:?}\nkf_sigma_a = {:?}\n\n",
            ctl.i_th, ctl.lpf_cutoff, ctl.sample_rate, ctl.bypass_cycles, ctl.kf_q, ctl.kf_r, ctl.kf_sigma
        ));
    }
    out.push_str(&format!(
        "[run]\nduration_s = {:?}\ndt_s = {:?}\nsample_rate_hz = {:?}\nseed = {}\nnoise_rms_a = {:?}\n",
        s.duration, s.dt, s.sample_rate, s.seed, s.noise_rms
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn document_round_trip() {
        let s = Scenario::lab_prototype();
        let back = load_scenario(&scenario_to_toml(&s)).unwrap();
        assert_eq!(back.name, s.name);
        assert_eq!(back.nameplate, s.nameplate);
        assert_eq!(back.core, s.core);
        assert_eq!(back.controller, s.controller);
        assert!((back.circuit.v_peak - s.circuit.v_peak).abs() < 1e-12);
        assert_eq!(back.dt, s.dt);
    }

    #[test]
    fn parse_error_has_position() {
        let err = load_scenario("[circuit]\nv_rms_v = = 3\n").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column >= 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_limiter_is_named() {
        let text = scenario_to_toml(&Scenario::lab_prototype()).replace("limiter_r_ohm = 10.0\n", "");
        let err = load_scenario(&text).unwrap_err();
        let Error::Validation(v) = err else { panic!("{err:?}") };
        assert!(v.iter().any(|v| v.path == "circuit.limiter_r_ohm"), "{v:?}");
    }

    #[test]
    fn all_violations_reported() {
        let text = scenario_to_toml(&Scenario::lab_prototype())
            .replace("dt_s = 5e-6", "dt_s = 0.0")
            .replace("x_m_ohm = 169.0", "x_m_ohm = -1.0")
            .replace("knee_pu = 1.15", "knee_pu = 0.5");
        let err = load_scenario(&text).unwrap_err();
        let Error::Validation(v) = err else { panic!("{err:?}") };
        let paths: Vec<&str> = v.iter().map(|v| v.path.as_str()).collect();
        assert!(paths.contains(&"run.dt_s"), "{paths:?}");
        assert!(paths.contains(&"nameplate.x_m"), "{paths:?}");
        assert!(paths.contains(&"core.knee_pu"), "{paths:?}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = scenario_to_toml(&Scenario::lab_prototype()).replace("[core]\n", "[core]\nknee = 1.0\n");
        let Error::Validation(v) = load_scenario(&text).unwrap_err() else {
            panic!()
        };
        assert!(v.iter().any(|v| v.path == "core.knee"));
    }

    #[test]
    fn short_duration_rejected() {
        let mut s = Scenario::lab_prototype();
        s.duration = 0.05;
        assert!(matches!(s.validate(), Err(Error::Validation(_))));
    }
}
