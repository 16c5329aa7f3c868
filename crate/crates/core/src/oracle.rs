//! Independent reference implementations used to cross-check the simulator
//! and the filter.
//!
//! Nothing here calls into the production integrator or filter: the RL
//! solution is evaluated from its closed form and the Kalman recursion is
//! written out on plain arrays. Values produced here are frozen as golden
//! files whose header records the oracle version and a SHA-256 of the
//! inputs, so a silent change to either side is caught.

use std::f64::consts::PI;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const ORACLE_VERSION: u32 = 1;

/// Linear series RL loop driven by `v_peak·sin(ωt + phase)`, whose
/// resistance switches between `r_closed` and `r_open`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearLoop {
    pub v_peak: f64,
    pub omega: f64,
    pub phase: f64,
    pub l: f64,
    pub r_closed: f64,
    pub r_open: f64,
}

impl LinearLoop {
    /// Laboratory values: 220 V / 50 Hz source with 1 Ω + 5 mH, 1.13 Ω +
    /// j2.2 Ω winding, j169 Ω unsaturated magnetizing reactance (core loss
    /// neglected), 10 Ω limiter.
    pub fn lab() -> Self {
        let omega = 2.0 * PI * 50.0;
        Self {
            v_peak: 220.0 * 2f64.sqrt(),
            omega,
            phase: 0.0,
            l: 5e-3 + 2.2 / omega + 169.0 / omega,
            r_closed: 1.0 + 1.13,
            r_open: 1.0 + 1.13 + 10.0,
        }
    }

    pub fn z(&self, r: f64) -> f64 {
        (r * r + (self.omega * self.l).powi(2)).sqrt()
    }
}

/// Line current of `lp` sampled at `times`, starting from zero current at
/// t = 0 with the switch closed; the switch toggles at each instant of
/// `toggles` (ascending). Each segment is the exact RL solution, started
/// from the current the previous segment reached at the toggle.
pub fn switched_rl_reference(lp: &LinearLoop, times: &[f64], toggles: &[f64]) -> Vec<f64> {
    // Current on a segment that starts at `ts` (simulation time) with `i0`.
    let segment = |r: f64, ts: f64, i0: f64, t: f64| -> f64 {
        let z = lp.z(r);
        let phi = (lp.omega * lp.l / r).atan();
        let amp = lp.v_peak / z;
        let src = |t: f64| lp.omega * t + lp.phase - phi;
        (i0 - amp * src(ts).sin()) * (-(r / lp.l) * (t - ts)).exp() + amp * src(t).sin()
    };
    // Segment starts and initial currents, stitched in order.
    let mut starts = vec![(0.0, lp.r_closed, 0.0)];
    for (k, &ts) in toggles.iter().enumerate() {
        let (prev_t, prev_r, prev_i) = starts[k];
        let i_at = segment(prev_r, prev_t, prev_i, ts);
        let r = if k % 2 == 0 { lp.r_open } else { lp.r_closed };
        starts.push((ts, r, i_at));
    }
    times
        .iter()
        .map(|&t| {
            let (ts, r, i0) = *starts.iter().rev().find(|(ts, _, _)| *ts <= t).unwrap_or(&starts[0]);
            segment(r, ts, i0, t)
        })
        .collect()
}

/// Estimates of `samples` by the sinusoid Kalman filter, transcribed step
/// by step with 2×2 arrays:
///
/// 1. `K = P⁻h / (hᵀP⁻h + r)`
/// 2. `x⁺ = x⁻ + K(y − hᵀx⁻)`
/// 3. `P⁺ = P⁻ − K hᵀ P⁻`
/// 4. `x⁻ = M x⁺`, `P⁻ = M P⁺ Mᵀ + q b bᵀ`
///
/// with `M = [[2cos ω0, −1], [1, 0]]`, `h = b = [1, 0]`. Returns `x⁺[0]`.
pub fn dense_kf_reference(omega0: f64, q: f64, r: f64, p0: [[f64; 2]; 2], samples: &[f64]) -> Vec<f64> {
    let m = [[2.0 * omega0.cos(), -1.0], [1.0, 0.0]];
    let mut x = [0.0f64; 2];
    let mut p = p0;
    let mut out = Vec::with_capacity(samples.len());
    for &y in samples {
        let ph = [p[0][0], p[1][0]];
        let s = p[0][0] + r;
        let k = [ph[0] / s, ph[1] / s];
        let innov = y - x[0];
        let xp = [x[0] + k[0] * innov, x[1] + k[1] * innov];
        // K hᵀ P: row i is k[i] times the first row of P.
        let mut pp = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                pp[i][j] = p[i][j] - k[i] * p[0][j];
            }
        }
        out.push(xp[0]);
        x = [m[0][0] * xp[0] + m[0][1] * xp[1], m[1][0] * xp[0] + m[1][1] * xp[1]];
        let mut mp = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                mp[i][j] = m[i][0] * pp[0][j] + m[i][1] * pp[1][j];
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                p[i][j] = mp[i][0] * m[j][0] + mp[i][1] * m[j][1];
            }
        }
        p[0][0] += q;
    }
    out
}

/// A frozen oracle result: named inputs, a sampled expected series and the
/// relative tolerance the production code must meet against it.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCase {
    pub name: String,
    pub inputs: Vec<(String, f64)>,
    /// Sample abscissa (time, or sample index).
    pub abscissa: Vec<f64>,
    pub expected: Vec<f64>,
    pub tolerance: f64,
}

impl OracleCase {
    pub fn input(&self, key: &str) -> Option<f64> {
        self.inputs.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// SHA-256 over the name, the inputs and the abscissa.
    pub fn input_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        for (k, v) in &self.inputs {
            h.update(k.as_bytes());
            h.update(v.to_le_bytes());
        }
        for t in &self.abscissa {
            h.update(t.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn to_golden_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# oracle_version={ORACLE_VERSION}");
        let _ = writeln!(out, "# input_sha256={}", self.input_hash());
        let _ = writeln!(out, "# name={}", self.name);
        let _ = writeln!(out, "# tolerance={:e}", self.tolerance);
        for (k, v) in &self.inputs {
            let _ = writeln!(out, "# input.{k}={v:e}");
        }
        out.push_str("x,expected\n");
        for (x, y) in self.abscissa.iter().zip(&self.expected) {
            let _ = writeln!(out, "{x:e},{y:e}");
        }
        out
    }

    /// Parses a golden file and verifies its version and input hash.
    pub fn from_golden_csv(text: &str) -> Result<Self> {
        let mut case = OracleCase {
            name: String::new(),
            inputs: Vec::new(),
            abscissa: Vec::new(),
            expected: Vec::new(),
            tolerance: 0.0,
        };
        let (mut version, mut hash) = (None, None);
        let bad = |l: &str| Error::Csv(format!("golden file: bad line `{l}`"));
        let num = |s: &str, l: &str| s.parse::<f64>().map_err(|_| bad(l));
        let mut header_seen = false;
        for line in text.lines().filter(|l| !l.is_empty()) {
            if let Some(meta) = line.strip_prefix("# ") {
                let (k, v) = meta.split_once('=').ok_or_else(|| bad(line))?;
                match k {
                    "oracle_version" => version = Some(v.parse::<u32>().map_err(|_| bad(line))?),
                    "input_sha256" => hash = Some(v.to_string()),
                    "name" => case.name = v.to_string(),
                    "tolerance" => case.tolerance = num(v, line)?,
                    _ => match k.strip_prefix("input.") {
                        Some(key) => case.inputs.push((key.to_string(), num(v, line)?)),
                        None => return Err(bad(line)),
                    },
                }
            } else if !header_seen {
                if line != "x,expected" {
                    return Err(bad(line));
                }
                header_seen = true;
            } else {
                let (x, y) = line.split_once(',').ok_or_else(|| bad(line))?;
                case.abscissa.push(num(x, line)?);
                case.expected.push(num(y, line)?);
            }
        }
        if version != Some(ORACLE_VERSION) {
            return Err(Error::Csv(format!(
                "golden file: oracle version {version:?}, expected {ORACLE_VERSION}"
            )));
        }
        if hash.as_deref() != Some(case.input_hash().as_str()) {
            return Err(Error::Csv("golden file: input hash mismatch".into()));
        }
        Ok(case)
    }
}

/// Gate schedule of the switching golden case: off 7 ms after energization,
/// back on one fundamental cycle later.
pub const SWITCHING_TOGGLES: [f64; 2] = [0.007, 0.027];

/// Closed-form line current of the laboratory loop over five cycles with
/// one off/on gate cycle, sampled every 50 µs.
pub fn switching_case() -> OracleCase {
    let lp = LinearLoop::lab();
    let times: Vec<f64> = (0..=2000).map(|k| k as f64 * 5e-5).collect();
    let expected = switched_rl_reference(&lp, &times, &SWITCHING_TOGGLES);
    OracleCase {
        name: "switched_rl".into(),
        inputs: vec![
            ("v_peak".into(), lp.v_peak),
            ("omega".into(), lp.omega),
            ("phase".into(), lp.phase),
            ("l".into(), lp.l),
            ("r_closed".into(), lp.r_closed),
            ("r_open".into(), lp.r_open),
            ("toggle_off".into(), SWITCHING_TOGGLES[0]),
            ("toggle_on".into(), SWITCHING_TOGGLES[1]),
        ],
        abscissa: times,
        expected,
        // Fraction of v_peak/|Z| with the switch closed.
        tolerance: 5e-3,
    }
}

/// Dense-filter estimates of a clean unit 50 Hz cosine sampled at 10 kHz,
/// `q = 1e-4`, `r = 1`, `P0 = I`.
pub fn kf_sinusoid_case() -> OracleCase {
    let (f0, fs, q, r) = (50.0, 10_000.0, 1e-4, 1.0);
    let omega0 = 2.0 * PI * f0 / fs;
    let n = 2000;
    let samples: Vec<f64> = (0..n).map(|k| (omega0 * k as f64).cos()).collect();
    let expected = dense_kf_reference(omega0, q, r, [[1.0, 0.0], [0.0, 1.0]], &samples);
    OracleCase {
        name: "kf_clean_sinusoid".into(),
        inputs: vec![
            ("f0".into(), f0),
            ("sample_rate".into(), fs),
            ("q".into(), q),
            ("r".into(), r),
            ("sigma".into(), 1.0),
        ],
        abscissa: (0..n).map(|k| k as f64).collect(),
        expected,
        tolerance: 1e-9,
    }
}
