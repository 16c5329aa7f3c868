//! Saturable magnetizing branch of the transformer core.
//!
//! The flux/current characteristic is a two-slope piecewise-linear curve:
//! the unsaturated inductance holds up to the knee flux, the deep-saturation
//! inductance beyond it. Remnant flux only sets the initial condition, there
//! is no hysteresis loop.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

/// Two-slope magnetizing characteristic with remnant flux and shunt core loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturableCore {
    /// Unsaturated magnetizing inductance (H).
    pub l_unsat: f64,
    /// Deep-saturation inductance (H).
    pub l_sat: f64,
    /// Knee flux linkage (Wb-turns).
    pub flux_knee: f64,
    /// Core flux at the energization instant (Wb-turns).
    pub remnant_flux: f64,
    /// Shunt core-loss resistance (Ω). `f64::INFINITY` disables core loss.
    pub core_loss_r: f64,
}

impl SaturableCore {
    pub fn new(l_unsat: f64, l_sat: f64, flux_knee: f64, remnant_flux: f64, core_loss_r: f64) -> Result<Self> {
        let core = Self {
            l_unsat,
            l_sat,
            flux_knee,
            remnant_flux,
            core_loss_r,
        };
        core.validate()?;
        Ok(core)
    }

    /// A core that never saturates: `flux / l` everywhere.
    pub fn linear(l: f64, remnant_flux: f64, core_loss_r: f64) -> Result<Self> {
        // The knee only has to sit above any flux the run can reach.
        let knee = remnant_flux.abs().max(1.0) * 1e6;
        Self::new(l, l, knee, remnant_flux, core_loss_r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_sat.is_finite() && self.l_sat > 0.0) {
            return Err(Error::invalid("l_sat", "must be finite and > 0"));
        }
        // Equality is the linear-core limit used by the closed-form checks.
        if !(self.l_unsat.is_finite() && self.l_unsat >= self.l_sat) {
            return Err(Error::invalid("l_unsat", "must be finite and >= l_sat"));
        }
        if !(self.flux_knee.is_finite() && self.flux_knee > 0.0) {
            return Err(Error::invalid("flux_knee", "must be finite and > 0"));
        }
        if !(self.remnant_flux.is_finite() && self.remnant_flux.abs() <= self.flux_knee) {
            return Err(Error::invalid(
                "remnant_flux",
                "|remnant_flux| must not exceed flux_knee",
            ));
        }
        if !(self.core_loss_r > 0.0) {
            return Err(Error::invalid("core_loss_r", "must be > 0"));
        }
        Ok(())
    }

    pub fn is_linear(&self) -> bool {
        self.l_sat == self.l_unsat
    }

    /// Shunt core-loss conductance (S); zero when core loss is disabled.
    pub fn core_loss_g(&self) -> f64 {
        1.0 / self.core_loss_r
    }

    /// Magnetizing inductor current for a given core flux.
    pub fn magnetizing_current(&self, flux: f64) -> f64 {
        let magnitude = flux.abs();
        if magnitude <= self.flux_knee {
            flux / self.l_unsat
        } else {
            let i = self.flux_knee / self.l_unsat + (magnitude - self.flux_knee) / self.l_sat;
            i.copysign(flux)
        }
    }

    /// Slope dλ/di of the characteristic. Exactly at the knee the saturated
    /// value is returned.
    pub fn incremental_inductance(&self, flux: f64) -> f64 {
        if flux.abs() < self.flux_knee {
            self.l_unsat
        } else {
            self.l_sat
        }
    }

    /// Stored magnetic energy ∫ i dλ from zero flux (J).
    pub fn stored_energy(&self, flux: f64) -> f64 {
        let magnitude = flux.abs();
        if magnitude <= self.flux_knee {
            0.5 * magnitude * magnitude / self.l_unsat
        } else {
            let at_knee = 0.5 * self.flux_knee * self.flux_knee / self.l_unsat;
            let excess = magnitude - self.flux_knee;
            at_knee + excess * self.flux_knee / self.l_unsat + 0.5 * excess * excess / self.l_sat
        }
    }
}

/// Transformer nameplate and equivalent-circuit data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NameplateParams {
    pub rated_va: f64,
    /// Primary voltage (V rms).
    pub v_primary: f64,
    /// Secondary voltage (V rms).
    pub v_secondary: f64,
    pub series_z_real: f64,
    pub series_z_imag: f64,
    /// Magnetizing reactance at `f0` (Ω).
    pub x_m: f64,
    /// Core-loss resistance (Ω).
    pub r_c: f64,
    pub f0: f64,
}

impl NameplateParams {
    /// The 2.3 kVA 220/380 V laboratory transformer.
    pub fn lab_transformer() -> Self {
        Self {
            rated_va: 2300.0,
            v_primary: 220.0,
            v_secondary: 380.0,
            series_z_real: 1.13,
            series_z_imag: 2.2,
            x_m: 169.0,
            r_c: 2290.0,
            f0: 50.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields: [(&'static str, f64); 8] = [
            ("rated_va", self.rated_va),
            ("v_primary", self.v_primary),
            ("v_secondary", self.v_secondary),
            ("series_z_real", self.series_z_real),
            ("series_z_imag", self.series_z_imag),
            ("x_m", self.x_m),
            ("r_c", self.r_c),
            ("f0", self.f0),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(name, "must be finite and > 0"));
            }
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI * self.f0
    }

    pub fn v_primary_peak(&self) -> f64 {
        SQRT_2 * self.v_primary
    }

    /// Peak flux linkage at rated voltage (Wb-turns).
    pub fn rated_peak_flux(&self) -> f64 {
        self.v_primary_peak() / self.omega()
    }

    /// Peak of the rated primary current (A).
    pub fn rated_peak_current(&self) -> f64 {
        SQRT_2 * self.rated_va / self.v_primary
    }

    /// Peak of the unsaturated magnetizing current at rated voltage (A).
    pub fn magnetizing_peak_current(&self) -> f64 {
        self.v_primary_peak() / self.x_m
    }

    /// Series winding inductance (H).
    pub fn winding_l(&self) -> f64 {
        self.series_z_imag / self.omega()
    }
}

/// Per-unit shape of the saturation curve relative to rated peak flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoreCalibration {
    /// Knee flux in per-unit of rated peak flux (≥ 1).
    pub knee_pu: f64,
    /// l_sat / l_unsat, in (0, 1]; 1 gives a linear core.
    pub sat_ratio: f64,
    /// Remnant flux in per-unit of rated peak flux.
    pub remnant_pu: f64,
}

impl Default for CoreCalibration {
    fn default() -> Self {
        Self {
            knee_pu: 1.15,
            sat_ratio: 0.01,
            remnant_pu: 0.0,
        }
    }
}

impl CoreCalibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.knee_pu.is_finite() && self.knee_pu >= 1.0) {
            return Err(Error::invalid("knee_pu", "must be >= 1"));
        }
        if !(self.sat_ratio > 0.0 && self.sat_ratio <= 1.0) {
            return Err(Error::invalid("sat_ratio", "must lie in (0, 1]"));
        }
        if !(self.remnant_pu.is_finite() && self.remnant_pu.abs() <= self.knee_pu) {
            return Err(Error::invalid("remnant_pu", "|remnant_pu| must not exceed knee_pu"));
        }
        Ok(())
    }
}

/// Builds the core model from nameplate data and a per-unit calibration.
pub fn core_from_nameplate(np: &NameplateParams, cal: &CoreCalibration) -> Result<SaturableCore> {
    np.validate()?;
    cal.validate()?;
    let l_unsat = np.x_m / np.omega();
    let base_flux = np.rated_peak_flux();
    SaturableCore::new(
        l_unsat,
        cal.sat_ratio * l_unsat,
        cal.knee_pu * base_flux,
        cal.remnant_pu * base_flux,
        np.r_c,
    )
}
