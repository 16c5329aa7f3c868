//! Kalman filter for the fundamental component of a sampled current.
//!
//! The signal model is the two-term sinusoid recursion
//! `s[n+1] = 2cos(ω0)·s[n] − s[n−1] + ψ[n]`, observed as `y[n] = s[n] + v[n]`,
//! with state `[s[n], s[n−1]]`. The filter is linear and its gain sequence
//! depends only on `q/r` and the initial covariance, never on the data.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KfModel {
    /// Normalized fundamental frequency 2π·f0/fs (rad/sample).
    pub omega0: f64,
    pub m: Matrix2<f64>,
    pub b: Vector2<f64>,
    pub h: Vector2<f64>,
    /// Process-noise variance E{ψ²}.
    pub q: f64,
    /// Measurement-noise variance E{v²}.
    pub r: f64,
    pub sample_rate: f64,
}

impl KfModel {
    pub fn new(f0: f64, sample_rate: f64, q: f64, r: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::invalid("sample_rate", "must be > 0"));
        }
        let omega0 = 2.0 * PI * f0 / sample_rate;
        if !(omega0 > 0.0 && omega0 < PI) {
            return Err(Error::invalid("f0", "2π·f0/fs must lie in (0, π)"));
        }
        if !(q.is_finite() && q >= 0.0) {
            return Err(Error::invalid("q", "must be finite and >= 0"));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid("r", "must be finite and > 0"));
        }
        Ok(Self {
            omega0,
            m: Matrix2::new(2.0 * omega0.cos(), -1.0, 1.0, 0.0),
            b: Vector2::new(1.0, 0.0),
            h: Vector2::new(1.0, 0.0),
            q,
            r,
            sample_rate,
        })
    }

    /// Samples per fundamental cycle.
    pub fn samples_per_cycle(&self) -> f64 {
        2.0 * PI / self.omega0
    }
}

/// A-priori state estimate and covariance for the next sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KfState {
    pub x_hat: Vector2<f64>,
    pub p: Matrix2<f64>,
}

impl KfState {
    /// Zero state with covariance `sigma²·I`.
    pub fn with_sigma(sigma: f64) -> Self {
        Self {
            x_hat: Vector2::zeros(),
            p: Matrix2::identity() * (sigma * sigma),
        }
    }

    pub fn new(x_hat: Vector2<f64>, p: Matrix2<f64>) -> Self {
        Self { x_hat, p }
    }

    /// Symmetric and positive semidefinite up to `1e-12·trace`.
    pub fn covariance_is_valid(&self) -> bool {
        let p = &self.p;
        if p[(0, 1)] != p[(1, 0)] || !p.iter().all(|v| v.is_finite()) {
            return false;
        }
        let tr = p.trace();
        let det = p.determinant();
        let disc = ((p[(0, 0)] - p[(1, 1)]).powi(2) + 4.0 * p[(0, 1)].powi(2)).sqrt();
        let lambda_min = 0.5 * (tr - disc);
        // det/λmax is the better-conditioned route to the small eigenvalue.
        let lambda_max = 0.5 * (tr + disc);
        let lambda_min = if lambda_max > 0.0 {
            lambda_min.max(det / lambda_max)
        } else {
            lambda_min
        };
        lambda_min >= -1e-12 * tr.abs().max(f64::MIN_POSITIVE)
    }
}

/// How the a-posteriori covariance is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceUpdate {
    /// `P⁺ = P⁻ − K·hᵀ·P⁻`, then symmetrized.
    #[default]
    Standard,
    /// `P⁺ = (I − K·hᵀ)·P⁻·(I − K·hᵀ)ᵀ + K·r·Kᵀ`.
    Joseph,
}

/// Intermediate quantities of one update, exposed for tests and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KfStep {
    pub gain: Vector2<f64>,
    pub innovation: f64,
    /// A-posteriori fundamental-component sample hᵀx̂⁺.
    pub estimate: f64,
    /// Projected state for the next sample.
    pub next: KfState,
}

/// One measurement update followed by the project-ahead.
pub fn kf_step(model: &KfModel, state: &KfState, y: f64, form: CovarianceUpdate, index: usize) -> Result<KfStep> {
    let h = model.h;
    let ph = state.p * h;
    let s = h.dot(&ph) + model.r;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::CovarianceCorrupted { index, variance: s });
    }
    let gain = ph / s;
    let innovation = y - h.dot(&state.x_hat);
    let x_post = state.x_hat + gain * innovation;
    let p_post = match form {
        CovarianceUpdate::Standard => state.p - gain * (h.transpose() * state.p),
        CovarianceUpdate::Joseph => {
            let a = Matrix2::identity() - gain * h.transpose();
            a * state.p * a.transpose() + gain * gain.transpose() * model.r
        }
    };
    let p_post = symmetrize(p_post);
    let p_next = symmetrize(model.m * p_post * model.m.transpose() + model.b * model.b.transpose() * model.q);
    Ok(KfStep {
        gain,
        innovation,
        estimate: h.dot(&x_post),
        next: KfState {
            x_hat: model.m * x_post,
            p: p_next,
        },
    })
}

fn symmetrize(p: Matrix2<f64>) -> Matrix2<f64> {
    let off = 0.5 * (p[(0, 1)] + p[(1, 0)]);
    Matrix2::new(p[(0, 0)], off, off, p[(1, 1)])
}

/// Consumes sample `y_n`; returns the state for sample n+1 and the estimate.
pub fn kf_update(model: &KfModel, state: &KfState, y_n: f64) -> Result<(KfState, f64)> {
    let step = kf_step(model, state, y_n, CovarianceUpdate::Standard, 0)?;
    Ok((step.next, step.estimate))
}

/// Runs the filter over a batch; element k is the estimate after sample k.
pub fn kf_run(model: &KfModel, init: &KfState, samples: &[f64]) -> Result<Vec<f64>> {
    let mut state = *init;
    samples
        .iter()
        .enumerate()
        .map(|(k, &y)| {
            let step = kf_step(model, &state, y, CovarianceUpdate::Standard, k)?;
            state = step.next;
            Ok(step.estimate)
        })
        .collect()
}

/// Residual between the filtered measurement and the estimate.
pub fn residual(s_f: f64, estimate: f64) -> f64 {
    s_f - estimate
}

/// Time the filter needs to re-track a sinusoid after an amplitude step.
///
/// Feeds `pre_cycles` fundamental cycles at `amp_before`, then switches to
/// `amp_after` and returns the delay after which the estimate stays within
/// `band·amp_after` of the clean signal for the rest of `post_cycles`.
pub fn step_tracking_time(
    model: &KfModel,
    init: &KfState,
    amp_before: f64,
    amp_after: f64,
    pre_cycles: usize,
    post_cycles: usize,
    band: f64,
) -> Result<Option<f64>> {
    let per_cycle = model.samples_per_cycle().round() as usize;
    let n_pre = pre_cycles * per_cycle;
    let n = n_pre + post_cycles * per_cycle;
    let truth: Vec<f64> = (0..n)
        .map(|k| {
            let a = if k < n_pre { amp_before } else { amp_after };
            a * (model.omega0 * k as f64).cos()
        })
        .collect();
    let est = kf_run(model, init, &truth)?;
    let tol = band * amp_after.abs();
    let last_bad = (n_pre..n).rev().find(|&k| (est[k] - truth[k]).abs() >= tol);
    Ok(match last_bad {
        None => Some(0.0),
        Some(k) if k + 1 < n => Some((k + 1 - n_pre) as f64 / model.sample_rate),
        Some(_) => None,
    })
}

/// Process-noise variance `q` (at the model's `r`) whose step-tracking time
/// equals `target` seconds, by bisection on log q. Tracking time falls
/// monotonically as q/r grows.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_q(
    f0: f64,
    sample_rate: f64,
    r: f64,
    sigma: f64,
    amp_before: f64,
    amp_after: f64,
    band: f64,
    target: f64,
) -> Result<f64> {
    let time = |log_q: f64| -> Result<f64> {
        let model = KfModel::new(f0, sample_rate, 10f64.powf(log_q), r)?;
        let t = step_tracking_time(&model, &KfState::with_sigma(sigma), amp_before, amp_after, 20, 60, band)?;
        Ok(t.unwrap_or(f64::INFINITY))
    };
    let (mut lo, mut hi) = (-14.0, 4.0);
    if !(time(lo)? > target && time(hi)? <= target) {
        return Err(Error::Domain(format!("tracking time {target} s not reachable")));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if time(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(10f64.powf(hi))
}
