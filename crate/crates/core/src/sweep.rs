//! Parameter sweeps over energization angle and remnant flux.

use rayon::prelude::*;

use crate::error::{Error, Result, Violation};
use crate::scenario::{ratio, run_scenario, RunMetrics, Scenario};

/// Outcome of one grid cell. Failed runs keep their error text so a single
/// diverging point does not abort the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub angle_deg: f64,
    pub remnant_pu: f64,
    pub unlimited: Option<std::result::Result<RunMetrics, String>>,
    pub limited: Option<std::result::Result<RunMetrics, String>>,
}

impl SweepCell {
    pub fn unlimited_metrics(&self) -> Option<&RunMetrics> {
        self.unlimited.as_ref().and_then(|r| r.as_ref().ok())
    }

    pub fn limited_metrics(&self) -> Option<&RunMetrics> {
        self.limited.as_ref().and_then(|r| r.as_ref().ok())
    }

    pub fn limiting_ratio(&self) -> Option<f64> {
        self.limited_metrics().and_then(|m| m.limiting_ratio)
    }

    pub fn error(&self) -> Option<&str> {
        [&self.unlimited, &self.limited]
            .into_iter()
            .find_map(|r| r.as_ref().and_then(|r| r.as_ref().err()))
            .map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepReport {
    /// Row-major over (angle, remnant), in grid order.
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    /// Smallest limiting ratio over cells where both runs succeeded.
    pub fn min_ratio(&self) -> Option<f64> {
        self.cells.iter().filter_map(SweepCell::limiting_ratio).reduce(f64::min)
    }

    /// Worst unlimited first peak over worst limited first peak; peaks may
    /// come from different cells.
    pub fn worst_case_ratio(&self) -> Option<f64> {
        let un = self
            .cells
            .iter()
            .filter_map(|c| c.unlimited_metrics().map(|m| m.first_peak))
            .reduce(f64::max)?;
        let lim = self
            .cells
            .iter()
            .filter_map(|c| c.limited_metrics().map(|m| m.first_peak))
            .reduce(f64::max)?;
        ratio(un, lim)
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.error().is_some()).count()
    }
}

/// Evenly spaced points from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|k| start + (end - start) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Runs `base` over every (angle, remnant) pair in parallel.
///
/// With `paired`, each cell is run with and without the controller and the
/// limited metrics carry the limiting ratio; otherwise the scenario runs as
/// configured and fills the matching slot.
pub fn sweep(base: &Scenario, angles_deg: &[f64], remnants_pu: &[f64], paired: bool) -> Result<SweepReport> {
    if paired && base.controller.is_none() {
        return Err(Error::Validation(vec![Violation::new(
            "controller",
            "a paired sweep needs a controller section",
        )]));
    }
    let grid: Vec<(f64, f64)> = angles_deg
        .iter()
        .flat_map(|&a| remnants_pu.iter().map(move |&r| (a, r)))
        .collect();
    let cells = grid
        .par_iter()
        .map(|&(angle_deg, remnant_pu)| {
            let s = base.clone().with_angle_deg(angle_deg).with_remnant_pu(remnant_pu);
            let run = |s: &Scenario| run_scenario(s).map(|r| r.1).map_err(|e| e.to_string());
            let mut cell = SweepCell {
                angle_deg,
                remnant_pu,
                unlimited: None,
                limited: None,
            };
            if paired {
                let un = run(&s.without_controller());
                let mut lim = run(&s);
                if let (Ok(u), Ok(l)) = (&un, &mut lim) {
                    l.limiting_ratio = ratio(u.first_peak, l.first_peak);
                }
                cell.unlimited = Some(un);
                cell.limited = Some(lim);
            } else if s.controller.is_some() {
                cell.limited = Some(run(&s));
            } else {
                cell.unlimited = Some(run(&s));
            }
            cell
        })
        .collect();
    Ok(SweepReport { cells })
}
