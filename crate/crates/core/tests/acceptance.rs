//! Acceptance criteria, one line each. Runs every criterion even when an
//! earlier one fails; exits non-zero if any fail.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{Matrix2, Vector2};
use ssicl::circuit::{channel, run, AlwaysOn, CircuitParams, GateSchedule, RunConfig};
use ssicl::controller::ControllerConfig;
use ssicl::kf::{kf_run, KfModel, KfState};
use ssicl::oracle::{dense_kf_reference, switched_rl_reference, LinearLoop, SWITCHING_TOGGLES};
use ssicl::report::{emit_report, Format, Report};
use ssicl::scenario::{balanced_three_phase, run_paired, run_scenario, three_phase_run, Scenario};
use ssicl::sweep::{linspace, sweep};
use ssicl::transformer::SaturableCore;
use ssicl::waveform::WaveformRecord;

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn closed_form_equivalence() -> Outcome {
    let start = Instant::now();
    let params = CircuitParams::lab_prototype();
    let core = SaturableCore::linear(169.0 / params.omega(), 0.0, f64::INFINITY).unwrap();
    let mut gate = GateSchedule::new(true, SWITCHING_TOGGLES.to_vec());
    let rec = run(&params, &core, &mut gate, &RunConfig::new(0.1, 5e-6, 1e5)).unwrap();
    let elapsed = start.elapsed();
    let lp = LinearLoop::lab();
    let expected = switched_rl_reference(&lp, rec.time(), &SWITCHING_TOGGLES);
    let scale = lp.v_peak / lp.z(lp.r_closed);
    let err = rec
        .channel(channel::LINE_CURRENT)
        .unwrap()
        .iter()
        .zip(&expected)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale;
    (
        err < 5e-3 && secs(elapsed) < 2.0,
        format!(
            "max |i − i_ref| = {:.3e}·V_m/Z over {} samples (limit 5e-3), runtime {:.3} s (limit 2 s)",
            err,
            rec.len(),
            secs(elapsed)
        ),
    )
}

fn kf_convergence() -> Outcome {
    let cfg = ControllerConfig::lab_prototype();
    let model = KfModel::new(cfg.f0, cfg.sample_rate, cfg.kf_q, cfg.kf_r).unwrap();
    let n = 10_000;
    let truth: Vec<f64> = (0..n).map(|k| (model.omega0 * k as f64).sin()).collect();
    let init = KfState::with_sigma(cfg.kf_sigma);
    let est = kf_run(&model, &init, &truth).unwrap();
    let k_conv = (0.1 * cfg.sample_rate) as usize;
    let amp_err = est[k_conv..]
        .iter()
        .zip(&truth[k_conv..])
        .fold(0.0f64, |m, (e, t)| m.max((e - t).abs()));

    let s2 = cfg.kf_sigma * cfg.kf_sigma;
    let dense = dense_kf_reference(model.omega0, cfg.kf_q, cfg.kf_r, [[s2, 0.0], [0.0, s2]], &truth);
    let rel = |a: &[f64], b: &[f64]| {
        let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
    };
    let dense_err = rel(&est, &dense);

    let c = 37.5;
    let scaled = KfModel::new(cfg.f0, cfg.sample_rate, c * cfg.kf_q, c * cfg.kf_r).unwrap();
    let scaled_init = KfState::new(Vector2::zeros(), Matrix2::identity() * (c * s2));
    let est_c = kf_run(&scaled, &scaled_init, &truth).unwrap();
    let ratio_err = rel(&est_c, &est);

    (
        amp_err < 0.01 && dense_err < 1e-9 && ratio_err < 1e-9,
        format!(
            "error after 0.1 s {amp_err:.2e} of amplitude (limit 1e-2); vs dense reference {dense_err:.1e} (limit 1e-9); q/r invariance {ratio_err:.1e} (limit 1e-9)"
        ),
    )
}

fn unlimited_severity() -> Outcome {
    let worst = Scenario::lab_prototype().without_controller();
    let (_, w) = run_scenario(&worst).unwrap();
    let benign = worst.clone().with_angle_deg(90.0).with_remnant_pu(0.0);
    let (_, b) = run_scenario(&benign).unwrap();
    let in_band = (w.first_peak - 25.0).abs() <= 0.3 * 25.0;
    let benign_ok = b.first_peak <= 2.0 * b.steady_peak;
    (
        in_band && benign_ok,
        format!(
            "worst-case first peak {:.2} A (25 A ± 30%, calibration target at sat_ratio {}); benign first peak {:.3} A vs 2 × steady {:.3} A",
            w.first_peak, worst.core.sat_ratio, b.first_peak, 2.0 * b.steady_peak
        ),
    )
}

fn limiting_check(s: &Scenario) -> (bool, String, Duration) {
    let start = Instant::now();
    let pair = run_paired(s).unwrap();
    let elapsed = start.elapsed();
    let limited = pair.limited.1.first_peak;
    let ratio = pair.limiting_ratio().unwrap_or(0.0);
    (
        limited <= 3.0 && ratio >= 8.0,
        format!(
            "limited first peak {:.2} A (limit 3 A), unlimited {:.2} A, ratio {:.2} (limit 8)",
            limited, pair.unlimited.1.first_peak, ratio
        ),
        elapsed,
    )
}

fn limiting_ratio() -> Outcome {
    let (ok, detail, elapsed) = limiting_check(&Scenario::lab_prototype());
    let fast = secs(elapsed) < 5.0;
    (
        ok && fast,
        format!("{detail}; pair runtime {:.3} s (limit 5 s)", secs(elapsed)),
    )
}

fn on_fractions(rec: &WaveformRecord, period: f64) -> Vec<f64> {
    let gate = rec.channel(channel::GATE).unwrap();
    let per = (period * rec.sample_rate()).round() as usize;
    gate.chunks_exact(per)
        .map(|c| c.iter().sum::<f64>() / per as f64)
        .collect()
}

fn settling_and_bypass() -> Outcome {
    let s = Scenario::lab_prototype();
    let (rec, m) = run_scenario(&s).unwrap();
    let settle_ok = m.settle_time.is_some_and(|t| t <= 0.06);
    let fr = on_fractions(&rec, s.period());
    // Cycle 1 is excluded; from cycle 2 on each cycle may drop by at most 0.05.
    let mono = fr[1..].windows(2).all(|w| w[1] >= w[0] - 0.05);
    let bypass_ok = m.bypass_time.is_some_and(|t| t <= 10.0 * s.period());
    let limiter_zero = m.bypass_time.is_some_and(|tb| {
        let lim = rec.channel(channel::LIMITER_CURRENT).unwrap();
        rec.time()
            .iter()
            .zip(lim)
            .filter(|(t, _)| **t >= tb)
            .all(|(_, i)| *i == 0.0)
    });
    let fr_text: Vec<String> = fr.iter().take(8).map(|f| format!("{f:.2}")).collect();
    (
        settle_ok && mono && bypass_ok && limiter_zero,
        format!(
            "settle {:?} s (limit 0.06); ON fraction by cycle [{} …] non-decreasing: {mono}; VCB at {:?} s (limit {:.2}); limiter current zero after: {limiter_zero}",
            m.settle_time,
            fr_text.join(" "),
            m.bypass_time,
            10.0 * s.period()
        ),
    )
}

fn limiter_monotonicity() -> Outcome {
    let peaks: Vec<f64> = [5.0, 10.0, 20.0, 40.0]
        .iter()
        .map(|&r| {
            let mut s = Scenario::lab_prototype();
            s.circuit.limiter_r = r;
            run_scenario(&s).unwrap().1.first_peak
        })
        .collect();
    let ok = peaks.windows(2).all(|w| w[1] <= w[0]);
    let text: Vec<String> = peaks.iter().map(|p| format!("{p:.3}")).collect();
    (
        ok,
        format!("limited first peaks at 5/10/20/40 Ω: {} A", text.join(" / ")),
    )
}

fn kcl_residual(rec: &WaveformRecord) -> f64 {
    let ch = |n| rec.channel(n).unwrap();
    let (line, sw, lim, sn, mov) = (
        ch(channel::LINE_CURRENT),
        ch(channel::SWITCH_CURRENT),
        ch(channel::LIMITER_CURRENT),
        ch(channel::SNUBBER_CURRENT),
        ch(channel::MOV_CURRENT),
    );
    (0..rec.len())
        .map(|k| (line[k] - sw[k] - lim[k] - sn[k] - mov[k]).abs())
        .fold(0.0, f64::max)
}

fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1]))
        .sum()
}

fn rms_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let r: f64 = b.iter().map(|y| y * y).sum();
    (d / r).sqrt()
}

fn conservation_and_numerics() -> Outcome {
    let lab = Scenario::lab_prototype();
    let rated = lab.nameplate.rated_peak_current();
    let (limited, _) = run_scenario(&lab).unwrap();
    let (unlimited, _) = run_scenario(&lab.without_controller()).unwrap();
    let kcl = kcl_residual(&limited).max(kcl_residual(&unlimited)) / rated;

    // Linear core, switch always closed, recorded at the integrator step.
    let params = CircuitParams::lab_prototype();
    let core = SaturableCore::linear(169.0 / params.omega(), 0.0, f64::INFINITY).unwrap();
    let dt = 5e-6;
    let rec = run(&params, &core, &mut AlwaysOn, &RunConfig::new(0.1, dt, 1.0 / dt)).unwrap();
    let t = rec.time();
    let i = rec.channel(channel::LINE_CURRENT).unwrap();
    let vs = rec.channel(channel::SOURCE_V).unwrap();
    let flux = rec.channel(channel::CORE_FLUX).unwrap();
    let p_in: Vec<f64> = vs.iter().zip(i).map(|(v, i)| v * i).collect();
    let p_r: Vec<f64> = i.iter().map(|i| params.series_r() * i * i).collect();
    let e_in = trapezoid(t, &p_in);
    let e_r = trapezoid(t, &p_r);
    let stored = |k: usize| 0.5 * params.series_l() * i[k] * i[k] + core.stored_energy(flux[k]);
    let e_stored = stored(rec.len() - 1) - stored(0);
    let energy_err = (e_in - e_r - e_stored).abs() / e_in.abs();

    let halve = |s: &Scenario| {
        let a = run_scenario(s).unwrap().0;
        let mut fine = s.clone();
        fine.dt = s.dt / 2.0;
        let b = run_scenario(&fine).unwrap().0;
        rms_rel_diff(
            b.channel(channel::LINE_CURRENT).unwrap(),
            a.channel(channel::LINE_CURRENT).unwrap(),
        )
    };
    let dt_unlimited = halve(&lab.without_controller());
    let dt_limited = halve(&lab);

    (
        kcl < 1e-6 && energy_err < 1e-3 && dt_unlimited < 1e-3 && dt_limited < 1e-3,
        format!(
            "KCL residual {kcl:.1e} of rated current (limit 1e-6); energy balance error {energy_err:.1e} (limit 1e-3); dt/2 RMS change unlimited {dt_unlimited:.1e}, limited {dt_limited:.1e} (limit 1e-3)"
        ),
    )
}

fn sweep_reproduction() -> Outcome {
    let base = Scenario::lab_prototype();
    let angles = linspace(0.0, 342.0, 20);
    let remnants = linspace(0.0, 0.9, 10);
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let report = single.install(|| sweep(&base, &angles, &remnants, true)).unwrap();
    let elapsed = start.elapsed();
    let csv = emit_report(&Report::Sweep(&report), Format::Csv);
    // Out-of-order completion must not change the report.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let parallel = pool.install(|| sweep(&base, &angles, &remnants, true)).unwrap();
    let deterministic = emit_report(&Report::Sweep(&parallel), Format::Csv) == csv;
    let rows = csv.lines().filter(|l| !l.starts_with('#')).count() - 1;
    let min = report.min_ratio().unwrap_or(0.0);
    (
        rows == 200 && deterministic && min >= 8.0 && report.failures() == 0 && secs(elapsed) < 600.0,
        format!(
            "{rows} rows, {} failed cells, identical on 1 and 4 worker threads: {deterministic}; min limiting ratio {min:.3} (limit 8), worst-case ratio {:.3}; single-threaded runtime {:.1} s (limit 600 s)",
            report.failures(),
            report.worst_case_ratio().unwrap_or(0.0),
            secs(elapsed)
        ),
    )
}

fn three_phase_independence() -> Outcome {
    let base = Scenario::lab_prototype();
    let phases = balanced_three_phase(&base);
    let mut details = Vec::new();
    let mut all_ok = true;
    for s in &phases {
        let (ok, d, _) = limiting_check(s);
        all_ok &= ok;
        details.push(format!("[{}: {d}]", s.circuit.energize_angle.to_degrees().round()));
    }

    let cfg = ControllerConfig::lab_prototype();
    let configs = [
        cfg,
        ControllerConfig { i_th: 0.08, ..cfg },
        ControllerConfig { kf_q: 1e-4, ..cfg },
    ];
    let out = three_phase_run(&configs, &phases);
    let perm = [2, 0, 1];
    let out_p = three_phase_run(&perm.map(|k| configs[k]), &perm.map(|k| phases[k].clone()));
    let equivariant = perm.iter().enumerate().all(|(j, &k)| match (&out_p[j], &out[k]) {
        (Ok(a), Ok(b)) => a.0.to_csv() == b.0.to_csv() && a.1 == b.1,
        _ => false,
    });
    (
        all_ok && equivariant,
        format!("{} permutation equivariant: {equivariant}", details.join(" ")),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("closed-form equivalence", closed_form_equivalence),
        ("filter convergence and reference agreement", kf_convergence),
        ("unlimited inrush severity", unlimited_severity),
        ("limiting ratio", limiting_ratio),
        ("settling and bypass", settling_and_bypass),
        ("monotonicity in limiter resistance", limiter_monotonicity),
        ("conservation and numerics", conservation_and_numerics),
        ("200-cell sweep", sweep_reproduction),
        ("three-phase independence", three_phase_independence),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = check();
        failed += usize::from(!ok);
        println!(
            "criterion {} {name}: {} — {detail}",
            k + 1,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
