use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssicl::circuit::{channel, run, AlwaysOn};
use ssicl::controller::{gate_decision, ClosedLoop, Controller, ControllerConfig};
use ssicl::scenario::{run_scenario, Scenario};

fn short_lab() -> Scenario {
    let mut s = Scenario::lab_prototype();
    s.duration = 0.1;
    s
}

#[test]
fn infinite_threshold_reduces_to_always_on() {
    let s = short_lab();
    let core = s.core_model().unwrap();
    let cfg = ControllerConfig {
        i_th: f64::INFINITY,
        ..ControllerConfig::lab_prototype()
    };
    let mut closed = ClosedLoop::new(cfg, s.dt, 0.0, s.seed).unwrap();
    let a = run(&s.circuit, &core, &mut closed, &s.run_config()).unwrap();
    let b = run(&s.circuit, &core, &mut AlwaysOn, &s.run_config()).unwrap();
    for ch in [channel::LINE_CURRENT, channel::CORE_FLUX, channel::LIMITER_CURRENT] {
        assert_eq!(a.channel(ch).unwrap(), b.channel(ch).unwrap(), "{ch}");
    }
    assert!(a.channel(channel::GATE).unwrap().iter().all(|&g| g == 1.0));
}

#[test]
fn ties_conduct() {
    assert!(gate_decision(0.05, 0.05, false));
    assert!(gate_decision(-0.05, 0.05, false));
    assert!(!gate_decision(0.050001, 0.05, false));
    assert!(gate_decision(1e9, 0.05, true));
}

#[test]
fn limiter_current_is_zero_once_bypassed() {
    let mut s = short_lab();
    s.duration = 0.2;
    let (rec, m) = run_scenario(&s).unwrap();
    assert!(m.bypass_time.is_some());
    let vcb = rec.channel(channel::VCB).unwrap();
    let lim = rec.channel(channel::LIMITER_CURRENT).unwrap();
    let mov = rec.channel(channel::MOV_CURRENT).unwrap();
    for k in vcb.iter().position(|&v| v == 1.0).unwrap()..vcb.len() {
        assert_eq!(lim[k], 0.0);
        assert_eq!(mov[k], 0.0);
    }
}

fn noisy_samples(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = rng.random_range(0.1..30.0);
    let w = 2.0 * std::f64::consts::PI * 50.0 / 10_000.0;
    (0..n)
        .map(|k| {
            let decay = if k < 300 {
                5.0 * (-(k as f64) / 100.0).exp()
            } else {
                0.0
            };
            amp * (w * k as f64).sin() + decay + rng.random_range(-0.05..0.05)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gate_sequence_is_scale_equivariant(seed in any::<u64>(), i_th in 0.01f64..1.0) {
        let y = noisy_samples(seed, 3_000);
        let base = ControllerConfig { i_th, ..ControllerConfig::lab_prototype() };
        let reference = Controller::new(base).unwrap().replay(&y).unwrap();
        // Powers of two keep every intermediate product exact.
        for c in [4.0, 0.5] {
            let scaled_cfg = ControllerConfig { i_th: c * i_th, ..base };
            let ys: Vec<f64> = y.iter().map(|v| c * v).collect();
            let out = Controller::new(scaled_cfg).unwrap().replay(&ys).unwrap();
            for (a, b) in reference.iter().zip(&out) {
                prop_assert_eq!(a.gate_on, b.gate_on);
                prop_assert_eq!(a.vcb_closed, b.vcb_closed);
                prop_assert_eq!(c * a.diagnostics.residual, b.diagnostics.residual);
            }
        }
    }

    #[test]
    fn breaker_never_reopens(seed in any::<u64>(), i_th in 0.01f64..2.0) {
        let y = noisy_samples(seed, 3_000);
        let cfg = ControllerConfig { i_th, ..ControllerConfig::lab_prototype() };
        let out = Controller::new(cfg).unwrap().replay(&y).unwrap();
        let first = out.iter().position(|o| o.vcb_closed);
        if let Some(k) = first {
            prop_assert!(out[k..].iter().all(|o| o.vcb_closed && o.gate_on));
            // Closing needs a full run of quiet samples beforehand.
            prop_assert!(k as u64 >= cfg.bypass_samples());
            prop_assert!(out[k - cfg.bypass_samples() as usize..k]
                .iter()
                .all(|o| o.diagnostics.residual.abs() <= i_th));
        }
    }
}
