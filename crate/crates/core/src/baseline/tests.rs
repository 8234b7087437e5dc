use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dynamics::propagate_controls;
use crate::hilbert::{overlap_fidelity, StateVector};

fn small_target(alpha: f64, n_fock: usize) -> StateVector {
    target_state(alpha, 0.0, HilbertConfig::new(n_fock).unwrap()).unwrap()
}

#[test]
fn truncation_rule() {
    assert_eq!(hilbert_dim_for_alpha(0.0), 16);
    assert_eq!(hilbert_dim_for_alpha(1.0), 22);
    assert_eq!(hilbert_dim_for_alpha(2.0), 32);
    assert_eq!(hilbert_dim_for_alpha(-2.0), 32);
    assert_eq!(hilbert_for_alpha(2.0).unwrap().n_fock(), 33);
}

#[test]
fn grape_gradient_matches_central_differences() {
    let params = SystemParams::default();
    let obj = UnitaryObjective::new(small_target(1.0, 14), &params, GRAPE_STEPS, GRAPE_DURATION).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<f64> = (0..4 * GRAPE_STEPS).map(|_| rng.random_range(-1.5..1.5)).collect();
    let (_, g) = obj.evaluate(&x).unwrap();
    let h = 1e-5;
    for _ in 0..12 {
        let k = rng.random_range(0..x.len());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let fd = (obj.evaluate(&xp).unwrap().0 - obj.evaluate(&xm).unwrap().0) / (2.0 * h);
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((fd - g[k]).abs() <= 1e-5 * scale, "component {k}: {fd} vs {}", g[k]);
    }
}

#[test]
fn vacuum_target_from_zero_guess_is_immediate() {
    let cfg = GrapeConfig {
        init_amplitude: 0.0,
        ..Default::default()
    };
    let r = grape_optimize(&small_target(0.0, 8), &cfg, &SystemParams::default()).unwrap();
    assert!(r.loss_trace.len() <= 3);
    assert!(*r.loss_trace.last().unwrap() < 1e-12);
}

#[test]
fn grape_reaches_a_small_cat() {
    let target = target_state(1.0, 0.0, hilbert_for_alpha(1.0).unwrap()).unwrap();
    let r = grape_optimize(&target, &GrapeConfig::default(), &SystemParams::default()).unwrap();
    let last = *r.loss_trace.last().unwrap();
    assert!(1.0 - last >= 0.99, "fidelity {}", 1.0 - last);
    assert!(r.loss_trace.len() <= 501);
    assert!(r.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    // The result reproduces its loss under plain propagation.
    let traj = propagate_controls(&StateVector::ground(target.config()), &r.controls, &SystemParams::default()).unwrap();
    let f = overlap_fidelity(&target, traj.final_state());
    assert!((1.0 - f - last).abs() < 1e-10);
}

#[test]
fn sinusoidal_guess_is_seeded() {
    let a = sinusoidal_guess(&GrapeConfig::default()).unwrap();
    let b = sinusoidal_guess(&GrapeConfig::default()).unwrap();
    let c = sinusoidal_guess(&GrapeConfig { seed: 1, ..Default::default() }).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.n_intervals(), GRAPE_STEPS);
    assert!(a.eps_c.iter().all(|z| z.norm() <= 2f64.sqrt() + 1e-12));
    assert!(GrapeConfig { n_steps: 0, ..Default::default() }.validate().is_err());
}

fn constant_coarse(v: C64) -> PiecewiseControls {
    PiecewiseControls::new(
        GRAPE_DURATION / GRAPE_STEPS as f64,
        vec![v; GRAPE_STEPS],
        vec![C64::new(0.0, 0.0); GRAPE_STEPS],
    )
    .unwrap()
}

#[test]
fn constant_input_rolls_off_only_at_the_edges() {
    let v = C64::new(1.0, -0.5);
    let fine = upsample_and_smooth(&constant_coarse(v), FINE_STEPS, FINE_DURATION, SMOOTHING_SIGMA).unwrap();
    assert_eq!(fine.n_intervals(), FINE_STEPS);
    for k in 100..1900 {
        assert!((fine.eps_c[k] - v).norm() < 1e-12);
    }
    // The coarse window starts 22 samples in, so the edge sees the kernel
    // tail beyond 22 samples.
    let w = |m: i32| (-0.5 * (m as f64 / 11.0).powi(2)).exp();
    let edge = (22..=55).map(w).sum::<f64>() / (-55..=55).map(w).sum::<f64>();
    for k in [0, FINE_STEPS - 1] {
        let r = fine.eps_c[k].norm() / v.norm();
        assert!((r - edge).abs() < 1e-12, "{r} vs {edge}");
    }
}

#[test]
fn impulse_spreads_into_the_kernel() {
    let mut v = vec![C64::new(0.0, 0.0); 201];
    v[100] = C64::new(1.0, 0.0);
    let s = gaussian_smooth(&v, 11.0);
    let mass: f64 = s.iter().map(|z| z.re).sum();
    let mean: f64 = s.iter().enumerate().map(|(k, z)| k as f64 * z.re).sum::<f64>() / mass;
    let var: f64 = s.iter().enumerate().map(|(k, z)| (k as f64 - mean).powi(2) * z.re).sum::<f64>() / mass;
    assert!((mass - 1.0).abs() < 1e-12);
    assert!((mean - 100.0).abs() < 1e-9);
    assert!((var.sqrt() - 11.0).abs() < 0.5, "{}", var.sqrt());
}

#[test]
fn smoothing_suppresses_high_frequencies() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = FINE_STEPS;
    let raw: Vec<C64> = (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
    let smooth = gaussian_smooth(&raw, 11.0);
    // Direct DFT; bin k is k / 2 µs = k · 0.5 MHz.
    let high_power = |x: &[C64]| -> f64 {
        let mut p = 0.0;
        for k in 81..=n / 2 {
            let w = -2.0 * PI * k as f64 / n as f64;
            let s: C64 = x.iter().enumerate().map(|(j, v)| v * C64::from_polar(1.0, w * j as f64)).sum();
            p += s.norm_sqr();
        }
        p
    };
    let ratio = high_power(&smooth) / high_power(&raw);
    assert!(10.0 * ratio.log10() <= -20.0, "{} dB", 10.0 * ratio.log10());
}

#[test]
fn resampling_rejects_bad_grids() {
    let c = constant_coarse(C64::new(1.0, 0.0));
    assert!(upsample_and_smooth(&c, 0, 2.0, 0.011).is_err());
    assert!(upsample_and_smooth(&c, 100, 1.0, 0.011).is_err());
}

fn random_fine(seed: u64, steps: usize, amp: f64) -> PiecewiseControls {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coarse = PiecewiseControls::new(
        GRAPE_DURATION / 40.0,
        (0..40).map(|_| C64::new(rng.random_range(-amp..amp), rng.random_range(-amp..amp))).collect(),
        (0..40).map(|_| C64::new(rng.random_range(-amp..amp), rng.random_range(-amp..amp))).collect(),
    )
    .unwrap();
    upsample_and_smooth(&coarse, steps, FINE_DURATION, SMOOTHING_SIGMA).unwrap()
}

#[test]
fn closed_lindblad_fidelity_is_the_overlap() {
    let target = small_target(0.8, 12);
    let c = random_fine(4, 400, 2.0);
    let f = lindblad_fidelity(&c, &target, &[], &SystemParams::default()).unwrap();
    let traj = propagate_controls(&StateVector::ground(target.config()), &c, &SystemParams::default()).unwrap();
    assert!((f - overlap_fidelity(&target, traj.final_state())).abs() < 1e-10);
}

#[test]
fn krotov_is_monotone_with_decoherence() {
    let params = SystemParams::default();
    let target = small_target(0.8, 12);
    let init = random_fine(5, 500, 2.0);
    let cfg = KrotovConfig {
        max_iterations: 8,
        tolerance: 0.0,
        ..Default::default()
    };
    let r = krotov_refine(&init, &target, &params.channels(), &params, &cfg).unwrap();
    let t = &r.fidelity_trace;
    assert!(t.windows(2).all(|w| w[1] >= w[0] - 1e-6), "{t:?}");
    assert!(t.last().unwrap() > &(t[0] + 0.02), "{t:?}");
    let f = lindblad_fidelity(&r.controls, &target, &params.channels(), &params).unwrap();
    assert!((f - t.last().unwrap()).abs() < 1e-12);
}

#[test]
fn converged_unitary_solution_is_a_krotov_fixed_point() {
    // Target the state these controls reach, so they are optimal.
    let params = SystemParams::default();
    let c = random_fine(6, 400, 2.0);
    let cfg = HilbertConfig::new(12).unwrap();
    let traj = propagate_controls(&StateVector::ground(cfg), &c, &params).unwrap();
    let target = traj.final_state().clone();
    let k = krotov_refine(&c, &target, &[], &params, &KrotovConfig::default()).unwrap();
    let t = &k.fidelity_trace;
    assert!((t[0] - 1.0).abs() < 1e-10);
    assert!((t.last().unwrap() - t[0]).abs() < 1e-6, "{t:?}");
}

#[test]
fn krotov_rejects_bad_lambda() {
    let cfg = KrotovConfig {
        lambda: 0.0,
        ..Default::default()
    };
    let c = random_fine(1, 50, 1.0);
    assert!(krotov_refine(&c, &small_target(0.5, 8), &[], &SystemParams::default(), &cfg).is_err());
}

#[test]
fn controls_csv_round_trips() {
    let c = random_fine(2, 2000, 3.0);
    let mut buf = Vec::new();
    write_controls_csv(&c, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("t_ns,reC,imC,reQ,imQ\n0.0,"));
    let back = read_controls_csv(buf.as_slice(), FINE_DURATION).unwrap();
    assert_eq!(back.eps_c, c.eps_c);
    assert_eq!(back.eps_q, c.eps_q);
    assert!((back.dt - c.dt).abs() < 1e-15);
    assert!(read_controls_csv(buf.as_slice(), 3.0).is_err());
}
