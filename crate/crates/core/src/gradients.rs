//! Exact reverse-mode derivative of the corrected loss.
//!
//! The forward map is the discrete one actually evaluated: per substep,
//! `out = Σ_{k≤m} t_k` with `t_0 = v` and `t_k = A t_{k−1}/k`,
//! `A = −ih H(θ)`. Its adjoint runs the recursion backwards,
//! `ḡ_m = μ`, `ḡ_k = μ + A† ḡ_{k+1}/(k+1)`, hands `ḡ_0` to the previous
//! substep and collects `Σ_k Re⟨ḡ_k, ∂A/∂θ t_{k−1}⟩/k` for each control.
//! Cotangents follow the convention `dL = Re⟨λ, dψ⟩`.
//!
//! Control sensitivities are pulled back through the spline basis sampled
//! at the interval midpoints, then through the network.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::controller::Controller;
use crate::dynamics::{
    loss_from_trajectory, Drive, LossBreakdown, PiecewiseControls, Simulator, Trajectory, NORM_DRIFT_LIMIT,
    TAYLOR_DEGREE,
};
use crate::hilbert::{target_state, StateVector};
use crate::linalg::{inner, norm_sqr};
use crate::splines::{CoefficientSet, N_CONTROLS};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// What the forward pass keeps for the reverse pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Checkpointing {
    /// Node states only; substeps are recomputed interval by interval.
    Nodes,
    /// Every Taylor term of every substep.
    Full,
}

#[derive(Clone, Debug)]
pub struct CoefficientGradient {
    pub loss: LossBreakdown,
    /// `∂L/∂c`, shaped like the coefficient matrix.
    pub grad: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct BatchGradient {
    pub mean_loss: f64,
    /// `∂⟨L⟩/∂params`.
    pub grad: Vec<f64>,
    pub per_task: Vec<LossBreakdown>,
}

/// `⟨g, G_r x⟩` for all four control generators.
fn generator_overlaps(n: usize, g: &[C64], x: &[C64]) -> [C64; 4] {
    let mut up = ZERO;
    let mut down = ZERO;
    for q in 0..2 {
        let off = q * n;
        for k in 0..n {
            let gc = g[off + k].conj();
            if k > 0 {
                up += gc * x[off + k - 1] * (k as f64).sqrt();
            }
            if k + 1 < n {
                down += gc * x[off + k + 1] * ((k + 1) as f64).sqrt();
            }
        }
    }
    let mut raise = ZERO;
    let mut lower = ZERO;
    for k in 0..n {
        raise += g[n + k].conj() * x[k];
        lower += g[k].conj() * x[n + k];
    }
    let i = C64::new(0.0, 1.0);
    [up + down, i * (up - down), raise + lower, i * (raise - lower)]
}

/// Taylor terms `t_0 … t_m` of one substep starting at `v`.
fn substep_terms(drive: &Drive, h: f64, v: &[C64]) -> Vec<Vec<C64>> {
    let mut terms = Vec::with_capacity(TAYLOR_DEGREE + 1);
    let mut buf = v.to_vec();
    crate::dynamics::taylor_step(|x, o| drive.apply_h(x, o), C64::new(0.0, -h), &mut buf, TAYLOR_DEGREE, Some(&mut terms));
    terms
}

/// Reverse pass through one substep. `mu` enters as the cotangent of the
/// substep output and leaves as the cotangent of its input.
fn reverse_substep(drive: &Drive, h: f64, terms: &[Vec<C64>], mu: &mut Vec<C64>, acc: &mut [f64; 4]) {
    let m = terms.len() - 1;
    let n = drive.n_fock;
    let mut g = mu.clone();
    let mut hg = vec![ZERO; g.len()];
    for k in (1..=m).rev() {
        let ov = generator_overlaps(n, &g, &terms[k - 1]);
        for r in 0..N_CONTROLS {
            // Re⟨g, −ih G t⟩/k = h Im⟨g, G t⟩/k
            acc[r] += h * ov[r].im / k as f64;
        }
        drive.apply_h(&g, &mut hg);
        let f = C64::new(0.0, h / k as f64);
        for ((gi, hi), mi) in g.iter_mut().zip(&hg).zip(mu.iter()) {
            *gi = mi + f * hi;
        }
    }
    *mu = g;
}

/// Loss and `∂L/∂(control samples)`, shaped `4 × n_intervals`.
pub fn control_gradient(
    sim: &Simulator,
    target: &StateVector,
    controls: &PiecewiseControls,
    mode: Checkpointing,
) -> Result<(LossBreakdown, Array2<f64>)> {
    let cfg = sim.hilbert;
    let n_int = controls.n_intervals();
    let chi = sim.params.chi;
    let drive_at = |j: usize| Drive::new(cfg, chi, controls.eps_c[j], controls.eps_q[j]);

    let mut states = Vec::with_capacity(n_int + 1);
    let psi0 = StateVector::ground(cfg);
    let norm0 = psi0.norm_sqr();
    states.push(psi0.clone());
    let mut stored: Vec<Vec<Vec<Vec<C64>>>> = Vec::new();
    let mut psi = psi0.into_amplitudes();
    for j in 0..n_int {
        let drive = drive_at(j);
        if mode == Checkpointing::Full {
            let s = drive.substeps(controls.dt);
            let h = controls.dt / s as f64;
            let mut per_interval = Vec::with_capacity(s);
            for _ in 0..s {
                let terms = substep_terms(&drive, h, &psi);
                psi = terms.iter().skip(1).fold(terms[0].clone(), |mut a, t| {
                    a.iter_mut().zip(t).for_each(|(x, y)| *x += y);
                    a
                });
                per_interval.push(terms);
            }
            stored.push(per_interval);
        } else {
            drive.propagate_interval(&mut psi, controls.dt, None);
        }
        let norm = norm_sqr(&psi);
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                context: format!("state after interval {j}"),
            });
        }
        if (norm - norm0).abs() > NORM_DRIFT_LIMIT {
            return Err(Error::NormDrift {
                drift: norm - norm0,
                interval: j,
            });
        }
        states.push(StateVector::new(cfg, psi.clone())?);
    }
    let traj = Trajectory {
        states,
        controls: controls.clone(),
    };
    let loss = loss_from_trajectory(&traj, target, &sim.channels);

    // Cotangent sources at each node.
    let weights = {
        let dt = controls.dt;
        let mut w = vec![dt; n_int + 1];
        w[0] = 0.5 * dt;
        w[n_int] = 0.5 * dt;
        w
    };
    let source = |j: usize| -> Vec<C64> {
        let psi = traj.states[j].amplitudes();
        let mut lam = vec![ZERO; psi.len()];
        for ch in &sim.channels {
            let a_psi = ch.apply(cfg, psi);
            let ad_psi = ch.apply_adjoint(cfg, psi);
            let ada_psi = ch.apply_adjoint(cfg, &a_psi);
            let z = inner(psi, &a_psi);
            let c = ch.rate() * weights[j];
            for i in 0..psi.len() {
                lam[i] -= c * 2.0 * (z.conj() * a_psi[i] + z * ad_psi[i] - ada_psi[i]);
            }
        }
        if j == n_int {
            let t = target.amplitudes();
            let ov = inner(t, psi);
            for i in 0..psi.len() {
                lam[i] -= 2.0 * ov * t[i];
            }
        }
        lam
    };

    let mut grad = Array2::zeros((N_CONTROLS, n_int));
    let mut mu = source(n_int);
    for j in (0..n_int).rev() {
        let drive = drive_at(j);
        let s = drive.substeps(controls.dt);
        let h = controls.dt / s as f64;
        let mut acc = [0.0; 4];
        match mode {
            Checkpointing::Full => {
                for terms in stored[j].iter().rev() {
                    reverse_substep(&drive, h, terms, &mut mu, &mut acc);
                }
            }
            Checkpointing::Nodes => {
                let mut inputs = Vec::with_capacity(s);
                let mut v = traj.states[j].amplitudes().to_vec();
                drive.propagate_interval(&mut v, controls.dt, Some(&mut inputs));
                for input in inputs.iter().rev() {
                    let terms = substep_terms(&drive, h, input);
                    reverse_substep(&drive, h, &terms, &mut mu, &mut acc);
                }
            }
        }
        if acc.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: format!(
                    "gradient at interval {j}, state norm² {:.3e}",
                    traj.states[j].norm_sqr()
                ),
            });
        }
        for r in 0..N_CONTROLS {
            grad[[r, j]] = acc[r];
        }
        let src = source(j);
        mu.iter_mut().zip(src).for_each(|(m, s)| *m += s);
    }
    Ok((loss, grad))
}

/// Loss and `∂L/∂c` for one task.
pub fn coefficient_gradient(
    sim: &Simulator,
    alpha: f64,
    phi: f64,
    coeffs: &CoefficientSet,
    mode: Checkpointing,
) -> Result<CoefficientGradient> {
    let target = target_state(alpha, phi, sim.hilbert)?;
    let controls = sim.controls(coeffs)?;
    let (loss, g_ctrl) = control_gradient(sim, &target, &controls, mode)?;
    Ok(CoefficientGradient {
        loss,
        grad: sim.midpoint_basis().pullback(&g_ctrl),
    })
}

/// Loss and `∂L/∂params` for one task through the network.
pub fn task_loss_and_gradient(controller: &Controller, sim: &Simulator, alpha: f64, phi: f64) -> Result<(LossBreakdown, Vec<f64>)> {
    let cache = controller.forward_cached(alpha, phi);
    let coeffs = controller.coefficients_from_output(cache.output())?;
    let cg = coefficient_gradient(sim, alpha, phi, &coeffs, Checkpointing::Nodes)?;
    let grad_out: Vec<f64> = cg.grad.iter().map(|g| g * controller.output_scale).collect();
    let mut grad = vec![0.0; controller.n_params()];
    controller.mlp.backward(&cache, &grad_out, &mut grad);
    Ok((cg.loss, grad))
}

/// Batch-mean loss and its gradient. Tasks run in parallel; the reduction
/// is a sequential sum in batch order, so the result does not depend on the
/// thread count.
pub fn loss_and_gradient(controller: &Controller, sim: &Simulator, batch: &[(f64, f64)]) -> Result<BatchGradient> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let results: Vec<Result<(LossBreakdown, Vec<f64>)>> = batch
        .par_iter()
        .map(|&(a, p)| task_loss_and_gradient(controller, sim, a, p))
        .collect();
    let mut grad = vec![0.0; controller.n_params()];
    let mut per_task = Vec::with_capacity(batch.len());
    let mut total = 0.0;
    for r in results {
        let (l, g) = r?;
        total += l.loss;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        per_task.push(l);
    }
    let inv = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    if !total.is_finite() {
        return Err(Error::NonFinite {
            context: "batch loss".into(),
        });
    }
    Ok(BatchGradient {
        mean_loss: total * inv,
        grad,
        per_task,
    })
}

/// Loss of one task at the controller's current parameters.
pub fn task_loss(controller: &Controller, sim: &Simulator, alpha: f64, phi: f64) -> Result<f64> {
    let coeffs = controller.raw_coefficients(alpha, phi)?;
    Ok(sim.loss(alpha, phi, &coeffs)?.loss)
}

/// Worst relative mismatch between the reverse-mode directional derivative
/// and a central difference with step `h` along `n_probes` random unit
/// directions in parameter space.
pub fn finite_difference_check(
    controller: &Controller,
    sim: &Simulator,
    task: (f64, f64),
    n_probes: usize,
    h: f64,
    seed: u64,
) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("difference step {h}")));
    }
    let (_, grad) = task_loss_and_gradient(controller, sim, task.0, task.1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..n_probes {
        let mut d: Vec<f64> = (0..grad.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let nd = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        d.iter_mut().for_each(|x| *x /= nd);
        let analytic: f64 = grad.iter().zip(&d).map(|(g, x)| g * x).sum();
        let shifted = |s: f64| -> Result<f64> {
            let mut c = controller.clone();
            c.mlp.params_mut().iter_mut().zip(&d).for_each(|(p, x)| *p += s * x);
            task_loss(&c, sim, task.0, task.1)
        };
        let fd = (shifted(h)? - shifted(-h)?) / (2.0 * h);
        let scale = analytic.abs().max(fd.abs()).max(1e-12);
        worst = worst.max((fd - analytic).abs() / scale);
    }
    Ok(worst)
}

/// Number of substeps the propagator takes for the given controls, a proxy
/// for simulation cost.
pub fn substep_count(sim: &Simulator, controls: &PiecewiseControls) -> usize {
    (0..controls.n_intervals())
        .map(|j| Drive::new(sim.hilbert, sim.params.chi, controls.eps_c[j], controls.eps_q[j]).substeps(controls.dt))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::TaskSampler;
    use crate::dynamics::{SystemParams, TimeGrid};
    use crate::hilbert::HilbertConfig;
    use rand::Rng;

    fn sim(n_fock: usize, pump: bool) -> Simulator {
        Simulator::new(
            HilbertConfig::new(n_fock).unwrap(),
            TimeGrid::new(40, 2.0).unwrap(),
            SystemParams::default().with_pump(pump),
        )
        .unwrap()
    }

    fn random_coeffs(seed: u64, scale: f64) -> CoefficientSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat: Vec<f64> = (0..36).map(|_| rng.random_range(-scale..scale)).collect();
        CoefficientSet::from_flat(&flat).unwrap()
    }

    fn controller(seed: u64) -> Controller {
        let s = TaskSampler::new(2.0, 0.1, false).unwrap();
        Controller::new(&s, 2.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn fused_overlaps_match_generators() {
        let cfg = HilbertConfig::new(7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut v = || -> Vec<C64> { (0..14).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect() };
        let (g, x) = (v(), v());
        let drive = Drive::new(cfg, 1.0, C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        let ov = generator_overlaps(7, &g, &x);
        let mut gx = vec![ZERO; 14];
        for r in 0..4 {
            drive.apply_generator(r, &x, &mut gx);
            assert!((inner(&g, &gx) - ov[r]).norm() < 1e-13);
        }
    }

    #[test]
    fn coefficient_gradient_matches_differences() {
        let s = sim(15, true);
        let c = random_coeffs(1, 3.0);
        let g = coefficient_gradient(&s, 1.2, 0.8, &c, Checkpointing::Nodes).unwrap();
        let base = c.to_flat();
        let h = 1e-6;
        for k in [0, 5, 10, 19, 22, 30, 35] {
            let eval = |d: f64| {
                let mut f = base.clone();
                f[k] += d;
                s.loss(1.2, 0.8, &CoefficientSet::from_flat(&f).unwrap()).unwrap().loss
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let an = g.grad.iter().copied().collect::<Vec<_>>()[k];
            assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "coefficient {k}: {fd} vs {an}");
        }
    }

    #[test]
    fn forward_consistency() {
        let s = sim(15, false);
        let c = random_coeffs(2, 2.0);
        let g = coefficient_gradient(&s, 1.0, 0.0, &c, Checkpointing::Nodes).unwrap();
        let direct = s.loss(1.0, 0.0, &c).unwrap();
        assert_eq!(g.loss, direct);
    }

    #[test]
    fn checkpointing_is_exact() {
        let s = sim(15, true);
        let c = random_coeffs(3, 4.0);
        let a = coefficient_gradient(&s, 1.5, 2.0, &c, Checkpointing::Nodes).unwrap();
        let b = coefficient_gradient(&s, 1.5, 2.0, &c, Checkpointing::Full).unwrap();
        for (x, y) in a.grad.iter().zip(b.grad.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn network_gradient_passes_probe_check() {
        let s = sim(15, true);
        let c = controller(5);
        let err = finite_difference_check(&c, &s, (1.3, 0.4), 5, 1e-5, 7).unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn coarse_step_is_detected() {
        let s = sim(15, true);
        let c = controller(5);
        let fine = finite_difference_check(&c, &s, (1.3, 0.4), 3, 1e-5, 7).unwrap();
        let coarse = finite_difference_check(&c, &s, (1.3, 0.4), 3, 1e-1, 7).unwrap();
        assert!(coarse > 10.0 * fine);
    }

    #[test]
    fn batch_of_duplicates_equals_single() {
        let s = sim(16, false);
        let c = controller(6);
        let one = loss_and_gradient(&c, &s, &[(1.0, 0.3)]).unwrap();
        let two = loss_and_gradient(&c, &s, &[(1.0, 0.3), (1.0, 0.3)]).unwrap();
        assert!((one.mean_loss - two.mean_loss).abs() < 1e-15);
        for (a, b) in one.grad.iter().zip(&two.grad) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn batch_gradient_is_weighted_mean() {
        let s = sim(16, false);
        let c = controller(7);
        let a = [(0.5, 0.1), (1.7, 2.5)];
        let b = [(1.1, 1.0)];
        let all = [a[0], a[1], b[0]];
        let ga = loss_and_gradient(&c, &s, &a).unwrap();
        let gb = loss_and_gradient(&c, &s, &b).unwrap();
        let gall = loss_and_gradient(&c, &s, &all).unwrap();
        for i in 0..c.n_params() {
            let w = (2.0 * ga.grad[i] + gb.grad[i]) / 3.0;
            assert!((w - gall.grad[i]).abs() < 1e-10);
        }
        assert!(loss_and_gradient(&c, &s, &[]).is_err());
    }

    #[test]
    fn small_step_descends() {
        let s = sim(16, true);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut ok = 0;
        let trials = 20;
        for t in 0..trials {
            let c = controller(100 + t);
            let task = (rng.random_range(0.2..1.8), rng.random_range(0.0..3.0));
            let (l0, g) = task_loss_and_gradient(&c, &s, task.0, task.1).unwrap();
            let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut moved = c.clone();
            let step = 1e-3 / gn.max(1e-12);
            moved.mlp.params_mut().iter_mut().zip(&g).for_each(|(p, d)| *p -= step * d);
            if task_loss(&moved, &s, task.0, task.1).unwrap() < l0.loss {
                ok += 1;
            }
        }
        assert!(ok as f64 >= 0.95 * trials as f64);
    }
}
