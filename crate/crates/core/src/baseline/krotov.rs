//! First-order Krotov refinement under the Lindblad equation.
//!
//! The figure of merit `F = ⟨T|ρ(T)|T⟩` is linear in the final state, so
//! the co-state is `|T⟩⟨T|` carried backwards by the adjoint generator.
//! Each sweep updates the controls sequentially with the freshly
//! propagated state:
//! `Δu_r(t_j) = S(t_j)/λ · Re Tr[χ(t_{j+1})† (−i[G_r, ρ(t_j)])]`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Drive, DecoherenceChannel, LindbladOptions, Lindbladian, PiecewiseControls, SystemParams};
use crate::hilbert::{HilbertConfig, StateVector};
use crate::splines::N_CONTROLS;
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// The fine grid keeps `h‖L‖` far below one, so a short Taylor series is exact.
const KROTOV_PROPAGATION: LindbladOptions = LindbladOptions {
    degree: 10,
    theta: 0.5,
    min_substeps: 1,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KrotovConfig {
    /// Inverse step weight.
    pub lambda: f64,
    pub max_iterations: usize,
    /// Stop once an iteration gains less fidelity than this.
    pub tolerance: f64,
    /// Largest fidelity loss accepted from one iteration.
    pub monotonicity_tolerance: f64,
    /// Length of the sin² ramps of the update shape at both ends, µs.
    pub rise_time: f64,
    /// `λ` doublings allowed in one iteration before giving up.
    pub max_retries: usize,
}

impl Default for KrotovConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            max_iterations: 30,
            tolerance: 1e-5,
            monotonicity_tolerance: 1e-6,
            rise_time: 0.02,
            max_retries: 8,
        }
    }
}

impl KrotovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("Krotov λ must be positive, got {}", self.lambda)));
        }
        if !(self.rise_time >= 0.0) || !(self.tolerance >= 0.0) || !(self.monotonicity_tolerance >= 0.0) {
            return Err(Error::InvalidArgument("Krotov rise time and tolerances must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct KrotovResult {
    pub controls: PiecewiseControls,
    /// Fidelity of the initial guess and after every accepted iteration.
    pub fidelity_trace: Vec<f64>,
    /// `λ` in force at the end.
    pub lambda: f64,
    /// Total number of rejected sweeps.
    pub retries: usize,
}

/// Nonzero entries `(row, column, value)` of each control generator.
fn generator_entries(cfg: HilbertConfig) -> Vec<Vec<(usize, usize, C64)>> {
    let drive = Drive::new(cfg, 0.0, ZERO, ZERO);
    let d = cfg.dim();
    let mut e = vec![ZERO; d];
    let mut col = vec![ZERO; d];
    (0..N_CONTROLS)
        .map(|r| {
            let mut entries = Vec::new();
            for k in 0..d {
                e[k] = C64::new(1.0, 0.0);
                drive.apply_generator(r, &e, &mut col);
                for (i, v) in col.iter().enumerate() {
                    if *v != ZERO {
                        entries.push((i, k, *v));
                    }
                }
                e[k] = ZERO;
            }
            entries
        })
        .collect()
}

/// `Re Tr[χ† (−i[G, ρ])] = 2 Im Tr[χ† G ρ]` for Hermitian `χ`, `ρ`.
fn commutator_overlap(entries: &[(usize, usize, C64)], chi: &[C64], rho: &[C64], d: usize) -> f64 {
    let mut acc = ZERO;
    for &(i, k, v) in entries {
        let c = &chi[i * d..(i + 1) * d];
        let r = &rho[k * d..(k + 1) * d];
        let s: C64 = c.iter().zip(r).map(|(a, b)| a.conj() * b).sum();
        acc += v * s;
    }
    2.0 * acc.im
}

fn update_shape(t: f64, duration: f64, rise: f64) -> f64 {
    if rise <= 0.0 {
        return 1.0;
    }
    let edge = t.min(duration - t).max(0.0);
    if edge >= rise {
        1.0
    } else {
        (0.5 * std::f64::consts::PI * edge / rise).sin().powi(2)
    }
}

struct Problem<'a> {
    cfg: HilbertConfig,
    chi: f64,
    channels: &'a [DecoherenceChannel],
    target: Vec<C64>,
}

impl Problem<'_> {
    fn lindbladian(&self, c: &PiecewiseControls, j: usize) -> Lindbladian {
        Lindbladian::new(self.cfg, self.chi, c.eps_c[j], c.eps_q[j], self.channels)
    }

    fn initial(&self) -> Vec<C64> {
        let d = self.cfg.dim();
        let mut rho = vec![ZERO; d * d];
        rho[0] = C64::new(1.0, 0.0);
        rho
    }

    fn fidelity(&self, rho: &[C64]) -> f64 {
        let d = self.cfg.dim();
        let t = &self.target;
        let mut acc = ZERO;
        for i in 0..d {
            let row: C64 = (0..d).map(|j| rho[i * d + j] * t[j]).sum();
            acc += t[i].conj() * row;
        }
        acc.re
    }

    fn forward(&self, c: &PiecewiseControls) -> Result<f64> {
        let mut rho = self.initial();
        for j in 0..c.n_intervals() {
            self.lindbladian(c, j).evolve(&mut rho, c.dt, KROTOV_PROPAGATION, false);
        }
        self.checked(self.fidelity(&rho))
    }

    fn checked(&self, f: f64) -> Result<f64> {
        if f.is_finite() {
            Ok(f)
        } else {
            Err(Error::NonFinite {
                context: "Krotov fidelity".into(),
            })
        }
    }

    /// `χ(t_j)` for `j = 1 … n`, stored at index `j − 1`.
    fn backward(&self, c: &PiecewiseControls) -> Vec<Vec<C64>> {
        let d = self.cfg.dim();
        let n = c.n_intervals();
        let mut chi = vec![ZERO; d * d];
        for i in 0..d {
            for j in 0..d {
                chi[i * d + j] = self.target[i] * self.target[j].conj();
            }
        }
        let mut out = vec![Vec::new(); n];
        for j in (0..n).rev() {
            out[j] = chi.clone();
            if j > 0 {
                self.lindbladian(c, j).evolve(&mut chi, c.dt, KROTOV_PROPAGATION, true);
            }
        }
        out
    }

    fn sweep(
        &self,
        c: &PiecewiseControls,
        chis: &[Vec<C64>],
        lambda: f64,
        rise: f64,
        generators: &[Vec<(usize, usize, C64)>],
    ) -> Result<(PiecewiseControls, f64)> {
        let d = self.cfg.dim();
        let mut new = c.clone();
        let mut rho = self.initial();
        let duration = c.duration();
        for j in 0..c.n_intervals() {
            let s = update_shape((j as f64 + 0.5) * c.dt, duration, rise) / lambda;
            let g: Vec<f64> = generators
                .iter()
                .map(|e| commutator_overlap(e, &chis[j], &rho, d))
                .collect();
            new.eps_c[j] += C64::new(s * g[0], s * g[1]);
            new.eps_q[j] += C64::new(s * g[2], s * g[3]);
            self.lindbladian(&new, j).evolve(&mut rho, c.dt, KROTOV_PROPAGATION, false);
        }
        let f = self.checked(self.fidelity(&rho))?;
        Ok((PiecewiseControls::new(c.dt, new.eps_c, new.eps_q)?, f))
    }
}

/// Lindblad fidelity `⟨T|ρ(T)|T⟩` of `controls` from the ground state.
pub fn lindblad_fidelity(
    controls: &PiecewiseControls,
    target: &StateVector,
    channels: &[DecoherenceChannel],
    params: &SystemParams,
) -> Result<f64> {
    let p = Problem {
        cfg: target.config(),
        chi: params.chi,
        channels,
        target: target.amplitudes().to_vec(),
    };
    p.forward(controls)
}

/// Refines `init` towards `target` under `channels`.
pub fn krotov_refine(
    init: &PiecewiseControls,
    target: &StateVector,
    channels: &[DecoherenceChannel],
    params: &SystemParams,
    config: &KrotovConfig,
) -> Result<KrotovResult> {
    krotov_refine_with(init, target, channels, params, config, |_, _| {})
}

/// As [`krotov_refine`], reporting each accepted iteration and fidelity.
pub fn krotov_refine_with<P: FnMut(usize, f64)>(
    init: &PiecewiseControls,
    target: &StateVector,
    channels: &[DecoherenceChannel],
    params: &SystemParams,
    config: &KrotovConfig,
    mut progress: P,
) -> Result<KrotovResult> {
    config.validate()?;
    let p = Problem {
        cfg: target.config(),
        chi: params.chi,
        channels,
        target: target.amplitudes().to_vec(),
    };
    let generators = generator_entries(p.cfg);
    let mut controls = init.clone();
    let mut f_old = p.forward(&controls)?;
    let mut trace = vec![f_old];
    let mut lambda = config.lambda;
    let mut retries = 0;
    for it in 0..config.max_iterations {
        let chis = p.backward(&controls);
        let mut attempts = 0;
        let (new, f_new) = loop {
            let (new, f_new) = p.sweep(&controls, &chis, lambda, config.rise_time, &generators)?;
            if f_new >= f_old - config.monotonicity_tolerance {
                break (new, f_new);
            }
            attempts += 1;
            retries += 1;
            if attempts > config.max_retries {
                return Err(Error::KrotovStalled { retries: attempts - 1 });
            }
            lambda *= 2.0;
        };
        controls = new;
        trace.push(f_new);
        progress(it + 1, f_new);
        let gain = f_new - f_old;
        f_old = f_new;
        if gain < config.tolerance {
            break;
        }
    }
    Ok(KrotovResult {
        controls,
        fidelity_trace: trace,
        lambda,
        retries,
    })
}
