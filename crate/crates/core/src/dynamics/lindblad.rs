//! Open-system evolution `dρ/dt = −i[H, ρ] + Σ_i (1/τ_i) D[A_i] ρ`
//! with `D[A]ρ = AρA† − ½{A†A, ρ}`.

use ndarray::Array2;

use super::kernel::{taylor_step, Drive};
use super::{DecoherenceChannel, PiecewiseControls, SystemParams, TimeGrid};
use crate::hilbert::{DensityMatrix, HilbertConfig};
use crate::splines::{BSplineBasis, CoefficientSet};
use crate::{Error, Result, C64};

/// Largest tolerated trace change over a propagation.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Step control for the Lindblad integrator.
///
/// Each substep applies the degree-`degree` Taylor polynomial of
/// `e^{hL}`; degree 4 is the classical fourth-order Runge–Kutta update for
/// this linear equation. Substeps are at most `dt / min_substeps` long and
/// satisfy `h·‖L‖ ≤ theta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LindbladOptions {
    pub degree: usize,
    pub theta: f64,
    pub min_substeps: usize,
}

impl Default for LindbladOptions {
    fn default() -> Self {
        Self {
            degree: super::TAYLOR_DEGREE,
            theta: super::TAYLOR_THETA,
            min_substeps: 4,
        }
    }
}

impl LindbladOptions {
    /// Classical RK4 with `h·‖L‖ ≤ theta`.
    pub fn rk4(theta: f64) -> Self {
        Self {
            degree: 4,
            theta,
            min_substeps: 4,
        }
    }
}

struct Jump {
    rate: f64,
    map: Vec<Option<(usize, f64)>>,
    /// Diagonal of `A†A`.
    diag: Vec<f64>,
}

/// Lindblad generator for fixed drive values.
pub struct Lindbladian {
    dim: usize,
    h_rows: Vec<Vec<(usize, C64)>>,
    h_bound: f64,
    jumps: Vec<Jump>,
    /// `Σ_i γ_i (A_i†A_i)_{kk}`
    decay_diag: Vec<f64>,
}

impl Lindbladian {
    pub fn new(cfg: HilbertConfig, chi: f64, eps_c: C64, eps_q: C64, channels: &[DecoherenceChannel]) -> Self {
        let drive = Drive::new(cfg, chi, eps_c, eps_q);
        let d = cfg.dim();
        let mut h_rows = vec![Vec::new(); d];
        let mut e = vec![ZERO; d];
        let mut col = vec![ZERO; d];
        for j in 0..d {
            e[j] = C64::new(1.0, 0.0);
            drive.apply_h(&e, &mut col);
            for i in 0..d {
                if col[i] != ZERO {
                    h_rows[i].push((j, col[i]));
                }
            }
            e[j] = ZERO;
        }
        let mut decay_diag = vec![0.0; d];
        let jumps: Vec<Jump> = channels
            .iter()
            .map(|ch| {
                let map = ch.row_map(cfg);
                let mut diag = vec![0.0; d];
                for e in map.iter().flatten() {
                    diag[e.0] += e.1 * e.1;
                }
                for k in 0..d {
                    decay_diag[k] += ch.rate() * diag[k];
                }
                Jump {
                    rate: ch.rate(),
                    map,
                    diag,
                }
            })
            .collect();
        Self {
            dim: d,
            h_rows,
            h_bound: drive.norm_bound(),
            jumps,
            decay_diag,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Upper bound on the induced norm of the generator.
    pub fn norm_bound(&self) -> f64 {
        let diss: f64 = self
            .jumps
            .iter()
            .map(|j| 2.0 * j.rate * j.diag.iter().cloned().fold(0.0, f64::max))
            .sum();
        2.0 * self.h_bound + diss
    }

    fn h_times(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        out.fill(ZERO);
        for (i, row) in self.h_rows.iter().enumerate() {
            let dst = &mut out[i * d..(i + 1) * d];
            for &(k, hv) in row {
                let src = &rho[k * d..(k + 1) * d];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += hv * s;
                }
            }
        }
    }

    /// `out = L(ρ)` on a row-major Hermitian matrix.
    pub fn apply(&self, rho: &[C64], out: &mut [C64]) {
        self.apply_inner(rho, out, false)
    }

    /// `out = L†(X)`, the Heisenberg-picture generator, on a Hermitian `X`.
    pub fn apply_adjoint(&self, x: &[C64], out: &mut [C64]) {
        self.apply_inner(x, out, true)
    }

    fn apply_inner(&self, rho: &[C64], out: &mut [C64], adjoint: bool) {
        let d = self.dim;
        self.h_times(rho, out);
        // −i(Hρ − ρH) with ρH = (Hρ)† for Hermitian ρ; the adjoint flips the sign.
        let sign = if adjoint { C64::new(0.0, 1.0) } else { C64::new(0.0, -1.0) };
        for i in 0..d {
            for j in i..d {
                let a = out[i * d + j];
                let b = out[j * d + i];
                let cij = sign * (a - b.conj());
                out[i * d + j] = cij;
                out[j * d + i] = cij.conj();
            }
        }
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] -= rho[i * d + j] * (0.5 * (self.decay_diag[i] + self.decay_diag[j]));
            }
        }
        for jump in &self.jumps {
            if adjoint {
                // A†XA: scatter X_{ij} into (π(i), π(j)).
                for (i, ei) in jump.map.iter().enumerate() {
                    let Some((pi, vi)) = *ei else { continue };
                    for (j, ej) in jump.map.iter().enumerate() {
                        let Some((pj, vj)) = *ej else { continue };
                        out[pi * d + pj] += rho[i * d + j] * (jump.rate * vi * vj);
                    }
                }
            } else {
                for (i, ei) in jump.map.iter().enumerate() {
                    let Some((pi, vi)) = *ei else { continue };
                    for (j, ej) in jump.map.iter().enumerate() {
                        let Some((pj, vj)) = *ej else { continue };
                        out[i * d + j] += rho[pi * d + pj] * (jump.rate * vi * vj);
                    }
                }
            }
        }
    }

    /// Advances a row-major matrix by `dt`, in the Schrödinger picture or,
    /// with `adjoint`, in the Heisenberg picture.
    pub fn evolve(&self, rho: &mut Vec<C64>, dt: f64, options: LindbladOptions, adjoint: bool) {
        let s = ((dt * self.norm_bound() / options.theta).ceil() as usize).max(options.min_substeps);
        let h = dt / s as f64;
        for _ in 0..s {
            if adjoint {
                taylor_step(|x, o| self.apply_adjoint(x, o), C64::new(h, 0.0), rho, options.degree, None);
            } else {
                taylor_step(|x, o| self.apply(x, o), C64::new(h, 0.0), rho, options.degree, None);
            }
            symmetrize(rho, self.dim);
        }
    }
}

fn symmetrize(m: &mut [C64], d: usize) {
    for i in 0..d {
        m[i * d + i].im = 0.0;
        for j in i + 1..d {
            let avg = 0.5 * (m[i * d + j] + m[j * d + i].conj());
            m[i * d + j] = avg;
            m[j * d + i] = avg.conj();
        }
    }
}

fn trace(m: &[C64], d: usize) -> f64 {
    (0..d).map(|i| m[i * d + i].re).sum()
}

/// Density matrices at every node under piecewise-constant controls.
pub fn propagate_lindblad_controls(
    rho0: &DensityMatrix,
    controls: &PiecewiseControls,
    channels: &[DecoherenceChannel],
    params: &SystemParams,
    options: LindbladOptions,
) -> Result<Vec<DensityMatrix>> {
    let cfg = rho0.config();
    let d = cfg.dim();
    let mut rho: Vec<C64> = rho0.matrix().iter().copied().collect();
    let tr0 = trace(&rho, d);
    let mut out = Vec::with_capacity(controls.n_intervals() + 1);
    out.push(rho0.clone());
    for j in 0..controls.n_intervals() {
        let l = Lindbladian::new(cfg, params.chi, controls.eps_c[j], controls.eps_q[j], channels);
        l.evolve(&mut rho, controls.dt, options, false);
        let tr = trace(&rho, d);
        if !tr.is_finite() {
            return Err(Error::NonFinite {
                context: format!("density matrix after interval {j}"),
            });
        }
        if (tr - tr0).abs() > TRACE_DRIFT_LIMIT {
            return Err(Error::TraceDrift {
                drift: tr - tr0,
                t: (j + 1) as f64 * controls.dt,
            });
        }
        let m = Array2::from_shape_vec((d, d), rho.clone()).expect("square buffer");
        out.push(DensityMatrix::new(cfg, m)?);
    }
    Ok(out)
}

/// Density matrices at every grid node under a spline pulse.
pub fn propagate_lindblad(
    rho0: &DensityMatrix,
    coeffs: &CoefficientSet,
    basis: &BSplineBasis,
    grid: &TimeGrid,
    channels: &[DecoherenceChannel],
    params: &SystemParams,
) -> Result<Vec<DensityMatrix>> {
    let mid = basis.sample(&grid.midpoints())?;
    let controls = PiecewiseControls::from_coefficients(coeffs, &mid, grid)?;
    propagate_lindblad_controls(rho0, &controls, channels, params, LindbladOptions::default())
}
