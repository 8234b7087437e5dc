//! Parity measurement as a pair of Heisenberg-picture observables.
//!
//! The sequence is `Ry(π/2)`, a free wait of `t_par`, `Ry(∓π/2)`, then a
//! projective qubit readout. Pulling the ground-state projector back through
//! it gives one observable per polarity. Every step maps operators that are
//! diagonal in the Fock basis within each qubit block to operators of the
//! same kind, so an observable is four vectors over the photon number and
//! the wait is integrated exactly on them: cavity decay only couples `n` to
//! `n − 1`, so no truncation enters.

use ndarray::s;

use crate::dynamics::{taylor_step, ChannelKind, DecoherenceChannel, TAYLOR_DEGREE, TAYLOR_THETA};
use crate::hilbert::{displacement_block, TRUNCATION_TOLERANCE};
use crate::{Error, Result, C64};

use super::PreparedState;

const ZERO: C64 = C64::new(0.0, 0.0);

/// `(D ρ_ab D†)_nn` for the qubit blocks of a displaced state.
#[derive(Clone, Debug)]
pub struct DisplacedDiagonals {
    pub c00: Vec<f64>,
    pub c11: Vec<f64>,
    /// Empty unless requested.
    pub c01: Vec<C64>,
}

/// Diagonals of `D(−β) ρ_ab D(−β)†` on `rows` Fock levels.
pub fn displaced_diagonals(state: &PreparedState, beta: C64, rows: usize, coherence: bool) -> Result<DisplacedDiagonals> {
    let n = state.config().n_fock();
    let d = displacement_block(-beta, rows, n);
    let (c00, c11, c01, total) = match state {
        PreparedState::Pure(psi) => {
            let v0 = d.dot(&ndarray::ArrayView1::from(psi.cavity_block(0)));
            let v1 = d.dot(&ndarray::ArrayView1::from(psi.cavity_block(1)));
            let c01 = if coherence {
                v0.iter().zip(v1.iter()).map(|(a, b)| a * b.conj()).collect()
            } else {
                Vec::new()
            };
            (
                v0.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>(),
                v1.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>(),
                c01,
                psi.norm_sqr(),
            )
        }
        PreparedState::Mixed(rho) => {
            let m = rho.matrix();
            let diag_of = |blk: ndarray::ArrayView2<C64>| -> Vec<C64> {
                let x = d.dot(&blk);
                (0..rows)
                    .map(|k| x.row(k).iter().zip(d.row(k).iter()).map(|(a, b)| a * b.conj()).sum())
                    .collect()
            };
            let c00: Vec<f64> = diag_of(m.slice(s![0..n, 0..n])).iter().map(|z| z.re).collect();
            let c11: Vec<f64> = diag_of(m.slice(s![n..2 * n, n..2 * n])).iter().map(|z| z.re).collect();
            let c01 = if coherence { diag_of(m.slice(s![0..n, n..2 * n])) } else { Vec::new() };
            (c00, c11, c01, rho.trace())
        }
    };
    let kept: f64 = c00.iter().sum::<f64>() + c11.iter().sum::<f64>();
    if total > 0.0 && (total - kept) / total > TRUNCATION_TOLERANCE {
        return Err(Error::Truncation {
            leakage: (total - kept) / total,
            n_fock: n,
        });
    }
    Ok(DisplacedDiagonals { c00, c11, c01 })
}

/// An observable `Σ_ab |a⟩⟨b| ⊗ diag(o_ab)`; Hermitian, so `o_10 = o_01*`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalObservable {
    pub o00: Vec<f64>,
    pub o11: Vec<f64>,
    pub o01: Vec<C64>,
}

impl DiagonalObservable {
    pub fn rows(&self) -> usize {
        self.o00.len()
    }

    /// `Tr[O σ]` for the displaced state behind `c`. With `ground_only`
    /// the qubit-excited branch and the coherences are dropped, as after a
    /// projective qubit reset that keeps only the ground outcome.
    pub fn expectation(&self, c: &DisplacedDiagonals, ground_only: bool) -> f64 {
        let rows = c.c00.len().min(self.rows());
        let mut acc: f64 = (0..rows).map(|n| self.o00[n] * c.c00[n]).sum();
        if !ground_only {
            acc += (0..rows).map(|n| self.o11[n] * c.c11[n]).sum::<f64>();
            if !c.c01.is_empty() {
                // Tr[O_10 σ_01] + Tr[O_01 σ_10] = 2 Re Σ o_01* c_01
                acc += 2.0 * (0..rows).map(|n| (self.o01[n].conj() * c.c01[n]).re).sum::<f64>();
            }
        }
        acc
    }

    fn from_flat(x: &[C64], rows: usize) -> Self {
        Self {
            o00: x[..rows].iter().map(|z| z.re).collect(),
            o01: x[rows..2 * rows].to_vec(),
            o11: x[3 * rows..].iter().map(|z| z.re).collect(),
        }
    }

    fn difference(&self, other: &Self) -> Self {
        Self {
            o00: self.o00.iter().zip(&other.o00).map(|(a, b)| a - b).collect(),
            o11: self.o11.iter().zip(&other.o11).map(|(a, b)| a - b).collect(),
            o01: self.o01.iter().zip(&other.o01).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Ground-readout observables for the two polarities.
#[derive(Clone, Debug, PartialEq)]
pub struct ParityReadout {
    pub plus: DiagonalObservable,
    pub minus: DiagonalObservable,
}

/// Flat layout `[x00, x01, x10, x11]`, each of length `rows`.
struct WaitGenerator {
    rows: usize,
    chi: f64,
    kappa: f64,
    gamma_down: f64,
    gamma_up: f64,
    gamma_phi: f64,
}

impl WaitGenerator {
    fn new(rows: usize, chi: f64, channels: &[DecoherenceChannel]) -> Self {
        let mut g = Self {
            rows,
            chi,
            kappa: 0.0,
            gamma_down: 0.0,
            gamma_up: 0.0,
            gamma_phi: 0.0,
        };
        for ch in channels {
            let r = ch.rate();
            match ch.kind {
                ChannelKind::CavityDecay => g.kappa += r,
                ChannelKind::QubitDecay => g.gamma_down += r,
                ChannelKind::Pump => g.gamma_up += r,
                ChannelKind::QubitDephasing => g.gamma_phi += r,
            }
        }
        g
    }

    fn norm_bound(&self) -> f64 {
        let n = (self.rows - 1) as f64;
        self.chi * n + 2.0 * self.kappa * n + 2.0 * (self.gamma_down + self.gamma_up + self.gamma_phi)
    }

    /// Adjoint Lindbladian with `H = −χ a†a ⊗ |1⟩⟨1|`.
    fn apply(&self, x: &[C64], out: &mut [C64]) {
        let r = self.rows;
        let i = C64::new(0.0, 1.0);
        let off_damp = 0.5 * (self.gamma_down + self.gamma_up) + self.gamma_phi;
        for b in 0..4 {
            let (qa, qb) = (b / 2, b % 2);
            for n in 0..r {
                let nf = n as f64;
                let k = b * r + n;
                let ha = if qa == 1 { -self.chi * nf } else { 0.0 };
                let hb = if qb == 1 { -self.chi * nf } else { 0.0 };
                let mut v = i * (ha - hb) * x[k] - self.kappa * nf * x[k];
                if n > 0 {
                    v += self.kappa * nf * x[k - 1];
                }
                match b {
                    0 => v += self.gamma_up * (x[3 * r + n] - x[k]),
                    3 => v += self.gamma_down * (x[n] - x[k]),
                    _ => v -= off_damp * x[k],
                }
                out[k] = v;
            }
        }
    }

    fn evolve(&self, x: &mut Vec<C64>, t: f64) {
        if t == 0.0 {
            return;
        }
        let steps = ((t * self.norm_bound()) / TAYLOR_THETA).ceil().max(1.0) as usize;
        let h = t / steps as f64;
        for _ in 0..steps {
            taylor_step(|a, o| self.apply(a, o), C64::new(h, 0.0), x, TAYLOR_DEGREE, None);
        }
    }
}

/// `X ← R_y(θ)ᵀ X R_y(θ)` block by block.
fn rotate(x: &mut [C64], rows: usize, theta: f64) {
    let (c, s) = ((0.5 * theta).cos(), (0.5 * theta).sin());
    let r = [[c, -s], [s, c]];
    for n in 0..rows {
        let m = [[x[n], x[rows + n]], [x[2 * rows + n], x[3 * rows + n]]];
        let mut out = [[ZERO; 2]; 2];
        for (a, row) in out.iter_mut().enumerate() {
            for (b, o) in row.iter_mut().enumerate() {
                for p in 0..2 {
                    for q in 0..2 {
                        *o += r[p][a] * m[p][q] * r[q][b];
                    }
                }
            }
        }
        x[n] = out[0][0];
        x[rows + n] = out[0][1];
        x[2 * rows + n] = out[1][0];
        x[3 * rows + n] = out[1][1];
    }
}

impl ParityReadout {
    /// Observables for a wait of `t_par` under `channels`, on `rows` Fock
    /// levels.
    pub fn new(chi: f64, t_par: f64, channels: &[DecoherenceChannel], rows: usize) -> Result<Self> {
        if rows == 0 || !(t_par >= 0.0 && t_par.is_finite()) || !(chi > 0.0) {
            return Err(Error::InvalidArgument(format!("parity readout rows={rows} t_par={t_par} chi={chi}")));
        }
        let gen = WaitGenerator::new(rows, chi, channels);
        let observable = |final_angle: f64| {
            let mut x = vec![ZERO; 4 * rows];
            x[..rows].iter_mut().for_each(|z| *z = C64::new(1.0, 0.0));
            rotate(&mut x, rows, final_angle);
            gen.evolve(&mut x, t_par);
            rotate(&mut x, rows, std::f64::consts::FRAC_PI_2);
            DiagonalObservable::from_flat(&x, rows)
        };
        Ok(Self {
            plus: observable(-std::f64::consts::FRAC_PI_2),
            minus: observable(std::f64::consts::FRAC_PI_2),
        })
    }

    pub fn rows(&self) -> usize {
        self.plus.rows()
    }

    /// `O₊ − O₋`, whose expectation is the mean differenced outcome in
    /// units of `2/π`.
    pub fn signal_observable(&self) -> DiagonalObservable {
        self.plus.difference(&self.minus)
    }

    /// Ground-readout probabilities for the two polarities.
    pub fn probabilities(&self, c: &DisplacedDiagonals, ground_only: bool) -> (f64, f64) {
        (self.plus.expectation(c, ground_only), self.minus.expectation(c, ground_only))
    }
}

/// The readout observable of an instantaneous, noiseless parity map:
/// `σz ⊗ (−1)^{a†a}` in the ground-minus-excited convention.
pub fn ideal_signal_observable(rows: usize) -> DiagonalObservable {
    let par: Vec<f64> = (0..rows).map(|n| if n % 2 == 0 { 1.0 } else { -1.0 }).collect();
    DiagonalObservable {
        o11: par.iter().map(|p| -p).collect(),
        o00: par,
        o01: vec![ZERO; rows],
    }
}

/// Dense joint-space form of an observable, for tests.
#[cfg(test)]
pub(crate) fn to_dense(o: &DiagonalObservable) -> ndarray::Array2<C64> {
    let r = o.rows();
    let mut m = ndarray::Array2::zeros((2 * r, 2 * r));
    for n in 0..r {
        m[[n, n]] = C64::new(o.o00[n], 0.0);
        m[[r + n, r + n]] = C64::new(o.o11[n], 0.0);
        m[[n, r + n]] = o.o01[n];
        m[[r + n, n]] = o.o01[n].conj();
    }
    m
}
