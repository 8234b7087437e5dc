//! Truncated Fock space of a qubit coupled to a cavity.
//!
//! Joint states use qubit-major ordering: amplitude index `q * n_fock + n`
//! for qubit level `q ∈ {0, 1}` and photon number `n < n_fock`. Each qubit
//! level therefore owns a contiguous cavity block, which keeps partial
//! projections such as `⟨0|ρ|0⟩_q` cheap.

use std::f64::consts::PI;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::linalg::{inner, norm_sqr};
use crate::{Error, Result, C64};

/// Maximum norm that may be lost to Fock truncation before a state is rejected.
pub const TRUNCATION_TOLERANCE: f64 = 1e-6;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HilbertConfig {
    n_fock: usize,
}

impl HilbertConfig {
    pub fn new(n_fock: usize) -> Result<Self> {
        if n_fock < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 Fock levels, got {n_fock}"
            )));
        }
        Ok(Self { n_fock })
    }

    /// Configuration whose highest retained Fock state is `n_max`.
    pub fn from_n_max(n_max: usize) -> Result<Self> {
        Self::new(n_max + 1)
    }

    pub fn n_fock(&self) -> usize {
        self.n_fock
    }

    pub fn n_max(&self) -> usize {
        self.n_fock - 1
    }

    pub fn dim(&self) -> usize {
        2 * self.n_fock
    }

    #[inline]
    pub fn index(&self, qubit: usize, photons: usize) -> usize {
        qubit * self.n_fock + photons
    }
}

/// Pure joint state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    cfg: HilbertConfig,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(cfg: HilbertConfig, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != cfg.dim() {
            return Err(Error::InvalidArgument(format!(
                "state has {} amplitudes, expected {}",
                amps.len(),
                cfg.dim()
            )));
        }
        Ok(Self { cfg, amps })
    }

    /// `|qubit⟩ ⊗ |photons⟩`.
    pub fn basis(cfg: HilbertConfig, qubit: usize, photons: usize) -> Self {
        let mut amps = vec![ZERO; cfg.dim()];
        amps[cfg.index(qubit, photons)] = ONE;
        Self { cfg, amps }
    }

    pub fn ground(cfg: HilbertConfig) -> Self {
        Self::basis(cfg, 0, 0)
    }

    /// `|qubit⟩ ⊗ |cavity⟩`.
    pub fn product(cfg: HilbertConfig, qubit: usize, cavity: &[C64]) -> Result<Self> {
        if cavity.len() != cfg.n_fock() {
            return Err(Error::InvalidArgument(format!(
                "cavity vector has {} levels, expected {}",
                cavity.len(),
                cfg.n_fock()
            )));
        }
        let mut amps = vec![ZERO; cfg.dim()];
        let off = cfg.index(qubit, 0);
        amps[off..off + cfg.n_fock()].copy_from_slice(cavity);
        Ok(Self { cfg, amps })
    }

    pub fn config(&self) -> HilbertConfig {
        self.cfg
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amps)
    }

    pub fn cavity_block(&self, qubit: usize) -> &[C64] {
        let off = self.cfg.index(qubit, 0);
        &self.amps[off..off + self.cfg.n_fock()]
    }

    /// `P(n) = Σ_q |⟨q, n|ψ⟩|²`.
    pub fn photon_distribution(&self) -> Vec<f64> {
        let n = self.cfg.n_fock();
        (0..n)
            .map(|k| self.amps[k].norm_sqr() + self.amps[n + k].norm_sqr())
            .collect()
    }

    pub fn qubit_excited_population(&self) -> f64 {
        norm_sqr(self.cavity_block(1))
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(self)
    }

    /// Copies the state into a space with a different cavity truncation.
    /// Amplitudes above the new truncation are dropped.
    pub fn resized(&self, cfg: HilbertConfig) -> Self {
        let mut amps = vec![ZERO; cfg.dim()];
        let keep = cfg.n_fock().min(self.cfg.n_fock());
        for q in 0..2 {
            for n in 0..keep {
                amps[cfg.index(q, n)] = self.amps[self.cfg.index(q, n)];
            }
        }
        Self { cfg, amps }
    }
}

/// Mixed joint state.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    cfg: HilbertConfig,
    rho: Array2<C64>,
}

impl DensityMatrix {
    pub fn new(cfg: HilbertConfig, rho: Array2<C64>) -> Result<Self> {
        if rho.dim() != (cfg.dim(), cfg.dim()) {
            return Err(Error::InvalidArgument(format!(
                "density matrix is {:?}, expected {}x{}",
                rho.dim(),
                cfg.dim(),
                cfg.dim()
            )));
        }
        Ok(Self { cfg, rho })
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let d = psi.cfg.dim();
        let a = psi.amplitudes();
        let rho = Array2::from_shape_fn((d, d), |(i, j)| a[i] * a[j].conj());
        Self { cfg: psi.cfg, rho }
    }

    /// `|qubit⟩⟨qubit| ⊗ ρ_th` with a Bose–Einstein photon distribution of
    /// mean `n_th`, renormalised on the truncated space.
    pub fn thermal_cavity(cfg: HilbertConfig, qubit: usize, n_th: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&n_th) && n_th != 0.0 {
            return Err(Error::InvalidArgument(format!("thermal occupation {n_th}")));
        }
        let d = cfg.dim();
        let mut rho = Array2::zeros((d, d));
        let ratio = n_th / (1.0 + n_th);
        let mut p = 1.0 / (1.0 + n_th);
        let mut total = 0.0;
        for n in 0..cfg.n_fock() {
            let i = cfg.index(qubit, n);
            rho[[i, i]] = C64::new(p, 0.0);
            total += p;
            p *= ratio;
        }
        rho.mapv_inplace(|z| z / total);
        Ok(Self { cfg, rho })
    }

    pub fn config(&self) -> HilbertConfig {
        self.cfg
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.rho
    }

    pub fn matrix_mut(&mut self) -> &mut Array2<C64> {
        &mut self.rho
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.rho
    }

    pub fn trace(&self) -> f64 {
        self.rho.diag().iter().map(|z| z.re).sum()
    }

    /// Cavity operator `⟨row|ρ|col⟩_q`.
    pub fn block(&self, row: usize, col: usize) -> Array2<C64> {
        let n = self.cfg.n_fock();
        self.rho
            .slice(s![row * n..(row + 1) * n, col * n..(col + 1) * n])
            .to_owned()
    }

    pub fn photon_distribution(&self) -> Vec<f64> {
        let n = self.cfg.n_fock();
        (0..n)
            .map(|k| self.rho[[k, k]].re + self.rho[[n + k, n + k]].re)
            .collect()
    }

    pub fn qubit_excited_population(&self) -> f64 {
        let n = self.cfg.n_fock();
        (0..n).map(|k| self.rho[[n + k, n + k]].re).sum()
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn expectation_pure(&self, psi: &StateVector) -> f64 {
        let a = psi.amplitudes();
        let d = self.cfg.dim();
        let mut acc = ZERO;
        for i in 0..d {
            if a[i] == ZERO {
                continue;
            }
            let mut row = ZERO;
            for j in 0..d {
                row += self.rho[[i, j]] * a[j];
            }
            acc += a[i].conj() * row;
        }
        acc.re
    }

    /// Checks Hermiticity, unit trace and positivity.
    pub fn validate(&self) -> Result<()> {
        let herm = crate::linalg::hermiticity_defect(&self.rho);
        if herm > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "density matrix is not Hermitian (defect {herm:.3e})"
            )));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("density matrix trace {tr}")));
        }
        let min = crate::linalg::hermitian_eigenvalues(&self.rho)[0];
        if min < -1e-10 {
            return Err(Error::InvalidArgument(format!(
                "density matrix has eigenvalue {min:.3e}"
            )));
        }
        Ok(())
    }
}

/// Dense joint-space operators.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub a: Array2<C64>,
    pub n_op: Array2<C64>,
    pub sigma_minus: Array2<C64>,
    pub sigma_plus: Array2<C64>,
    /// `|1⟩⟨1| − |0⟩⟨0|` on the qubit.
    pub sigma_z: Array2<C64>,
    pub qubit_excited_projector: Array2<C64>,
}

pub fn build_operators(cfg: HilbertConfig) -> OperatorSet {
    let n = cfg.n_fock();
    let d = cfg.dim();
    let mut a = Array2::zeros((d, d));
    let mut n_op = Array2::zeros((d, d));
    let mut sm = Array2::zeros((d, d));
    let mut sz = Array2::zeros((d, d));
    let mut pe = Array2::zeros((d, d));
    for q in 0..2 {
        for k in 0..n {
            let i = cfg.index(q, k);
            n_op[[i, i]] = C64::new(k as f64, 0.0);
            if k + 1 < n {
                a[[i, cfg.index(q, k + 1)]] = C64::new(((k + 1) as f64).sqrt(), 0.0);
            }
            sz[[i, i]] = C64::new(if q == 1 { 1.0 } else { -1.0 }, 0.0);
            if q == 1 {
                pe[[i, i]] = ONE;
            }
        }
    }
    for k in 0..n {
        sm[[cfg.index(0, k), cfg.index(1, k)]] = ONE;
    }
    let sp = sm.t().to_owned();
    OperatorSet {
        a,
        n_op,
        sigma_minus: sm,
        sigma_plus: sp,
        sigma_z: sz,
        qubit_excited_projector: pe,
    }
}

/// Coherent-state amplitudes `e^{-|α|²/2} α^n / √n!` for `n < n_fock`,
/// before renormalisation, together with the truncated norm deficit.
pub fn coherent_amplitudes(alpha: C64, n_fock: usize) -> (Vec<C64>, f64) {
    let mut amps = Vec::with_capacity(n_fock);
    let mut c = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..n_fock {
        amps.push(c);
        c = c * alpha / ((n + 1) as f64).sqrt();
    }
    let leakage = (1.0 - norm_sqr(&amps)).max(0.0);
    (amps, leakage)
}

/// Normalised coherent state `|α⟩` on the cavity.
pub fn coherent_state(alpha: C64, cfg: HilbertConfig) -> Result<Vec<C64>> {
    let (mut amps, leakage) = coherent_amplitudes(alpha, cfg.n_fock());
    if leakage > TRUNCATION_TOLERANCE {
        return Err(Error::Truncation {
            leakage,
            n_fock: cfg.n_fock(),
        });
    }
    normalize(&mut amps);
    Ok(amps)
}

/// Cat state `∝ |α⟩ + e^{-iφ}|−α⟩` on the cavity.
///
/// Negative `alpha` is accepted and simply swaps the two branches. When the
/// two branches cancel (`α → 0`, `φ = π`) the normalised limit, Fock `|1⟩`,
/// is returned.
pub fn cat_state(alpha: f64, phi: f64, cfg: HilbertConfig) -> Result<Vec<C64>> {
    let (coh, leakage) = coherent_amplitudes(C64::new(alpha, 0.0), cfg.n_fock());
    if leakage > TRUNCATION_TOLERANCE {
        return Err(Error::Truncation {
            leakage,
            n_fock: cfg.n_fock(),
        });
    }
    let rel = C64::from_polar(1.0, -phi);
    let mut amps: Vec<C64> = coh
        .iter()
        .enumerate()
        .map(|(n, c)| {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            c * (ONE + rel * sign)
        })
        .collect();
    // Untruncated normalisation 2(1 + cos φ e^{-2α²}) sets the scale of the
    // cancellation test.
    let norm2 = norm_sqr(&amps);
    if norm2 < 1e-12 {
        let mut fock1 = vec![ZERO; cfg.n_fock()];
        fock1[1] = ONE;
        return Ok(fock1);
    }
    amps.iter_mut().for_each(|z| *z /= norm2.sqrt());
    Ok(amps)
}

/// `|0⟩_q ⊗ |C_α^φ⟩`.
pub fn target_state(alpha: f64, phi: f64, cfg: HilbertConfig) -> Result<StateVector> {
    let cat = cat_state(alpha, phi, cfg)?;
    StateVector::product(cfg, 0, &cat)
}

fn normalize(v: &mut [C64]) {
    let n = norm_sqr(v).sqrt();
    v.iter_mut().for_each(|z| *z /= n);
}

/// Borrowed view of a pure or mixed joint state.
#[derive(Clone, Copy, Debug)]
pub enum StateRef<'a> {
    Pure(&'a StateVector),
    Mixed(&'a DensityMatrix),
}

impl<'a> From<&'a StateVector> for StateRef<'a> {
    fn from(s: &'a StateVector) -> Self {
        StateRef::Pure(s)
    }
}

impl<'a> From<&'a DensityMatrix> for StateRef<'a> {
    fn from(s: &'a DensityMatrix) -> Self {
        StateRef::Mixed(s)
    }
}

/// Number of Fock rows needed to hold `D(β)` applied to states supported
/// on `n_fock` levels without measurable leakage.
pub fn displaced_rows(n_fock: usize, beta: C64) -> usize {
    let r = (n_fock as f64).sqrt() + beta.norm();
    (r * r + 6.0 * r + 12.0).ceil() as usize
}

/// Exact matrix elements `⟨m|D(β)|n⟩` for `m < rows`, `n < cols`.
///
/// Uses the associated-Laguerre closed form, evaluated along each diagonal
/// `|m − n| = const` with a recurrence on pre-scaled Laguerre values so that
/// neither factorials nor `e^{|β|²}` are ever formed explicitly.
pub fn displacement_block(beta: C64, rows: usize, cols: usize) -> Array2<C64> {
    let mut d = Array2::zeros((rows, cols));
    let x = beta.norm_sqr();
    if x == 0.0 {
        for k in 0..rows.min(cols) {
            d[[k, k]] = ONE;
        }
        return d;
    }
    let mag = beta.norm();
    let phase_lower = beta / mag;
    let phase_upper = -beta.conj() / mag;
    let max_offset = rows.max(cols);
    let mut ln_fact = vec![0.0_f64; max_offset + 1];
    for k in 1..=max_offset {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    // Lower triangle (m = n + a) and upper triangle (n = m + a).
    for lower in [true, false] {
        let (phase, long, short) = if lower {
            (phase_lower, rows, cols)
        } else {
            (phase_upper, cols, rows)
        };
        let first = if lower { 0 } else { 1 };
        for a in first..long {
            let len = short.min(long - a);
            if len == 0 {
                continue;
            }
            let af = a as f64;
            let s0 = (-0.5 * x + af * mag.ln() - 0.5 * ln_fact[a]).exp();
            let ph = phase.powu(a as u32);
            let mut prev = 0.0;
            let mut cur = s0;
            for k in 0..len {
                let (m, n) = if lower { (k + a, k) } else { (k, k + a) };
                d[[m, n]] = ph * cur;
                let kf = k as f64;
                let next = if k == 0 {
                    s0 * (1.0 + af - x) / (1.0 + af).sqrt()
                } else {
                    ((2.0 * kf + 1.0 + af - x) * cur - (kf * (kf + af)).sqrt() * prev)
                        / ((kf + 1.0) * (kf + af + 1.0)).sqrt()
                };
                prev = cur;
                cur = next;
            }
        }
    }
    d
}

/// `v = D(β) ψ` restricted to `rows` Fock levels.
fn displace_vector(block: &Array2<C64>, psi: &[C64]) -> Vec<C64> {
    block
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(psi).map(|(d, p)| d * p).sum())
        .collect()
}

fn parity_sum(v: &[C64]) -> f64 {
    v.iter()
        .enumerate()
        .map(|(k, z)| if k % 2 == 0 { z.norm_sqr() } else { -z.norm_sqr() })
        .sum()
}

fn check_leakage(leak: f64, n_fock: usize) -> Result<()> {
    if leak > TRUNCATION_TOLERANCE {
        Err(Error::Truncation {
            leakage: leak,
            n_fock,
        })
    } else {
        Ok(())
    }
}

/// `⟨Π(β)⟩` for an unnormalised collection of cavity vectors sharing one
/// displacement, with the leakage check applied to the total weight.
fn parity_of_vectors(vectors: &[&[C64]], beta: C64) -> Result<f64> {
    let n = vectors[0].len();
    let rows = displaced_rows(n, beta);
    let block = displacement_block(-beta, rows, n);
    let mut parity = 0.0;
    let mut kept = 0.0;
    let mut total = 0.0;
    for psi in vectors {
        let v = displace_vector(&block, psi);
        parity += parity_sum(&v);
        kept += norm_sqr(&v);
        total += norm_sqr(psi);
    }
    if total > 0.0 {
        check_leakage((total - kept) / total, n)?;
    }
    Ok(parity)
}

/// Displaced parity of a normalised cavity vector.
pub fn cavity_parity_pure(psi: &[C64], beta: C64) -> Result<f64> {
    parity_of_vectors(&[psi], beta)
}

/// Displaced parity of a cavity density matrix.
pub fn cavity_parity_mixed(rho: &Array2<C64>, beta: C64) -> Result<f64> {
    let n = rho.nrows();
    let rows = displaced_rows(n, beta);
    let block = displacement_block(-beta, rows, n);
    let x = block.dot(rho);
    let mut parity = 0.0;
    let mut kept = 0.0;
    for k in 0..rows {
        let pk: f64 = (0..n).map(|j| (x[[k, j]] * block[[k, j]].conj()).re).sum();
        kept += pk;
        parity += if k % 2 == 0 { pk } else { -pk };
    }
    let total: f64 = rho.diag().iter().map(|z| z.re).sum();
    if total > 0.0 {
        check_leakage((total - kept) / total, n)?;
    }
    Ok(parity)
}

/// `⟨Π(β)⟩ = ⟨D(β) e^{iπ a†a} D(−β)⟩` with the qubit traced out.
pub fn displaced_parity_expect<'a>(state: impl Into<StateRef<'a>>, beta: C64) -> Result<f64> {
    match state.into() {
        StateRef::Pure(psi) => parity_of_vectors(&[psi.cavity_block(0), psi.cavity_block(1)], beta),
        StateRef::Mixed(rho) => {
            let p0 = cavity_parity_mixed(&rho.block(0, 0), beta)?;
            let p1 = cavity_parity_mixed(&rho.block(1, 1), beta)?;
            Ok(p0 + p1)
        }
    }
}

/// `W(β) = 2⟨Π(β)⟩/π`.
pub fn wigner_value<'a>(state: impl Into<StateRef<'a>>, beta: C64) -> Result<f64> {
    Ok(2.0 / PI * displaced_parity_expect(state, beta)?)
}

/// Wigner function of a cavity vector.
pub fn cavity_wigner(psi: &[C64], beta: C64) -> Result<f64> {
    Ok(2.0 / PI * cavity_parity_pure(psi, beta)?)
}

/// `|⟨target|ψ⟩|²`.
pub fn overlap_fidelity(psi: &StateVector, target: &StateVector) -> f64 {
    inner(target.amplitudes(), psi.amplitudes()).norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{adjoint, expm};

    fn cfg(n: usize) -> HilbertConfig {
        HilbertConfig::new(n).unwrap()
    }

    /// Three-Gaussian closed form of the cat Wigner function.
    fn cat_wigner_analytic(alpha: f64, phi: f64, beta: C64) -> f64 {
        let n2 = 1.0 / (2.0 * (1.0 + phi.cos() * (-2.0 * alpha * alpha).exp()));
        let a = C64::new(alpha, 0.0);
        let g = |c: C64| (-2.0 * (beta - c).norm_sqr()).exp();
        let cross = 2.0 * (-2.0 * beta.norm_sqr()).exp() * (phi - 4.0 * alpha * beta.im).cos();
        2.0 / PI * n2 * (g(a) + g(-a) + cross)
    }

    /// Parity via dense displacement built from expm of the generator in a
    /// larger space, then traced against the parity operator.
    fn parity_dense_oracle(rho_c: &Array2<C64>, beta: C64, big: usize) -> f64 {
        let n = rho_c.nrows();
        let mut gen = Array2::<C64>::zeros((big, big));
        for k in 0..big - 1 {
            let s = ((k + 1) as f64).sqrt();
            // -β a† + β* a
            gen[[k + 1, k]] += -beta * s;
            gen[[k, k + 1]] += beta.conj() * s;
        }
        let d = expm(&gen);
        let mut rho_big = Array2::<C64>::zeros((big, big));
        rho_big.slice_mut(s![0..n, 0..n]).assign(rho_c);
        let disp = d.dot(&rho_big).dot(&adjoint(&d));
        (0..big / 2)
            .map(|k| disp[[k, k]].re)
            .enumerate()
            .map(|(k, p)| if k % 2 == 0 { p } else { -p })
            .sum()
    }

    #[test]
    fn rejects_tiny_space() {
        assert!(HilbertConfig::new(1).is_err());
        assert_eq!(cfg(5).dim(), 10);
    }

    #[test]
    fn ladder_matrix_elements() {
        let c = cfg(3);
        let ops = build_operators(c);
        assert!((ops.a[[c.index(0, 1), c.index(0, 2)]].re - 2f64.sqrt()).abs() < 1e-15);
        assert!((ops.a[[c.index(1, 1), c.index(1, 2)]].re - 1.414_213_562_373_095).abs() < 1e-15);
        let g = StateVector::basis(c, 0, 0);
        let raised = ops.sigma_plus.dot(&ndarray::arr1(g.amplitudes()));
        assert_eq!(raised[c.index(1, 0)], ONE);
        let e = StateVector::basis(c, 1, 0);
        let raised = ops.sigma_plus.dot(&ndarray::arr1(e.amplitudes()));
        assert!(raised.iter().all(|z| *z == ZERO));
    }

    #[test]
    fn commutator_is_identity_below_truncation() {
        let c = cfg(6);
        let ops = build_operators(c);
        let ad = adjoint(&ops.a);
        let comm = ops.a.dot(&ad) - ad.dot(&ops.a);
        for q in 0..2 {
            for i in 0..c.n_fock() - 1 {
                for j in 0..c.n_fock() - 1 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((comm[[c.index(q, i), c.index(q, j)]].re - want).abs() < 1e-14);
                }
            }
        }
        let anti = ops.sigma_minus.dot(&ops.sigma_plus) + ops.sigma_plus.dot(&ops.sigma_minus);
        assert!((anti - crate::linalg::identity(c.dim())).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn coherent_state_examples() {
        let vac = coherent_state(C64::new(0.0, 0.0), cfg(10)).unwrap();
        assert_eq!(vac[0], ONE);
        assert!(vac[1..].iter().all(|z| *z == ZERO));

        let c = coherent_state(C64::new(2.0, 0.0), cfg(40)).unwrap();
        let mean: f64 = c.iter().enumerate().map(|(n, z)| n as f64 * z.norm_sqr()).sum();
        assert!((mean - 4.0).abs() < 1e-8);

        let c = coherent_state(C64::new(1.0, 0.0), cfg(20)).unwrap();
        assert!((c[1].norm() / c[0].norm() - 1.0).abs() < 1e-14);

        assert!(matches!(
            coherent_state(C64::new(4.0, 0.0), cfg(10)),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn cat_state_limits_and_parity() {
        let c = cfg(30);
        let even0 = cat_state(0.0, 0.0, c).unwrap();
        assert!((even0[0] - ONE).norm() < 1e-15);
        let odd0 = cat_state(0.0, PI, c).unwrap();
        assert!((odd0[1].norm() - 1.0).abs() < 1e-15);
        let tiny = cat_state(1e-4, PI, c).unwrap();
        assert!((tiny[1].norm() - 1.0).abs() < 1e-7);

        let even2 = cat_state(2.0, 0.0, c).unwrap();
        let odd_mass: f64 = even2.iter().skip(1).step_by(2).map(|z| z.norm_sqr()).sum();
        assert!(odd_mass < 1e-12);
        assert!((norm_sqr(&even2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn target_state_structure() {
        let c = cfg(30);
        let t = target_state(2.0, 0.0, c).unwrap();
        assert!(t.cavity_block(1).iter().all(|z| *z == ZERO));
        assert!((overlap_fidelity(&t, &t) - 1.0).abs() < 1e-14);
        let odd = target_state(2.0, PI, c).unwrap();
        let brute: C64 = (0..c.dim())
            .map(|i| t.amplitudes()[i].conj() * odd.amplitudes()[i])
            .sum();
        assert!(brute.norm_sqr() < 1e-20);
    }

    #[test]
    fn parity_examples() {
        let c = cfg(30);
        let vac = StateVector::ground(c);
        assert!((displaced_parity_expect(&vac, C64::new(0.0, 0.0)).unwrap() - 1.0).abs() < 1e-14);
        assert!((wigner_value(&vac, C64::new(0.0, 0.0)).unwrap() - 2.0 / PI).abs() < 1e-14);

        let odd = target_state(1.5, PI, c).unwrap();
        assert!((displaced_parity_expect(&odd, C64::new(0.0, 0.0)).unwrap() + 1.0).abs() < 1e-12);
        assert!((wigner_value(&odd, C64::new(0.0, 0.0)).unwrap() + 2.0 / PI).abs() < 1e-12);

        let cat = target_state(2.0, 0.0, c).unwrap();
        let beta = C64::new(0.0, PI / 8.0);
        let w = wigner_value(&cat, beta).unwrap();
        assert!((w - cat_wigner_analytic(2.0, 0.0, beta)).abs() < 1e-10, "{w}");
    }

    #[test]
    fn wigner_grid_matches_analytic_and_dense_oracles() {
        let c = cfg(40);
        for &(alpha, phi) in &[(1.0, 0.0), (1.3, 1.1), (2.0, PI / 3.0)] {
            let cat = cat_state(alpha, phi, c).unwrap();
            for i in 0..11 {
                for j in 0..11 {
                    let beta = C64::new(-2.5 + 0.5 * i as f64, -2.5 + 0.5 * j as f64);
                    let w = cavity_wigner(&cat, beta).unwrap();
                    assert!((w - cat_wigner_analytic(alpha, phi, beta)).abs() < 1e-10, "{alpha} {phi} {beta}: {w} vs {}", cat_wigner_analytic(alpha, phi, beta));
                }
            }
        }
        let cat = cat_state(1.0, 0.0, cfg(20)).unwrap();
        let rho = Array2::from_shape_fn((20, 20), |(i, j)| cat[i] * cat[j].conj());
        for i in 0..11 {
            for j in 0..11 {
                let beta = C64::new(-1.5 + 0.3 * i as f64, -1.5 + 0.3 * j as f64);
                let fast = cavity_parity_mixed(&rho, beta).unwrap();
                let dense = parity_dense_oracle(&rho, beta, 160);
                assert!((fast - dense).abs() < 1e-8, "{beta}: {fast} vs {dense}");
            }
        }
    }

    #[test]
    fn displacement_block_is_unitary_on_columns() {
        for beta in [C64::new(0.3, -0.2), C64::new(4.0, -2.0), C64::new(5.0, 5.0)] {
            let cols = 40;
            let rows = displaced_rows(cols, beta);
            let d = displacement_block(beta, rows, cols);
            let g = adjoint(&d).dot(&d);
            let err = (g - crate::linalg::identity(cols)).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(err < 1e-10, "beta {beta}: {err}");
        }
    }

    #[test]
    fn displaced_vacuum_is_coherent() {
        let beta = C64::new(1.2, -0.7);
        let c = cfg(40);
        let coh = coherent_state(beta, c).unwrap();
        let d = displacement_block(beta, 40, 1);
        for n in 0..40 {
            assert!((d[[n, 0]] - coh[n]).norm() < 1e-8);
        }
        // same via the dense generator exponential in a padded space
        let big = 120;
        let mut gen = Array2::<C64>::zeros((big, big));
        for k in 0..big - 1 {
            let s = ((k + 1) as f64).sqrt();
            gen[[k + 1, k]] += beta * s;
            gen[[k, k + 1]] -= beta.conj() * s;
        }
        let dense = expm(&gen);
        for n in 0..40 {
            assert!((dense[[n, 0]] - coh[n]).norm() < 1e-8);
        }
    }

    #[test]
    fn mixed_and_pure_parity_agree() {
        let c = cfg(25);
        let psi = target_state(1.4, 0.6, c).unwrap();
        let rho = psi.to_density();
        for beta in [C64::new(0.2, 0.4), C64::new(-1.0, 0.7)] {
            let a = displaced_parity_expect(&psi, beta).unwrap();
            let b = displaced_parity_expect(&rho, beta).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn thermal_state_parity() {
        let c = cfg(20);
        let rho = DensityMatrix::thermal_cavity(c, 0, 0.006).unwrap();
        rho.validate().unwrap();
        let p = displaced_parity_expect(&rho, C64::new(0.0, 0.0)).unwrap();
        assert!((p - 1.0 / (1.0 + 2.0 * 0.006)).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_state(c: HilbertConfig, seed: &[f64]) -> StateVector {
            let mut amps: Vec<C64> = (0..c.dim())
                .map(|i| {
                    let decay = (-((i % c.n_fock()) as f64) / 3.0).exp();
                    C64::new(seed[i % seed.len()], seed[(3 * i + 1) % seed.len()]) * decay
                })
                .collect();
            normalize(&mut amps);
            StateVector::new(c, amps).unwrap()
        }

        proptest! {
            #[test]
            fn partition_and_parity_identity(seed in proptest::collection::vec(-1.0f64..1.0, 7)) {
                prop_assume!(seed.iter().any(|x| x.abs() > 1e-3));
                let c = cfg(16);
                let psi = random_state(c, &seed);
                let p = psi.photon_distribution();
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                let direct: f64 = p.iter().enumerate().map(|(n, x)| if n % 2 == 0 { *x } else { -*x }).sum();
                let via = displaced_parity_expect(&psi, C64::new(0.0, 0.0)).unwrap();
                prop_assert!((direct - via).abs() < 1e-9);
            }

            #[test]
            fn wigner_is_bounded(re in -2.0f64..2.0, im in -2.0f64..2.0, alpha in 0.0f64..2.0, phi in 0.0f64..6.28) {
                let c = cfg(30);
                let cat = cat_state(alpha, phi, c).unwrap();
                let w = cavity_wigner(&cat, C64::new(re, im)).unwrap();
                prop_assert!(w.abs() <= 2.0 / PI + 1e-12);
            }
        }
    }
}
