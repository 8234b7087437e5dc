//! Matrix-free Hamiltonian action and the Taylor-polynomial propagator.

use crate::hilbert::HilbertConfig;
use crate::C64;

/// Degree of the Taylor polynomial approximating each substep propagator.
pub(crate) const TAYLOR_DEGREE: usize = 18;
/// Upper bound on `h·‖H‖` per substep. With degree 18 the remainder is
/// below `2^19/19! ≈ 4e-12`.
pub(crate) const TAYLOR_THETA: f64 = 2.0;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Hamiltonian with fixed drive values.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Drive {
    pub n_fock: usize,
    pub chi: f64,
    pub eps_c: C64,
    pub eps_q: C64,
}

impl Drive {
    pub fn new(cfg: HilbertConfig, chi: f64, eps_c: C64, eps_q: C64) -> Self {
        Self {
            n_fock: cfg.n_fock(),
            chi,
            eps_c,
            eps_q,
        }
    }

    /// Upper bound on the spectral norm of `H`.
    pub fn norm_bound(&self) -> f64 {
        let n = self.n_fock as f64;
        self.chi * (n - 1.0) + 2.0 * self.eps_c.norm() * (n - 1.0).sqrt() + 2.0 * self.eps_q.norm()
    }

    /// `out = H x`.
    pub fn apply_h(&self, x: &[C64], out: &mut [C64]) {
        let n = self.n_fock;
        let ec = self.eps_c;
        let ecc = ec.conj();
        for q in 0..2 {
            let off = q * n;
            let partner = (1 - q) * n;
            // ε_q σ+ lifts q=0 into q=1, ε_q* σ− lowers it back.
            let eq = if q == 1 { self.eps_q } else { self.eps_q.conj() };
            for k in 0..n {
                let mut acc = eq * x[partner + k];
                if q == 1 {
                    acc -= x[off + k] * (self.chi * k as f64);
                }
                if k > 0 {
                    acc += ec * x[off + k - 1] * (k as f64).sqrt();
                }
                if k + 1 < n {
                    acc += ecc * x[off + k + 1] * ((k + 1) as f64).sqrt();
                }
                out[off + k] = acc;
            }
        }
    }

    /// `out = G_r x` for the control generators
    /// `G = (a† + a, i(a† − a), σ+ + σ−, i(σ+ − σ−))`, the derivatives of
    /// `H` with respect to Re ε_c, Im ε_c, Re ε_q, Im ε_q.
    pub fn apply_generator(&self, r: usize, x: &[C64], out: &mut [C64]) {
        let n = self.n_fock;
        let i = C64::new(0.0, 1.0);
        match r {
            0 | 1 => {
                let (up, down) = if r == 0 { (C64::new(1.0, 0.0), C64::new(1.0, 0.0)) } else { (i, -i) };
                for q in 0..2 {
                    let off = q * n;
                    for k in 0..n {
                        let mut acc = ZERO;
                        if k > 0 {
                            acc += up * x[off + k - 1] * (k as f64).sqrt();
                        }
                        if k + 1 < n {
                            acc += down * x[off + k + 1] * ((k + 1) as f64).sqrt();
                        }
                        out[off + k] = acc;
                    }
                }
            }
            2 | 3 => {
                let (up, down) = if r == 2 { (C64::new(1.0, 0.0), C64::new(1.0, 0.0)) } else { (i, -i) };
                for k in 0..n {
                    out[n + k] = up * x[k];
                    out[k] = down * x[n + k];
                }
            }
            _ => unreachable!("four control generators"),
        }
    }

    pub fn substeps(&self, dt: f64) -> usize {
        ((dt * self.norm_bound() / TAYLOR_THETA).ceil() as usize).max(1)
    }

    /// `psi ← e^{−iH dt} psi`. When `record` is given, the input of every
    /// substep is pushed onto it.
    pub fn propagate_interval(&self, psi: &mut Vec<C64>, dt: f64, mut record: Option<&mut Vec<Vec<C64>>>) {
        let s = self.substeps(dt);
        let h = dt / s as f64;
        let scale = C64::new(0.0, -h);
        for _ in 0..s {
            if let Some(rec) = record.as_deref_mut() {
                rec.push(psi.clone());
            }
            taylor_step(|x, out| self.apply_h(x, out), scale, psi, TAYLOR_DEGREE, None);
        }
    }
}

/// `v ← Σ_{k≤m} (sG)^k v / k!`, where `apply(x, out)` writes `G x`.
///
/// The Taylor terms `t_k = (sG)^k v / k!` are stored in `terms` when given.
pub(crate) fn taylor_step<F>(apply: F, s: C64, v: &mut Vec<C64>, m: usize, mut terms: Option<&mut Vec<Vec<C64>>>)
where
    F: Fn(&[C64], &mut [C64]),
{
    let mut term = v.clone();
    let mut next = vec![ZERO; v.len()];
    if let Some(t) = terms.as_deref_mut() {
        t.clear();
        t.push(term.clone());
    }
    for k in 1..=m {
        apply(&term, &mut next);
        let f = s / k as f64;
        for (a, b) in next.iter_mut().zip(v.iter_mut()) {
            *a *= f;
            *b += *a;
        }
        std::mem::swap(&mut term, &mut next);
        if let Some(t) = terms.as_deref_mut() {
            t.push(term.clone());
        }
    }
}
