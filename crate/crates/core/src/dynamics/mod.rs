//! Time evolution of the driven qubit–cavity system.
//!
//! In the frame rotating with both modes the Hamiltonian is
//! `H = −χ a†a ⊗ |1⟩⟨1| + (ε_c a† + ε_q σ+ + h.c.)`. Controls are held
//! constant on each interval of a uniform grid at their midpoint value.
//! Pure states are advanced with a fixed-degree Taylor polynomial of the
//! propagator on substeps short enough for it to be accurate to roundoff;
//! density matrices use the same scheme on the Lindblad generator.

mod kernel;
mod lindblad;

use std::f64::consts::PI;
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::hilbert::{overlap_fidelity, target_state, DensityMatrix, HilbertConfig, StateVector};
use crate::splines::{synthesize, BSplineBasis, BasisMatrix, CoefficientSet};
use crate::{Error, Result, C64};

pub(crate) use kernel::{taylor_step, Drive, TAYLOR_DEGREE, TAYLOR_THETA};
pub use lindblad::{
    propagate_lindblad, propagate_lindblad_controls, LindbladOptions, Lindbladian,
};

/// Largest tolerated change of the squared norm across one interval.
pub const NORM_DRIFT_LIMIT: f64 = 1e-7;

/// Characteristic time of the incoherent qubit pump used early in training, µs.
pub const PUMP_TIME: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Dispersive shift, rad/µs.
    pub chi: f64,
    /// Qubit energy relaxation time, µs.
    pub t_q: f64,
    /// Cavity single-photon lifetime, µs.
    pub t_c: f64,
    /// Qubit pure-dephasing time, µs.
    pub t_qphi: f64,
    /// Overrides the coherence time derived from `t_q` and `t_qphi`, µs.
    /// When set, the dephasing channel is rescaled to reproduce it.
    pub t2_override: Option<f64>,
    /// Incoherent ground-to-excited pump rate, 1/µs. Zero disables it.
    pub gamma_up: f64,
    /// Pulse duration, µs.
    pub duration: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            chi: 2.0 * PI * 0.2385,
            t_q: 35.0,
            t_c: 225.0,
            t_qphi: 175.0,
            t2_override: None,
            gamma_up: 0.0,
            duration: 2.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("chi", self.chi),
            ("t_q", self.t_q),
            ("t_c", self.t_c),
            ("t_qphi", self.t_qphi),
            ("duration", self.duration),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.gamma_up < 0.0 || !self.gamma_up.is_finite() {
            return Err(Error::InvalidArgument(format!("pump rate {}", self.gamma_up)));
        }
        if let Some(t2) = self.t2_override {
            if !(t2 > 0.0 && t2 < 2.0 * self.t_q) {
                return Err(Error::InvalidArgument(format!(
                    "T2 = {t2} µs is not reachable with T_q = {} µs",
                    self.t_q
                )));
            }
        }
        Ok(())
    }

    /// `T2 = (1/(2T_q) + 1/T_qφ)⁻¹` unless overridden.
    pub fn t2(&self) -> f64 {
        self.t2_override
            .unwrap_or(1.0 / (0.5 / self.t_q + 1.0 / self.t_qphi))
    }

    /// Pure-dephasing time consistent with [`Self::t2`].
    pub fn effective_t_qphi(&self) -> f64 {
        match self.t2_override {
            Some(t2) => 1.0 / (1.0 / t2 - 0.5 / self.t_q),
            None => self.t_qphi,
        }
    }

    pub fn with_pump(mut self, enabled: bool) -> Self {
        self.gamma_up = if enabled { 1.0 / PUMP_TIME } else { 0.0 };
        self
    }

    /// Cavity decay, qubit decay, qubit dephasing and, when active, the pump.
    pub fn channels(&self) -> Vec<DecoherenceChannel> {
        let mut ch = vec![
            DecoherenceChannel::new(ChannelKind::CavityDecay, self.t_c),
            DecoherenceChannel::new(ChannelKind::QubitDecay, self.t_q),
            DecoherenceChannel::new(ChannelKind::QubitDephasing, self.effective_t_qphi()),
        ];
        if self.gamma_up > 0.0 {
            ch.push(DecoherenceChannel::new(ChannelKind::Pump, 1.0 / self.gamma_up));
        }
        ch
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    /// `a`
    CavityDecay,
    /// `σ−`
    QubitDecay,
    /// `σz/√2`
    QubitDephasing,
    /// `σ+`
    Pump,
}

impl ChannelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelKind::CavityDecay => "cavity_decay",
            ChannelKind::QubitDecay => "qubit_decay",
            ChannelKind::QubitDephasing => "qubit_dephasing",
            ChannelKind::Pump => "pump",
        }
    }
}

/// A jump operator with rate `1/tau`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceChannel {
    pub kind: ChannelKind,
    pub tau: f64,
}

impl DecoherenceChannel {
    pub fn new(kind: ChannelKind, tau: f64) -> Self {
        Self { kind, tau }
    }

    pub fn rate(&self) -> f64 {
        1.0 / self.tau
    }

    /// Row map of the jump operator: entry `i` is `Some((j, v))` when
    /// `A_{ij} = v` is the only nonzero of row `i`.
    pub(crate) fn row_map(&self, cfg: HilbertConfig) -> Vec<Option<(usize, f64)>> {
        let n = cfg.n_fock();
        (0..cfg.dim())
            .map(|i| {
                let (q, k) = (i / n, i % n);
                match self.kind {
                    ChannelKind::CavityDecay => {
                        (k + 1 < n).then(|| (cfg.index(q, k + 1), ((k + 1) as f64).sqrt()))
                    }
                    ChannelKind::QubitDecay => (q == 0).then(|| (cfg.index(1, k), 1.0)),
                    ChannelKind::Pump => (q == 1).then(|| (cfg.index(0, k), 1.0)),
                    ChannelKind::QubitDephasing => {
                        let s = std::f64::consts::FRAC_1_SQRT_2;
                        Some((i, if q == 1 { s } else { -s }))
                    }
                }
            })
            .collect()
    }

    /// `A ψ`.
    pub fn apply(&self, cfg: HilbertConfig, psi: &[C64]) -> Vec<C64> {
        let map = self.row_map(cfg);
        map.iter()
            .map(|e| e.map_or(C64::new(0.0, 0.0), |(j, v)| psi[j] * v))
            .collect()
    }

    /// `A† ψ`.
    pub fn apply_adjoint(&self, cfg: HilbertConfig, psi: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); psi.len()];
        for (i, e) in self.row_map(cfg).into_iter().enumerate() {
            if let Some((j, v)) = e {
                out[j] += psi[i] * v;
            }
        }
        out
    }

    /// `|⟨A⟩|² − ⟨A†A⟩`, never positive.
    pub fn integrand(&self, cfg: HilbertConfig, psi: &[C64]) -> f64 {
        let a_psi = self.apply(cfg, psi);
        let mean = crate::linalg::inner(psi, &a_psi);
        mean.norm_sqr() - crate::linalg::norm_sqr(&a_psi)
    }
}

/// Uniform grid of `n_intervals` intervals on `[0, duration]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    n_intervals: usize,
    duration: f64,
}

impl TimeGrid {
    /// Interval count used while training.
    pub const TRAINING_INTERVALS: usize = 40;
    /// Interval count used for evaluation.
    pub const TESTING_INTERVALS: usize = 200;

    pub fn new(n_intervals: usize, duration: f64) -> Result<Self> {
        if n_intervals == 0 {
            return Err(Error::InvalidArgument("grid needs at least one interval".into()));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidArgument(format!("duration {duration}")));
        }
        Ok(Self {
            n_intervals,
            duration,
        })
    }

    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn dt(&self) -> f64 {
        self.duration / self.n_intervals as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_intervals)
            .map(|j| self.duration * j as f64 / self.n_intervals as f64)
            .collect()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.n_intervals)
            .map(|j| self.duration * (j as f64 + 0.5) / self.n_intervals as f64)
            .collect()
    }

    /// Trapezoid weights over the nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let dt = self.dt();
        let mut w = vec![dt; self.n_intervals + 1];
        w[0] = 0.5 * dt;
        w[self.n_intervals] = 0.5 * dt;
        w
    }
}

/// Piecewise-constant complex drives, one value per interval.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseControls {
    pub dt: f64,
    pub eps_c: Vec<C64>,
    pub eps_q: Vec<C64>,
}

impl PiecewiseControls {
    pub fn new(dt: f64, eps_c: Vec<C64>, eps_q: Vec<C64>) -> Result<Self> {
        if eps_c.len() != eps_q.len() || eps_c.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "control lengths {} and {}",
                eps_c.len(),
                eps_q.len()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("interval length {dt}")));
        }
        if eps_c.iter().chain(&eps_q).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite {
                context: "drive samples".into(),
            });
        }
        Ok(Self { dt, eps_c, eps_q })
    }

    pub fn zeros(grid: &TimeGrid) -> Self {
        let z = vec![C64::new(0.0, 0.0); grid.n_intervals()];
        Self {
            dt: grid.dt(),
            eps_c: z.clone(),
            eps_q: z,
        }
    }

    /// Samples a spline pulse at the interval midpoints.
    pub fn from_coefficients(coeffs: &CoefficientSet, midpoint_basis: &BasisMatrix, grid: &TimeGrid) -> Result<Self> {
        if midpoint_basis.n_times() != grid.n_intervals() {
            return Err(Error::InvalidArgument(
                "basis was not sampled on this grid's midpoints".into(),
            ));
        }
        let w = synthesize(coeffs, midpoint_basis)?;
        let eps_c = (0..w.len()).map(|j| w.eps_c(j)).collect();
        let eps_q = (0..w.len()).map(|j| w.eps_q(j)).collect();
        Self::new(grid.dt(), eps_c, eps_q)
    }

    pub fn n_intervals(&self) -> usize {
        self.eps_c.len()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.n_intervals() as f64
    }
}

/// States at every grid node together with the controls that produced them.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<StateVector>,
    pub controls: PiecewiseControls,
}

impl Trajectory {
    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|j| j as f64 * self.controls.dt).collect()
    }

    /// CSV with columns `t, P0 … P(N−1), P_qubit_excited`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.states[0].config().n_fock();
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|k| format!("P{k}")));
        header.push("P_qubit_excited".into());
        w.write_record(&header)?;
        for (t, s) in self.times().into_iter().zip(&self.states) {
            let mut row = vec![t.to_string()];
            row.extend(s.photon_distribution().iter().map(f64::to_string));
            row.push(s.qubit_excited_population().to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Dense `H/ħ` for constant drives.
pub fn assemble_hamiltonian(cfg: HilbertConfig, params: &SystemParams, eps_c: C64, eps_q: C64) -> Array2<C64> {
    let drive = Drive::new(cfg, params.chi, eps_c, eps_q);
    let d = cfg.dim();
    let mut h = Array2::zeros((d, d));
    let mut e = vec![C64::new(0.0, 0.0); d];
    let mut col = vec![C64::new(0.0, 0.0); d];
    for j in 0..d {
        e[j] = C64::new(1.0, 0.0);
        drive.apply_h(&e, &mut col);
        for i in 0..d {
            h[[i, j]] = col[i];
        }
        e[j] = C64::new(0.0, 0.0);
    }
    h
}

/// Advances `psi0` through piecewise-constant controls.
pub fn propagate_controls(psi0: &StateVector, controls: &PiecewiseControls, params: &SystemParams) -> Result<Trajectory> {
    let cfg = psi0.config();
    let mut states = Vec::with_capacity(controls.n_intervals() + 1);
    states.push(psi0.clone());
    let mut psi = psi0.amplitudes().to_vec();
    let norm0 = psi0.norm_sqr();
    for j in 0..controls.n_intervals() {
        let drive = Drive::new(cfg, params.chi, controls.eps_c[j], controls.eps_q[j]);
        drive.propagate_interval(&mut psi, controls.dt, None);
        let norm = crate::linalg::norm_sqr(&psi);
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
    Ok(Trajectory {
        states,
        controls: controls.clone(),
    })
}

/// Advances `psi0` under the spline pulse `coeffs` sampled on `grid`.
pub fn propagate_schrodinger(
    psi0: &StateVector,
    coeffs: &CoefficientSet,
    basis: &BSplineBasis,
    grid: &TimeGrid,
    params: &SystemParams,
) -> Result<Trajectory> {
    let mid = basis.sample(&grid.midpoints())?;
    let controls = PiecewiseControls::from_coefficients(coeffs, &mid, grid)?;
    propagate_controls(psi0, &controls, params)
}

/// First-order fidelity corrections, one per channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub per_channel: Vec<(ChannelKind, f64)>,
    pub total: f64,
}

/// `ΔF_i = (1/τ_i) ∫ (|⟨A_i⟩|² − ⟨A_i†A_i⟩) dt` by the trapezoid rule over
/// the trajectory nodes.
pub fn decoherence_correction(traj: &Trajectory, channels: &[DecoherenceChannel]) -> Correction {
    let n = traj.states.len() - 1;
    let dt = traj.controls.dt;
    let cfg = traj.states[0].config();
    let per_channel: Vec<(ChannelKind, f64)> = channels
        .iter()
        .map(|ch| {
            let integral: f64 = traj
                .states
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    let w = if j == 0 || j == n { 0.5 * dt } else { dt };
                    w * ch.integrand(cfg, s.amplitudes())
                })
                .sum();
            (ch.kind, ch.rate() * integral)
        })
        .collect();
    let total = per_channel.iter().map(|(_, v)| v).sum();
    Correction { per_channel, total }
}

/// Components of the training loss for one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// `|⟨T|ψ(T)⟩|²`
    pub overlap: f64,
    pub correction: Correction,
    /// `1 − (overlap + Σ ΔF)`
    pub loss: f64,
}

impl LossBreakdown {
    /// Corrected fidelity `overlap + Σ ΔF`.
    pub fn fidelity(&self) -> f64 {
        self.overlap + self.correction.total
    }
}

/// Everything needed to turn a coefficient set into a loss value.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub hilbert: HilbertConfig,
    pub grid: TimeGrid,
    pub params: SystemParams,
    pub channels: Vec<DecoherenceChannel>,
    basis: BSplineBasis,
    midpoint_basis: BasisMatrix,
}

impl Simulator {
    /// Uses the standard spline basis and the channels implied by `params`.
    pub fn new(hilbert: HilbertConfig, grid: TimeGrid, params: SystemParams) -> Result<Self> {
        params.validate()?;
        if (grid.duration() - params.duration).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "grid spans {} µs but the pulse lasts {} µs",
                grid.duration(),
                params.duration
            )));
        }
        let basis = BSplineBasis::standard(params.duration)?;
        let midpoint_basis = basis.sample(&grid.midpoints())?;
        let channels = params.channels();
        Ok(Self {
            hilbert,
            grid,
            params,
            channels,
            basis,
            midpoint_basis,
        })
    }

    pub fn with_channels(mut self, channels: Vec<DecoherenceChannel>) -> Self {
        self.channels = channels;
        self
    }

    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    pub fn midpoint_basis(&self) -> &BasisMatrix {
        &self.midpoint_basis
    }

    pub fn controls(&self, coeffs: &CoefficientSet) -> Result<PiecewiseControls> {
        PiecewiseControls::from_coefficients(coeffs, &self.midpoint_basis, &self.grid)
    }

    /// Trajectory starting from `|0⟩_q|0⟩_c`.
    pub fn trajectory(&self, coeffs: &CoefficientSet) -> Result<Trajectory> {
        let controls = self.controls(coeffs)?;
        propagate_controls(&StateVector::ground(self.hilbert), &controls, &self.params)
    }

    pub fn loss(&self, alpha: f64, phi: f64, coeffs: &CoefficientSet) -> Result<LossBreakdown> {
        let traj = self.trajectory(coeffs)?;
        let target = target_state(alpha, phi, self.hilbert)?;
        Ok(loss_from_trajectory(&traj, &target, &self.channels))
    }
}

pub(crate) fn loss_from_trajectory(traj: &Trajectory, target: &StateVector, channels: &[DecoherenceChannel]) -> LossBreakdown {
    let overlap = overlap_fidelity(traj.final_state(), target);
    let correction = decoherence_correction(traj, channels);
    LossBreakdown {
        overlap,
        loss: 1.0 - (overlap + correction.total),
        correction,
    }
}

/// `L = 1 − (|⟨T_α^φ|ψ(T)⟩|² + Σ_i ΔF_i)` for a pulse starting from the ground state.
pub fn corrected_loss(
    alpha: f64,
    phi: f64,
    coeffs: &CoefficientSet,
    hilbert: HilbertConfig,
    grid: &TimeGrid,
    params: &SystemParams,
    channels: &[DecoherenceChannel],
) -> Result<f64> {
    let sim = Simulator::new(hilbert, *grid, params.clone())?.with_channels(channels.to_vec());
    Ok(sim.loss(alpha, phi, coeffs)?.loss)
}

/// Convenience for density-matrix checks against a pure trajectory.
pub fn pure_to_density(states: &[StateVector]) -> Vec<DensityMatrix> {
    states.iter().map(DensityMatrix::from_pure).collect()
}
