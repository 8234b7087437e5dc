//! Measurement error budget: how thermal cavity population, decoherence
//! during the parity wait and residual qubit excitation shift the expected
//! tomography estimate.
//!
//! Each scenario's expected estimate is `E[F̃] = (2/c̃) ∫ W_T(β) s(β) dβ`,
//! with `s` the mean differenced readout of the prepared state, evaluated by
//! the trapezoid rule on a square grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::readout::{displaced_diagonals, DiagonalObservable, DisplacedDiagonals, ParityReadout};
use super::{parity_time, PreparedState, SquareGrid, TargetWigner, DEFAULT_N_TH, GRID_MARGIN};
use crate::dynamics::{propagate_lindblad, DecoherenceChannel, SystemParams, TimeGrid};
use crate::hilbert::{displaced_rows, target_state, DensityMatrix, HilbertConfig};
use crate::splines::{BSplineBasis, CoefficientSet};
use crate::{Error, Result, C64};

/// Points per axis of the budget quadrature grid.
pub const DEFAULT_BUDGET_RESOLUTION: usize = 101;

/// Grid points whose weighted target Wigner value is below this are skipped.
const NEGLIGIBLE_WEIGHT: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetModel {
    pub n_th: f64,
    /// Parity wait; `π/χ` when unset.
    pub t_par: Option<f64>,
    pub resolution: usize,
    pub margin: f64,
    /// Intervals of the Lindblad preparation.
    pub n_intervals: usize,
}

impl Default for BudgetModel {
    fn default() -> Self {
        Self {
            n_th: DEFAULT_N_TH,
            t_par: None,
            resolution: DEFAULT_BUDGET_RESOLUTION,
            margin: GRID_MARGIN,
            n_intervals: TimeGrid::TESTING_INTERVALS,
        }
    }
}

/// Expected estimates per scenario and the infidelity each effect adds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub alpha: f64,
    pub phi: f64,
    /// `⟨T|ρ|T⟩` of the preparation from the cold ground state.
    pub fidelity: f64,
    /// Qubit excited population after the cold preparation.
    pub p_excited: f64,
    pub baseline: f64,
    pub no_thermal: f64,
    pub no_dissipation: f64,
    pub qubit_reset: f64,
    /// `no_thermal − baseline`
    pub thermal: f64,
    /// `no_dissipation − baseline`
    pub dissipation: f64,
    /// `qubit_reset − baseline`
    pub excitation: f64,
    pub total: f64,
}

/// Budget for the pulse `coeffs`, prepared and read out under `params`.
pub fn error_budget(
    alpha: f64,
    phi: f64,
    coeffs: &CoefficientSet,
    params: &SystemParams,
    hilbert: HilbertConfig,
    model: &BudgetModel,
) -> Result<ErrorBudget> {
    let params = params.clone().with_pump(false);
    let channels = params.channels();
    error_budget_with_channels(alpha, phi, coeffs, &params, hilbert, model, &channels)
}

/// As [`error_budget`] with an explicit channel list for both the
/// preparation and the parity wait.
pub fn error_budget_with_channels(
    alpha: f64,
    phi: f64,
    coeffs: &CoefficientSet,
    params: &SystemParams,
    hilbert: HilbertConfig,
    model: &BudgetModel,
    channels: &[DecoherenceChannel],
) -> Result<ErrorBudget> {
    let grid = TimeGrid::new(model.n_intervals, params.duration)?;
    let basis = BSplineBasis::standard(params.duration)?;
    let prepare = |n_th: f64| -> Result<DensityMatrix> {
        let rho0 = DensityMatrix::thermal_cavity(hilbert, 0, n_th)?;
        let mut path = propagate_lindblad(&rho0, coeffs, &basis, &grid, channels, params)?;
        Ok(path.pop().expect("trajectory includes the initial state"))
    };
    let warm = prepare(model.n_th)?;
    let cold = prepare(0.0)?;
    budget_for_states(alpha, phi, &warm, &cold, params.chi, model, channels)
}

/// Budget from already prepared states: `warm` started from the thermal
/// cavity, `cold` from the vacuum.
pub fn budget_for_states(
    alpha: f64,
    phi: f64,
    warm: &DensityMatrix,
    cold: &DensityMatrix,
    chi: f64,
    model: &BudgetModel,
    channels: &[DecoherenceChannel],
) -> Result<ErrorBudget> {
    if !(0.0..0.5).contains(&model.n_th) {
        return Err(Error::InvalidArgument(format!("thermal occupation {}", model.n_th)));
    }
    let cfg = cold.config();
    let n = cfg.n_fock();
    let target = TargetWigner::cat(alpha, phi)?;
    let quad = SquareGrid::new(alpha.abs() + model.margin, model.resolution)?;
    let corner = C64::new(quad.half_width, quad.half_width);
    let rows = displaced_rows(n, corner);
    let t_par = model.t_par.unwrap_or_else(|| parity_time(chi));
    let noisy = ParityReadout::new(chi, t_par, channels, rows)?.signal_observable();
    let clean = ParityReadout::new(chi, t_par, &[], rows)?.signal_observable();

    let calibration = |o: &DiagonalObservable, n_th: f64| -> f64 {
        let ratio = n_th / (1.0 + n_th);
        let c00: Vec<f64> = (0..rows).map(|k| (1.0 - ratio) * ratio.powi(k as i32)).collect();
        let c = DisplacedDiagonals {
            c00,
            c11: vec![0.0; rows],
            c01: Vec::new(),
        };
        o.expectation(&c, false) / (1.0 - 2.0 * n_th)
    };
    let c_noisy = calibration(&noisy, model.n_th);
    let c_clean = calibration(&clean, model.n_th);
    let c_cold = calibration(&noisy, 0.0);

    let warm_state = PreparedState::Mixed(warm.clone());
    let cold_state = PreparedState::Mixed(cold.clone());
    let terms: Vec<[f64; 4]> = (0..quad.len())
        .into_par_iter()
        .map(|j| -> Result<[f64; 4]> {
            let beta = quad.node(j);
            let w = quad.weight(j) * target.value(beta)?;
            if w.abs() < NEGLIGIBLE_WEIGHT {
                return Ok([0.0; 4]);
            }
            let r = displaced_rows(n, beta);
            let dw = displaced_diagonals(&warm_state, beta, r, true)?;
            let dc = displaced_diagonals(&cold_state, beta, r, true)?;
            Ok([
                w * noisy.expectation(&dw, false),
                w * noisy.expectation(&dc, false),
                w * clean.expectation(&dw, false),
                w * noisy.expectation(&dw, true),
            ])
        })
        .collect::<Result<_>>()?;
    let mut sums = [0.0; 4];
    for t in &terms {
        for k in 0..4 {
            sums[k] += t[k];
        }
    }
    let baseline = 2.0 * sums[0] / c_noisy;
    let no_thermal = 2.0 * sums[1] / c_cold;
    let no_dissipation = 2.0 * sums[2] / c_clean;
    let qubit_reset = 2.0 * sums[3] / c_noisy;

    let target_joint = target_state(alpha, phi, cfg)?;
    let thermal = no_thermal - baseline;
    let dissipation = no_dissipation - baseline;
    let excitation = qubit_reset - baseline;
    Ok(ErrorBudget {
        alpha,
        phi,
        fidelity: cold.expectation_pure(&target_joint),
        p_excited: cold.qubit_excited_population(),
        baseline,
        no_thermal,
        no_dissipation,
        qubit_reset,
        thermal,
        dissipation,
        excitation,
        total: thermal + dissipation + excitation,
    })
}
