//! Unitary GRAPE on a coarse piecewise-constant grid.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lbfgs::{minimize, LbfgsConfig};
use crate::dynamics::{PiecewiseControls, Simulator, SystemParams, TimeGrid};
use crate::gradients::{control_gradient, Checkpointing};
use crate::hilbert::StateVector;
use crate::splines::N_CONTROLS;
use crate::{Error, Result, C64};

/// Steps of the coarse grid.
pub const GRAPE_STEPS: usize = 163;
/// Span of the coarse grid, µs.
pub const GRAPE_DURATION: f64 = 1.956;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrapeConfig {
    pub n_steps: usize,
    /// µs
    pub duration: f64,
    pub max_iterations: usize,
    /// Stop once an iteration improves the loss by less than this.
    pub tolerance: f64,
    /// Peak of the sinusoidal initial guess, rad/µs.
    pub init_amplitude: f64,
    /// Lowest initial frequency, MHz; control `r` uses `(r + 1)` times it.
    pub init_frequency: f64,
    pub lbfgs_memory: usize,
    /// Draws the initial phases.
    pub seed: u64,
}

impl Default for GrapeConfig {
    fn default() -> Self {
        Self {
            n_steps: GRAPE_STEPS,
            duration: GRAPE_DURATION,
            max_iterations: 500,
            tolerance: 1e-9,
            init_amplitude: 1.0,
            init_frequency: 0.5,
            lbfgs_memory: 10,
            seed: 0,
        }
    }
}

impl GrapeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || self.max_iterations == 0 || self.lbfgs_memory == 0 {
            return Err(Error::InvalidArgument(format!(
                "GRAPE needs positive steps, iterations and memory, got {}, {}, {}",
                self.n_steps, self.max_iterations, self.lbfgs_memory
            )));
        }
        if !(self.duration > 0.0) || !self.init_amplitude.is_finite() || !(self.tolerance >= 0.0) {
            return Err(Error::InvalidArgument("GRAPE duration, amplitude or tolerance".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GrapeResult {
    pub controls: PiecewiseControls,
    /// Unitary infidelity at the start and after every iteration.
    pub loss_trace: Vec<f64>,
    pub line_search_failed: bool,
}

/// `(Re ε_c, Im ε_c, Re ε_q, Im ε_q)` per step, control-major.
pub fn controls_to_flat(c: &PiecewiseControls) -> Vec<f64> {
    let mut x = Vec::with_capacity(N_CONTROLS * c.n_intervals());
    x.extend(c.eps_c.iter().map(|z| z.re));
    x.extend(c.eps_c.iter().map(|z| z.im));
    x.extend(c.eps_q.iter().map(|z| z.re));
    x.extend(c.eps_q.iter().map(|z| z.im));
    x
}

pub fn controls_from_flat(x: &[f64], dt: f64) -> Result<PiecewiseControls> {
    let n = x.len() / N_CONTROLS;
    if n * N_CONTROLS != x.len() {
        return Err(Error::InvalidArgument(format!("{} values do not split into four controls", x.len())));
    }
    let eps_c = (0..n).map(|j| C64::new(x[j], x[n + j])).collect();
    let eps_q = (0..n).map(|j| C64::new(x[2 * n + j], x[3 * n + j])).collect();
    PiecewiseControls::new(dt, eps_c, eps_q)
}

/// Sinusoids with seeded phases.
pub fn sinusoidal_guess(config: &GrapeConfig) -> Result<PiecewiseControls> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dt = config.duration / config.n_steps as f64;
    let mut x = vec![0.0; N_CONTROLS * config.n_steps];
    for r in 0..N_CONTROLS {
        let phase = rng.random_range(0.0..2.0 * PI);
        let f = config.init_frequency * (r + 1) as f64;
        for j in 0..config.n_steps {
            let t = (j as f64 + 0.5) * dt;
            x[r * config.n_steps + j] = config.init_amplitude * (2.0 * PI * f * t + phase).sin();
        }
    }
    controls_from_flat(&x, dt)
}

/// Unitary loss `1 − |⟨T|ψ(t_N)⟩|²` from the ground state.
pub struct UnitaryObjective {
    sim: Simulator,
    target: StateVector,
}

impl UnitaryObjective {
    pub fn new(target: StateVector, params: &SystemParams, n_steps: usize, duration: f64) -> Result<Self> {
        let mut p = params.clone().with_pump(false);
        p.duration = duration;
        let sim = Simulator::new(target.config(), TimeGrid::new(n_steps, duration)?, p)?.with_channels(Vec::new());
        Ok(Self { sim, target })
    }

    /// Loss and gradient with respect to the control-major flat controls.
    pub fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let controls = controls_from_flat(x, self.sim.grid.dt())?;
        let (loss, grad) = control_gradient(&self.sim, &self.target, &controls, Checkpointing::Full)?;
        Ok((loss.loss, grad.iter().copied().collect()))
    }

    pub fn dt(&self) -> f64 {
        self.sim.grid.dt()
    }
}

/// Runs GRAPE from the sinusoidal guess towards `target`, ignoring
/// decoherence.
pub fn grape_optimize(target: &StateVector, config: &GrapeConfig, params: &SystemParams) -> Result<GrapeResult> {
    let init = sinusoidal_guess(config)?;
    grape_from(target, init, config, params)
}

/// As [`grape_optimize`] from an explicit initial guess.
pub fn grape_from(
    target: &StateVector,
    init: PiecewiseControls,
    config: &GrapeConfig,
    params: &SystemParams,
) -> Result<GrapeResult> {
    config.validate()?;
    let obj = UnitaryObjective::new(target.clone(), params, init.n_intervals(), init.duration())?;
    let lbfgs = LbfgsConfig {
        max_iterations: config.max_iterations,
        memory: config.lbfgs_memory,
        loss_tolerance: config.tolerance,
        ..Default::default()
    };
    let r = minimize(|x| obj.evaluate(x), controls_to_flat(&init), &lbfgs, |_, _| {})?;
    Ok(GrapeResult {
        controls: controls_from_flat(&r.x, obj.dt())?,
        loss_trace: r.trace,
        line_search_failed: r.line_search_failed,
    })
}
