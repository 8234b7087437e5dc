//! Comparison optimizer: unitary GRAPE on a coarse grid, resampling with
//! Gaussian smoothing, then Krotov refinement with decoherence.

mod grape;
mod krotov;
mod lbfgs;
mod smoothing;

#[cfg(test)]
mod tests;

use std::io::{Read, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use grape::{
    controls_from_flat, controls_to_flat, grape_from, grape_optimize, sinusoidal_guess, GrapeConfig, GrapeResult,
    UnitaryObjective, GRAPE_DURATION, GRAPE_STEPS,
};
pub use krotov::{krotov_refine, krotov_refine_with, lindblad_fidelity, KrotovConfig, KrotovResult};
pub use lbfgs::{minimize, LbfgsConfig, LbfgsResult};
pub use smoothing::{gaussian_smooth, upsample_and_smooth, FINE_DURATION, FINE_STEPS, SMOOTHING_SIGMA};

use crate::controller::Controller;
use crate::dynamics::{PiecewiseControls, SystemParams, TimeGrid};
use crate::hilbert::{target_state, HilbertConfig};
use crate::{Error, Result, C64};

/// `N_max`, the nearest integer to `16 + 4α + 2α²`.
pub fn hilbert_dim_for_alpha(alpha: f64) -> usize {
    let a = alpha.abs();
    (16.0 + 4.0 * a + 2.0 * a * a).round() as usize
}

/// Truncation used for both optimizers at amplitude `alpha`.
pub fn hilbert_for_alpha(alpha: f64) -> Result<HilbertConfig> {
    HilbertConfig::from_n_max(hilbert_dim_for_alpha(alpha))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    #[serde(default)]
    pub grape: GrapeConfig,
    #[serde(default)]
    pub krotov: KrotovConfig,
}

#[derive(Clone, Debug)]
pub struct BaselineRun {
    pub alpha: f64,
    pub phi: f64,
    pub grape_loss_trace: Vec<f64>,
    pub krotov_fidelity_trace: Vec<f64>,
    /// Smoothed GRAPE result before refinement.
    pub smoothed: PiecewiseControls,
    pub controls: PiecewiseControls,
    /// Final Lindblad fidelity.
    pub fidelity: f64,
    pub seconds: f64,
}

/// The full pipeline for one target, with the channels implied by `params`.
pub fn run_baseline(alpha: f64, phi: f64, config: &BaselineConfig, params: &SystemParams) -> Result<BaselineRun> {
    let start = Instant::now();
    let params = params.clone().with_pump(false);
    let cfg = hilbert_for_alpha(alpha)?;
    let target = target_state(alpha, phi, cfg)?;
    let g = grape_optimize(&target, &config.grape, &params)?;
    let smoothed = upsample_and_smooth(&g.controls, FINE_STEPS, params.duration, SMOOTHING_SIGMA)?;
    let k = krotov_refine(&smoothed, &target, &params.channels(), &params, &config.krotov)?;
    Ok(BaselineRun {
        alpha,
        phi,
        grape_loss_trace: g.loss_trace,
        fidelity: *k.fidelity_trace.last().expect("trace starts with the guess"),
        krotov_fidelity_trace: k.fidelity_trace,
        smoothed,
        controls: k.controls,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct ControlRow {
    t_ns: f64,
    #[serde(rename = "reC")]
    re_c: f64,
    #[serde(rename = "imC")]
    im_c: f64,
    #[serde(rename = "reQ")]
    re_q: f64,
    #[serde(rename = "imQ")]
    im_q: f64,
}

/// One row per interval: start time in ns and drives in rad/µs.
pub fn write_controls_csv<W: Write>(controls: &PiecewiseControls, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for j in 0..controls.n_intervals() {
        w.serialize(ControlRow {
            t_ns: 1e3 * controls.dt * j as f64,
            re_c: controls.eps_c[j].re,
            im_c: controls.eps_c[j].im,
            re_q: controls.eps_q[j].re,
            im_q: controls.eps_q[j].im,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads [`write_controls_csv`] output; the rows must be evenly spaced.
pub fn read_controls_csv<R: Read>(input: R, duration: f64) -> Result<PiecewiseControls> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<ControlRow>, _>>()?;
    if rows.is_empty() {
        return Err(Error::Format("controls file has no rows".into()));
    }
    let dt = duration / rows.len() as f64;
    for (j, row) in rows.iter().enumerate() {
        if (row.t_ns - 1e3 * dt * j as f64).abs() > 1e-6 * (1e3 * duration) {
            return Err(Error::Format(format!(
                "row {j} starts at {} ns, expected {} ns",
                row.t_ns,
                1e3 * dt * j as f64
            )));
        }
    }
    PiecewiseControls::new(
        dt,
        rows.iter().map(|r| C64::new(r.re_c, r.im_c)).collect(),
        rows.iter().map(|r| C64::new(r.re_q, r.im_q)).collect(),
    )
}

/// One line of the network-versus-baseline comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub alpha: f64,
    pub phi: f64,
    pub nn_fidelity: f64,
    pub baseline_fidelity: f64,
    /// `baseline_fidelity − nn_fidelity`
    pub gap: f64,
    /// Time the baseline pipeline took for this target, s.
    pub baseline_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub rows: Vec<BenchmarkRow>,
    /// Time the network took to generate every pulse of the table, s.
    pub nn_seconds: f64,
    /// Mean baseline time per target over network time per target.
    pub speedup: f64,
}

impl Benchmark {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Network pulses sampled on the fine grid, with the time spent producing them.
pub fn generate_network_controls(
    controller: &Controller,
    tasks: &[(f64, f64)],
    params: &SystemParams,
) -> Result<(Vec<PiecewiseControls>, f64)> {
    let grid = TimeGrid::new(FINE_STEPS, params.duration)?;
    let basis = crate::splines::BSplineBasis::standard(params.duration)?;
    let mid = basis.sample(&grid.midpoints())?;
    let start = Instant::now();
    let out = tasks
        .iter()
        .map(|&(a, p)| PiecewiseControls::from_coefficients(&controller.coefficients(a, p)?, &mid, &grid))
        .collect::<Result<Vec<_>>>()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Runs the baseline for every task and compares Lindblad fidelities with
/// the network's pulses. `progress` sees each finished row.
pub fn benchmark<P: FnMut(&BenchmarkRow)>(
    controller: &Controller,
    tasks: &[(f64, f64)],
    config: &BaselineConfig,
    params: &SystemParams,
    mut progress: P,
) -> Result<Benchmark> {
    if tasks.is_empty() {
        return Err(Error::InvalidArgument("benchmark needs at least one target".into()));
    }
    let params = params.clone().with_pump(false);
    let channels = params.channels();
    let (nn_controls, nn_seconds) = generate_network_controls(controller, tasks, &params)?;
    let mut rows = Vec::with_capacity(tasks.len());
    for (&(alpha, phi), nn) in tasks.iter().zip(&nn_controls) {
        let run = run_baseline(alpha, phi, config, &params)?;
        let target = target_state(alpha, phi, hilbert_for_alpha(alpha)?)?;
        let nn_fidelity = lindblad_fidelity(nn, &target, &channels, &params)?;
        let row = BenchmarkRow {
            alpha,
            phi,
            nn_fidelity,
            baseline_fidelity: run.fidelity,
            gap: run.fidelity - nn_fidelity,
            baseline_seconds: run.seconds,
        };
        progress(&row);
        rows.push(row);
    }
    let per_target_nn = nn_seconds.max(1e-9) / tasks.len() as f64;
    let mean_baseline = rows.iter().map(|r| r.baseline_seconds).sum::<f64>() / rows.len() as f64;
    Ok(Benchmark {
        rows,
        nn_seconds,
        speedup: mean_baseline / per_target_nn,
    })
}
