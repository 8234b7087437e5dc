//! Simulated Wigner tomography and fidelity estimation.
//!
//! Each tomography shot measures the displaced parity twice with opposite
//! polarities and records `W̃ = (2/π)(r⁺ − r⁻) ∈ {−2/π, 0, 2/π}`. The
//! fidelity estimator is `F̃ = (π / c̃N) Σ W_T(β_i) W̃_i / p(β_i)` with the
//! contrast `c̃` calibrated on the (thermal) vacuum at `β = 0`.

mod budget;
mod heralding;
mod readout;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hilbert::{cat_state, cavity_wigner, displaced_rows, DensityMatrix, HilbertConfig, StateVector};
use crate::{Error, Result, C64};

pub use budget::{budget_for_states, error_budget, error_budget_with_channels, BudgetModel, ErrorBudget, DEFAULT_BUDGET_RESOLUTION};
pub use heralding::{binomial_tail, heralding_probabilities, HeraldingSpec};
pub use readout::{displaced_diagonals, ideal_signal_observable, DiagonalObservable, DisplacedDiagonals, ParityReadout};

/// Residual cavity occupation after reset.
pub const DEFAULT_N_TH: f64 = 0.006;
/// Points per axis of the optimal-sampling grid.
pub const OPTIMAL_GRID_RESOLUTION: usize = 201;
/// Margin added to `|α|` for the half-width of sampling grids.
pub const GRID_MARGIN: f64 = 3.0;
/// Bins per axis of exported Wigner maps.
pub const WIGNER_MAP_BINS: usize = 100;

const SHARD: usize = 4096;
const PROBABILITY_SLACK: f64 = 1e-9;

/// Parity duration `π/χ`.
pub fn parity_time(chi: f64) -> f64 {
    PI / chi
}

/// Wigner function of the target cavity state.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetWigner {
    /// Closed form of the even/odd cat `N(|α⟩ + e^{iφ}|−α⟩)`.
    Cat { alpha: f64, phi: f64, norm_sqr: f64 },
    /// Any normalised cavity vector.
    Numeric(Vec<C64>),
}

impl TargetWigner {
    pub fn cat(alpha: f64, phi: f64) -> Result<Self> {
        let denom = 2.0 * (1.0 + phi.cos() * (-2.0 * alpha * alpha).exp());
        if denom < 1e-6 {
            // Near the odd-cat limit the closed form is 0/0.
            let n = 20 + (4.0 * alpha.abs()).ceil() as usize;
            return Ok(Self::Numeric(cat_state(alpha, phi, HilbertConfig::new(n)?)?));
        }
        Ok(Self::Cat {
            alpha,
            phi,
            norm_sqr: 1.0 / denom,
        })
    }

    pub fn value(&self, beta: C64) -> Result<f64> {
        match self {
            Self::Cat { alpha, phi, norm_sqr } => {
                let g = |c: f64| (-2.0 * ((beta.re - c).powi(2) + beta.im.powi(2))).exp();
                let cross = 2.0 * (-2.0 * beta.norm_sqr()).exp() * (phi - 4.0 * alpha * beta.im).cos();
                Ok(2.0 / PI * norm_sqr * (g(*alpha) + g(-alpha) + cross))
            }
            Self::Numeric(psi) => cavity_wigner(psi, beta),
        }
    }
}

/// Node positions and trapezoid weights of a square grid `[−L, L]²`.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareGrid {
    pub half_width: f64,
    pub resolution: usize,
}

impl SquareGrid {
    pub fn new(half_width: f64, resolution: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) || resolution < 2 {
            return Err(Error::InvalidArgument(format!("grid half-width {half_width}, resolution {resolution}")));
        }
        Ok(Self { half_width, resolution })
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / (self.resolution - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, j: usize) -> C64 {
        let (ix, iy) = (j % self.resolution, j / self.resolution);
        let h = self.step();
        C64::new(-self.half_width + ix as f64 * h, -self.half_width + iy as f64 * h)
    }

    pub fn weight(&self, j: usize) -> f64 {
        let (ix, iy) = (j % self.resolution, j / self.resolution);
        let edge = |i: usize| if i == 0 || i + 1 == self.resolution { 0.5 } else { 1.0 };
        let h = self.step();
        h * h * edge(ix) * edge(iy)
    }
}

/// Uniform sampling over `[−Δx/2, Δx/2] × [−Δy/2, Δy/2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformSampler {
    pub dx: f64,
    pub dy: f64,
    /// `Some((n_x, n_y))` cycles through pixel centres instead of drawing
    /// independent points.
    pub pixels: Option<(usize, usize)>,
}

/// Sampling from `|W_T| / ‖W_T‖₁` discretised on the nodes of a square grid.
#[derive(Clone, Debug)]
pub struct OptimalSampler {
    pub grid: SquareGrid,
    pub target: TargetWigner,
    /// `‖W_T‖₁` by the trapezoid rule.
    pub l1_norm: f64,
    cdf: Vec<f64>,
}

#[derive(Clone, Debug)]
pub enum SamplingStrategy {
    Uniform(UniformSampler),
    Optimal(OptimalSampler),
}

impl SamplingStrategy {
    pub fn uniform(dx: f64, dy: f64, pixels: Option<(usize, usize)>) -> Result<Self> {
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(Error::Degenerate(format!("uniform sampling box {dx} × {dy}")));
        }
        if let Some((nx, ny)) = pixels {
            if nx == 0 || ny == 0 {
                return Err(Error::Degenerate(format!("pixel grid {nx} × {ny}")));
            }
        }
        Ok(Self::Uniform(UniformSampler { dx, dy, pixels }))
    }

    /// Optimal sampling on `[−(|α| + 3), |α| + 3]²` at the default resolution.
    pub fn optimal_for_cat(alpha: f64, phi: f64) -> Result<Self> {
        let grid = SquareGrid::new(alpha.abs() + GRID_MARGIN, OPTIMAL_GRID_RESOLUTION)?;
        Self::optimal(TargetWigner::cat(alpha, phi)?, grid)
    }

    pub fn optimal(target: TargetWigner, grid: SquareGrid) -> Result<Self> {
        let masses: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|j| Ok(grid.weight(j) * target.value(grid.node(j))?.abs()))
            .collect::<Result<_>>()?;
        let mut cdf = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for m in masses {
            acc += m;
            cdf.push(acc);
        }
        if acc < 1e-9 {
            return Err(Error::Degenerate(format!("target Wigner mass {acc} on the sampling grid")));
        }
        Ok(Self::Optimal(OptimalSampler {
            grid,
            target,
            l1_norm: acc,
            cdf,
        }))
    }

    pub fn id(&self) -> String {
        match self {
            Self::Uniform(u) => match u.pixels {
                Some((nx, ny)) => format!("uniform-pixels-{nx}x{ny}"),
                None => "uniform".into(),
            },
            Self::Optimal(o) => format!("optimal-{}", o.grid.resolution),
        }
    }

    /// `n` sample points. Pixel mode visits pixels in raster order and wraps.
    pub fn sample_betas<R: Rng>(&self, rng: &mut R, n: usize) -> Result<Vec<C64>> {
        if n == 0 {
            return Err(Error::InvalidArgument("at least one sample is required".into()));
        }
        Ok(match self {
            Self::Uniform(u) => match u.pixels {
                None => (0..n)
                    .map(|_| {
                        C64::new(
                            (rng.random::<f64>() - 0.5) * u.dx,
                            (rng.random::<f64>() - 0.5) * u.dy,
                        )
                    })
                    .collect(),
                Some((nx, ny)) => (0..n)
                    .map(|i| {
                        let k = i % (nx * ny);
                        let (ix, iy) = (k % nx, k / nx);
                        C64::new(
                            -0.5 * u.dx + (ix as f64 + 0.5) * u.dx / nx as f64,
                            -0.5 * u.dy + (iy as f64 + 0.5) * u.dy / ny as f64,
                        )
                    })
                    .collect(),
            },
            Self::Optimal(o) => {
                let total = *o.cdf.last().expect("nonempty grid");
                (0..n)
                    .map(|_| {
                        let u = rng.random::<f64>() * total;
                        let j = o.cdf.partition_point(|&c| c <= u).min(o.cdf.len() - 1);
                        o.grid.node(j)
                    })
                    .collect()
            }
        })
    }

    /// `W_T(β) / p(β)` for a sampled point.
    fn importance_weight(&self, target: &TargetWigner, beta: C64) -> Result<f64> {
        let w = target.value(beta)?;
        match self {
            Self::Uniform(u) => {
                if beta.re.abs() > 0.5 * u.dx + 1e-12 || beta.im.abs() > 0.5 * u.dy + 1e-12 {
                    return Err(Error::Probability {
                        value: 0.0,
                        context: format!("sample {beta} lies outside the uniform box"),
                    });
                }
                Ok(w * u.dx * u.dy)
            }
            Self::Optimal(o) => {
                if w == 0.0 {
                    return Err(Error::Probability {
                        value: 0.0,
                        context: format!("sample {beta} has zero optimal density"),
                    });
                }
                Ok(w.signum() * o.l1_norm)
            }
        }
    }
}

/// The state handed to the tomography.
#[derive(Clone, Debug)]
pub enum PreparedState {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl PreparedState {
    pub fn config(&self) -> HilbertConfig {
        match self {
            Self::Pure(p) => p.config(),
            Self::Mixed(r) => r.config(),
        }
    }
}

impl From<StateVector> for PreparedState {
    fn from(s: StateVector) -> Self {
        Self::Pure(s)
    }
}

impl From<DensityMatrix> for PreparedState {
    fn from(r: DensityMatrix) -> Self {
        Self::Mixed(r)
    }
}

/// How single parity shots are generated.
#[derive(Clone, Debug)]
pub enum Readout {
    /// Instantaneous parity map: each polarity is a Bernoulli draw with
    /// mean `(1 ± c⟨σz Π(β)⟩)/2`.
    Fast,
    /// Parity map with free evolution and decoherence during the wait.
    Full(ParityReadout),
}

/// Slow sinusoidal modulation of the contrast over the shot sequence:
/// shot `i` sees `c·(1 + amplitude·sin(2πi / period_shots))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastDrift {
    pub amplitude: f64,
    pub period_shots: f64,
}

impl ContrastDrift {
    pub fn factor(&self, shot: usize) -> f64 {
        1.0 + self.amplitude * (2.0 * PI * shot as f64 / self.period_shots).sin()
    }
}

#[derive(Clone, Debug)]
pub struct MeasurementModel {
    /// Scalar contrast `c ∈ (0, 1]`.
    pub contrast: f64,
    /// Off unless set.
    pub drift: Option<ContrastDrift>,
    /// Thermal occupation of the calibration vacuum.
    pub n_th: f64,
    /// Project the qubit onto its ground state before the parity map.
    pub qubit_reset: bool,
    pub readout: Readout,
}

impl Default for MeasurementModel {
    fn default() -> Self {
        Self {
            contrast: 1.0,
            drift: None,
            n_th: 0.0,
            qubit_reset: false,
            readout: Readout::Fast,
        }
    }
}

impl MeasurementModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(Error::InvalidArgument(format!("contrast {}", self.contrast)));
        }
        if !(0.0..0.5).contains(&self.n_th) {
            return Err(Error::InvalidArgument(format!("thermal occupation {}", self.n_th)));
        }
        if let Some(d) = self.drift {
            if !(0.0..1.0).contains(&d.amplitude) || !(d.period_shots > 0.0) || self.contrast * (1.0 + d.amplitude) > 1.0 {
                return Err(Error::InvalidArgument(format!("contrast drift {d:?} on contrast {}", self.contrast)));
            }
        }
        Ok(())
    }

    /// Ground-readout probabilities of the two polarities at `β`.
    pub fn polarity_probabilities(&self, state: &PreparedState, beta: C64) -> Result<(f64, f64)> {
        let n = state.config().n_fock();
        let (pp, pm) = match &self.readout {
            Readout::Fast => {
                let c = displaced_diagonals(state, beta, displaced_rows(n, beta), false)?;
                let s = ideal_signal_observable(c.c00.len()).expectation(&c, self.qubit_reset);
                (0.5 * (1.0 + self.contrast * s), 0.5 * (1.0 - self.contrast * s))
            }
            Readout::Full(r) => {
                let c = displaced_diagonals(state, beta, r.rows(), true)?;
                let (a, b) = r.probabilities(&c, self.qubit_reset);
                // Unpopulated branches (after a projective reset) read out as
                // ground half the time.
                let norm = if self.qubit_reset { c.c00.iter().sum::<f64>() } else { 1.0 };
                let fill = 0.5 * (1.0 - norm);
                (
                    0.5 + self.contrast * (a + fill - 0.5),
                    0.5 + self.contrast * (b + fill - 0.5),
                )
            }
        };
        for p in [pp, pm] {
            if !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&p) {
                return Err(Error::Probability {
                    value: p,
                    context: format!("parity readout at β = {beta}"),
                });
            }
        }
        Ok((pp.clamp(0.0, 1.0), pm.clamp(0.0, 1.0)))
    }
}

/// One differenced tomography shot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub re_beta: f64,
    pub im_beta: f64,
    /// `(2/π)(r⁺ − r⁻)`.
    pub outcome: f64,
}

impl Sample {
    pub fn beta(&self) -> C64 {
        C64::new(self.re_beta, self.im_beta)
    }
}

fn draw_shot<R: Rng>(rng: &mut R, (pp, pm): (f64, f64)) -> f64 {
    let rp = (rng.random::<f64>() < pp) as i32;
    let rm = (rng.random::<f64>() < pm) as i32;
    2.0 / PI * (rp - rm) as f64
}

fn shard_rng(seed: u64, shard: usize) -> ChaCha8Rng {
    // Stream 0 is left to callers that sample points from the same seed.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard as u64 + 1);
    rng
}

/// Simulates one shot per point. Readout probabilities are computed once
/// per distinct point; draws use one seeded stream per shard of points, so
/// the result does not depend on the thread count.
pub fn simulate_outcomes(state: &PreparedState, betas: &[C64], model: &MeasurementModel, seed: u64) -> Result<Vec<Sample>> {
    model.validate()?;
    let key = |b: &C64| (b.re.to_bits(), b.im.to_bits());
    let mut unique: Vec<C64> = Vec::new();
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    for b in betas {
        index.entry(key(b)).or_insert_with(|| {
            unique.push(*b);
            unique.len() - 1
        });
    }
    // With drift, probabilities are kept at unit contrast and rescaled per
    // shot; both polarities are affine in the contrast about 1/2.
    let unit;
    let base = match model.drift {
        Some(_) => {
            unit = MeasurementModel { contrast: 1.0, drift: None, ..model.clone() };
            &unit
        }
        None => model,
    };
    let probs: Vec<(f64, f64)> = unique
        .par_iter()
        .map(|&b| base.polarity_probabilities(state, b))
        .collect::<Result<_>>()?;
    let shards: Vec<Vec<Sample>> = betas
        .par_chunks(SHARD)
        .enumerate()
        .map(|(s, chunk)| {
            let mut rng = shard_rng(seed, s);
            chunk
                .iter()
                .enumerate()
                .map(|(k, b)| {
                    let mut p = probs[index[&key(b)]];
                    if let Some(d) = model.drift {
                        let c = model.contrast * d.factor(s * SHARD + k);
                        p = (0.5 + c * (p.0 - 0.5), 0.5 + c * (p.1 - 0.5));
                    }
                    Sample {
                        re_beta: b.re,
                        im_beta: b.im,
                        outcome: draw_shot(&mut rng, p),
                    }
                })
                .collect()
        })
        .collect();
    Ok(shards.into_iter().flatten().collect())
}

/// Parity of the thermal calibration state at the origin, `1/(1 + 2n_th)`.
pub fn thermal_vacuum_parity(n_th: f64) -> f64 {
    1.0 / (1.0 + 2.0 * n_th)
}

/// `c̃ = Σ(r⁺ − r⁻) / ((1 − 2n_th) N)` from `n` fast-readout shots on the
/// thermal vacuum at `β = 0`.
pub fn simulate_contrast(model: &MeasurementModel, n: usize, seed: u64) -> Result<f64> {
    model.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("empty contrast calibration".into()));
    }
    let s = thermal_vacuum_parity(model.n_th);
    let mut rng = shard_rng(seed, usize::MAX >> 1);
    let sum: f64 = (0..n)
        .map(|i| {
            let c = model.contrast * model.drift.map_or(1.0, |d| d.factor(i));
            draw_shot(&mut rng, (0.5 * (1.0 + c * s), 0.5 * (1.0 - c * s))) * PI / 2.0
        })
        .sum();
    Ok(sum / ((1.0 - 2.0 * model.n_th) * n as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub strategy: String,
    pub contrast: f64,
}

/// `F̃` and its standard error from the spread of the summands.
pub fn estimate_fidelity(
    samples: &[Sample],
    target: &TargetWigner,
    strategy: &SamplingStrategy,
    contrast: f64,
) -> Result<FidelityEstimate> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    if !(contrast > 0.0 && contrast.is_finite()) {
        return Err(Error::InvalidArgument(format!("contrast {contrast}")));
    }
    let mut cache: HashMap<(u64, u64), f64> = HashMap::new();
    let mut terms = Vec::with_capacity(samples.len());
    for s in samples {
        let b = s.beta();
        let w = match cache.get(&(b.re.to_bits(), b.im.to_bits())) {
            Some(w) => *w,
            None => {
                let w = strategy.importance_weight(target, b)?;
                cache.insert((b.re.to_bits(), b.im.to_bits()), w);
                w
            }
        };
        terms.push(PI / contrast * w * s.outcome);
    }
    let n = terms.len() as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let var = if terms.len() > 1 {
        terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(FidelityEstimate {
        value: mean,
        stderr: (var / n).sqrt(),
        n_samples: terms.len(),
        strategy: strategy.id(),
        contrast,
    })
}

/// `F = ⟨ψ|ρ₀₀|ψ⟩`, `F₁ = ⟨ψ|ρ₁₁|ψ⟩` and the value `F′ = F − F₁` that
/// tomography without a qubit reset converges to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorBias {
    pub fidelity: f64,
    pub f1: f64,
    pub biased: f64,
    pub p0: f64,
}

pub fn estimator_bias(rho: &DensityMatrix, target_cavity: &[C64]) -> Result<EstimatorBias> {
    let n = rho.config().n_fock();
    if target_cavity.len() != n {
        return Err(Error::InvalidArgument(format!(
            "target has {} levels, state has {n}",
            target_cavity.len()
        )));
    }
    let p0 = 1.0 - rho.qubit_excited_population();
    if p0 < 1e-9 {
        return Err(Error::Degenerate(format!("qubit ground population {p0}")));
    }
    let m = rho.matrix();
    let quad = |q: usize| -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += target_cavity[i].conj() * m[[q * n + i, q * n + j]] * target_cavity[j];
            }
        }
        acc.re
    };
    let fidelity = quad(0);
    let f1 = quad(1);
    Ok(EstimatorBias {
        fidelity,
        f1,
        biased: fidelity - f1,
        p0,
    })
}

pub fn write_samples_csv<W: Write>(samples: &[Sample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: Read>(input: R) -> Result<Vec<Sample>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<Vec<Sample>, _>>()?)
}

/// One bin of an exported Wigner map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerBin {
    pub re_beta: f64,
    pub im_beta: f64,
    /// Mean of `W̃/c̃`; NaN for empty bins.
    pub wigner: f64,
    pub count: usize,
}

/// Bins outcomes on `bins × bins` cells over `[−L, L]²` and averages the
/// contrast-renormalised outcomes. Samples outside the square are dropped.
pub fn wigner_map(samples: &[Sample], half_width: f64, bins: usize, contrast: f64) -> Result<Vec<WignerBin>> {
    if bins == 0 || !(half_width > 0.0) || !(contrast > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "map half-width {half_width}, {bins} bins, contrast {contrast}"
        )));
    }
    let h = 2.0 * half_width / bins as f64;
    let mut sum = vec![0.0; bins * bins];
    let mut count = vec![0usize; bins * bins];
    for s in samples {
        let ix = ((s.re_beta + half_width) / h).floor();
        let iy = ((s.im_beta + half_width) / h).floor();
        if ix < 0.0 || iy < 0.0 || ix >= bins as f64 || iy >= bins as f64 {
            continue;
        }
        let k = iy as usize * bins + ix as usize;
        sum[k] += s.outcome / contrast;
        count[k] += 1;
    }
    Ok((0..bins * bins)
        .map(|k| WignerBin {
            re_beta: -half_width + ((k % bins) as f64 + 0.5) * h,
            im_beta: -half_width + ((k / bins) as f64 + 0.5) * h,
            wigner: if count[k] > 0 { sum[k] / count[k] as f64 } else { f64::NAN },
            count: count[k],
        })
        .collect())
}

pub fn write_wigner_map_csv<W: Write>(map: &[WignerBin], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for b in map {
        w.serialize(b)?;
    }
    w.flush()?;
    Ok(())
}
