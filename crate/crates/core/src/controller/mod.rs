//! The pulse network: `(α, φ) ↦` spline coefficients of the four drives.

mod adam;
mod mlp;
mod sampler;
mod training;

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::splines::{synthesize, BasisMatrix, CoefficientSet, Waveforms, N_CONTROLS};
use crate::{Error, Result};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mlp::{param_count, ForwardCache, Mlp, ARCHITECTURE};
pub use sampler::{TaskSampler, DEFAULT_EDGE_EXTENSION};
pub use training::{
    train, train_from, CurriculumSchedule, Stage, TrainConfig, TrainingLog, TrainingRecord, DEFAULT_LEARNING_RATE,
};

/// Default scale from network output to coefficients, rad/µs.
pub const DEFAULT_OUTPUT_SCALE: f64 = 5.0;

const WEIGHTS_FORMAT: &str = "catpulse-weights";
const WEIGHTS_VERSION: u32 = 1;

/// Affine map of `(α, φ)` onto the network's input range.
///
/// `α_center ± α_half_width` and `φ_center ± φ_half_width` map to `±1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputNormalization {
    pub alpha_center: f64,
    pub alpha_half_width: f64,
    pub phi_center: f64,
    pub phi_half_width: f64,
}

impl InputNormalization {
    /// Covers the extended sampling box of `sampler`.
    pub fn for_sampler(sampler: &TaskSampler) -> Self {
        let hi = sampler.alpha_hi();
        let (lo_phi, hi_phi) = sampler.phi_range();
        let (alpha_center, alpha_half_width) = if sampler.mirror_alpha {
            (0.0, hi)
        } else {
            (0.5 * hi, 0.5 * hi)
        };
        Self {
            alpha_center,
            alpha_half_width,
            phi_center: 0.5 * (lo_phi + hi_phi),
            phi_half_width: 0.5 * (hi_phi - lo_phi),
        }
    }

    pub fn apply(&self, alpha: f64, phi: f64) -> [f64; 2] {
        [
            (alpha - self.alpha_center) / self.alpha_half_width,
            (phi - self.phi_center) / self.phi_half_width,
        ]
    }
}

/// Network plus the fixed maps around it.
#[derive(Clone, Debug, PartialEq)]
pub struct Controller {
    pub mlp: Mlp,
    pub normalization: InputNormalization,
    pub output_scale: f64,
    /// Whether the network was trained on both signs of `α`.
    pub mirror_alpha: bool,
    pub n_active: usize,
}

/// Reduction of an arbitrary `(α, φ)` onto the trained domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FoldedTask {
    pub alpha: f64,
    pub phi: f64,
    /// Negate the cavity drive of the folded pulse.
    pub flip_cavity: bool,
}

/// Uses `C_α^φ = P C_α^{2π−φ}` and `C_{−α}^φ = P C_α^φ`, with `P` the
/// photon-number parity. Conjugating the Hamiltonian by `P` negates the
/// cavity drive and leaves the ground state alone, so a flipped pulse
/// prepares the parity image of the original state with equal fidelity.
pub fn fold_task(alpha: f64, phi: f64, mirror_alpha: bool) -> FoldedTask {
    let mut p = phi.rem_euclid(2.0 * PI);
    let mut a = alpha;
    let mut flip = false;
    if p > PI {
        p = 2.0 * PI - p;
        a = -a;
    }
    if !mirror_alpha && a < 0.0 {
        a = -a;
        flip = !flip;
    }
    FoldedTask {
        alpha: a,
        phi: p,
        flip_cavity: flip,
    }
}

impl Controller {
    pub fn new<R: Rng>(sampler: &TaskSampler, output_scale: f64, rng: &mut R) -> Result<Self> {
        if !(output_scale > 0.0 && output_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("output scale {output_scale}")));
        }
        Ok(Self {
            mlp: Mlp::glorot(&ARCHITECTURE, rng)?,
            normalization: InputNormalization::for_sampler(sampler),
            output_scale,
            mirror_alpha: sampler.mirror_alpha,
            n_active: ARCHITECTURE[4] / N_CONTROLS,
        })
    }

    pub fn n_params(&self) -> usize {
        self.mlp.n_params()
    }

    /// Raw network evaluation without folding, as used in training.
    pub fn forward_cached(&self, alpha: f64, phi: f64) -> ForwardCache {
        self.mlp.forward_cached(&self.normalization.apply(alpha, phi))
    }

    pub fn coefficients_from_output(&self, out: &[f64]) -> Result<CoefficientSet> {
        let scaled: Vec<f64> = out.iter().map(|x| x * self.output_scale).collect();
        CoefficientSet::from_flat(&scaled)
    }

    /// Raw network coefficients at `(α, φ)` with no folding.
    pub fn raw_coefficients(&self, alpha: f64, phi: f64) -> Result<CoefficientSet> {
        let out = self.mlp.forward(&self.normalization.apply(alpha, phi));
        self.coefficients_from_output(&out)
    }

    /// Coefficients for any `(α, φ)`, folded onto the trained domain.
    pub fn coefficients(&self, alpha: f64, phi: f64) -> Result<CoefficientSet> {
        let f = fold_task(alpha, phi, self.mirror_alpha);
        let mut c = self.raw_coefficients(f.alpha, f.phi)?;
        if f.flip_cavity {
            let mut m = c.matrix().clone();
            m.row_mut(0).mapv_inplace(|x| -x);
            m.row_mut(1).mapv_inplace(|x| -x);
            c = CoefficientSet::new(m)?;
        }
        Ok(c)
    }

    /// Coefficients and the waveforms they synthesise on `basis`.
    pub fn generate_pulse(&self, alpha: f64, phi: f64, basis: &BasisMatrix) -> Result<(CoefficientSet, Waveforms)> {
        let c = self.coefficients(alpha, phi)?;
        let w = synthesize(&c, basis)?;
        Ok((c, w))
    }

    pub fn to_file(&self, seed: u64, stage: usize) -> WeightsFile {
        WeightsFile {
            format: WEIGHTS_FORMAT.into(),
            version: WEIGHTS_VERSION,
            architecture: self.mlp.sizes().to_vec(),
            activation: "tanh".into(),
            seed,
            stage,
            mirror_alpha: self.mirror_alpha,
            normalization: self.normalization,
            output_scale: self.output_scale,
            params: self.mlp.params().to_vec(),
        }
    }

    pub fn save(&self, path: &Path, seed: u64, stage: usize) -> Result<()> {
        self.to_file(seed, stage).save(path)
    }

    pub fn load(path: &Path) -> Result<(Self, WeightsFile)> {
        let file = WeightsFile::load(path)?;
        Ok((file.controller()?, file))
    }
}

/// Self-describing JSON container for trained weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub format: String,
    pub version: u32,
    pub architecture: Vec<usize>,
    pub activation: String,
    pub seed: u64,
    /// Index of the last completed curriculum stage.
    pub stage: usize,
    pub mirror_alpha: bool,
    pub normalization: InputNormalization,
    pub output_scale: f64,
    pub params: Vec<f64>,
}

impl WeightsFile {
    pub fn controller(&self) -> Result<Controller> {
        if self.format != WEIGHTS_FORMAT || self.version != WEIGHTS_VERSION {
            return Err(Error::Format(format!(
                "unsupported weights container {} v{}",
                self.format, self.version
            )));
        }
        if self.activation != "tanh" {
            return Err(Error::Format(format!("unknown activation {}", self.activation)));
        }
        let out = *self.architecture.last().unwrap_or(&0);
        if out % N_CONTROLS != 0 || self.architecture.first() != Some(&2) {
            return Err(Error::Format(format!("architecture {:?}", self.architecture)));
        }
        Ok(Controller {
            mlp: Mlp::from_params(&self.architecture, self.params.clone())?,
            normalization: self.normalization,
            output_scale: self.output_scale,
            mirror_alpha: self.mirror_alpha,
            n_active: out / N_CONTROLS,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Simulator, SystemParams, TimeGrid};
    use crate::hilbert::{cat_state, HilbertConfig};
    use crate::linalg::inner;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn controller(seed: u64) -> Controller {
        let s = TaskSampler::new(2.0, 0.1, false).unwrap();
        Controller::new(&s, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn output_shape_and_determinism() {
        let c = controller(1);
        let a = c.coefficients(1.0, 0.5).unwrap();
        let b = c.coefficients(1.0, 0.5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.matrix().dim(), (4, 9));
        assert_eq!(c.n_params(), 4896);
    }

    #[test]
    fn normalization_maps_box_to_unit_square() {
        let s = TaskSampler::new(2.0, 0.1, false).unwrap();
        let n = InputNormalization::for_sampler(&s);
        let lo = n.apply(0.0, -0.1 * PI);
        let hi = n.apply(2.2, 1.1 * PI);
        assert!((lo[0] + 1.0).abs() < 1e-15 && (lo[1] + 1.0).abs() < 1e-15);
        assert!((hi[0] - 1.0).abs() < 1e-15 && (hi[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn folding_targets_agree_up_to_phase() {
        let cfg = HilbertConfig::new(40).unwrap();
        for &(alpha, phi) in &[(1.3, 4.0), (-0.9, 1.0), (-1.7, 5.5), (2.0, 2.0 * PI - 0.3)] {
            let f = fold_task(alpha, phi, false);
            assert!(f.alpha >= 0.0 && (0.0..=PI).contains(&f.phi));
            let direct = cat_state(alpha, phi, cfg).unwrap();
            let mut folded = cat_state(f.alpha, f.phi, cfg).unwrap();
            if f.flip_cavity {
                for (n, z) in folded.iter_mut().enumerate() {
                    if n % 2 == 1 {
                        *z = -*z;
                    }
                }
            }
            assert!((inner(&direct, &folded).norm() - 1.0).abs() < 1e-12, "({alpha},{phi})");
        }
        let m = fold_task(1.0, 4.0, true);
        assert!(m.alpha < 0.0 && !m.flip_cavity);
    }

    #[test]
    fn flipped_pulse_reaches_same_fidelity() {
        let cfg = HilbertConfig::new(20).unwrap();
        let params = SystemParams::default();
        let sim = Simulator::new(cfg, TimeGrid::new(40, 2.0).unwrap(), params).unwrap();
        let c = controller(9);
        let (alpha, phi) = (1.1, 0.7);
        let base = sim.loss(alpha, phi, &c.coefficients(alpha, phi).unwrap()).unwrap();
        let mirrored = sim.loss(alpha, 2.0 * PI - phi, &c.coefficients(alpha, 2.0 * PI - phi).unwrap()).unwrap();
        assert!((base.overlap - mirrored.overlap).abs() < 1e-12);
        let neg = sim.loss(-alpha, phi, &c.coefficients(-alpha, phi).unwrap()).unwrap();
        assert!((base.overlap - neg.overlap).abs() < 1e-12);
    }

    #[test]
    fn weights_round_trip_exactly() {
        let c = controller(3);
        let dir = std::env::temp_dir().join(format!("catpulse-weights-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("w.json");
        c.save(&path, 3, 2).unwrap();
        let (back, file) = Controller::load(&path).unwrap();
        assert_eq!(back, c);
        assert_eq!(file.seed, 3);
        assert_eq!(file.stage, 2);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn input_jacobian_is_finite_and_smooth() {
        let c = controller(4);
        let h = 1e-5;
        for &(a, p) in &[(0.5, 0.2), (1.5, 2.0), (2.0, 3.0)] {
            let f = |a: f64, p: f64| c.raw_coefficients(a, p).unwrap().to_flat();
            let da: Vec<f64> = f(a + h, p).iter().zip(f(a - h, p)).map(|(x, y)| (x - y) / (2.0 * h)).collect();
            let da2: Vec<f64> = f(a + 2.0 * h, p).iter().zip(f(a, p)).map(|(x, y)| (x - y) / (2.0 * h)).collect();
            for (x, y) in da.iter().zip(&da2) {
                assert!(x.is_finite());
                assert!((x - y).abs() < 1e-3 * (1.0 + x.abs()));
            }
        }
    }
}
