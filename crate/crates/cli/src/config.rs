//! The run configuration: one TOML document, every field optional.
//!
//! Frequencies are entered as ordinary frequencies in MHz and converted to
//! angular units (rad/µs) on load; times are in µs.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use catpulse::baseline::BaselineConfig;
use catpulse::controller::{CurriculumSchedule, Stage, TrainConfig, DEFAULT_EDGE_EXTENSION, DEFAULT_LEARNING_RATE, DEFAULT_OUTPUT_SCALE};
use catpulse::dynamics::{SystemParams, TimeGrid};
use catpulse::tomography::{BudgetModel, ContrastDrift, HeraldingSpec, MeasurementModel, Readout, DEFAULT_N_TH};

/// Overrides `output.dir`.
pub const ENV_OUT: &str = "CATPULSE_OUT";
/// Overrides the worker count.
pub const ENV_THREADS: &str = "CATPULSE_THREADS";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: SystemSection,
    pub grid: GridSection,
    pub basis: BasisSection,
    pub curriculum: CurriculumSection,
    pub sampler: SamplerSection,
    pub tomography: TomographySection,
    pub baseline: BaselineConfig,
    pub seeds: SeedSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    /// χ/2π, MHz.
    pub chi_mhz: f64,
    pub t_q_us: f64,
    pub t_c_us: f64,
    pub t_qphi_us: f64,
    pub t2_us: Option<f64>,
    pub duration_us: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        let p = SystemParams::default();
        Self {
            chi_mhz: p.chi / (2.0 * PI),
            t_q_us: p.t_q,
            t_c_us: p.t_c,
            t_qphi_us: p.t_qphi,
            t2_us: p.t2_override,
            duration_us: p.duration,
        }
    }
}

impl SystemSection {
    pub fn params(&self) -> Result<SystemParams> {
        let p = SystemParams {
            chi: 2.0 * PI * self.chi_mhz,
            t_q: self.t_q_us,
            t_c: self.t_c_us,
            t_qphi: self.t_qphi_us,
            t2_override: self.t2_us,
            gamma_up: 0.0,
            duration: self.duration_us,
        };
        p.validate().context("[system]")?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub training_intervals: usize,
    pub testing_intervals: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            training_intervals: TimeGrid::TRAINING_INTERVALS,
            testing_intervals: TimeGrid::TESTING_INTERVALS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisSection {
    /// Network outputs are multiplied by this to give spline coefficients, rad/µs.
    pub output_scale: f64,
}

impl Default for BasisSection {
    fn default() -> Self {
        Self {
            output_scale: DEFAULT_OUTPUT_SCALE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumSection {
    pub preset: Preset,
    /// Replaces the preset when non-empty.
    pub stages: Vec<Stage>,
    pub learning_rate: f64,
    pub lr_decay: f64,
}

impl Default for CurriculumSection {
    fn default() -> Self {
        Self {
            preset: Preset::Desk,
            stages: Vec::new(),
            learning_rate: DEFAULT_LEARNING_RATE,
            lr_decay: 0.5,
        }
    }
}

impl CurriculumSection {
    pub fn schedule(&self) -> CurriculumSchedule {
        if !self.stages.is_empty() {
            return CurriculumSchedule {
                stages: self.stages.clone(),
            };
        }
        match self.preset {
            Preset::Desk => CurriculumSchedule::desk(),
            Preset::Full => CurriculumSchedule::full(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub edge_extension: f64,
    pub mirror_alpha: bool,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            edge_extension: DEFAULT_EDGE_EXTENSION,
            mirror_alpha: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutKind {
    /// Instantaneous parity map.
    Fast,
    /// Parity sequence simulated with decoherence.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomographySection {
    pub n_th: f64,
    pub contrast: f64,
    /// Sinusoidal contrast modulation; off when absent.
    pub drift: Option<ContrastDrift>,
    pub qubit_reset: bool,
    pub readout: ReadoutKind,
    pub samples: usize,
    pub calibration_shots: usize,
    pub heralding: HeraldingSpec,
    pub budget_resolution: usize,
}

impl Default for TomographySection {
    fn default() -> Self {
        Self {
            n_th: DEFAULT_N_TH,
            contrast: 1.0,
            drift: None,
            qubit_reset: false,
            readout: ReadoutKind::Full,
            samples: 100_000,
            calibration_shots: 100_000,
            heralding: HeraldingSpec::default(),
            budget_resolution: BudgetModel::default().resolution,
        }
    }
}

impl TomographySection {
    /// Measurement model; the full readout is built lazily per state size.
    pub fn model(&self, readout: Readout) -> MeasurementModel {
        MeasurementModel {
            contrast: self.contrast,
            drift: self.drift,
            n_th: self.n_th,
            qubit_reset: self.qubit_reset,
            readout,
        }
    }

    pub fn budget_model(&self, testing_intervals: usize) -> BudgetModel {
        BudgetModel {
            n_th: self.n_th,
            resolution: self.budget_resolution,
            n_intervals: testing_intervals,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedSection {
    pub train: u64,
    pub tomography: u64,
    pub baseline: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid configuration:\n{e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.system.params()?;
        if self.grid.training_intervals == 0 || self.grid.testing_intervals == 0 {
            bail!("[grid] interval counts must be positive");
        }
        if !(self.basis.output_scale > 0.0) {
            bail!("[basis] output_scale must be positive");
        }
        self.curriculum.schedule().validate().context("[curriculum]")?;
        self.baseline.grape.validate().context("[baseline.grape]")?;
        self.baseline.krotov.validate().context("[baseline.krotov]")?;
        self.tomography.heralding.validate().context("[tomography.heralding]")?;
        self.tomography.model(Readout::Fast).validate().context("[tomography]")?;
        Ok(())
    }

    /// Seeds every stochastic component from one value.
    pub fn reseed(&mut self, seed: u64) {
        self.seeds.train = seed;
        self.seeds.tomography = seed;
        self.seeds.baseline = seed;
        self.baseline.grape.seed = seed;
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut t = TrainConfig::new(self.curriculum.schedule(), self.seeds.train);
        t.adam.learning_rate = self.curriculum.learning_rate;
        t.lr_decay = self.curriculum.lr_decay;
        t.output_scale = self.basis.output_scale;
        t.edge_extension = self.sampler.edge_extension;
        t.mirror_alpha = self.sampler.mirror_alpha;
        t.n_intervals = self.grid.training_intervals;
        t.params = self.system.params()?;
        Ok(t)
    }

    pub fn baseline_config(&self) -> BaselineConfig {
        let mut b = self.baseline.clone();
        b.grape.seed = self.seeds.baseline;
        b
    }
}

/// Worker count: flag, then environment, then the machine's cores.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n.max(1));
    }
    if let Ok(v) = std::env::var(ENV_THREADS) {
        let n: usize = v.parse().with_context(|| format!("{ENV_THREADS}={v}"))?;
        return Ok(n.max(1));
    }
    Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Output directory: flag, then environment, then the configuration.
pub fn resolve_out(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(ENV_OUT).map(PathBuf::from))
        .unwrap_or_else(|| cfg.output.dir.clone())
}
