//! Curriculum training with Adam.

use std::io::Write;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, AdamConfig, AdamState, Controller, TaskSampler, DEFAULT_EDGE_EXTENSION, DEFAULT_OUTPUT_SCALE};
use crate::dynamics::{Simulator, SystemParams, TimeGrid};
use crate::gradients::loss_and_gradient;
use crate::hilbert::HilbertConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub batches: usize,
    pub alpha_max: f64,
    /// Cavity levels kept, `N_max + 1`.
    pub n_fock: usize,
    pub batch_size: usize,
    /// Add the incoherent qubit pump to the loss.
    pub pump: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumSchedule {
    pub stages: Vec<Stage>,
}

impl CurriculumSchedule {
    /// Reduced schedule that runs on one machine in hours:
    /// `α_max` 2 → 2.2, `N_max` 20 → 30.
    pub fn desk() -> Self {
        Self {
            stages: vec![
                Stage { batches: 1000, alpha_max: 2.0, n_fock: 21, batch_size: 16, pump: true },
                Stage { batches: 1000, alpha_max: 2.2, n_fock: 26, batch_size: 16, pump: false },
                Stage { batches: 1000, alpha_max: 2.2, n_fock: 31, batch_size: 32, pump: false },
            ],
        }
    }

    /// Full range: `α_max` 2 → 4, `N_max` 20 → 60, batch 16 → 256.
    pub fn full() -> Self {
        Self {
            stages: vec![
                Stage { batches: 1000, alpha_max: 2.0, n_fock: 21, batch_size: 16, pump: true },
                Stage { batches: 1000, alpha_max: 3.0, n_fock: 41, batch_size: 64, pump: false },
                Stage { batches: 2000, alpha_max: 4.0, n_fock: 61, batch_size: 256, pump: false },
            ],
        }
    }

    /// A single stage.
    pub fn single(stage: Stage) -> Self {
        Self { stages: vec![stage] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidArgument("curriculum has no stages".into()));
        }
        for (k, s) in self.stages.iter().enumerate() {
            if s.batch_size == 0 || s.n_fock < 2 || !(s.alpha_max > 0.0 && s.alpha_max.is_finite()) {
                return Err(Error::InvalidArgument(format!("stage {k}: {s:?}")));
            }
            if s.pump && k > 0 {
                return Err(Error::InvalidArgument(format!("stage {k}: the pump is only allowed in the first stage")));
            }
        }
        for (k, w) in self.stages.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            if b.alpha_max < a.alpha_max || b.n_fock < a.n_fock || b.batch_size < a.batch_size {
                return Err(Error::InvalidArgument(format!(
                    "stage {} shrinks the task range, truncation or batch size",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    pub fn total_batches(&self) -> usize {
        self.stages.iter().map(|s| s.batches).sum()
    }

    pub fn max_alpha(&self) -> f64 {
        self.stages.iter().map(|s| s.alpha_max).fold(0.0, f64::max)
    }
}

/// Initial Adam step size for training.
pub const DEFAULT_LEARNING_RATE: f64 = 3e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub schedule: CurriculumSchedule,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Learning-rate factor applied at each stage boundary.
    pub lr_decay: f64,
    pub output_scale: f64,
    pub edge_extension: f64,
    pub mirror_alpha: bool,
    pub n_intervals: usize,
    pub params: SystemParams,
    /// Per-stage weights are written here when set.
    pub checkpoint_dir: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(schedule: CurriculumSchedule, seed: u64) -> Self {
        Self {
            schedule,
            seed,
            adam: AdamConfig {
                learning_rate: DEFAULT_LEARNING_RATE,
                ..Default::default()
            },
            lr_decay: 0.5,
            output_scale: DEFAULT_OUTPUT_SCALE,
            edge_extension: DEFAULT_EDGE_EXTENSION,
            mirror_alpha: false,
            n_intervals: TimeGrid::TRAINING_INTERVALS,
            params: SystemParams::default(),
            checkpoint_dir: None,
        }
    }

    /// Sampler covering the largest task range of the schedule; fixes the
    /// input normalization for the whole run.
    pub fn reference_sampler(&self) -> Result<TaskSampler> {
        TaskSampler::new(self.schedule.max_alpha(), self.edge_extension, self.mirror_alpha)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub batch: usize,
    pub mean_loss: f64,
    pub alpha_max: f64,
    pub n_fock: usize,
    pub batch_size: usize,
    pub pump_flag: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<TrainingRecord>,
}

impl TrainingLog {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mean_loss).collect()
    }

    /// Mean batch loss over `range`, clipped to the log.
    pub fn window_mean(&self, range: std::ops::Range<usize>) -> f64 {
        let end = range.end.min(self.records.len());
        let start = range.start.min(end);
        let w = &self.records[start..end];
        w.iter().map(|r| r.mean_loss).sum::<f64>() / w.len().max(1) as f64
    }

    /// `1 − ⟨L⟩_late / ⟨L⟩_early`, with `window`-batch means starting at
    /// batch `start` and ending just before batch `end`.
    pub fn relative_decrease(&self, start: usize, end: usize, window: usize) -> f64 {
        let end = end.min(self.records.len());
        let first = self.window_mean(start..start + window);
        let last = self.window_mean(end.saturating_sub(window)..end);
        1.0 - last / first
    }

    /// True when the loss drops by no more than `min_decrease` (relative)
    /// over the `span` batches after `start`: the stagnation seen when the
    /// controller never learns to drive the qubit. `start` skips the
    /// initial fall of an untrained network.
    pub fn stagnates(&self, start: usize, span: usize, window: usize, min_decrease: f64) -> bool {
        self.records.len() >= start + span && self.relative_decrease(start, start + span, window) <= min_decrease
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let records = r.deserialize().collect::<std::result::Result<Vec<TrainingRecord>, _>>()?;
        Ok(Self { records })
    }
}

/// Trains a freshly initialised controller.
pub fn train(config: &TrainConfig) -> Result<(Controller, TrainingLog)> {
    let sampler = config.reference_sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let controller = Controller::new(&sampler, config.output_scale, &mut rng)?;
    train_from(controller, config, |_| {})
}

/// Runs the schedule starting from `controller`, calling `progress` after
/// every batch. Task draws come from a stream seeded by `config.seed`.
///
/// On a failed batch the error is returned; checkpoints already written
/// stay on disk.
pub fn train_from<F: FnMut(&TrainingRecord)>(
    mut controller: Controller,
    config: &TrainConfig,
    mut progress: F,
) -> Result<(Controller, TrainingLog)> {
    config.schedule.validate()?;
    if !(config.lr_decay > 0.0 && config.lr_decay <= 1.0) {
        return Err(Error::InvalidArgument(format!("learning-rate decay {}", config.lr_decay)));
    }
    if let Some(dir) = &config.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    // Separate stream from the initialisation so resumed runs draw the same tasks.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7461_736b);
    let grid = TimeGrid::new(config.n_intervals, config.params.duration)?;
    let mut adam = AdamState::new(controller.n_params(), config.adam);
    let mut log = TrainingLog::default();
    let mut batch_index = 0;
    for (k, stage) in config.schedule.stages.iter().enumerate() {
        adam.config.learning_rate = config.adam.learning_rate * config.lr_decay.powi(k as i32);
        let sampler = TaskSampler::new(stage.alpha_max, config.edge_extension, config.mirror_alpha)?;
        let sim = Simulator::new(
            HilbertConfig::new(stage.n_fock)?,
            grid,
            config.params.clone().with_pump(stage.pump),
        )?;
        for _ in 0..stage.batches {
            let batch = sampler.sample_batch(&mut rng, stage.batch_size);
            let result = loss_and_gradient(&controller, &sim, &batch).map_err(|e| match e {
                Error::NonFinite { context } => Error::NonFinite {
                    context: format!("{context} at batch {batch_index}"),
                },
                other => other,
            })?;
            adam_step(&mut adam, controller.mlp.params_mut(), &result.grad);
            let record = TrainingRecord {
                batch: batch_index,
                mean_loss: result.mean_loss,
                alpha_max: stage.alpha_max,
                n_fock: stage.n_fock,
                batch_size: stage.batch_size,
                pump_flag: stage.pump,
            };
            progress(&record);
            log.records.push(record);
            batch_index += 1;
        }
        if let Some(dir) = &config.checkpoint_dir {
            controller.save(&dir.join(format!("stage{}.json", k + 1)), config.seed, k + 1)?;
        }
    }
    Ok((controller, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64, batches: usize) -> TrainConfig {
        let stage = Stage { batches, alpha_max: 1.0, n_fock: 12, batch_size: 2, pump: true };
        TrainConfig::new(CurriculumSchedule::single(stage), seed)
    }

    #[test]
    fn schedules_validate() {
        CurriculumSchedule::desk().validate().unwrap();
        CurriculumSchedule::full().validate().unwrap();
        let mut bad = CurriculumSchedule::desk();
        bad.stages[2].pump = true;
        assert!(bad.validate().is_err());
        let mut shrink = CurriculumSchedule::desk();
        shrink.stages[1].n_fock = 10;
        assert!(shrink.validate().is_err());
        assert!(CurriculumSchedule { stages: vec![] }.validate().is_err());
    }

    #[test]
    fn same_seed_same_log() {
        let (_, a) = train(&tiny(3, 4)).unwrap();
        let (_, b) = train(&tiny(3, 4)).unwrap();
        assert_eq!(a, b);
        let (_, c) = train(&tiny(4, 4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn log_round_trips_through_csv() {
        let (_, log) = train(&tiny(5, 3)).unwrap();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("batch,mean_loss,alpha_max,n_fock,batch_size,pump_flag"));
        assert_eq!(TrainingLog::read_csv(buf.as_slice()).unwrap(), log);
    }

    #[test]
    fn checkpoints_written_per_stage() {
        let dir = std::env::temp_dir().join(format!("catpulse-ckpt-{}", std::process::id()));
        let mut cfg = tiny(6, 2);
        cfg.schedule.stages.push(Stage { batches: 1, alpha_max: 1.0, n_fock: 13, batch_size: 2, pump: false });
        cfg.checkpoint_dir = Some(dir.clone());
        let (trained, _) = train(&cfg).unwrap();
        let (c2, f2) = Controller::load(&dir.join("stage2.json")).unwrap();
        assert!(dir.join("stage1.json").exists());
        assert_eq!(c2, trained);
        assert_eq!(f2.stage, 2);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn short_run_lowers_loss() {
        let mut cfg = tiny(7, 60);
        cfg.adam.learning_rate = 3e-3;
        let (_, log) = train(&cfg).unwrap();
        assert!(log.window_mean(50..60) < log.window_mean(0..10));
    }

    fn synthetic(losses: impl Iterator<Item = f64>) -> TrainingLog {
        TrainingLog {
            records: losses
                .enumerate()
                .map(|(batch, mean_loss)| TrainingRecord {
                    batch,
                    mean_loss,
                    alpha_max: 2.0,
                    n_fock: 21,
                    batch_size: 16,
                    pump_flag: false,
                })
                .collect(),
        }
    }

    #[test]
    fn plateau_and_decrease_metrics() {
        // Fast initial fall, then flat: stagnation.
        let flat = synthetic((0..1000).map(|b| 0.46 + 0.5 * (-(b as f64) / 10.0).exp()));
        assert!(flat.stagnates(100, 500, 50, 0.1));
        assert!(flat.relative_decrease(0, 1000, 50) > 0.1);
        // Steady progress.
        let falling = synthetic((0..1000).map(|b| (-(b as f64) / 400.0).exp()));
        assert!(!falling.stagnates(100, 500, 50, 0.1));
        let d = falling.relative_decrease(0, 1000, 1);
        assert!((d - (1.0 - (-999.0f64 / 400.0).exp())).abs() < 1e-12);
        assert!(!falling.stagnates(600, 500, 50, 0.1), "too short a log never stagnates");
    }
}
