use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context as _, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use catpulse::baseline::{self, hilbert_for_alpha, read_controls_csv, run_baseline, write_controls_csv};
use catpulse::controller::{fold_task, train_from, Controller, TrainingRecord};
use catpulse::dynamics::{
    decoherence_correction, propagate_controls, propagate_lindblad, propagate_lindblad_controls, LindbladOptions,
    PiecewiseControls, SystemParams, TimeGrid,
};
use catpulse::hilbert::{displaced_rows, overlap_fidelity, target_state, DensityMatrix, HilbertConfig, StateVector};
use catpulse::splines::BSplineBasis;
use catpulse::tomography::{
    error_budget, estimate_fidelity, heralding_probabilities, parity_time, read_samples_csv, simulate_contrast,
    simulate_outcomes, wigner_map, write_samples_csv, write_wigner_map_csv, ParityReadout, PreparedState, Readout,
    SamplingStrategy, TargetWigner, GRID_MARGIN, WIGNER_MAP_BINS,
};
use catpulse::C64;

use crate::config::{Preset, ReadoutKind, RunConfig};
use crate::manifest::Manifest;
use crate::{EvalMode, Strategy, TaskArgs};

/// Waveform sampling step, µs.
const WAVEFORM_DT: f64 = 0.001;

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub threads: usize,
}

impl Context {
    fn prepare(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let p = self.path(name);
        Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        serde_json::to_writer_pretty(self.create(name)?, value)?;
        Ok(())
    }

    fn finish(&self, command: &str, seed: u64, outputs: &[&str]) -> Result<()> {
        let mut m = Manifest::new(command, &self.cfg, seed, self.threads)?;
        m.outputs = outputs.iter().map(|s| s.to_string()).collect();
        m.write(&self.out)
    }

    fn params(&self) -> Result<SystemParams> {
        self.cfg.system.params()
    }
}

fn load_controller(path: &Path) -> Result<Controller> {
    let (c, _) = Controller::load(path).with_context(|| format!("loading weights {}", path.display()))?;
    Ok(c)
}

fn warn_if_outside(controller: &Controller, alpha: f64, phi: f64) {
    let f = fold_task(alpha, phi, controller.mirror_alpha);
    let x = controller.normalization.apply(f.alpha, f.phi);
    if x.iter().any(|v| v.abs() > 1.0 + 1e-9) {
        eprintln!("warning: (α, φ) = ({alpha}, {phi}) lies outside the trained range; extrapolating");
    }
}

pub fn train(ctx: Context, preset: Option<Preset>, resume: Option<PathBuf>) -> Result<()> {
    let mut cfg = ctx.cfg.clone();
    if let Some(p) = preset {
        cfg.curriculum.preset = p;
    }
    let ctx = Context { cfg, ..ctx };
    ctx.prepare()?;
    let mut tc = ctx.cfg.train_config()?;
    tc.checkpoint_dir = Some(ctx.path("checkpoints"));
    std::fs::create_dir_all(ctx.path("checkpoints"))?;
    let controller = match resume {
        Some(p) => load_controller(&p)?,
        None => {
            let sampler = tc.reference_sampler()?;
            let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
            Controller::new(&sampler, tc.output_scale, &mut rng)?
        }
    };
    let total = tc.schedule.total_batches();
    let start = Instant::now();
    let mut window = Vec::new();
    let (trained, log) = train_from(controller, &tc, |r: &TrainingRecord| {
        window.push(r.mean_loss);
        if (r.batch + 1) % 100 == 0 || r.batch + 1 == total {
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            eprintln!(
                "batch {:>5}/{total}  α_max {:.1}  n_fock {:>2}  mean loss {:.4}  {:.0} s",
                r.batch + 1,
                r.alpha_max,
                r.n_fock,
                mean,
                start.elapsed().as_secs_f64()
            );
            window.clear();
        }
    })?;
    trained.save(&ctx.path("weights.json"), tc.seed, tc.schedule.stages.len())?;
    log.write_csv(ctx.create("training_log.csv")?)?;
    ctx.finish("train", tc.seed, &["weights.json", "training_log.csv", "checkpoints/"])
}

#[derive(Serialize)]
struct GeneratedPulse {
    alpha: f64,
    phi: f64,
    /// Spline coefficients, rad/µs: Re ε_c, Im ε_c, Re ε_q, Im ε_q, nine each.
    coefficients: Vec<f64>,
    waveform: String,
}

pub fn generate(ctx: Context, weights: &Path, tasks: &TaskArgs) -> Result<()> {
    ctx.prepare()?;
    let controller = load_controller(weights)?;
    let params = ctx.params()?;
    let basis = BSplineBasis::standard(params.duration)?;
    let n = (params.duration / WAVEFORM_DT).round() as usize;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * params.duration / n as f64).collect();
    let sampled = basis.sample(&times)?;
    let start = Instant::now();
    let mut pulses = Vec::new();
    let mut waves = Vec::new();
    for (i, &(a, p)) in tasks.tasks().iter().enumerate() {
        warn_if_outside(&controller, a, p);
        let (c, w) = controller.generate_pulse(a, p, &sampled)?;
        let name = format!("waveform_{i:03}.csv");
        pulses.push(GeneratedPulse {
            alpha: a,
            phi: p,
            coefficients: c.to_flat(),
            waveform: name.clone(),
        });
        waves.push((name, w));
    }
    eprintln!("generated {} pulses in {:.3} s", pulses.len(), start.elapsed().as_secs_f64());
    for (name, w) in &waves {
        let mut out = csv::Writer::from_writer(ctx.create(name)?);
        out.write_record(["t_us", "re_eps_c_rad_per_us", "im_eps_c_rad_per_us", "re_eps_q_rad_per_us", "im_eps_q_rad_per_us"])?;
        for (j, t) in w.times().iter().enumerate() {
            let (c, q) = (w.eps_c(j), w.eps_q(j));
            out.write_record([t, &c.re, &c.im, &q.re, &q.im].map(|v| v.to_string()))?;
        }
        out.flush()?;
    }
    ctx.write_json("coefficients.json", &pulses)?;
    ctx.finish("generate", ctx.cfg.seeds.train, &["coefficients.json", "waveform_*.csv"])
}

#[derive(Serialize)]
struct Evaluation {
    alpha: f64,
    phi: f64,
    mode: String,
    n_fock: usize,
    fidelity: f64,
    /// Unitary overlap, for the Schrödinger and corrected modes.
    overlap: Option<f64>,
    /// Sum of first-order channel corrections, corrected mode only.
    correction: Option<f64>,
}

fn network_controls(controller: &Controller, alpha: f64, phi: f64, grid: &TimeGrid, params: &SystemParams) -> Result<PiecewiseControls> {
    let basis = BSplineBasis::standard(params.duration)?;
    let mid = basis.sample(&grid.midpoints())?;
    Ok(PiecewiseControls::from_coefficients(&controller.coefficients(alpha, phi)?, &mid, grid)?)
}

pub fn evaluate(
    ctx: Context,
    weights: Option<&Path>,
    controls: Option<&Path>,
    tasks: &TaskArgs,
    mode: EvalMode,
    n_fock: Option<usize>,
) -> Result<()> {
    ctx.prepare()?;
    let params = ctx.params()?;
    let channels = params.channels();
    let grid = TimeGrid::new(ctx.cfg.grid.testing_intervals, params.duration)?;
    let file_controls = match controls {
        Some(p) => Some(read_controls_csv(File::open(p).with_context(|| format!("opening {}", p.display()))?, params.duration)?),
        None => None,
    };
    let controller = weights.map(load_controller).transpose()?;
    let mut rows = Vec::new();
    for (alpha, phi) in tasks.tasks() {
        let cfg = match n_fock {
            Some(n) => HilbertConfig::new(n)?,
            None => hilbert_for_alpha(alpha)?,
        };
        let c = match (&controller, &file_controls) {
            (Some(ctl), _) => {
                warn_if_outside(ctl, alpha, phi);
                network_controls(ctl, alpha, phi, &grid, &params)?
            }
            (None, Some(c)) => c.clone(),
            (None, None) => bail!("pass --weights or --controls"),
        };
        let target = target_state(alpha, phi, cfg)?;
        let (fidelity, overlap, correction) = match mode {
            EvalMode::Lindblad => {
                let rho0 = DensityMatrix::from_pure(&StateVector::ground(cfg));
                let path = propagate_lindblad_controls(&rho0, &c, &channels, &params, LindbladOptions::default())?;
                (path.last().expect("initial state kept").expectation_pure(&target), None, None)
            }
            EvalMode::Schrodinger | EvalMode::Corrected => {
                let traj = propagate_controls(&StateVector::ground(cfg), &c, &params)?;
                let ov = overlap_fidelity(&target, traj.final_state());
                if mode == EvalMode::Corrected {
                    let dc = decoherence_correction(&traj, &channels).total;
                    (ov + dc, Some(ov), Some(dc))
                } else {
                    (ov, Some(ov), None)
                }
            }
        };
        println!("α = {alpha:.3}  φ = {phi:.3}  F = {fidelity:.5}");
        rows.push(Evaluation {
            alpha,
            phi,
            mode: format!("{mode:?}").to_lowercase(),
            n_fock: cfg.n_fock(),
            fidelity,
            overlap,
            correction,
        });
    }
    ctx.write_json("evaluation.json", &rows)?;
    ctx.finish("evaluate", ctx.cfg.seeds.train, &["evaluation.json"])
}

#[derive(Serialize)]
struct TomographyReport {
    alpha: f64,
    phi: f64,
    strategy: String,
    estimate: f64,
    stderr: f64,
    n_samples: usize,
    contrast: f64,
    /// `⟨T|ρ|T⟩` of the simulated preparation; absent on replay.
    prepared_fidelity: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn tomography(
    ctx: Context,
    weights: Option<&Path>,
    alpha: f64,
    phi: f64,
    strategy: Strategy,
    samples: Option<usize>,
    readout: Option<ReadoutKind>,
    replay: Option<&Path>,
    replay_contrast: f64,
) -> Result<()> {
    ctx.prepare()?;
    let target = TargetWigner::cat(alpha, phi)?;
    let l = alpha.abs() + GRID_MARGIN;
    let strat = match strategy {
        Strategy::Optimal => SamplingStrategy::optimal_for_cat(alpha, phi)?,
        Strategy::Uniform => SamplingStrategy::uniform(2.0 * l, 2.0 * l, None)?,
    };
    let seed = ctx.cfg.seeds.tomography;
    if let Some(p) = replay {
        let s = read_samples_csv(File::open(p).with_context(|| format!("opening {}", p.display()))?)?;
        let e = estimate_fidelity(&s, &target, &strat, replay_contrast)?;
        println!("F̃ = {:.5} ± {:.5}  ({} samples)", e.value, e.stderr, e.n_samples);
        ctx.write_json(
            "estimate.json",
            &TomographyReport {
                alpha,
                phi,
                strategy: e.strategy.clone(),
                estimate: e.value,
                stderr: e.stderr,
                n_samples: e.n_samples,
                contrast: e.contrast,
                prepared_fidelity: None,
            },
        )?;
        return ctx.finish("tomography", seed, &["estimate.json"]);
    }
    let Some(weights) = weights else { bail!("pass --weights or --replay") };
    let controller = load_controller(weights)?;
    warn_if_outside(&controller, alpha, phi);
    let params = ctx.params()?;
    let t = &ctx.cfg.tomography;
    let cfg = hilbert_for_alpha(alpha)?;
    let grid = TimeGrid::new(ctx.cfg.grid.testing_intervals, params.duration)?;
    let basis = BSplineBasis::standard(params.duration)?;
    let rho0 = DensityMatrix::thermal_cavity(cfg, 0, t.n_th)?;
    let coeffs = controller.coefficients(alpha, phi)?;
    let rho = propagate_lindblad(&rho0, &coeffs, &basis, &grid, &params.channels(), &params)?
        .pop()
        .expect("initial state kept");
    let prepared_fidelity = rho.expectation_pure(&target_state(alpha, phi, cfg)?);
    let readout = match readout.unwrap_or(t.readout) {
        ReadoutKind::Fast => Readout::Fast,
        ReadoutKind::Full => {
            let rows = displaced_rows(cfg.n_fock(), C64::new(l, l));
            Readout::Full(ParityReadout::new(params.chi, parity_time(params.chi), &params.channels(), rows)?)
        }
    };
    let model = t.model(readout);
    let n = samples.unwrap_or(t.samples);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let betas = strat.sample_betas(&mut rng, n)?;
    let shots = simulate_outcomes(&PreparedState::Mixed(rho), &betas, &model, seed)?;
    let contrast = simulate_contrast(&model, t.calibration_shots, seed.wrapping_add(1))?;
    let e = estimate_fidelity(&shots, &target, &strat, contrast)?;
    println!(
        "F̃ = {:.5} ± {:.5}  (prepared F = {:.5}, c̃ = {:.4}, {} samples)",
        e.value, e.stderr, prepared_fidelity, contrast, n
    );
    write_samples_csv(&shots, ctx.create("samples.csv")?)?;
    let map = wigner_map(&shots, l, WIGNER_MAP_BINS, contrast)?;
    write_wigner_map_csv(&map, ctx.create("wigner_map.csv")?)?;
    ctx.write_json(
        "estimate.json",
        &TomographyReport {
            alpha,
            phi,
            strategy: e.strategy.clone(),
            estimate: e.value,
            stderr: e.stderr,
            n_samples: e.n_samples,
            contrast,
            prepared_fidelity: Some(prepared_fidelity),
        },
    )?;
    ctx.finish("tomography", seed, &["samples.csv", "wigner_map.csv", "estimate.json"])
}

#[derive(Serialize)]
struct HeraldingReport {
    n_repeats: u32,
    threshold: u32,
    p_ground_shot: f64,
    p_excited_shot: f64,
    herald_given_ground: f64,
    herald_given_excited: f64,
}

pub fn heralding(ctx: Context) -> Result<()> {
    ctx.prepare()?;
    let h = ctx.cfg.tomography.heralding;
    let (g, e) = heralding_probabilities(&h)?;
    println!("P(herald | TLS ground) = {g:.6}");
    println!("P(herald | TLS excited) = {e:.6}");
    ctx.write_json(
        "heralding.json",
        &HeraldingReport {
            n_repeats: h.n_repeats,
            threshold: h.threshold,
            p_ground_shot: h.p0,
            p_excited_shot: h.p1,
            herald_given_ground: g,
            herald_given_excited: e,
        },
    )?;
    ctx.finish("heralding", ctx.cfg.seeds.tomography, &["heralding.json"])
}

pub fn budget(ctx: Context, weights: &Path, tasks: &TaskArgs) -> Result<()> {
    ctx.prepare()?;
    let controller = load_controller(weights)?;
    let params = ctx.params()?;
    let model = ctx.cfg.tomography.budget_model(ctx.cfg.grid.testing_intervals);
    let mut rows = Vec::new();
    for (alpha, phi) in tasks.tasks() {
        warn_if_outside(&controller, alpha, phi);
        let b = error_budget(alpha, phi, &controller.coefficients(alpha, phi)?, &params, hilbert_for_alpha(alpha)?, &model)?;
        println!(
            "α = {alpha:.3}  F = {:.4}  ΔF_th = {:+.4}  ΔF_dissip = {:+.4}  ΔF_ex = {:+.4}",
            b.fidelity, b.thermal, b.dissipation, b.excitation
        );
        rows.push(b);
    }
    let mut w = csv::Writer::from_writer(ctx.create("budget.csv")?);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    ctx.write_json("budget.json", &rows)?;
    ctx.finish("budget", ctx.cfg.seeds.tomography, &["budget.csv", "budget.json"])
}

#[derive(Serialize)]
struct GrapeReport {
    alpha: f64,
    phi: f64,
    fidelity: f64,
    seconds: f64,
    grape_loss_trace: Vec<f64>,
    krotov_fidelity_trace: Vec<f64>,
}

pub fn grape(ctx: Context, alpha: f64, phi: f64) -> Result<()> {
    ctx.prepare()?;
    let params = ctx.params()?;
    let bc = ctx.cfg.baseline_config();
    let run = run_baseline(alpha, phi, &bc, &params)?;
    println!(
        "α = {alpha:.3}  φ = {phi:.3}  F = {:.5}  ({} GRAPE, {} Krotov iterations, {:.1} s)",
        run.fidelity,
        run.grape_loss_trace.len() - 1,
        run.krotov_fidelity_trace.len() - 1,
        run.seconds
    );
    write_controls_csv(&run.controls, ctx.create("controls.csv")?)?;
    write_controls_csv(&run.smoothed, ctx.create("controls_smoothed.csv")?)?;
    ctx.write_json(
        "baseline.json",
        &GrapeReport {
            alpha,
            phi,
            fidelity: run.fidelity,
            seconds: run.seconds,
            grape_loss_trace: run.grape_loss_trace,
            krotov_fidelity_trace: run.krotov_fidelity_trace,
        },
    )?;
    ctx.finish("grape", bc.grape.seed, &["controls.csv", "controls_smoothed.csv", "baseline.json"])
}

pub fn benchmark(ctx: Context, weights: &Path, alphas: &[f64], phi: f64) -> Result<()> {
    ctx.prepare()?;
    let controller = load_controller(weights)?;
    let params = ctx.params()?;
    let bc = ctx.cfg.baseline_config();
    let tasks: Vec<(f64, f64)> = alphas.iter().map(|&a| (a, phi)).collect();
    let b = baseline::benchmark(&controller, &tasks, &bc, &params, |r| {
        println!(
            "α = {:.3}  NN F = {:.5}  GRAPE+Krotov F = {:.5}  gap {:+.4}  ({:.1} s)",
            r.alpha, r.nn_fidelity, r.baseline_fidelity, r.gap, r.baseline_seconds
        );
    })?;
    println!("network generation {:.2e} s for {} pulses; speedup {:.2e}", b.nn_seconds, tasks.len(), b.speedup);
    b.write_csv(ctx.create("benchmark.csv")?)?;
    ctx.write_json("benchmark.json", &b)?;
    ctx.finish("benchmark", bc.grape.seed, &["benchmark.csv", "benchmark.json"])
}
