//! The `ridekit` command line.
//!
//! Results go to standard output as JSON (and to files under `--out`);
//! diagnostics go to standard error. Exit status is 0 on success, 1 for
//! usage problems (bad flags, missing inputs, malformed config) and 2 when a
//! computation rejects its inputs or fails.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ridekit_core::disc::{verify_population, PopulationConfig};
use ridekit_core::losses::{bce, boundary_loss, deep_seg_loss, infonce, iou_loss, masked_pool, total_loss};
use ridekit_core::pipeline::{gap_maps_for, segment, SegMode};
use ridekit_core::retinex::{decompose, init_decomposition, me_loss, retinex_loss};
use ridekit_core::synth::{generate, MaskShape};
use ridekit_core::ImageGrid;
use serde::Serialize;

use crate::config::{
    load_config, DecomposeConfig, EvalLossConfig, LossRequest, SegmentConfig, SweepConfig, SynthConfig, TheoremConfig,
};
use crate::error::{Error, Result};
use crate::manifest::RunManifest;
use crate::raster::{load_mask, load_raster, save_mask, save_raster};
use crate::report::{
    DecomposeOutput, EvalLossOutput, GapOutput, MapStats, SegmentOutput, SynthOutput, TheoremOutput, TheoremRow,
};
use crate::sweep::{run_sweep, to_csv, to_svg};

pub const LOG_ENV: &str = "RIDEKIT_LOG";

#[derive(Debug, Parser)]
#[command(name = "ridekit", version, about = "Retinex decomposition and discriminability-gap analysis")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON parameter file; explicit flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split an image into illumination and reflectance.
    Decompose(DecomposeArgs),
    /// Generate a two-region sample with known components.
    Synth(SynthArgs),
    /// Check the discriminability bound on random population configurations.
    ValidateTheorem(TheoremArgs),
    /// Contrast, gap and attention maps of an image.
    Gap(GapArgs),
    /// Threshold segmentation of an image.
    Segment(SegmentArgs),
    /// Gap-method gain across illumination/reflectance cosines.
    Sweep(SweepArgs),
    /// Evaluate one loss from a JSON request.
    EvalLoss(EvalLossArgs),
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub history: Option<usize>,
    #[arg(long)]
    pub w_rec: Option<f64>,
    #[arg(long)]
    pub w_smooth_l: Option<f64>,
    #[arg(long)]
    pub w_tv_r: Option<f64>,
    #[arg(long)]
    pub w_me: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ShapeArg {
    Disk,
    HalfPlane,
    Blob,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Target cosine between the illumination and reflectance steps.
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, value_enum)]
    pub shape: Option<ShapeArg>,
}

#[derive(Debug, Args)]
pub struct TheoremArgs {
    /// Number of random configurations.
    #[arg(long)]
    pub sweeps: Option<usize>,
    #[arg(long)]
    pub eps_r: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GapArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Odd contrast window size.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    CompositeThreshold,
    GapThreshold,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Ground-truth mask; enables metrics.
    #[arg(long, value_name = "FILE")]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated, strictly increasing cosines.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub targets: Option<Vec<f64>>,
    #[arg(long)]
    pub per_target: Option<usize>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Write a scatter plot of the rows as SVG.
    #[arg(long, value_name = "FILE")]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalLossArgs {
    /// JSON loss request; overrides `request` from the config file.
    #[arg(long = "in", value_name = "FILE")]
    pub input: Option<PathBuf>,
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `argv` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::Decompose(a) => cmd_decompose(c, a),
        Command::Synth(a) => cmd_synth(c, a),
        Command::ValidateTheorem(a) => cmd_theorem(c, a),
        Command::Gap(a) => cmd_gap(c, a),
        Command::Segment(a) => cmd_segment(c, a),
        Command::Sweep(a) => cmd_sweep(c, a),
        Command::EvalLoss(a) => cmd_eval_loss(c, a),
    }
}

fn out_dir(common: &Common, command: &str) -> Result<PathBuf> {
    let dir = common.out.clone().ok_or_else(|| Error::Usage(format!("{command} requires --out DIR")))?;
    fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
    Ok(dir)
}

fn optional_out_dir(common: &Common) -> Result<Option<PathBuf>> {
    match &common.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(Error::io(dir))?;
            Ok(Some(dir.clone()))
        }
        None => Ok(None),
    }
}

fn emit<T: Serialize>(doc: &T, dir: Option<&Path>, file: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(doc).expect("reports serialize to JSON");
    if let Some(dir) = dir {
        let path = dir.join(file);
        fs::write(&path, format!("{text}\n")).map_err(Error::io(path))?;
    }
    println!("{text}");
    Ok(())
}

/// Saves each raster under `dir` and returns the file names.
fn save_all(dir: &Path, grids: &[(&str, &ImageGrid)]) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for (name, grid) in grids {
        save_raster(&dir.join(name), grid)?;
        names.push(name.to_string());
    }
    Ok(names)
}

fn override_opt<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn cmd_synth(common: &Common, a: SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = load_config(common.config.as_deref())?;
    override_opt(&mut cfg.spec.seed, common.seed);
    override_opt(&mut cfg.spec.height, a.height);
    override_opt(&mut cfg.spec.width, a.width);
    if let Some(shape) = a.shape {
        cfg.spec.mask_shape = match shape {
            ShapeArg::Disk => MaskShape::CenteredDisk,
            ShapeArg::HalfPlane => MaskShape::HalfPlane,
            ShapeArg::Blob => MaskShape::Blob { seed: cfg.spec.seed },
        };
    }
    if a.rho.is_some() {
        cfg.rho = a.rho;
    }
    let dir = out_dir(common, "synth")?;
    let spec = match cfg.rho {
        Some(rho) => cfg.spec.with_rho(rho)?,
        None => cfg.spec.clone(),
    };
    log::info!("generating {}x{} sample, seed {}", spec.height, spec.width, spec.seed);
    let sample = generate(&spec)?;
    let mut files = save_all(
        &dir,
        &[("I.raw", &sample.image), ("I.png", &sample.image), ("L.raw", &sample.l_gt), ("R.raw", &sample.r_gt)],
    )?;
    for name in ["mask.raw", "mask.png"] {
        save_mask(&dir.join(name), &sample.mask)?;
        files.push(name.into());
    }
    RunManifest::new("synth", &cfg, spec.seed).write(&dir)?;
    let doc = SynthOutput { theorem: TheoremRow::new(0, &sample.report), spec, achieved: sample.achieved, files };
    emit(&doc, Some(&dir), "synth.json")
}

fn cmd_decompose(common: &Common, a: DecomposeArgs) -> Result<()> {
    let mut cfg: DecomposeConfig = load_config(common.config.as_deref())?;
    override_opt(&mut cfg.solver.seed, common.seed);
    override_opt(&mut cfg.solver.max_iters, a.max_iters);
    override_opt(&mut cfg.solver.step_size, a.step_size);
    override_opt(&mut cfg.solver.history, a.history);
    override_opt(&mut cfg.weights.w_rec, a.w_rec);
    override_opt(&mut cfg.weights.w_smooth_l, a.w_smooth_l);
    override_opt(&mut cfg.weights.w_tv_r, a.w_tv_r);
    override_opt(&mut cfg.weights.w_me, a.w_me);
    let img = load_raster(&a.input)?;
    let dir = out_dir(common, "decompose")?;
    let mut manifest = RunManifest::new("decompose", &cfg, cfg.solver.seed);
    manifest.add_input(&a.input)?;

    let init = init_decomposition(&img)?;
    let init_loss = retinex_loss(&img, &init.l, &init.r, &cfg.weights)?;
    let pair = decompose(&img, &cfg.weights, &cfg.solver)?;
    log::info!("decompose: {} iterations, loss {:.6e}", pair.iterations, pair.loss.total);
    let init_me = me_loss(&init.l, &init.r)?;
    let files = save_all(&dir, &[("L.raw", &pair.l), ("R.raw", &pair.r), ("R.png", &pair.r)])?;
    manifest.write(&dir)?;
    let doc = DecomposeOutput {
        input: a.input.display().to_string(),
        init_loss,
        loss: pair.loss,
        iterations: pair.iterations,
        evaluations: pair.evaluations,
        converged: pair.converged,
        reconstruction_error: pair.mean_abs_reconstruction_error(&img),
        me_ratio: (init_me > 0.0).then(|| pair.loss.me / init_me),
        files,
    };
    emit(&doc, Some(&dir), "loss.json")
}

fn cmd_theorem(common: &Common, a: TheoremArgs) -> Result<()> {
    let mut cfg: TheoremConfig = load_config(common.config.as_deref())?;
    override_opt(&mut cfg.seed, common.seed);
    override_opt(&mut cfg.sweeps, a.sweeps);
    override_opt(&mut cfg.eps_r, a.eps_r);
    let dir = optional_out_dir(common)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rows = (0..cfg.sweeps)
        .map(|i| Ok(TheoremRow::new(i, &verify_population(&PopulationConfig::random(&mut rng), cfg.eps_r)?)))
        .collect::<Result<Vec<_>>>()?;
    let failures = rows.iter().filter(|r| !r.holds).count();
    let doc = TheoremOutput { count: rows.len(), all_hold: failures == 0, eps_r: cfg.eps_r, rows };
    if let Some(dir) = &dir {
        RunManifest::new("validate-theorem", &cfg, cfg.seed).write(dir)?;
    }
    emit(&doc, dir.as_deref(), "theorem.json")?;
    if failures > 0 {
        return Err(ridekit_core::Error::Contract(format!("bound violated in {failures} configurations")).into());
    }
    Ok(())
}

fn seg_overrides(
    cfg: &mut ridekit_core::pipeline::SegConfig,
    seed: Option<u64>,
    window: Option<usize>,
    iters: Option<usize>,
) {
    override_opt(&mut cfg.solver.seed, seed);
    override_opt(&mut cfg.dga.window, window);
    override_opt(&mut cfg.solver.max_iters, iters);
}

fn cmd_gap(common: &Common, a: GapArgs) -> Result<()> {
    let mut cfg: ridekit_core::pipeline::SegConfig = load_config(common.config.as_deref())?;
    seg_overrides(&mut cfg, common.seed, a.window, a.max_iters);
    let img = load_raster(&a.input)?;
    let dir = out_dir(common, "gap")?;
    let mut manifest = RunManifest::new("gap", &cfg, cfg.solver.seed);
    manifest.add_input(&a.input)?;
    let pair = decompose(&img, &cfg.weights, &cfg.solver)?;
    let maps = gap_maps_for(&img, &pair, &cfg)?;
    let files = save_all(
        &dir,
        &[
            ("L.raw", &pair.l),
            ("R.raw", &pair.r),
            ("d_i.raw", &maps.d_i),
            ("delta_l.raw", &maps.delta_l),
            ("delta_r.raw", &maps.delta_r),
            ("alpha_l.raw", &maps.alpha_l),
            ("alpha_r.raw", &maps.alpha_r),
        ],
    )?;
    manifest.write(&dir)?;
    let doc = GapOutput {
        input: a.input.display().to_string(),
        window: cfg.dga.window,
        loss: pair.loss,
        delta_l: MapStats::of(&maps.delta_l),
        delta_r: MapStats::of(&maps.delta_r),
        alpha_l: MapStats::of(&maps.alpha_l),
        alpha_r: MapStats::of(&maps.alpha_r),
        files,
    };
    emit(&doc, Some(&dir), "gap.json")
}

fn cmd_segment(common: &Common, a: SegmentArgs) -> Result<()> {
    let mut cfg: SegmentConfig = load_config(common.config.as_deref())?;
    seg_overrides(&mut cfg.seg, common.seed, a.window, a.max_iters);
    if let Some(mode) = a.mode {
        cfg.mode = match mode {
            ModeArg::CompositeThreshold => SegMode::CompositeThreshold,
            ModeArg::GapThreshold => SegMode::GapThreshold,
        };
    }
    let img = load_raster(&a.input)?;
    let gt = a.gt.as_deref().map(load_mask).transpose()?;
    let dir = optional_out_dir(common)?;
    let result = segment(&img, cfg.mode, &cfg.seg, gt.as_ref())?;
    let mut files = Vec::new();
    if let Some(dir) = &dir {
        let mut manifest = RunManifest::new("segment", &cfg, cfg.seg.solver.seed);
        manifest.add_input(&a.input)?;
        if let Some(gt) = &a.gt {
            manifest.add_input(gt)?;
        }
        for name in ["mask.raw", "mask.png"] {
            save_mask(&dir.join(name), &result.predicted)?;
            files.push(name.to_string());
        }
        manifest.write(dir)?;
    }
    let doc = SegmentOutput {
        input: a.input.display().to_string(),
        method: result.method,
        threshold_used: result.threshold_used,
        foreground_pixels: result.predicted.foreground_count(),
        metrics: result.metrics,
        files,
    };
    emit(&doc, dir.as_deref(), "segment.json")
}

fn cmd_sweep(common: &Common, a: SweepArgs) -> Result<()> {
    let mut cfg: SweepConfig = load_config(common.config.as_deref())?;
    override_opt(&mut cfg.base.seed, common.seed);
    override_opt(&mut cfg.targets, a.targets);
    override_opt(&mut cfg.per_target, a.per_target);
    override_opt(&mut cfg.jobs, a.jobs);
    override_opt(&mut cfg.base.height, a.height);
    override_opt(&mut cfg.base.width, a.width);
    override_opt(&mut cfg.seg.solver.max_iters, a.max_iters);
    let dir = optional_out_dir(common)?;
    log::info!("sweep: {} targets x {} samples on {} workers", cfg.targets.len(), cfg.per_target, cfg.jobs);
    let result = run_sweep(&cfg.base, &cfg.targets, cfg.per_target, &cfg.seg, cfg.jobs)?;
    if let Some(dir) = &dir {
        let path = dir.join("sweep.csv");
        fs::write(&path, to_csv(&result)).map_err(Error::io(path))?;
        RunManifest::new("sweep", &cfg, cfg.base.seed).write(dir)?;
    }
    if let Some(plot) = &a.plot {
        fs::write(plot, to_svg(&result)).map_err(Error::io(plot))?;
    }
    emit(&result, dir.as_deref(), "sweep.json")
}

fn cmd_eval_loss(common: &Common, a: EvalLossArgs) -> Result<()> {
    let mut cfg: EvalLossConfig = load_config(common.config.as_deref())?;
    if let Some(path) = &a.input {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        let req =
            serde_json::from_str(&text).map_err(|e| Error::Config { path: path.clone(), reason: e.to_string() })?;
        cfg.request = Some(req);
    }
    let req = cfg
        .request
        .clone()
        .ok_or_else(|| Error::Usage("eval-loss needs --in FILE or a config with `request`".into()))?;
    let dir = optional_out_dir(common)?;
    let grid = |p: &Path| load_raster(p);
    let mut doc = EvalLossOutput { kind: req.name(), value: None, retinex: None, pooled: None, empty: None };
    match &req {
        LossRequest::Bce { pred, target } => doc.value = Some(bce(&grid(pred)?, &grid(target)?)?),
        LossRequest::Iou { pred, target } => doc.value = Some(iou_loss(&grid(pred)?, &grid(target)?)?),
        LossRequest::Boundary { boundary, refl_boundary, gt } => {
            doc.value = Some(boundary_loss(&grid(boundary)?, &grid(refl_boundary)?, &grid(gt)?)?)
        }
        LossRequest::DeepSeg { preds, gts } => {
            let preds = preds.iter().map(|p| grid(p)).collect::<Result<Vec<_>>>()?;
            let gts = gts.iter().map(|p| grid(p)).collect::<Result<Vec<_>>>()?;
            doc.value = Some(deep_seg_loss(&preds, &gts)?);
        }
        LossRequest::MaskedPool { features, mask } => {
            let pooled = masked_pool(&grid(features)?, &grid(mask)?)?;
            doc.empty = Some(pooled.empty);
            doc.pooled = Some(pooled.vector);
        }
        LossRequest::Infonce(batch) => doc.value = Some(infonce(batch)?),
        LossRequest::Total(parts) => doc.value = Some(total_loss(parts)),
        LossRequest::Retinex { image, l, r, weights } => {
            let b = retinex_loss(&grid(image)?, &grid(l)?, &grid(r)?, weights)?;
            doc.value = Some(b.total);
            doc.retinex = Some(b);
        }
    }
    if let Some(dir) = &dir {
        let mut manifest = RunManifest::new("eval-loss", &cfg, common.seed.unwrap_or(0));
        if let Some(path) = &a.input {
            manifest.add_input(path)?;
        }
        for p in req.raster_inputs() {
            manifest.add_input(p)?;
        }
        manifest.write(dir)?;
    }
    emit(&doc, dir.as_deref(), "eval-loss.json")
}
