//! Batch command-line entry points: property suite, toy training,
//! sampling, trajectory tracking, sequence evaluation, normalization.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use tempo4d::error::{Error, Result};
use tempo4d::flowmatch::{
    decode_sequence, euler_sample, load_checkpoint, save_checkpoint, smoothed_endpoints,
    synth_sequence, train_demo, write_loss_csv, MotionParams, StreamingField, ToyDiTConfig,
    TrainConfig, WindowOverride,
};
use tempo4d::meshio::{
    denormalize_sequence, load_sequence, normalize_sequence, save_sequence, Centering,
};
use tempo4d::metrics::{evaluate_sequences, MetricParams};
use tempo4d::pipeline::default_dims;
use tempo4d::trajectory::{optimize_trajectory, read_mask, CameraParams, MaskImage, TrackOptions};

#[derive(Parser)]
#[command(name = "tempo4d", version, about = "Sliding-window temporal 4D toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed for every random choice in the run.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; the resolved configuration is persisted there.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file with defaults (flags take precedence).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the property suite and report pass/fail per property.
    Check {
        #[command(flatten)]
        common: Common,
        /// Include the training-based statistical checks (slow).
        #[arg(long)]
        full: bool,
    },
    /// Evaluate a predicted mesh-sequence directory against ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Surface points sampled per frame.
        #[arg(long)]
        points: Option<usize>,
        /// F-score distance threshold.
        #[arg(long)]
        tau: Option<f64>,
        /// Occupancy grid resolution per axis.
        #[arg(long)]
        grid: Option<usize>,
        /// Occupancy smoothing constant.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Recover per-frame translations from silhouette masks.
    Track {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        meshes: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        focal: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train the toy model on synthetic clips, then sample a sequence.
    DemoTrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Frames in the post-training sample.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Sample a mesh sequence of arbitrary length from a checkpoint.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        frames: usize,
        /// Window half-width override (applies to self and cross).
        #[arg(long)]
        window: Option<usize>,
        /// Euler integration steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Normalize a mesh sequence into [-1, 1]^3.
    Normalize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        pattern: Option<String>,
        #[arg(long)]
        rest_frame: Option<usize>,
    },
}

/// Optional values loadable from `--config` JSON; flags take precedence.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct FileConfig {
    seed: Option<u64>,
    points: Option<usize>,
    tau: Option<f64>,
    grid: Option<usize>,
    eps: Option<f64>,
    focal: Option<f64>,
    steps: Option<usize>,
    lr: Option<f64>,
    sigma: Option<f64>,
    samples: Option<usize>,
    frames: Option<usize>,
    window: Option<usize>,
    pattern: Option<String>,
    rest_frame: Option<usize>,
}

fn load_file_config(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>, default: T) -> T {
    flag.clone().or_else(|| file.clone()).unwrap_or(default)
}

fn persist_config<T: Serialize>(out: &Path, config: &T) -> Result<()> {
    fs::create_dir_all(out)?;
    let json = serde_json::to_string_pretty(config)?;
    fs::write(out.join("config.json"), json)?;
    Ok(())
}

fn require_dir(path: &Path, what: &str) -> std::result::Result<(), String> {
    if !path.is_dir() {
        return Err(format!("{what} directory {} does not exist", path.display()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(DispatchError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(DispatchError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

enum DispatchError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for DispatchError {
    fn from(e: Error) -> Self {
        DispatchError::Runtime(e)
    }
}

fn dispatch(cli: Cli) -> std::result::Result<(), DispatchError> {
    match cli.command {
        Command::Check { common, full } => cmd_check(common, full),
        Command::Eval {
            common,
            pred,
            gt,
            points,
            tau,
            grid,
            eps,
        } => cmd_eval(common, pred, gt, points, tau, grid, eps),
        Command::Track {
            common,
            meshes,
            masks,
            focal,
            steps,
            lr,
            sigma,
            samples,
        } => cmd_track(common, meshes, masks, focal, steps, lr, sigma, samples),
        Command::DemoTrain {
            common,
            steps,
            lr,
            frames,
        } => cmd_demo_train(common, steps, lr, frames),
        Command::Generate {
            common,
            checkpoint,
            frames,
            window,
            steps,
        } => cmd_generate(common, checkpoint, frames, window, steps),
        Command::Normalize {
            common,
            input,
            pattern,
            rest_frame,
        } => cmd_normalize(common, input, pattern, rest_frame),
    }
}

#[derive(Serialize)]
struct CheckRun {
    command: &'static str,
    seed: u64,
    full: bool,
}

fn cmd_check(common: Common, full: bool) -> std::result::Result<(), DispatchError> {
    let file = load_file_config(&common.config)?;
    let seed = pick(&common.seed, &file.seed, 0);
    if let Some(out) = &common.out {
        persist_config(
            out,
            &CheckRun {
                command: "check",
                seed,
                full,
            },
        )?;
    }
    let mut outcomes = tempo4d::checks::run_all(seed);
    if full {
        outcomes.push(tempo4d::checks::check_temporal_coherence(seed));
    }
    let mut failures = 0usize;
    for o in &outcomes {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("{tag} {} — {}", o.name, o.detail);
        if !o.passed {
            failures += 1;
        }
    }
    println!("{} properties, {failures} failed", outcomes.len());
    if failures > 0 {
        return Err(DispatchError::Runtime(Error::InvalidInput(format!(
            "{failures} properties failed"
        ))));
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalRun {
    command: &'static str,
    pred: PathBuf,
    gt: PathBuf,
    params: MetricParams,
}

fn cmd_eval(
    common: Common,
    pred: PathBuf,
    gt: PathBuf,
    points: Option<usize>,
    tau: Option<f64>,
    grid: Option<usize>,
    eps: Option<f64>,
) -> std::result::Result<(), DispatchError> {
    require_dir(&pred, "pred").map_err(DispatchError::Usage)?;
    require_dir(&gt, "gt").map_err(DispatchError::Usage)?;
    let file = load_file_config(&common.config)?;
    let defaults = MetricParams::default();
    let params = MetricParams {
        points_per_frame: pick(&points, &file.points, defaults.points_per_frame),
        tau: pick(&tau, &file.tau, defaults.tau),
        grid_resolution: pick(&grid, &file.grid, defaults.grid_resolution),
        epsilon: pick(&eps, &file.eps, defaults.epsilon),
        seed: pick(&common.seed, &file.seed, defaults.seed),
    };

    let pred_seq = load_sequence(&pred, "*.obj")?;
    let gt_seq = load_sequence(&gt, "*.obj")?;
    let report = evaluate_sequences(&pred_seq, &gt_seq, &params)?;

    if let Some(out) = &common.out {
        persist_config(
            out,
            &EvalRun {
                command: "eval",
                pred: pred.clone(),
                gt: gt.clone(),
                params: params.clone(),
            },
        )?;
        fs::write(
            out.join("report.json"),
            serde_json::to_string_pretty(&report).map_err(Error::from)?,
        )
        .map_err(Error::from)?;
    }
    println!("{}", report.table());
    Ok(())
}

#[derive(Serialize)]
struct TrackRun {
    command: &'static str,
    meshes: PathBuf,
    masks: PathBuf,
    camera: CameraParams,
    options: TrackOptions,
}

#[derive(Serialize)]
struct TrajectoryFile {
    frames: Vec<tempo4d::trajectory::FrameFit>,
    focal: f64,
    skipped_frames: Vec<usize>,
}

fn sorted_mask_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .map(|x| x == "png" || x == "pgm")
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    Ok(paths)
}

#[allow(clippy::too_many_arguments)]
fn cmd_track(
    common: Common,
    meshes: PathBuf,
    masks: PathBuf,
    focal: Option<f64>,
    steps: Option<usize>,
    lr: Option<f64>,
    sigma: Option<f64>,
    samples: Option<usize>,
) -> std::result::Result<(), DispatchError> {
    require_dir(&meshes, "mesh").map_err(DispatchError::Usage)?;
    require_dir(&masks, "mask").map_err(DispatchError::Usage)?;
    let file = load_file_config(&common.config)?;
    let defaults = TrackOptions::default();
    let options = TrackOptions {
        steps: pick(&steps, &file.steps, defaults.steps),
        lr: pick(&lr, &file.lr, defaults.lr),
        sigma: pick(&sigma, &file.sigma, defaults.sigma),
        samples: pick(&samples, &file.samples, defaults.samples),
        seed: pick(&common.seed, &file.seed, defaults.seed),
        ..defaults
    };

    let mesh_seq = load_sequence(&meshes, "*.obj")?;
    let mask_paths = sorted_mask_paths(&masks)?;
    if mask_paths.len() != mesh_seq.len() {
        let missing: Vec<usize> =
            (mask_paths.len().min(mesh_seq.len())..mesh_seq.len()).collect();
        return Err(DispatchError::Usage(format!(
            "{} masks for {} mesh frames; frames without masks: {missing:?}",
            mask_paths.len(),
            mesh_seq.len(),
        )));
    }
    let gt_masks: Vec<MaskImage> = mask_paths
        .iter()
        .map(|p| read_mask(p))
        .collect::<Result<_>>()?;
    let camera = CameraParams::centered(
        gt_masks[0].width(),
        gt_masks[0].height(),
        pick(&focal, &file.focal, 140.0),
    );

    let trajectory = optimize_trajectory(&mesh_seq, &gt_masks, &camera, &options)?;

    let active = trajectory.per_frame.len() - trajectory.skipped_frames.len();
    let mean_dice: f64 = trajectory
        .per_frame
        .iter()
        .filter(|f| !trajectory.skipped_frames.contains(&f.frame))
        .map(|f| f.dice_coefficient)
        .sum::<f64>()
        / active.max(1) as f64;

    if let Some(out) = &common.out {
        persist_config(
            out,
            &TrackRun {
                command: "track",
                meshes: meshes.clone(),
                masks: masks.clone(),
                camera: camera.clone(),
                options: options.clone(),
            },
        )?;
        let file = TrajectoryFile {
            frames: trajectory.per_frame.clone(),
            focal: trajectory.focal,
            skipped_frames: trajectory.skipped_frames.clone(),
        };
        fs::write(
            out.join("trajectory.json"),
            serde_json::to_string_pretty(&file).map_err(Error::from)?,
        )
        .map_err(Error::from)?;
    }
    println!("frames    {}", trajectory.per_frame.len());
    println!("focal     {:.4}", trajectory.focal);
    println!("mean dice {mean_dice:.4}");
    Ok(())
}

#[derive(Serialize)]
struct DemoTrainRun {
    command: &'static str,
    model: ToyDiTConfig,
    train: TrainConfig,
    sample_frames: usize,
    seed: u64,
}

fn cmd_demo_train(
    common: Common,
    steps: Option<usize>,
    lr: Option<f64>,
    frames: Option<usize>,
) -> std::result::Result<(), DispatchError> {
    let out = common
        .out
        .clone()
        .ok_or_else(|| DispatchError::Usage("demo-train needs --out".into()))?;
    let file = load_file_config(&common.config)?;
    let seed = pick(&common.seed, &file.seed, 0);
    let sample_frames = pick(&frames, &file.frames, 48);
    let model_cfg = ToyDiTConfig::default();
    let train_cfg = TrainConfig {
        steps: pick(&steps, &file.steps, 2000),
        lr: pick(&lr, &file.lr, 1e-3),
        seed: seed.wrapping_add(10),
        ..Default::default()
    };
    persist_config(
        &out,
        &DemoTrainRun {
            command: "demo-train",
            model: model_cfg.clone(),
            train: train_cfg.clone(),
            sample_frames,
            seed,
        },
    )?;

    let dataset = tempo4d::pipeline::default_dataset(seed, &model_cfg)?;
    let result = train_demo(model_cfg.clone(), &dataset, &train_cfg, seed.wrapping_add(20))?;
    save_checkpoint(&result.model, &out.join("checkpoint.t4d"))?;
    write_loss_csv(&result.loss_trace, &out.join("loss.csv"))?;
    let (head, tail) = smoothed_endpoints(&result.loss_trace, 50);
    println!("steps          {}", result.loss_trace.len());
    println!("smoothed first {head:.6}");
    println!("smoothed last  {tail:.6}");

    // Sample a fresh clip and decode it next to its ground truth.
    let dims = default_dims(&model_cfg);
    let eval = synth_sequence(
        seed.wrapping_add(500),
        sample_frames,
        &MotionParams::default(),
        &dims,
    )?;
    let latents = euler_sample(
        &result.model,
        &eval.conditions,
        model_cfg.latent_tokens,
        model_cfg.width,
        32,
        None,
        seed.wrapping_add(30),
        0,
    )?;
    let meshes = decode_sequence(&latents, &dims)?;
    save_sequence(&meshes, &out.join("generated"))?;
    save_sequence(&eval.meshes, &out.join("reference"))?;
    println!("generated      {} frames", meshes.len());
    Ok(())
}

#[derive(Serialize)]
struct GenerateRun {
    command: &'static str,
    checkpoint: PathBuf,
    frames: usize,
    window: Option<usize>,
    euler_steps: usize,
    seed: u64,
}

fn cmd_generate(
    common: Common,
    checkpoint: PathBuf,
    frames: usize,
    window: Option<usize>,
    steps: Option<usize>,
) -> std::result::Result<(), DispatchError> {
    if !checkpoint.is_file() {
        return Err(DispatchError::Usage(format!(
            "checkpoint {} does not exist",
            checkpoint.display()
        )));
    }
    let out = common
        .out
        .clone()
        .ok_or_else(|| DispatchError::Usage("generate needs --out".into()))?;
    let file = load_file_config(&common.config)?;
    let seed = pick(&common.seed, &file.seed, 0);
    let euler_steps = pick(&steps, &file.steps, 32);
    let window = window.or(file.window);

    let model = load_checkpoint(&checkpoint)?;
    let cfg = model.config().clone();
    persist_config(
        &out,
        &GenerateRun {
            command: "generate",
            checkpoint: checkpoint.clone(),
            frames,
            window,
            euler_steps,
            seed,
        },
    )?;

    let dims = default_dims(&cfg);
    let eval = synth_sequence(
        seed.wrapping_add(500),
        frames,
        &MotionParams::default(),
        &dims,
    )?;
    let field = StreamingField::new(&model);
    let windows = window.map(|w| WindowOverride {
        w_self: w,
        w_cross: w,
    });
    let latents = euler_sample(
        &field,
        &eval.conditions,
        cfg.latent_tokens,
        cfg.width,
        euler_steps,
        windows,
        seed.wrapping_add(30),
        0,
    )?;
    let stats = field.stats();
    let meshes = decode_sequence(&latents, &dims)?;
    save_sequence(&meshes, &out.join("generated"))?;
    println!("frames            {}", meshes.len());
    println!("peak cache frames {}", stats.peak_cache_frames);
    println!("peak cache keys   {}", stats.peak_cache_keys);
    Ok(())
}

#[derive(Serialize)]
struct NormalizeRun {
    command: &'static str,
    input: PathBuf,
    pattern: String,
    rest_frame: usize,
}

fn cmd_normalize(
    common: Common,
    input: PathBuf,
    pattern: Option<String>,
    rest_frame: Option<usize>,
) -> std::result::Result<(), DispatchError> {
    require_dir(&input, "input").map_err(DispatchError::Usage)?;
    let out = common
        .out
        .clone()
        .ok_or_else(|| DispatchError::Usage("normalize needs --out".into()))?;
    let file = load_file_config(&common.config)?;
    let pattern = pattern
        .or(file.pattern.clone())
        .unwrap_or_else(|| "*.obj".to_string());
    let rest = pick(&rest_frame, &file.rest_frame, 0);
    persist_config(
        &out,
        &NormalizeRun {
            command: "normalize",
            input: input.clone(),
            pattern: pattern.clone(),
            rest_frame: rest,
        },
    )?;

    let seq = load_sequence(&input, &pattern)?;
    let (normalized, record) = normalize_sequence(&seq, rest, Centering::BoundingBox)?;
    // Round-trip guard: the record must invert what was just applied.
    let back = denormalize_sequence(&normalized, &record)?;
    let mut max_err = 0.0f64;
    for (a, b) in back.frames().iter().zip(seq.frames()) {
        for (va, vb) in a.vertices().iter().zip(b.vertices()) {
            for c in 0..3 {
                max_err = max_err.max((va[c] - vb[c]).abs());
            }
        }
    }
    let written = save_sequence(&normalized, &out.join("normalized"))?;
    fs::write(
        out.join("normalization.json"),
        serde_json::to_string_pretty(&record).map_err(Error::from)?,
    )
    .map_err(Error::from)?;
    println!("frames          {written}");
    println!("rest frame      {rest}");
    println!("round-trip err  {max_err:.2e}");
    Ok(())
}
