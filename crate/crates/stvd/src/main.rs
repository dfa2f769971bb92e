//! Command-line pipeline: synthesize, train, denoise, evaluate, compare.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use stvd::error::Error;
use stvd::metrics;
use stvd::model::{load_checkpoint, ModelConfig};
use stvd::synth::{self, NoiseKind, SynthConfig};
use stvd::targets::TargetKind;
use stvd::trainer::{self, TrainConfig};
use stvd::{gradcheck, io};

#[derive(Parser)]
#[command(name = "stvd", version, about = "Self-supervised spatiotemporal video denoising")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic clean/noisy clip pair plus box annotations.
    Synth(SynthArgs),
    /// Train the denoiser on one or more clip directories.
    Train(TrainArgs),
    /// Denoise a clip with a trained checkpoint.
    Denoise(DenoiseArgs),
    /// Evaluate a clip: fbd, psnr, or detect.
    Eval(EvalArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Compare raw vs denoised clips on FBD (and PSNR/SSIM when clean
    /// frames are available).
    Compare(CompareArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory (receives clean/, noisy/, annotations.csv).
    #[arg(long)]
    out: PathBuf,
    /// Optional TOML config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    objects: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    speed: Option<f64>,
    /// Disc intensity delta; negative for dark objects.
    #[arg(long, allow_hyphen_values = true)]
    contrast: Option<f64>,
    #[arg(long)]
    drift: Option<f64>,
    #[arg(long, value_enum)]
    noise: Option<NoiseName>,
    /// Sigma for gaussian/speckle, amplitude for pink.
    #[arg(long)]
    noise_level: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseName {
    Gaussian,
    Speckle,
    Pink,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SynthFile {
    height: Option<usize>,
    width: Option<usize>,
    frames: Option<usize>,
    objects: Option<usize>,
    radius: Option<f64>,
    speed: Option<f64>,
    contrast: Option<f64>,
    drift: Option<f64>,
    noise: Option<String>,
    noise_level: Option<f64>,
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Clip directories (repeatable).
    #[arg(long = "data", required = true)]
    data: Vec<PathBuf>,
    /// Checkpoint output path; train_report.csv lands next to it.
    #[arg(long)]
    out: PathBuf,
    /// Optional TOML config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reconstruction target name.
    #[arg(long)]
    target: Option<String>,
    /// Window parameter for sigma / sum-mean targets.
    #[arg(long)]
    target_n: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    max_channels: Option<usize>,
    #[arg(long)]
    stages: Option<usize>,
    /// Temporal stride of the input frames (PFD targets override this
    /// with their own stride).
    #[arg(long)]
    stride: Option<usize>,
    /// Train on unclamped reconstruction targets.
    #[arg(long)]
    no_clamp_target: bool,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    target: Option<String>,
    target_n: Option<usize>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    seed: Option<u64>,
    base_channels: Option<usize>,
    max_channels: Option<usize>,
    spatial_stages: Option<usize>,
    stride_t: Option<usize>,
    clamp_target: Option<bool>,
    clamp_output: Option<bool>,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMode {
    Fbd,
    Psnr,
    Detect,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_enum)]
    mode: EvalMode,
    #[arg(long = "in")]
    input: PathBuf,
    /// Clean reference clip (psnr mode).
    #[arg(long)]
    clean: Option<PathBuf>,
    /// Annotation CSV (fbd and detect modes).
    #[arg(long)]
    ann: Option<PathBuf>,
    /// Report output path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = metrics::DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 6)]
    min_area: usize,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Deliberately corrupt one analytic gradient (test hook).
    #[arg(long, hide = true)]
    corrupt: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    raw: PathBuf,
    #[arg(long)]
    denoised: PathBuf,
    #[arg(long)]
    ann: PathBuf,
    #[arg(long)]
    clean: Option<PathBuf>,
    #[arg(long, default_value_t = metrics::DEFAULT_BINS)]
    bins: usize,
}

enum AppError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for AppError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => AppError::Usage(msg),
            other => AppError::Runtime(other),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Denoise(args) => cmd_denoise(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        AppError::Usage(format!("cannot read config {}: {e}", path.display()))
    })?;
    toml::from_str(&text).map_err(|e| AppError::Usage(format!("{}: {e}", path.display())))
}

fn noise_kind(name: &str, level: Option<f64>) -> Result<NoiseKind, AppError> {
    match name {
        "gaussian" => Ok(NoiseKind::Gaussian { sigma: level.unwrap_or(0.15) }),
        "speckle" => Ok(NoiseKind::Speckle { sigma: level.unwrap_or(0.2) }),
        "pink" => Ok(NoiseKind::Pink { amplitude: level.unwrap_or(0.1) }),
        other => Err(AppError::Usage(format!(
            "unknown noise '{other}'; valid: gaussian|speckle|pink"
        ))),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), AppError> {
    let file: SynthFile = match &args.config {
        Some(p) => read_toml(p)?,
        None => SynthFile::default(),
    };
    let defaults = SynthConfig::default();
    let noise_name = args
        .noise
        .map(|n| match n {
            NoiseName::Gaussian => "gaussian".to_string(),
            NoiseName::Speckle => "speckle".to_string(),
            NoiseName::Pink => "pink".to_string(),
        })
        .or(file.noise)
        .unwrap_or_else(|| "gaussian".to_string());
    let level = args.noise_level.or(file.noise_level);
    let config = SynthConfig {
        height: args.height.or(file.height).unwrap_or(defaults.height),
        width: args.width.or(file.width).unwrap_or(defaults.width),
        n_frames: args.frames.or(file.frames).unwrap_or(defaults.n_frames),
        n_objects: args.objects.or(file.objects).unwrap_or(defaults.n_objects),
        object_radius: args.radius.or(file.radius).unwrap_or(defaults.object_radius),
        object_speed: args.speed.or(file.speed).unwrap_or(defaults.object_speed),
        object_contrast: args.contrast.or(file.contrast).unwrap_or(defaults.object_contrast),
        background_drift_speed: args.drift.or(file.drift).unwrap_or(defaults.background_drift_speed),
        noise: noise_kind(&noise_name, level)?,
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
    };
    let output = synth::generate(&config)?;
    io::save_clip(&output.clean, &args.out.join("clean"))?;
    io::save_clip(&output.noisy, &args.out.join("noisy"))?;
    io::save_annotations(&output.annotations, &args.out.join("annotations.csv"))?;
    let (psnr, _) = metrics::mean_quality(&output.clean, &output.noisy)?;
    println!("psnr_noisy_vs_clean={psnr:.4}");
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), AppError> {
    let file: TrainFile = match &args.config {
        Some(p) => read_toml(p)?,
        None => TrainFile::default(),
    };
    let defaults = TrainConfig::default();
    let model_defaults = ModelConfig::desk_scale();

    let target_name = args.target.or(file.target);
    let target_n = args.target_n.or(file.target_n);
    let target = match target_name {
        Some(name) => TargetKind::parse(&name, target_n)?,
        None => defaults.target,
    };
    let config = TrainConfig {
        target,
        clamp_target: if args.no_clamp_target {
            false
        } else {
            file.clamp_target.unwrap_or(true)
        },
        epochs: args.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        batch_size: args.batch.or(file.batch_size).unwrap_or(defaults.batch_size),
        learning_rate: args.lr.or(file.learning_rate).unwrap_or(defaults.learning_rate),
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
        model: ModelConfig {
            base_channels: args
                .base_channels
                .or(file.base_channels)
                .unwrap_or(model_defaults.base_channels),
            max_channels: args
                .max_channels
                .or(file.max_channels)
                .unwrap_or(model_defaults.max_channels),
            spatial_stages: args
                .stages
                .or(file.spatial_stages)
                .unwrap_or(model_defaults.spatial_stages),
            stride_t: args.stride.or(file.stride_t).unwrap_or(model_defaults.stride_t),
            clamp_output: file.clamp_output.unwrap_or(model_defaults.clamp_output),
        },
    };

    let mut clips = Vec::new();
    for dir in &args.data {
        clips.push(io::load_clip(dir)?);
    }
    let (_, report) = trainer::train_with_progress(&config, &clips, &args.out, |e| {
        println!("{},{:.8},{:.3}", e.epoch, e.loss, e.seconds);
    })?;
    let report_path = args
        .out
        .parent()
        .map(|p| p.join("train_report.csv"))
        .unwrap_or_else(|| PathBuf::from("train_report.csv"));
    report.write_csv(&report_path)?;
    println!("checkpoint={}", args.out.display());
    Ok(())
}

fn cmd_denoise(args: DenoiseArgs) -> Result<(), AppError> {
    let checkpoint = load_checkpoint(&args.ckpt)?;
    let clip = io::load_clip(&args.input)?;
    let denoised = trainer::denoise_clip(&checkpoint, &clip)?;
    io::save_clip(&denoised, &args.out)?;
    println!("frames={}", denoised.len());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), AppError> {
    let clip = io::load_clip(&args.input)?;
    match args.mode {
        EvalMode::Fbd => {
            let ann_path = args
                .ann
                .as_ref()
                .ok_or_else(|| AppError::Usage("--mode fbd requires --ann".into()))?;
            let annotations = io::load_annotations(ann_path)?;
            let report = metrics::fbd(&clip, &annotations, args.bins)?;
            std::fs::write(&args.out, report.to_text()).map_err(Error::from)?;
            println!("mean_fbd={:.6}", report.mean);
        }
        EvalMode::Psnr => {
            let clean_path = args
                .clean
                .as_ref()
                .ok_or_else(|| AppError::Usage("--mode psnr requires --clean".into()))?;
            let clean = io::load_clip(clean_path)?;
            let text = metrics::quality_report(&clean, &clip)?;
            std::fs::write(&args.out, &text).map_err(Error::from)?;
            let (psnr, ssim) = metrics::mean_quality(&clean, &clip)?;
            println!("mean_psnr={psnr:.6} mean_ssim={ssim:.6}");
        }
        EvalMode::Detect => {
            let ann_path = args
                .ann
                .as_ref()
                .ok_or_else(|| AppError::Usage("--mode detect requires --ann".into()))?;
            let annotations = io::load_annotations(ann_path)?;
            stvd::clip::validate_annotations(&clip, &annotations)?;
            let mut text = String::from("frame_index,tp,fp,fn\n");
            let mut totals = metrics::MatchCounts::default();
            for t in 0..clip.len() {
                let preds = metrics::detect_blobs(clip.frame(t), args.threshold, args.min_area);
                let truths: Vec<_> = annotations
                    .iter()
                    .filter(|a| a.frame_index == t)
                    .map(|a| a.rect())
                    .collect();
                let counts = metrics::match_boxes(&preds, &truths, args.iou);
                text.push_str(&format!("{t},{},{},{}\n", counts.tp, counts.fp, counts.fn_));
                totals.add(counts);
            }
            text.push_str(&format!("precision={:.6}\n", totals.precision()));
            text.push_str(&format!("recall={:.6}\n", totals.recall()));
            std::fs::write(&args.out, &text).map_err(Error::from)?;
            println!("precision={:.6} recall={:.6}", totals.precision(), totals.recall());
        }
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), AppError> {
    let passed = gradcheck::run_and_print(args.seed, args.corrupt)?;
    if passed {
        Ok(())
    } else {
        Err(AppError::Runtime(Error::Checkpoint("gradient check failed".into())))
    }
}

fn cmd_compare(args: CompareArgs) -> Result<(), AppError> {
    let raw = io::load_clip(&args.raw)?;
    let denoised = io::load_clip(&args.denoised)?;
    let annotations = io::load_annotations(&args.ann)?;
    let fbd_raw = metrics::fbd(&raw, &annotations, args.bins)?;
    let fbd_den = metrics::fbd(&denoised, &annotations, args.bins)?;
    match &args.clean {
        Some(clean_path) => {
            let clean = io::load_clip(clean_path)?;
            let (p_raw, s_raw) = metrics::mean_quality(&clean, &raw)?;
            let (p_den, s_den) = metrics::mean_quality(&clean, &denoised)?;
            println!("clip,fbd,psnr,ssim");
            println!("raw,{:.6},{:.6},{:.6}", fbd_raw.mean, p_raw, s_raw);
            println!("denoised,{:.6},{:.6},{:.6}", fbd_den.mean, p_den, s_den);
        }
        None => {
            println!("clip,fbd");
            println!("raw,{:.6}", fbd_raw.mean);
            println!("denoised,{:.6}", fbd_den.mean);
        }
    }
    Ok(())
}
