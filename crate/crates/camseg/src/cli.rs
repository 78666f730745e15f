//! Command-line front end: dataset generation, training, map extraction,
//! evaluation, the two experiments, and report rendering.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    image_to_tensor, load_manifest, save_gray_png, save_manifest, synth_generate, LABEL_ABNORMAL,
};
use crate::gradcam::{grad_cam, grad_cam_rectified, render_heatmap_overlay, Cam, CamProvenance, Palette};
use crate::harness::{
    experiment1, experiment2, load_config, parse_report, recompute_report, render_report,
    resolved_precision, DatasetSource, ExperimentConfig, HarnessError, ReportFormat, RunPaths,
    SynthParams,
};
use crate::nn::{
    build_network, evaluate, load_checkpoint, save_checkpoint, train, Checkpoint, CheckpointError,
    NetworkSpec, TrainConfig,
};
use crate::scalar::{Element, Precision};

/// Weakly-supervised tumor localization: train small CNN classifiers and
/// turn their gradients into segmentation maps.
#[derive(Debug, Parser)]
#[command(name = "camseg", version, about)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Experiment config file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config's.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config's (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic ROI dataset and write it as a manifest.
    GenData {
        #[command(flatten)]
        common: CommonArgs,
        /// Samples per class.
        #[arg(long)]
        per_class: Option<usize>,
        /// Square ROI side length in pixels.
        #[arg(long)]
        roi_size: Option<usize>,
        /// Smallest blob semi-axis in scene pixels.
        #[arg(long)]
        blob_min: Option<f64>,
        /// Largest blob semi-axis in scene pixels.
        #[arg(long)]
        blob_max: Option<f64>,
        /// Background texture amplitude in gray levels.
        #[arg(long)]
        texture: Option<f64>,
    },
    /// Train the configured architectures and save checkpoints.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Train only this architecture preset.
        #[arg(long)]
        arch: Option<String>,
    },
    /// Extract activation maps for every abnormal ROI in a dataset.
    Gradcam {
        /// Trained checkpoint to read weights from.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset manifest directory (or manifest file).
        #[arg(long)]
        dataset: PathBuf,
        /// Directory the gray PNGs are written to.
        #[arg(long)]
        out: PathBuf,
        /// Clamp negative map cells to zero before resizing.
        #[arg(long)]
        rectified: bool,
        /// Also write colormapped overlays next to the gray maps.
        #[arg(long)]
        overlay: bool,
    },
    /// Score a checkpoint's accuracy on a dataset.
    Eval {
        /// Trained checkpoint to read weights from.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset manifest directory (or manifest file).
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Experiment 1: train, extract maps, score localization.
    Exp1 {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Experiment 2: experiment 1 plus retraining on filtered ROIs.
    Exp2 {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Render a previous run's report.
    Report {
        /// The run's output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Output format: text or json.
        #[arg(long, default_value = "text")]
        format: String,
        /// Re-derive all metrics from the persisted artifacts and fail
        /// unless they match the stored report bit for bit.
        #[arg(long)]
        recompute_metrics: bool,
    },
}

/// Parses arguments and runs the selected subcommand. Usage errors and
/// `--help` exit through clap; everything else surfaces as an error.
pub fn run() -> Result<(), HarnessError> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData {
            common,
            per_class,
            roi_size,
            blob_min,
            blob_max,
            texture,
        } => gen_data(common, per_class, roi_size, blob_min, blob_max, texture),
        Command::Train { common, arch } => train_cmd(common, arch),
        Command::Gradcam {
            checkpoint,
            dataset,
            out,
            rectified,
            overlay,
        } => gradcam_cmd(&checkpoint, &dataset, &out, rectified, overlay),
        Command::Eval {
            checkpoint,
            dataset,
        } => eval_cmd(&checkpoint, &dataset),
        Command::Exp1 { common } => experiment_cmd(common, 1),
        Command::Exp2 { common } => experiment_cmd(common, 2),
        Command::Report {
            out,
            format,
            recompute_metrics,
        } => report_cmd(&out, &format, recompute_metrics),
    }
}

/// Loads the config (or defaults) and applies the common overrides.
fn resolve_config(common: &CommonArgs) -> Result<ExperimentConfig, HarnessError> {
    let mut config = match &common.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out = Some(out.clone());
    }
    Ok(config)
}

fn out_dir(config: &ExperimentConfig) -> PathBuf {
    config.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn gen_data(
    common: CommonArgs,
    per_class: Option<usize>,
    roi_size: Option<usize>,
    blob_min: Option<f64>,
    blob_max: Option<f64>,
    texture: Option<f64>,
) -> Result<(), HarnessError> {
    let config = resolve_config(&common)?;
    let mut params = match &config.dataset {
        DatasetSource::Synthetic(params) => params.clone(),
        DatasetSource::Manifest { .. } => SynthParams::default(),
    };
    if let Some(v) = per_class {
        params.per_class = v;
    }
    if let Some(v) = roi_size {
        params.roi_size = v;
    }
    if let Some(v) = blob_min {
        params.blob_min = v;
    }
    if let Some(v) = blob_max {
        params.blob_max = v;
    }
    if let Some(v) = texture {
        params.texture = v;
    }
    let synth = params.with_seed(config.seed);
    synth.validate()?;
    let samples = synth_generate(&synth)?;
    let dir = out_dir(&config);
    save_manifest(&dir, &samples, Some(config.seed))?;
    println!(
        "wrote {} samples ({} per class, {}x{}) to {}",
        samples.len(),
        synth.per_class,
        synth.roi_size,
        synth.roi_size,
        dir.display()
    );
    Ok(())
}

fn train_cmd(common: CommonArgs, arch: Option<String>) -> Result<(), HarnessError> {
    let mut config = resolve_config(&common)?;
    if let Some(arch) = arch {
        config.architectures = vec![arch];
    }
    config.validate()?;
    match resolved_precision(&config.train) {
        Precision::Single => train_all::<f32>(&config),
        Precision::Double => train_all::<f64>(&config),
    }
}

fn train_all<T: Element>(config: &ExperimentConfig) -> Result<(), HarnessError> {
    let out = out_dir(config);
    let paths = RunPaths::new(&out);
    let samples = match &config.dataset {
        DatasetSource::Synthetic(params) => {
            let samples = synth_generate(&params.with_seed(config.seed))?;
            save_manifest(&paths.dataset_dir(), &samples, Some(config.seed))?;
            samples
        }
        DatasetSource::Manifest { path } => load_manifest(path)?.1,
    };
    let input_size = samples
        .first()
        .map(|s| s.image.width())
        .ok_or_else(|| HarnessError::Dataset("dataset has no samples".into()))?;
    for arch in &config.architectures {
        let spec = NetworkSpec::preset(arch, input_size)?;
        let train_config = TrainConfig {
            seed: config.seed,
            ..config.train.clone()
        };
        let mut network = build_network::<T>(&spec, train_config.seed)?;
        let checkpoint = train(&mut network, &samples, &train_config)?;
        let path = paths.checkpoint(arch);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        save_checkpoint(&checkpoint, &path)?;
        println!(
            "{arch}: val_acc {:.4} (epoch {}) -> {}",
            checkpoint.best_val_acc,
            checkpoint.best_epoch,
            path.display()
        );
    }
    Ok(())
}

fn gradcam_cmd(
    checkpoint: &Path,
    dataset: &Path,
    out: &Path,
    rectified: bool,
    overlay: bool,
) -> Result<(), HarnessError> {
    // Map extraction always runs in f64; widening an f32 checkpoint is
    // exact, so one load path serves both stored precisions.
    let checkpoint: Checkpoint<f64> = load_checkpoint(checkpoint)?;
    let network = checkpoint.restore()?;
    let checkpoint_id = checkpoint.id();
    let (_, samples) = load_manifest(dataset)?;
    fs::create_dir_all(out)?;
    let mut written = 0usize;
    for sample in samples.iter().filter(|s| s.label == LABEL_ABNORMAL) {
        let image = image_to_tensor::<f64>(&sample.image);
        let class = LABEL_ABNORMAL as usize;
        let raw = if rectified {
            grad_cam_rectified(&network, &image, class)?
        } else {
            grad_cam(&network, &image, class)?
        };
        let cam = Cam::from_raw(
            raw,
            sample.image.height(),
            sample.image.width(),
            CamProvenance {
                checkpoint: checkpoint_id.clone(),
                sample: sample.id.clone(),
                class_index: class,
            },
        )?;
        save_gray_png(&out.join(format!("{}.png", sample.id)), &cam.gray)?;
        if overlay {
            let rgb = render_heatmap_overlay(&sample.image, &cam, Palette::Parula)?;
            rgb.save(out.join(format!("{}-overlay.png", sample.id)))
                .map_err(crate::data::DataError::from)?;
        }
        written += 1;
    }
    println!("wrote {written} activation maps to {}", out.display());
    Ok(())
}

fn eval_cmd(checkpoint: &Path, dataset: &Path) -> Result<(), HarnessError> {
    let (_, samples) = load_manifest(dataset)?;
    // Score in the precision the checkpoint was trained with.
    let accuracy = match load_checkpoint::<f32>(checkpoint) {
        Ok(ckpt) => evaluate(&ckpt.restore()?, &samples)?,
        Err(CheckpointError::Precision { .. }) => {
            let ckpt: Checkpoint<f64> = load_checkpoint(checkpoint)?;
            evaluate(&ckpt.restore()?, &samples)?
        }
        Err(e) => return Err(e.into()),
    };
    println!("accuracy {accuracy:.4} ({} samples)", samples.len());
    Ok(())
}

fn experiment_cmd(common: CommonArgs, which: u8) -> Result<(), HarnessError> {
    let config = resolve_config(&common)?;
    let out = out_dir(&config);
    let report = if which == 1 {
        experiment1(&config, &out)?
    } else {
        experiment2(&config, &out)?
    };
    print!("{}", render_report(&report, ReportFormat::Text)?);
    println!("report written to {}", out.join("report.json").display());
    Ok(())
}

fn report_cmd(out: &Path, format: &str, recompute: bool) -> Result<(), HarnessError> {
    let format: ReportFormat = format.parse()?;
    let report = if recompute {
        let report = recompute_report(out)?;
        eprintln!("metrics reproduced bit-exactly from artifacts");
        report
    } else {
        let text = fs::read_to_string(RunPaths::new(out).report_json())?;
        parse_report(&text)?
    };
    print!("{}", render_report(&report, format)?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_tree_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn common_overrides_beat_the_config_defaults() {
        let common = CommonArgs {
            config: None,
            seed: Some(99),
            out: Some(PathBuf::from("elsewhere")),
        };
        let config = resolve_config(&common).unwrap();
        assert_eq!(config.seed, 99);
        assert_eq!(out_dir(&config), PathBuf::from("elsewhere"));
    }

    #[test]
    fn out_dir_defaults_to_out() {
        let config = ExperimentConfig::default();
        assert_eq!(out_dir(&config), PathBuf::from("out"));
    }
}
