//! The two experiment pipelines and the artifact-only metric recompute.
//!
//! Experiment 1 trains each architecture, extracts an activation map for
//! every abnormal ROI from the frozen weights, and scores localization as
//! mean-Dice averaged over those ROIs. Experiment 2 reuses that first
//! stage, then retrains each architecture from scratch on CAM-filtered,
//! truth-mask-filtered, and (optionally) inverse-mask-filtered copies of
//! the dataset.
//!
//! Every intermediate is persisted under the output directory, so
//! [`recompute_report`] can re-derive the metric columns from artifacts
//! alone and demand bit-exact agreement with the stored report.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::data::{
    cam_filter, inverse_mask_filter, load_gray_image, load_manifest, mask_filter,
    random_mask_assign, save_gray_png, save_manifest, synth_generate, RoiSample, LABEL_ABNORMAL,
    LABEL_NORMAL,
};
use crate::gradcam::{grad_cam, grad_cam_rectified, Cam, CamProvenance};
use crate::metrics::{averaged_mean_dice, BinaryMask, GrayMap};
use crate::nn::{
    build_network, evaluate, load_checkpoint, resolve_threads, save_checkpoint, train, Checkpoint,
    CheckpointError, NetworkSpec, TrainConfig,
};
use crate::rng::{derive_rng, derive_seed};
use crate::scalar::{Element, Precision};

use super::config::{DatasetSource, ExperimentConfig};
use super::report::{render_report, ExperimentReport, ReportFormat, ReportRow, REPORT_VERSION};
use super::{parse_report, HarnessError};

/// Directory layout under one run's output root.
#[derive(Debug, Clone)]
pub struct RunPaths {
    out: PathBuf,
}

impl RunPaths {
    pub fn new(out: &Path) -> Self {
        Self { out: out.to_path_buf() }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.out.join("dataset")
    }

    pub fn checkpoint(&self, arch: &str) -> PathBuf {
        self.out.join("checkpoints").join(format!("{arch}.ckpt"))
    }

    pub fn retrain_checkpoint(&self, arch: &str, kind: &str) -> PathBuf {
        self.out.join("checkpoints").join(format!("{arch}-{kind}.ckpt"))
    }

    pub fn cams_dir(&self, arch: &str) -> PathBuf {
        self.out.join("cams").join(arch)
    }

    pub fn cam_png(&self, arch: &str, sample: &str) -> PathBuf {
        self.cams_dir(arch).join(format!("{sample}.png"))
    }

    pub fn filtered_cam_dir(&self, arch: &str) -> PathBuf {
        self.out.join("filtered").join("cam").join(arch)
    }

    pub fn filtered_dir(&self, kind: &str) -> PathBuf {
        self.out.join("filtered").join(kind)
    }

    pub fn report_json(&self) -> PathBuf {
        self.out.join("report.json")
    }

    pub fn report_txt(&self) -> PathBuf {
        self.out.join("report.txt")
    }

    pub fn run_meta(&self) -> PathBuf {
        self.out.join("run-meta.txt")
    }
}

/// Precision for a run: the `CAMSEG_PRECISION` environment variable when
/// set, the config's training precision otherwise.
pub fn resolved_precision(train: &TrainConfig) -> Precision {
    if std::env::var_os("CAMSEG_PRECISION").is_some() {
        Precision::from_env()
    } else {
        train.precision
    }
}

/// Trains each architecture and scores its activation maps (experiment 1).
pub fn experiment1(config: &ExperimentConfig, out: &Path) -> Result<ExperimentReport, HarnessError> {
    match resolved_precision(&config.train) {
        Precision::Single => run_experiment::<f32>(config, out, 1),
        Precision::Double => run_experiment::<f64>(config, out, 1),
    }
}

/// Experiment 1 plus retraining on filtered copies of the dataset
/// (experiment 2).
pub fn experiment2(config: &ExperimentConfig, out: &Path) -> Result<ExperimentReport, HarnessError> {
    match resolved_precision(&config.train) {
        Precision::Single => run_experiment::<f32>(config, out, 2),
        Precision::Double => run_experiment::<f64>(config, out, 2),
    }
}

fn run_experiment<T: Element>(
    config: &ExperimentConfig,
    out: &Path,
    experiment: u8,
) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let started = Instant::now();
    let started_unix = unix_seconds();
    let paths = RunPaths::new(out);
    fs::create_dir_all(out)?;

    let samples = obtain_dataset(config, &paths)?;
    let input_size = dataset_input_size(&samples)?;
    let hash = dataset_hash(&samples);

    // Filtered datasets that do not depend on the architecture: the
    // truth-mask and inverse-mask copies, sharing one borrowed-mask
    // assignment so both zero out the same normal-ROI regions.
    let mask_sets = if experiment == 2 {
        let with_masks = assign_masks_everywhere(&samples, config.seed)?;
        let masked = filter_dataset(&with_masks, |roi, mask| mask_filter(roi, mask))?;
        save_manifest(&paths.filtered_dir("mask"), &masked, Some(config.seed))?;
        let inverse = if config.run_inverse_ablation {
            let set = filter_dataset(&with_masks, |roi, mask| inverse_mask_filter(roi, mask))?;
            save_manifest(&paths.filtered_dir("inverse"), &set, Some(config.seed))?;
            Some(set)
        } else {
            None
        };
        Some((masked, inverse))
    } else {
        None
    };

    let mut rows = Vec::with_capacity(config.architectures.len());
    for arch in &config.architectures {
        let spec = NetworkSpec::preset(arch, input_size)?;
        // One split and shuffle stream per master seed, shared by every
        // architecture, so their rows compare like against like.
        let train_config = TrainConfig {
            seed: config.seed,
            ..config.train.clone()
        };
        let mut network = build_network::<T>(&spec, train_config.seed)?;
        let checkpoint = train(&mut network, &samples, &train_config)?;
        let checkpoint_path = paths.checkpoint(arch);
        ensure_parent(&checkpoint_path)?;
        save_checkpoint(&checkpoint, &checkpoint_path)?;

        // Map extraction always runs in f64; widening the stored weights
        // is exact, so this never perturbs what was trained.
        let checkpoint = checkpoint.cast::<f64>();
        let network = checkpoint.restore()?;
        let checkpoint_id = checkpoint.id();
        let cam_dir = paths.cams_dir(arch);
        fs::create_dir_all(&cam_dir)?;

        let mut cams: Vec<(usize, Cam)> = Vec::new();
        for (index, sample) in samples.iter().enumerate() {
            // The second experiment filters both classes, so it needs a
            // map for every sample; the first only scores abnormal ROIs.
            if experiment != 2 && sample.label != LABEL_ABNORMAL {
                continue;
            }
            let image = crate::data::image_to_tensor::<f64>(&sample.image);
            let class = LABEL_ABNORMAL as usize;
            let raw = if config.rectified_cam {
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
            save_gray_png(&paths.cam_png(arch, &sample.id), &cam.gray)?;
            cams.push((index, cam));
        }

        let pairs = cams
            .iter()
            .filter(|(i, _)| samples[*i].label == LABEL_ABNORMAL)
            .map(|(i, cam)| (samples[*i].mask.as_ref().expect("abnormal ROI has a mask"), &cam.gray));
        let dice = averaged_mean_dice(pairs)?;

        let mut row = ReportRow {
            architecture: arch.clone(),
            val_acc: checkpoint.best_val_acc,
            dice,
            cam_val_acc: None,
            mask_val_acc: None,
            inverse_val_acc: None,
        };

        if let Some((masked, inverse)) = &mask_sets {
            let cam_set = cam_filtered_dataset(&samples, &cams)?;
            save_manifest(&paths.filtered_cam_dir(arch), &cam_set, Some(config.seed))?;
            row.cam_val_acc = Some(retrain::<T>(
                &spec,
                &cam_set,
                &config.train,
                derive_seed(config.seed, "retrain-cam", arch),
                &paths.retrain_checkpoint(arch, "cam"),
            )?);
            row.mask_val_acc = Some(retrain::<T>(
                &spec,
                masked,
                &config.train,
                derive_seed(config.seed, "retrain-mask", arch),
                &paths.retrain_checkpoint(arch, "mask"),
            )?);
            if let Some(inverse) = inverse {
                row.inverse_val_acc = Some(retrain::<T>(
                    &spec,
                    inverse,
                    &config.train,
                    derive_seed(config.seed, "retrain-inverse", arch),
                    &paths.retrain_checkpoint(arch, "inverse"),
                )?);
            }
        }
        rows.push(row);
    }

    let mut report = ExperimentReport {
        version: REPORT_VERSION,
        experiment,
        seed: config.seed,
        precision: resolved_precision(&config.train),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        dataset_hash: hash,
        rows,
    };
    report.sort_rows();

    fs::write(paths.report_json(), render_report(&report, ReportFormat::Json)?)?;
    fs::write(paths.report_txt(), render_report(&report, ReportFormat::Text)?)?;
    write_run_meta(&paths, config, started_unix, started.elapsed().as_secs_f64())?;
    Ok(report)
}

/// Rebuilds every metric column from the persisted artifacts — dataset,
/// activation-map PNGs, checkpoints, filtered datasets — without any
/// retraining, and errors unless they match the stored report bit for bit.
pub fn recompute_report(out: &Path) -> Result<ExperimentReport, HarnessError> {
    let paths = RunPaths::new(out);
    let stored = parse_report(&fs::read_to_string(paths.report_json())?)?;
    let (_, samples) = load_manifest(&paths.dataset_dir())?;

    let mut rows = Vec::with_capacity(stored.rows.len());
    for stored_row in &stored.rows {
        let arch = &stored_row.architecture;

        // Dice from the persisted gray PNGs, summed in dataset order so
        // the floating-point average matches the original run exactly.
        let mut pairs: Vec<(&BinaryMask, GrayMap)> = Vec::new();
        for sample in samples.iter().filter(|s| s.label == LABEL_ABNORMAL) {
            let gray = load_gray_image(&paths.cam_png(arch, &sample.id))?;
            let mask = sample.mask.as_ref().expect("abnormal ROI has a mask");
            pairs.push((mask, gray));
        }
        let dice = averaged_mean_dice(pairs.iter().map(|(m, g)| (*m, g)))?;

        let row = ReportRow {
            architecture: arch.clone(),
            val_acc: eval_checkpoint(&paths.checkpoint(arch), &samples)?,
            dice,
            cam_val_acc: recompute_retrain(&paths, arch, "cam", stored_row.cam_val_acc.is_some())?,
            mask_val_acc: recompute_retrain(&paths, arch, "mask", stored_row.mask_val_acc.is_some())?,
            inverse_val_acc: recompute_retrain(
                &paths,
                arch,
                "inverse",
                stored_row.inverse_val_acc.is_some(),
            )?,
        };
        if row != *stored_row {
            return Err(HarnessError::Report(format!(
                "recomputed metrics for {arch} diverge from the stored report: \
                 recomputed {row:?}, stored {stored_row:?}"
            )));
        }
        rows.push(row);
    }

    Ok(ExperimentReport { rows, ..stored })
}

/// Validation accuracy of one retrained checkpoint, on the persisted
/// filtered dataset it was trained from; `None` when the stored report
/// has no such column.
fn recompute_retrain(
    paths: &RunPaths,
    arch: &str,
    kind: &str,
    present: bool,
) -> Result<Option<f64>, HarnessError> {
    if !present {
        return Ok(None);
    }
    let dir = if kind == "cam" {
        paths.filtered_cam_dir(arch)
    } else {
        paths.filtered_dir(kind)
    };
    let (_, filtered) = load_manifest(&dir)?;
    Ok(Some(eval_checkpoint(
        &paths.retrain_checkpoint(arch, kind),
        &filtered,
    )?))
}

/// Re-scores a checkpoint's validation subset in the precision it was
/// trained with, reproducing its recorded accuracy exactly.
fn eval_checkpoint(path: &Path, samples: &[RoiSample]) -> Result<f64, HarnessError> {
    match load_checkpoint::<f32>(path) {
        Ok(checkpoint) => eval_on_val_split(&checkpoint, samples),
        Err(CheckpointError::Precision { .. }) => {
            eval_on_val_split(&load_checkpoint::<f64>(path)?, samples)
        }
        Err(e) => Err(e.into()),
    }
}

fn eval_on_val_split<T: Element>(
    checkpoint: &Checkpoint<T>,
    samples: &[RoiSample],
) -> Result<f64, HarnessError> {
    let network = checkpoint.restore()?;
    let val: Vec<RoiSample> = samples
        .iter()
        .filter(|s| checkpoint.val_ids.contains(&s.id))
        .cloned()
        .collect();
    Ok(evaluate(&network, &val)?)
}

fn retrain<T: Element>(
    spec: &NetworkSpec,
    dataset: &[RoiSample],
    base: &TrainConfig,
    seed: u64,
    checkpoint_path: &Path,
) -> Result<f64, HarnessError> {
    let config = TrainConfig { seed, ..base.clone() };
    let mut network = build_network::<T>(spec, seed)?;
    let checkpoint = train(&mut network, dataset, &config)?;
    ensure_parent(checkpoint_path)?;
    save_checkpoint(&checkpoint, checkpoint_path)?;
    Ok(checkpoint.best_val_acc)
}

fn ensure_parent(path: &Path) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

/// Generates or loads the samples and persists them under `out/dataset`,
/// so later recomputes never depend on the original source.
fn obtain_dataset(config: &ExperimentConfig, paths: &RunPaths) -> Result<Vec<RoiSample>, HarnessError> {
    let samples = match &config.dataset {
        DatasetSource::Synthetic(params) => synth_generate(&params.with_seed(config.seed))?,
        DatasetSource::Manifest { path } => load_manifest(path)?.1,
    };
    save_manifest(&paths.dataset_dir(), &samples, Some(config.seed))?;
    Ok(samples)
}

/// The uniform square side length of the dataset's images.
fn dataset_input_size(samples: &[RoiSample]) -> Result<usize, HarnessError> {
    let first = samples
        .first()
        .ok_or_else(|| HarnessError::Dataset("dataset has no samples".into()))?;
    let size = first.image.width();
    for sample in samples {
        if sample.image.width() != size || sample.image.height() != size {
            return Err(HarnessError::Dataset(format!(
                "sample {} is {}x{}, but training needs uniform {size}x{size} square images",
                sample.id,
                sample.image.width(),
                sample.image.height()
            )));
        }
    }
    Ok(size)
}

/// SHA-256 over ids, labels, pixels, and mask bits in dataset order.
pub fn dataset_hash(samples: &[RoiSample]) -> String {
    let mut hasher = Sha256::new();
    for sample in samples {
        hasher.update(sample.id.as_bytes());
        hasher.update([0u8, sample.label]);
        hasher.update((sample.image.width() as u64).to_le_bytes());
        hasher.update((sample.image.height() as u64).to_le_bytes());
        hasher.update(sample.image.pixels());
        match &sample.mask {
            Some(mask) => {
                hasher.update([1u8]);
                let bits: Vec<u8> = mask.bits().iter().map(|&b| b as u8).collect();
                hasher.update(&bits);
            }
            None => hasher.update([0u8]),
        }
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Clones the dataset with every normal ROI carrying a mask borrowed from
/// a random abnormal ROI; abnormal ROIs keep their own truth masks. One
/// draw stream per master seed, so the truth-mask and inverse copies cut
/// identical regions.
fn assign_masks_everywhere(
    samples: &[RoiSample],
    master_seed: u64,
) -> Result<Vec<RoiSample>, HarnessError> {
    let normals: Vec<RoiSample> = samples
        .iter()
        .filter(|s| s.label == LABEL_NORMAL)
        .cloned()
        .collect();
    let pool: Vec<BinaryMask> = samples
        .iter()
        .filter(|s| s.label == LABEL_ABNORMAL)
        .filter_map(|s| s.mask.clone())
        .collect();
    let mut rng = derive_rng(master_seed, "borrow", "");
    let assigned = random_mask_assign(&normals, &pool, &mut rng)?;
    let by_id: HashMap<&str, &RoiSample> =
        assigned.iter().map(|s| (s.id.as_str(), s)).collect();
    samples
        .iter()
        .map(|sample| {
            if sample.label == LABEL_NORMAL {
                Ok(by_id
                    .get(sample.id.as_str())
                    .cloned()
                    .cloned()
                    .expect("every normal ROI was assigned a mask"))
            } else {
                Ok(sample.clone())
            }
        })
        .collect()
}

/// Applies a mask-driven filter to every sample, keeping ids, labels, and
/// masks so the result is a trainable dataset in the original order.
fn filter_dataset(
    samples: &[RoiSample],
    filter: impl Fn(&GrayMap, &BinaryMask) -> Result<GrayMap, crate::data::DataError>,
) -> Result<Vec<RoiSample>, HarnessError> {
    samples
        .iter()
        .map(|sample| {
            let mask = sample.mask.as_ref().expect("filtering needs a mask per sample");
            let image = filter(&sample.image, mask)?;
            Ok(RoiSample::new(
                sample.id.clone(),
                image,
                sample.label,
                sample.mask.clone(),
                sample.provenance,
            )?)
        })
        .collect()
}

/// The per-architecture CAM-filtered dataset: every ROI multiplied by its
/// own normalized activation map.
fn cam_filtered_dataset(
    samples: &[RoiSample],
    cams: &[(usize, Cam)],
) -> Result<Vec<RoiSample>, HarnessError> {
    cams.iter()
        .map(|(index, cam)| {
            let sample = &samples[*index];
            let image = cam_filter(&sample.image, cam)?;
            Ok(RoiSample::new(
                sample.id.clone(),
                image,
                sample.label,
                sample.mask.clone(),
                sample.provenance,
            )?)
        })
        .collect()
}

fn unix_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Timing and environment sidecar. Timestamps live here, not in the
/// report, so reports from identical runs stay byte-identical.
fn write_run_meta(
    paths: &RunPaths,
    config: &ExperimentConfig,
    started_unix: u64,
    elapsed_seconds: f64,
) -> Result<(), HarnessError> {
    let text = format!(
        "started_unix: {started_unix}\nfinished_unix: {}\nelapsed_seconds: {elapsed_seconds:.3}\n\
         threads: {}\nprecision: {:?}\ntool_version: {}\n",
        unix_seconds(),
        resolve_threads(config.train.threads),
        resolved_precision(&config.train),
        env!("CARGO_PKG_VERSION"),
    );
    fs::write(paths.run_meta(), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::config::SynthParams;
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            seed: 11,
            architectures: vec!["gap-head-small".into()],
            dataset: DatasetSource::Synthetic(SynthParams {
                per_class: 6,
                roi_size: 16,
                blob_min: 4.0,
                blob_max: 10.0,
                texture: 8.0,
            }),
            train: TrainConfig {
                epochs: 8,
                patience: 8,
                threads: Some(1),
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn experiment1_produces_artifacts_and_a_sorted_report() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let report = experiment1(&tiny_config(), out).unwrap();

        assert_eq!(report.experiment, 1);
        assert_eq!(report.rows.len(), 1);
        let row = &report.rows[0];
        assert_eq!(row.architecture, "gap-head-small");
        assert!((0.0..=1.0).contains(&row.val_acc));
        assert!((0.0..=1.0).contains(&row.dice));
        assert_eq!(row.cam_val_acc, None);

        let paths = RunPaths::new(out);
        assert!(paths.report_json().exists());
        assert!(paths.report_txt().exists());
        assert!(paths.run_meta().exists());
        assert!(paths.checkpoint("gap-head-small").exists());
        assert!(paths.dataset_dir().join("manifest.jsonl").exists());
        // One gray PNG per abnormal ROI, none for normals.
        assert!(paths.cam_png("gap-head-small", "ab-0001").exists());
        assert!(!paths.cam_png("gap-head-small", "no-0001").exists());

        let text = fs::read_to_string(paths.report_json()).unwrap();
        assert_eq!(parse_report(&text).unwrap(), report);
    }

    #[test]
    fn experiment1_metrics_recompute_bit_exactly_from_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let report = experiment1(&tiny_config(), dir.path()).unwrap();
        let recomputed = recompute_report(dir.path()).unwrap();
        assert_eq!(recomputed, report);
    }

    #[test]
    fn recompute_rejects_tampered_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let report = experiment1(&tiny_config(), dir.path()).unwrap();
        let mut tampered = report.clone();
        tampered.rows[0].dice += 0.125;
        let paths = RunPaths::new(dir.path());
        fs::write(
            paths.report_json(),
            render_report(&tampered, ReportFormat::Json).unwrap(),
        )
        .unwrap();
        let err = recompute_report(dir.path()).unwrap_err();
        assert!(matches!(err, HarnessError::Report(_)));
    }

    #[test]
    fn experiment2_fills_the_retrain_columns_and_persists_filtered_sets() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let report = experiment2(&tiny_config(), out).unwrap();

        assert_eq!(report.experiment, 2);
        let row = &report.rows[0];
        assert!(row.cam_val_acc.is_some());
        assert!(row.mask_val_acc.is_some());
        assert!(row.inverse_val_acc.is_some());

        let paths = RunPaths::new(out);
        for kind in ["mask", "inverse"] {
            assert!(paths.filtered_dir(kind).join("manifest.jsonl").exists());
        }
        assert!(paths
            .filtered_cam_dir("gap-head-small")
            .join("manifest.jsonl")
            .exists());
        for kind in ["cam", "mask", "inverse"] {
            assert!(paths.retrain_checkpoint("gap-head-small", kind).exists());
        }
        // The second experiment maps both classes.
        assert!(paths.cam_png("gap-head-small", "no-0001").exists());

        // Mask-filtered normals really carry borrowed masks, and the
        // inverse copy cuts the complementary region of the same mask.
        let (_, masked) = load_manifest(&paths.filtered_dir("mask")).unwrap();
        let normal = masked.iter().find(|s| s.label == LABEL_NORMAL).unwrap();
        let mask = normal.mask.as_ref().expect("borrowed mask persisted");
        assert!(mask.count_ones() > 0);
        let (_, inverse) = load_manifest(&paths.filtered_dir("inverse")).unwrap();
        let inv = inverse.iter().find(|s| s.id == normal.id).unwrap();
        for ((&a, &b), &keep) in normal
            .image
            .pixels()
            .iter()
            .zip(inv.image.pixels())
            .zip(mask.bits())
        {
            if keep {
                assert_eq!(b, 0, "inverse keeps only pixels outside the mask");
            } else {
                assert_eq!(a, 0, "mask filter zeroes pixels outside the mask");
            }
        }
    }

    #[test]
    fn experiment2_metrics_recompute_bit_exactly_from_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let report = experiment2(&tiny_config(), dir.path()).unwrap();
        let recomputed = recompute_report(dir.path()).unwrap();
        assert_eq!(recomputed, report);
    }

    #[test]
    fn same_seed_runs_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        experiment1(&tiny_config(), a.path()).unwrap();
        experiment1(&tiny_config(), b.path()).unwrap();
        let pa = RunPaths::new(a.path());
        let pb = RunPaths::new(b.path());
        assert_eq!(
            fs::read(pa.report_json()).unwrap(),
            fs::read(pb.report_json()).unwrap()
        );
        assert_eq!(
            fs::read(pa.report_txt()).unwrap(),
            fs::read(pb.report_txt()).unwrap()
        );
        assert_eq!(
            fs::read(pa.cam_png("gap-head-small", "ab-0003")).unwrap(),
            fs::read(pb.cam_png("gap-head-small", "ab-0003")).unwrap()
        );
    }

    #[test]
    fn different_seeds_change_the_dataset_hash() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut config = tiny_config();
        let ra = experiment1(&config, a.path()).unwrap();
        config.seed = 12;
        let rb = experiment1(&config, b.path()).unwrap();
        assert_ne!(ra.dataset_hash, rb.dataset_hash);
    }

    #[test]
    fn manifest_source_feeds_an_experiment() {
        let data_dir = tempfile::tempdir().unwrap();
        let params = SynthParams {
            per_class: 6,
            roi_size: 16,
            blob_min: 4.0,
            blob_max: 10.0,
            texture: 8.0,
        };
        let set = synth_generate(&params.with_seed(5)).unwrap();
        save_manifest(data_dir.path(), &set, Some(5)).unwrap();

        let out = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            dataset: DatasetSource::Manifest {
                path: data_dir.path().to_path_buf(),
            },
            ..tiny_config()
        };
        let report = experiment1(&config, out.path()).unwrap();
        assert_eq!(report.dataset_hash, dataset_hash(&set));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(dataset_input_size(&[]).is_err());
    }
}
