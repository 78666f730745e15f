//! Dataset persistence: line-delimited JSON manifests next to PNG images
//! and masks.
//!
//! A manifest starts with an optional `meta` line (version, seed, per-class
//! counts) followed by one `sample` line per ROI. All file paths are
//! relative to the manifest's directory, so a dataset directory can be
//! moved wholesale. Externally prepared data plugs in through the same
//! format: 8-bit grayscale PNG (or PGM) images and {0,255} PNG masks.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::metrics::{BinaryMask, GrayMap};

use super::{to_8bit, DataError, Provenance, Raster16, RoiSample, LABEL_ABNORMAL, LABEL_NORMAL};

const MANIFEST_VERSION: u32 = 1;
const MANIFEST_FILE: &str = "manifest.jsonl";

/// Train/validation assignment recorded for a sample, when known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

/// One manifest row: where a sample's files live and what it is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub image: PathBuf,
    pub label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

/// Parsed manifest: dataset-level metadata plus the sample records.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: Option<u64>,
    pub provenance: Provenance,
    /// Count per class label.
    pub counts: BTreeMap<u8, usize>,
    pub records: Vec<SampleRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ManifestLine {
    Meta {
        version: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        provenance: Provenance,
        normal: usize,
        abnormal: usize,
    },
    Sample(SampleRecord),
}

fn manifest_err(why: impl Into<String>) -> DataError {
    DataError::Manifest(why.into())
}

/// Writes an 8-bit grayscale image as PNG.
pub fn save_gray_png(path: &Path, image: &GrayMap) -> Result<(), DataError> {
    let buffer = image::GrayImage::from_raw(
        image.width() as u32,
        image.height() as u32,
        image.pixels().to_vec(),
    )
    .expect("pixel count matches dims");
    buffer.save(path)?;
    Ok(())
}

/// Reads a grayscale image (PNG or PGM). 16-bit inputs are min-max
/// rescaled to 8 bits; other formats are converted to 8-bit luma.
pub fn load_gray_image(path: &Path) -> Result<GrayMap, DataError> {
    let decoded = image::open(path)?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let gray = match decoded {
        image::DynamicImage::ImageLuma8(buffer) => {
            GrayMap::from_pixels(w, h, buffer.into_raw())?
        }
        image::DynamicImage::ImageLuma16(buffer) => {
            to_8bit(&Raster16::from_pixels(w, h, buffer.into_raw()))
        }
        other => GrayMap::from_pixels(w, h, other.to_luma8().into_raw())?,
    };
    Ok(gray)
}

/// Writes a mask as an 8-bit PNG holding only 0 and 255.
pub fn save_mask_png(path: &Path, mask: &BinaryMask) -> Result<(), DataError> {
    let pixels = mask
        .bits()
        .iter()
        .map(|&b| if b { 255u8 } else { 0 })
        .collect();
    save_gray_png(
        path,
        &GrayMap::from_pixels(mask.width(), mask.height(), pixels)?,
    )
}

/// Reads a {0,255} mask PNG. Any other pixel value is rejected so that
/// 0/1-valued masks fail loudly instead of silently reading as empty.
pub fn load_mask_png(path: &Path) -> Result<BinaryMask, DataError> {
    let gray = image::open(path)?.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let bits = gray
        .into_raw()
        .into_iter()
        .map(|p| match p {
            0 => Ok(false),
            255 => Ok(true),
            other => Err(manifest_err(format!(
                "mask {} holds value {} (expected 0 or 255)",
                path.display(),
                other
            ))),
        })
        .collect::<Result<Vec<bool>, DataError>>()?;
    Ok(BinaryMask::from_bits(w, h, bits)?)
}

/// Writes samples as PNGs plus a manifest under `dir` and returns the
/// manifest. Images land in `images/`, masks in `masks/`.
pub fn save_manifest(
    dir: &Path,
    samples: &[RoiSample],
    seed: Option<u64>,
) -> Result<DatasetManifest, DataError> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("masks"))?;
    let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
    let provenance = if samples.iter().any(|s| s.provenance == Provenance::Real) {
        Provenance::Real
    } else {
        Provenance::Synthetic
    };
    let mut records = Vec::with_capacity(samples.len());
    for sample in samples {
        *counts.entry(sample.label).or_insert(0) += 1;
        let image_rel = PathBuf::from("images").join(format!("{}.png", sample.id));
        save_gray_png(&dir.join(&image_rel), &sample.image)?;
        let mask_rel = match &sample.mask {
            Some(mask) => {
                let rel = PathBuf::from("masks").join(format!("{}.png", sample.id));
                save_mask_png(&dir.join(&rel), mask)?;
                Some(rel)
            }
            None => None,
        };
        records.push(SampleRecord {
            id: sample.id.clone(),
            image: image_rel,
            label: sample.label,
            mask: mask_rel,
            split: None,
        });
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        seed,
        provenance,
        counts,
        records,
    };
    let mut text = String::new();
    let meta = ManifestLine::Meta {
        version: manifest.version,
        seed: manifest.seed,
        provenance: manifest.provenance,
        normal: manifest.counts.get(&LABEL_NORMAL).copied().unwrap_or(0),
        abnormal: manifest.counts.get(&LABEL_ABNORMAL).copied().unwrap_or(0),
    };
    text.push_str(&serde_json::to_string(&meta).map_err(|e| manifest_err(e.to_string()))?);
    text.push('\n');
    for record in &manifest.records {
        let line = ManifestLine::Sample(record.clone());
        text.push_str(&serde_json::to_string(&line).map_err(|e| manifest_err(e.to_string()))?);
        text.push('\n');
    }
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

/// Reads a manifest and loads every referenced file.
///
/// `path` may be the manifest file itself or its directory. When a meta
/// line is present, its per-class counts must match the records.
pub fn load_manifest(path: &Path) -> Result<(DatasetManifest, Vec<RoiSample>), DataError> {
    let file = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let base = file.parent().map(Path::to_path_buf).unwrap_or_default();
    let text = fs::read_to_string(&file)?;
    let mut meta: Option<(u32, Option<u64>, Provenance, usize, usize)> = None;
    let mut records = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ManifestLine = serde_json::from_str(line)
            .map_err(|e| manifest_err(format!("line {}: {}", line_no + 1, e)))?;
        match parsed {
            ManifestLine::Meta {
                version,
                seed,
                provenance,
                normal,
                abnormal,
            } => {
                if meta.is_some() {
                    return Err(manifest_err("more than one meta line"));
                }
                if !records.is_empty() {
                    return Err(manifest_err("meta line must come first"));
                }
                if version != MANIFEST_VERSION {
                    return Err(manifest_err(format!(
                        "unsupported manifest version {version}"
                    )));
                }
                meta = Some((version, seed, provenance, normal, abnormal));
            }
            ManifestLine::Sample(record) => records.push(record),
        }
    }
    let provenance = meta.map(|(_, _, p, _, _)| p).unwrap_or(Provenance::Real);
    let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
    let mut samples = Vec::with_capacity(records.len());
    for record in &records {
        *counts.entry(record.label).or_insert(0) += 1;
        let image = load_gray_image(&base.join(&record.image))?;
        let mask = record
            .mask
            .as_ref()
            .map(|rel| load_mask_png(&base.join(rel)))
            .transpose()?;
        samples.push(RoiSample::new(
            record.id.clone(),
            image,
            record.label,
            mask,
            provenance,
        )?);
    }
    if let Some((_, _, _, normal, abnormal)) = meta {
        let found_normal = counts.get(&LABEL_NORMAL).copied().unwrap_or(0);
        let found_abnormal = counts.get(&LABEL_ABNORMAL).copied().unwrap_or(0);
        if (normal, abnormal) != (found_normal, found_abnormal) {
            return Err(manifest_err(format!(
                "meta counts ({normal} normal, {abnormal} abnormal) do not match \
                 records ({found_normal} normal, {found_abnormal} abnormal)"
            )));
        }
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        seed: meta.and_then(|(_, s, _, _, _)| s),
        provenance,
        counts,
        records,
    };
    Ok((manifest, samples))
}
