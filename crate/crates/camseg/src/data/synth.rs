//! Desk-scale synthetic dataset: bright elliptical blobs over correlated
//! noise, with exact truth masks, pushed through the same crop pipeline
//! real data would take.
//!
//! Each abnormal sample is born on a large "scene", gets one blob painted
//! on it, and is cropped with the randomized padding rule, so the blob's
//! position inside the final ROI varies. Its paired normal sample is cut
//! from an independent blob-free scene at the mirrored location. Every
//! sample is generated from its own seeded stream, so datasets are
//! reproducible bit for bit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gradcam::resize_bilinear;
use crate::metrics::{BinaryMask, GrayMap};
use crate::rng::derive_rng;
use crate::tensor::Tensor;

use super::crop::{crop_abnormal_roi, crop_normal_roi};
use super::filters::resize_mask_nearest;
use super::{DataError, RoiSample, LABEL_ABNORMAL, LABEL_NORMAL};

/// Mean background intensity before texture is added.
const BACKGROUND_BASE: f64 = 70.0;
/// Edge length of one coarse texture cell in scene pixels.
const TEXTURE_CELL: usize = 12;
/// Scene edge length as a multiple of the ROI edge.
const SCENE_FACTOR: usize = 4;
/// Blob peak brightness above background is drawn from this range.
const CONTRAST_RANGE: (f64, f64) = (50.0, 110.0);
/// Blob center jitter, as a fraction of the scene edge.
const CENTER_JITTER: f64 = 0.05;

/// Generator knobs. Blob semi-axes are in scene pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Samples per class.
    pub per_class: usize,
    /// Output ROI edge length in pixels.
    pub roi_size: usize,
    /// Smallest blob semi-axis.
    pub blob_min: f64,
    /// Largest blob semi-axis.
    pub blob_max: f64,
    /// Amplitude of the correlated background texture.
    pub texture: f64,
    /// Master seed; every drawn value derives from it.
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            per_class: 200,
            roi_size: 64,
            blob_min: 16.0,
            blob_max: 40.0,
            texture: 12.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    fn scene_size(&self) -> usize {
        SCENE_FACTOR * self.roi_size
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |why: String| Err(DataError::BadSynthConfig(why));
        if self.per_class == 0 {
            return bad("per_class must be at least 1".into());
        }
        if self.roi_size < 8 {
            return bad(format!("roi_size {} is below the minimum of 8", self.roi_size));
        }
        if !(self.blob_min >= 2.0 && self.blob_min <= self.blob_max) {
            return bad(format!(
                "blob semi-axis range [{}, {}] must satisfy 2 <= min <= max",
                self.blob_min, self.blob_max
            ));
        }
        let limit = (self.scene_size() / SCENE_FACTOR) as f64;
        if self.blob_max > limit {
            return bad(format!(
                "blob_max {} exceeds {} (a quarter of the {} scene)",
                self.blob_max,
                limit,
                self.scene_size()
            ));
        }
        if !(0.0..=60.0).contains(&self.texture) {
            return bad(format!("texture {} must be in [0, 60]", self.texture));
        }
        Ok(())
    }
}

/// Correlated noise: a coarse uniform grid upsampled bilinearly, around
/// the base intensity.
fn background<R: Rng>(size: usize, texture: f64, rng: &mut R) -> Tensor<f64> {
    let cells = size / TEXTURE_CELL + 2;
    let coarse = Tensor::from_vec(
        vec![cells, cells],
        (0..cells * cells)
            .map(|_| rng.gen_range(-1.0..=1.0))
            .collect(),
    )
    .expect("coarse grid is nonempty");
    let up = resize_bilinear(&coarse, size, size).expect("target size is positive");
    up.map(|v| BACKGROUND_BASE + texture * v)
}

/// Clamp-rounds a float scene to 8 bits, preserving absolute brightness.
fn quantize_scene(scene: &Tensor<f64>) -> GrayMap {
    let pixels = scene
        .data()
        .iter()
        .map(|&v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayMap::from_pixels(scene.dim(1), scene.dim(0), pixels).expect("dims preserved")
}

/// Resizes an 8-bit ROI bilinearly, re-rounding to 8 bits.
fn resize_roi(roi: &GrayMap, size: usize) -> GrayMap {
    let as_f64 = Tensor::from_vec(
        vec![roi.height(), roi.width()],
        roi.pixels().iter().map(|&p| p as f64).collect(),
    )
    .expect("pixel count matches dims");
    let resized = resize_bilinear(&as_f64, size, size).expect("target size is positive");
    quantize_scene(&resized)
}

/// Paints one rotated elliptical blob; returns its exact mask.
fn paint_blob<R: Rng>(scene: &mut Tensor<f64>, config: &SynthConfig, rng: &mut R) -> BinaryMask {
    let size = scene.dim(0);
    let half = size as f64 / 2.0;
    let jitter = CENTER_JITTER * size as f64;
    let cx = half + rng.gen_range(-jitter..=jitter);
    let cy = half + rng.gen_range(-jitter..=jitter);
    let a = rng.gen_range(config.blob_min..=config.blob_max);
    let b = rng.gen_range(config.blob_min..=config.blob_max);
    let theta = rng.gen_range(0.0..std::f64::consts::PI);
    let contrast = rng.gen_range(CONTRAST_RANGE.0..=CONTRAST_RANGE.1);
    let (sin, cos) = theta.sin_cos();
    let mut mask = BinaryMask::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let xr = dx * cos + dy * sin;
            let yr = -dx * sin + dy * cos;
            let r2 = (xr / a).powi(2) + (yr / b).powi(2);
            if r2 <= 1.0 {
                scene.data_mut()[y * size + x] += contrast * (1.0 - r2).powf(1.5);
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// Generates `2 * per_class` samples: `ab-NNNN` abnormals with masks, then
/// `no-NNNN` normals cut from blob-free scenes at mirrored locations.
pub fn synth_generate(config: &SynthConfig) -> Result<Vec<RoiSample>, DataError> {
    config.validate()?;
    let scene_size = config.scene_size();
    let mut abnormal = Vec::with_capacity(config.per_class);
    let mut rects = Vec::with_capacity(config.per_class);
    for i in 1..=config.per_class {
        let id = format!("ab-{i:04}");
        let mut rng = derive_rng(config.seed, "abnormal", &id);
        let mut scene = background(scene_size, config.texture, &mut rng);
        let mask = paint_blob(&mut scene, config, &mut rng);
        let (roi, roi_mask, rect) =
            crop_abnormal_roi(&quantize_scene(&scene), &mask, &mut rng)?;
        let image = resize_roi(&roi, config.roi_size);
        let final_mask = resize_mask_nearest(&roi_mask, config.roi_size, config.roi_size);
        debug_assert!(final_mask.count_ones() > 0, "blob lost in resize");
        rects.push(rect);
        abnormal.push(RoiSample::new(
            id,
            image,
            LABEL_ABNORMAL,
            Some(final_mask),
            super::Provenance::Synthetic,
        )?);
    }
    let mut samples = abnormal;
    for (i, rect) in rects.iter().enumerate() {
        let id = format!("no-{:04}", i + 1);
        let mut rng = derive_rng(config.seed, "normal", &id);
        let scene = background(scene_size, config.texture, &mut rng);
        let (roi, _) = crop_normal_roi(&quantize_scene(&scene), rect, None)?;
        let image = resize_roi(&roi, config.roi_size);
        samples.push(RoiSample::new(
            id,
            image,
            LABEL_NORMAL,
            None,
            super::Provenance::Synthetic,
        )?);
    }
    Ok(samples)
}
