//! Dataset side of the pipeline: boundary decoding, ROI cropping, bit-depth
//! conversion, the synthetic dataset generator, and the filtered-ROI
//! constructions used by the second experiment.
//!
//! 8-bit grayscale rasters reuse [`GrayMap`] so images, CAM renderings, and
//! metric inputs share one representation.

pub mod chain;
pub mod crop;
pub mod filters;
pub mod manifest;
pub mod synth;

pub use chain::{decode_chain_code, parse_chain_codes, BoundaryChain};
pub use crop::{crop_abnormal_roi, crop_image, crop_mask, crop_normal_roi, mask_bounding_box, CropRect};
pub use filters::{
    cam_filter, inverse_mask_filter, mask_filter, random_mask_assign, resize_mask_nearest,
};
pub use manifest::{
    load_gray_image, load_manifest, load_mask_png, save_gray_png, save_manifest, save_mask_png,
    DatasetManifest, SampleRecord, Split,
};
pub use synth::{synth_generate, SynthConfig};

use crate::metrics::{BinaryMask, GrayMap};
use crate::scalar::Element;
use crate::tensor::Tensor;

/// Errors from dataset construction and preprocessing.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("abnormal sample '{id}' requires a nonempty mask")]
    MissingMask { id: String },
    #[error("sample '{id}': mask {mask_width}x{mask_height} does not match image {width}x{height}")]
    MaskDimsMismatch {
        id: String,
        width: usize,
        height: usize,
        mask_width: usize,
        mask_height: usize,
    },
    #[error("image dimensions {a_width}x{a_height} and {b_width}x{b_height} differ")]
    DimensionMismatch {
        a_width: usize,
        a_height: usize,
        b_width: usize,
        b_height: usize,
    },
    #[error("chain code {0} is not a direction in 0..=7")]
    BadChainCode(u8),
    #[error("chain-code text: {0}")]
    ChainParse(String),
    #[error("chain code does not close: ends {end:?}, started {start:?}")]
    OpenChain {
        start: (usize, usize),
        end: (isize, isize),
    },
    #[error("chain code leaves the {width}x{height} canvas at {at:?}")]
    ChainOutOfBounds {
        width: usize,
        height: usize,
        at: (isize, isize),
    },
    #[error("cannot crop an empty mask")]
    EmptyMask,
    #[error("crop rect {rect:?} does not fit a {width}x{height} image")]
    RectOutOfBounds { rect: CropRect, width: usize, height: usize },
    #[error("mirrored crop rect {rect:?} overlaps the abnormal rect {abnormal:?}")]
    MirroredRectOverlaps { rect: CropRect, abnormal: CropRect },
    #[error("borrowed-mask pool is empty")]
    EmptyMaskPool,
    #[error("invalid generator config: {0}")]
    BadSynthConfig(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

/// 16-bit grayscale raster, row-major; input side of [`to_8bit`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster16 {
    width: usize,
    height: usize,
    pixels: Vec<u16>,
}

impl Raster16 {
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u16>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel count must match dims");
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }
}

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Real,
    Synthetic,
}

/// Class labels; the numeric values index the network's logits.
pub const LABEL_NORMAL: u8 = 0;
pub const LABEL_ABNORMAL: u8 = 1;

/// One region-of-interest crop with its label and (where known) truth mask.
#[derive(Debug, Clone)]
pub struct RoiSample {
    pub id: String,
    pub image: GrayMap,
    /// 0 = normal, 1 = abnormal.
    pub label: u8,
    pub mask: Option<BinaryMask>,
    pub provenance: Provenance,
}

impl RoiSample {
    /// Validates the label/mask invariants before accepting the sample.
    pub fn new(
        id: String,
        image: GrayMap,
        label: u8,
        mask: Option<BinaryMask>,
        provenance: Provenance,
    ) -> Result<Self, DataError> {
        if let Some(mask) = &mask {
            if mask.width() != image.width() || mask.height() != image.height() {
                return Err(DataError::MaskDimsMismatch {
                    id,
                    width: image.width(),
                    height: image.height(),
                    mask_width: mask.width(),
                    mask_height: mask.height(),
                });
            }
        }
        let abnormal_real = label == LABEL_ABNORMAL && provenance == Provenance::Real;
        if abnormal_real && !mask.as_ref().is_some_and(|m| m.count_ones() > 0) {
            return Err(DataError::MissingMask { id });
        }
        Ok(Self {
            id,
            image,
            label,
            mask,
            provenance,
        })
    }
}

/// Converts an 8-bit image to a `[1,H,W]` tensor scaled into `[0,1]`.
pub fn image_to_tensor<T: Element>(image: &GrayMap) -> Tensor<T> {
    let data = image
        .pixels()
        .iter()
        .map(|&p| T::from_f64_value(p as f64 / 255.0))
        .collect();
    Tensor::from_vec(vec![1, image.height(), image.width()], data)
        .expect("pixel count matches image dims")
}

/// Linear min-max rescale of a 16-bit raster to 8 bits with round-half-up.
///
/// A constant image maps to all zeros.
pub fn to_8bit(image: &Raster16) -> GrayMap {
    let &min = image.pixels.iter().min().expect("raster is nonempty");
    let &max = image.pixels.iter().max().expect("raster is nonempty");
    let pixels = if min == max {
        vec![0u8; image.pixels.len()]
    } else {
        let span = (max - min) as f64;
        image
            .pixels
            .iter()
            .map(|&p| ((p - min) as f64 * 255.0 / span).round() as u8)
            .collect()
    };
    GrayMap::from_pixels(image.width, image.height, pixels).expect("dims preserved")
}
