//! The three filtered-ROI constructions of the second experiment: CAM
//! attenuation, truth-mask cutouts, and their complements, plus the
//! borrowed-mask assignment that gives normal ROIs a mask to cut with.

use rand::Rng;

use crate::gradcam::Cam;
use crate::metrics::{BinaryMask, GrayMap};

use super::{DataError, RoiSample};

fn check_dims(
    roi: &GrayMap,
    other_width: usize,
    other_height: usize,
) -> Result<(), DataError> {
    if roi.width() != other_width || roi.height() != other_height {
        return Err(DataError::DimensionMismatch {
            a_width: roi.width(),
            a_height: roi.height(),
            b_width: other_width,
            b_height: other_height,
        });
    }
    Ok(())
}

/// Attenuates a ROI by a unit-range activation map: `round(pixel · unit)`.
pub fn cam_filter(roi: &GrayMap, cam: &Cam) -> Result<GrayMap, DataError> {
    check_dims(roi, cam.unit.dim(1), cam.unit.dim(0))?;
    let pixels = roi
        .pixels()
        .iter()
        .zip(cam.unit.data())
        .map(|(&p, &u)| (p as f64 * u).round() as u8)
        .collect();
    Ok(GrayMap::from_pixels(roi.width(), roi.height(), pixels)?)
}

/// Keeps the ROI where the mask is set, black elsewhere.
pub fn mask_filter(roi: &GrayMap, mask: &BinaryMask) -> Result<GrayMap, DataError> {
    check_dims(roi, mask.width(), mask.height())?;
    let pixels = roi
        .pixels()
        .iter()
        .zip(mask.bits())
        .map(|(&p, &keep)| if keep { p } else { 0 })
        .collect();
    Ok(GrayMap::from_pixels(roi.width(), roi.height(), pixels)?)
}

/// Keeps the ROI where the mask is clear, black elsewhere — the exact
/// complement of [`mask_filter`], so the two sum back to the original.
pub fn inverse_mask_filter(roi: &GrayMap, mask: &BinaryMask) -> Result<GrayMap, DataError> {
    check_dims(roi, mask.width(), mask.height())?;
    let pixels = roi
        .pixels()
        .iter()
        .zip(mask.bits())
        .map(|(&p, &keep)| if keep { 0 } else { p })
        .collect();
    Ok(GrayMap::from_pixels(roi.width(), roi.height(), pixels)?)
}

/// Nearest-neighbor resize of a mask; each output pixel samples the source
/// pixel whose center is nearest.
pub fn resize_mask_nearest(mask: &BinaryMask, width: usize, height: usize) -> BinaryMask {
    assert!(width > 0 && height > 0, "target dims must be positive");
    let mut out = BinaryMask::new(width, height);
    for y in 0..height {
        let sy = (((y as f64 + 0.5) * mask.height() as f64 / height as f64).floor() as usize)
            .min(mask.height() - 1);
        for x in 0..width {
            let sx = (((x as f64 + 0.5) * mask.width() as f64 / width as f64).floor() as usize)
                .min(mask.width() - 1);
            out.set(x, y, mask.get(sx, sy));
        }
    }
    out
}

/// Pairs every normal sample with a uniformly drawn mask from the abnormal
/// pool, resized (nearest-neighbor) to the sample's own dimensions.
pub fn random_mask_assign<R: Rng>(
    normals: &[RoiSample],
    masks: &[BinaryMask],
    rng: &mut R,
) -> Result<Vec<RoiSample>, DataError> {
    if masks.is_empty() {
        return Err(DataError::EmptyMaskPool);
    }
    normals
        .iter()
        .map(|sample| {
            let pick = &masks[rng.gen_range(0..masks.len())];
            let resized =
                resize_mask_nearest(pick, sample.image.width(), sample.image.height());
            let mut out = sample.clone();
            out.mask = Some(resized);
            Ok(out)
        })
        .collect()
}
