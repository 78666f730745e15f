//! ROI extraction: tumor bounding boxes, randomized padded crops around
//! them, and same-size mirrored crops from the contralateral image.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::{BinaryMask, GrayMap};

use super::DataError;

/// Axis-aligned crop rectangle; `x`/`y` is the top-left pixel, the right
/// and bottom edges are exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl CropRect {
    pub fn right(&self) -> usize {
        self.x + self.width
    }

    pub fn bottom(&self) -> usize {
        self.y + self.height
    }

    pub fn contains(&self, other: &CropRect) -> bool {
        self.x <= other.x
            && self.y <= other.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn overlaps(&self, other: &CropRect) -> bool {
        self.x < other.right()
            && other.x < self.right()
            && self.y < other.bottom()
            && other.y < self.bottom()
    }

    fn fits(&self, width: usize, height: usize) -> bool {
        self.right() <= width && self.bottom() <= height
    }
}

/// Tightest rectangle around the mask's foreground pixels.
pub fn mask_bounding_box(mask: &BinaryMask) -> Result<CropRect, DataError> {
    let (mut min_x, mut min_y) = (usize::MAX, usize::MAX);
    let (mut max_x, mut max_y) = (0usize, 0usize);
    let mut any = false;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                any = true;
                min_x = min_x.min(x);
                min_y = min_y.min(y);
                max_x = max_x.max(x);
                max_y = max_y.max(y);
            }
        }
    }
    if !any {
        return Err(DataError::EmptyMask);
    }
    Ok(CropRect {
        x: min_x,
        y: min_y,
        width: max_x - min_x + 1,
        height: max_y - min_y + 1,
    })
}

/// Cuts `rect` out of an image.
pub fn crop_image(image: &GrayMap, rect: &CropRect) -> Result<GrayMap, DataError> {
    if !rect.fits(image.width(), image.height()) {
        return Err(DataError::RectOutOfBounds {
            rect: *rect,
            width: image.width(),
            height: image.height(),
        });
    }
    let mut pixels = Vec::with_capacity(rect.width * rect.height);
    for y in rect.y..rect.bottom() {
        for x in rect.x..rect.right() {
            pixels.push(image.get(x, y));
        }
    }
    Ok(GrayMap::from_pixels(rect.width, rect.height, pixels)?)
}

/// Cuts `rect` out of a mask.
pub fn crop_mask(mask: &BinaryMask, rect: &CropRect) -> Result<BinaryMask, DataError> {
    if !rect.fits(mask.width(), mask.height()) {
        return Err(DataError::RectOutOfBounds {
            rect: *rect,
            width: mask.width(),
            height: mask.height(),
        });
    }
    let mut out = BinaryMask::new(rect.width, rect.height);
    for y in 0..rect.height {
        for x in 0..rect.width {
            out.set(x, y, mask.get(rect.x + x, rect.y + y));
        }
    }
    Ok(out)
}

/// Crops the region around the tumor with randomized padding.
///
/// Each side of the tumor bounding box is expanded by an independent
/// uniform draw in `[0.10, 0.30]` of the box's extent along that axis
/// (width for left/right, height for top/bottom), rounded to whole pixels
/// and clamped at the image border. Draw order is left, right, top,
/// bottom. The truth mask is cropped identically.
pub fn crop_abnormal_roi<R: Rng>(
    image: &GrayMap,
    mask: &BinaryMask,
    rng: &mut R,
) -> Result<(GrayMap, BinaryMask, CropRect), DataError> {
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(DataError::DimensionMismatch {
            a_width: image.width(),
            a_height: image.height(),
            b_width: mask.width(),
            b_height: mask.height(),
        });
    }
    let bbox = mask_bounding_box(mask)?;
    let mut pad = |extent: usize| -> usize {
        (rng.gen_range(0.10..=0.30) * extent as f64).round() as usize
    };
    let (left, right) = (pad(bbox.width), pad(bbox.width));
    let (top, bottom) = (pad(bbox.height), pad(bbox.height));
    let x0 = bbox.x.saturating_sub(left);
    let y0 = bbox.y.saturating_sub(top);
    let x1 = (bbox.right() + right).min(image.width());
    let y1 = (bbox.bottom() + bottom).min(image.height());
    let rect = CropRect {
        x: x0,
        y: y0,
        width: x1 - x0,
        height: y1 - y0,
    };
    let roi = crop_image(image, &rect)?;
    let roi_mask = crop_mask(mask, &rect)?;
    Ok((roi, roi_mask, rect))
}

/// Crops the horizontally mirrored counterpart of `rect` from the
/// contralateral image.
///
/// The mirrored rectangle keeps `rect`'s size and vertical position;
/// horizontally it sits where `rect` would land after flipping the
/// original image left-to-right. Fails (so the caller can skip the sample)
/// when the mirrored rectangle does not fit the contralateral image or
/// overlaps a known abnormal region on that side.
pub fn crop_normal_roi(
    contralateral: &GrayMap,
    rect: &CropRect,
    contralateral_abnormal: Option<&CropRect>,
) -> Result<(GrayMap, CropRect), DataError> {
    let out_of_bounds = |mirrored: CropRect| DataError::RectOutOfBounds {
        rect: mirrored,
        width: contralateral.width(),
        height: contralateral.height(),
    };
    if rect.right() > contralateral.width() {
        return Err(out_of_bounds(*rect));
    }
    let mirrored = CropRect {
        x: contralateral.width() - rect.right(),
        y: rect.y,
        width: rect.width,
        height: rect.height,
    };
    if !mirrored.fits(contralateral.width(), contralateral.height()) {
        return Err(out_of_bounds(mirrored));
    }
    if let Some(abnormal) = contralateral_abnormal {
        if mirrored.overlaps(abnormal) {
            return Err(DataError::MirroredRectOverlaps {
                rect: mirrored,
                abnormal: *abnormal,
            });
        }
    }
    let roi = crop_image(contralateral, &mirrored)?;
    Ok((roi, mirrored))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use rand::RngCore;

    /// Rng whose every draw is the low end of any uniform range.
    struct ZeroRng;

    impl RngCore for ZeroRng {
        fn next_u32(&mut self) -> u32 {
            0
        }
        fn next_u64(&mut self) -> u64 {
            0
        }
        fn fill_bytes(&mut self, dest: &mut [u8]) {
            dest.fill(0);
        }
        fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
            dest.fill(0);
            Ok(())
        }
    }

    fn block_mask(width: usize, height: usize, rect: &CropRect) -> BinaryMask {
        let mut mask = BinaryMask::new(width, height);
        for y in rect.y..rect.bottom() {
            for x in rect.x..rect.right() {
                mask.set(x, y, true);
            }
        }
        mask
    }

    fn flat_image(width: usize, height: usize) -> GrayMap {
        GrayMap::from_pixels(width, height, vec![7; width * height]).unwrap()
    }

    #[test]
    fn bounding_box_is_tight() {
        let mut mask = BinaryMask::new(10, 8);
        mask.set(3, 2, true);
        mask.set(6, 5, true);
        let bbox = mask_bounding_box(&mask).unwrap();
        assert_eq!(
            bbox,
            CropRect {
                x: 3,
                y: 2,
                width: 4,
                height: 4
            }
        );
    }

    #[test]
    fn bounding_box_of_empty_mask_is_an_error() {
        assert!(matches!(
            mask_bounding_box(&BinaryMask::new(4, 4)),
            Err(DataError::EmptyMask)
        ));
    }

    #[test]
    fn padding_stays_in_range_and_contains_the_tumor() {
        // 100×50 tumor box far from any border: width must land in
        // [120, 160], height in [60, 80], and the box must stay inside.
        let tumor = CropRect {
            x: 150,
            y: 150,
            width: 100,
            height: 50,
        };
        let image = flat_image(400, 400);
        let mask = block_mask(400, 400, &tumor);
        for trial in 0..100 {
            let mut rng = derive_rng(9, "crop-test", &trial.to_string());
            let (roi, roi_mask, rect) = crop_abnormal_roi(&image, &mask, &mut rng).unwrap();
            assert!((120..=160).contains(&rect.width), "width {}", rect.width);
            assert!((60..=80).contains(&rect.height), "height {}", rect.height);
            assert!(rect.contains(&tumor));
            assert_eq!((roi.width(), roi.height()), (rect.width, rect.height));
            assert_eq!(roi_mask.count_ones(), 100 * 50);
        }
    }

    #[test]
    fn minimum_draws_give_exactly_ten_percent_padding() {
        let tumor = CropRect {
            x: 150,
            y: 150,
            width: 100,
            height: 50,
        };
        let image = flat_image(400, 400);
        let mask = block_mask(400, 400, &tumor);
        let (_, _, rect) = crop_abnormal_roi(&image, &mask, &mut ZeroRng).unwrap();
        assert_eq!((rect.width, rect.height), (120, 60));
        assert_eq!((rect.x, rect.y), (140, 145));
    }

    #[test]
    fn padding_clamps_at_the_image_border() {
        let tumor = CropRect {
            x: 0,
            y: 0,
            width: 40,
            height: 40,
        };
        let image = flat_image(50, 50);
        let mask = block_mask(50, 50, &tumor);
        for trial in 0..20 {
            let mut rng = derive_rng(10, "crop-test", &trial.to_string());
            let (_, _, rect) = crop_abnormal_roi(&image, &mask, &mut rng).unwrap();
            assert_eq!((rect.x, rect.y), (0, 0));
            assert!(rect.right() <= 50 && rect.bottom() <= 50);
            assert!(rect.contains(&tumor));
        }
    }

    #[test]
    fn mismatched_mask_dims_are_rejected() {
        let err =
            crop_abnormal_roi(&flat_image(8, 8), &BinaryMask::new(4, 4), &mut ZeroRng)
                .unwrap_err();
        assert!(matches!(err, DataError::DimensionMismatch { .. }));
    }

    #[test]
    fn mirrored_crop_lands_on_the_marker_pixel() {
        // rect at x=1 of a width-10 image mirrors to x = 10-(1+3) = 6.
        let rect = CropRect {
            x: 1,
            y: 2,
            width: 3,
            height: 2,
        };
        let mut pixels = vec![0u8; 10 * 6];
        pixels[2 * 10 + 6] = 200;
        let contralateral = GrayMap::from_pixels(10, 6, pixels).unwrap();
        let (roi, mirrored) = crop_normal_roi(&contralateral, &rect, None).unwrap();
        assert_eq!((mirrored.x, mirrored.y), (6, 2));
        assert_eq!((roi.width(), roi.height()), (3, 2));
        assert_eq!(roi.get(0, 0), 200);
    }

    #[test]
    fn mirrored_crop_out_of_bounds_is_an_error() {
        let rect = CropRect {
            x: 1,
            y: 2,
            width: 3,
            height: 2,
        };
        // Too short: y=2..4 does not fit a height-3 image.
        let err = crop_normal_roi(&flat_image(10, 3), &rect, None).unwrap_err();
        assert!(matches!(err, DataError::RectOutOfBounds { .. }));
    }

    #[test]
    fn mirrored_crop_overlapping_an_abnormality_is_an_error() {
        let rect = CropRect {
            x: 1,
            y: 2,
            width: 3,
            height: 2,
        };
        let abnormal = CropRect {
            x: 7,
            y: 3,
            width: 2,
            height: 2,
        };
        let err = crop_normal_roi(&flat_image(10, 6), &rect, Some(&abnormal)).unwrap_err();
        assert!(matches!(err, DataError::MirroredRectOverlaps { .. }));
    }

    #[test]
    fn adjacent_rects_do_not_count_as_overlapping() {
        let a = CropRect {
            x: 0,
            y: 0,
            width: 3,
            height: 3,
        };
        let b = CropRect {
            x: 3,
            y: 0,
            width: 2,
            height: 3,
        };
        assert!(!a.overlaps(&b));
        assert!(a.overlaps(&CropRect {
            x: 2,
            y: 2,
            width: 2,
            height: 2
        }));
    }
}
