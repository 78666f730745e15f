//! Dice coefficient and threshold-swept mean-Dice for scoring gray-value
//! activation maps against binary truth masks.
//!
//! `mean_dice` averages the Dice coefficient over all 256 binarization
//! thresholds. The production implementation is an O(pixels + 256)
//! histogram sweep; [`mean_dice_literal`] keeps the direct 256-pass
//! definition as a reference, and the two agree bit-for-bit because both
//! reduce each threshold to the same integer counts and sum terms in the
//! same order.

use serde::{Deserialize, Serialize};

/// Errors from mask/map construction and comparison.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("dimensions {a_width}x{a_height} and {b_width}x{b_height} differ")]
    DimensionMismatch {
        a_width: usize,
        a_height: usize,
        b_width: usize,
        b_height: usize,
    },
    #[error("pixel count {actual} does not match {width}x{height}")]
    LengthMismatch {
        width: usize,
        height: usize,
        actual: usize,
    },
    #[error("need at least one (mask, map) pair")]
    EmptyPairList,
}

/// Binary foreground mask; `true` marks tumor/foreground pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    /// All-background mask.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, MetricsError> {
        if bits.len() != width * height {
            return Err(MetricsError::LengthMismatch {
                width,
                height,
                actual: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Number of foreground pixels.
    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_all_background(&self) -> bool {
        self.bits.iter().all(|&b| !b)
    }
}

/// 8-bit gray image, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrayMap {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayMap {
    pub fn from_pixels(
        width: usize,
        height: usize,
        pixels: Vec<u8>,
    ) -> Result<Self, MetricsError> {
        if pixels.len() != width * height {
            return Err(MetricsError::LengthMismatch {
                width,
                height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

fn check_dims(
    a_width: usize,
    a_height: usize,
    b_width: usize,
    b_height: usize,
) -> Result<(), MetricsError> {
    if a_width != b_width || a_height != b_height {
        return Err(MetricsError::DimensionMismatch {
            a_width,
            a_height,
            b_width,
            b_height,
        });
    }
    Ok(())
}

/// Single Dice term from integer counts: `2·|A∩B| / (|A|+|B|)`.
///
/// Both mean-Dice implementations funnel through this, which is what makes
/// them bit-identical. `total` is `|A|+|B|`; two empty masks score 1.
#[inline]
fn dice_from_counts(intersection: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        2.0 * intersection as f64 / total as f64
    }
}

/// Dice coefficient of two binary masks; empty-vs-empty is defined as 1.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricsError> {
    check_dims(a.width, a.height, b.width, b.height)?;
    let mut intersection = 0usize;
    let mut total = 0usize;
    for (&pa, &pb) in a.bits.iter().zip(&b.bits) {
        intersection += (pa && pb) as usize;
        total += pa as usize + pb as usize;
    }
    Ok(dice_from_counts(intersection, total))
}

/// Thresholds a gray map with strict `> t`.
pub fn binarize(map: &GrayMap, t: u8) -> BinaryMask {
    BinaryMask {
        width: map.width,
        height: map.height,
        bits: map.pixels.iter().map(|&p| p > t).collect(),
    }
}

/// Mean Dice over all 256 binarization thresholds (histogram sweep).
pub fn mean_dice(a: &BinaryMask, b: &GrayMap) -> Result<f64, MetricsError> {
    check_dims(a.width, a.height, b.width, b.height)?;
    // Histogram the gray values once, overall and restricted to A.
    let mut hist = [0usize; 256];
    let mut hist_in_a = [0usize; 256];
    for (&bit, &p) in a.bits.iter().zip(&b.pixels) {
        hist[p as usize] += 1;
        if bit {
            hist_in_a[p as usize] += 1;
        }
    }
    let a_count = a.count_ones();

    // above[t] = #{pixels > t}; suffix sums walked from the top.
    let mut above = [0usize; 256];
    let mut above_in_a = [0usize; 256];
    for t in (0..255).rev() {
        above[t] = above[t + 1] + hist[t + 1];
        above_in_a[t] = above_in_a[t + 1] + hist_in_a[t + 1];
    }

    let mut sum = 0.0f64;
    for t in 0..256 {
        sum += dice_from_counts(above_in_a[t], a_count + above[t]);
    }
    Ok(sum / 256.0)
}

/// Mean Dice by the direct definition: binarize at each of the 256
/// thresholds and average the Dice coefficients.
///
/// Retained as the reference implementation [`mean_dice`] is tested
/// against; production code should prefer the sweep.
pub fn mean_dice_literal(a: &BinaryMask, b: &GrayMap) -> Result<f64, MetricsError> {
    check_dims(a.width, a.height, b.width, b.height)?;
    let mut sum = 0.0f64;
    for t in 0..=255u8 {
        sum += dice(a, &binarize(b, t))?;
    }
    Ok(sum / 256.0)
}

/// Arithmetic mean of `mean_dice` over `(mask, map)` pairs.
pub fn averaged_mean_dice<'a>(
    pairs: impl IntoIterator<Item = (&'a BinaryMask, &'a GrayMap)>,
) -> Result<f64, MetricsError> {
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (mask, map) in pairs {
        sum += mean_dice(mask, map)?;
        count += 1;
    }
    if count == 0 {
        return Err(MetricsError::EmptyPairList);
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn mask_from_str(width: usize, rows: &[&str]) -> BinaryMask {
        let bits = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#'))
            .collect();
        BinaryMask::from_bits(width, rows.len(), bits).unwrap()
    }

    #[test]
    fn dice_of_identical_nonempty_masks_is_one() {
        let a = mask_from_str(3, &["##.", ".#.", "..."]);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn dice_of_disjoint_masks_is_zero() {
        let a = mask_from_str(2, &["#.", ".."]);
        let b = mask_from_str(2, &[".#", "#."]);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn dice_half_overlap() {
        // A = {p1,p2}, B = {p1,p3}: 2*1/(2+2) = 0.5.
        let a = mask_from_str(3, &["##."]);
        let b = mask_from_str(3, &["#.#"]);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn dice_rejects_dimension_mismatch() {
        let a = BinaryMask::new(2, 2);
        let b = BinaryMask::new(3, 2);
        assert!(matches!(
            dice(&a, &b),
            Err(MetricsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn binarize_is_strictly_greater_than() {
        let map = GrayMap::from_pixels(2, 2, vec![128; 4]).unwrap();
        assert_eq!(binarize(&map, 127).count_ones(), 4);
        assert_eq!(binarize(&map, 128).count_ones(), 0);
    }

    #[test]
    fn binarize_at_255_is_always_empty() {
        let map = GrayMap::from_pixels(2, 2, vec![0, 100, 200, 255]).unwrap();
        assert!(binarize(&map, 255).is_all_background());
    }

    #[test]
    fn mean_dice_of_binary_rendering_is_255_over_256() {
        // Gray map = mask scaled to {0,255}: thresholds 0..=254 reproduce the
        // mask exactly, threshold 255 yields empty-vs-nonempty.
        let a = mask_from_str(4, &["####", "#..#", "####", "...."]);
        let pixels = a.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
        let b = GrayMap::from_pixels(4, 4, pixels).unwrap();
        assert_eq!(mean_dice(&a, &b).unwrap(), 255.0 / 256.0);
        assert_eq!(mean_dice_literal(&a, &b).unwrap(), 255.0 / 256.0);
    }

    #[test]
    fn mean_dice_zero_map_against_nonempty_mask_is_zero() {
        let a = mask_from_str(2, &["#.", ".."]);
        let b = GrayMap::from_pixels(2, 2, vec![0; 4]).unwrap();
        assert_eq!(mean_dice(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn mean_dice_empty_mask_zero_map_is_one() {
        let a = BinaryMask::new(3, 3);
        let b = GrayMap::from_pixels(3, 3, vec![0; 9]).unwrap();
        assert_eq!(mean_dice(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn averaged_mean_dice_single_pair_equals_mean_dice() {
        let a = mask_from_str(2, &["#.", "##"]);
        let b = GrayMap::from_pixels(2, 2, vec![200, 10, 180, 220]).unwrap();
        let single = mean_dice(&a, &b).unwrap();
        let avg = averaged_mean_dice([(&a, &b)]).unwrap();
        assert_eq!(avg, single);
    }

    #[test]
    fn averaged_mean_dice_duplicated_pair_is_unchanged() {
        let a = mask_from_str(2, &["#.", "##"]);
        let b = GrayMap::from_pixels(2, 2, vec![200, 10, 180, 220]).unwrap();
        let one = averaged_mean_dice([(&a, &b)]).unwrap();
        let two = averaged_mean_dice([(&a, &b), (&a, &b)]).unwrap();
        assert!((one - two).abs() <= 1e-15);
    }

    #[test]
    fn averaged_mean_dice_matches_brute_force_sum() {
        let mut rng = derive_rng(9, "metrics-test", "avg");
        let mut pairs = Vec::new();
        for _ in 0..5 {
            let bits = (0..64).map(|_| rng.gen_bool(0.3)).collect();
            let pixels = (0..64).map(|_| rng.gen::<u8>()).collect();
            pairs.push((
                BinaryMask::from_bits(8, 8, bits).unwrap(),
                GrayMap::from_pixels(8, 8, pixels).unwrap(),
            ));
        }
        let got = averaged_mean_dice(pairs.iter().map(|(m, g)| (m, g))).unwrap();
        let mut want = 0.0;
        for (m, g) in &pairs {
            want += mean_dice(m, g).unwrap();
        }
        want /= pairs.len() as f64;
        assert_eq!(got, want);
    }

    #[test]
    fn averaged_mean_dice_rejects_empty_list() {
        let empty: [(&BinaryMask, &GrayMap); 0] = [];
        assert_eq!(
            averaged_mean_dice(empty),
            Err(MetricsError::EmptyPairList)
        );
    }

    proptest! {
        #[test]
        fn dice_is_symmetric_and_bounded(
            bits_a in proptest::collection::vec(any::<bool>(), 36),
            bits_b in proptest::collection::vec(any::<bool>(), 36),
        ) {
            let a = BinaryMask::from_bits(6, 6, bits_a).unwrap();
            let b = BinaryMask::from_bits(6, 6, bits_b).unwrap();
            let ab = dice(&a, &b).unwrap();
            let ba = dice(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
        }

        #[test]
        fn sweep_equals_literal_bitwise(
            bits in proptest::collection::vec(any::<bool>(), 48),
            pixels in proptest::collection::vec(any::<u8>(), 48),
        ) {
            let a = BinaryMask::from_bits(8, 6, bits).unwrap();
            let b = GrayMap::from_pixels(8, 6, pixels).unwrap();
            let fast = mean_dice(&a, &b).unwrap();
            let slow = mean_dice_literal(&a, &b).unwrap();
            prop_assert_eq!(fast.to_bits(), slow.to_bits());
        }

        #[test]
        fn two_level_maps_have_closed_form_mean_dice(
            bits in proptest::collection::vec(any::<bool>(), 25),
            levels in proptest::collection::vec(any::<bool>(), 25),
        ) {
            // Map taking only {0,255}: every threshold below 255 sees the
            // same mask, threshold 255 sees the empty mask.
            let a = BinaryMask::from_bits(5, 5, bits).unwrap();
            let pixels = levels.iter().map(|&l| if l { 255u8 } else { 0 }).collect();
            let b = GrayMap::from_pixels(5, 5, pixels).unwrap();
            let level_mask = binarize(&b, 0);
            let empty = BinaryMask::new(5, 5);
            // The sweep sums 255 equal terms sequentially while the closed
            // form multiplies once, so allow for accumulation rounding.
            let want = (255.0 * dice(&a, &level_mask).unwrap()
                + dice(&a, &empty).unwrap())
                / 256.0;
            prop_assert!((mean_dice(&a, &b).unwrap() - want).abs() <= 1e-12);
        }
    }
}
