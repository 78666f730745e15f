//! Central finite-difference verification of analytic gradients.

use super::Tensor;

/// Elements with an analytic gradient at least this large are compared
/// relatively; smaller ones are compared absolutely (scaled so the usual
/// 1e-5 acceptance bound corresponds to an absolute error of 1e-8).
const ABS_FLOOR: f64 = 1e-8;
const ABS_SCALE: f64 = 1e-3;

/// Compares `analytic` against central finite differences of `f` at `x`.
///
/// Per coordinate the probe is `(f(x + ε·e) − f(x − ε·e)) / (2ε)`. The
/// returned value is the worst error over all coordinates: relative where
/// `|analytic| ≥ 1e-8`, otherwise `|difference| / 1e-3` so that a single
/// threshold bounds both regimes.
pub fn finite_difference_check<F>(f: F, x: &Tensor<f64>, analytic: &Tensor<f64>, epsilon: f64) -> f64
where
    F: Fn(&Tensor<f64>) -> f64,
{
    assert_eq!(
        x.shape(),
        analytic.shape(),
        "analytic gradient must be shaped like the input"
    );
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let original = x.data()[i];
        probe.data_mut()[i] = original + epsilon;
        let plus = f(&probe);
        probe.data_mut()[i] = original - epsilon;
        let minus = f(&probe);
        probe.data_mut()[i] = original;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let expected = analytic.data()[i];
        let diff = (numeric - expected).abs();
        let err = if expected.abs() >= ABS_FLOOR {
            diff / expected.abs()
        } else {
            diff / ABS_SCALE
        };
        worst = worst.max(err);
    }
    worst
}
