//! Dense row-major tensors and the layer primitives built on them.
//!
//! The tensor type is deliberately minimal: a shape vector plus a contiguous
//! value buffer. Layer operations live in [`ops`] as free functions over
//! `(input, parameters) -> output` so forward passes stay pure and backward
//! passes recompute what they need from cached primals.

pub mod gradcheck;
pub mod ops;

pub use gradcheck::finite_difference_check;
pub use ops::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, gap_backward, gap_forward,
    maxpool_backward, maxpool_forward, relu_backward, relu_forward, softmax_cross_entropy,
};

use crate::scalar::Element;

/// Errors raised by tensor construction and layer operations.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TensorError {
    #[error("data length {actual} does not match shape {shape:?} (expected {expected})")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("shape {shape:?} contains a zero dimension")]
    ZeroDim { shape: Vec<usize> },
    #[error("{op}: expected {expected}, got {actual}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        actual: String,
    },
    #[error("{op}: stride must be at least 1")]
    ZeroStride { op: &'static str },
    #[error("kernel {kh}x{kw} exceeds padded input {h}x{w}")]
    KernelTooLarge {
        kh: usize,
        kw: usize,
        h: usize,
        w: usize,
    },
    #[error("pool window {window} exceeds input {height}x{width}")]
    WindowTooLarge {
        window: usize,
        height: usize,
        width: usize,
    },
    #[error("class label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}

/// Dense tensor with row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    /// Builds a tensor from a shape and matching flat data.
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self, TensorError> {
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::ZeroDim { shape });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::LengthMismatch {
                expected,
                actual: data.len(),
                shape,
            });
        }
        Ok(Self { shape, data })
    }

    /// All-zeros tensor of the given shape.
    ///
    /// Panics on a zero dimension; shapes are caller-controlled constants.
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(
            shape.iter().all(|&d| d > 0),
            "tensor shape {shape:?} contains a zero dimension"
        );
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    /// Tensor of the given shape filled with `value`.
    pub fn filled(shape: &[usize], value: T) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Size of dimension `axis`.
    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    /// Flat offset for a rank-2 index.
    #[inline]
    pub fn offset2(&self, r: usize, c: usize) -> usize {
        debug_assert_eq!(self.rank(), 2);
        r * self.shape[1] + c
    }

    /// Flat offset for a rank-3 index.
    #[inline]
    pub fn offset3(&self, c: usize, h: usize, w: usize) -> usize {
        debug_assert_eq!(self.rank(), 3);
        (c * self.shape[1] + h) * self.shape[2] + w
    }

    /// Flat offset for a rank-4 index.
    #[inline]
    pub fn offset4(&self, o: usize, i: usize, h: usize, w: usize) -> usize {
        debug_assert_eq!(self.rank(), 4);
        ((o * self.shape[1] + i) * self.shape[2] + h) * self.shape[3] + w
    }

    /// In-place elementwise addition; shapes must match.
    pub fn add_assign_tensor(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape, "add_assign_tensor shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// In-place multiplication by a scalar.
    pub fn scale(&mut self, factor: T) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// Elementwise map into a new tensor of the same shape.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Converts every element to another precision.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&v| U::from_f64_value(v.to_f64_value()))
                .collect(),
        }
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn same_shape(
        &self,
        other: &Self,
        op: &'static str,
    ) -> Result<(), TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                expected: format!("{:?}", self.shape),
                actual: format!("{:?}", other.shape),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_validates_length() {
        let err = Tensor::<f32>::from_vec(vec![2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(
            err,
            TensorError::LengthMismatch {
                expected: 6,
                actual: 5,
                ..
            }
        ));
    }

    #[test]
    fn from_vec_rejects_zero_dims() {
        let err = Tensor::<f32>::from_vec(vec![2, 0], vec![]).unwrap_err();
        assert!(matches!(err, TensorError::ZeroDim { .. }));
    }

    #[test]
    fn offsets_are_row_major() {
        let t = Tensor::<f64>::zeros(&[2, 3, 4]);
        assert_eq!(t.offset3(0, 0, 0), 0);
        assert_eq!(t.offset3(0, 0, 3), 3);
        assert_eq!(t.offset3(0, 1, 0), 4);
        assert_eq!(t.offset3(1, 0, 0), 12);
        assert_eq!(t.offset3(1, 2, 3), 23);
    }

    #[test]
    fn cast_widens_exactly() {
        let t = Tensor::from_vec(vec![3], vec![1.5f32, -0.25, 3.0]).unwrap();
        let wide: Tensor<f64> = t.cast();
        assert_eq!(wide.data(), &[1.5f64, -0.25, 3.0]);
    }
}
