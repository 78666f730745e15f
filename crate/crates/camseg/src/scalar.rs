//! Numeric element types shared by the tensor and network code.
//!
//! Training defaults to `f32` for throughput; gradient checking and CAM
//! extraction run in `f64`. Everything numeric is generic over [`Element`]
//! so both precisions share one implementation.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Element dtype tag, used by the checkpoint container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Dtype {
    #[serde(rename = "f32")]
    F32,
    #[serde(rename = "f64")]
    F64,
}

impl Dtype {
    pub fn byte_width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

impl Display for Dtype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dtype::F32 => write!(f, "f32"),
            Dtype::F64 => write!(f, "f64"),
        }
    }
}

/// Scalar type a [`crate::tensor::Tensor`] can hold.
pub trait Element:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    const DTYPE: Dtype;

    fn from_f64_value(value: f64) -> Self {
        <Self as NumCast>::from(value).expect("finite f64 converts to every Element")
    }

    fn to_f64_value(self) -> f64 {
        self.to_f64().expect("Element converts to f64")
    }

    /// Little-endian encoding, for the checkpoint weight blobs.
    fn write_le(self, out: &mut Vec<u8>);

    /// Inverse of [`Element::write_le`]; `bytes` holds exactly `DTYPE.byte_width()` bytes.
    fn read_le(bytes: &[u8]) -> Self;

    /// Lossless-where-possible conversion from a usize count.
    fn from_count(value: usize) -> Self {
        Self::from_f64_value(value as f64)
    }
}

impl Element for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4-byte f32 slice"))
    }
}

impl Element for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8-byte f64 slice"))
    }
}

/// Numeric mode selected by `CAMSEG_PRECISION`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Precision {
    #[default]
    #[serde(rename = "single")]
    Single,
    #[serde(rename = "double")]
    Double,
}

impl Precision {
    /// Reads `CAMSEG_PRECISION` (`single` | `double`); defaults to single.
    pub fn from_env() -> Self {
        match std::env::var("CAMSEG_PRECISION").as_deref() {
            Ok("double") => Precision::Double,
            _ => Precision::Single,
        }
    }
}
