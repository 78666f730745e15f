//! Weakly-supervised tumor segmentation from image-level labels.
//!
//! The pipeline trains small CNN classifiers to tell normal from abnormal
//! region-of-interest crops, extracts gradient-weighted class activation
//! maps from the trained models, and scores those maps as segmentations
//! against the known tumor masks across every binarization threshold. A
//! deterministic synthetic generator stands in for real mammography data
//! at desk scale; externally prepared PNG datasets load through the same
//! manifest format.

pub mod cli;
pub mod data;
pub mod gradcam;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod tensor;
