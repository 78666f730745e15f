//! Declarative architecture and training-run descriptions.

use serde::{Deserialize, Serialize};

use crate::scalar::Precision;

/// Errors from architecture validation and training preconditions.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("architecture '{id}' must contain exactly one global average pool, found {count}")]
    GapCount { id: String, count: usize },
    #[error("architecture '{id}' needs at least one conv layer before the global average pool")]
    NoConvBeforeGap { id: String },
    #[error("architecture '{id}' must end in a 2-way dense head")]
    BadHead { id: String },
    #[error("architecture '{id}': only dense and relu layers may follow the global average pool")]
    SpatialLayerAfterGap { id: String },
    #[error("architecture '{id}': {reason}")]
    BadShape { id: String, reason: String },
    #[error("unknown architecture preset '{0}'")]
    UnknownPreset(String),
    #[error("train config: {0}")]
    BadTrainConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset contains only label {0}; training needs both classes")]
    SingleClass(u8),
    #[error("label {0} is not a valid class (expected 0 or 1)")]
    BadLabel(u8),
    #[error("input image is {actual}, architecture expects [1,{expected},{expected}]")]
    InputSize { expected: usize, actual: String },
    #[error("class index {0} out of range (two-class head)")]
    BadClass(usize),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

/// One layer in an architecture description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    GlobalAvgPool,
    Dense {
        units: usize,
    },
}

/// Named architecture: ordered layers over a square single-channel input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub id: String,
    /// Side length of the square input, in pixels.
    pub input_size: usize,
    pub layers: Vec<LayerSpec>,
}

/// Shape of a value flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flow {
    Spatial { channels: usize, h: usize, w: usize },
    Vector { len: usize },
}

impl NetworkSpec {
    /// Names accepted by [`NetworkSpec::preset`].
    pub const PRESETS: [&'static str; 2] = ["gap-head-small", "deep-head-small"];

    /// Builds one of the two stock architectures.
    ///
    /// `gap-head-small` pools straight into the 2-way head, the shape for
    /// which activation maps and explicit-weight maps provably coincide;
    /// `deep-head-small` inserts a hidden dense layer, exercising the
    /// gradient route where no explicit weights exist.
    pub fn preset(name: &str, input_size: usize) -> Result<Self, NnError> {
        let mut layers = Vec::new();
        for out_channels in [8, 16, 32] {
            layers.push(LayerSpec::Conv {
                out_channels,
                kernel: 3,
                stride: 1,
                padding: 1,
            });
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::MaxPool { window: 2, stride: 2 });
        }
        layers.push(LayerSpec::GlobalAvgPool);
        match name {
            "gap-head-small" => layers.push(LayerSpec::Dense { units: 2 }),
            "deep-head-small" => {
                layers.push(LayerSpec::Dense { units: 16 });
                layers.push(LayerSpec::Relu);
                layers.push(LayerSpec::Dense { units: 2 });
            }
            other => return Err(NnError::UnknownPreset(other.to_string())),
        }
        let spec = Self {
            id: name.to_string(),
            input_size,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Index of the global average pool layer.
    pub fn gap_index(&self) -> Option<usize> {
        self.layers
            .iter()
            .position(|l| matches!(l, LayerSpec::GlobalAvgPool))
    }

    /// True when the global average pool feeds the 2-way head directly —
    /// the premise under which explicit-weight maps are defined.
    pub fn is_gap_head(&self) -> bool {
        match self.gap_index() {
            Some(i) => {
                self.layers.len() == i + 2
                    && matches!(self.layers[i + 1], LayerSpec::Dense { units: 2 })
            }
            None => false,
        }
    }

    /// Checks the structural invariants and shape feasibility.
    pub fn validate(&self) -> Result<(), NnError> {
        let id = &self.id;
        let gap_count = self
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::GlobalAvgPool))
            .count();
        if gap_count != 1 {
            return Err(NnError::GapCount {
                id: id.clone(),
                count: gap_count,
            });
        }
        let gap = self.gap_index().expect("counted above");
        if !self.layers[..gap]
            .iter()
            .any(|l| matches!(l, LayerSpec::Conv { .. }))
        {
            return Err(NnError::NoConvBeforeGap { id: id.clone() });
        }
        if self.layers[gap + 1..]
            .iter()
            .any(|l| matches!(l, LayerSpec::Conv { .. } | LayerSpec::MaxPool { .. }))
        {
            return Err(NnError::SpatialLayerAfterGap { id: id.clone() });
        }
        match self.layers.last() {
            Some(LayerSpec::Dense { units: 2 }) => {}
            _ => return Err(NnError::BadHead { id: id.clone() }),
        }
        // Walking the shapes catches degenerate convolutions and pools.
        self.flow_shapes()?;
        Ok(())
    }

    /// Channel count and spatial dims of the tensor entering the global
    /// average pool — the feature maps every activation map is built from.
    pub fn feature_map_dims(&self) -> Result<(usize, usize, usize), NnError> {
        let shapes = self.flow_shapes()?;
        let gap = self.gap_index().ok_or_else(|| NnError::GapCount {
            id: self.id.clone(),
            count: 0,
        })?;
        match shapes[gap] {
            Flow::Spatial { channels, h, w } => Ok((channels, h, w)),
            Flow::Vector { .. } => Err(NnError::BadShape {
                id: self.id.clone(),
                reason: "global average pool input is not spatial".into(),
            }),
        }
    }

    /// Shape entering each layer, by walking the layer arithmetic.
    fn flow_shapes(&self) -> Result<Vec<Flow>, NnError> {
        let bad = |reason: String| NnError::BadShape {
            id: self.id.clone(),
            reason,
        };
        if self.input_size == 0 {
            return Err(bad("input size must be positive".into()));
        }
        let mut flow = Flow::Spatial {
            channels: 1,
            h: self.input_size,
            w: self.input_size,
        };
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shapes.push(flow);
            flow = match (layer, flow) {
                (
                    &LayerSpec::Conv {
                        out_channels,
                        kernel,
                        stride,
                        padding,
                    },
                    Flow::Spatial { h, w, .. },
                ) => {
                    if out_channels == 0 || kernel == 0 || stride == 0 {
                        return Err(bad(format!("layer {i}: conv parameters must be positive")));
                    }
                    if kernel > h + 2 * padding || kernel > w + 2 * padding {
                        return Err(bad(format!(
                            "layer {i}: kernel {kernel} exceeds padded input {h}x{w}"
                        )));
                    }
                    Flow::Spatial {
                        channels: out_channels,
                        h: (h + 2 * padding - kernel) / stride + 1,
                        w: (w + 2 * padding - kernel) / stride + 1,
                    }
                }
                (&LayerSpec::MaxPool { window, stride }, Flow::Spatial { channels, h, w }) => {
                    if window == 0 || stride == 0 || window > h || window > w {
                        return Err(bad(format!(
                            "layer {i}: pool window {window} invalid for {h}x{w}"
                        )));
                    }
                    Flow::Spatial {
                        channels,
                        h: (h - window) / stride + 1,
                        w: (w - window) / stride + 1,
                    }
                }
                (LayerSpec::GlobalAvgPool, Flow::Spatial { channels, .. }) => {
                    Flow::Vector { len: channels }
                }
                (LayerSpec::Relu, any) => any,
                (&LayerSpec::Dense { units }, Flow::Vector { .. }) => {
                    if units == 0 {
                        return Err(bad(format!("layer {i}: dense width must be positive")));
                    }
                    Flow::Vector { len: units }
                }
                (layer, flow) => {
                    return Err(bad(format!("layer {i}: {layer:?} cannot follow {flow:?}")))
                }
            };
        }
        shapes.push(flow);
        Ok(shapes)
    }
}

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Epochs without a validation-accuracy improvement before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of each class assigned to the training split.
    pub split: f64,
    pub precision: Precision,
    /// Worker cap for in-batch parallelism; `None` defers to the
    /// `CAMSEG_THREADS` environment variable, then to the CPU count.
    /// Results are identical for any value.
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            patience: 20,
            learning_rate: 1e-3,
            batch_size: 16,
            seed: 0,
            split: 0.8,
            precision: Precision::Single,
            threads: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(NnError::BadTrainConfig(format!(
                "split fraction must be in (0,1), got {}",
                self.split
            )));
        }
        if self.patience > self.epochs {
            return Err(NnError::BadTrainConfig(format!(
                "patience {} exceeds epochs {}",
                self.patience, self.epochs
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(NnError::BadTrainConfig(
                "epochs and batch size must be positive".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NnError::BadTrainConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}
