//! Network instantiation, forward passes with cached activations, and the
//! gradient of a class logit with respect to the pooled feature maps.

use rand::Rng;

use super::spec::{LayerSpec, NetworkSpec, NnError};
use crate::rng::derive_rng;
use crate::scalar::Element;
use crate::tensor::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, gap_backward, gap_forward,
    maxpool_backward, maxpool_forward, relu_backward, relu_forward, Tensor,
};

/// One instantiated layer: the spec entry plus its parameters, if any.
#[derive(Debug, Clone)]
pub(crate) enum Layer<T: Element> {
    Conv {
        kernels: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    Gap,
    Dense {
        weights: Tensor<T>,
        bias: Tensor<T>,
    },
}

/// A concrete network: validated spec plus one parameter set.
///
/// Immutable during inference, so a frozen network can be shared across
/// threads for parallel activation-map extraction.
#[derive(Debug, Clone)]
pub struct Network<T: Element> {
    spec: NetworkSpec,
    layers: Vec<Layer<T>>,
    gap_index: usize,
}

/// Everything cached by one forward pass.
#[derive(Debug, Clone)]
pub struct Activations<T: Element> {
    /// `inputs[i]` is the tensor entering layer `i`.
    inputs: Vec<Tensor<T>>,
    logits: Tensor<T>,
    gap_index: usize,
}

impl<T: Element> Activations<T> {
    pub fn logits(&self) -> &Tensor<T> {
        &self.logits
    }

    /// The feature maps entering the global average pool, shape `[n,x,y]`.
    pub fn feature_maps(&self) -> &Tensor<T> {
        &self.inputs[self.gap_index]
    }

    /// `(n, x, y)` of [`Activations::feature_maps`].
    pub fn feature_map_dims(&self) -> (usize, usize, usize) {
        let f = self.feature_maps();
        (f.dim(0), f.dim(1), f.dim(2))
    }

    /// Predicted class: argmax over the two logits.
    pub fn predicted_class(&self) -> usize {
        if self.logits.data()[1] > self.logits.data()[0] {
            1
        } else {
            0
        }
    }
}

/// Parameter gradients for one layer, aligned with [`Network`] layers.
pub(crate) type ParamGrads<T> = Vec<Option<(Tensor<T>, Tensor<T>)>>;

/// Builds an initialized network from a validated spec.
///
/// Weight tensors are drawn uniformly with fan-in scaling from streams
/// derived per layer off `seed`; biases start at zero. The draw happens in
/// double precision and is narrowed afterwards, so single- and
/// double-precision builds of the same seed describe the same network.
pub fn build_network<T: Element>(spec: &NetworkSpec, seed: u64) -> Result<Network<T>, NnError> {
    spec.validate()?;
    let mut layers = Vec::with_capacity(spec.layers.len());
    let mut in_channels = 1usize;
    let mut vector_len = 0usize;
    for (i, layer) in spec.layers.iter().enumerate() {
        let mut rng = derive_rng(seed, "init", &format!("layer{i}"));
        let mut draw = |shape: &[usize], fan_in: usize| {
            let limit = (6.0 / fan_in as f64).sqrt();
            let len = shape.iter().product();
            let data = (0..len)
                .map(|_| T::from_f64_value(rng.gen_range(-limit..limit)))
                .collect();
            Tensor::from_vec(shape.to_vec(), data).expect("shape/data length agree")
        };
        match *layer {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let fan_in = in_channels * kernel * kernel;
                layers.push(Layer::Conv {
                    kernels: draw(&[out_channels, in_channels, kernel, kernel], fan_in),
                    bias: Tensor::zeros(&[out_channels]),
                    stride,
                    padding,
                });
                in_channels = out_channels;
            }
            LayerSpec::Relu => layers.push(Layer::Relu),
            LayerSpec::MaxPool { window, stride } => {
                layers.push(Layer::MaxPool { window, stride });
            }
            LayerSpec::GlobalAvgPool => {
                layers.push(Layer::Gap);
                vector_len = in_channels;
            }
            LayerSpec::Dense { units } => {
                layers.push(Layer::Dense {
                    weights: draw(&[units, vector_len], vector_len),
                    bias: Tensor::zeros(&[units]),
                });
                vector_len = units;
            }
        }
    }
    let gap_index = spec.gap_index().expect("validated: exactly one GAP");
    Ok(Network {
        spec: spec.clone(),
        layers,
        gap_index,
    })
}

impl<T: Element> Network<T> {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// The 2-way head's weight matrix, when the global average pool feeds
    /// the head directly.
    pub(crate) fn gap_head_weights(&self) -> Option<&Tensor<T>> {
        if !self.spec.is_gap_head() {
            return None;
        }
        match self.layers.last() {
            Some(Layer::Dense { weights, .. }) => Some(weights),
            _ => None,
        }
    }

    /// Runs the network on a `[1,H,W]` image, caching every layer input.
    pub fn forward(&self, image: &Tensor<T>) -> Result<Activations<T>, NnError> {
        let n = self.spec.input_size;
        if image.shape() != [1, n, n] {
            return Err(NnError::InputSize {
                expected: n,
                actual: format!("{:?}", image.shape()),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut value = image.clone();
        for layer in &self.layers {
            inputs.push(value);
            let current = inputs.last().expect("just pushed");
            value = match layer {
                Layer::Conv {
                    kernels,
                    bias,
                    stride,
                    padding,
                } => conv2d_forward(current, kernels, bias, *stride, *padding)?,
                Layer::Relu => relu_forward(current),
                Layer::MaxPool { window, stride } => maxpool_forward(current, *window, *stride)?,
                Layer::Gap => gap_forward(current)?,
                Layer::Dense { weights, bias } => dense_forward(current, weights, bias)?,
            };
        }
        Ok(Activations {
            inputs,
            logits: value,
            gap_index: self.gap_index,
        })
    }

    /// Exact gradient of logit `c` with respect to the feature maps entering
    /// the global average pool, shape `[n,x,y]`.
    ///
    /// Works for any head: the one-hot logit gradient is walked backward
    /// through every layer after the pool, then through the pool itself.
    pub fn grad_wrt_feature_maps(
        &self,
        activations: &Activations<T>,
        class_index: usize,
    ) -> Result<Tensor<T>, NnError> {
        if class_index >= 2 {
            return Err(NnError::BadClass(class_index));
        }
        let mut grad = Tensor::zeros(&[2]);
        grad.data_mut()[class_index] = T::one();
        for i in (self.gap_index..self.layers.len()).rev() {
            let cached = &activations.inputs[i];
            grad = match &self.layers[i] {
                Layer::Dense { weights, .. } => dense_backward(cached, weights, &grad)?.0,
                Layer::Relu => relu_backward(cached, &grad)?,
                Layer::Gap => gap_backward(&grad, cached.dim(1), cached.dim(2)),
                Layer::Conv { .. } | Layer::MaxPool { .. } => {
                    unreachable!("validated: no spatial layers after the global average pool")
                }
            };
        }
        Ok(grad)
    }

    /// Gradient of one logit with respect to the input image, walked
    /// backward through every layer. The saliency counterpart to
    /// [`Self::grad_wrt_feature_maps`], and the end-to-end probe the
    /// finite-difference checks exercise.
    pub fn grad_wrt_input(
        &self,
        activations: &Activations<T>,
        class_index: usize,
    ) -> Result<Tensor<T>, NnError> {
        if class_index >= 2 {
            return Err(NnError::BadClass(class_index));
        }
        let mut grad = Tensor::zeros(&[2]);
        grad.data_mut()[class_index] = T::one();
        let (_, input_grad) = self.backward(activations, grad)?;
        Ok(input_grad)
    }

    /// Full backward pass for training: loss gradient propagated to every
    /// parameter. Returns per-layer `(weight_grad, bias_grad)` entries
    /// aligned with the layer list, plus the gradient at the input.
    pub(crate) fn backward(
        &self,
        activations: &Activations<T>,
        logit_grad: Tensor<T>,
    ) -> Result<(ParamGrads<T>, Tensor<T>), NnError> {
        let mut grads: ParamGrads<T> = vec![None; self.layers.len()];
        let mut grad = logit_grad;
        for i in (0..self.layers.len()).rev() {
            let cached = &activations.inputs[i];
            grad = match &self.layers[i] {
                Layer::Conv {
                    kernels,
                    stride,
                    padding,
                    ..
                } => {
                    let (gi, gk, gb) = conv2d_backward(cached, kernels, &grad, *stride, *padding)?;
                    grads[i] = Some((gk, gb));
                    gi
                }
                Layer::Relu => relu_backward(cached, &grad)?,
                Layer::MaxPool { window, stride } => {
                    maxpool_backward(cached, *window, *stride, &grad)?
                }
                Layer::Gap => gap_backward(&grad, cached.dim(1), cached.dim(2)),
                Layer::Dense { weights, .. } => {
                    let (gi, gw, gb) = dense_backward(cached, weights, &grad)?;
                    grads[i] = Some((gw, gb));
                    gi
                }
            };
        }
        Ok((grads, grad))
    }

    /// Mutable references to every trainable tensor, in layer order
    /// (weights before bias within a layer).
    pub(crate) fn trainable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv { kernels, bias, .. } => {
                    out.push(kernels);
                    out.push(bias);
                }
                Layer::Dense { weights, bias } => {
                    out.push(weights);
                    out.push(bias);
                }
                Layer::Relu | Layer::MaxPool { .. } | Layer::Gap => {}
            }
        }
        out
    }

    /// Named copies of every trainable tensor, in the same order as
    /// [`Network::trainable_mut`]. The names key the checkpoint layout.
    pub fn named_tensors(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv { kernels, bias, .. } => {
                    out.push((format!("layer{i}.kernels"), kernels.clone()));
                    out.push((format!("layer{i}.bias"), bias.clone()));
                }
                Layer::Dense { weights, bias } => {
                    out.push((format!("layer{i}.weights"), weights.clone()));
                    out.push((format!("layer{i}.bias"), bias.clone()));
                }
                Layer::Relu | Layer::MaxPool { .. } | Layer::Gap => {}
            }
        }
        out
    }

    /// Overwrites every trainable tensor from `tensors`, which must be in
    /// [`Network::named_tensors`] order with matching names and shapes.
    pub fn load_tensors(&mut self, tensors: &[(String, Tensor<T>)]) -> Result<(), NnError> {
        let expected: Vec<(String, Vec<usize>)> = self
            .named_tensors()
            .into_iter()
            .map(|(name, t)| (name, t.shape().to_vec()))
            .collect();
        if expected.len() != tensors.len() {
            return Err(NnError::BadTrainConfig(format!(
                "expected {} weight tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((want_name, want_shape), (name, tensor)) in expected.iter().zip(tensors) {
            if want_name != name || want_shape != tensor.shape() {
                return Err(NnError::BadTrainConfig(format!(
                    "weight tensor mismatch: expected {want_name} {want_shape:?}, got {name} {:?}",
                    tensor.shape()
                )));
            }
        }
        let mut sources = tensors.iter();
        for slot in self.trainable_mut() {
            *slot = sources.next().expect("length checked above").1.clone();
        }
        Ok(())
    }

    /// Re-instantiates the network in another precision.
    pub fn cast<U: Element>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Conv {
                    kernels,
                    bias,
                    stride,
                    padding,
                } => Layer::Conv {
                    kernels: kernels.cast(),
                    bias: bias.cast(),
                    stride: *stride,
                    padding: *padding,
                },
                Layer::Relu => Layer::Relu,
                Layer::MaxPool { window, stride } => Layer::MaxPool {
                    window: *window,
                    stride: *stride,
                },
                Layer::Gap => Layer::Gap,
                Layer::Dense { weights, bias } => Layer::Dense {
                    weights: weights.cast(),
                    bias: bias.cast(),
                },
            })
            .collect();
        Network {
            spec: self.spec.clone(),
            layers,
            gap_index: self.gap_index,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_difference_check;

    fn image(seed_id: &str, size: usize) -> Tensor<f64> {
        let mut rng = derive_rng(11, "network-test", seed_id);
        let data = (0..size * size).map(|_| rng.gen_range(0.0..1.0)).collect();
        Tensor::from_vec(vec![1, size, size], data).unwrap()
    }

    #[test]
    fn same_seed_builds_bit_identical_networks() {
        let spec = NetworkSpec::preset("gap-head-small", 32).unwrap();
        let a: Network<f32> = build_network(&spec, 7).unwrap();
        let b: Network<f32> = build_network(&spec, 7).unwrap();
        assert_eq!(a.named_tensors(), b.named_tensors());
    }

    #[test]
    fn different_seeds_differ_somewhere() {
        let spec = NetworkSpec::preset("gap-head-small", 32).unwrap();
        let a: Network<f32> = build_network(&spec, 7).unwrap();
        let b: Network<f32> = build_network(&spec, 8).unwrap();
        assert_ne!(a.named_tensors(), b.named_tensors());
    }

    #[test]
    fn preset_runs_forward_to_two_logits() {
        let spec = NetworkSpec::preset("gap-head-small", 64).unwrap();
        let net: Network<f64> = build_network(&spec, 1).unwrap();
        let acts = net.forward(&image("fwd", 64)).unwrap();
        assert_eq!(acts.logits().shape(), &[2]);
        assert!(acts.logits().all_finite());
    }

    #[test]
    fn forward_on_zero_image_is_finite() {
        let spec = NetworkSpec::preset("deep-head-small", 32).unwrap();
        let net: Network<f64> = build_network(&spec, 2).unwrap();
        let acts = net.forward(&Tensor::zeros(&[1, 32, 32])).unwrap();
        assert!(acts.logits().all_finite());
    }

    #[test]
    fn different_networks_give_different_logits() {
        let spec = NetworkSpec::preset("gap-head-small", 32).unwrap();
        let a: Network<f64> = build_network(&spec, 1).unwrap();
        let b: Network<f64> = build_network(&spec, 2).unwrap();
        let img = image("logit-diff", 32);
        assert_ne!(
            a.forward(&img).unwrap().logits(),
            b.forward(&img).unwrap().logits()
        );
    }

    #[test]
    fn cached_feature_maps_match_spec_arithmetic() {
        for preset in NetworkSpec::PRESETS {
            let spec = NetworkSpec::preset(preset, 64).unwrap();
            let net: Network<f64> = build_network(&spec, 3).unwrap();
            let acts = net.forward(&image("shape", 64)).unwrap();
            assert_eq!(
                acts.feature_map_dims(),
                spec.feature_map_dims().unwrap(),
                "{preset}"
            );
        }
    }

    #[test]
    fn forward_rejects_wrong_input_size() {
        let spec = NetworkSpec::preset("gap-head-small", 64).unwrap();
        let net: Network<f64> = build_network(&spec, 1).unwrap();
        assert!(matches!(
            net.forward(&Tensor::zeros(&[1, 32, 32])),
            Err(NnError::InputSize { .. })
        ));
    }

    #[test]
    fn gap_head_feature_gradient_is_spread_head_weight() {
        // With the pool feeding the head directly, the gradient of logit c
        // at every cell of map k must be weights[c,k] / (x*y).
        let spec = NetworkSpec::preset("gap-head-small", 32).unwrap();
        let net: Network<f64> = build_network(&spec, 5).unwrap();
        let acts = net.forward(&image("closed-form", 32)).unwrap();
        let weights = net.gap_head_weights().unwrap().clone();
        for c in 0..2 {
            let grad = net.grad_wrt_feature_maps(&acts, c).unwrap();
            let (n, x, y) = acts.feature_map_dims();
            for k in 0..n {
                let want = weights.data()[weights.offset2(c, k)] / (x * y) as f64;
                for cell in &grad.data()[k * x * y..(k + 1) * x * y] {
                    assert!(
                        (cell - want).abs() <= 1e-12 * want.abs().max(1.0),
                        "map {k}: cell {cell}, want {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn feature_gradient_matches_finite_differences_on_toy_net() {
        // Toy deep-head net, then perturb the feature maps directly: freeze
        // the pipeline after the pool as a function of the feature maps.
        let spec = NetworkSpec {
            id: "toy-deep".into(),
            input_size: 6,
            layers: vec![
                LayerSpec::Conv {
                    out_channels: 2,
                    kernel: 3,
                    stride: 1,
                    padding: 0,
                },
                LayerSpec::Relu,
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense { units: 3 },
                LayerSpec::Relu,
                LayerSpec::Dense { units: 2 },
            ],
        };
        let net: Network<f64> = build_network(&spec, 9).unwrap();
        let acts = net.forward(&image("toy", 6)).unwrap();
        let c = 1;
        let analytic = net.grad_wrt_feature_maps(&acts, c).unwrap();

        let head_logit = |f: &Tensor<f64>| -> f64 {
            let pooled = gap_forward(f).unwrap();
            let mut v = pooled;
            for i in net.gap_index + 1..net.layers.len() {
                v = match &net.layers[i] {
                    Layer::Dense { weights, bias } => dense_forward(&v, weights, bias).unwrap(),
                    Layer::Relu => relu_forward(&v),
                    _ => unreachable!(),
                };
            }
            v.data()[c]
        };
        let err = finite_difference_check(head_logit, acts.feature_maps(), &analytic, 1e-4);
        assert!(err <= 1e-5, "finite-difference error {err}");
    }

    #[test]
    fn input_gradient_matches_finite_differences_through_all_layers() {
        // The logit as a function of the raw input exercises every layer's
        // backward in composition: conv, relu, maxpool, pool, dense.
        let spec = NetworkSpec::preset("gap-head-small", 16).unwrap();
        let net: Network<f64> = build_network(&spec, 21).unwrap();
        let img = image("sal", 16);
        for c in [0, 1] {
            let acts = net.forward(&img).unwrap();
            let analytic = net.grad_wrt_input(&acts, c).unwrap();
            assert_eq!(analytic.shape(), img.shape());
            let logit = |x: &Tensor<f64>| net.forward(x).unwrap().logits().data()[c];
            let err = finite_difference_check(logit, &img, &analytic, 1e-4);
            assert!(err <= 1e-5, "class {c}: finite-difference error {err}");
        }
    }

    #[test]
    fn zero_head_weights_give_zero_feature_gradient() {
        let spec = NetworkSpec::preset("gap-head-small", 32).unwrap();
        let mut net: Network<f64> = build_network(&spec, 4).unwrap();
        if let Some(Layer::Dense { weights, .. }) = net.layers.last_mut() {
            *weights = Tensor::zeros(weights.shape());
        }
        let acts = net.forward(&image("zero-w", 32)).unwrap();
        let grad = net.grad_wrt_feature_maps(&acts, 0).unwrap();
        assert!(grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn feature_gradient_rejects_bad_class() {
        let spec = NetworkSpec::preset("gap-head-small", 32).unwrap();
        let net: Network<f64> = build_network(&spec, 4).unwrap();
        let acts = net.forward(&image("bad-class", 32)).unwrap();
        assert!(matches!(
            net.grad_wrt_feature_maps(&acts, 2),
            Err(NnError::BadClass(2))
        ));
    }

    #[test]
    fn load_tensors_round_trips() {
        let spec = NetworkSpec::preset("deep-head-small", 32).unwrap();
        let source: Network<f32> = build_network(&spec, 21).unwrap();
        let mut target: Network<f32> = build_network(&spec, 22).unwrap();
        target.load_tensors(&source.named_tensors()).unwrap();
        assert_eq!(source.named_tensors(), target.named_tensors());
    }
}
