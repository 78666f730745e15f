//! Layer-level forward/backward primitives.
//!
//! Conventions used throughout:
//! - feature maps are `[channels, height, width]`, kernels are
//!   `[out_channels, in_channels, kh, kw]`, vectors are rank-1;
//! - convolution is cross-correlation (no kernel flip);
//! - backward functions take the cached forward input and the upstream
//!   gradient, and return gradients shaped exactly like their primals.

use super::{Tensor, TensorError};
use crate::scalar::Element;

/// 2-D convolution (cross-correlation) with zero padding.
///
/// Output spatial dims follow `(dim + 2*padding - kernel) / stride + 1`.
pub fn conv2d_forward<T: Element>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>, TensorError> {
    let (c_out, kh, kw) = check_conv_shapes(input, kernels, stride, padding)?;
    if bias.shape() != [c_out] {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d bias",
            expected: format!("[{c_out}]"),
            actual: format!("{:?}", bias.shape()),
        });
    }
    let (c_in, h, w) = (input.dim(0), input.dim(1), input.dim(2));
    let h_out = (h + 2 * padding - kh) / stride + 1;
    let w_out = (w + 2 * padding - kw) / stride + 1;

    let mut out = Tensor::zeros(&[c_out, h_out, w_out]);
    let x = input.data();
    let k = kernels.data();
    let out_data = out.data_mut();
    // One shifted-row pass per kernel tap: each output element still receives
    // its bias first and then the (ci, i, j)-ordered products, but the inner
    // loops run over contiguous row slices instead of per-element index math.
    for co in 0..c_out {
        let out_plane = &mut out_data[co * h_out * w_out..][..h_out * w_out];
        out_plane.fill(bias.data()[co]);
        for ci in 0..c_in {
            let x_plane = &x[ci * h * w..][..h * w];
            let k_base = (co * c_in + ci) * kh * kw;
            for i in 0..kh {
                let (oh_lo, oh_hi) = tap_range(h, h_out, stride, padding, i);
                for j in 0..kw {
                    let weight = k[k_base + i * kw + j];
                    let (ow_lo, ow_hi) = tap_range(w, w_out, stride, padding, j);
                    if ow_hi <= ow_lo {
                        continue;
                    }
                    for oh in oh_lo..oh_hi {
                        let ih = oh * stride + i - padding;
                        let iw0 = ow_lo * stride + j - padding;
                        let out_row = &mut out_plane[oh * w_out + ow_lo..oh * w_out + ow_hi];
                        if stride == 1 {
                            let x_row = &x_plane[ih * w + iw0..][..out_row.len()];
                            for (o, &v) in out_row.iter_mut().zip(x_row) {
                                *o += weight * v;
                            }
                        } else {
                            let x_row = &x_plane[ih * w..(ih + 1) * w];
                            for (idx, o) in out_row.iter_mut().enumerate() {
                                *o += weight * x_row[iw0 + idx * stride];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Output positions whose kernel tap `o` lands inside `0..len` on the input:
/// the half-open range of `out_pos` with `out_pos * stride + o - padding` in
/// bounds. May be empty (`lo == hi`).
fn tap_range(len: usize, out_len: usize, stride: usize, padding: usize, o: usize) -> (usize, usize) {
    let lo = if o >= padding { 0 } else { (padding - o).div_ceil(stride) };
    let hi = if len + padding > o {
        ((len - 1 + padding - o) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Gradients of a scalar loss through [`conv2d_forward`].
///
/// Returns `(input_grad, kernel_grad, bias_grad)`.
pub fn conv2d_backward<T: Element>(
    cached_input: &Tensor<T>,
    kernels: &Tensor<T>,
    upstream: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), TensorError> {
    let (c_out, kh, kw) = check_conv_shapes(cached_input, kernels, stride, padding)?;
    let (c_in, h, w) = (cached_input.dim(0), cached_input.dim(1), cached_input.dim(2));
    let h_out = (h + 2 * padding - kh) / stride + 1;
    let w_out = (w + 2 * padding - kw) / stride + 1;
    if upstream.shape() != [c_out, h_out, w_out] {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d_backward upstream",
            expected: format!("{:?}", [c_out, h_out, w_out]),
            actual: format!("{:?}", upstream.shape()),
        });
    }

    let mut input_grad = Tensor::zeros(cached_input.shape());
    let mut kernel_grad = Tensor::zeros(kernels.shape());
    let mut bias_grad = Tensor::zeros(&[c_out]);
    let x = cached_input.data();
    let k = kernels.data();
    let g = upstream.data();
    let ig = input_grad.data_mut();
    let kg = kernel_grad.data_mut();
    // Same tap-by-tap row walk as the forward pass: for each kernel tap the
    // upstream plane aligns with one shifted window of the input plane, giving
    // a row dot product (kernel gradient) and a row axpy (input gradient).
    for co in 0..c_out {
        let g_plane = &g[co * h_out * w_out..][..h_out * w_out];
        let mut bias_acc = T::zero();
        for &gv in g_plane {
            bias_acc += gv;
        }
        bias_grad.data_mut()[co] = bias_acc;
        for ci in 0..c_in {
            let x_plane = &x[ci * h * w..][..h * w];
            let ig_plane = &mut ig[ci * h * w..][..h * w];
            let k_base = (co * c_in + ci) * kh * kw;
            for i in 0..kh {
                let (oh_lo, oh_hi) = tap_range(h, h_out, stride, padding, i);
                for j in 0..kw {
                    let weight = k[k_base + i * kw + j];
                    let (ow_lo, ow_hi) = tap_range(w, w_out, stride, padding, j);
                    if ow_hi <= ow_lo {
                        continue;
                    }
                    let mut k_acc = T::zero();
                    for oh in oh_lo..oh_hi {
                        let ih = oh * stride + i - padding;
                        let iw0 = ow_lo * stride + j - padding;
                        let g_row = &g_plane[oh * w_out + ow_lo..oh * w_out + ow_hi];
                        if stride == 1 {
                            let x_row = &x_plane[ih * w + iw0..][..g_row.len()];
                            let ig_row = &mut ig_plane[ih * w + iw0..][..g_row.len()];
                            k_acc += dot_lanes(g_row, x_row);
                            for (igv, &gv) in ig_row.iter_mut().zip(g_row) {
                                *igv += weight * gv;
                            }
                        } else {
                            for (idx, &gv) in g_row.iter().enumerate() {
                                let iw = iw0 + idx * stride;
                                k_acc += gv * x_plane[ih * w + iw];
                                ig_plane[ih * w + iw] += weight * gv;
                            }
                        }
                    }
                    kg[k_base + i * kw + j] = k_acc;
                }
            }
        }
    }
    Ok((input_grad, kernel_grad, bias_grad))
}

/// Dot product accumulated in four fixed lanes, reduced in a fixed order.
/// The lane split breaks the serial add dependency so the loop can use SIMD
/// while staying deterministic: the same slices always produce the same bits.
fn dot_lanes<T: Element>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 4];
    let chunks = a.len() / 4 * 4;
    for (ac, bc) in a[..chunks].chunks_exact(4).zip(b[..chunks].chunks_exact(4)) {
        lanes[0] += ac[0] * bc[0];
        lanes[1] += ac[1] * bc[1];
        lanes[2] += ac[2] * bc[2];
        lanes[3] += ac[3] * bc[3];
    }
    for (idx, (&av, &bv)) in a[chunks..].iter().zip(&b[chunks..]).enumerate() {
        lanes[idx] += av * bv;
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3])
}

fn check_conv_shapes<T: Element>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<(usize, usize, usize), TensorError> {
    if stride == 0 {
        return Err(TensorError::ZeroStride { op: "conv2d" });
    }
    if input.rank() != 3 || kernels.rank() != 4 {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            expected: "input rank 3, kernels rank 4".into(),
            actual: format!("ranks {} and {}", input.rank(), kernels.rank()),
        });
    }
    let (c_in, h, w) = (input.dim(0), input.dim(1), input.dim(2));
    let (c_out, kc, kh, kw) = (kernels.dim(0), kernels.dim(1), kernels.dim(2), kernels.dim(3));
    if kc != c_in {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d kernel channels",
            expected: format!("{c_in}"),
            actual: format!("{kc}"),
        });
    }
    if kh > h + 2 * padding || kw > w + 2 * padding {
        return Err(TensorError::KernelTooLarge {
            kh,
            kw,
            h: h + 2 * padding,
            w: w + 2 * padding,
        });
    }
    Ok((c_out, kh, kw))
}

/// Elementwise `max(0, x)`.
pub fn relu_forward<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gates `upstream` by `cached_x > 0`; the gradient at exactly 0 is 0.
pub fn relu_backward<T: Element>(
    cached_x: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<Tensor<T>, TensorError> {
    cached_x.same_shape(upstream, "relu_backward")?;
    let data = cached_x
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(cached_x.shape().to_vec(), data)
}

/// Per-window max over each channel of a `[C,H,W]` tensor.
pub fn maxpool_forward<T: Element>(
    x: &Tensor<T>,
    window: usize,
    stride: usize,
) -> Result<Tensor<T>, TensorError> {
    let (c, _, _, h_out, w_out) = check_pool_shapes(x, window, stride)?;
    let mut out = Tensor::zeros(&[c, h_out, w_out]);
    for ch in 0..c {
        for oh in 0..h_out {
            for ow in 0..w_out {
                let (_, best) = window_argmax(x, ch, oh * stride, ow * stride, window);
                out.data_mut()[(ch * h_out + oh) * w_out + ow] = best;
            }
        }
    }
    Ok(out)
}

/// Routes each window's upstream gradient to its first row-major argmax.
pub fn maxpool_backward<T: Element>(
    cached_x: &Tensor<T>,
    window: usize,
    stride: usize,
    upstream: &Tensor<T>,
) -> Result<Tensor<T>, TensorError> {
    let (c, _, _, h_out, w_out) = check_pool_shapes(cached_x, window, stride)?;
    if upstream.shape() != [c, h_out, w_out] {
        return Err(TensorError::ShapeMismatch {
            op: "maxpool_backward upstream",
            expected: format!("{:?}", [c, h_out, w_out]),
            actual: format!("{:?}", upstream.shape()),
        });
    }
    let mut grad = Tensor::zeros(cached_x.shape());
    for ch in 0..c {
        for oh in 0..h_out {
            for ow in 0..w_out {
                let (off, _) = window_argmax(cached_x, ch, oh * stride, ow * stride, window);
                grad.data_mut()[off] += upstream.data()[(ch * h_out + oh) * w_out + ow];
            }
        }
    }
    Ok(grad)
}

/// First row-major argmax within one pooling window; ties keep the earlier cell.
fn window_argmax<T: Element>(
    x: &Tensor<T>,
    ch: usize,
    top: usize,
    left: usize,
    window: usize,
) -> (usize, T) {
    let (h, w) = (x.dim(1), x.dim(2));
    let data = x.data();
    let base = (ch * h + top) * w + left;
    let mut best_off = base;
    let mut best = data[base];
    for i in 0..window {
        let row = base + i * w;
        for j in 0..window {
            let off = row + j;
            if data[off] > best {
                best = data[off];
                best_off = off;
            }
        }
    }
    (best_off, best)
}

fn check_pool_shapes<T: Element>(
    x: &Tensor<T>,
    window: usize,
    stride: usize,
) -> Result<(usize, usize, usize, usize, usize), TensorError> {
    if stride == 0 {
        return Err(TensorError::ZeroStride { op: "maxpool" });
    }
    if x.rank() != 3 {
        return Err(TensorError::ShapeMismatch {
            op: "maxpool",
            expected: "rank 3".into(),
            actual: format!("rank {}", x.rank()),
        });
    }
    let (c, h, w) = (x.dim(0), x.dim(1), x.dim(2));
    if window == 0 || window > h || window > w {
        return Err(TensorError::WindowTooLarge {
            window,
            height: h,
            width: w,
        });
    }
    Ok((c, h, w, (h - window) / stride + 1, (w - window) / stride + 1))
}

/// Spatial mean of each feature map: `[n,x,y] -> [n]`.
pub fn gap_forward<T: Element>(features: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    if features.rank() != 3 {
        return Err(TensorError::ShapeMismatch {
            op: "gap_forward",
            expected: "rank 3".into(),
            actual: format!("rank {}", features.rank()),
        });
    }
    let (n, x, y) = (features.dim(0), features.dim(1), features.dim(2));
    let cells = T::from_f64_value((x * y) as f64);
    let mut out = Tensor::zeros(&[n]);
    for k in 0..n {
        let start = k * x * y;
        let sum: T = features.data()[start..start + x * y].iter().copied().sum();
        out.data_mut()[k] = sum / cells;
    }
    Ok(out)
}

/// Spreads each channel's upstream gradient uniformly over its `x*y` cells.
pub fn gap_backward<T: Element>(upstream: &Tensor<T>, x: usize, y: usize) -> Tensor<T> {
    let n = upstream.len();
    let cells = T::from_f64_value((x * y) as f64);
    let mut out = Tensor::zeros(&[n, x, y]);
    for k in 0..n {
        let per_cell = upstream.data()[k] / cells;
        out.data_mut()[k * x * y..(k + 1) * x * y].fill(per_cell);
    }
    out
}

/// Affine map `y = Wx + b` with `W: [M,N]`, `x: [N]`, `b: [M]`.
pub fn dense_forward<T: Element>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, TensorError> {
    let (m, n) = check_dense_shapes(x, weights, bias)?;
    let mut out = Tensor::zeros(&[m]);
    for r in 0..m {
        let row = &weights.data()[r * n..(r + 1) * n];
        let mut acc = bias.data()[r];
        for (wv, xv) in row.iter().zip(x.data()) {
            acc += *wv * *xv;
        }
        out.data_mut()[r] = acc;
    }
    Ok(out)
}

/// Gradients of a scalar loss through [`dense_forward`].
///
/// Returns `(input_grad, weight_grad, bias_grad)`.
pub fn dense_backward<T: Element>(
    cached_x: &Tensor<T>,
    weights: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), TensorError> {
    let (m, n) = check_dense_shapes(cached_x, weights, upstream)?;
    let mut input_grad = Tensor::zeros(&[n]);
    let mut weight_grad = Tensor::zeros(&[m, n]);
    let bias_grad = upstream.clone();
    for r in 0..m {
        let g = upstream.data()[r];
        for c in 0..n {
            weight_grad.data_mut()[r * n + c] = g * cached_x.data()[c];
            input_grad.data_mut()[c] += g * weights.data()[r * n + c];
        }
    }
    Ok((input_grad, weight_grad, bias_grad))
}

fn check_dense_shapes<T: Element>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    m_vector: &Tensor<T>,
) -> Result<(usize, usize), TensorError> {
    if x.rank() != 1 || weights.rank() != 2 || m_vector.rank() != 1 {
        return Err(TensorError::ShapeMismatch {
            op: "dense",
            expected: "x rank 1, W rank 2, b rank 1".into(),
            actual: format!(
                "ranks {}, {}, {}",
                x.rank(),
                weights.rank(),
                m_vector.rank()
            ),
        });
    }
    let (m, n) = (weights.dim(0), weights.dim(1));
    if x.len() != n || m_vector.len() != m {
        return Err(TensorError::ShapeMismatch {
            op: "dense",
            expected: format!("x [{n}], vector [{m}]"),
            actual: format!("x {:?}, vector {:?}", x.shape(), m_vector.shape()),
        });
    }
    Ok((m, n))
}

/// Softmax cross-entropy loss and its logit gradient in one pass.
///
/// Stabilized by max-subtraction; the gradient is `softmax(logits) - one_hot(label)`.
pub fn softmax_cross_entropy<T: Element>(
    logits: &Tensor<T>,
    label: usize,
) -> Result<(T, Tensor<T>), TensorError> {
    if logits.rank() != 1 {
        return Err(TensorError::ShapeMismatch {
            op: "softmax_cross_entropy",
            expected: "rank 1".into(),
            actual: format!("rank {}", logits.rank()),
        });
    }
    if label >= logits.len() {
        return Err(TensorError::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let max = logits
        .data()
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.data().iter().map(|&z| (z - max).exp()).collect();
    let denom: T = exps.iter().copied().sum();
    let loss = denom.ln() - (logits.data()[label] - max);
    let mut grad = Tensor::from_vec(
        vec![logits.len()],
        exps.iter().map(|&e| e / denom).collect(),
    )?;
    grad.data_mut()[label] -= T::one();
    Ok((loss, grad))
}
