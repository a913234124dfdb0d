//! Forward and backward kernels for the layer kinds. Activations are laid
//! out `[batch, height, width, channels]`; dense inputs are `[batch, width]`.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{precondition, shape_err, Result};
use crate::scalar::{matmul, MatRef, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Same,
    Valid,
}

/// Resolved sizes for one convolution call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub kernel: usize,
    pub out_c: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        input_shape: &[usize],
        weight_shape: &[usize],
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        let (batch, in_h, in_w, in_c) = match *input_shape {
            [h, w, c] => (1, h, w, c),
            [n, h, w, c] => (n, h, w, c),
            _ => return shape_err(format!("conv2d input must be [N,H,W,C], got {input_shape:?}")),
        };
        let [k, k2, wc, out_c] = *weight_shape else {
            return shape_err(format!("conv2d weights must be [k,k,C,K], got {weight_shape:?}"));
        };
        if k != k2 || k % 2 == 0 {
            return shape_err(format!("conv2d kernel must be square and odd, got {k}x{k2}"));
        }
        if wc != in_c {
            return shape_err(format!("conv2d weights expect {wc} channels, input has {in_c}"));
        }
        if stride == 0 {
            return precondition("conv2d stride must be >= 1");
        }
        let (out_h, out_w, pad_top, pad_left) = match padding {
            Padding::Same => {
                let oh = in_h.div_ceil(stride);
                let ow = in_w.div_ceil(stride);
                let ph = ((oh - 1) * stride + k).saturating_sub(in_h);
                let pw = ((ow - 1) * stride + k).saturating_sub(in_w);
                (oh, ow, ph / 2, pw / 2)
            }
            Padding::Valid => {
                if in_h < k || in_w < k {
                    return shape_err(format!("valid conv2d: {k}x{k} kernel exceeds {in_h}x{in_w} input"));
                }
                ((in_h - k) / stride + 1, (in_w - k) / stride + 1, 0, 0)
            }
        };
        Ok(ConvGeometry {
            batch,
            in_h,
            in_w,
            in_c,
            kernel: k,
            out_c,
            stride,
            pad_top,
            pad_left,
            out_h,
            out_w,
        })
    }

    pub fn rows(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }

    pub fn patch(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }

    #[inline]
    fn source(&self, oy: usize, ky: usize, ox: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.pad_top)?;
        let x = (ox * self.stride + kx).checked_sub(self.pad_left)?;
        (y < self.in_h && x < self.in_w).then_some((y, x))
    }
}

/// Unfold input patches into a `[rows, k*k*C]` matrix, column order (ky, kx, c).
pub fn im2col<T: Scalar>(input: &[T], g: &ConvGeometry) -> Vec<T> {
    let patch = g.patch();
    let mut cols = vec![T::zero(); g.rows() * patch];
    let c = g.in_c;
    let mut row = 0;
    for n in 0..g.batch {
        let img = &input[n * g.in_h * g.in_w * c..(n + 1) * g.in_h * g.in_w * c];
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let dst = &mut cols[row * patch..(row + 1) * patch];
                for ky in 0..g.kernel {
                    for kx in 0..g.kernel {
                        if let Some((y, x)) = g.source(oy, ky, ox, kx) {
                            let off = (ky * g.kernel + kx) * c;
                            let src = (y * g.in_w + x) * c;
                            dst[off..off + c].copy_from_slice(&img[src..src + c]);
                        }
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// Scatter-add a `[rows, k*k*C]` patch-gradient matrix back onto the input.
pub fn col2im<T: Scalar>(cols: &[T], g: &ConvGeometry) -> Vec<T> {
    let patch = g.patch();
    let c = g.in_c;
    let mut out = vec![T::zero(); g.batch * g.in_h * g.in_w * c];
    let mut row = 0;
    for n in 0..g.batch {
        let base = n * g.in_h * g.in_w * c;
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let src = &cols[row * patch..(row + 1) * patch];
                for ky in 0..g.kernel {
                    for kx in 0..g.kernel {
                        if let Some((y, x)) = g.source(oy, ky, ox, kx) {
                            let off = (ky * g.kernel + kx) * c;
                            let dst = base + (y * g.in_w + x) * c;
                            for (d, &s) in out[dst..dst + c].iter_mut().zip(&src[off..off + c]) {
                                *d += s;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
    out
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T]) {
    for row in out.chunks_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Product of the unfolded patches with the flattened kernel, plus bias.
pub(crate) fn conv2d_cols<T: Scalar>(cols: &[T], g: &ConvGeometry, weights: &Tensor<T>, bias: &Tensor<T>) -> Tensor<T> {
    let mut out = vec![T::zero(); g.rows() * g.out_c];
    matmul(
        MatRef::new(cols, g.rows(), g.patch()),
        MatRef::new(weights.data(), g.patch(), g.out_c),
        &mut out,
        false,
    );
    add_bias(&mut out, bias.data());
    Tensor::from_vec(&[g.batch, g.out_h, g.out_w, g.out_c], out).expect("conv output shape")
}

/// 2-D cross-correlation of `[H,W,C]` or `[N,H,W,C]` input with `[k,k,C,K]` weights.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input.shape(), weights.shape(), stride, padding)?;
    if bias.shape() != [g.out_c] {
        return shape_err(format!("conv2d bias must be [{}], got {:?}", g.out_c, bias.shape()));
    }
    let cols = im2col(input.data(), &g);
    let out = conv2d_cols(&cols, &g, weights, bias);
    if input.ndim() == 3 {
        out.reshape(&[g.out_h, g.out_w, g.out_c])
    } else {
        Ok(out)
    }
}

/// Gradients of a convolution given its unfolded input and upstream gradient.
/// Weight and bias gradients are accumulated; the input gradient is returned
/// only when requested.
pub(crate) fn conv2d_backward<T: Scalar>(
    cols: &[T],
    g: &ConvGeometry,
    weights: &Tensor<T>,
    grad_out: &[T],
    grad_w: &mut [T],
    grad_b: &mut [T],
    want_input: bool,
) -> Option<Vec<T>> {
    let rows = g.rows();
    let patch = g.patch();
    matmul(
        MatRef::new(cols, rows, patch).t(),
        MatRef::new(grad_out, rows, g.out_c),
        grad_w,
        true,
    );
    for row in grad_out.chunks(g.out_c) {
        for (b, &v) in grad_b.iter_mut().zip(row) {
            *b += v;
        }
    }
    if !want_input {
        return None;
    }
    let mut dcols = vec![T::zero(); rows * patch];
    matmul(
        MatRef::new(grad_out, rows, g.out_c),
        MatRef::new(weights.data(), patch, g.out_c).t(),
        &mut dcols,
        false,
    );
    Some(col2im(&dcols, g))
}

/// `input · weights + bias` for `[n]` or `[N,n]` input and `[n,m]` weights.
pub fn dense<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, m] = *weights.shape() else {
        return shape_err(format!("dense weights must be [n,m], got {:?}", weights.shape()));
    };
    if bias.shape() != [m] {
        return shape_err(format!("dense bias must be [{m}], got {:?}", bias.shape()));
    }
    let (batch, single) = match *input.shape() {
        [w] if w == n => (1, true),
        [b, w] if w == n => (b, false),
        _ => return shape_err(format!("dense expects [..,{n}] input, got {:?}", input.shape())),
    };
    let mut out = vec![T::zero(); batch * m];
    matmul(
        MatRef::new(input.data(), batch, n),
        MatRef::new(weights.data(), n, m),
        &mut out,
        false,
    );
    add_bias(&mut out, bias.data());
    if single {
        Tensor::from_vec(&[m], out)
    } else {
        Tensor::from_vec(&[batch, m], out)
    }
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Softmax along the last axis.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let c = *logits.shape().last().unwrap_or(&1);
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(c.max(1)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn log_softmax_at<T: Scalar>(row: &[T], label: usize) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    row[label] - lse
}

/// `-log softmax(logits)[label]` for a single `[c]` logit vector.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, label: usize) -> Result<T> {
    let [c] = *logits.shape() else {
        return shape_err(format!("expected [c] logits, got {:?}", logits.shape()));
    };
    if c < 2 {
        return precondition(format!("cross entropy needs at least 2 classes, got {c}"));
    }
    if label >= c {
        return precondition(format!("label {label} out of range for {c} classes"));
    }
    Ok(-log_softmax_at(logits.data(), label))
}

/// Mean cross entropy over a `[N,c]` batch and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy_batch<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let [n, c] = *logits.shape() else {
        return shape_err(format!("expected [N,c] logits, got {:?}", logits.shape()));
    };
    if n != labels.len() {
        return shape_err(format!("{n} logit rows for {} labels", labels.len()));
    }
    if c < 2 {
        return precondition(format!("cross entropy needs at least 2 classes, got {c}"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return precondition(format!("label {bad} out of range for {c} classes"));
    }
    let probs = softmax(logits);
    let mut grad = probs;
    let inv_n = T::one() / T::cast(n as f64);
    let mut loss = T::zero();
    for (i, &label) in labels.iter().enumerate() {
        loss -= log_softmax_at(&logits.data()[i * c..(i + 1) * c], label);
        let row = &mut grad.data_mut()[i * c..(i + 1) * c];
        row[label] -= T::one();
        row.iter_mut().for_each(|v| *v *= inv_n);
    }
    Ok((loss * inv_n, grad))
}

/// Non-overlapping max pooling with `size`x`size` windows (floor semantics).
/// Returns the pooled tensor and, per output element, the flat input index
/// that won.
pub fn maxpool2d<T: Scalar>(input: &Tensor<T>, size: usize, stride: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let [n, h, w, c] = *input.shape() else {
        return shape_err(format!("maxpool expects [N,H,W,C], got {:?}", input.shape()));
    };
    if size == 0 || stride == 0 || h < size || w < size {
        return shape_err(format!("maxpool {size}/{stride} on {h}x{w}"));
    }
    let oh = (h - size) / stride + 1;
    let ow = (w - size) / stride + 1;
    let src = input.data();
    let mut out = vec![T::zero(); n * oh * ow * c];
    let mut arg = vec![0usize; out.len()];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let o = ((b * oh + oy) * ow + ox) * c;
                for ch in 0..c {
                    let mut best = usize::MAX;
                    let mut best_v = T::neg_infinity();
                    for dy in 0..size {
                        for dx in 0..size {
                            let i = ((b * h + oy * stride + dy) * w + ox * stride + dx) * c + ch;
                            if best == usize::MAX || src[i] > best_v {
                                best = i;
                                best_v = src[i];
                            }
                        }
                    }
                    out[o + ch] = best_v;
                    arg[o + ch] = best;
                }
            }
        }
    }
    Ok((Tensor::from_vec(&[n, oh, ow, c], out)?, arg))
}

/// `[N,H,W,C]` → `[N,C]` spatial mean.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, h, w, c] = *input.shape() else {
        return shape_err(format!("global_avg_pool expects [N,H,W,C], got {:?}", input.shape()));
    };
    let area = h * w;
    let inv = T::one() / T::cast(area as f64);
    let mut out = vec![T::zero(); n * c];
    for b in 0..n {
        let dst = &mut out[b * c..(b + 1) * c];
        for px in input.data()[b * area * c..(b + 1) * area * c].chunks(c) {
            for (d, &v) in dst.iter_mut().zip(px) {
                *d += v;
            }
        }
        dst.iter_mut().for_each(|v| *v *= inv);
    }
    Tensor::from_vec(&[n, c], out)
}

/// Join `[N,a]` and `[N,b]` into `[N,a+b]`.
pub fn concat<T: Scalar>(left: &Tensor<T>, right: &Tensor<T>) -> Result<Tensor<T>> {
    let ([n, a], [n2, b]) = (left.shape(), right.shape()) else {
        return shape_err(format!("concat expects two [N,w] tensors, got {:?} and {:?}", left.shape(), right.shape()));
    };
    if n != n2 {
        return shape_err(format!("concat batch sizes {n} and {n2}"));
    }
    let (n, a, b) = (*n, *a, *b);
    let mut out = Vec::with_capacity(n * (a + b));
    for i in 0..n {
        out.extend_from_slice(&left.data()[i * a..(i + 1) * a]);
        out.extend_from_slice(&right.data()[i * b..(i + 1) * b]);
    }
    Tensor::from_vec(&[n, a + b], out)
}

/// Inverse of [`concat`]: route a `[N,a+b]` gradient back to its two inputs.
pub fn split<T: Scalar>(joined: &Tensor<T>, left_width: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let [n, w] = *joined.shape() else {
        return shape_err(format!("split expects [N,w], got {:?}", joined.shape()));
    };
    if left_width > w {
        return shape_err(format!("split at {left_width} of width {w}"));
    }
    let b = w - left_width;
    let mut l = Vec::with_capacity(n * left_width);
    let mut r = Vec::with_capacity(n * b);
    for row in joined.data().chunks(w.max(1)).take(n) {
        l.extend_from_slice(&row[..left_width]);
        r.extend_from_slice(&row[left_width..]);
    }
    Ok((Tensor::from_vec(&[n, left_width], l)?, Tensor::from_vec(&[n, b], r)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop cross-correlation used as the oracle.
    fn naive_conv(
        input: &[f64],
        (h, w, c): (usize, usize, usize),
        weights: &[f64],
        k: usize,
        kout: usize,
        bias: &[f64],
        stride: usize,
        pad: (usize, usize),
        (oh, ow): (usize, usize),
    ) -> Vec<f64> {
        let mut out = vec![0.0; oh * ow * kout];
        for oy in 0..oh {
            for ox in 0..ow {
                for o in 0..kout {
                    let mut acc = bias[o];
                    for ky in 0..k {
                        for kx in 0..k {
                            let y = (oy * stride + ky) as isize - pad.0 as isize;
                            let x = (ox * stride + kx) as isize - pad.1 as isize;
                            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                                continue;
                            }
                            for ch in 0..c {
                                acc += input[((y as usize) * w + x as usize) * c + ch]
                                    * weights[((ky * k + kx) * c + ch) * kout + o];
                            }
                        }
                    }
                    out[(oy * ow + ox) * kout + o] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let input = Tensor::from_vec(&[3, 4, 1], (0..12).map(|v| v as f32).collect()).unwrap();
        let w = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0f32]).unwrap();
        let b = Tensor::zeros(&[1]);
        let out = conv2d(&input, &w, &b, 1, Padding::Same).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn all_ones_kernel_on_constant_input() {
        let c = 0.75f32;
        let input = Tensor::full(&[6, 5, 1], c);
        let w = Tensor::full(&[3, 3, 1, 1], 1.0f32);
        let out = conv2d(&input, &w, &Tensor::zeros(&[1]), 1, Padding::Valid).unwrap();
        assert_eq!(out.shape(), &[4, 3, 1]);
        let oracle = naive_conv(&[c as f64; 30], (6, 5, 1), &[1.0; 9], 3, 1, &[0.0], 1, (0, 0), (4, 3));
        for (&v, &o) in out.data().iter().zip(&oracle) {
            assert_eq!(o, 9.0 * c as f64);
            assert!((v as f64 - o).abs() < 1e-6);
        }
    }

    #[test]
    fn strided_same_shape_arithmetic() {
        let input = Tensor::<f32>::zeros(&[8, 8, 3]);
        let w = Tensor::zeros(&[3, 3, 3, 4]);
        let out = conv2d(&input, &w, &Tensor::zeros(&[4]), 2, Padding::Same).unwrap();
        assert_eq!(out.shape(), &[4, 4, 4]);
        let odd = Tensor::<f32>::zeros(&[2, 7, 9, 3]);
        let out = conv2d(&odd, &w, &Tensor::zeros(&[4]), 2, Padding::Same).unwrap();
        assert_eq!(out.shape(), &[2, 4, 5, 4]);
    }

    #[test]
    fn conv_matches_nested_loop_oracle() {
        use rand::Rng;
        let mut rng = crate::rng::seeded(3);
        for &(h, w, c, k, kout, stride, padding) in &[
            (7usize, 6usize, 2usize, 3usize, 3usize, 1usize, Padding::Same),
            (9, 8, 3, 3, 2, 2, Padding::Same),
            (9, 8, 1, 5, 2, 2, Padding::Valid),
        ] {
            let input: Vec<f64> = (0..h * w * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let weights: Vec<f64> = (0..k * k * c * kout).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bias: Vec<f64> = (0..kout).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t = Tensor::from_vec(&[h, w, c], input.clone()).unwrap();
            let wt = Tensor::from_vec(&[k, k, c, kout], weights.clone()).unwrap();
            let bt = Tensor::from_vec(&[kout], bias.clone()).unwrap();
            let out = conv2d(&t, &wt, &bt, stride, padding).unwrap();
            let g = ConvGeometry::new(&[h, w, c], &[k, k, c, kout], stride, padding).unwrap();
            let oracle = naive_conv(
                &input,
                (h, w, c),
                &weights,
                k,
                kout,
                &bias,
                stride,
                (g.pad_top, g.pad_left),
                (g.out_h, g.out_w),
            );
            for (a, b) in out.data().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_shape_errors() {
        let input = Tensor::<f32>::zeros(&[4, 4, 2]);
        assert!(conv2d(&input, &Tensor::zeros(&[3, 3, 3, 1]), &Tensor::zeros(&[1]), 1, Padding::Same).is_err());
        assert!(conv2d(&input, &Tensor::zeros(&[2, 2, 2, 1]), &Tensor::zeros(&[1]), 1, Padding::Same).is_err());
        assert!(conv2d(&input, &Tensor::zeros(&[5, 5, 2, 1]), &Tensor::zeros(&[1]), 1, Padding::Valid).is_err());
    }

    #[test]
    fn dense_identity_and_bias_only() {
        let x = Tensor::from_vec(&[3], vec![1.0f32, -2.0, 0.5]).unwrap();
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(dense(&x, &eye, &Tensor::zeros(&[3])).unwrap(), x);
        let b = Tensor::from_vec(&[2], vec![0.25f32, -4.0]).unwrap();
        assert_eq!(dense(&x, &Tensor::zeros(&[3, 2]), &b).unwrap(), b);
    }

    #[test]
    fn dense_random_matches_hand_product() {
        let x = [0.5f64, -1.0, 2.0, 0.25];
        let w: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
        let b = [0.1f64, 0.2, -0.3];
        let out = dense(
            &Tensor::from_vec(&[4], x.to_vec()).unwrap(),
            &Tensor::from_vec(&[4, 3], w.clone()).unwrap(),
            &Tensor::from_vec(&[3], b.to_vec()).unwrap(),
        )
        .unwrap();
        for j in 0..3 {
            let want: f64 = (0..4).map(|i| x[i] * w[i * 3 + j]).sum::<f64>() + b[j];
            assert!((out.data()[j] - want).abs() < 1e-12);
        }
        assert!(dense(&Tensor::from_vec(&[3], vec![0.0; 3]).unwrap(), &Tensor::from_vec(&[4, 3], w).unwrap(), &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn cross_entropy_reference_values() {
        let eq = Tensor::from_vec(&[2], vec![0.7f32, 0.7]).unwrap();
        assert!((softmax_cross_entropy(&eq, 0).unwrap() - std::f32::consts::LN_2).abs() < 1e-6);
        let sat = Tensor::from_vec(&[2], vec![100.0f32, 0.0]).unwrap();
        assert!(softmax_cross_entropy(&sat, 0).unwrap() < 1e-6);
        // -log(e^-1.2 / (e^0.3 + e^-1.2)) = ln(1 + e^1.5)
        let want = (1.0f64 + 1.5f64.exp()).ln();
        let l = Tensor::from_vec(&[2], vec![0.3f32, -1.2]).unwrap();
        assert!((softmax_cross_entropy(&l, 1).unwrap() as f64 - want).abs() < 1e-6);
        assert!(softmax_cross_entropy(&l, 2).is_err());
        assert!(softmax_cross_entropy(&Tensor::from_vec(&[1], vec![0.0f32]).unwrap(), 0).is_err());
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let l = Tensor::from_vec(&[2, 3], vec![1000.0f32, -5.0, 3.0, 0.1, 0.2, 0.3]).unwrap();
        let p = softmax(&l);
        for row in p.data().chunks(3) {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn concat_split_round_trip() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[2, 1], vec![5.0f32, 6.0]).unwrap();
        let j = concat(&a, &b).unwrap();
        assert_eq!(j.data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let (l, r) = split(&j, 2).unwrap();
        assert_eq!((l, r), (a, b));
    }
}
