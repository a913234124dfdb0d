use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ops::{self, ConvGeometry, Padding};
use super::tensor::Tensor;
use crate::error::{precondition, shape_err, Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Kind and hyperparameters of one layer. This is what checkpoints record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        kernel: usize,
        stride: usize,
        padding: Padding,
        in_channels: usize,
        out_channels: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Relu,
    MaxPool {
        size: usize,
        stride: usize,
    },
    GlobalAvgPool,
    /// Joins two `[N,w]` streams; only valid as a graph junction, not inside a stack.
    Concat {
        left: usize,
        right: usize,
    },
    Softmax,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Conv2d { kernel, stride, in_channels, out_channels, .. } => {
                if kernel == 0 || kernel % 2 == 0 {
                    return precondition(format!("conv2d kernel must be odd, got {kernel}"));
                }
                if stride == 0 || in_channels == 0 || out_channels == 0 {
                    return precondition("conv2d stride and channel counts must be >= 1");
                }
            }
            LayerSpec::Dense { inputs, outputs } if inputs == 0 || outputs == 0 => {
                return precondition("dense widths must be >= 1");
            }
            LayerSpec::MaxPool { size, stride } if size == 0 || stride == 0 => {
                return precondition("maxpool size and stride must be >= 1");
            }
            LayerSpec::Concat { left, right } if left == 0 || right == 0 => {
                return precondition("concat widths must be >= 1");
            }
            _ => {}
        }
        Ok(())
    }

    /// Parameter shapes in declaration order (weights, then bias).
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d { kernel, in_channels, out_channels, .. } => {
                vec![vec![kernel, kernel, in_channels, out_channels], vec![out_channels]]
            }
            LayerSpec::Dense { inputs, outputs } => vec![vec![inputs, outputs], vec![outputs]],
            _ => vec![],
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv2d { kernel, in_channels, .. } => kernel * kernel * in_channels,
            LayerSpec::Dense { inputs, .. } => inputs,
            _ => 0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::GlobalAvgPool => "global_avg_pool",
            LayerSpec::Concat { .. } => "concat",
            LayerSpec::Softmax => "softmax",
        }
    }
}

/// A trainable tensor with its gradient and momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    pub value: Tensor<T>,
    pub gradient: Tensor<T>,
    pub momentum: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let shape = value.shape().to_vec();
        Parameter {
            value,
            gradient: Tensor::zeros(&shape),
            momentum: Tensor::zeros(&shape),
        }
    }

    pub fn zero_grad(&mut self) {
        self.gradient.fill(T::zero());
    }
}

/// Weights drawn from N(0, 2/fan_in).
pub fn he_normal<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor<T> {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::cast(normal.sample(rng))).collect();
    Tensor::from_vec(shape, data).expect("he_normal shape")
}

#[derive(Debug, Clone)]
enum Cache<T> {
    Conv { cols: Vec<T>, geometry: ConvGeometry },
    Dense { input: Tensor<T> },
    Relu { output: Tensor<T> },
    MaxPool { argmax: Vec<usize>, input_shape: Vec<usize> },
    GlobalAvgPool { input_shape: Vec<usize> },
    Softmax { output: Tensor<T> },
}

/// One layer: spec, parameters, and the activation recorded by the last
/// training forward pass.
#[derive(Debug, Clone)]
pub struct Layer<T> {
    spec: LayerSpec,
    params: Vec<Parameter<T>>,
    cache: Option<Cache<T>>,
}

impl<T: Scalar> Layer<T> {
    pub fn new(spec: LayerSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let params = spec
            .param_shapes()
            .into_iter()
            .enumerate()
            .map(|(i, shape)| {
                if i == 0 {
                    Parameter::new(he_normal(&shape, spec.fan_in(), rng))
                } else {
                    Parameter::new(Tensor::zeros(&shape))
                }
            })
            .collect();
        Ok(Layer { spec, params, cache: None })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    /// Same weights in another precision; optimizer state and tape are dropped.
    pub fn cast<U: Scalar>(&self) -> Layer<U> {
        let params = self.params.iter().map(|p| Parameter::new(p.value.cast())).collect();
        Layer { spec: self.spec, params, cache: None }
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    fn conv_args(&self) -> (usize, Padding) {
        match self.spec {
            LayerSpec::Conv2d { stride, padding, .. } => (stride, padding),
            _ => unreachable!(),
        }
    }

    fn run(&self, input: &Tensor<T>, record: bool) -> Result<(Tensor<T>, Option<Cache<T>>)> {
        let out = match self.spec {
            LayerSpec::Conv2d { .. } => {
                if input.ndim() != 4 {
                    return shape_err(format!("conv2d layer expects [N,H,W,C], got {:?}", input.shape()));
                }
                let (stride, padding) = self.conv_args();
                let weights = &self.params[0].value;
                let geometry = ConvGeometry::new(input.shape(), weights.shape(), stride, padding)?;
                let cols = ops::im2col(input.data(), &geometry);
                let out = ops::conv2d_cols(&cols, &geometry, weights, &self.params[1].value);
                return Ok((out, record.then_some(Cache::Conv { cols, geometry })));
            }
            LayerSpec::Dense { inputs, .. } => {
                if input.ndim() != 2 || input.shape()[1] != inputs {
                    return shape_err(format!("dense layer expects [N,{inputs}], got {:?}", input.shape()));
                }
                let out = ops::dense(input, &self.params[0].value, &self.params[1].value)?;
                return Ok((out, record.then(|| Cache::Dense { input: input.clone() })));
            }
            LayerSpec::Relu => {
                let out = ops::relu(input);
                let cache = record.then(|| Cache::Relu { output: out.clone() });
                return Ok((out, cache));
            }
            LayerSpec::MaxPool { size, stride } => {
                let (out, argmax) = ops::maxpool2d(input, size, stride)?;
                let cache = record.then(|| Cache::MaxPool { argmax, input_shape: input.shape().to_vec() });
                return Ok((out, cache));
            }
            LayerSpec::GlobalAvgPool => {
                let out = ops::global_avg_pool(input)?;
                (out, record.then(|| Cache::GlobalAvgPool { input_shape: input.shape().to_vec() }))
            }
            LayerSpec::Softmax => {
                let out = ops::softmax(input);
                let cache = record.then(|| Cache::Softmax { output: out.clone() });
                (out, cache)
            }
            LayerSpec::Concat { .. } => {
                return precondition("concat joins two stacks and cannot run inside a sequential stack");
            }
        };
        Ok(out)
    }

    /// Inference forward pass; records nothing.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(input, false)?.0)
    }

    /// Training forward pass; records what [`Layer::backward`] needs.
    pub fn forward_train(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (out, cache) = self.run(input, true)?;
        self.cache = cache;
        Ok(out)
    }

    /// Accumulate parameter gradients and, if `want_input`, return the
    /// gradient w.r.t. the layer input. Consumes the recorded activation.
    pub fn backward(&mut self, grad: &Tensor<T>, want_input: bool) -> Result<Option<Tensor<T>>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State(format!("{} backward without a recorded forward pass", self.spec.name())))?;
        match cache {
            Cache::Conv { cols, geometry } => {
                let expected = [geometry.batch, geometry.out_h, geometry.out_w, geometry.out_c];
                if grad.shape() != expected {
                    return shape_err(format!("conv2d grad {:?}, expected {:?}", grad.shape(), expected));
                }
                let [w, b] = &mut self.params[..] else { unreachable!() };
                let dinput = ops::conv2d_backward(
                    &cols,
                    &geometry,
                    &w.value,
                    grad.data(),
                    w.gradient.data_mut(),
                    b.gradient.data_mut(),
                    want_input,
                );
                dinput
                    .map(|d| Tensor::from_vec(&[geometry.batch, geometry.in_h, geometry.in_w, geometry.in_c], d))
                    .transpose()
            }
            Cache::Dense { input } => {
                let [n, m] = *self.params[0].value.shape() else { unreachable!() };
                let batch = input.shape()[0];
                if grad.shape() != [batch, m] {
                    return shape_err(format!("dense grad {:?}, expected [{batch},{m}]", grad.shape()));
                }
                use crate::scalar::{matmul, MatRef};
                let [w, b] = &mut self.params[..] else { unreachable!() };
                matmul(
                    MatRef::new(input.data(), batch, n).t(),
                    MatRef::new(grad.data(), batch, m),
                    w.gradient.data_mut(),
                    true,
                );
                for row in grad.data().chunks(m) {
                    for (g, &v) in b.gradient.data_mut().iter_mut().zip(row) {
                        *g += v;
                    }
                }
                if !want_input {
                    return Ok(None);
                }
                let mut dx = vec![T::zero(); batch * n];
                matmul(
                    MatRef::new(grad.data(), batch, m),
                    MatRef::new(w.value.data(), n, m).t(),
                    &mut dx,
                    false,
                );
                Ok(Some(Tensor::from_vec(&[batch, n], dx)?))
            }
            Cache::Relu { output } => {
                if grad.shape() != output.shape() {
                    return shape_err("relu grad shape");
                }
                let data = grad
                    .data()
                    .iter()
                    .zip(output.data())
                    .map(|(&g, &y)| if y > T::zero() { g } else { T::zero() })
                    .collect();
                Ok(Some(Tensor::from_vec(output.shape(), data)?))
            }
            Cache::MaxPool { argmax, input_shape } => {
                if grad.len() != argmax.len() {
                    return shape_err("maxpool grad shape");
                }
                let mut dx = Tensor::zeros(&input_shape);
                for (&i, &g) in argmax.iter().zip(grad.data()) {
                    dx.data_mut()[i] += g;
                }
                Ok(Some(dx))
            }
            Cache::GlobalAvgPool { input_shape } => {
                let [n, h, w, c] = input_shape[..] else { unreachable!() };
                if grad.shape() != [n, c] {
                    return shape_err("global_avg_pool grad shape");
                }
                let inv = T::one() / T::cast((h * w) as f64);
                let mut dx = Vec::with_capacity(n * h * w * c);
                for b in 0..n {
                    let row = &grad.data()[b * c..(b + 1) * c];
                    for _ in 0..h * w {
                        dx.extend(row.iter().map(|&g| g * inv));
                    }
                }
                Ok(Some(Tensor::from_vec(&input_shape, dx)?))
            }
            Cache::Softmax { output } => {
                if grad.shape() != output.shape() {
                    return shape_err("softmax grad shape");
                }
                let c = *output.shape().last().unwrap_or(&1);
                let mut dx = grad.clone();
                for (drow, yrow) in dx.data_mut().chunks_mut(c).zip(output.data().chunks(c)) {
                    let dot: T = drow.iter().zip(yrow).map(|(&g, &y)| g * y).sum();
                    for (d, &y) in drow.iter_mut().zip(yrow) {
                        *d = y * (*d - dot);
                    }
                }
                Ok(Some(dx))
            }
        }
    }
}
