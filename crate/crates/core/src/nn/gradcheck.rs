//! Central finite-difference gradient checking.
//!
//! The numerical side only ever calls the inference forward pass, so it stays
//! independent of the backward kernels it is checking.

use super::layer::Parameter;
use super::sequential::Sequential;
use super::tensor::Tensor;
use crate::error::Result;
use crate::scalar::Scalar;

/// A scalar loss over a set of parameter tensors.
pub trait Objective<T: Scalar> {
    /// Loss from a forward pass that records nothing, reduced in f64 so that
    /// outputs untouched by a perturbation cancel exactly.
    fn loss(&self) -> Result<f64>;
    /// Loss from a training pass; gradients are written into the parameters.
    fn loss_and_grad(&mut self) -> Result<f64>;
    fn num_params(&self) -> usize;
    fn param_mut(&mut self, i: usize) -> &mut Parameter<T>;
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` per parameter tensor.
    pub relative_errors: Vec<f64>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom < 1e-12 {
        diff
    } else {
        diff / denom
    }
}

/// Compare analytic gradients against `(L(θ+h) − L(θ−h)) / 2h` for every element.
pub fn check<T: Scalar, O: Objective<T>>(objective: &mut O, h: f64) -> Result<GradCheckReport> {
    for i in 0..objective.num_params() {
        objective.param_mut(i).zero_grad();
    }
    objective.loss_and_grad()?;
    let analytic: Vec<Vec<f64>> = (0..objective.num_params())
        .map(|i| objective.param_mut(i).gradient.data().iter().map(|g| g.as_f64()).collect())
        .collect();
    let step = T::cast(h);
    let mut relative_errors = Vec::with_capacity(analytic.len());
    for (i, grad) in analytic.iter().enumerate() {
        let mut numeric = Vec::with_capacity(grad.len());
        for j in 0..grad.len() {
            let original = objective.param_mut(i).value.data()[j];
            objective.param_mut(i).value.data_mut()[j] = original + step;
            let plus = objective.loss()?;
            objective.param_mut(i).value.data_mut()[j] = original - step;
            let minus = objective.loss()?;
            objective.param_mut(i).value.data_mut()[j] = original;
            // the perturbation actually applied, after rounding to T
            let applied = (original + step).as_f64() - (original - step).as_f64();
            numeric.push((plus - minus) / applied);
        }
        relative_errors.push(relative_error(grad, &numeric));
    }
    for i in 0..objective.num_params() {
        objective.param_mut(i).zero_grad();
    }
    Ok(GradCheckReport { relative_errors })
}

/// A stack evaluated on a fixed input under the loss `Σ wᵢ·yᵢ`. With
/// `check_input` the input is exposed as an extra trailing "parameter" so
/// the input gradient is checked too. With `promoted` the perturbed loss is
/// evaluated on an f64 copy, leaving only the step's truncation error.
pub struct StackProbe<T> {
    pub stack: Sequential<T>,
    pub input: Parameter<T>,
    pub weights: Tensor<T>,
    pub check_input: bool,
    pub promoted: bool,
}

impl<T: Scalar> StackProbe<T> {
    pub fn new(stack: Sequential<T>, input: Tensor<T>, weights: Tensor<T>) -> Self {
        StackProbe { stack, input: Parameter::new(input), weights, check_input: true, promoted: false }
    }

    pub fn params_only(mut self) -> Self {
        self.check_input = false;
        self
    }

    pub fn promoted(mut self) -> Self {
        self.promoted = true;
        self
    }

    fn weighted<U: Scalar>(&self, y: &Tensor<U>) -> f64 {
        y.data().iter().zip(self.weights.data()).map(|(&a, &b)| a.as_f64() * b.as_f64()).sum()
    }
}

impl<T: Scalar> Objective<T> for StackProbe<T> {
    fn loss(&self) -> Result<f64> {
        if self.promoted {
            let y = self.stack.cast::<f64>().forward(&self.input.value.cast())?;
            return Ok(self.weighted(&y));
        }
        let y = self.stack.forward(&self.input.value)?;
        Ok(self.weighted(&y))
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        let y = self.stack.forward_train(&self.input.value)?;
        let loss = self.weighted(&y);
        let seed = Tensor::from_vec(y.shape(), self.weights.data().to_vec())?;
        let dx = self.stack.backward(&seed)?;
        self.input.gradient = dx;
        Ok(loss)
    }

    fn num_params(&self) -> usize {
        self.stack.params().count() + usize::from(self.check_input)
    }

    fn param_mut(&mut self, i: usize) -> &mut Parameter<T> {
        let n = self.stack.params().count();
        if i == n {
            &mut self.input
        } else {
            self.stack.params_mut().nth(i).expect("parameter index")
        }
    }
}

/// Distance from the nearest non-differentiable point reached by `input`:
/// the smallest |pre-activation| seen by a ReLU and the smallest gap between
/// the two largest values of a max-pool window. Finite differences taken
/// with a step well below this margin never straddle a kink.
pub fn kink_margin<T: Scalar>(stack: &Sequential<T>, input: &Tensor<T>) -> Result<f64> {
    use super::layer::LayerSpec;
    let mut margin = f64::INFINITY;
    let mut x = input.clone();
    for layer in stack.layers() {
        match *layer.spec() {
            LayerSpec::Relu => {
                for v in x.data() {
                    margin = margin.min(v.as_f64().abs());
                }
            }
            LayerSpec::MaxPool { size, stride } => {
                if let [n, h, w, c] = *x.shape() {
                    if h < size || w < size {
                        // the forward pass below reports the shape error
                        x = layer.forward(&x)?;
                        continue;
                    }
                    let oh = (h - size) / stride + 1;
                    let ow = (w - size) / stride + 1;
                    let d = x.data();
                    for b in 0..n {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                for ch in 0..c {
                                    let mut vals: Vec<f64> = (0..size * size)
                                        .map(|i| {
                                            let (dy, dx) = (i / size, i % size);
                                            d[((b * h + oy * stride + dy) * w + ox * stride + dx) * c + ch].as_f64()
                                        })
                                        .collect();
                                    vals.sort_by(|a, b| b.total_cmp(a));
                                    // rectified zeros stay zero while the ReLU margin holds
                                    if vals.len() > 1 && vals[0] != 0.0 {
                                        margin = margin.min(vals[0] - vals[1]);
                                    }
                                }
                            }
                        }
                    }
                }
            }
            _ => {}
        }
        x = layer.forward(&x)?;
    }
    Ok(margin)
}
