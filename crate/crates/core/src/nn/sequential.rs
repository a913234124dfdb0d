use super::layer::{Layer, LayerSpec, Parameter};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// A linear stack of layers with a reverse-mode tape.
#[derive(Debug, Clone)]
pub struct Sequential<T> {
    layers: Vec<Layer<T>>,
    recorded: bool,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(specs: &[LayerSpec], rng: &mut Rng) -> Result<Self> {
        let layers = specs.iter().map(|&s| Layer::new(s, rng)).collect::<Result<_>>()?;
        Ok(Sequential { layers, recorded: false })
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| *l.spec()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Sequential<U> {
        Sequential { layers: self.layers.iter().map(Layer::cast).collect(), recorded: false }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut iter = self.layers.iter();
        let Some(first) = iter.next() else {
            return Ok(input.clone());
        };
        let mut x = first.forward(input)?;
        for layer in iter {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    pub fn forward_train(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward_train(&x)?;
        }
        self.recorded = true;
        Ok(x)
    }

    fn backward_inner(&mut self, grad: &Tensor<T>, want_input: bool) -> Result<Option<Tensor<T>>> {
        if !self.recorded {
            return Err(Error::State("backward without a recorded forward pass".into()));
        }
        self.recorded = false;
        let mut g = grad.clone();
        let n = self.layers.len();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let need = want_input || i > 0;
            match layer.backward(&g, need)? {
                Some(next) => g = next,
                None => {
                    debug_assert!(i == 0 && n > 0);
                    return Ok(None);
                }
            }
        }
        Ok(Some(g))
    }

    /// Backpropagate `grad` (∂loss/∂output) and return ∂loss/∂input.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.backward_inner(grad, true)?.expect("input gradient requested"))
    }

    /// Backpropagate without computing the gradient w.r.t. the stack input.
    pub fn backward_params(&mut self, grad: &Tensor<T>) -> Result<()> {
        self.backward_inner(grad, false).map(|_| ())
    }

    pub fn params(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.layers.iter().flat_map(|l| l.params().iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut().iter_mut())
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().for_each(Parameter::zero_grad);
    }

    pub fn clear_tape(&mut self) {
        self.recorded = false;
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    pub fn param_count(&self) -> usize {
        self.params().map(|p| p.value.len()).sum()
    }
}
