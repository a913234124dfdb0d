use super::layer::Parameter;
use crate::error::{precondition, Result};
use crate::scalar::Scalar;

/// SGD with heavy-ball momentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return precondition(format!("learning rate must be >= 0, got {lr}"));
        }
        if !(0.0..1.0).contains(&momentum) {
            return precondition(format!("momentum must be in [0, 1), got {momentum}"));
        }
        Ok(Sgd { lr, momentum })
    }

    /// `buffer = momentum * buffer + grad; value -= lr * buffer`, then zero the gradient.
    pub fn step<'a, T: Scalar>(&self, params: impl IntoIterator<Item = &'a mut Parameter<T>>) {
        let lr = T::cast(self.lr);
        let mu = T::cast(self.momentum);
        for p in params {
            let Parameter { value, gradient, momentum } = p;
            for ((v, g), m) in value
                .data_mut()
                .iter_mut()
                .zip(gradient.data_mut().iter_mut())
                .zip(momentum.data_mut().iter_mut())
            {
                *m = mu * *m + *g;
                *v -= lr * *m;
                *g = T::zero();
            }
        }
    }
}
