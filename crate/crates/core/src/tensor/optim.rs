use super::{Result, Scalar, Tensor, TensorError};

/// Decay and conditioning constants of the Adadelta update.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Adadelta {
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for Adadelta {
    fn default() -> Self {
        Self {
            rho: 0.95,
            epsilon: 1e-6,
        }
    }
}

/// Running averages of squared gradients and squared updates, one pair of
/// tensors per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState<S> {
    pub config: Adadelta,
    pub accum_grad_sq: Vec<Tensor<S>>,
    pub accum_update_sq: Vec<Tensor<S>>,
}

impl<S: Scalar> AdadeltaState<S> {
    pub fn new(config: Adadelta, params: &[Tensor<S>]) -> Self {
        let zeros = |p: &Tensor<S>| Tensor::zeros(p.shape());
        Self {
            config,
            accum_grad_sq: params.iter().map(zeros).collect(),
            accum_update_sq: params.iter().map(zeros).collect(),
        }
    }

    /// One Adadelta update of every parameter tensor, in place.
    pub fn step(&mut self, params: &mut [Tensor<S>], grads: &[Tensor<S>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.accum_grad_sq.len() {
            return Err(TensorError::Shape(format!(
                "{} params, {} grads, {} accumulators",
                params.len(),
                grads.len(),
                self.accum_grad_sq.len()
            )));
        }
        let rho = S::from_f64(self.config.rho);
        let keep = S::one() - rho;
        let eps = S::from_f64(self.config.epsilon);
        for (i, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
            let eg = &mut self.accum_grad_sq[i];
            let ex = &mut self.accum_update_sq[i];
            if param.shape() != grad.shape() || param.shape() != eg.shape() {
                return Err(TensorError::Shape(format!(
                    "param {i}: {:?} vs grad {:?}",
                    param.shape(),
                    grad.shape()
                )));
            }
            let it = param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(eg.data_mut().iter_mut().zip(ex.data_mut().iter_mut()));
            for ((x, &g), (eg, ex)) in it {
                *eg = rho * *eg + keep * g * g;
                let dx = -((*ex + eps).sqrt() / (*eg + eps).sqrt()) * g;
                *ex = rho * *ex + keep * dx * dx;
                *x = *x + dx;
            }
        }
        Ok(())
    }
}
