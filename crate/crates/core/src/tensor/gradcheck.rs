use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Result, Tensor, TensorError};

/// A scalar-valued function of a list of parameter tensors whose analytic
/// gradient can be compared against central finite differences.
pub trait Differentiable {
    type Batch: ?Sized;

    /// False when the loss depends on anything but the parameters and the
    /// batch (for example active dropout).
    fn is_deterministic(&self) -> bool;
    fn param_names(&self) -> Vec<String>;
    fn params_mut(&mut self) -> &mut [Tensor<f64>];
    fn loss(&self, batch: &Self::Batch) -> Result<f64>;
    fn loss_and_grads(&self, batch: &Self::Batch) -> Result<(f64, Vec<Tensor<f64>>)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    /// Coordinates where both gradients vanish, so relative error is undefined.
    pub skipped: usize,
    /// Coordinates at or within one step of a ReLU or max-pool kink. Near a
    /// kink the central difference changes with the step, and the check uses
    /// a step 100 times smaller; on a kink the analytic value must lie
    /// between the one-sided slopes.
    pub kinks: usize,
    pub max_rel_error: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn flagged(&self) -> impl Iterator<Item = &TensorCheck> {
        self.tensors.iter().filter(|t| t.flagged)
    }

    pub fn passed(&self) -> bool {
        self.flagged().next().is_none()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }
}

fn central_difference<N: Differentiable>(
    net: &mut N,
    batch: &N::Batch,
    tensor: usize,
    index: usize,
    h: f64,
) -> Result<f64> {
    let original = net.params_mut()[tensor].data()[index];
    net.params_mut()[tensor].data_mut()[index] = original + h;
    let plus = net.loss(batch);
    net.params_mut()[tensor].data_mut()[index] = original - h;
    let minus = net.loss(batch);
    net.params_mut()[tensor].data_mut()[index] = original;
    Ok((plus? - minus?) / (2.0 * h))
}

fn one_sided_differences<N: Differentiable>(
    net: &mut N,
    batch: &N::Batch,
    tensor: usize,
    index: usize,
    h: f64,
) -> Result<(f64, f64)> {
    let original = net.params_mut()[tensor].data()[index];
    let at = net.loss(batch)?;
    net.params_mut()[tensor].data_mut()[index] = original - h;
    let minus = net.loss(batch);
    net.params_mut()[tensor].data_mut()[index] = original + h;
    let plus = net.loss(batch);
    net.params_mut()[tensor].data_mut()[index] = original;
    Ok(((at - minus?) / h, (plus? - at) / h))
}

/// Gradients below this magnitude on both sides are treated as zero.
const ZERO_GRAD: f64 = 1e-10;
const STEP: f64 = 1e-5;

/// Compares analytic gradients against central differences with a step of
/// `1e-5 · max(1, |x|)`. Failing coordinates are re-probed for kinks (see
/// [`TensorCheck::kinks`]); a wrong gradient still fails there. When `coords_per_tensor` is set, only that many
/// randomly chosen coordinates of each tensor are perturbed.
pub fn gradient_check<N: Differentiable>(
    net: &mut N,
    batch: &N::Batch,
    tolerance: f64,
    coords_per_tensor: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport> {
    if !net.is_deterministic() {
        return Err(TensorError::Usage(
            "gradient check needs a deterministic network (disable dropout)".into(),
        ));
    }
    let (_, analytic) = net.loss_and_grads(batch)?;
    let names = net.param_names();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = Vec::with_capacity(analytic.len());

    for (ti, grad) in analytic.iter().enumerate() {
        let len = grad.len();
        let coords: Vec<usize> = match coords_per_tensor {
            Some(k) if k < len => sample(&mut rng, len, k).into_vec(),
            _ => (0..len).collect(),
        };
        let mut check = TensorCheck {
            name: names.get(ti).cloned().unwrap_or_else(|| format!("param{ti}")),
            checked: 0,
            skipped: 0,
            kinks: 0,
            max_rel_error: 0.0,
            flagged: false,
        };
        for i in coords {
            let a = grad.data()[i];
            let h = STEP * net.params_mut()[ti].data()[i].abs().max(1.0);
            let mut numeric = central_difference(net, batch, ti, i, h)?;
            let rel = |n: f64| (a - n).abs() / a.abs().max(n.abs());
            let mut error = None;
            if a.abs().max(numeric.abs()) >= ZERO_GRAD && rel(numeric) > tolerance {
                let finer = central_difference(net, batch, ti, i, h / 10.0)?;
                let mut kink = (numeric - finer).abs() > tolerance * numeric.abs().max(finer.abs());
                if kink {
                    numeric = central_difference(net, batch, ti, i, h / 100.0)?;
                }
                if rel(numeric) > tolerance {
                    // Sitting on a kink: the one-sided slopes differ and any
                    // value between them is a valid derivative choice.
                    let (left, right) = one_sided_differences(net, batch, ti, i, h / 100.0)?;
                    let scale = a.abs().max(left.abs()).max(right.abs());
                    if (left - right).abs() > tolerance * scale {
                        kink = true;
                        let gap = (left.min(right) - a).max(a - left.max(right)).max(0.0);
                        error = Some(gap / scale);
                    }
                }
                check.kinks += kink as usize;
            }
            if error.is_none() && a.abs().max(numeric.abs()) < ZERO_GRAD {
                check.skipped += 1;
                continue;
            }
            check.checked += 1;
            check.max_rel_error = check.max_rel_error.max(error.unwrap_or_else(|| rel(numeric)));
        }
        check.flagged = check.max_rel_error > tolerance;
        tensors.push(check);
    }
    Ok(GradCheckReport { tolerance, tensors })
}
