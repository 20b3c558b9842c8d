use rand::Rng;

use super::{dims3, LayerGrads, Result, Scalar, Tensor, TensorError};

/// Lower clamp applied to probabilities before taking logarithms; the upper
/// clamp is `1 - BCE_CLAMP`.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero-padded border, output keeps the input's spatial size.
    Same,
    /// No padding, output shrinks by `kernel - 1` per axis.
    Valid,
}

struct ConvGeom {
    h: usize,
    w: usize,
    c: usize,
    kh: usize,
    kw: usize,
    f: usize,
    oh: usize,
    ow: usize,
    pad_top: usize,
    pad_left: usize,
}

impl ConvGeom {
    fn new<S: Scalar>(input: &Tensor<S>, kernels: &Tensor<S>, padding: Padding) -> Result<Self> {
        let (h, w, c) = dims3(input, "conv input")?;
        let (kh, kw, kc, f) = match *kernels.shape() {
            [kh, kw, kc, f] => (kh, kw, kc, f),
            ref other => {
                return Err(TensorError::Shape(format!(
                    "kernels must be KH×KW×C×F, got {other:?}"
                )))
            }
        };
        if kc != c {
            return Err(TensorError::Shape(format!(
                "input has {c} channels, kernels expect {kc}"
            )));
        }
        let (oh, ow, pad_top, pad_left) = match padding {
            Padding::Same => (h, w, (kh - 1) / 2, (kw - 1) / 2),
            Padding::Valid => {
                if h < kh || w < kw {
                    return Err(TensorError::Shape(format!(
                        "{h}×{w} input is smaller than {kh}×{kw} kernel"
                    )));
                }
                (h - kh + 1, w - kw + 1, 0, 0)
            }
        };
        Ok(Self {
            h,
            w,
            c,
            kh,
            kw,
            f,
            oh,
            ow,
            pad_top,
            pad_left,
        })
    }

    /// Source pixel for output `(oy, ox)` and kernel tap `(ky, kx)`, if it
    /// falls inside the input.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<usize> {
        let iy = (oy + ky).checked_sub(self.pad_top)?;
        let ix = (ox + kx).checked_sub(self.pad_left)?;
        (iy < self.h && ix < self.w).then_some(iy * self.w + ix)
    }
}

/// Stride-1 cross-correlation of an `H×W×C` input with `KH×KW×C×F` kernels,
/// plus a per-filter bias.
pub fn conv2d_forward<S: Scalar>(
    input: &Tensor<S>,
    kernels: &Tensor<S>,
    bias: &Tensor<S>,
    padding: Padding,
) -> Result<Tensor<S>> {
    let g = ConvGeom::new(input, kernels, padding)?;
    if bias.shape() != [g.f] {
        return Err(TensorError::Shape(format!(
            "bias must be [{}], got {:?}",
            g.f,
            bias.shape()
        )));
    }
    input.ensure_finite("conv input")?;

    let x = input.data();
    let k = kernels.data();
    let mut out = Tensor::zeros(&[g.oh, g.ow, g.f]);
    let o = out.data_mut();
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            let acc = &mut o[(oy * g.ow + ox) * g.f..][..g.f];
            acc.copy_from_slice(bias.data());
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let Some(src) = g.source(oy, ox, ky, kx) else {
                        continue;
                    };
                    let px = &x[src * g.c..][..g.c];
                    let tap = (ky * g.kw + kx) * g.c;
                    for (ci, &v) in px.iter().enumerate() {
                        if v == S::zero() {
                            continue;
                        }
                        let row = &k[(tap + ci) * g.f..][..g.f];
                        for (a, &kv) in acc.iter_mut().zip(row) {
                            *a = *a + v * kv;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Returns `d_input` and `[d_kernels, d_bias]`.
pub fn conv2d_backward<S: Scalar>(
    input: &Tensor<S>,
    kernels: &Tensor<S>,
    d_output: &Tensor<S>,
    padding: Padding,
) -> Result<LayerGrads<S>> {
    let g = ConvGeom::new(input, kernels, padding)?;
    if d_output.shape() != [g.oh, g.ow, g.f] {
        return Err(TensorError::Shape(format!(
            "d_output must be {:?}, got {:?}",
            [g.oh, g.ow, g.f],
            d_output.shape()
        )));
    }
    let x = input.data();
    let k = kernels.data();
    let dy = d_output.data();
    let mut d_input = Tensor::zeros(input.shape());
    let mut d_kernels = Tensor::zeros(kernels.shape());
    let mut d_bias = Tensor::zeros(&[g.f]);
    {
        let dx = d_input.data_mut();
        let dk = d_kernels.data_mut();
        let db = d_bias.data_mut();
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let grad = &dy[(oy * g.ow + ox) * g.f..][..g.f];
                if grad.iter().all(|&v| v == S::zero()) {
                    continue;
                }
                for (b, &gv) in db.iter_mut().zip(grad) {
                    *b = *b + gv;
                }
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let Some(src) = g.source(oy, ox, ky, kx) else {
                            continue;
                        };
                        let tap = (ky * g.kw + kx) * g.c;
                        for ci in 0..g.c {
                            let at = (tap + ci) * g.f;
                            let row = &k[at..][..g.f];
                            let dot: S = row.iter().zip(grad).map(|(&a, &b)| a * b).sum();
                            dx[src * g.c + ci] = dx[src * g.c + ci] + dot;
                            let v = x[src * g.c + ci];
                            if v != S::zero() {
                                for (d, &gv) in dk[at..][..g.f].iter_mut().zip(grad) {
                                    *d = *d + v * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(LayerGrads {
        d_input,
        d_params: vec![d_kernels, d_bias],
    })
}

pub fn relu_forward<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    input.map(|v| if v > S::zero() { v } else { S::zero() })
}

/// Gradient of ReLU: `d_output` masked wherever `input <= 0`.
pub fn relu_backward<S: Scalar>(input: &Tensor<S>, d_output: &Tensor<S>) -> Result<Tensor<S>> {
    if input.shape() != d_output.shape() {
        return Err(TensorError::Shape(format!(
            "relu d_output {:?} vs input {:?}",
            d_output.shape(),
            input.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(d_output.data())
        .map(|(&x, &d)| if x > S::zero() { d } else { S::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

fn pool_dims<S: Scalar>(input: &Tensor<S>) -> Result<(usize, usize, usize)> {
    let (h, w, c) = dims3(input, "pool input")?;
    if h < 2 || w < 2 {
        return Err(TensorError::Shape(format!(
            "2×2 pooling needs at least 2×2 input, got {h}×{w}"
        )));
    }
    Ok((h, w, c))
}

/// Index of the winning element of each window, first in scan order on ties.
fn pool_argmax<S: Scalar>(x: &[S], w: usize, c: usize, py: usize, px: usize, ch: usize) -> usize {
    let mut best = ((2 * py) * w + 2 * px) * c + ch;
    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
        let at = ((2 * py + dy) * w + 2 * px + dx) * c + ch;
        if x[at] > x[best] {
            best = at;
        }
    }
    best
}

/// Non-overlapping 2×2 max pooling. An odd last row or column is dropped.
pub fn maxpool2_forward<S: Scalar>(input: &Tensor<S>) -> Result<Tensor<S>> {
    let (h, w, c) = pool_dims(input)?;
    let x = input.data();
    let mut out = Tensor::zeros(&[h / 2, w / 2, c]);
    let o = out.data_mut();
    for py in 0..h / 2 {
        for px in 0..w / 2 {
            for ch in 0..c {
                o[(py * (w / 2) + px) * c + ch] = x[pool_argmax(x, w, c, py, px, ch)];
            }
        }
    }
    Ok(out)
}

/// Routes each window's gradient to its argmax only.
pub fn maxpool2_backward<S: Scalar>(input: &Tensor<S>, d_output: &Tensor<S>) -> Result<Tensor<S>> {
    let (h, w, c) = pool_dims(input)?;
    if d_output.shape() != [h / 2, w / 2, c] {
        return Err(TensorError::Shape(format!(
            "pool d_output must be {:?}, got {:?}",
            [h / 2, w / 2, c],
            d_output.shape()
        )));
    }
    let x = input.data();
    let dy = d_output.data();
    let mut d_input = Tensor::zeros(input.shape());
    let dx = d_input.data_mut();
    for py in 0..h / 2 {
        for px in 0..w / 2 {
            for ch in 0..c {
                dx[pool_argmax(x, w, c, py, px, ch)] = dy[(py * (w / 2) + px) * c + ch];
            }
        }
    }
    Ok(d_input)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Infer,
}

/// Per-element multipliers applied by a dropout forward pass. `None` means
/// the pass was an identity.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask<S>(pub Option<Vec<S>>);

/// Inverted dropout: in training each unit is zeroed with probability `rate`
/// and survivors are scaled by `1 / (1 - rate)`; inference is the identity.
pub fn dropout<S: Scalar, R: Rng + ?Sized>(
    input: &Tensor<S>,
    rate: f64,
    mode: DropoutMode,
    rng: &mut R,
) -> Result<(Tensor<S>, DropoutMask<S>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(TensorError::Param(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if mode == DropoutMode::Infer || rate == 0.0 {
        return Ok((input.clone(), DropoutMask(None)));
    }
    let keep = S::from_f64(1.0 / (1.0 - rate));
    let mask: Vec<S> = (0..input.len())
        .map(|_| {
            if rng.gen::<f64>() < rate {
                S::zero()
            } else {
                keep
            }
        })
        .collect();
    let data = input
        .data()
        .iter()
        .zip(&mask)
        .map(|(&x, &m)| x * m)
        .collect();
    Ok((
        Tensor::from_vec(input.shape(), data)?,
        DropoutMask(Some(mask)),
    ))
}

pub fn dropout_backward<S: Scalar>(mask: &DropoutMask<S>, d_output: &Tensor<S>) -> Result<Tensor<S>> {
    match &mask.0 {
        None => Ok(d_output.clone()),
        Some(m) if m.len() == d_output.len() => {
            let data = d_output.data().iter().zip(m).map(|(&d, &k)| d * k).collect();
            Tensor::from_vec(d_output.shape(), data)
        }
        Some(m) => Err(TensorError::Shape(format!(
            "dropout mask has {} entries, d_output {}",
            m.len(),
            d_output.len()
        ))),
    }
}

fn dense_dims<S: Scalar>(input: &Tensor<S>, weights: &Tensor<S>) -> Result<(usize, usize)> {
    let (n, m) = match *weights.shape() {
        [n, m] => (n, m),
        ref other => {
            return Err(TensorError::Shape(format!(
                "dense weights must be n×m, got {other:?}"
            )))
        }
    };
    if input.len() != n {
        return Err(TensorError::Shape(format!(
            "dense input has {} values, weights expect {n}",
            input.len()
        )));
    }
    Ok((n, m))
}

/// `input · weights + bias` for a flattened input of length `n` and `n×m`
/// weights.
pub fn dense_forward<S: Scalar>(
    input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<Tensor<S>> {
    let (_, m) = dense_dims(input, weights)?;
    if bias.shape() != [m] {
        return Err(TensorError::Shape(format!(
            "dense bias must be [{m}], got {:?}",
            bias.shape()
        )));
    }
    let mut out = bias.clone();
    let o = out.data_mut();
    for (i, &v) in input.data().iter().enumerate() {
        if v == S::zero() {
            continue;
        }
        for (a, &wv) in o.iter_mut().zip(&weights.data()[i * m..][..m]) {
            *a = *a + v * wv;
        }
    }
    Ok(out)
}

/// Returns `d_input` (shaped like `input`) and `[d_weights, d_bias]`.
pub fn dense_backward<S: Scalar>(
    input: &Tensor<S>,
    weights: &Tensor<S>,
    d_output: &Tensor<S>,
) -> Result<LayerGrads<S>> {
    let (n, m) = dense_dims(input, weights)?;
    if d_output.len() != m {
        return Err(TensorError::Shape(format!(
            "dense d_output has {} values, expected {m}",
            d_output.len()
        )));
    }
    let dy = d_output.data();
    let w = weights.data();
    let mut d_input = Tensor::zeros(input.shape());
    let mut d_weights = Tensor::zeros(&[n, m]);
    for (i, &v) in input.data().iter().enumerate() {
        let row = &w[i * m..][..m];
        d_input.data_mut()[i] = row.iter().zip(dy).map(|(&a, &b)| a * b).sum();
        if v != S::zero() {
            for (d, &g) in d_weights.data_mut()[i * m..][..m].iter_mut().zip(dy) {
                *d = v * g;
            }
        }
    }
    let d_bias = Tensor::from_vec(&[m], dy.to_vec())?;
    Ok(LayerGrads {
        d_input,
        d_params: vec![d_weights, d_bias],
    })
}

/// Max-shifted exponential normalization.
pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits
        .iter()
        .copied()
        .fold(S::neg_infinity(), |a, b| a.max(b));
    let exps: Vec<S> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Binary cross entropy of a positive-class probability against a 0/1
/// label. Returns `(loss, d_loss/d_p)`, both evaluated at the clamped `p`.
pub fn bce_loss<S: Scalar>(p: S, y: u8) -> Result<(S, S)> {
    if y > 1 {
        return Err(TensorError::Param(format!("label must be 0 or 1, got {y}")));
    }
    let lo = S::from_f64(BCE_CLAMP);
    let hi = S::one() - lo;
    let p = p.max(lo).min(hi);
    let one = S::one();
    let (loss, grad) = if y == 1 {
        (-p.ln(), (p - one) / (p * (one - p)))
    } else {
        (-(one - p).ln(), p / (p * (one - p)))
    };
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn conv_valid_dot_product() {
        let input = t(&[2, 2, 1], &[1.0, 2.0, 3.0, 4.0]);
        let kernel = t(&[2, 2, 1, 1], &[1.0, 0.0, 0.0, 1.0]);
        let out = conv2d_forward(&input, &kernel, &t(&[1], &[0.0]), Padding::Valid).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[5.0]);
    }

    #[test]
    fn conv_zero_kernels_give_zero_output() {
        let input = t(&[4, 5, 2], &(0..40).map(|v| v as f64 - 7.5).collect::<Vec<_>>());
        let out = conv2d_forward(
            &input,
            &Tensor::zeros(&[3, 3, 2, 3]),
            &Tensor::zeros(&[3]),
            Padding::Same,
        )
        .unwrap();
        assert_eq!(out.shape(), &[4, 5, 3]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_same_shape_for_network_input() {
        let input = Tensor::<f32>::zeros(&[100, 100, 1]);
        let out = conv2d_forward(
            &input,
            &Tensor::zeros(&[3, 3, 1, 64]),
            &Tensor::zeros(&[64]),
            Padding::Same,
        )
        .unwrap();
        assert_eq!(out.shape(), &[100, 100, 64]);
    }

    #[test]
    fn conv_rejects_channel_mismatch_and_nan() {
        let input = Tensor::<f64>::zeros(&[4, 4, 2]);
        let err = conv2d_forward(
            &input,
            &Tensor::zeros(&[3, 3, 1, 1]),
            &Tensor::zeros(&[1]),
            Padding::Same,
        );
        assert!(matches!(err, Err(TensorError::Shape(_))));

        let mut bad = Tensor::<f64>::zeros(&[4, 4, 1]);
        bad.data_mut()[3] = f64::INFINITY;
        let err = conv2d_forward(
            &bad,
            &Tensor::zeros(&[3, 3, 1, 1]),
            &Tensor::zeros(&[1]),
            Padding::Same,
        );
        assert!(matches!(err, Err(TensorError::Numeric(_))));
    }

    #[test]
    fn conv_backward_zero_d_output() {
        let input = t(&[3, 3, 1], &[1.0; 9]);
        let k = t(&[3, 3, 1, 2], &[0.5; 18]);
        let g = conv2d_backward(&input, &k, &Tensor::zeros(&[3, 3, 2]), Padding::Same).unwrap();
        assert!(g.d_input.data().iter().all(|&v| v == 0.0));
        assert!(g.d_params.iter().all(|p| p.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn conv_backward_scalar_product() {
        // 1×1 input with a 1×1 kernel is a scalar product.
        let input = t(&[1, 1, 1], &[3.0]);
        let k = t(&[1, 1, 1, 1], &[-2.0]);
        let g = conv2d_backward(&input, &k, &t(&[1, 1, 1], &[5.0]), Padding::Valid).unwrap();
        assert_eq!(g.d_params[0].data(), &[15.0]);
        assert_eq!(g.d_params[1].data(), &[5.0]);
        assert_eq!(g.d_input.data(), &[-10.0]);
    }

    #[test]
    fn conv_backward_rejects_wrong_d_output() {
        let input = Tensor::<f64>::zeros(&[4, 4, 1]);
        let k = Tensor::<f64>::zeros(&[3, 3, 1, 2]);
        let res = conv2d_backward(&input, &k, &Tensor::zeros(&[2, 2, 2]), Padding::Same);
        assert!(matches!(res, Err(TensorError::Shape(_))));
    }

    #[test]
    fn relu_forward_and_backward() {
        let x = t(&[3], &[-1.0, 0.0, 2.0]);
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
        let x = t(&[2], &[-1.0, 2.0]);
        let d = relu_backward(&x, &t(&[2], &[5.0, 5.0])).unwrap();
        assert_eq!(d.data(), &[0.0, 5.0]);
        let pos = t(&[3], &[0.1, 2.0, 7.0]);
        assert_eq!(relu_forward(&pos), pos);
    }

    #[test]
    fn maxpool_window() {
        let x = t(&[2, 2, 1], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(maxpool2_forward(&x).unwrap().data(), &[4.0]);
        let d = maxpool2_backward(&x, &t(&[1, 1, 1], &[7.0])).unwrap();
        assert_eq!(d.data(), &[0.0, 0.0, 0.0, 7.0]);
    }

    #[test]
    fn maxpool_ties_go_to_first_in_scan_order() {
        let x = t(&[2, 2, 1], &[3.0, 3.0, 3.0, 3.0]);
        let d = maxpool2_backward(&x, &t(&[1, 1, 1], &[1.0])).unwrap();
        assert_eq!(d.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn maxpool_shapes() {
        let x = Tensor::<f32>::zeros(&[100, 100, 64]);
        assert_eq!(maxpool2_forward(&x).unwrap().shape(), &[50, 50, 64]);
        let odd = Tensor::<f32>::zeros(&[15, 51, 2]);
        assert_eq!(maxpool2_forward(&odd).unwrap().shape(), &[7, 25, 2]);
        let thin = Tensor::<f32>::zeros(&[1, 4, 1]);
        assert!(matches!(maxpool2_forward(&thin), Err(TensorError::Shape(_))));
    }

    #[test]
    fn maxpool_odd_edge_gets_no_gradient() {
        let x = t(&[3, 3, 1], &[1.0, 2.0, 9.0, 3.0, 4.0, 9.0, 9.0, 9.0, 9.0]);
        assert_eq!(maxpool2_forward(&x).unwrap().data(), &[4.0]);
        let d = maxpool2_backward(&x, &t(&[1, 1, 1], &[5.0])).unwrap();
        assert_eq!(d.data(), &[0.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dropout_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = t(&[4], &[1.0, -2.0, 3.0, 4.0]);
        for mode in [DropoutMode::Train, DropoutMode::Infer] {
            let (y, _) = dropout(&x, 0.0, mode, &mut rng).unwrap();
            assert_eq!(y, x);
        }
        let (y, mask) = dropout(&x, 0.5, DropoutMode::Infer, &mut rng).unwrap();
        assert_eq!(y, x);
        assert_eq!(mask, DropoutMask(None));
        assert!(matches!(
            dropout(&x, 1.0, DropoutMode::Train, &mut rng),
            Err(TensorError::Param(_))
        ));
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let x = t(&[100_000], &vec![1.0; 100_000]);
        let (y, _) = dropout(&x, 0.5, DropoutMode::Train, &mut rng).unwrap();
        let mean = y.data().iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn dropout_backward_uses_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = t(&[64], &vec![1.0; 64]);
        let (y, mask) = dropout(&x, 0.4, DropoutMode::Train, &mut rng).unwrap();
        let d = dropout_backward(&mask, &t(&[64], &vec![1.0; 64])).unwrap();
        assert_eq!(d, y);
    }

    #[test]
    fn dense_examples() {
        let x = t(&[2], &[1.0, 2.0]);
        let w = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let out = dense_forward(&x, &w, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(out.data(), &[7.0, 10.0]);

        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(dense_forward(&x, &eye, &Tensor::zeros(&[2])).unwrap(), x);

        let g = dense_backward(&x, &w, &Tensor::zeros(&[2])).unwrap();
        assert!(g.d_input.data().iter().all(|&v| v == 0.0));
        assert!(g.d_params.iter().all(|p| p.data().iter().all(|&v| v == 0.0)));

        let g = dense_backward(&x, &w, &t(&[2], &[1.0, -1.0])).unwrap();
        assert_eq!(g.d_input.data(), &[-1.0, -1.0]);
        assert_eq!(g.d_params[0].data(), &[1.0, -1.0, 2.0, -2.0]);
        assert_eq!(g.d_params[1].data(), &[1.0, -1.0]);

        assert!(matches!(
            dense_forward(&t(&[3], &[0.0; 3]), &w, &Tensor::zeros(&[2])),
            Err(TensorError::Shape(_))
        ));
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0f64, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[1000.0f64, 0.0]);
        // exp(-1000) underflows to exactly zero in f64.
        assert_eq!(p, vec![1.0, 0.0]);
        let a = softmax(&[0.3f64, -1.2, 2.0]);
        let b = softmax(&[100.3f64, 98.8, 102.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bce_examples() {
        let (loss, grad) = bce_loss(0.5f64, 1).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((grad + 2.0).abs() < 1e-12);
        let (loss, _) = bce_loss(1.0 - BCE_CLAMP, 1).unwrap();
        assert!(loss < 1e-6);
        let (loss, _) = bce_loss(0.0f64, 1).unwrap();
        assert!(loss.is_finite());
        assert!(matches!(bce_loss(0.5f64, 2), Err(TensorError::Param(_))));
    }
}
