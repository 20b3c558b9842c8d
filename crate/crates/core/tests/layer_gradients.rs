//! Every layer's backward pass against central differences of an
//! independently written forward pass, at 64-bit, over 24 seeds.

use graphodex_core::tensor::{
    bce_loss, conv2d_backward, conv2d_forward, dense_backward, dense_forward, dropout, dropout_backward,
    maxpool2_backward, maxpool2_forward, relu_backward, relu_forward, softmax, DropoutMode, Padding, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 24;
const TOL: f64 = 1e-4;
const STEP: f64 = 1e-5;

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(shape, data).unwrap()
}

/// Max relative error between `analytic` and central differences of `f`
/// around `x`.
fn fd_error(x: &[f64], analytic: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut worst = 0.0f64;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = STEP * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        let numeric = (plus - minus) / (2.0 * h);
        let scale = analytic[i].abs().max(numeric.abs());
        if scale > 1e-10 {
            worst = worst.max((analytic[i] - numeric).abs() / scale);
        }
    }
    worst
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Direct convolution, HWC input and KH×KW×C×F kernels, zero padding.
fn conv_oracle(x: &[f64], (h, w, c): (usize, usize, usize), k: &[f64], (kh, kw, f): (usize, usize, usize), b: &[f64], same: bool) -> Vec<f64> {
    let (pt, pl) = if same { ((kh - 1) / 2, (kw - 1) / 2) } else { (0, 0) };
    let (oh, ow) = if same { (h, w) } else { (h - kh + 1, w - kw + 1) };
    let mut out = vec![0.0; oh * ow * f];
    for oy in 0..oh {
        for ox in 0..ow {
            for fo in 0..f {
                let mut s = b[fo];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let iy = (oy + ky) as isize - pt as isize;
                        let ix = (ox + kx) as isize - pl as isize;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        for ci in 0..c {
                            s += x[(iy as usize * w + ix as usize) * c + ci] * k[((ky * kw + kx) * c + ci) * f + fo];
                        }
                    }
                }
                out[(oy * ow + ox) * f + fo] = s;
            }
        }
    }
    out
}

#[test]
fn conv_matches_direct_oracle_and_finite_differences() {
    for seed in 0..SEEDS {
        for (padding, same) in [(Padding::Same, true), (Padding::Valid, false)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (h, w, c, f) = (5 + seed as usize % 3, 6, 1 + seed as usize % 3, 4);
            let x = random(&mut rng, h * w * c);
            let k = random(&mut rng, 9 * c * f);
            let b = random(&mut rng, f);
            let y = conv2d_forward(&t(&[h, w, c], x.clone()), &t(&[3, 3, c, f], k.clone()), &t(&[f], b.clone()), padding).unwrap();
            let direct = conv_oracle(&x, (h, w, c), &k, (3, 3, f), &b, same);
            assert_eq!(y.len(), direct.len());
            for (a, o) in y.data().iter().zip(&direct) {
                assert!((a - o).abs() < 1e-12, "seed {seed}: forward {a} vs {o}");
            }

            let proj = random(&mut rng, y.len());
            let g = conv2d_backward(&t(&[h, w, c], x.clone()), &t(&[3, 3, c, f], k.clone()), &t(y.shape(), proj.clone()), padding).unwrap();
            let loss_x = |xv: &[f64]| dot(&conv_oracle(xv, (h, w, c), &k, (3, 3, f), &b, same), &proj);
            let loss_k = |kv: &[f64]| dot(&conv_oracle(&x, (h, w, c), kv, (3, 3, f), &b, same), &proj);
            let loss_b = |bv: &[f64]| dot(&conv_oracle(&x, (h, w, c), &k, (3, 3, f), bv, same), &proj);
            assert!(fd_error(&x, g.d_input.data(), loss_x) < TOL, "seed {seed} d_input");
            assert!(fd_error(&k, g.d_params[0].data(), loss_k) < TOL, "seed {seed} d_kernels");
            assert!(fd_error(&b, g.d_params[1].data(), loss_b) < TOL, "seed {seed} d_bias");
        }
    }
}

#[test]
fn dense_matches_finite_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, m) = (7 + seed as usize % 5, 3);
        let x = random(&mut rng, n);
        let wt = random(&mut rng, n * m);
        let b = random(&mut rng, m);
        let oracle = |xv: &[f64], wv: &[f64], bv: &[f64]| -> Vec<f64> {
            (0..m).map(|j| bv[j] + (0..n).map(|i| xv[i] * wv[i * m + j]).sum::<f64>()).collect()
        };
        let y = dense_forward(&t(&[n], x.clone()), &t(&[n, m], wt.clone()), &t(&[m], b.clone())).unwrap();
        for (a, o) in y.data().iter().zip(oracle(&x, &wt, &b)) {
            assert!((a - o).abs() < 1e-12);
        }
        let proj = random(&mut rng, m);
        let g = dense_backward(&t(&[n], x.clone()), &t(&[n, m], wt.clone()), &t(&[m], proj.clone())).unwrap();
        assert!(fd_error(&x, g.d_input.data(), |v| dot(&oracle(v, &wt, &b), &proj)) < TOL, "seed {seed}");
        assert!(fd_error(&wt, g.d_params[0].data(), |v| dot(&oracle(&x, v, &b), &proj)) < TOL, "seed {seed}");
        assert!(fd_error(&b, g.d_params[1].data(), |v| dot(&oracle(&x, &wt, v), &proj)) < TOL, "seed {seed}");
    }
}

/// Values at least 0.05 from zero so no probe crosses the kink.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) { v } else { -v }
        })
        .collect()
}

#[test]
fn relu_matches_finite_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = away_from_zero(&mut rng, 30);
        let proj = random(&mut rng, 30);
        let y = relu_forward(&t(&[30], x.clone()));
        let oracle = |v: &[f64]| v.iter().map(|a| a.max(0.0)).collect::<Vec<_>>();
        assert_eq!(y.data(), oracle(&x).as_slice());
        let d = relu_backward(&t(&[30], x.clone()), &t(&[30], proj.clone())).unwrap();
        assert!(fd_error(&x, d.data(), |v| dot(&oracle(v), &proj)) < TOL, "seed {seed}");
    }
}

#[test]
fn maxpool_matches_finite_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w, c) = (6, 4 + 2 * (seed as usize % 2), 2);
        // Distinct values on a 0.01 lattice so probes never reorder a window.
        let mut x: Vec<f64> = (0..h * w * c).map(|i| i as f64 * 0.01).collect();
        for i in (1..x.len()).rev() {
            x.swap(i, rng.gen_range(0..=i));
        }
        let oracle = |v: &[f64]| {
            let mut out = vec![f64::NEG_INFINITY; (h / 2) * (w / 2) * c];
            for y in 0..h {
                for xx in 0..w {
                    for ch in 0..c {
                        let o = &mut out[((y / 2) * (w / 2) + xx / 2) * c + ch];
                        *o = o.max(v[(y * w + xx) * c + ch]);
                    }
                }
            }
            out
        };
        let y = maxpool2_forward(&t(&[h, w, c], x.clone())).unwrap();
        assert_eq!(y.data(), oracle(&x).as_slice());
        let proj = random(&mut rng, y.len());
        let d = maxpool2_backward(&t(&[h, w, c], x.clone()), &t(y.shape(), proj.clone())).unwrap();
        assert!(fd_error(&x, d.data(), |v| dot(&oracle(v), &proj)) < TOL, "seed {seed}");
    }
}

#[test]
fn dropout_matches_finite_differences_with_fixed_mask() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, 40);
        let proj = random(&mut rng, 40);
        let mask_rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (_, mask) = dropout(&t(&[40], x.clone()), 0.4, DropoutMode::Train, &mut mask_rng.clone()).unwrap();
        let f = |v: &[f64]| {
            let (y, _) = dropout(&t(&[40], v.to_vec()), 0.4, DropoutMode::Train, &mut mask_rng.clone()).unwrap();
            dot(y.data(), &proj)
        };
        let d = dropout_backward(&mask, &t(&[40], proj.clone())).unwrap();
        assert!(fd_error(&x, d.data(), f) < TOL, "seed {seed}");
    }
}

#[test]
fn softmax_bce_chain_matches_finite_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random(&mut rng, 2).iter().map(|v| v * 4.0).collect::<Vec<_>>();
        let y = (seed % 2) as u8;
        let loss = |v: &[f64]| {
            let p = (v[1] - v[0]).exp() / (1.0 + (v[1] - v[0]).exp());
            -(y as f64 * p.ln() + (1.0 - y as f64) * (1.0 - p).ln())
        };
        let p = softmax(&z);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        let (l, dp) = bce_loss(p[1], y).unwrap();
        assert!((l - loss(&z)).abs() < 1e-12);
        // dp1/dz = p1 * (onehot1 - p)
        let analytic = [dp * p[1] * (0.0 - p[0]), dp * p[1] * (1.0 - p[1])];
        assert!(fd_error(&z, &analytic, loss) < TOL, "seed {seed}");
    }
}
