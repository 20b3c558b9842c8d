use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ModelError, NetworkParams, Result};
use crate::rng::{child_rng, child_seed};
use crate::tensor::{Adadelta, Scalar, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Adadelta,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            optimizer: Adadelta::default(),
            seed: 42,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(ModelError::Param("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Param("batch size must be at least 1".into()));
        }
        let Adadelta { rho, epsilon } = self.optimizer;
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail too
        if !(rho > 0.0 && rho < 1.0) || !(epsilon > 0.0) {
            return Err(ModelError::Param(format!(
                "Adadelta needs rho in (0,1) and epsilon > 0, got {rho}, {epsilon}"
            )));
        }
        Ok(())
    }
}

/// One labeled patch: gray levels (normalized on the fly) and 0 = male,
/// 1 = female.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub gray: &'a [u8],
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy of the training-mode (dropout active) predictions made while
    /// fitting the epoch.
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Epoch with the highest validation accuracy (first on ties).
    pub best_val_epoch: Option<usize>,
}

/// Samples whose gradients are accumulated by one worker before the ordered
/// reduction; fixed so results do not depend on the thread count.
const GRAD_GROUP: usize = 8;

fn normalize<S: Scalar>(gray: &[u8]) -> Vec<S> {
    gray.iter().map(|&g| S::from_f64(g as f64 / 255.0)).collect()
}

struct GroupResult<S> {
    loss: f64,
    correct: usize,
    grads: Vec<Tensor<S>>,
}

fn accumulate<S: Scalar>(
    params: &NetworkParams<S>,
    samples: &[Sample<'_>],
    positions: &[usize],
    base: usize,
    dropout_base: &ChaCha8Rng,
) -> Result<GroupResult<S>> {
    let mut acc: Option<GroupResult<S>> = None;
    for (k, &i) in positions.iter().enumerate() {
        let s = samples[i];
        let mut rng = dropout_base.clone();
        rng.set_stream((base + k) as u64);
        let (loss, probs, grads) = params.loss_and_grads(&normalize::<S>(s.gray), s.label, Some(&mut rng))?;
        let hit = ((probs[1] > S::from_f64(0.5)) as u8 == s.label) as usize;
        match acc.as_mut() {
            None => {
                acc = Some(GroupResult {
                    loss: loss.to_f64(),
                    correct: hit,
                    grads,
                })
            }
            Some(a) => {
                a.loss += loss.to_f64();
                a.correct += hit;
                for (dst, g) in a.grads.iter_mut().zip(&grads) {
                    dst.add_assign(g)?;
                }
            }
        }
    }
    acc.ok_or_else(|| ModelError::Data("empty gradient group".into()))
}

/// Trains for `hyper.epochs` epochs and returns the final-epoch parameters.
pub fn train<S: Scalar>(
    params: NetworkParams<S>,
    train_set: &[Sample<'_>],
    val_set: &[Sample<'_>],
    hyper: &Hyper,
) -> Result<(NetworkParams<S>, TrainHistory)> {
    train_with(params, train_set, val_set, hyper, |_, _| ControlFlow::Continue(()))
}

/// Like [`train`], calling `on_epoch` after every epoch; returning
/// `ControlFlow::Break` stops training early.
pub fn train_with<S: Scalar>(
    mut params: NetworkParams<S>,
    train_set: &[Sample<'_>],
    val_set: &[Sample<'_>],
    hyper: &Hyper,
    mut on_epoch: impl FnMut(&EpochStats, &NetworkParams<S>) -> ControlFlow<()>,
) -> Result<(NetworkParams<S>, TrainHistory)> {
    hyper.validate()?;
    if train_set.is_empty() {
        return Err(ModelError::Data("training set is empty".into()));
    }
    let input_len = params.arch.input_height * params.arch.input_width;
    if let Some(s) = train_set.iter().chain(val_set).find(|s| s.gray.len() != input_len) {
        return Err(ModelError::Data(format!(
            "patch with {} pixels for a {input_len}-pixel input",
            s.gray.len()
        )));
    }
    if let Some(s) = train_set.iter().chain(val_set).find(|s| s.label > 1) {
        return Err(ModelError::Data(format!("label {} is not 0 or 1", s.label)));
    }
    params.optimizer.config = hyper.optimizer;

    let mut history = TrainHistory::default();
    let mut best_val = f64::NEG_INFINITY;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=hyper.epochs {
        order.sort_unstable();
        order.shuffle(&mut child_rng(hyper.seed, &format!("shuffle/{epoch}")));
        let dropout_base = ChaCha8Rng::from_seed(child_seed(hyper.seed, &format!("dropout/{epoch}")));

        let mut epoch_loss = 0.0;
        let mut correct = 0;
        for (b, batch) in order.chunks(hyper.batch_size).enumerate() {
            let base = b * hyper.batch_size;
            let groups = batch
                .par_chunks(GRAD_GROUP)
                .enumerate()
                .map(|(g, idx)| accumulate(&params, train_set, idx, base + g * GRAD_GROUP, &dropout_base))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| match e {
                    ModelError::Tensor(TensorError::Numeric(_)) => ModelError::Divergence {
                        epoch,
                        batch: b + 1,
                    },
                    other => other,
                })?;
            let mut groups = groups.into_iter();
            let mut total = groups.next().expect("non-empty batch");
            for g in groups {
                total.loss += g.loss;
                total.correct += g.correct;
                for (dst, src) in total.grads.iter_mut().zip(&g.grads) {
                    dst.add_assign(src)?;
                }
            }
            if !total.loss.is_finite() {
                return Err(ModelError::Divergence {
                    epoch,
                    batch: b + 1,
                });
            }
            let scale = S::from_f64(1.0 / batch.len() as f64);
            total.grads.iter_mut().for_each(|g| g.scale(scale));
            params.optimizer.step(&mut params.tensors, &total.grads)?;
            epoch_loss += total.loss;
            correct += total.correct;
        }

        let val_accuracy = if val_set.is_empty() {
            None
        } else {
            Some(evaluate(&params, val_set)?)
        };
        if let Some(v) = val_accuracy {
            if v > best_val {
                best_val = v;
                history.best_val_epoch = Some(epoch);
            }
        }
        let stats = EpochStats {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            val_accuracy,
        };
        log::debug!(
            "epoch {epoch}: loss {:.5} train acc {:.4} val acc {:?}",
            stats.train_loss,
            stats.train_accuracy,
            stats.val_accuracy
        );
        let flow = on_epoch(&stats, &params);
        history.epochs.push(stats);
        if flow.is_break() {
            break;
        }
    }
    Ok((params, history))
}

/// Patch-level accuracy in inference mode.
pub fn evaluate<S: Scalar>(params: &NetworkParams<S>, samples: &[Sample<'_>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(ModelError::Data("nothing to evaluate".into()));
    }
    let correct = samples
        .par_iter()
        .map(|s| {
            let p = params.predict(&normalize::<S>(s.gray))?;
            Ok(((p[1] > S::from_f64(0.5)) as u8 == s.label) as usize)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_network, ArchConfig};

    fn arch() -> ArchConfig {
        ArchConfig {
            input_height: 8,
            input_width: 8,
            conv_filters: vec![2, 4, 2, 4],
            dense_units: 8,
            ..ArchConfig::default()
        }
    }

    fn data() -> Vec<(Vec<u8>, u8)> {
        (0..12u8)
            .map(|i| {
                let label = i % 2;
                let gray = (0..64u8)
                    .map(|p| if (p % 8 < 4) == (label == 1) { 20 + i } else { 230 - i })
                    .collect();
                (gray, label)
            })
            .collect()
    }

    fn samples(d: &[(Vec<u8>, u8)]) -> Vec<Sample<'_>> {
        d.iter().map(|(g, l)| Sample { gray: g, label: *l }).collect()
    }

    #[test]
    fn rejects_bad_requests() {
        let net = build_network::<f32>(arch(), 0).unwrap();
        let d = data();
        let s = samples(&d);
        let zero = Hyper { epochs: 0, ..Hyper::default() };
        assert!(matches!(train(net.clone(), &s, &[], &zero), Err(ModelError::Param(_))));
        assert!(matches!(train(net.clone(), &[], &[], &Hyper::default()), Err(ModelError::Data(_))));
        let short = [Sample { gray: &[0u8; 10], label: 0 }];
        assert!(matches!(train(net, &short, &[], &Hyper::default()), Err(ModelError::Data(_))));
    }

    #[test]
    fn deterministic_history_and_params() {
        let d = data();
        let s = samples(&d);
        let hyper = Hyper { epochs: 3, batch_size: 5, ..Hyper::default() };
        let run = || train(build_network::<f32>(arch(), 9).unwrap(), &s, &s[..4], &hyper).unwrap();
        let (p1, h1) = run();
        let (p2, h2) = run();
        assert_eq!(h1, h2);
        assert_eq!(p1, p2);
        assert_eq!(h1.epochs.len(), 3);
        assert!(h1.best_val_epoch.is_some());
    }

    #[test]
    fn early_stop_truncates_history() {
        let d = data();
        let s = samples(&d);
        let hyper = Hyper { epochs: 10, batch_size: 4, ..Hyper::default() };
        let (_, h) = train_with(build_network::<f32>(arch(), 1).unwrap(), &s, &[], &hyper, |e, _| {
            if e.epoch == 2 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) }
        })
        .unwrap();
        assert_eq!(h.epochs.len(), 2);
        assert!(h.epochs.iter().all(|e| e.val_accuracy.is_none()));
    }

    #[test]
    fn divergence_is_reported() {
        let d = data();
        let s = samples(&d);
        let mut net = build_network::<f32>(arch(), 2).unwrap();
        let n = net.tensors.len();
        net.tensors[n - 2].fill(f32::MAX);
        let err = train(net, &s, &[], &Hyper { epochs: 1, ..Hyper::default() });
        assert!(matches!(err, Err(ModelError::Divergence { epoch: 1, batch: 1 })), "{err:?}");
    }
}
