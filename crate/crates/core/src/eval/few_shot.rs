//! Fine-tuning the encoder plus a classifier head on a small labeled subset.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::linear::{argmax_rows, softmax_cross_entropy, stratified_subset};
use crate::rng;
use crate::ssl::mlp::Mlp;
use crate::ssl::optim::{Adam, AdamConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FewShotConfig {
    pub epochs: usize,
    /// Encoder learning rate.
    pub lr: f64,
    /// Learning rate of the freshly initialized classifier head.
    pub head_lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            lr: 1e-4,
            head_lr: 1e-2,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FewShotResult {
    pub accuracy: f64,
    pub subset: Vec<usize>,
}

/// Fine-tunes a copy of `encoder` with a fresh linear head on a stratified
/// `fraction` of all rows, then reports accuracy on the remaining rows (on
/// the subset itself when it covers everything). `inputs` are downsampled
/// grids, one per row.
///
/// Passing a randomly initialized encoder gives the from-scratch baseline
/// on the same subset.
pub fn few_shot_eval(
    encoder: &Mlp<f32>,
    inputs: ArrayView2<f32>,
    labels: &[usize],
    fraction: f64,
    cfg: &FewShotConfig,
) -> Result<FewShotResult> {
    if inputs.nrows() != labels.len() {
        return Err(Error::Argument(format!("{} inputs for {} labels", inputs.nrows(), labels.len())));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Argument(format!("fraction {fraction} outside (0, 1]")));
    }
    let all: Vec<usize> = (0..labels.len()).collect();
    let subset = stratified_subset(labels, &all, fraction, cfg.seed);
    if subset.is_empty() {
        return Err(Error::Argument("fraction yields an empty subset".into()));
    }
    let mut classes: Vec<usize> = subset.iter().map(|&i| labels[i]).collect();
    classes.sort_unstable();
    classes.dedup();
    let rest: Vec<usize> = all.into_iter().filter(|i| subset.binary_search(i).is_err()).collect();
    let test = if rest.is_empty() { &subset } else { &rest };
    let target = |i: usize| classes.binary_search(&labels[i]).ok();

    let mut encoder = encoder.clone();
    // Fixed standardization of the representation, from the initial
    // encoder on the labeled subset.
    let h0 = encoder.forward(inputs.select(Axis(0), &subset).view());
    let mean = h0.mean_axis(Axis(0)).expect("non-empty subset");
    let inv_std = h0.var_axis(Axis(0), 0.0).mapv(|v| 1.0 / (v + 1e-6).sqrt());
    let standardize = |h: Array2<f32>| (h - &mean) * &inv_std;
    let mut head: Mlp<f32> = Mlp::new(
        &[encoder.output_dim(), classes.len().max(2)],
        &mut rng::derive(cfg.seed, &[b"few-shot head"]),
    );
    let adam_with = |lr: f64| AdamConfig {
        lr,
        ..AdamConfig::default()
    };
    let mut encoder_adam = Adam::new(adam_with(cfg.lr), &[&encoder]);
    let mut head_adam = Adam::new(adam_with(cfg.head_lr), &[&head]);
    let mut order = subset.clone();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::derive(cfg.seed, &[b"few-shot order", &(epoch as u64).to_le_bytes()]));
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let x = inputs.select(Axis(0), batch);
            let y: Vec<usize> = batch.iter().map(|&i| target(i).expect("subset class")).collect();
            let (h, enc_cache) = encoder.forward_cached(x.view());
            let (logits, head_cache) = head.forward_cached(standardize(h).view());
            let (_, grad) = softmax_cross_entropy(&logits, &y);
            let (head_g, grad_h) = head.backward(&head_cache, grad, true);
            let grad_h = grad_h.expect("requested") * &inv_std;
            let (enc_g, _) = encoder.backward(&enc_cache, grad_h, false);
            encoder_adam.step(&mut [&mut encoder], &[&enc_g]);
            head_adam.step(&mut [&mut head], &[&head_g]);
        }
    }

    let mut correct = 0;
    for chunk in test.chunks(256) {
        let x = inputs.select(Axis(0), chunk);
        let logits: Array2<f32> = head.forward(standardize(encoder.forward(x.view())).view());
        for (&p, &i) in argmax_rows(&logits).iter().zip(chunk) {
            if target(i) == Some(p) {
                correct += 1;
            }
        }
    }
    Ok(FewShotResult {
        accuracy: correct as f64 / test.len() as f64,
        subset,
    })
}
