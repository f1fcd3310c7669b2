//! Linear probe on frozen embeddings and stratified sampling helpers.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::ssl::mlp::Mlp;
use crate::ssl::optim::{Adam, AdamConfig};
use crate::{Error, Result};

/// Row indices of a train/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn by_class(labels: &[usize], rows: impl IntoIterator<Item = usize>) -> BTreeMap<usize, Vec<usize>> {
    let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for r in rows {
        m.entry(labels[r]).or_default().push(r);
    }
    m
}

/// Picks `max(1, round(fraction·n_c))` rows of every class (capped at the
/// class size) from `rows`, where `n_c` counts class `c` among `rows`.
/// Output is sorted.
pub fn stratified_subset(labels: &[usize], rows: &[usize], fraction: f64, seed: u64) -> Vec<usize> {
    let mut out = Vec::new();
    for (class, mut members) in by_class(labels, rows.iter().copied()) {
        let quota = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len());
        members.shuffle(&mut rng::derive(seed, &[b"stratified", &(class as u64).to_le_bytes()]));
        out.extend_from_slice(&members[..quota]);
    }
    out.sort_unstable();
    out
}

/// Stratified train/test split with `test_fraction` of every class held out
/// (at least one row per class stays in training).
pub fn stratified_split(labels: &[usize], test_fraction: f64, seed: u64) -> Split {
    let all: Vec<usize> = (0..labels.len()).collect();
    let mut test = Vec::new();
    for (class, mut members) in by_class(labels, all) {
        let n = members.len();
        let quota = ((test_fraction * n as f64).round() as usize).min(n.saturating_sub(1));
        members.shuffle(&mut rng::derive(seed, &[b"holdout", &(class as u64).to_le_bytes()]));
        test.extend_from_slice(&members[..quota]);
    }
    test.sort_unstable();
    let train = (0..labels.len()).filter(|i| test.binary_search(i).is_err()).collect();
    Split { train, test }
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Array2<f32>, targets: &[usize]) -> (f64, Array2<f32>) {
    let n = logits.nrows();
    let mut grad = Array2::<f32>::zeros(logits.dim());
    let mut loss = 0.0f64;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let exps: Vec<f64> = row.iter().map(|&v| f64::from(v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        loss -= (exps[targets[i]] / total).ln();
        for (j, e) in exps.iter().enumerate() {
            let p = e / total - if j == targets[i] { 1.0 } else { 0.0 };
            grad[[i, j]] = (p / n as f64) as f32;
        }
    }
    (loss / n as f64, grad)
}

pub fn argmax_rows(logits: &Array2<f32>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f32::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                .0
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearEvalConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for LinearEvalConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearEvalResult {
    pub accuracy: f64,
    /// Labels that never occur in the training split; their test rows are
    /// left out of the accuracy.
    pub skipped_classes: Vec<usize>,
}

/// Trains a softmax layer on the training rows of frozen embeddings
/// (standardized with training statistics) by full-batch Adam and reports
/// held-out accuracy.
pub fn linear_eval(h: ArrayView2<f64>, labels: &[usize], split: &Split, cfg: &LinearEvalConfig) -> Result<LinearEvalResult> {
    if h.nrows() != labels.len() {
        return Err(Error::Argument(format!("{} embeddings for {} labels", h.nrows(), labels.len())));
    }
    let mut classes: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Argument("linear evaluation needs at least 2 training classes".into()));
    }
    let mut skipped: Vec<usize> = split
        .test
        .iter()
        .map(|&i| labels[i])
        .filter(|l| classes.binary_search(l).is_err())
        .collect();
    skipped.sort_unstable();
    skipped.dedup();
    let test: Vec<usize> = split
        .test
        .iter()
        .copied()
        .filter(|&i| classes.binary_search(&labels[i]).is_ok())
        .collect();
    if test.is_empty() {
        return Err(Error::Argument("no evaluable test rows".into()));
    }

    let train_x = h.select(Axis(0), &split.train);
    let mean = train_x.mean_axis(Axis(0)).expect("non-empty split");
    let std = train_x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
    let prep = |rows: &[usize]| ((&h.select(Axis(0), rows) - &mean) / &std).mapv(|v| v as f32);
    let xtr = prep(&split.train);
    let xte = prep(&test);
    let ytr: Vec<usize> = split
        .train
        .iter()
        .map(|&i| classes.binary_search(&labels[i]).expect("train class"))
        .collect();

    let mut head: Mlp<f32> = Mlp::new(&[h.ncols(), classes.len()], &mut rng::derive(cfg.seed, &[b"linear"]));
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &[&head],
    );
    for _ in 0..cfg.epochs {
        let (logits, cache) = head.forward_cached(xtr.view());
        let (_, grad) = softmax_cross_entropy(&logits, &ytr);
        let (g, _) = head.backward(&cache, grad, false);
        adam.step(&mut [&mut head], &[&g]);
    }
    let pred = argmax_rows(&head.forward(xte.view()));
    let correct = pred
        .iter()
        .zip(&test)
        .filter(|(&p, &i)| classes[p] == labels[i])
        .count();
    Ok(LinearEvalResult {
        accuracy: correct as f64 / test.len() as f64,
        skipped_classes: skipped,
    })
}
