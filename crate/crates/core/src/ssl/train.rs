//! Cross-view training loop.
//!
//! Every random draw is derived from `(seed, epoch, batch position)`, so the
//! loss trace does not depend on how view generation is scheduled across
//! threads.

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{barlow_twins_loss, vicreg_loss, VicregCoeffs};
use super::model::{downsample_into, input_len, EmbeddingMode, EncoderSpec, Model, ProjectorSpec};
use super::optim::{Adam, AdamConfig};
use crate::base_aug::{base_pipeline, BaseAugConfig};
use crate::expert::{sample_views, AugmentationPolicy, ViewProbabilities};
use crate::raster::{rasterize, GridConfig, GridSequence};
use crate::rng::{self, Rng};
use crate::scenario::Scenario;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    BarlowTwins,
    Vicreg,
}

impl FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bt" | "barlow_twins" => Ok(Objective::BarlowTwins),
            "vicreg" => Ok(Objective::Vicreg),
            other => Err(Error::Argument(format!("unknown objective `{other}`"))),
        }
    }
}

/// Named augmentation recipes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Image-space augmentations only.
    BaseAgt,
    /// Expert augmentations followed by the image-space ones.
    ExAgt,
    /// `BaseAgt` with a 40×40 crop.
    Crop40,
    /// `BaseAgt` plus sensor-based augmentation only.
    BaseVr,
    /// `BaseAgt` plus connectivity-based augmentation only.
    BaseCon,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::BaseAgt,
        Variant::ExAgt,
        Variant::Crop40,
        Variant::BaseVr,
        Variant::BaseCon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::BaseAgt => "baseagt",
            Variant::ExAgt => "exagt",
            Variant::Crop40 => "40crop",
            Variant::BaseVr => "base+vr",
            Variant::BaseCon => "base+con",
        }
    }

    /// The recipe for this variant, starting from the given expert policy
    /// (whose view probabilities are overridden where the variant disables
    /// an augmentation).
    pub fn recipe(self, policy: &AugmentationPolicy, base: &BaseAugConfig) -> ViewRecipe {
        let off = |v: ViewProbabilities, con: bool, vr: bool| ViewProbabilities {
            p_con: if con { v.p_con } else { 0.0 },
            p_vr: if vr { v.p_vr } else { 0.0 },
        };
        let with = |con: bool, vr: bool| AugmentationPolicy {
            view_a: off(policy.view_a, con, vr),
            view_b: off(policy.view_b, con, vr),
            ..*policy
        };
        match self {
            Variant::BaseAgt => ViewRecipe { policy: None, base: *base },
            Variant::ExAgt => ViewRecipe {
                policy: Some(*policy),
                base: *base,
            },
            Variant::Crop40 => ViewRecipe {
                policy: None,
                base: BaseAugConfig { crop: (40, 40), ..*base },
            },
            Variant::BaseVr => ViewRecipe {
                policy: Some(with(false, true)),
                base: *base,
            },
            Variant::BaseCon => ViewRecipe {
                policy: Some(with(true, false)),
                base: *base,
            },
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown variant `{s}`")))
    }
}

/// How the two views of a scenario are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewRecipe {
    /// Expert augmentations applied before rasterization; `None` rasterizes
    /// the scenario once and derives both views from that grid.
    pub policy: Option<AugmentationPolicy>,
    pub base: BaseAugConfig,
}

impl ViewRecipe {
    pub fn views(&self, scenario: &Scenario, grid: &GridConfig, rng: &mut Rng) -> Result<(GridSequence, GridSequence)> {
        let (ga, gb) = match &self.policy {
            Some(policy) => {
                let (sa, sb) = sample_views(scenario, policy, rng)?;
                (rasterize(&sa, grid)?, rasterize(&sb, grid)?)
            }
            None => {
                let g = rasterize(scenario, grid)?;
                (g.clone(), g)
            }
        };
        Ok((base_pipeline(&ga, &self.base, rng)?, base_pipeline(&gb, &self.base, rng)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: Objective,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub bt_lambda: f64,
    pub vicreg: VicregCoeffs,
    pub encoder: EncoderSpec,
    pub projector: ProjectorSpec,
    pub grid: GridConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::BarlowTwins,
            optimizer: AdamConfig::default(),
            batch_size: 64,
            epochs: 30,
            bt_lambda: 5e-3,
            vicreg: VicregCoeffs::default(),
            encoder: EncoderSpec::default(),
            projector: ProjectorSpec::default(),
            grid: GridConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.optimizer.lr >= 0.0) || !self.optimizer.lr.is_finite() {
            return Err(Error::Config(format!("learning rate {} must be finite and non-negative", self.optimizer.lr)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        self.grid.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// Mean step loss per epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainOutcome {
    /// `epoch,mean_loss` CSV with 1-based epochs.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for (e, l) in self.epoch_losses.iter().enumerate() {
            out.push_str(&format!("{},{}\n", e + 1, l));
        }
        out
    }
}

fn batch_inputs(
    scenarios: &[Scenario],
    indices: &[usize],
    recipe: &ViewRecipe,
    cfg: &TrainConfig,
    epoch: usize,
    offset: usize,
) -> Result<Array2<f32>> {
    let len = input_len((cfg.grid.channels, cfg.grid.height, cfg.grid.width));
    let n = indices.len();
    let mut x = Array2::<f32>::zeros((2 * n, len));
    // Slot `pos` of the batch always gets the same generator, whatever thread runs it.
    let views: Vec<Result<(GridSequence, GridSequence)>> = indices
        .par_iter()
        .enumerate()
        .map(|(pos, &idx)| {
            let slot = (offset + pos) as u64;
            let mut r = rng::derive(cfg.seed, &[b"views", &(epoch as u64).to_le_bytes(), &slot.to_le_bytes()]);
            recipe.views(&scenarios[idx], &cfg.grid, &mut r)
        })
        .collect();
    for (pos, v) in views.into_iter().enumerate() {
        let (ga, gb) = v?;
        downsample_into(&ga, x.row_mut(pos).as_slice_mut().expect("standard layout"));
        downsample_into(&gb, x.row_mut(n + pos).as_slice_mut().expect("standard layout"));
    }
    Ok(x)
}

/// One optimization step on a stacked `[views_a; views_b]` batch; returns the loss.
fn step(model: &mut Model, adam: &mut Adam, x: &Array2<f32>, cfg: &TrainConfig, step_index: usize) -> Result<f64> {
    let n = x.nrows() / 2;
    let (h, enc_cache) = model.encoder.forward_cached(x.view());
    let (z, proj_cache) = model.projector.forward_cached(h.view());
    let z64 = z.mapv(f64::from);
    let (za, zb) = (z64.slice(s![..n, ..]), z64.slice(s![n.., ..]));
    let out = match cfg.objective {
        Objective::BarlowTwins => barlow_twins_loss(za, zb, cfg.bt_lambda)?,
        Objective::Vicreg => vicreg_loss(za, zb, &cfg.vicreg)?,
    };
    if !out.loss.is_finite() {
        return Err(Error::Diverged { step: step_index });
    }
    let grad_z = concatenate(Axis(0), &[out.grad_a.view(), out.grad_b.view()])
        .expect("matching widths")
        .mapv(|v| v as f32);
    let (proj_grads, grad_h) = model.projector.backward(&proj_cache, grad_z, true);
    let (enc_grads, _) = model.encoder.backward(&enc_cache, grad_h.expect("requested"), false);
    adam.step(&mut [&mut model.encoder, &mut model.projector], &[&enc_grads, &proj_grads]);
    Ok(out.loss)
}

/// Trains a fresh model on two-view batches drawn from `scenarios`.
pub fn train(scenarios: &[Scenario], recipe: &ViewRecipe, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut init = rng::derive(cfg.seed, &[b"init"]);
    let model = Model::new((cfg.grid.channels, cfg.grid.height, cfg.grid.width), &cfg.encoder, &cfg.projector, &mut init)?;
    train_from(model, scenarios, recipe, cfg)
}

/// Continues training `model`.
pub fn train_from(mut model: Model, scenarios: &[Scenario], recipe: &ViewRecipe, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    recipe.base.validate(cfg.grid.height, cfg.grid.width)?;
    if let Some(p) = &recipe.policy {
        p.validate()?;
    }
    if scenarios.len() < 2 {
        return Err(Error::Argument("training needs at least 2 scenarios".into()));
    }
    let mut adam = Adam::new(cfg.optimizer, &[&model.encoder, &model.projector]);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step_index = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..scenarios.len()).collect();
        order.shuffle(&mut rng::derive(cfg.seed, &[b"order", &(epoch as u64).to_le_bytes()]));
        let mut total = 0.0;
        let mut steps = 0;
        let mut offset = 0;
        // The incomplete tail batch is dropped; its batch statistics are too
        // noisy for the correlation-based objectives.
        for chunk in order.chunks_exact(cfg.batch_size.min(scenarios.len())) {
            let x = batch_inputs(scenarios, chunk, recipe, cfg, epoch, offset)?;
            offset += chunk.len();
            total += step(&mut model, &mut adam, &x, cfg, step_index)?;
            step_index += 1;
            steps += 1;
        }
        epoch_losses.push(total / steps as f64);
    }
    Ok(TrainOutcome { model, epoch_losses })
}

/// Embeddings of the unaugmented scenarios, one row each.
pub fn embed_dataset(model: &Model, scenarios: &[Scenario], grid: &GridConfig, mode: EmbeddingMode) -> Result<Array2<f64>> {
    let grids: Vec<GridSequence> = scenarios
        .par_iter()
        .map(|s| rasterize(s, grid))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(grids.len());
    for chunk in grids.chunks(256) {
        let refs: Vec<&GridSequence> = chunk.iter().collect();
        rows.push(model.embed(&refs, mode)?.mapv(f64::from));
    }
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    if views.is_empty() {
        return Ok(Array2::zeros((0, match mode {
            EmbeddingMode::Representation => model.representation_dim(),
            EmbeddingMode::Projection => model.projection_dim(),
        })));
    }
    Ok(concatenate(Axis(0), &views).expect("matching widths"))
}
