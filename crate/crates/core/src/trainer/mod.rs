//! Desk-scale training on seeded synthetic scenes, checkpoints and
//! evaluation over directory datasets.
//!
//! Every random choice (scenes, initial weights, per-step clicks) is drawn
//! from the config seed, and batch reductions run in sample order, so a run
//! is reproducible bit for bit.

mod dataset;
mod optim;
mod scene;

pub use dataset::{write_synthetic_dataset, Dataset, DatasetItem};
pub use optim::{Optimizer, OptimizerKind};
pub use scene::{generate_scene, generate_scene_sized, SceneSpec, SyntheticScene};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{tessellate_extract, Backbone, FactorMode, FeatureStack, ToyVggConfig};
use crate::image_io::{load_frame, load_mask};
use crate::interaction::{simulate_clicks, ClickSimParams, ClickState, MAX_CLICKS_PER_POLARITY};
use crate::losses::{boundary_raster, iou, ClickMasks, ItemError, LossBreakdown, MetricReport, PerImageMetric};
use crate::segnet::{forward, loss_and_gradients, ContextBundle, NetConfig, NetworkParams, SegmentationProposals};
use crate::tensor::Tensor;
use crate::tucker::CompressionPlan;

/// SplitMix64 finaliser over a seed and two stream indices.
pub(crate) fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_SCENE: u64 = 0;
const STREAM_INIT: u64 = 1;
const STREAM_BATCH: u64 = 2;
const STREAM_EVAL: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    /// Pseudo-Huber scale of the boundary term.
    pub delta: f64,
    pub num_heads: usize,
    pub seed: u64,
    /// Steps between evaluation-loss records.
    pub eval_every: usize,
    pub num_scenes: usize,
    /// Fixed `[W, H]` for every scene; random in 32..=64 when absent.
    pub scene_size: Option<[usize; 2]>,
    /// Rescale the batch gradient to at most this L2 norm.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            learning_rate: 0.05,
            optimizer: OptimizerKind::Sgd,
            batch_size: 4,
            delta: 1.0,
            num_heads: 3,
            seed: 0,
            eval_every: 50,
            num_scenes: 8,
            scene_size: None,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    /// JSON if the text starts with `{`, TOML otherwise.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text).map_err(|e| Error::format("train config", e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("steps", self.steps),
            ("batch_size", self.batch_size),
            ("num_heads", self.num_heads),
            ("eval_every", self.eval_every),
            ("num_scenes", self.num_scenes),
        ] {
            if v == 0 {
                return Err(Error::arg(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("learning_rate must be positive"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::arg("delta must be positive"));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::arg("clip_norm must be positive"));
        }
        if let Some([w, h]) = self.scene_size {
            if w < 16 || h < 16 {
                return Err(Error::arg("scene_size must be at least 16x16"));
            }
        }
        Ok(())
    }
}

/// Backbone, compression plan and segmentation network.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub backbone: Backbone,
    pub plan: CompressionPlan,
    pub params: NetworkParams,
}

/// Produces the head-1 soft map for a frame and click set.
pub trait Segmenter: Sync {
    fn segment(&self, frame: &Tensor, previous: Option<&Tensor>, clicks: &ClickState) -> Result<Tensor>;
}

impl Model {
    /// Default toy backbone, halved ranks and the desk network.
    pub fn desk(num_heads: usize, seed: u64) -> Result<Self> {
        let backbone = Backbone::toy_vgg(&ToyVggConfig::default())?;
        let plan = CompressionPlan::halving(&backbone.tap_depths())?;
        let mut cfg = NetConfig::desk(plan.total_compressed_depth());
        cfg.num_heads = num_heads;
        let params = NetworkParams::init(&cfg, seed)?;
        Ok(Self { backbone, plan, params })
    }

    pub fn extract(&self, frame: &Tensor) -> Result<FeatureStack> {
        Ok(tessellate_extract(frame, &self.backbone, &self.plan, &FactorMode::PerImage)?.0)
    }

    pub fn propose(
        &self,
        feats: &Tensor,
        frame: &Tensor,
        previous: Option<&Tensor>,
        clicks: &ClickState,
    ) -> Result<SegmentationProposals> {
        let ctx = ContextBundle::new(frame, previous, clicks)?;
        forward(&self.params, feats, &ctx)
    }

    pub fn save(&self, dir: &Path, manifest: &CheckpointManifest) -> Result<()> {
        if manifest.plan != self.plan {
            return Err(Error::arg("manifest plan differs from the model plan"));
        }
        self.params.save(dir)?;
        self.backbone.save(&dir.join(&manifest.backbone))?;
        let path = dir.join(CHECKPOINT_MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<(Self, CheckpointManifest)> {
        let path = dir.join(CHECKPOINT_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest = CheckpointManifest::parse(&text)?;
        let backbone = Backbone::load(&dir.join(&manifest.backbone))?;
        let params = NetworkParams::load(dir)?;
        let model = Self {
            backbone,
            plan: manifest.plan.clone(),
            params,
        };
        if model.plan.total_compressed_depth() != model.params.config.feature_depth {
            return Err(Error::format(
                "checkpoint manifest",
                format!(
                    "plan depth {} but network expects {}",
                    model.plan.total_compressed_depth(),
                    model.params.config.feature_depth
                ),
            ));
        }
        crate::features::tessellation_layout(
            model.backbone.input_width,
            model.backbone.input_height,
            &model.backbone,
            &model.plan,
        )
        .map_err(|e| Error::format("checkpoint manifest", e.to_string()))?;
        Ok((model, manifest))
    }
}

impl Segmenter for Model {
    fn segment(&self, frame: &Tensor, previous: Option<&Tensor>, clicks: &ClickState) -> Result<Tensor> {
        let feats = self.extract(frame)?;
        self.propose(&feats.features, frame, previous, clicks)?.head(1)
    }
}

pub const CHECKPOINT_MANIFEST: &str = "checkpoint.json";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: u32,
    pub plan: CompressionPlan,
    /// Subdirectory holding the backbone.
    pub backbone: String,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub loss_curve: Vec<LossPoint>,
}

impl CheckpointManifest {
    pub fn new(plan: CompressionPlan) -> Self {
        Self {
            format: 1,
            plan,
            backbone: "backbone".into(),
            train: None,
            loss_curve: Vec::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.format != 1 {
            return Err(Error::format("checkpoint manifest", format!("unsupported format {}", m.format)));
        }
        if m.backbone.is_empty() || m.backbone.contains(['/', '\\']) || m.backbone.starts_with('.') {
            return Err(Error::format("checkpoint manifest", "backbone must be a bare directory name"));
        }
        Ok(m)
    }
}

/// A scene with its precomputed features and fixed evaluation clicks.
#[derive(Clone, Debug)]
pub struct PreparedScene {
    pub scene: SyntheticScene,
    pub features: Tensor,
    pub eval_clicks: ClickState,
}

/// One training sample: a scene index and the clicks shown with it.
#[derive(Clone, Debug)]
pub struct Sample {
    pub scene: usize,
    pub clicks: ClickState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean evaluation loss at step 0, every `eval_every` steps and at the end.
    pub loss_curve: Vec<LossPoint>,
    /// Mean batch loss of every step.
    pub step_losses: Vec<f64>,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.loss_curve.first().map_or(f64::NAN, |p| p.loss)
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_curve.last().map_or(f64::NAN, |p| p.loss)
    }
}

pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    pub scenes: Vec<PreparedScene>,
    optimizer: Optimizer,
    steps_done: usize,
}

fn eval_clicks(gt: &Tensor, seed: u64, n_pos: usize, n_neg: usize) -> Result<ClickState> {
    simulate_clicks(gt, seed, n_pos, n_neg, &ClickSimParams::default())
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let scenes = (0..config.num_scenes)
            .map(|i| {
                let s = mix(config.seed, i as u64, STREAM_SCENE);
                match config.scene_size {
                    Some([w, h]) => generate_scene_sized(s, w, h),
                    None => generate_scene(s),
                }
            })
            .collect();
        Self::with_scenes(config, scenes)
    }

    pub fn with_scenes(config: TrainConfig, scenes: Vec<SyntheticScene>) -> Result<Self> {
        config.validate()?;
        if scenes.is_empty() {
            return Err(Error::arg("no training scenes"));
        }
        let model = Model::desk(config.num_heads, mix(config.seed, 0, STREAM_INIT))?;
        let prepared = scenes
            .into_par_iter()
            .enumerate()
            .map(|(i, scene)| {
                let features = model.extract(&scene.frame_curr)?.features;
                let eval_clicks = eval_clicks(&scene.gt_mask, mix(config.seed, i as u64, STREAM_EVAL), 5, 5)?;
                Ok(PreparedScene {
                    scene,
                    features,
                    eval_clicks,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let optimizer = Optimizer::new(config.optimizer, config.learning_rate, model.params.num_parameters());
        Ok(Self {
            config,
            model,
            scenes: prepared,
            optimizer,
            steps_done: 0,
        })
    }

    /// Scene indices and simulated clicks (1 to 15 of each polarity) for a step.
    pub fn sample_batch(&self, step: usize) -> Result<Vec<Sample>> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.config.seed, step as u64, STREAM_BATCH));
        (0..self.config.batch_size)
            .map(|_| {
                let scene = rng.random_range(0..self.scenes.len());
                let n_pos = rng.random_range(1..=MAX_CLICKS_PER_POLARITY);
                let n_neg = rng.random_range(1..=MAX_CLICKS_PER_POLARITY);
                let clicks = eval_clicks(&self.scenes[scene].scene.gt_mask, rng.random(), n_pos, n_neg)?;
                Ok(Sample { scene, clicks })
            })
            .collect()
    }

    fn sample_loss(&self, params: &NetworkParams, scene: usize, clicks: &ClickState) -> Result<(LossBreakdown, NetworkParams)> {
        let s = &self.scenes[scene];
        let ctx = ContextBundle::new(&s.scene.frame_curr, Some(&s.scene.frame_prev), clicks)?;
        let (bp, bn) = clicks.masks();
        let masks = ClickMasks {
            positive: bp,
            negative: bn,
        };
        let (b, g, _) = loss_and_gradients(params, &s.features, &ctx, &s.scene.gt_mask, &masks, self.config.delta)?;
        Ok((b, g))
    }

    /// One update with the mean gradient of `samples`. Returns the mean loss.
    pub fn step(&mut self, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::arg("empty batch"));
        }
        let results = samples
            .par_iter()
            .map(|s| self.sample_loss(&self.model.params, s.scene, &s.clicks))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Numeric(format!("step {}: {e}", self.steps_done + 1)))?;
        let n = samples.len() as f64;
        let mut grad = vec![0.0; self.model.params.num_parameters()];
        let mut loss = 0.0;
        for (b, g) in &results {
            loss += b.total;
            for (acc, v) in grad.iter_mut().zip(g.to_flat()) {
                *acc += v;
            }
        }
        grad.iter_mut().for_each(|v| *v /= n);
        loss /= n;
        if !loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "step {}: non-finite loss or gradient (loss {loss})",
                self.steps_done + 1
            )));
        }
        if let Some(max) = self.config.clip_norm {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > max {
                grad.iter_mut().for_each(|g| *g *= max / norm);
            }
        }
        let mut flat = self.model.params.to_flat();
        self.optimizer.step(&mut flat, &grad);
        self.model
            .params
            .set_flat(&flat)
            .map_err(|e| Error::Numeric(format!("step {}: {e}", self.steps_done + 1)))?;
        self.steps_done += 1;
        Ok(loss)
    }

    /// Per-scene loss breakdowns under the fixed evaluation clicks.
    pub fn eval_breakdowns(&self) -> Result<Vec<LossBreakdown>> {
        (0..self.scenes.len())
            .into_par_iter()
            .map(|i| {
                let s = &self.scenes[i];
                let ctx = ContextBundle::new(&s.scene.frame_curr, Some(&s.scene.frame_prev), &s.eval_clicks)?;
                let out = forward(&self.model.params, &s.features, &ctx)?;
                let (bp, bn) = s.eval_clicks.masks();
                crate::losses::total_loss(
                    &s.scene.gt_mask,
                    &out.soft_maps,
                    &ClickMasks {
                        positive: bp,
                        negative: bn,
                    },
                    self.config.delta,
                )
            })
            .collect()
    }

    pub fn eval_loss(&self) -> Result<f64> {
        let b = self.eval_breakdowns()?;
        let totals: Vec<f64> = b.iter().map(|b| b.total).collect();
        Ok(crate::losses::pairwise_sum(&totals) / totals.len() as f64)
    }

    /// Mean IOU of head `m` against the ground truth under evaluation clicks.
    pub fn head_miou(&self, m: usize) -> Result<f64> {
        let ious = (0..self.scenes.len())
            .into_par_iter()
            .map(|i| {
                let s = &self.scenes[i];
                let out = self.model.propose(&s.features, &s.scene.frame_curr, Some(&s.scene.frame_prev), &s.eval_clicks)?;
                iou(&out.head(m)?, &s.scene.gt_mask)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(crate::losses::pairwise_sum(&ious) / ious.len() as f64)
    }

    pub fn run(&mut self) -> Result<TrainReport> {
        let mut report = TrainReport {
            loss_curve: vec![LossPoint {
                step: self.steps_done,
                loss: self.eval_loss()?,
            }],
            step_losses: Vec::with_capacity(self.config.steps),
        };
        for _ in 0..self.config.steps {
            let batch = self.sample_batch(self.steps_done)?;
            report.step_losses.push(self.step(&batch)?);
            if self.steps_done % self.config.eval_every == 0 || report.step_losses.len() == self.config.steps {
                let loss = self.eval_loss()?;
                log::info!("step {} eval loss {loss:.6}", self.steps_done);
                report.loss_curve.push(LossPoint {
                    step: self.steps_done,
                    loss,
                });
            }
        }
        Ok(report)
    }

    pub fn manifest(&self, report: &TrainReport) -> CheckpointManifest {
        CheckpointManifest {
            train: Some(self.config.clone()),
            loss_curve: report.loss_curve.clone(),
            ..CheckpointManifest::new(self.model.plan.clone())
        }
    }
}

/// Trains from scratch and returns the model and loss curve.
pub fn train(config: TrainConfig) -> Result<(Model, TrainReport, CheckpointManifest)> {
    let mut t = Trainer::new(config)?;
    let report = t.run()?;
    let manifest = t.manifest(&report);
    Ok((t.model, report, manifest))
}

/// Scores head 1 on every dataset item with 5 positive and 5 negative
/// simulated clicks (for `clicks_per_image = 10`). Items without a mask or
/// that fail to load are reported as errors and skipped.
pub fn evaluate(segmenter: &dyn Segmenter, dataset: &Dataset, clicks_per_image: usize, seed: u64) -> Result<MetricReport> {
    if dataset.is_empty() {
        return Err(Error::arg(format!("dataset {} has no frames", dataset.root.display())));
    }
    let n_pos = clicks_per_image.div_ceil(2);
    let n_neg = clicks_per_image / 2;
    let results: Vec<std::result::Result<PerImageMetric, ItemError>> = dataset
        .items
        .par_iter()
        .enumerate()
        .map(|(i, item)| {
            let run = || -> Result<PerImageMetric> {
                let mask_path = item
                    .mask
                    .as_ref()
                    .ok_or_else(|| Error::arg(format!("no mask for {}", item.name)))?;
                let frame = load_frame(&item.frame)?;
                let gt = load_mask(mask_path)?;
                let prev = item.previous.as_ref().map(|p| load_frame(p)).transpose()?;
                let clicks = simulate_clicks(&gt, mix(seed, i as u64, STREAM_EVAL), n_pos, n_neg, &ClickSimParams::default())?;
                let pred = segmenter.segment(&frame, prev.as_ref(), &clicks)?;
                Ok(PerImageMetric {
                    name: item.name.clone(),
                    iou: iou(&pred, &gt)?,
                    biou: iou(&boundary_raster(&pred), &boundary_raster(&gt))?,
                })
            };
            run().map_err(|e| ItemError {
                name: item.name.clone(),
                message: e.to_string(),
            })
        })
        .collect();
    let (mut ok, mut errors) = (Vec::new(), Vec::new());
    for r in results {
        match r {
            Ok(m) => ok.push(m),
            Err(e) => errors.push(e),
        }
    }
    let mut report = MetricReport::aggregate(ok);
    report.errors = errors;
    Ok(report)
}
