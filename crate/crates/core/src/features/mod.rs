//! Native-resolution hypercolumn features via convolutional tessellation.
//!
//! A frame of any size is resized (bilinear) up to the smallest multiple of
//! the backbone input, cut into a row-major stack of tiles, run through the
//! backbone as one batch, compressed along depth, stitched back in place and
//! resized to the frame's own extents. Tiles do not overlap and seams are not
//! blended.

mod backbone;
mod tiling;

pub use backbone::{Activation, Backbone, BackboneManifest, Stage, StageManifest, ToyVggConfig};
pub use tiling::{reassemble_tiles, stack_tiles, tile_grid, TileGrid};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{resize2d, ResizeMethod, Tensor};
use crate::tucker::{apply_factor, depth_tucker, CompressionPlan, DepthFactor};

/// Where the depth factors come from.
#[derive(Clone, Debug, Default)]
pub enum FactorMode {
    /// Fit factors on the current frame (all tiles jointly).
    #[default]
    PerImage,
    /// Reuse previously fitted factors, one per tap.
    Frozen(Vec<DepthFactor>),
    /// No compression; requires every plan rank to equal the tap depth.
    Passthrough,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub backbone_id: String,
    pub plan_id: String,
    /// Identifies the frame the features were computed from.
    pub frame_digest: String,
}

/// Per-pixel compressed hypercolumn features at the frame's native extents.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack {
    /// `[depth, W, H]`.
    pub features: Tensor,
    pub provenance: Provenance,
    pub tile_count: usize,
}

impl FeatureStack {
    pub fn depth(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn extents(&self) -> (usize, usize) {
        (self.features.shape()[1], self.features.shape()[2])
    }
}

/// Output shape and tile grid of [`tessellate_extract`], without running it.
pub fn tessellation_layout(
    width: usize,
    height: usize,
    backbone: &Backbone,
    plan: &CompressionPlan,
) -> Result<(TileGrid, [usize; 3])> {
    check_plan(backbone, plan)?;
    let grid = tile_grid(width, height, backbone.input_width, backbone.input_height)?;
    Ok((grid, [plan.total_compressed_depth(), width, height]))
}

fn check_plan(backbone: &Backbone, plan: &CompressionPlan) -> Result<()> {
    let taps = backbone.tap_depths();
    if taps.len() != plan.per_layer_ranks.len() {
        return Err(Error::arg(format!(
            "plan covers {} layers, backbone has {} taps",
            plan.per_layer_ranks.len(),
            taps.len()
        )));
    }
    for ((tap, depth), (layer, rank)) in taps.iter().zip(&plan.per_layer_ranks) {
        if tap != layer {
            return Err(Error::arg(format!("plan layer {layer} does not match tap {tap}")));
        }
        if *rank == 0 || rank > depth {
            return Err(Error::arg(format!("layer {layer}: rank {rank} outside [1, {depth}]")));
        }
    }
    Ok(())
}

/// FNV-1a over the frame's container bytes.
pub fn frame_digest(frame: &Tensor) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in frame.to_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

/// Runs the full tessellation pipeline on a `[C, W, H]` frame.
///
/// Returns the feature stack and the factors that produced it.
pub fn tessellate_extract(
    img: &Tensor,
    backbone: &Backbone,
    plan: &CompressionPlan,
    mode: &FactorMode,
) -> Result<(FeatureStack, Vec<DepthFactor>)> {
    if img.rank() != 3 || img.shape()[0] != backbone.in_channels() {
        return Err(Error::arg(format!(
            "frame {:?} is not [{}, W, H]",
            img.shape(),
            backbone.in_channels()
        )));
    }
    let (w, h) = (img.shape()[1], img.shape()[2]);
    let (grid, _) = tessellation_layout(w, h, backbone, plan)?;
    let padded = resize2d(img, grid.padded_width, grid.padded_height, ResizeMethod::Bilinear)?;
    let tiles = stack_tiles(&padded, &grid)?;
    let t_count = grid.tile_count();

    let per_tile: Vec<Vec<Tensor>> = (0..t_count)
        .into_par_iter()
        .map(|t| {
            let tile = Tensor::from_parts(
                tiles.shape()[1..].to_vec(),
                tiles.slab(t).to_vec(),
            );
            backbone.hypercolumn_layers(&tile)
        })
        .collect::<Result<_>>()?;

    let n_taps = plan.per_layer_ranks.len();
    let factors: Vec<DepthFactor> = match mode {
        FactorMode::PerImage => (0..n_taps)
            .into_par_iter()
            .map(|l| {
                let (id, rank) = &plan.per_layer_ranks[l];
                let joined = join_tiles(&per_tile, l)?;
                Ok(depth_tucker(&joined, *rank, id)?.factor)
            })
            .collect::<Result<_>>()?,
        FactorMode::Frozen(f) => {
            if f.len() != n_taps {
                return Err(Error::arg(format!("{} frozen factors for {n_taps} taps", f.len())));
            }
            for (fac, (id, rank)) in f.iter().zip(&plan.per_layer_ranks) {
                if fac.rank() != *rank || &fac.source_layer != id {
                    return Err(Error::arg(format!(
                        "frozen factor {} (rank {}) does not match plan entry {id}:{rank}",
                        fac.source_layer,
                        fac.rank()
                    )));
                }
            }
            f.clone()
        }
        FactorMode::Passthrough => {
            for ((tap, depth), (_, rank)) in backbone.tap_depths().iter().zip(&plan.per_layer_ranks) {
                if depth != rank {
                    return Err(Error::arg(format!(
                        "passthrough needs full rank, layer {tap} has {rank} of {depth}"
                    )));
                }
            }
            Vec::new()
        }
    };

    let compressed: Vec<Tensor> = per_tile
        .into_par_iter()
        .map(|layers| {
            let cores = if factors.is_empty() {
                layers
            } else {
                layers
                    .iter()
                    .zip(&factors)
                    .map(|(l, f)| apply_factor(l, f))
                    .collect::<Result<Vec<_>>>()?
            };
            let refs: Vec<&Tensor> = cores.iter().collect();
            Tensor::concat(&refs)
        })
        .collect::<Result<_>>()?;

    let d_phi = plan.total_compressed_depth();
    let mut stacked = Vec::with_capacity(t_count * d_phi * grid.tile_width * grid.tile_height);
    for c in &compressed {
        stacked.extend_from_slice(c.data());
    }
    let stacked = Tensor::new(vec![t_count, d_phi, grid.tile_width, grid.tile_height], stacked)?;
    let mosaic = reassemble_tiles(&stacked, &grid)?;
    let features = resize2d(&mosaic, w, h, ResizeMethod::Bilinear)?;

    let stack = FeatureStack {
        features,
        provenance: Provenance {
            backbone_id: backbone.id.clone(),
            plan_id: plan.id(),
            frame_digest: frame_digest(img),
        },
        tile_count: t_count,
    };
    Ok((stack, factors))
}

/// Gathers layer `l` of every tile into one `[depth, T, w, h]` tensor so a
/// single factor is fitted over the whole frame.
fn join_tiles(per_tile: &[Vec<Tensor>], l: usize) -> Result<Tensor> {
    let first = &per_tile[0][l];
    let depth = first.shape()[0];
    let plane = first.len() / depth;
    let t = per_tile.len();
    let mut data = vec![0.0; depth * t * plane];
    for (ti, layers) in per_tile.iter().enumerate() {
        for d in 0..depth {
            data[(d * t + ti) * plane..(d * t + ti + 1) * plane].copy_from_slice(layers[l].slab(d));
        }
    }
    let mut shape = vec![depth, t];
    shape.extend_from_slice(&first.shape()[1..]);
    Tensor::new(shape, data)
}

/// Fits frozen factors on a sample of frames (their hypercolumns pooled).
pub fn fit_frozen_factors(frames: &[Tensor], backbone: &Backbone, plan: &CompressionPlan) -> Result<Vec<DepthFactor>> {
    check_plan(backbone, plan)?;
    let mut per_tile = Vec::new();
    for img in frames {
        let (w, h) = (img.shape()[1], img.shape()[2]);
        let grid = tile_grid(w, h, backbone.input_width, backbone.input_height)?;
        let padded = resize2d(img, grid.padded_width, grid.padded_height, ResizeMethod::Bilinear)?;
        let tiles = stack_tiles(&padded, &grid)?;
        for t in 0..grid.tile_count() {
            let tile = Tensor::from_parts(tiles.shape()[1..].to_vec(), tiles.slab(t).to_vec());
            per_tile.push(backbone.hypercolumn_layers(&tile)?);
        }
    }
    if per_tile.is_empty() {
        return Err(Error::arg("no frames to fit factors on"));
    }
    plan.per_layer_ranks
        .iter()
        .enumerate()
        .map(|(l, (id, rank))| Ok(depth_tucker(&join_tiles(&per_tile, l)?, *rank, id)?.factor))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tucker::compress_stack;

    fn frame(w: usize, h: usize) -> Tensor {
        Tensor::from_fn(&[3, w, h], |i| ((i[0] * 5 + i[1] * 3 + i[2] * 7) % 13) as f64 / 12.0).unwrap()
    }

    fn toy() -> (Backbone, CompressionPlan) {
        let b = Backbone::toy_vgg(&ToyVggConfig::default()).unwrap();
        let plan = CompressionPlan::halving(&b.tap_depths()).unwrap();
        (b, plan)
    }

    #[test]
    fn output_depth_and_extents() {
        let (b, plan) = toy();
        for (w, h) in [(32, 32), (40, 20), (70, 33)] {
            let (fs, factors) = tessellate_extract(&frame(w, h), &b, &plan, &FactorMode::PerImage).unwrap();
            assert_eq!(fs.features.shape(), &[16, w, h]);
            assert_eq!(factors.len(), 3);
            assert_eq!(fs.tile_count, w.div_ceil(32) * h.div_ceil(32));
        }
    }

    #[test]
    fn single_tile_equals_direct_path() {
        let (b, plan) = toy();
        let img = frame(32, 32);
        let (fs, _) = tessellate_extract(&img, &b, &plan, &FactorMode::PerImage).unwrap();
        let layers = b.hypercolumn_layers(&img).unwrap();
        let (direct, _) = compress_stack(&layers, &plan).unwrap();
        assert_eq!(fs.features, direct);
    }

    #[test]
    fn identity_pipeline_reproduces_frame() {
        let b = Backbone::identity(3, 8, 8);
        let plan = CompressionPlan::full(&b.tap_depths()).unwrap();
        let img = frame(16, 24);
        let (fs, _) = tessellate_extract(&img, &b, &plan, &FactorMode::Passthrough).unwrap();
        assert_eq!(fs.features, img);
    }

    #[test]
    fn full_hd_layout() {
        let cfg = ToyVggConfig { input_width: 224, input_height: 224, stage_depths: vec![64, 128, 256, 512, 512], seed: 0 };
        let b = Backbone::toy_vgg(&cfg).unwrap();
        let plan = CompressionPlan::halving(&b.tap_depths()).unwrap();
        let (grid, shape) = tessellation_layout(1920, 1080, &b, &plan).unwrap();
        assert_eq!(grid.tile_count(), 45);
        assert_eq!(shape, [736, 1920, 1080]);
    }

    #[test]
    fn deterministic_across_runs() {
        let (b, plan) = toy();
        let img = frame(50, 70);
        let a = tessellate_extract(&img, &b, &plan, &FactorMode::PerImage).unwrap().0;
        let c = tessellate_extract(&img, &b, &plan, &FactorMode::PerImage).unwrap().0;
        assert!(a.features.data().iter().zip(c.features.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn frozen_factors_reproduce_per_image_on_training_frame() {
        let (b, plan) = toy();
        let img = frame(64, 32);
        let frozen = fit_frozen_factors(std::slice::from_ref(&img), &b, &plan).unwrap();
        let (per_image, fitted) = tessellate_extract(&img, &b, &plan, &FactorMode::PerImage).unwrap();
        let (reused, _) = tessellate_extract(&img, &b, &plan, &FactorMode::Frozen(frozen.clone())).unwrap();
        assert_eq!(fitted, frozen);
        assert_eq!(per_image.features, reused.features);
    }

    #[test]
    fn bad_inputs() {
        let (b, plan) = toy();
        assert!(tessellate_extract(&Tensor::zeros(&[1, 32, 32]), &b, &plan, &FactorMode::PerImage).is_err());
        let wrong = CompressionPlan::new(vec![("conv1".into(), 4)]).unwrap();
        assert!(tessellate_extract(&frame(32, 32), &b, &wrong, &FactorMode::PerImage).is_err());
        assert!(tessellate_extract(&frame(32, 32), &b, &plan, &FactorMode::Passthrough).is_err());
    }
}
