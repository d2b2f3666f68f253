//! Depth-only Tucker (HOSVD) compression of convolutional feature tensors.
//!
//! Only the depth mode is truncated. For a feature tensor `C` of shape
//! `[depth, ..spatial]` the factor `A` holds the leading left singular vectors
//! of the depth-mode unfolding, the core is `A^T C` (applied per pixel) and
//! the reconstruction is `A core`. Because a single mode is truncated the
//! squared reconstruction error equals the sum of the discarded squared
//! singular values exactly.
//!
//! The depth-mode unfolding is taken as the row-major reshape
//! `[depth, prod(spatial)]`; it differs from the column ordering of
//! [`Tensor::unfold`] only by a column permutation, which leaves the left
//! singular vectors and singular values unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{truncated_svd, Tensor};

/// Orthonormal depth basis for one backbone layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthFactor {
    /// `original_depth x rank`, orthonormal columns.
    pub factor: Tensor,
    pub source_layer: String,
    /// Fraction of `||C||_F^2` captured by the retained components.
    pub energy_retained: f64,
}

/// Sidecar metadata written next to a serialized factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthFactorMeta {
    pub layer: String,
    pub rank: usize,
    pub original_depth: usize,
    pub energy_retained: f64,
}

impl DepthFactor {
    pub fn rank(&self) -> usize {
        self.factor.cols()
    }

    pub fn original_depth(&self) -> usize {
        self.factor.rows()
    }

    pub fn meta(&self) -> DepthFactorMeta {
        DepthFactorMeta {
            layer: self.source_layer.clone(),
            rank: self.rank(),
            original_depth: self.original_depth(),
            energy_retained: self.energy_retained,
        }
    }

    /// Writes `<stem>.hseg` and `<stem>.json`.
    pub fn save(&self, dir: &std::path::Path, stem: &str) -> Result<()> {
        self.factor.save(dir.join(format!("{stem}.hseg")))?;
        let path = dir.join(format!("{stem}.json"));
        let json = serde_json::to_string_pretty(&self.meta())?;
        std::fs::write(&path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: &std::path::Path, stem: &str) -> Result<Self> {
        let factor = Tensor::load(dir.join(format!("{stem}.hseg")))?;
        let path = dir.join(format!("{stem}.json"));
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: DepthFactorMeta = serde_json::from_str(&text)?;
        Self::from_parts(factor, meta)
    }

    pub fn from_parts(factor: Tensor, meta: DepthFactorMeta) -> Result<Self> {
        if factor.rank() != 2
            || factor.rows() != meta.original_depth
            || factor.cols() != meta.rank
            || meta.rank == 0
        {
            return Err(Error::format(
                "depth factor",
                format!("matrix {:?} disagrees with metadata {meta:?}", factor.shape()),
            ));
        }
        if !(0.0..=1.0).contains(&meta.energy_retained) {
            return Err(Error::format("depth factor", "energy_retained outside [0, 1]"));
        }
        Ok(Self {
            factor,
            source_layer: meta.layer,
            energy_retained: meta.energy_retained,
        })
    }
}

/// Per-layer depth ranks. The sum of ranks is the compressed feature depth.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressionPlan {
    pub per_layer_ranks: Vec<(String, usize)>,
}

impl CompressionPlan {
    pub fn new(per_layer_ranks: Vec<(String, usize)>) -> Result<Self> {
        if per_layer_ranks.is_empty() {
            return Err(Error::arg("compression plan covers no layers"));
        }
        if let Some((id, _)) = per_layer_ranks.iter().find(|(_, r)| *r == 0) {
            return Err(Error::arg(format!("layer {id} has rank 0")));
        }
        Ok(Self { per_layer_ranks })
    }

    /// `ceil(depth / 2)` per layer.
    pub fn halving(layers: &[(String, usize)]) -> Result<Self> {
        Self::new(
            layers
                .iter()
                .map(|(id, d)| (id.clone(), d.div_ceil(2)))
                .collect(),
        )
    }

    /// Full rank everywhere: compression becomes a rotation.
    pub fn full(layers: &[(String, usize)]) -> Result<Self> {
        Self::new(layers.to_vec())
    }

    pub fn total_compressed_depth(&self) -> usize {
        self.per_layer_ranks.iter().map(|(_, r)| r).sum()
    }

    /// Short stable identifier, e.g. `conv1:4+conv2:8`.
    pub fn id(&self) -> String {
        self.per_layer_ranks
            .iter()
            .map(|(l, r)| format!("{l}:{r}"))
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// Result of [`depth_tucker`].
#[derive(Clone, Debug)]
pub struct DepthTucker {
    /// `[rank, ..spatial]`.
    pub core: Tensor,
    pub factor: DepthFactor,
    /// All singular values of the depth unfolding, nonincreasing.
    pub singular_values: Vec<f64>,
}

impl DepthTucker {
    /// Sum of discarded squared singular values.
    pub fn discarded_energy(&self) -> f64 {
        self.singular_values[self.factor.rank().min(self.singular_values.len())..]
            .iter()
            .map(|s| s * s)
            .sum()
    }
}

/// Truncated depth-mode Tucker factorisation of `c` (`[depth, ..spatial]`).
pub fn depth_tucker(c: &Tensor, rank: usize, layer: &str) -> Result<DepthTucker> {
    if c.rank() < 2 {
        return Err(Error::arg(format!(
            "depth_tucker needs [depth, ..spatial], got {:?}",
            c.shape()
        )));
    }
    let depth = c.shape()[0];
    if rank == 0 || rank > depth {
        return Err(Error::arg(format!(
            "layer {layer}: rank {rank} outside [1, {depth}]"
        )));
    }
    let pixels = c.len() / depth;
    let unfolding = c.clone().reshape(vec![depth, pixels])?;
    let full_k = depth.min(pixels);
    let svd = truncated_svd(&unfolding, full_k)?;

    let factor = if rank <= full_k {
        let mut cols = Vec::with_capacity(depth * rank);
        for i in 0..depth {
            cols.extend_from_slice(&svd.left_vectors.slab(i)[..rank]);
        }
        Tensor::from_parts(vec![depth, rank], cols)
    } else {
        extend_basis(&svd.left_vectors, rank)
    };

    let total = c.data().iter().map(|v| v * v).sum::<f64>();
    let retained: f64 = svd.singular_values[..rank.min(full_k)].iter().map(|s| s * s).sum();
    let energy_retained = if total > 0.0 { (retained / total).clamp(0.0, 1.0) } else { 1.0 };

    let factor = DepthFactor {
        factor,
        source_layer: layer.to_string(),
        energy_retained,
    };
    let core = project(c, &factor.factor);
    Ok(DepthTucker {
        core,
        factor,
        singular_values: svd.singular_values,
    })
}

/// Pads an orthonormal `d x k` basis to `d x rank` with Gram-Schmidt over the
/// standard basis.
fn extend_basis(u: &Tensor, rank: usize) -> Tensor {
    let (d, k) = (u.rows(), u.cols());
    let mut basis: Vec<Vec<f64>> = (0..k).map(|j| u.column(j)).collect();
    for e in 0..d {
        if basis.len() == rank {
            break;
        }
        let mut cand = vec![0.0; d];
        cand[e] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = cand.iter().zip(b).map(|(x, y)| x * y).sum();
                cand.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let n = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(cand.into_iter().map(|x| x / n).collect());
        }
    }
    Tensor::from_fn(&[d, rank], |i| basis[i[1]][i[0]]).expect("finite basis")
}

/// `core[r, p] = sum_d A[d, r] c[d, p]`.
fn project(c: &Tensor, a: &Tensor) -> Tensor {
    let (depth, rank) = (a.rows(), a.cols());
    let pixels = c.len() / depth;
    let mut out = vec![0.0; rank * pixels];
    for d in 0..depth {
        let src = c.slab(d);
        for r in 0..rank {
            let w = a.data()[d * rank + r];
            if w == 0.0 {
                continue;
            }
            for (o, &v) in out[r * pixels..(r + 1) * pixels].iter_mut().zip(src) {
                *o += w * v;
            }
        }
    }
    let mut shape = c.shape().to_vec();
    shape[0] = rank;
    Tensor::from_parts(shape, out)
}

/// Projects each pixel's depth vector onto the factor columns.
pub fn apply_factor(c: &Tensor, f: &DepthFactor) -> Result<Tensor> {
    if c.rank() < 2 || c.shape()[0] != f.original_depth() {
        return Err(Error::arg(format!(
            "layer {}: tensor {:?} does not have depth {}",
            f.source_layer,
            c.shape(),
            f.original_depth()
        )));
    }
    Ok(project(c, &f.factor))
}

/// `A core`: maps a core back to the original depth.
pub fn reconstruct(core: &Tensor, f: &DepthFactor) -> Result<Tensor> {
    if core.rank() < 2 || core.shape()[0] != f.rank() {
        return Err(Error::arg(format!(
            "core {:?} does not have depth {}",
            core.shape(),
            f.rank()
        )));
    }
    Ok(project(core, &f.factor.transpose()))
}

/// Compresses each layer by its planned rank and concatenates the cores along
/// depth in layer order. Factors are fitted on the given tensors.
pub fn compress_stack(layers: &[Tensor], plan: &CompressionPlan) -> Result<(Tensor, Vec<DepthFactor>)> {
    check_layers(layers, plan)?;
    let mut cores = Vec::with_capacity(layers.len());
    let mut factors = Vec::with_capacity(layers.len());
    for (layer, (id, rank)) in layers.iter().zip(&plan.per_layer_ranks) {
        let t = depth_tucker(layer, *rank, id)?;
        cores.push(t.core);
        factors.push(t.factor);
    }
    let refs: Vec<&Tensor> = cores.iter().collect();
    Ok((Tensor::concat(&refs)?, factors))
}

/// Like [`compress_stack`] but with previously fitted factors.
pub fn compress_stack_with(layers: &[Tensor], factors: &[DepthFactor]) -> Result<Tensor> {
    if layers.len() != factors.len() {
        return Err(Error::arg(format!(
            "{} layers but {} factors",
            layers.len(),
            factors.len()
        )));
    }
    check_spatial(layers)?;
    let cores = layers
        .iter()
        .zip(factors)
        .map(|(l, f)| apply_factor(l, f))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Tensor> = cores.iter().collect();
    Tensor::concat(&refs)
}

fn check_layers(layers: &[Tensor], plan: &CompressionPlan) -> Result<()> {
    if layers.len() != plan.per_layer_ranks.len() {
        return Err(Error::arg(format!(
            "plan covers {} layers, stack has {}",
            plan.per_layer_ranks.len(),
            layers.len()
        )));
    }
    for (layer, (id, rank)) in layers.iter().zip(&plan.per_layer_ranks) {
        if layer.rank() < 2 || *rank > layer.shape()[0] {
            return Err(Error::arg(format!(
                "layer {id}: rank {rank} exceeds depth of {:?}",
                layer.shape()
            )));
        }
    }
    check_spatial(layers)
}

fn check_spatial(layers: &[Tensor]) -> Result<()> {
    let first = layers.first().ok_or_else(|| Error::arg("empty layer stack"))?;
    for (i, l) in layers.iter().enumerate() {
        if l.shape()[1..] != first.shape()[1..] {
            return Err(Error::arg(format!(
                "layer {i} spatial extents {:?} differ from {:?}",
                &l.shape()[1..],
                &first.shape()[1..]
            )));
        }
    }
    Ok(())
}
