//! Feature file manifest and the small text formats used by flags.

use std::path::{Path, PathBuf};

use hyperseg_core::features::{Provenance, TileGrid};
use hyperseg_core::tucker::CompressionPlan;
use hyperseg_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Sidecar of a feature container: which depth slices belong to which layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureManifest {
    pub shape: Vec<usize>,
    /// `(layer, depth)` in stacking order.
    pub layers: Vec<(String, usize)>,
    /// False when every tap is stored at full depth.
    pub compressed: bool,
    pub grid: TileGrid,
    pub provenance: Provenance,
}

impl FeatureManifest {
    pub fn path_for(features: &Path) -> PathBuf {
        features.with_extension("json")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        let total: usize = m.layers.iter().map(|(_, d)| d).sum();
        if m.shape.len() != 3 || m.shape[0] != total || m.layers.iter().any(|(_, d)| *d == 0) {
            return Err(Error::Format {
                what: "feature manifest",
                detail: format!("layer depths sum to {total} but shape is {:?}", m.shape),
            });
        }
        Ok(m)
    }
}

/// `halving`, `full` or `layer:rank,...` against the given `(layer, depth)`s.
pub fn parse_ranks(spec: &str, layers: &[(String, usize)]) -> Result<CompressionPlan> {
    let plan = match spec.trim() {
        "halving" => CompressionPlan::halving(layers)?,
        "full" => CompressionPlan::full(layers)?,
        list => {
            let mut ranks = Vec::new();
            for item in list.split(',') {
                let (name, rank) = item
                    .split_once(':')
                    .ok_or_else(|| Error::Argument(format!("rank entry {item:?} is not layer:rank")))?;
                let rank: usize = rank
                    .trim()
                    .parse()
                    .map_err(|_| Error::Argument(format!("rank {rank:?} is not a number")))?;
                ranks.push((name.trim().to_string(), rank));
            }
            CompressionPlan::new(ranks)?
        }
    };
    if plan.per_layer_ranks.len() != layers.len() {
        return Err(Error::Argument(format!(
            "{} ranks for {} layers",
            plan.per_layer_ranks.len(),
            layers.len()
        )));
    }
    for ((name, rank), (layer, depth)) in plan.per_layer_ranks.iter().zip(layers) {
        if name != layer || *rank > *depth {
            return Err(Error::Argument(format!("rank {name}:{rank} does not fit layer {layer} of depth {depth}")));
        }
    }
    Ok(plan)
}

/// `WxH`.
pub fn parse_size(text: &str) -> Result<(usize, usize)> {
    let bad = || Error::Argument(format!("size {text:?} is not WxH"));
    let (w, h) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layers() -> Vec<(String, usize)> {
        vec![("conv1".into(), 8), ("conv2".into(), 5)]
    }

    #[test]
    fn rank_specs() {
        assert_eq!(parse_ranks("halving", &layers()).unwrap().total_compressed_depth(), 7);
        assert_eq!(parse_ranks("full", &layers()).unwrap().total_compressed_depth(), 13);
        let p = parse_ranks("conv1:2, conv2:5", &layers()).unwrap();
        assert_eq!(p.id(), "conv1:2+conv2:5");
        for bad in ["conv1:2", "conv1:9,conv2:1", "conv2:1,conv1:1", "conv1:x,conv2:1", "conv1:0,conv2:1", "nope"] {
            assert!(parse_ranks(bad, &layers()).is_err(), "{bad}");
        }
    }

    #[test]
    fn sizes() {
        assert_eq!(parse_size("1920x1080").unwrap(), (1920, 1080));
        for bad in ["", "12", "0x4", "ax3", "3x"] {
            assert!(parse_size(bad).is_err());
        }
    }

    #[test]
    fn manifest_depths_must_match_shape() {
        let m = FeatureManifest {
            shape: vec![13, 4, 4],
            layers: layers(),
            compressed: false,
            grid: hyperseg_core::features::tile_grid(4, 4, 4, 4).unwrap(),
            provenance: Provenance {
                backbone_id: "b".into(),
                plan_id: "p".into(),
                frame_digest: "0".into(),
            },
        };
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(FeatureManifest::parse(&text).unwrap(), m);
        assert!(FeatureManifest::parse(&text.replace("[13,", "[12,")).is_err());
    }
}
