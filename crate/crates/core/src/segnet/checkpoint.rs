//! On-disk network parameters: `network.json` plus one container per tensor.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerParams, NetConfig, NetworkParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const NETWORK_MANIFEST: &str = "network.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerManifest {
    pub weight: String,
    pub bias: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkManifest {
    pub config: NetConfig,
    pub layers: Vec<LayerManifest>,
}

impl NetworkManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.config
            .validate()
            .map_err(|e| Error::format("network manifest", e.to_string()))?;
        if m.layers.len() != m.config.num_layers {
            return Err(Error::format(
                "network manifest",
                format!("{} layer entries for {} layers", m.layers.len(), m.config.num_layers),
            ));
        }
        for l in &m.layers {
            if l.weight.contains(['/', '\\']) || l.bias.contains(['/', '\\']) || l.weight.starts_with('.') || l.bias.starts_with('.') {
                return Err(Error::format("network manifest", "file names must be bare"));
            }
        }
        Ok(m)
    }
}

impl NetworkParams {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut layers = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let entry = LayerManifest {
                weight: format!("layer{:02}_weight.hseg", i + 1),
                bias: format!("layer{:02}_bias.hseg", i + 1),
            };
            l.weight.save(dir.join(&entry.weight))?;
            l.bias.save(dir.join(&entry.bias))?;
            layers.push(entry);
        }
        let manifest = NetworkManifest {
            config: self.config.clone(),
            layers,
        };
        let path = dir.join(NETWORK_MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(NETWORK_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest = NetworkManifest::parse(&text)?;
        let layers = manifest
            .layers
            .iter()
            .map(|l| {
                Ok(LayerParams {
                    weight: Tensor::load(dir.join(&l.weight))?,
                    bias: Tensor::load(dir.join(&l.bias))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let p = NetworkParams {
            config: manifest.config,
            layers,
        };
        p.check_matches_config()
            .map_err(|e| Error::format("network checkpoint", e.to_string()))?;
        Ok(p)
    }
}
