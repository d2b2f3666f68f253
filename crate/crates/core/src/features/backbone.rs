//! Pluggable convolutional backbone producing hypercolumn features.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conv::{avg_pool2, ConvGeom};
use crate::error::{Error, Result};
use crate::tensor::{resize2d, ResizeMethod, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// One convolution, its activation, then an optional 2x mean-pool.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub name: String,
    /// `[out, in, k, k]`.
    pub weight: Tensor,
    /// `[out]`.
    pub bias: Tensor,
    pub activation: Activation,
    /// 1 (none) or 2; applied after the stage output is tapped.
    pub downsample: usize,
}

impl Stage {
    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    pub id: String,
    pub input_width: usize,
    pub input_height: usize,
    pub stages: Vec<Stage>,
    /// Indices into `stages` whose outputs form the hypercolumn, increasing.
    pub taps: Vec<usize>,
}

/// Configuration of the deterministic stand-in backbone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyVggConfig {
    pub seed: u64,
    pub input_width: usize,
    pub input_height: usize,
    /// Output depth of each stage; every stage is tapped and all but the last
    /// are followed by a 2x mean-pool.
    pub stage_depths: Vec<usize>,
}

impl Default for ToyVggConfig {
    fn default() -> Self {
        Self {
            seed: 19,
            input_width: 32,
            input_height: 32,
            stage_depths: vec![8, 8, 16],
        }
    }
}

impl Backbone {
    /// Seeded 3x3 conv + ReLU stages with He-uniform weights.
    pub fn toy_vgg(cfg: &ToyVggConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut c_in = 3;
        let n = cfg.stage_depths.len();
        let mut stages = Vec::with_capacity(n);
        for (i, &c_out) in cfg.stage_depths.iter().enumerate() {
            let bound = (6.0 / (c_in * 9) as f64).sqrt();
            let weight = Tensor::from_fn(&[c_out, c_in, 3, 3], |_| rng.random_range(-bound..bound))?;
            let bias = Tensor::from_fn(&[c_out], |_| rng.random_range(-0.05..0.05))?;
            stages.push(Stage {
                name: format!("conv{}", i + 1),
                weight,
                bias,
                activation: Activation::Relu,
                downsample: if i + 1 < n { 2 } else { 1 },
            });
            c_in = c_out;
        }
        let b = Self {
            id: format!("toyvgg-s{}-{}", cfg.seed, cfg.stage_depths.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")),
            input_width: cfg.input_width,
            input_height: cfg.input_height,
            taps: (0..n).collect(),
            stages,
        };
        b.validate()?;
        Ok(b)
    }

    /// A single 1x1 identity convolution: the hypercolumn is the input.
    pub fn identity(channels: usize, width: usize, height: usize) -> Self {
        let weight = Tensor::from_fn(&[channels, channels, 1, 1], |i| (i[0] == i[1]) as u8 as f64)
            .expect("finite");
        Self {
            id: format!("identity-{channels}"),
            input_width: width,
            input_height: height,
            stages: vec![Stage {
                name: "identity".into(),
                weight,
                bias: Tensor::zeros(&[channels]),
                activation: Activation::Identity,
                downsample: 1,
            }],
            taps: vec![0],
        }
    }

    pub fn in_channels(&self) -> usize {
        self.stages[0].in_channels()
    }

    /// Cumulative downsample factor at each stage's output (before its own pool).
    pub fn stage_scales(&self) -> Vec<usize> {
        let mut scale = 1;
        self.stages
            .iter()
            .map(|s| {
                let here = scale;
                scale *= s.downsample;
                here
            })
            .collect()
    }

    /// `(tap name, depth)` in tap order.
    pub fn tap_depths(&self) -> Vec<(String, usize)> {
        self.taps
            .iter()
            .map(|&i| (self.stages[i].name.clone(), self.stages[i].out_channels()))
            .collect()
    }

    pub fn hypercolumn_depth(&self) -> usize {
        self.tap_depths().iter().map(|(_, d)| d).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() || self.taps.is_empty() {
            return Err(Error::arg("backbone needs at least one stage and one tap"));
        }
        if self.input_width == 0 || self.input_height == 0 {
            return Err(Error::arg("backbone input extent is zero"));
        }
        let mut c = self.stages[0].in_channels();
        for s in &self.stages {
            let ws = s.weight.shape();
            if ws.len() != 4 || ws[1] != c || ws[2] != ws[3] || ws[2] % 2 == 0 {
                return Err(Error::arg(format!(
                    "stage {}: weight shape {ws:?} incompatible with {c} input channels",
                    s.name
                )));
            }
            if s.bias.shape() != [ws[0]] {
                return Err(Error::arg(format!("stage {}: bias shape {:?}", s.name, s.bias.shape())));
            }
            if !matches!(s.downsample, 1 | 2) {
                return Err(Error::arg(format!("stage {}: downsample {}", s.name, s.downsample)));
            }
            c = ws[0];
        }
        if self.taps.windows(2).any(|w| w[0] >= w[1]) || *self.taps.last().unwrap() >= self.stages.len() {
            return Err(Error::arg(format!("invalid tap list {:?}", self.taps)));
        }
        let scales = self.stage_scales();
        let last = *self.taps.last().unwrap();
        for (i, &s) in scales.iter().enumerate().take(last + 1) {
            if self.input_width % s != 0 || self.input_height % s != 0 {
                return Err(Error::arg(format!(
                    "stage {i}: input {}x{} not divisible by scale {s}",
                    self.input_width, self.input_height
                )));
            }
        }
        Ok(())
    }

    /// Raw tap outputs at their native (downsampled) resolution.
    pub fn forward_taps(&self, tile: &Tensor) -> Result<Vec<Tensor>> {
        let expect = [self.in_channels(), self.input_width, self.input_height];
        if tile.shape() != expect {
            return Err(Error::arg(format!(
                "tile shape {:?} does not match backbone input {expect:?}",
                tile.shape()
            )));
        }
        let (mut w, mut h) = (self.input_width, self.input_height);
        let mut cur = tile.data().to_vec();
        let mut out = Vec::with_capacity(self.taps.len());
        let last = *self.taps.last().unwrap();
        for (i, s) in self.stages.iter().enumerate().take(last + 1) {
            let g = ConvGeom {
                c_in: s.in_channels(),
                c_out: s.out_channels(),
                k: s.kernel(),
                dilation: 1,
                w,
                h,
            };
            let mut next = vec![0.0; g.c_out * w * h];
            g.forward(&cur, s.weight.data(), s.bias.data(), &mut next);
            if s.activation == Activation::Relu {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            if self.taps.contains(&i) {
                out.push(Tensor::new(vec![g.c_out, w, h], next.clone())?);
            }
            cur = if s.downsample == 2 {
                let pooled = avg_pool2(&next, g.c_out, w, h);
                w /= 2;
                h /= 2;
                pooled
            } else {
                next
            };
        }
        Ok(out)
    }

    /// Tap outputs nearest-upsampled to the tile resolution, one tensor per tap.
    pub fn hypercolumn_layers(&self, tile: &Tensor) -> Result<Vec<Tensor>> {
        self.forward_taps(tile)?
            .into_iter()
            .map(|t| resize2d(&t, self.input_width, self.input_height, ResizeMethod::Nearest))
            .collect()
    }

    /// Depth-concatenated hypercolumn `[sum depths, w_M, h_M]`.
    pub fn hypercolumn(&self, tile: &Tensor) -> Result<Tensor> {
        let layers = self.hypercolumn_layers(tile)?;
        let refs: Vec<&Tensor> = layers.iter().collect();
        Tensor::concat(&refs)
    }

    /// Writes `backbone.json` plus one container per stage tensor.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut stages = Vec::new();
        for (i, s) in self.stages.iter().enumerate() {
            let weights = format!("stage{i:02}_weight.hseg");
            let bias = format!("stage{i:02}_bias.hseg");
            s.weight.save(dir.join(&weights))?;
            s.bias.save(dir.join(&bias))?;
            stages.push(StageManifest {
                name: s.name.clone(),
                in_channels: s.in_channels(),
                out_channels: s.out_channels(),
                kernel: s.kernel(),
                activation: s.activation,
                downsample: s.downsample,
                weights,
                bias,
            });
        }
        let manifest = BackboneManifest {
            id: self.id.clone(),
            input_width: self.input_width,
            input_height: self.input_height,
            taps: self.taps.iter().map(|&i| self.stages[i].name.clone()).collect(),
            stages,
        };
        let path = dir.join("backbone.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("backbone.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest = BackboneManifest::parse(&text)?;
        let mut stages = Vec::new();
        for s in &manifest.stages {
            stages.push(Stage {
                name: s.name.clone(),
                weight: Tensor::load(dir.join(&s.weights))?,
                bias: Tensor::load(dir.join(&s.bias))?,
                activation: s.activation,
                downsample: s.downsample,
            });
        }
        manifest.assemble(stages)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageManifest {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub activation: Activation,
    pub downsample: usize,
    pub weights: String,
    pub bias: String,
}

/// JSON manifest describing a backbone stored as tensor containers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneManifest {
    pub id: String,
    pub input_width: usize,
    pub input_height: usize,
    pub stages: Vec<StageManifest>,
    pub taps: Vec<String>,
}

impl BackboneManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        for s in &m.stages {
            if s.weights.contains(['/', '\\']) || s.bias.contains(['/', '\\']) {
                return Err(Error::format("backbone manifest", format!("stage {}: file names must be bare", s.name)));
            }
        }
        Ok(m)
    }

    /// Resolves tap names and validates shapes against the loaded tensors.
    pub fn assemble(&self, stages: Vec<Stage>) -> Result<Backbone> {
        for (m, s) in self.stages.iter().zip(&stages) {
            if s.weight.shape() != [m.out_channels, m.in_channels, m.kernel, m.kernel] {
                return Err(Error::format(
                    "backbone manifest",
                    format!("stage {}: weight shape {:?} disagrees with manifest", m.name, s.weight.shape()),
                ));
            }
        }
        let taps = self
            .taps
            .iter()
            .map(|t| {
                self.stages
                    .iter()
                    .position(|s| &s.name == t)
                    .ok_or_else(|| Error::format("backbone manifest", format!("unknown tap {t}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let b = Backbone {
            id: self.id.clone(),
            input_width: self.input_width,
            input_height: self.input_height,
            stages,
            taps,
        };
        b.validate()?;
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |i| ((i[0] * 7 + i[1] * 3 + i[2] * 5) % 11) as f64 / 10.0).unwrap()
    }

    #[test]
    fn toy_vgg_depths_and_determinism() {
        let cfg = ToyVggConfig { stage_depths: vec![8, 16, 32], ..Default::default() };
        let b = Backbone::toy_vgg(&cfg).unwrap();
        assert_eq!(b.hypercolumn_depth(), 56);
        let tile = ramp(&[3, 32, 32]);
        let h = b.hypercolumn(&tile).unwrap();
        assert_eq!(h.shape(), &[56, 32, 32]);
        assert_eq!(Backbone::toy_vgg(&cfg).unwrap().hypercolumn(&tile).unwrap(), h);
    }

    #[test]
    fn identity_backbone_is_identity() {
        let b = Backbone::identity(3, 8, 6);
        let tile = ramp(&[3, 8, 6]);
        assert_eq!(b.hypercolumn(&tile).unwrap(), tile);
        assert!(b.hypercolumn(&ramp(&[3, 8, 7])).is_err());
    }

    #[test]
    fn downsampled_tap_is_block_replicated() {
        let b = Backbone::toy_vgg(&ToyVggConfig::default()).unwrap();
        let layers = b.hypercolumn_layers(&ramp(&[3, 32, 32])).unwrap();
        // Tap 1 is at scale 2, tap 2 at scale 4.
        for (tap, s) in [(1usize, 2usize), (2, 4)] {
            let l = &layers[tap];
            for c in 0..l.shape()[0] {
                for x in 0..32 {
                    for y in 0..32 {
                        assert_eq!(l.get(&[c, x, y]), l.get(&[c, x - x % s, y - y % s]));
                    }
                }
            }
        }
    }

    #[test]
    fn indivisible_input_rejected() {
        let cfg = ToyVggConfig { input_width: 30, ..Default::default() };
        assert!(Backbone::toy_vgg(&cfg).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let b = Backbone::toy_vgg(&ToyVggConfig::default()).unwrap();
        b.save(dir.path()).unwrap();
        assert_eq!(Backbone::load(dir.path()).unwrap(), b);
    }

    #[test]
    fn manifest_rejects_unknown_tap_and_paths() {
        let text = r#"{"id":"x","input_width":4,"input_height":4,"stages":[],"taps":["nope"]}"#;
        let m = BackboneManifest::parse(text).unwrap();
        assert!(m.assemble(vec![]).is_err());
        let bad = r#"{"id":"x","input_width":4,"input_height":4,"stages":[{"name":"a","in_channels":1,"out_channels":1,"kernel":1,"activation":"relu","downsample":1,"weights":"../w","bias":"b"}],"taps":["a"]}"#;
        assert!(BackboneManifest::parse(bad).is_err());
    }
}
