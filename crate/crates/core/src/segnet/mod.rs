//! Context aggregation network: full-resolution dilated convolutions with the
//! click/frame context concatenated onto every layer's input, ending in `M`
//! sigmoid heads.
//!
//! Layer 1 is a 1×1 projection of `concat(features, context)`. Layers
//! `2..L` are 3×3 convolutions over `concat(previous, context)` with the
//! layer's dilation as zero padding. Hidden layers use ReLU.

mod checkpoint;

pub use checkpoint::{LayerManifest, NetworkManifest, NETWORK_MANIFEST};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conv::ConvGeom;
use crate::error::{Error, Result};
use crate::interaction::ClickState;
use crate::losses::{interactive_context_loss, total_loss_with_grad, ClickMasks, LossBreakdown};
use crate::tensor::Tensor;

/// Channels produced by [`ContextBundle::new`].
pub const CONTEXT_DEPTH: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub feature_depth: usize,
    pub context_depth: usize,
    pub hidden_depth: usize,
    pub num_layers: usize,
    /// One entry per layer. The first layer is 1×1 so its entry is unused.
    pub dilations: Vec<usize>,
    pub num_heads: usize,
}

impl NetConfig {
    /// Small configuration used for desk-scale training and tests.
    pub fn desk(feature_depth: usize) -> Self {
        Self {
            feature_depth,
            context_depth: CONTEXT_DEPTH,
            hidden_depth: 12,
            num_layers: 6,
            dilations: vec![1, 1, 2, 4, 8, 1],
            num_heads: 3,
        }
    }

    /// Full-size configuration over 736 compressed VGG-19 features.
    pub fn full_size() -> Self {
        Self {
            feature_depth: 736,
            context_depth: CONTEXT_DEPTH,
            hidden_depth: 70,
            num_layers: 10,
            dilations: vec![1, 1, 2, 4, 8, 16, 32, 64, 128, 1],
            num_heads: 6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers < 2 {
            return Err(Error::arg("at least two layers are required"));
        }
        if self.dilations.len() != self.num_layers {
            return Err(Error::arg(format!(
                "{} dilations for {} layers",
                self.dilations.len(),
                self.num_layers
            )));
        }
        if self.dilations.contains(&0) {
            return Err(Error::arg("dilations must be positive"));
        }
        for (name, v) in [
            ("feature_depth", self.feature_depth),
            ("context_depth", self.context_depth),
            ("hidden_depth", self.hidden_depth),
            ("num_heads", self.num_heads),
        ] {
            if v == 0 {
                return Err(Error::arg(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// `(input depth, output depth, kernel, dilation)` per layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize, usize, usize)> {
        (0..self.num_layers)
            .map(|l| {
                let c_in = if l == 0 {
                    self.feature_depth + self.context_depth
                } else {
                    self.hidden_depth + self.context_depth
                };
                let c_out = if l + 1 == self.num_layers { self.num_heads } else { self.hidden_depth };
                let k = if l == 0 { 1 } else { 3 };
                (c_in, c_out, k, self.dilations[l])
            })
            .collect()
    }

    /// Half-width of the window an output pixel can see, counting the
    /// context injected at layer 2.
    pub fn receptive_radius(&self) -> usize {
        self.dilations[1..].iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    /// `[c_out, c_in, k, k]`.
    pub weight: Tensor,
    /// `[c_out]`.
    pub bias: Tensor,
}

/// Weights and biases of every layer. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub config: NetConfig,
    pub layers: Vec<LayerParams>,
}

impl NetworkParams {
    pub fn zeros(config: &NetConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(c_in, c_out, k, _)| LayerParams {
                weight: Tensor::zeros(&[c_out, c_in, k, k]),
                bias: Tensor::zeros(&[c_out]),
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            layers,
        })
    }

    /// He-uniform weights (`±sqrt(6 / fan_in)`), zero biases.
    pub fn init(config: &NetConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut p.layers {
            let s = layer.weight.shape();
            let bound = (6.0 / (s[1] * s[2] * s[3]) as f64).sqrt();
            for v in layer.weight.data_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(p)
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            v.extend_from_slice(l.weight.data());
            v.extend_from_slice(l.bias.data());
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_parameters() {
            return Err(Error::arg(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_parameters()
            )));
        }
        if let Some(bad) = flat.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("parameter {bad} is not finite")));
        }
        let mut at = 0;
        for l in &mut self.layers {
            for t in [&mut l.weight, &mut l.bias] {
                let n = t.len();
                t.data_mut().copy_from_slice(&flat[at..at + n]);
                at += n;
            }
        }
        Ok(())
    }

    pub fn get(&self, index: usize) -> f64 {
        self.to_flat()[index]
    }

    pub fn set(&mut self, index: usize, value: f64) -> Result<()> {
        let mut flat = self.to_flat();
        flat[index] = value;
        self.set_flat(&flat)
    }

    fn check_matches_config(&self) -> Result<()> {
        self.config.validate()?;
        let shapes = self.config.layer_shapes();
        if shapes.len() != self.layers.len() {
            return Err(Error::arg(format!(
                "{} layers for a {}-layer config",
                self.layers.len(),
                shapes.len()
            )));
        }
        for (i, ((c_in, c_out, k, _), l)) in shapes.iter().zip(&self.layers).enumerate() {
            if l.weight.shape() != [*c_out, *c_in, *k, *k] || l.bias.shape() != [*c_out] {
                return Err(Error::arg(format!(
                    "layer {}: weight {:?} / bias {:?} do not match config",
                    i + 1,
                    l.weight.shape(),
                    l.bias.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Per-pixel context: current frame (3), previous frame (3), positive and
/// negative click rasters, then their normalised distance maps.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextBundle {
    /// `[context_depth, W, H]`.
    pub tensor: Tensor,
}

impl ContextBundle {
    /// Without a previous frame the current one is used twice.
    pub fn new(frame: &Tensor, previous: Option<&Tensor>, clicks: &ClickState) -> Result<Self> {
        if frame.rank() != 3 || frame.shape()[0] != 3 {
            return Err(Error::arg(format!("frame {:?} is not [3, W, H]", frame.shape())));
        }
        let (w, h) = (frame.shape()[1], frame.shape()[2]);
        let prev = previous.unwrap_or(frame);
        if prev.shape() != frame.shape() {
            return Err(Error::arg(format!(
                "previous frame {:?} differs from current {:?}",
                prev.shape(),
                frame.shape()
            )));
        }
        if (clicks.width(), clicks.height()) != (w, h) {
            return Err(Error::arg(format!(
                "clicks are for {}x{}, frame is {w}x{h}",
                clicks.width(),
                clicks.height()
            )));
        }
        let (bp, bn) = clicks.masks();
        let (dp, dn) = clicks.normalized_distance_maps();
        let planes = [&bp, &bn, &dp, &dn].map(|t| t.clone().reshape(vec![1, w, h]).expect("plane"));
        let tensor = Tensor::concat(&[frame, prev, &planes[0], &planes[1], &planes[2], &planes[3]])?;
        Ok(Self { tensor })
    }

    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        if tensor.rank() != 3 {
            return Err(Error::arg(format!("context {:?} is not [C, W, H]", tensor.shape())));
        }
        Ok(Self { tensor })
    }

    pub fn depth(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn extents(&self) -> (usize, usize) {
        (self.tensor.shape()[1], self.tensor.shape()[2])
    }
}

/// `M` soft masks in head order.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationProposals {
    /// `[M, W, H]`, values in `[0, 1]`.
    pub soft_maps: Tensor,
}

impl SegmentationProposals {
    pub fn num_heads(&self) -> usize {
        self.soft_maps.shape()[0]
    }

    /// Soft map of head `m` (1-based) as `[W, H]`.
    pub fn head(&self, m: usize) -> Result<Tensor> {
        if m == 0 || m > self.num_heads() {
            return Err(Error::arg(format!("head {m} outside 1..={}", self.num_heads())));
        }
        Tensor::new(self.soft_maps.shape()[1..].to_vec(), self.soft_maps.slab(m - 1).to_vec())
    }

    pub fn binary_masks(&self) -> Tensor {
        self.soft_maps.map(|v| if v >= 0.5 { 1.0 } else { 0.0 }).expect("finite")
    }

    /// Presentation order: head index order.
    pub fn rank_heads(&self) -> Vec<usize> {
        (1..=self.num_heads()).collect()
    }

    /// Heads sorted by click-agreement loss, ascending; ties keep head order.
    pub fn rank_by_click_agreement(&self, clicks: &ClickMasks) -> Result<Vec<usize>> {
        let mut scored = Vec::with_capacity(self.num_heads());
        for m in 1..=self.num_heads() {
            scored.push((interactive_context_loss(&clicks.positive, &clicks.negative, &self.head(m)?)?, m));
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(scored.into_iter().map(|(_, m)| m).collect())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ForwardOptions {
    /// Skip the hidden ReLUs (for receptive-field probing).
    pub linear: bool,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Input of each layer, `[c_in, W, H]` flattened.
    inputs: Vec<Vec<f64>>,
    /// Activated output of each layer, `[c_out, W, H]`.
    pub layer_outputs: Vec<Tensor>,
    pub proposals: SegmentationProposals,
    linear: bool,
}

fn check_inputs(params: &NetworkParams, feats: &Tensor, ctx: &ContextBundle) -> Result<(usize, usize)> {
    params.check_matches_config()?;
    let cfg = &params.config;
    if feats.rank() != 3 || feats.shape()[0] != cfg.feature_depth {
        return Err(Error::arg(format!(
            "features {:?} are not [{}, W, H]",
            feats.shape(),
            cfg.feature_depth
        )));
    }
    if ctx.depth() != cfg.context_depth {
        return Err(Error::arg(format!(
            "context depth {} but config expects {}",
            ctx.depth(),
            cfg.context_depth
        )));
    }
    let (w, h) = ctx.extents();
    if (feats.shape()[1], feats.shape()[2]) != (w, h) {
        return Err(Error::arg(format!(
            "features are {}x{}, context is {w}x{h}",
            feats.shape()[1],
            feats.shape()[2]
        )));
    }
    Ok((w, h))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn forward(params: &NetworkParams, feats: &Tensor, ctx: &ContextBundle) -> Result<SegmentationProposals> {
    Ok(forward_trace(params, feats, ctx, ForwardOptions::default())?.proposals)
}

pub fn forward_trace(
    params: &NetworkParams,
    feats: &Tensor,
    ctx: &ContextBundle,
    opts: ForwardOptions,
) -> Result<ForwardTrace> {
    let (w, h) = check_inputs(params, feats, ctx)?;
    let shapes = params.config.layer_shapes();
    let last = shapes.len() - 1;
    let ctx_data = ctx.tensor.data();
    let mut inputs = Vec::with_capacity(shapes.len());
    let mut outputs: Vec<Tensor> = Vec::with_capacity(shapes.len());
    for (l, &(c_in, c_out, k, dilation)) in shapes.iter().enumerate() {
        let mut input = Vec::with_capacity(c_in * w * h);
        input.extend_from_slice(if l == 0 { feats.data() } else { outputs[l - 1].data() });
        input.extend_from_slice(ctx_data);
        let geom = ConvGeom {
            c_in,
            c_out,
            k,
            dilation,
            w,
            h,
        };
        let mut out = vec![0.0; c_out * w * h];
        let lp = &params.layers[l];
        geom.forward(&input, lp.weight.data(), lp.bias.data(), &mut out);
        if let Some(bad) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "layer {} produced a non-finite value at channel {}",
                l + 1,
                bad / (w * h)
            )));
        }
        if l == last {
            out.iter_mut().for_each(|v| *v = sigmoid(*v));
        } else if !opts.linear {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        inputs.push(input);
        outputs.push(Tensor::from_parts(vec![c_out, w, h], out));
    }
    let proposals = SegmentationProposals {
        soft_maps: outputs[last].clone(),
    };
    Ok(ForwardTrace {
        inputs,
        layer_outputs: outputs,
        proposals,
        linear: opts.linear,
    })
}

/// Parameter gradients given `dLoss / d soft_maps`.
pub fn backward(params: &NetworkParams, trace: &ForwardTrace, grad_maps: &Tensor) -> Result<NetworkParams> {
    let out_shape = trace.proposals.soft_maps.shape();
    if grad_maps.shape() != out_shape {
        return Err(Error::arg(format!(
            "gradient {:?} does not match proposals {:?}",
            grad_maps.shape(),
            out_shape
        )));
    }
    let (w, h) = (out_shape[1], out_shape[2]);
    let plane = w * h;
    let shapes = params.config.layer_shapes();
    let mut grads = NetworkParams::zeros(&params.config)?;
    // Gradient w.r.t. the pre-activation of the current layer.
    let mut g: Vec<f64> = grad_maps
        .data()
        .iter()
        .zip(trace.proposals.soft_maps.data())
        .map(|(&gv, &s)| gv * s * (1.0 - s))
        .collect();
    for l in (0..shapes.len()).rev() {
        let (c_in, c_out, k, dilation) = shapes[l];
        let geom = ConvGeom {
            c_in,
            c_out,
            k,
            dilation,
            w,
            h,
        };
        let mut grad_in = if l > 0 { vec![0.0; c_in * plane] } else { Vec::new() };
        let LayerParams { weight, bias } = &mut grads.layers[l];
        geom.backward(
            &trace.inputs[l],
            params.layers[l].weight.data(),
            &g,
            if l > 0 { Some(&mut grad_in) } else { None },
            weight.data_mut(),
            bias.data_mut(),
        );
        if l == 0 {
            break;
        }
        // The first hidden_depth channels of the input are the previous layer's output.
        let prev = trace.layer_outputs[l - 1].data();
        g = grad_in[..prev.len()]
            .iter()
            .zip(prev)
            .map(|(&gv, &a)| if trace.linear || a > 0.0 { gv } else { 0.0 })
            .collect();
    }
    Ok(grads)
}

/// Forward, loss and parameter gradients for one sample.
pub fn loss_and_gradients(
    params: &NetworkParams,
    feats: &Tensor,
    ctx: &ContextBundle,
    gt: &Tensor,
    clicks: &ClickMasks,
    delta: f64,
) -> Result<(LossBreakdown, NetworkParams, SegmentationProposals)> {
    let trace = forward_trace(params, feats, ctx, ForwardOptions::default())?;
    let (breakdown, grad_maps) = total_loss_with_grad(gt, &trace.proposals.soft_maps, clicks, delta)?;
    let grads = backward(params, &trace, &grad_maps)?;
    Ok((breakdown, grads, trace.proposals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interaction::{Point, Polarity};
    use crate::losses::total_loss;

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(0.0..1.0)).unwrap()
    }

    fn setup(w: usize, h: usize, seed: u64) -> (NetworkParams, Tensor, ContextBundle) {
        let cfg = NetConfig::desk(16);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = NetworkParams::init(&cfg, seed).unwrap();
        let feats = rand_tensor(&[16, w, h], &mut rng);
        let ctx = ContextBundle::from_tensor(rand_tensor(&[CONTEXT_DEPTH, w, h], &mut rng)).unwrap();
        (params, feats, ctx)
    }

    #[test]
    fn desk_output_shape() {
        let (p, f, c) = setup(32, 32, 1);
        let out = forward(&p, &f, &c).unwrap();
        assert_eq!(out.soft_maps.shape(), [3, 32, 32]);
        assert!(out.soft_maps.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(out.binary_masks().data().iter().filter(|&&v| v != 0.0 && v != 1.0).count(), 0);
    }

    #[test]
    fn zero_params_give_one_half() {
        let (_, f, c) = setup(9, 7, 2);
        let p = NetworkParams::zeros(&NetConfig::desk(16)).unwrap();
        let out = forward(&p, &f, &c).unwrap();
        assert!(out.soft_maps.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn full_size_layer_depths() {
        let cfg = NetConfig::full_size();
        let shapes = cfg.layer_shapes();
        let ins: Vec<usize> = shapes.iter().map(|s| s.0).collect();
        let outs: Vec<usize> = shapes.iter().map(|s| s.1).collect();
        assert_eq!(ins, [746, 80, 80, 80, 80, 80, 80, 80, 80, 80]);
        assert_eq!(outs, [70, 70, 70, 70, 70, 70, 70, 70, 70, 6]);
    }

    #[test]
    fn every_layer_keeps_extents() {
        for (w, h) in [(5, 3), (17, 32), (1, 1), (40, 9), (33, 33)] {
            let (p, f, c) = setup(w, h, 3);
            let trace = forward_trace(&p, &f, &c, ForwardOptions::default()).unwrap();
            for out in &trace.layer_outputs {
                assert_eq!(&out.shape()[1..], [w, h]);
            }
        }
    }

    #[test]
    fn impulse_reaches_exactly_the_receptive_window() {
        let (p, f, c) = setup(41, 41, 4);
        let r = p.config.receptive_radius();
        assert_eq!(r, 1 + 2 + 4 + 8 + 1);
        let opts = ForwardOptions { linear: true };
        let base = forward_trace(&p, &f, &c, opts).unwrap();
        let mut t = c.tensor.clone();
        let centre = t.offset(&[7, 20, 20]);
        t.data_mut()[centre] += 1.0;
        let poked = forward_trace(&p, &f, &ContextBundle::from_tensor(t).unwrap(), opts).unwrap();
        let (a, b) = (base.proposals.soft_maps, poked.proposals.soft_maps);
        for m in 0..3 {
            for x in 0..41usize {
                for y in 0..41usize {
                    let inside = x.abs_diff(20) <= r && y.abs_diff(20) <= r;
                    let changed = a.get(&[m, x, y]) != b.get(&[m, x, y]);
                    assert_eq!(inside, changed, "head {m} ({x}, {y})");
                }
            }
        }
    }

    #[test]
    fn deterministic() {
        let (p, f, c) = setup(12, 10, 5);
        assert_eq!(forward(&p, &f, &c).unwrap(), forward(&p, &f, &c).unwrap());
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let (p, f, c) = setup(8, 8, 6);
        assert!(forward(&p, &Tensor::zeros(&[16, 8, 7]), &c).is_err());
        assert!(forward(&p, &Tensor::zeros(&[15, 8, 8]), &c).is_err());
        assert!(forward(&p, &f, &ContextBundle::from_tensor(Tensor::zeros(&[9, 8, 8])).unwrap()).is_err());
    }

    fn gt_disk(w: usize, h: usize) -> Tensor {
        Tensor::from_fn(&[w, h], |i| {
            let (dx, dy) = (i[0] as f64 - w as f64 / 2.0, i[1] as f64 - h as f64 / 2.0);
            (dx * dx + dy * dy <= 16.0) as u8 as f64
        })
        .unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (w, h) = (12, 12);
        let (p, f, c) = setup(w, h, 7);
        let gt = gt_disk(w, h);
        let mut clicks = ClickMasks::empty(w, h);
        clicks.positive.data_mut()[6 * h + 6] = 1.0;
        clicks.negative.data_mut()[1 * h + 1] = 1.0;
        let (_, grads, _) = loss_and_gradients(&p, &f, &c, &gt, &clicks, 1.0).unwrap();
        let flat = grads.to_flat();
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let step = 1e-5;
        let mut checked = 0;
        while checked < 25 {
            let i = rng.random_range(0..p.num_parameters());
            let eval = |v: f64| {
                let mut q = p.clone();
                q.set(i, v).unwrap();
                let out = forward(&q, &f, &c).unwrap();
                total_loss(&gt, &out.soft_maps, &clicks, 1.0).unwrap()
            };
            let x = p.get(i);
            let (hi, lo) = (eval(x + step), eval(x - step));
            if hi.min_head_index != lo.min_head_index {
                continue;
            }
            let fd = (hi.total - lo.total) / (2.0 * step);
            let err = (fd - flat[i]).abs() / fd.abs().max(flat[i].abs()).max(1e-8);
            assert!(err < 1e-4, "param {i}: fd {fd} analytic {}", flat[i]);
            checked += 1;
        }
    }

    #[test]
    fn perfect_prediction_has_zero_gradient() {
        // Zero weights and a large final bias saturate to exactly 1.
        let cfg = NetConfig::desk(16);
        let mut p = NetworkParams::zeros(&cfg).unwrap();
        let last = p.layers.len() - 1;
        p.layers[last].bias.data_mut().fill(800.0);
        let (_, f, c) = setup(6, 6, 8);
        let gt = Tensor::filled(&[6, 6], 1.0);
        let (b, grads, _) = loss_and_gradients(&p, &f, &c, &gt, &ClickMasks::empty(6, 6), 1.0).unwrap();
        assert_eq!(b.total, 0.0);
        assert!(grads.to_flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_is_linear_in_upstream_gradient() {
        let (p, f, c) = setup(10, 10, 9);
        let gt = gt_disk(10, 10);
        let trace = forward_trace(&p, &f, &c, ForwardOptions::default()).unwrap();
        let (_, gmap) = total_loss_with_grad(&gt, &trace.proposals.soft_maps, &ClickMasks::empty(10, 10), 1.0).unwrap();
        let one = backward(&p, &trace, &gmap).unwrap().to_flat();
        let two = backward(&p, &trace, &gmap.map(|v| 2.0 * v).unwrap()).unwrap().to_flat();
        for (a, b) in one.iter().zip(&two) {
            assert!((2.0 * a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn flat_round_trip() {
        let p = NetworkParams::init(&NetConfig::desk(4), 11).unwrap();
        let mut q = NetworkParams::zeros(&p.config).unwrap();
        q.set_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&[0.0]).is_err());
    }

    #[test]
    fn context_bundle_layout() {
        let frame = Tensor::from_fn(&[3, 5, 4], |i| (i[0] + i[1] + i[2]) as f64 / 20.0).unwrap();
        let mut clicks = ClickState::new(5, 4);
        clicks.insert(Point::new(1, 2), Polarity::Pos).unwrap();
        let ctx = ContextBundle::new(&frame, None, &clicks).unwrap();
        assert_eq!(ctx.tensor.shape(), [CONTEXT_DEPTH, 5, 4]);
        assert_eq!(&ctx.tensor.data()[..60], frame.data());
        assert_eq!(&ctx.tensor.data()[60..120], frame.data());
        assert_eq!(ctx.tensor.get(&[6, 1, 2]), 1.0);
        assert_eq!(ctx.tensor.get(&[8, 1, 2]), 0.0);
        assert!(ContextBundle::new(&frame, None, &ClickState::new(4, 4)).is_err());
    }

    #[test]
    fn click_agreement_ranking_matches_direct_sort() {
        let (p, f, c) = setup(8, 8, 12);
        let out = forward(&p, &f, &c).unwrap();
        let mut clicks = ClickMasks::empty(8, 8);
        clicks.positive.data_mut()[3 * 8 + 3] = 1.0;
        clicks.negative.data_mut()[0] = 1.0;
        let ranked = out.rank_by_click_agreement(&clicks).unwrap();
        let mut direct: Vec<(f64, usize)> = (1..=3)
            .map(|m| {
                let a = out.head(m).unwrap();
                (1.0 - a.get(&[3, 3]) + a.get(&[0, 0]), m)
            })
            .collect();
        direct.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert_eq!(ranked, direct.iter().map(|d| d.1).collect::<Vec<_>>());
        assert_eq!(out.rank_heads(), vec![1, 2, 3]);
    }
}
