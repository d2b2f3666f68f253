//! Training objective and evaluation metrics.
//!
//! Per sample, with `M` soft maps `A_m` against ground truth `Y`:
//!
//! ```text
//! total = min_m (J(Y, A_m) + IC(A_m)) + sum_m lambda_m J(Y, A_m) + sum_m PHL(Y, A_m)
//! ```
//!
//! `J` is the soft Jaccard loss, `IC` the click-agreement loss,
//! `lambda_m = 0.01 * 2^(M - m)` the ranked diversity weights and `PHL` the
//! pseudo-Huber penalty summed over the outer contour of the binarised map.
//! Contour selection is piecewise constant in the network output and is
//! treated as fixed when differentiating.

mod contour;
mod metrics;

pub use contour::{extract_boundary, label_components, Contour};
pub use metrics::{boundary_raster, dilate3x3, iou, mbiou, miou, ItemError, MetricReport, PerImageMetric};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fixed-order pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

fn check_congruent(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::arg(format!(
            "maps {:?} and {:?} are not congruent",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `1 - sum(min(A, B)) / sum(max(A, B))`, evaluated as `(max - min) / max`;
/// 0 when both maps are all zero.
pub fn jaccard_loss(a: &Tensor, b: &Tensor) -> Result<f64> {
    check_congruent(a, b)?;
    let (num, den) = jaccard_parts(a.data(), b.data());
    Ok(if den == 0.0 { 0.0 } else { (den - num) / den })
}

fn jaccard_parts(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mins: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.min(*y)).collect();
    let maxs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.max(*y)).collect();
    (pairwise_sum(&mins), pairwise_sum(&maxs))
}

/// Gradient of `J(y, a)` with respect to `a`. Where `a == y` the min and max
/// branches share the derivative equally.
fn jaccard_grad(y: &[f64], a: &[f64], out: &mut [f64], scale: f64) {
    let (num, den) = jaccard_parts(y, a);
    if den == 0.0 {
        return;
    }
    let inv = 1.0 / (den * den);
    for ((o, &yv), &av) in out.iter_mut().zip(y).zip(a) {
        let (dn, dd) = if av < yv {
            (1.0, 0.0)
        } else if av > yv {
            (0.0, 1.0)
        } else {
            (0.5, 0.5)
        };
        *o += scale * -(dn * den - num * dd) * inv;
    }
}

/// `||S_p . (S_p - A)||_1 + ||S_n . (S_n - (1 - A))||_1`.
pub fn interactive_context_loss(sp: &Tensor, sn: &Tensor, a: &Tensor) -> Result<f64> {
    check_congruent(sp, a)?;
    check_congruent(sn, a)?;
    let terms: Vec<f64> = sp
        .data()
        .iter()
        .zip(sn.data())
        .zip(a.data())
        .map(|((&p, &n), &av)| p * (p - av).abs() + n * (n - (1.0 - av)).abs())
        .collect();
    Ok(pairwise_sum(&terms))
}

fn ic_grad(sp: &[f64], sn: &[f64], out: &mut [f64], scale: f64) {
    // On A in [0, 1] the loss is sum_p S_p (1 - A) + sum_p S_n A.
    for ((o, &p), &n) in out.iter_mut().zip(sp).zip(sn) {
        *o += scale * (n - p);
    }
}

/// `delta^2 (sqrt(1 + (r / delta)^2) - 1)`.
pub fn pseudo_huber(r: f64, delta: f64) -> f64 {
    let t = r / delta;
    // Written as delta^2 t^2 / (sqrt(1 + t^2) + 1) to avoid cancellation.
    delta * delta * t * t / ((1.0 + t * t).sqrt() + 1.0)
}

fn pseudo_huber_grad(r: f64, delta: f64) -> f64 {
    let t = r / delta;
    r / (1.0 + t * t).sqrt()
}

/// Pseudo-Huber penalty summed over the outer contour of `f >= 1/2`.
pub fn boundary_phl(y: &Tensor, f: &Tensor, delta: f64) -> Result<f64> {
    check_congruent(y, f)?;
    if !(delta > 0.0) {
        return Err(Error::arg(format!("delta must be positive, got {delta}")));
    }
    let h = f.shape()[1];
    let terms: Vec<f64> = extract_boundary(f)
        .unique_points()
        .iter()
        .map(|p| pseudo_huber(y.data()[p.x * h + p.y] - f.data()[p.x * h + p.y], delta))
        .collect();
    Ok(pairwise_sum(&terms))
}

fn boundary_phl_with_grad(y: &[f64], f: &Tensor, delta: f64, out: &mut [f64]) -> f64 {
    let h = f.shape()[1];
    let mut terms = Vec::new();
    for p in extract_boundary(f).unique_points() {
        let i = p.x * h + p.y;
        let r = y[i] - f.data()[i];
        terms.push(pseudo_huber(r, delta));
        // d/dF of phl(Y - F).
        out[i] -= pseudo_huber_grad(r, delta);
    }
    pairwise_sum(&terms)
}

/// `lambda_m = 0.01 * 2^(M - m)` for `m = 1..=M`.
pub fn diversity_weights(m: usize) -> Vec<f64> {
    (1..=m).map(|i| 0.01 * 2f64.powi((m - i) as i32)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub jaccard_per_head: Vec<f64>,
    pub interactive_context_per_head: Vec<f64>,
    pub boundary_phl_per_head: Vec<f64>,
    pub diversity_weights: Vec<f64>,
    /// 1-based index of the head attaining the min term.
    pub min_head_index: usize,
    pub total: f64,
}

impl LossBreakdown {
    pub fn recompose(&self) -> f64 {
        let i = self.min_head_index - 1;
        let min_term = self.jaccard_per_head[i] + self.interactive_context_per_head[i];
        let diversity: f64 = self
            .diversity_weights
            .iter()
            .zip(&self.jaccard_per_head)
            .map(|(l, j)| l * j)
            .sum();
        let phl: f64 = self.boundary_phl_per_head.iter().sum();
        min_term + diversity + phl
    }
}

/// Click rasters consumed by the loss.
#[derive(Clone, Debug)]
pub struct ClickMasks {
    pub positive: Tensor,
    pub negative: Tensor,
}

impl ClickMasks {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            positive: Tensor::zeros(&[width, height]),
            negative: Tensor::zeros(&[width, height]),
        }
    }
}

/// Total loss of `M` soft maps (`[M, W, H]`) against a `[W, H]` ground truth.
pub fn total_loss(y: &Tensor, proposals: &Tensor, clicks: &ClickMasks, delta: f64) -> Result<LossBreakdown> {
    total_loss_impl(y, proposals, clicks, delta, None)
}

/// [`total_loss`] plus its gradient with respect to the soft maps.
pub fn total_loss_with_grad(
    y: &Tensor,
    proposals: &Tensor,
    clicks: &ClickMasks,
    delta: f64,
) -> Result<(LossBreakdown, Tensor)> {
    let mut grad = Tensor::zeros(proposals.shape());
    let b = total_loss_impl(y, proposals, clicks, delta, Some(&mut grad))?;
    Ok((b, grad))
}

fn total_loss_impl(
    y: &Tensor,
    proposals: &Tensor,
    clicks: &ClickMasks,
    delta: f64,
    mut grad: Option<&mut Tensor>,
) -> Result<LossBreakdown> {
    if proposals.rank() != 3 || y.rank() != 2 || proposals.shape()[1..] != *y.shape() {
        return Err(Error::arg(format!(
            "proposals {:?} do not match ground truth {:?}",
            proposals.shape(),
            y.shape()
        )));
    }
    check_congruent(&clicks.positive, y)?;
    check_congruent(&clicks.negative, y)?;
    if !(delta > 0.0) {
        return Err(Error::arg(format!("delta must be positive, got {delta}")));
    }
    let m = proposals.shape()[0];
    let lambdas = diversity_weights(m);
    let (mut jac, mut ic, mut phl) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
    let plane = y.len();
    let mut phl_grads = vec![0.0; if grad.is_some() { m * plane } else { 0 }];
    for head in 0..m {
        let a = proposals.slab(head);
        let a_t = Tensor::from_parts(y.shape().to_vec(), a.to_vec());
        let (num, den) = jaccard_parts(y.data(), a);
        jac.push(if den == 0.0 { 0.0 } else { (den - num) / den });
        ic.push(interactive_context_loss(&clicks.positive, &clicks.negative, &a_t)?);
        if grad.is_some() {
            phl.push(boundary_phl_with_grad(
                y.data(),
                &a_t,
                delta,
                &mut phl_grads[head * plane..(head + 1) * plane],
            ));
        } else {
            phl.push(boundary_phl(y, &a_t, delta)?);
        }
    }
    let mut best = 0;
    for head in 1..m {
        if jac[head] + ic[head] < jac[best] + ic[best] {
            best = head;
        }
    }
    let mut b = LossBreakdown {
        jaccard_per_head: jac,
        interactive_context_per_head: ic,
        boundary_phl_per_head: phl,
        diversity_weights: lambdas,
        min_head_index: best + 1,
        total: 0.0,
    };
    b.total = b.recompose();
    if !b.total.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss: {b:?}")));
    }
    if let Some(g) = grad.as_deref_mut() {
        let (sp, sn) = (clicks.positive.data(), clicks.negative.data());
        for head in 0..m {
            let a = &proposals.slab(head).to_vec();
            let out = g.slab_mut(head);
            let jscale = b.diversity_weights[head] + if head == best { 1.0 } else { 0.0 };
            jaccard_grad(y.data(), a, out, jscale);
            if head == best {
                ic_grad(sp, sn, out, 1.0);
            }
            for (o, p) in out.iter_mut().zip(&phl_grads[head * plane..(head + 1) * plane]) {
                *o += p;
            }
        }
    }
    Ok(b)
}
