//! Spatial resampling over the trailing `[width, height]` axes.
//!
//! Bilinear sampling uses the align-corners convention: output sample `i` of
//! `n_out` reads source coordinate `i * (n_in - 1) / (n_out - 1)`, so the
//! first and last samples coincide with the source corners. A single output
//! sample reads source coordinate 0. Nearest sampling reads
//! `floor(i * n_in / n_out)`, which is exact block replication for integer
//! upscale factors.

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeMethod {
    Nearest,
    Bilinear,
}

/// Per output sample: (lower source index, upper source index, upper weight).
fn taps(n_in: usize, n_out: usize, method: ResizeMethod) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| match method {
            ResizeMethod::Nearest => {
                let s = i * n_in / n_out;
                (s, s, 0.0)
            }
            ResizeMethod::Bilinear => {
                if n_out == 1 || n_in == 1 {
                    return (0, 0, 0.0);
                }
                let num = i * (n_in - 1);
                let den = n_out - 1;
                let lo = num / den;
                let rem = num % den;
                if rem == 0 {
                    (lo, lo, 0.0)
                } else {
                    (lo, lo + 1, rem as f64 / den as f64)
                }
            }
        })
        .collect()
}

/// Resamples the last two axes of `t` to `(out_w, out_h)`.
pub fn resize2d(t: &Tensor, out_w: usize, out_h: usize, method: ResizeMethod) -> Result<Tensor> {
    if t.rank() < 2 {
        return Err(Error::arg(format!(
            "resize2d needs at least 2 axes, got shape {:?}",
            t.shape()
        )));
    }
    if out_w == 0 || out_h == 0 {
        return Err(Error::arg(format!("zero resize target {out_w}x{out_h}")));
    }
    let r = t.rank();
    let (in_w, in_h) = (t.shape()[r - 2], t.shape()[r - 1]);
    if (in_w, in_h) == (out_w, out_h) {
        return Ok(t.clone());
    }
    let planes = t.len() / (in_w * in_h);
    let xt = taps(in_w, out_w, method);
    let yt = taps(in_h, out_h, method);
    let mut out = Vec::with_capacity(planes * out_w * out_h);
    let mut col = vec![0.0; in_h];
    for p in 0..planes {
        let src = &t.data()[p * in_w * in_h..(p + 1) * in_w * in_h];
        for &(x0, x1, wx) in &xt {
            let a = &src[x0 * in_h..(x0 + 1) * in_h];
            let b = &src[x1 * in_h..(x1 + 1) * in_h];
            if wx == 0.0 {
                col.copy_from_slice(a);
            } else {
                for ((c, &va), &vb) in col.iter_mut().zip(a).zip(b) {
                    *c = va * (1.0 - wx) + vb * wx;
                }
            }
            for &(y0, y1, wy) in &yt {
                out.push(if wy == 0.0 {
                    col[y0]
                } else {
                    col[y0] * (1.0 - wy) + col[y1] * wy
                });
            }
        }
    }
    let mut shape = t.shape().to_vec();
    shape[r - 2] = out_w;
    shape[r - 1] = out_h;
    Ok(Tensor::from_parts(shape, out))
}
