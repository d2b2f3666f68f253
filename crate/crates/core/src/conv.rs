//! Zero-padded 2-D convolution over `[C, W, H]` planes.
//!
//! Kernels are square with odd size `k`; tap `(kx, ky)` reads input offset
//! `((kx - k/2) * dilation, (ky - k/2) * dilation)`. Padding equals
//! `(k/2) * dilation`, so spatial extents are preserved.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub dilation: usize,
    pub w: usize,
    pub h: usize,
}

/// For a signed offset, the valid destination range along an axis of length n.
#[inline]
fn span(offset: isize, n: usize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (n as isize - offset.max(0)).max(0) as usize;
    (lo.min(n), hi.max(lo.min(n)))
}

impl ConvGeom {
    #[cfg(test)]
    pub fn weight_len(&self) -> usize {
        self.c_out * self.c_in * self.k * self.k
    }

    pub fn plane(&self) -> usize {
        self.w * self.h
    }

    fn offsets(&self) -> impl Iterator<Item = (usize, isize, isize)> + '_ {
        let half = (self.k / 2) as isize;
        let d = self.dilation as isize;
        (0..self.k * self.k).map(move |t| {
            let kx = (t / self.k) as isize;
            let ky = (t % self.k) as isize;
            (t, (kx - half) * d, (ky - half) * d)
        })
    }

    /// `out = conv(input) + bias`; `out` is overwritten.
    pub fn forward(&self, input: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64]) {
        let (w, h, plane) = (self.w, self.h, self.plane());
        let kk = self.k * self.k;
        debug_assert_eq!(input.len(), self.c_in * plane);
        debug_assert_eq!(out.len(), self.c_out * plane);
        for o in 0..self.c_out {
            let dst = &mut out[o * plane..(o + 1) * plane];
            dst.fill(bias[o]);
            for c in 0..self.c_in {
                let src = &input[c * plane..(c + 1) * plane];
                for (t, dx, dy) in self.offsets() {
                    let wv = weight[(o * self.c_in + c) * kk + t];
                    if wv == 0.0 {
                        continue;
                    }
                    let (x0, x1) = span(dx, w);
                    let (y0, y1) = span(dy, h);
                    if y0 >= y1 {
                        continue;
                    }
                    for x in x0..x1 {
                        let sx = (x as isize + dx) as usize;
                        let s = &src[sx * h + (y0 as isize + dy) as usize..][..y1 - y0];
                        let d = &mut dst[x * h + y0..x * h + y1];
                        for (dv, &sv) in d.iter_mut().zip(s) {
                            *dv += wv * sv;
                        }
                    }
                }
            }
        }
    }

    /// Accumulates parameter gradients and, if requested, the input gradient.
    pub fn backward(
        &self,
        input: &[f64],
        weight: &[f64],
        grad_out: &[f64],
        mut grad_in: Option<&mut [f64]>,
        grad_w: &mut [f64],
        grad_b: &mut [f64],
    ) {
        let (w, h, plane) = (self.w, self.h, self.plane());
        let kk = self.k * self.k;
        for o in 0..self.c_out {
            let g = &grad_out[o * plane..(o + 1) * plane];
            grad_b[o] += g.iter().sum::<f64>();
            for c in 0..self.c_in {
                let src = &input[c * plane..(c + 1) * plane];
                for (t, dx, dy) in self.offsets() {
                    let (x0, x1) = span(dx, w);
                    let (y0, y1) = span(dy, h);
                    if y0 >= y1 {
                        continue;
                    }
                    let widx = (o * self.c_in + c) * kk + t;
                    let wv = weight[widx];
                    let mut acc = 0.0;
                    for x in x0..x1 {
                        let sx = (x as isize + dx) as usize;
                        let soff = sx * h + (y0 as isize + dy) as usize;
                        let gs = &g[x * h + y0..x * h + y1];
                        acc += gs
                            .iter()
                            .zip(&src[soff..soff + (y1 - y0)])
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                        if let Some(gi) = grad_in.as_deref_mut() {
                            if wv != 0.0 {
                                let di = &mut gi[c * plane + soff..c * plane + soff + (y1 - y0)];
                                for (dv, &gv) in di.iter_mut().zip(gs) {
                                    *dv += wv * gv;
                                }
                            }
                        }
                    }
                    grad_w[widx] += acc;
                }
            }
        }
    }
}

/// 2x2 mean pooling of `[C, W, H]` with even `W`, `H`.
pub(crate) fn avg_pool2(input: &[f64], c: usize, w: usize, h: usize) -> Vec<f64> {
    let (ow, oh) = (w / 2, h / 2);
    let mut out = Vec::with_capacity(c * ow * oh);
    for ch in 0..c {
        let p = &input[ch * w * h..(ch + 1) * w * h];
        for x in 0..ow {
            for y in 0..oh {
                let a = p[(2 * x) * h + 2 * y] + p[(2 * x) * h + 2 * y + 1];
                let b = p[(2 * x + 1) * h + 2 * y] + p[(2 * x + 1) * h + 2 * y + 1];
                out.push(0.25 * (a + b));
            }
        }
    }
    out
}
