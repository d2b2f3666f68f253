//! Exact Euclidean distance transform (lower envelope of parabolas, two
//! separable passes).

use crate::tensor::Tensor;

use super::Point;

const INF: f64 = f64::INFINITY;

/// Squared distance from every pixel of a `width x height` grid to the nearest
/// site, laid out `[x * height + y]`. All entries are `INF` when there are no
/// sites. Values are exact integers.
pub fn squared_distance_to_sites(sites: &[Point], width: usize, height: usize) -> Vec<f64> {
    let mut g = vec![INF; width * height];
    if sites.is_empty() {
        return g;
    }
    let mut is_site = vec![false; width * height];
    for p in sites {
        is_site[p.x * height + p.y] = true;
    }
    // Pass 1: along y within each column x, by forward/backward scans.
    for x in 0..width {
        let col = &is_site[x * height..(x + 1) * height];
        let out = &mut g[x * height..(x + 1) * height];
        let mut last: Option<usize> = None;
        for y in 0..height {
            if col[y] {
                last = Some(y);
            }
            if let Some(s) = last {
                out[y] = ((y - s) * (y - s)) as f64;
            }
        }
        last = None;
        for y in (0..height).rev() {
            if col[y] {
                last = Some(y);
            }
            if let Some(s) = last {
                let d = ((s - y) * (s - y)) as f64;
                if d < out[y] {
                    out[y] = d;
                }
            }
        }
    }
    // Pass 2: along x for each row y.
    let mut f = vec![INF; width];
    let mut d = vec![INF; width];
    let mut v = vec![0usize; width];
    let mut z = vec![0.0f64; width + 1];
    for y in 0..height {
        for x in 0..width {
            f[x] = g[x * height + y];
        }
        lower_envelope(&f, &mut d, &mut v, &mut z);
        for x in 0..width {
            g[x * height + y] = d[x];
        }
    }
    g
}

/// `d[q] = min_p (f[p] + (q - p)^2)` over positions with finite `f`.
fn lower_envelope(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: isize = -1;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = -INF;
                z[1] = INF;
                break;
            }
            let p = v[k as usize];
            let s = (fq - (f[p] + (p * p) as f64)) / (2 * (q - p)) as f64;
            if s <= z[k as usize] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k as usize] = q;
            z[k as usize] = s;
            z[k as usize + 1] = INF;
            break;
        }
    }
    if k < 0 {
        d.fill(INF);
        return;
    }
    let mut j = 0usize;
    for (q, dq) in d.iter_mut().enumerate() {
        while z[j + 1] < q as f64 {
            j += 1;
        }
        let p = v[j];
        let diff = q.abs_diff(p);
        *dq = (diff * diff) as f64 + f[p];
    }
}

/// Euclidean distance to the nearest click, `[W, H]`. An empty click set maps
/// every pixel to the image diagonal `sqrt(w^2 + h^2)`.
pub fn distance_map(clicks: &[Point], width: usize, height: usize) -> Tensor {
    if clicks.is_empty() {
        return Tensor::filled(&[width, height], diagonal(width, height));
    }
    let data = squared_distance_to_sites(clicks, width, height)
        .into_iter()
        .map(f64::sqrt)
        .collect();
    Tensor::from_parts(vec![width, height], data)
}

pub fn diagonal(width: usize, height: usize) -> f64 {
    ((width * width + height * height) as f64).sqrt()
}
