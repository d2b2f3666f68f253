//! Truncated SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! Columns of the working matrix are pairwise orthogonalised until every
//! pair's normalised inner product falls below machine precision; singular
//! values are then the column norms. Wide matrices are handled through their
//! transpose, so the rotation count scales with the smaller dimension.

use super::Tensor;
use crate::error::{Error, Result};

/// Sweep cap before reporting non-convergence.
pub const MAX_SWEEPS: usize = 80;

#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `m x k`, orthonormal columns.
    pub left_vectors: Tensor,
    /// Length `k`, nonincreasing, nonnegative.
    pub singular_values: Vec<f64>,
    /// `n x k`, orthonormal columns.
    pub right_vectors: Tensor,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `U diag(S) V^T`.
    pub fn reconstruct(&self) -> Tensor {
        let (m, k) = (self.left_vectors.rows(), self.rank());
        let n = self.right_vectors.rows();
        let u = self.left_vectors.data();
        let v = self.right_vectors.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = (0..k)
                    .map(|r| u[i * k + r] * self.singular_values[r] * v[j * k + r])
                    .sum();
            }
        }
        Tensor::from_parts(vec![m, n], out)
    }
}

/// Top-`k` singular triplets of a matrix.
///
/// Each left vector is sign-normalised so that its largest-magnitude entry is
/// positive (earliest index on ties), making the factorisation deterministic.
pub fn truncated_svd(m: &Tensor, k: usize) -> Result<SvdResult> {
    if m.rank() != 2 {
        return Err(Error::arg(format!("svd needs a matrix, got {:?}", m.shape())));
    }
    let (rows, cols) = (m.rows(), m.cols());
    if k == 0 || k > rows.min(cols) {
        return Err(Error::arg(format!(
            "k = {k} outside [1, {}] for a {rows}x{cols} matrix",
            rows.min(cols)
        )));
    }
    let (mut u, mut s, mut v) = if rows >= cols {
        jacobi_tall(m.data(), rows, cols)?
    } else {
        let (v, s, u) = jacobi_tall(m.transpose().data(), cols, rows)?;
        (u, s, v)
    };
    let n_sv = s.len();
    let (ur, vr) = (u.len() / n_sv, v.len() / n_sv);

    for j in 0..n_sv {
        let mut best = 0;
        for i in 1..ur {
            if u[i * n_sv + j].abs() > u[best * n_sv + j].abs() {
                best = i;
            }
        }
        if u[best * n_sv + j] < 0.0 {
            for i in 0..ur {
                u[i * n_sv + j] = -u[i * n_sv + j];
            }
            for i in 0..vr {
                v[i * n_sv + j] = -v[i * n_sv + j];
            }
        }
    }

    s.truncate(k);
    let take = |mat: &[f64], r: usize| -> Tensor {
        let mut out = Vec::with_capacity(r * k);
        for i in 0..r {
            out.extend_from_slice(&mat[i * n_sv..i * n_sv + k]);
        }
        Tensor::from_parts(vec![r, k], out)
    };
    Ok(SvdResult {
        left_vectors: take(&u, ur),
        singular_values: s,
        right_vectors: take(&v, vr),
    })
}

/// Full thin SVD of a row-major `m x n` matrix with `m >= n`.
/// Returns `(U m x n, S, V n x n)`, sorted by decreasing singular value.
fn jacobi_tall(a: &[f64], m: usize, n: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    // Column-major working copies: column j is contiguous.
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a[i * n + j]).collect()).collect();
    let mut vt: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let eps = f64::EPSILON;
    let mut converged = false;
    let mut last_off = 0.0f64;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        last_off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&w[p], &w[q]);
                    let mut a = 0.0;
                    let mut b = 0.0;
                    let mut g = 0.0;
                    for (x, y) in cp.iter().zip(cq) {
                        a += x * x;
                        b += y * y;
                        g += x * y;
                    }
                    (a, b, g)
                };
                if gamma == 0.0 {
                    continue;
                }
                let off = gamma.abs() / (alpha * beta).sqrt();
                last_off = last_off.max(off);
                if off <= eps * (m as f64) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut vt, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "jacobi svd did not converge after {MAX_SWEEPS} sweeps on a {m}x{n} matrix \
             (max normalised off-diagonal {last_off:.3e})"
        )));
    }

    let norms: Vec<f64> = w.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    if norms.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite singular value".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let scale = norms[order[0]].max(f64::MIN_POSITIVE);
    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for &j in &order {
        let sigma = norms[j];
        if sigma > scale * eps * (m as f64) {
            ucols.push(w[j].iter().map(|x| x / sigma).collect());
            s.push(sigma);
        } else {
            // Numerically null direction: complete the basis instead.
            ucols.push(complete_basis(&ucols, m));
            s.push(0.0);
        }
    }

    let mut u = vec![0.0; m * n];
    let mut v = vec![0.0; n * n];
    for (r, (&j, ucol)) in order.iter().zip(&ucols).enumerate() {
        for i in 0..m {
            u[i * n + r] = ucol[i];
        }
        for i in 0..n {
            v[i * n + r] = vt[j][i];
        }
    }
    Ok((u, s, v))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// A unit vector orthogonal to all of `basis` (assumed orthonormal).
fn complete_basis(basis: &[Vec<f64>], m: usize) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for e in 0..m {
        let mut cand = vec![0.0; m];
        cand[e] = 1.0;
        // Two Gram-Schmidt passes for stability.
        for _ in 0..2 {
            for b in basis {
                let d: f64 = cand.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in cand.iter_mut().zip(b) {
                    *x -= d * y;
                }
            }
        }
        let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
        if best.as_ref().is_none_or(|(n, _)| norm > *n + 1e-12) {
            best = Some((norm, cand));
        }
        if norm > 0.5 {
            break;
        }
    }
    let (norm, cand) = best.expect("basis completion on empty space");
    cand.into_iter().map(|x| x / norm).collect()
}
