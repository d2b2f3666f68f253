//! Region and boundary IOU over binary masks (`>= 0.5` is foreground).

use serde::{Deserialize, Serialize};

use super::{extract_boundary, pairwise_sum};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `|A ∩ B| / |A ∪ B|`, with two empty masks scoring 1.
pub fn iou(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::arg(format!(
            "masks {:?} and {:?} are not congruent",
            a.shape(),
            b.shape()
        )));
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x >= 0.5, y >= 0.5);
        inter += (x && y) as u64;
        union += (x || y) as u64;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// 1-pixel dilation with a 3×3 square structuring element.
pub fn dilate3x3(mask: &Tensor) -> Tensor {
    let (w, h) = (mask.shape()[0], mask.shape()[1]);
    let src = mask.data();
    let mut out = Tensor::zeros(&[w, h]);
    let dst = out.data_mut();
    for x in 0..w {
        for y in 0..h {
            if src[x * h + y] < 0.5 {
                continue;
            }
            for nx in x.saturating_sub(1)..(x + 2).min(w) {
                for ny in y.saturating_sub(1)..(y + 2).min(h) {
                    dst[nx * h + ny] = 1.0;
                }
            }
        }
    }
    out
}

/// Dilated outer-contour raster used by [`mbiou`].
pub fn boundary_raster(mask: &Tensor) -> Tensor {
    let (w, h) = (mask.shape()[0], mask.shape()[1]);
    dilate3x3(&extract_boundary(mask).rasterize(w, h))
}

fn check_lists(pred: &[Tensor], gt: &[Tensor]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::arg(format!(
            "{} predictions for {} ground-truth masks",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::arg("no mask pairs"));
    }
    Ok(())
}

pub fn miou(pred: &[Tensor], gt: &[Tensor]) -> Result<f64> {
    check_lists(pred, gt)?;
    let v = pred.iter().zip(gt).map(|(p, g)| iou(p, g)).collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&v) / v.len() as f64)
}

pub fn mbiou(pred: &[Tensor], gt: &[Tensor]) -> Result<f64> {
    check_lists(pred, gt)?;
    let v = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            if p.shape() != g.shape() {
                return iou(p, g);
            }
            iou(&boundary_raster(p), &boundary_raster(g))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&v) / v.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerImageMetric {
    pub name: String,
    pub iou: f64,
    pub biou: f64,
}

/// Evaluation report. Boundary IOU dilates the rasterised 1-px outer contour
/// of each mask by a 3×3 square before comparing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_images: usize,
    pub miou: f64,
    pub mbiou: f64,
    pub per_image: Vec<PerImageMetric>,
    /// Items that could not be scored.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<ItemError>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemError {
    pub name: String,
    pub message: String,
}

impl MetricReport {
    pub fn from_pairs(names: &[String], pred: &[Tensor], gt: &[Tensor]) -> Result<Self> {
        check_lists(pred, gt)?;
        if names.len() != pred.len() {
            return Err(Error::arg("one name per mask pair is required"));
        }
        let mut per_image = Vec::with_capacity(pred.len());
        for ((name, p), g) in names.iter().zip(pred).zip(gt) {
            per_image.push(PerImageMetric {
                name: name.clone(),
                iou: iou(p, g)?,
                biou: iou(&boundary_raster(p), &boundary_raster(g))?,
            });
        }
        Ok(Self::aggregate(per_image))
    }

    /// Means recomputed from the per-image entries.
    pub fn aggregate(per_image: Vec<PerImageMetric>) -> Self {
        let n = per_image.len();
        let ious: Vec<f64> = per_image.iter().map(|m| m.iou).collect();
        let bious: Vec<f64> = per_image.iter().map(|m| m.biou).collect();
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { pairwise_sum(v) / v.len() as f64 };
        Self {
            n_images: n,
            miou: mean(&ious),
            mbiou: mean(&bious),
            per_image,
            errors: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::{BTreeSet, VecDeque};

    type Set = BTreeSet<(usize, usize)>;

    fn to_set(m: &Tensor) -> Set {
        let (w, h) = (m.shape()[0], m.shape()[1]);
        (0..w).flat_map(|x| (0..h).map(move |y| (x, y))).filter(|&(x, y)| m.get(&[x, y]) >= 0.5).collect()
    }

    fn set_iou(a: &Set, b: &Set) -> f64 {
        let u = a.union(b).count();
        if u == 0 {
            1.0
        } else {
            a.intersection(b).count() as f64 / u as f64
        }
    }

    // Largest 4-component, then the pixels of it that touch (4-adjacency) the
    // part of its complement 8-connected to the area outside the image.
    fn oracle_outer_boundary(m: &Tensor) -> Set {
        let (w, h) = (m.shape()[0] as isize, m.shape()[1] as isize);
        let fg = to_set(m);
        let mut best: Set = Set::new();
        let mut seen = Set::new();
        for &p in &fg {
            if seen.contains(&p) {
                continue;
            }
            let mut comp = Set::new();
            let mut q = VecDeque::from([p]);
            seen.insert(p);
            while let Some((x, y)) = q.pop_front() {
                comp.insert((x, y));
                for (dx, dy) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let n = (nx as usize, ny as usize);
                    if fg.contains(&n) && seen.insert(n) {
                        q.push_back(n);
                    }
                }
            }
            // BTreeSet iteration is x-major, so the first found wins ties.
            if comp.len() > best.len() {
                best = comp;
            }
        }
        // Flood the complement on a one-pixel padded frame.
        let mut outside = BTreeSet::new();
        let mut q = VecDeque::from([(-1isize, -1isize)]);
        outside.insert((-1, -1));
        while let Some((x, y)) = q.pop_front() {
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < -1 || ny < -1 || nx > w || ny > h {
                        continue;
                    }
                    let inside = nx >= 0 && ny >= 0 && nx < w && ny < h && best.contains(&(nx as usize, ny as usize));
                    if !inside && outside.insert((nx, ny)) {
                        q.push_back((nx, ny));
                    }
                }
            }
        }
        best.iter()
            .copied()
            .filter(|&(x, y)| {
                [(-1, 0), (1, 0), (0, -1), (0, 1)]
                    .iter()
                    .any(|(dx, dy)| outside.contains(&(x as isize + dx, y as isize + dy)))
            })
            .collect()
    }

    fn oracle_dilate(s: &Set, w: usize, h: usize) -> Set {
        let mut out = Set::new();
        for &(x, y) in s {
            for dx in -1isize..=1 {
                for dy in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                        out.insert((nx as usize, ny as usize));
                    }
                }
            }
        }
        out
    }

    fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Tensor {
        let density = rng.random_range(0.2..0.8);
        Tensor::from_fn(&[w, h], |_| (rng.random::<f64>() < density) as u8 as f64).unwrap()
    }

    #[test]
    fn contour_matches_outer_boundary_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..400 {
            let (w, h) = (rng.random_range(1..17), rng.random_range(1..17));
            let m = random_mask(&mut rng, w, h);
            let got: Set = extract_boundary(&m).points.iter().map(|p| (p.x, p.y)).collect();
            assert_eq!(got, oracle_outer_boundary(&m), "{m:?}");
        }
    }

    #[test]
    fn metrics_match_set_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let a = random_mask(&mut rng, 16, 16);
            let b = random_mask(&mut rng, 16, 16);
            assert_eq!(miou(&[a.clone()], &[b.clone()]).unwrap(), set_iou(&to_set(&a), &to_set(&b)));
            let ba = oracle_dilate(&oracle_outer_boundary(&a), 16, 16);
            let bb = oracle_dilate(&oracle_outer_boundary(&b), 16, 16);
            assert_eq!(mbiou(&[a], &[b]).unwrap(), set_iou(&ba, &bb));
        }
    }

    #[test]
    fn identical_and_disjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_mask(&mut rng, 9, 7);
        assert_eq!(miou(&[a.clone()], &[a.clone()]).unwrap(), 1.0);
        assert_eq!(mbiou(&[a.clone()], &[a.clone()]).unwrap(), 1.0);
        let inv = a.map(|v| 1.0 - v).unwrap();
        assert_eq!(miou(&[a.clone()], &[inv]).unwrap(), 0.0);
        let z = Tensor::zeros(&[3, 3]);
        assert_eq!(miou(&[z.clone()], &[z.clone()]).unwrap(), 1.0);
        assert_eq!(mbiou(&[z.clone()], &[z]).unwrap(), 1.0);
        assert!(miou(&[a.clone()], &[]).is_err());
        assert!(miou(&[], &[]).is_err());
    }

    #[test]
    fn report_aggregates_from_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pred: Vec<Tensor> = (0..5).map(|_| random_mask(&mut rng, 8, 8)).collect();
        let gt: Vec<Tensor> = (0..5).map(|_| random_mask(&mut rng, 8, 8)).collect();
        let names: Vec<String> = (0..5).map(|i| format!("img{i}")).collect();
        let r = MetricReport::from_pairs(&names, &pred, &gt).unwrap();
        assert_eq!(r.n_images, 5);
        assert_eq!(r.miou, miou(&pred, &gt).unwrap());
        assert_eq!(r.mbiou, mbiou(&pred, &gt).unwrap());
        let back: MetricReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(MetricReport::aggregate(back.per_image.clone()), back);
    }
}
