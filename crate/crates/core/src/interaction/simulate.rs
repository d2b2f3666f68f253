//! Training-time click simulation.
//!
//! Positive clicks are drawn from object pixels at least `d_pos` from the
//! nearest background pixel; negative clicks from background pixels whose
//! distance to the object lies in `[d_neg_min, d_neg_max]`. Every click keeps
//! at least `d_sep` from all clicks already placed. When a polarity cannot be
//! filled, its margins are relaxed and the draw retried: `d_pos`, `d_neg_min`
//! and `d_sep` are halved (integer division, so they reach 0) and `d_neg_max`
//! is doubled. If even zero margins cannot supply enough distinct pixels, all
//! available pixels are used.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{squared_distance_to_sites, ClickState, Point};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickSimParams {
    pub d_pos: usize,
    pub d_neg_min: usize,
    pub d_neg_max: usize,
    pub d_sep: usize,
}

impl Default for ClickSimParams {
    fn default() -> Self {
        Self {
            d_pos: 3,
            d_neg_min: 3,
            d_neg_max: 40,
            d_sep: 5,
        }
    }
}

pub const MAX_CLICKS_PER_POLARITY: usize = 15;

/// Relaxation rounds before giving up; by then every margin is 0 and the
/// outer band is unbounded for any realistic frame.
const MAX_RELAX: u32 = 24;

/// Samples `n_pos` positive and `n_neg` negative clicks for a `[W, H]`
/// ground-truth mask (values `>= 0.5` are object).
pub fn simulate_clicks(
    gt: &Tensor,
    seed: u64,
    n_pos: usize,
    n_neg: usize,
    params: &ClickSimParams,
) -> Result<ClickState> {
    if gt.rank() != 2 {
        return Err(Error::arg(format!("ground truth must be [W, H], got {:?}", gt.shape())));
    }
    for (n, what) in [(n_pos, "positive"), (n_neg, "negative")] {
        if !(1..=MAX_CLICKS_PER_POLARITY).contains(&n) {
            return Err(Error::arg(format!("{n} {what} clicks outside [1, {MAX_CLICKS_PER_POLARITY}]")));
        }
    }
    let (w, h) = (gt.shape()[0], gt.shape()[1]);
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for x in 0..w {
        for y in 0..h {
            if gt.data()[x * h + y] >= 0.5 {
                fg.push(Point::new(x, y));
            } else {
                bg.push(Point::new(x, y));
            }
        }
    }
    if fg.is_empty() || bg.is_empty() {
        return Err(Error::arg("ground truth must contain both object and background"));
    }
    // Squared distances: object pixels to background, background to object.
    let to_bg = squared_distance_to_sites(&bg, w, h);
    let to_fg = squared_distance_to_sites(&fg, w, h);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<Point> = Vec::new();

    let positives = draw(&fg, n_pos, &mut chosen, &mut rng, params.d_sep, |p, relax| {
        let d = params.d_pos.checked_shr(relax).unwrap_or(0);
        to_bg[p.x * h + p.y] >= (d * d) as f64
    });
    let negatives = draw(&bg, n_neg, &mut chosen, &mut rng, params.d_sep, |p, relax| {
        let lo = params.d_neg_min.checked_shr(relax).unwrap_or(0);
        let hi = params.d_neg_max.saturating_mul(1 << relax) as f64;
        let d2 = to_fg[p.x * h + p.y];
        d2 >= (lo * lo) as f64 && d2 <= hi * hi
    });
    ClickState::from_points(w, h, &positives, &negatives)
}

/// Draws up to `n` points from `pool`, relaxing margins until enough are found.
fn draw(
    pool: &[Point],
    n: usize,
    chosen: &mut Vec<Point>,
    rng: &mut ChaCha8Rng,
    d_sep: usize,
    admissible: impl Fn(Point, u32) -> bool,
) -> Vec<Point> {
    let mut order: Vec<Point> = pool.to_vec();
    order.shuffle(rng);
    let base = chosen.len();
    let mut relax = 0u32;
    loop {
        chosen.truncate(base);
        let sep = d_sep.checked_shr(relax).unwrap_or(0);
        let sep2 = sep * sep;
        for &p in &order {
            if chosen.len() - base == n {
                break;
            }
            if !admissible(p, relax) {
                continue;
            }
            let far = chosen.iter().all(|q| {
                let dx = p.x.abs_diff(q.x);
                let dy = p.y.abs_diff(q.y);
                dx * dx + dy * dy >= sep2.max(1)
            });
            if far {
                chosen.push(p);
            }
        }
        let exhausted = relax >= MAX_RELAX;
        if chosen.len() - base == n || exhausted {
            return chosen[base..].to_vec();
        }
        relax += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interaction::distance_map;

    fn disk(size: usize, r: f64) -> Tensor {
        let c = (size as f64 - 1.0) / 2.0;
        Tensor::from_fn(&[size, size], |i| {
            let (dx, dy) = (i[0] as f64 - c, i[1] as f64 - c);
            ((dx * dx + dy * dy).sqrt() <= r) as u8 as f64
        })
        .unwrap()
    }

    #[test]
    fn polarity_matches_ground_truth() {
        let gt = disk(48, 12.0);
        for seed in 0..20 {
            let s = simulate_clicks(&gt, seed, 1 + seed as usize % 15, 15 - seed as usize % 15, &ClickSimParams::default()).unwrap();
            assert!(s.positive().iter().all(|p| gt.get(&[p.x, p.y]) == 1.0));
            assert!(s.negative().iter().all(|p| gt.get(&[p.x, p.y]) == 0.0));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let gt = disk(32, 8.0);
        let p = ClickSimParams::default();
        assert_eq!(simulate_clicks(&gt, 3, 5, 5, &p).unwrap(), simulate_clicks(&gt, 3, 5, 5, &p).unwrap());
        assert_ne!(simulate_clicks(&gt, 3, 5, 5, &p).unwrap(), simulate_clicks(&gt, 4, 5, 5, &p).unwrap());
    }

    #[test]
    fn centered_disk_positive_margin() {
        let gt = disk(64, 20.0);
        let s = simulate_clicks(&gt, 7, 15, 15, &ClickSimParams::default()).unwrap();
        assert_eq!(s.positive().len(), 15);
        assert_eq!(s.negative().len(), 15);
        // Oracle: exact distance from every pixel to the background set.
        let bg: Vec<Point> = (0..64)
            .flat_map(|x| (0..64).map(move |y| Point::new(x, y)))
            .filter(|p| gt.get(&[p.x, p.y]) == 0.0)
            .collect();
        let d = distance_map(&bg, 64, 64);
        for p in s.positive() {
            assert!(d.get(&[p.x, p.y]) >= 3.0, "{p:?} at {}", d.get(&[p.x, p.y]));
        }
        let fg: Vec<Point> = (0..64)
            .flat_map(|x| (0..64).map(move |y| Point::new(x, y)))
            .filter(|p| gt.get(&[p.x, p.y]) == 1.0)
            .collect();
        let dn = distance_map(&fg, 64, 64);
        for p in s.negative() {
            let v = dn.get(&[p.x, p.y]);
            assert!((3.0..=40.0).contains(&v));
        }
        let all: Vec<Point> = s.positive().into_iter().chain(s.negative()).collect();
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                let d2 = a.x.abs_diff(b.x).pow(2) + a.y.abs_diff(b.y).pow(2);
                assert!(d2 >= 25);
            }
        }
    }

    #[test]
    fn tiny_object_relaxes_margins() {
        let mut gt = Tensor::zeros(&[10, 10]);
        gt.data_mut()[5 * 10 + 5] = 1.0;
        gt.data_mut()[5 * 10 + 6] = 1.0;
        let s = simulate_clicks(&gt, 1, 3, 2, &ClickSimParams::default()).unwrap();
        // Only two object pixels exist.
        assert_eq!(s.positive().len(), 2);
        assert_eq!(s.negative().len(), 2);
    }

    #[test]
    fn degenerate_masks_rejected() {
        let p = ClickSimParams::default();
        assert!(simulate_clicks(&Tensor::zeros(&[4, 4]), 0, 1, 1, &p).is_err());
        assert!(simulate_clicks(&Tensor::filled(&[4, 4], 1.0), 0, 1, 1, &p).is_err());
        assert!(simulate_clicks(&disk(8, 2.0), 0, 0, 1, &p).is_err());
        assert!(simulate_clicks(&disk(8, 2.0), 0, 1, 16, &p).is_err());
    }
}
