//! Seeded synthetic frame pairs: a textured object translated over a static
//! noisy background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    /// `[3, W, H]`, object at `position - motion`.
    pub frame_prev: Tensor,
    /// `[3, W, H]`, object at `position`.
    pub frame_curr: Tensor,
    /// `[W, H]` object support in `frame_curr`.
    pub gt_mask: Tensor,
    pub motion: (i64, i64),
    pub seed: u64,
}

#[derive(Clone, Debug)]
enum Shape {
    Ellipse { rx: f64, ry: f64, theta: f64 },
    Polygon { vertices: Vec<(f64, f64)> },
}

impl Shape {
    fn contains(&self, u: f64, v: f64) -> bool {
        match self {
            Shape::Ellipse { rx, ry, theta } => {
                let (s, c) = theta.sin_cos();
                let (a, b) = (u * c + v * s, -u * s + v * c);
                (a / rx).powi(2) + (b / ry).powi(2) <= 1.0
            }
            Shape::Polygon { vertices } => {
                let mut inside = false;
                let n = vertices.len();
                for i in 0..n {
                    let (x1, y1) = vertices[i];
                    let (x2, y2) = vertices[(i + 1) % n];
                    if (y1 > v) != (y2 > v) && u < x1 + (v - y1) * (x2 - x1) / (y2 - y1) {
                        inside = !inside;
                    }
                }
                inside
            }
        }
    }
}

/// Full description of a scene; frames are rendered with the object at any
/// integer offset.
#[derive(Clone, Debug)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub centre: (i64, i64),
    pub motion: (i64, i64),
    background: Tensor,
    shape: Shape,
    colour: [f64; 3],
    stripe: (f64, f64, f64),
}

const MAX_MOTION: i64 = 3;

impl SceneSpec {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = rng.random_range(32..=64);
        let h = rng.random_range(32..=64);
        Self::random_sized(&mut rng, w, h)
    }

    pub fn random_with_size(seed: u64, width: usize, height: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_sized(&mut rng, width, height)
    }

    fn random_sized(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Self {
        let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.2..0.8));
        let colour = loop {
            let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.05..0.95));
            let d2: f64 = c.iter().zip(&base).map(|(a, b)| (a - b).powi(2)).sum();
            if d2 >= 0.45 * 0.45 {
                break c;
            }
        };
        let (fx, fy) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
        let background = Tensor::from_fn(&[3, w, h], |i| {
            let wave = 0.08 * ((i[1] as f64 * fx / 4.0).sin() + (i[2] as f64 * fy / 5.0).cos());
            (base[i[0]] + wave + rng.random_range(-0.12..0.12)).clamp(0.0, 1.0)
        })
        .expect("finite");
        let motion = (rng.random_range(-MAX_MOTION..=MAX_MOTION), rng.random_range(-MAX_MOTION..=MAX_MOTION));
        let stripe = (
            rng.random_range(0.0..std::f64::consts::PI),
            rng.random_range(3.0..7.0),
            rng.random_range(0.04..0.1),
        );
        let limit = (w.min(h) as f64 / 2.0 - MAX_MOTION as f64 - 2.0).max(2.0);
        let frame_area = (w * h) as f64;
        loop {
            let fraction = rng.random_range(0.08..0.45);
            let target = fraction * frame_area;
            let shape = if rng.random_bool(0.5) {
                let aspect = rng.random_range(0.6..1.6);
                let rx = (target / (std::f64::consts::PI * aspect)).sqrt();
                Shape::Ellipse {
                    rx,
                    ry: rx * aspect,
                    theta: rng.random_range(0.0..std::f64::consts::PI),
                }
            } else {
                let n = rng.random_range(5..=8);
                // Regular n-gon of the target area, radially jittered.
                let r = (2.0 * target / (n as f64 * (2.0 * std::f64::consts::PI / n as f64).sin())).sqrt();
                let phase = rng.random_range(0.0..1.0);
                Shape::Polygon {
                    vertices: (0..n)
                        .map(|k| {
                            let a = 2.0 * std::f64::consts::PI * (k as f64 + phase) / n as f64;
                            let rr = r * rng.random_range(0.85..1.15);
                            (rr * a.cos(), rr * a.sin())
                        })
                        .collect(),
                }
            };
            let reach = match &shape {
                Shape::Ellipse { rx, ry, .. } => rx.max(*ry),
                Shape::Polygon { vertices } => vertices.iter().map(|(x, y)| x.hypot(*y)).fold(0.0, f64::max),
            };
            if reach > limit {
                continue;
            }
            let m = reach.ceil() as i64 + MAX_MOTION + 1;
            let (lo_x, hi_x) = (m, w as i64 - 1 - m);
            let (lo_y, hi_y) = (m, h as i64 - 1 - m);
            if lo_x > hi_x || lo_y > hi_y {
                continue;
            }
            let centre = (rng.random_range(lo_x..=hi_x), rng.random_range(lo_y..=hi_y));
            let spec = Self {
                width: w,
                height: h,
                centre,
                motion,
                background: background.clone(),
                shape,
                colour,
                stripe,
            };
            let area = spec.mask_at(centre).data().iter().sum::<f64>() / frame_area;
            if (0.05..=0.60).contains(&area) {
                return spec;
            }
        }
    }

    /// Object support with its centre at `c`.
    pub fn mask_at(&self, c: (i64, i64)) -> Tensor {
        Tensor::from_fn(&[self.width, self.height], |i| {
            let (u, v) = ((i[0] as i64 - c.0) as f64, (i[1] as i64 - c.1) as f64);
            self.shape.contains(u, v) as u8 as f64
        })
        .expect("finite")
    }

    /// Frame with the object centre at `c`.
    pub fn frame_at(&self, c: (i64, i64)) -> Tensor {
        let (w, h) = (self.width, self.height);
        let mask = self.mask_at(c);
        let (angle, period, amp) = self.stripe;
        let (sa, ca) = angle.sin_cos();
        Tensor::from_fn(&[3, w, h], |i| {
            if mask.data()[i[1] * h + i[2]] == 0.0 {
                return self.background.data()[(i[0] * w + i[1]) * h + i[2]];
            }
            let (u, v) = ((i[1] as i64 - c.0) as f64, (i[2] as i64 - c.1) as f64);
            let t = (2.0 * std::f64::consts::PI * (u * ca + v * sa) / period).sin();
            (self.colour[i[0]] + amp * t).clamp(0.0, 1.0)
        })
        .expect("finite")
    }

    pub fn scene(&self, seed: u64) -> SyntheticScene {
        let prev = (self.centre.0 - self.motion.0, self.centre.1 - self.motion.1);
        SyntheticScene {
            frame_prev: self.frame_at(prev),
            frame_curr: self.frame_at(self.centre),
            gt_mask: self.mask_at(self.centre),
            motion: self.motion,
            seed,
        }
    }
}

pub fn generate_scene(seed: u64) -> SyntheticScene {
    SceneSpec::random(seed).scene(seed)
}

pub fn generate_scene_sized(seed: u64, width: usize, height: usize) -> SyntheticScene {
    SceneSpec::random_with_size(seed, width, height).scene(seed)
}
