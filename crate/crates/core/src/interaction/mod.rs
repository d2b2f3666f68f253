//! User clicks: point sets, raster masks, distance ("diffusion") maps and
//! training-time click simulation.

mod edt;
mod simulate;

pub use edt::{diagonal, distance_map, squared_distance_to_sites};
pub use simulate::{simulate_clicks, ClickSimParams, MAX_CLICKS_PER_POLARITY};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub x: usize,
    pub y: usize,
}

impl Point {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Pos,
    Neg,
}

/// Wire form of a click: `{"x": .., "y": .., "polarity": "pos" | "neg"}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Click {
    pub x: i64,
    pub y: i64,
    pub polarity: Polarity,
}

/// Set of positive and negative clicks on a `width x height` frame.
///
/// Clicks are kept as ordered sets, so every derived raster depends only on
/// which clicks are present, never on the order they arrived in.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClickState {
    width: usize,
    height: usize,
    positive: BTreeSet<Point>,
    negative: BTreeSet<Point>,
}

impl ClickState {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            positive: BTreeSet::new(),
            negative: BTreeSet::new(),
        }
    }

    pub fn from_points(width: usize, height: usize, positive: &[Point], negative: &[Point]) -> Result<Self> {
        let mut s = Self::new(width, height);
        for &p in positive {
            s.insert(p, Polarity::Pos)?;
        }
        for &p in negative {
            s.insert(p, Polarity::Neg)?;
        }
        Ok(s)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn positive(&self) -> Vec<Point> {
        self.positive.iter().copied().collect()
    }

    pub fn negative(&self) -> Vec<Point> {
        self.negative.iter().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn polarity_at(&self, p: Point) -> Option<Polarity> {
        if self.positive.contains(&p) {
            Some(Polarity::Pos)
        } else if self.negative.contains(&p) {
            Some(Polarity::Neg)
        } else {
            None
        }
    }

    /// Validates wire coordinates against the frame.
    pub fn point(&self, x: i64, y: i64) -> Result<Point> {
        if x < 0 || y < 0 || x as u64 >= self.width as u64 || y as u64 >= self.height as u64 {
            return Err(Error::arg(format!(
                "click ({x}, {y}) outside {}x{} frame",
                self.width, self.height
            )));
        }
        Ok(Point::new(x as usize, y as usize))
    }

    /// Adds a click. Returns `false` if the same click was already present.
    /// A point may not carry both polarities.
    pub fn insert(&mut self, p: Point, polarity: Polarity) -> Result<bool> {
        self.point(p.x as i64, p.y as i64)?;
        match (self.polarity_at(p), polarity) {
            (Some(existing), wanted) if existing == wanted => Ok(false),
            (Some(existing), _) => Err(Error::arg(format!(
                "({}, {}) already holds a {existing:?} click",
                p.x, p.y
            ))),
            (None, Polarity::Pos) => Ok(self.positive.insert(p)),
            (None, Polarity::Neg) => Ok(self.negative.insert(p)),
        }
    }

    /// Removes the click at `p`, returning its polarity if there was one.
    pub fn remove(&mut self, p: Point) -> Option<Polarity> {
        if self.positive.remove(&p) {
            Some(Polarity::Pos)
        } else if self.negative.remove(&p) {
            Some(Polarity::Neg)
        } else {
            None
        }
    }

    pub fn clicks(&self) -> Vec<Click> {
        let pos = self.positive.iter().map(|p| (p, Polarity::Pos));
        let neg = self.negative.iter().map(|p| (p, Polarity::Neg));
        pos.chain(neg)
            .map(|(p, polarity)| Click { x: p.x as i64, y: p.y as i64, polarity })
            .collect()
    }

    /// Binary rasters `(B_p, B_n)`.
    pub fn masks(&self) -> (Tensor, Tensor) {
        (
            rasterize_points(&self.positive(), self.width, self.height),
            rasterize_points(&self.negative(), self.width, self.height),
        )
    }

    /// Raw distance maps `(D_p, D_n)`.
    pub fn distance_maps(&self) -> (Tensor, Tensor) {
        (
            distance_map(&self.positive(), self.width, self.height),
            distance_map(&self.negative(), self.width, self.height),
        )
    }

    /// Distance maps divided by the image diagonal, in `[0, 1]`.
    pub fn normalized_distance_maps(&self) -> (Tensor, Tensor) {
        let diag = diagonal(self.width, self.height);
        let (p, n) = self.distance_maps();
        let scale = |t: Tensor| t.map(|v| v / diag).expect("finite");
        (scale(p), scale(n))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.clicks()).expect("clicks serialize")
    }

    pub fn from_json(width: usize, height: usize, text: &str) -> Result<Self> {
        let clicks = parse_clicks(text)?;
        let mut s = Self::new(width, height);
        for c in clicks {
            let p = s.point(c.x, c.y)?;
            s.insert(p, c.polarity)?;
        }
        Ok(s)
    }
}

/// Parses a JSON array of clicks without validating coordinates.
pub fn parse_clicks(text: &str) -> Result<Vec<Click>> {
    Ok(serde_json::from_str(text)?)
}

fn rasterize_points(points: &[Point], width: usize, height: usize) -> Tensor {
    let mut t = Tensor::zeros(&[width, height]);
    for p in points {
        t.data_mut()[p.x * height + p.y] = 1.0;
    }
    t
}

/// `[W, H]` raster with 1 at each click and 0 elsewhere.
pub fn rasterize_clicks(clicks: &[Point], width: usize, height: usize) -> Result<Tensor> {
    if let Some(p) = clicks.iter().find(|p| p.x >= width || p.y >= height) {
        return Err(Error::arg(format!(
            "click ({}, {}) outside {width}x{height} frame",
            p.x, p.y
        )));
    }
    Ok(rasterize_points(clicks, width, height))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rasterize_cases() {
        assert!(rasterize_clicks(&[], 3, 3).unwrap().data().iter().all(|&v| v == 0.0));
        let one = rasterize_clicks(&[Point::new(1, 2)], 3, 3).unwrap();
        assert_eq!(one.data().iter().sum::<f64>(), 1.0);
        assert_eq!(one.get(&[1, 2]), 1.0);
        let dup = rasterize_clicks(&[Point::new(1, 2), Point::new(1, 2)], 3, 3).unwrap();
        assert_eq!(dup, one);
        assert!(rasterize_clicks(&[Point::new(3, 0)], 3, 3).is_err());
    }

    #[test]
    fn state_invariants() {
        let mut s = ClickState::new(4, 4);
        assert!(s.insert(Point::new(1, 1), Polarity::Pos).unwrap());
        assert!(!s.insert(Point::new(1, 1), Polarity::Pos).unwrap());
        assert!(s.insert(Point::new(1, 1), Polarity::Neg).is_err());
        assert!(s.point(-1, 0).is_err());
        assert!(s.point(4, 0).is_err());
        s.insert(Point::new(3, 0), Polarity::Neg).unwrap();
        let (bp, bn) = s.masks();
        let (dp, dn) = s.distance_maps();
        for x in 0..4 {
            for y in 0..4 {
                assert_eq!(bp.get(&[x, y]) == 1.0, dp.get(&[x, y]) == 0.0);
                assert_eq!(bn.get(&[x, y]) == 1.0, dn.get(&[x, y]) == 0.0);
            }
        }
        let (np, _) = s.normalized_distance_maps();
        assert!(np.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(s.remove(Point::new(1, 1)), Some(Polarity::Pos));
        assert_eq!(s.remove(Point::new(1, 1)), None);
    }

    #[test]
    fn order_independent() {
        let a = ClickState::from_points(5, 5, &[Point::new(0, 0), Point::new(4, 4)], &[Point::new(2, 2)]).unwrap();
        let b = ClickState::from_points(5, 5, &[Point::new(4, 4), Point::new(0, 0)], &[Point::new(2, 2)]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn json_round_trip() {
        let s = ClickState::from_points(6, 3, &[Point::new(5, 2)], &[Point::new(0, 1)]).unwrap();
        let text = s.to_json();
        assert_eq!(text, r#"[{"x":5,"y":2,"polarity":"pos"},{"x":0,"y":1,"polarity":"neg"}]"#);
        assert_eq!(ClickState::from_json(6, 3, &text).unwrap(), s);
        assert!(ClickState::from_json(5, 3, &text).is_err());
        assert!(parse_clicks(r#"[{"x":1,"y":1,"polarity":"maybe"}]"#).is_err());
    }
}
