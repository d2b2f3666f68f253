//! Largest-component outer contour.
//!
//! Foreground is 4-connected and background 8-connected. The component with
//! the most pixels is traced (ties go to the component whose first pixel
//! comes first in `x`-major scan order). The trace starts at that pixel with
//! its west edge and returns to the same edge.

use crate::interaction::Point;
use crate::tensor::Tensor;

/// Ordered outer boundary. Thin parts of a shape are visited once per side,
/// so a pixel may appear more than once; use [`Contour::unique_points`] for
/// the point set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<Point>,
}

impl Contour {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points in first-visit order with repeats dropped.
    pub fn unique_points(&self) -> Vec<Point> {
        let mut seen = std::collections::BTreeSet::new();
        self.points.iter().copied().filter(|p| seen.insert(*p)).collect()
    }

    /// `[W, H]` raster with 1 on contour pixels.
    pub fn rasterize(&self, width: usize, height: usize) -> Tensor {
        let mut t = Tensor::zeros(&[width, height]);
        for p in &self.points {
            t.data_mut()[p.x * height + p.y] = 1.0;
        }
        t
    }
}

// West, north, east, south; each entry is the previous one turned a quarter.
const DIRS: [(isize, isize); 4] = [(-1, 0), (0, -1), (1, 0), (0, 1)];

/// Labels 4-connected foreground (`>= 0.5`) components. Returns the label
/// image (`0` = background) and the pixel count of each label.
pub fn label_components(mask: &Tensor) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (mask.shape()[0], mask.shape()[1]);
    let fg: Vec<bool> = mask.data().iter().map(|&v| v >= 0.5).collect();
    let mut labels = vec![0u32; w * h];
    let mut sizes = vec![0usize];
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !fg[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32;
        sizes.push(0);
        labels[start] = label;
        stack.push(start);
        while let Some(i) = stack.pop() {
            sizes[label as usize] += 1;
            let (x, y) = (i / h, i % h);
            let mut visit = |j: usize| {
                if fg[j] && labels[j] == 0 {
                    labels[j] = label;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - h);
            }
            if x + 1 < w {
                visit(i + h);
            }
            if y > 0 {
                visit(i - 1);
            }
            if y + 1 < h {
                visit(i + 1);
            }
        }
    }
    (labels, sizes)
}

/// Outer contour of the largest 4-connected foreground component of a
/// `[W, H]` mask. Empty mask gives an empty contour.
pub fn extract_boundary(mask: &Tensor) -> Contour {
    assert_eq!(mask.rank(), 2, "extract_boundary needs a [W, H] mask");
    let (w, h) = (mask.shape()[0], mask.shape()[1]);
    let (labels, sizes) = label_components(mask);
    let Some(best) = (1..sizes.len()).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))) else {
        return Contour::default();
    };
    let best = best as u32;
    let start_idx = labels.iter().position(|&l| l == best).expect("label present");
    let start = (start_idx / h, start_idx % h);
    let inside = |x: isize, y: isize| -> bool {
        x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && labels[x as usize * h + y as usize] == best
    };

    // Crack following: the state is a component pixel and the direction of
    // an outside 4-neighbour. The walk moves along the shared edge, so it
    // never cuts through a diagonal gap in the component.
    let (sx, sy) = (start.0 as isize, start.1 as isize);
    let mut p = (sx, sy);
    let mut d = 0usize;
    let mut points = vec![Point::new(start.0, start.1)];
    let cap = 4 * sizes[best as usize] + 4;
    for _ in 0..cap {
        let f = (d + 1) % 4;
        let a = (p.0 + DIRS[f].0, p.1 + DIRS[f].1);
        let b = (a.0 + DIRS[d].0, a.1 + DIRS[d].1);
        if !inside(a.0, a.1) {
            d = f;
        } else if inside(b.0, b.1) {
            p = b;
            d = (f + 2) % 4;
        } else {
            p = a;
        }
        if p == (sx, sy) && d == 0 {
            break;
        }
        let q = Point::new(p.0 as usize, p.1 as usize);
        if points.last() != Some(&q) {
            points.push(q);
        }
    }
    if points.len() > 1 && points.last() == points.first() {
        points.pop();
    }
    Contour { points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask_from(rows: &[&str]) -> Tensor {
        // rows[y][x]
        let h = rows.len();
        let w = rows[0].len();
        Tensor::from_fn(&[w, h], |i| (rows[i[1]].as_bytes()[i[0]] == b'#') as u8 as f64).unwrap()
    }

    fn is_fg(m: &Tensor, x: isize, y: isize) -> bool {
        let (w, h) = (m.shape()[0] as isize, m.shape()[1] as isize);
        x >= 0 && y >= 0 && x < w && y < h && m.get(&[x as usize, y as usize]) >= 0.5
    }

    #[test]
    fn square_perimeter() {
        let m = mask_from(&[".....", ".###.", ".###.", ".###.", "....."]);
        let c = extract_boundary(&m);
        assert_eq!(c.points.len(), 8);
        assert_eq!(c.unique_points().len(), 8);
        assert!(!c.points.contains(&Point::new(2, 2)));
    }

    #[test]
    fn single_pixel() {
        let m = mask_from(&["...", ".#.", "..."]);
        assert_eq!(extract_boundary(&m).points, vec![Point::new(1, 1)]);
    }

    #[test]
    fn empty_mask() {
        assert!(extract_boundary(&Tensor::zeros(&[4, 4])).is_empty());
    }

    #[test]
    fn largest_component_only() {
        let m = mask_from(&["##....", "##....", "#.....", "......", "....##"]);
        let c = extract_boundary(&m);
        assert_eq!(c.unique_points().len(), 5);
        assert!(c.points.iter().all(|p| p.x <= 1));
    }

    #[test]
    fn diagonal_touch_is_separate_component() {
        let m = mask_from(&["##..", "##..", "..#.", "...."]);
        let c = extract_boundary(&m);
        assert_eq!(c.unique_points().len(), 4);
        assert!(!c.points.contains(&Point::new(2, 2)));
    }

    #[test]
    fn contour_invariants_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let (w, h) = (rng.random_range(1..14), rng.random_range(1..14));
            let density = rng.random_range(0.2..0.9);
            let m = Tensor::from_fn(&[w, h], |_| (rng.random::<f64>() < density) as u8 as f64).unwrap();
            let c = extract_boundary(&m);
            let (labels, sizes) = label_components(&m);
            if sizes.len() == 1 {
                assert!(c.is_empty());
                continue;
            }
            let label = labels[c.points[0].x * h + c.points[0].y];
            let biggest = *sizes[1..].iter().max().unwrap();
            assert_eq!(sizes[label as usize], biggest);
            for p in &c.points {
                assert_eq!(labels[p.x * h + p.y], label);
                let (x, y) = (p.x as isize, p.y as isize);
                let open = [(-1, 0), (1, 0), (0, -1), (0, 1)]
                    .iter()
                    .any(|(dx, dy)| !is_fg(&m, x + dx, y + dy));
                assert!(open, "{p:?} has no background 4-neighbour");
            }
            if c.points.len() > 1 {
                let n = c.points.len();
                for i in 0..n {
                    let (a, b) = (c.points[i], c.points[(i + 1) % n]);
                    assert!(a.x.abs_diff(b.x) <= 1 && a.y.abs_diff(b.y) <= 1 && a != b);
                }
            }
        }
    }
}
