//! Tile grids and the stack/reassemble bijection used by tessellation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub cols: usize,
    pub rows: usize,
    pub tile_width: usize,
    pub tile_height: usize,
    pub padded_width: usize,
    pub padded_height: usize,
}

impl TileGrid {
    pub fn tile_count(&self) -> usize {
        self.cols * self.rows
    }

    /// Top-left pixel of tile `t` (row-major over `(row, col)`).
    pub fn origin(&self, t: usize) -> (usize, usize) {
        let (row, col) = (t / self.cols, t % self.cols);
        (col * self.tile_width, row * self.tile_height)
    }
}

/// Smallest grid of `tile_width x tile_height` tiles covering `width x height`.
pub fn tile_grid(width: usize, height: usize, tile_width: usize, tile_height: usize) -> Result<TileGrid> {
    if width == 0 || height == 0 || tile_width == 0 || tile_height == 0 {
        return Err(Error::arg(format!(
            "tile_grid({width}, {height}, {tile_width}, {tile_height}) needs positive extents"
        )));
    }
    let cols = width.div_ceil(tile_width);
    let rows = height.div_ceil(tile_height);
    Ok(TileGrid {
        cols,
        rows,
        tile_width,
        tile_height,
        padded_width: cols * tile_width,
        padded_height: rows * tile_height,
    })
}

/// `[C, padded_w, padded_h]` -> `[T, C, tile_w, tile_h]`.
pub fn stack_tiles(img: &Tensor, grid: &TileGrid) -> Result<Tensor> {
    if img.rank() != 3 || img.shape()[1..] != [grid.padded_width, grid.padded_height] {
        return Err(Error::arg(format!(
            "image {:?} does not match padded grid {}x{}",
            img.shape(),
            grid.padded_width,
            grid.padded_height
        )));
    }
    let c = img.shape()[0];
    let (tw, th, ph) = (grid.tile_width, grid.tile_height, grid.padded_height);
    let mut out = Vec::with_capacity(img.len());
    for t in 0..grid.tile_count() {
        let (x0, y0) = grid.origin(t);
        for ch in 0..c {
            let plane = img.slab(ch);
            for x in x0..x0 + tw {
                out.extend_from_slice(&plane[x * ph + y0..x * ph + y0 + th]);
            }
        }
    }
    Ok(Tensor::from_parts(vec![grid.tile_count(), c, tw, th], out))
}

/// `[T, D, tile_w, tile_h]` -> `[D, padded_w, padded_h]`; inverse of [`stack_tiles`].
pub fn reassemble_tiles(tiles: &Tensor, grid: &TileGrid) -> Result<Tensor> {
    let s = tiles.shape();
    if s.len() != 4 || s[0] != grid.tile_count() || s[2] != grid.tile_width || s[3] != grid.tile_height {
        return Err(Error::arg(format!(
            "tiles {s:?} do not match a {}-tile grid of {}x{}",
            grid.tile_count(),
            grid.tile_width,
            grid.tile_height
        )));
    }
    let d = s[1];
    let (tw, th, ph) = (grid.tile_width, grid.tile_height, grid.padded_height);
    let mut out = Tensor::zeros(&[d, grid.padded_width, ph]);
    for t in 0..grid.tile_count() {
        let (x0, y0) = grid.origin(t);
        let tile = tiles.slab(t);
        for ch in 0..d {
            let src = &tile[ch * tw * th..(ch + 1) * tw * th];
            let dst = out.slab_mut(ch);
            for x in 0..tw {
                dst[(x0 + x) * ph + y0..(x0 + x) * ph + y0 + th].copy_from_slice(&src[x * th..(x + 1) * th]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_hd_grid() {
        let g = tile_grid(1920, 1080, 224, 224).unwrap();
        assert_eq!((g.cols, g.rows, g.tile_count()), (9, 5, 45));
        assert_eq!((g.padded_width, g.padded_height), (2016, 1120));
    }

    #[test]
    fn exact_fit_and_one_over() {
        let g = tile_grid(224, 224, 224, 224).unwrap();
        assert_eq!((g.cols, g.rows, g.tile_count(), g.padded_width, g.padded_height), (1, 1, 1, 224, 224));
        let g = tile_grid(225, 224, 224, 224).unwrap();
        assert_eq!((g.cols, g.rows, g.tile_count()), (2, 1, 2));
        assert!(tile_grid(0, 1, 1, 1).is_err());
    }

    #[test]
    fn grid_matches_brute_force_covering() {
        // Oracle: grow the tile count one at a time until the image is covered.
        let m = 8;
        for w in 1..=3 * m {
            for h in 1..=3 * m {
                let g = tile_grid(w, h, m, m).unwrap();
                let mut cols = 0;
                while cols * m < w {
                    cols += 1;
                }
                let mut rows = 0;
                while rows * m < h {
                    rows += 1;
                }
                assert_eq!((g.cols, g.rows), (cols, rows));
                assert_eq!(g.tile_count(), cols * rows);
                assert_eq!((g.padded_width, g.padded_height), (m * cols, m * rows));
            }
        }
    }

    #[test]
    fn two_by_one_grid_splits_columns() {
        let m = 4;
        let g = tile_grid(2 * m, m, m, m).unwrap();
        let img = Tensor::from_fn(&[1, 2 * m, m], |i| i[1] as f64).unwrap();
        let tiles = stack_tiles(&img, &g).unwrap();
        for t in 0..2 {
            for x in 0..m {
                for y in 0..m {
                    assert_eq!(tiles.get(&[t, 0, x, y]), (t * m + x) as f64);
                }
            }
        }
    }

    #[test]
    fn single_tile_adds_leading_axis() {
        let g = tile_grid(5, 3, 5, 3).unwrap();
        let img = Tensor::from_fn(&[2, 5, 3], |i| (i[0] + i[1] * 2 + i[2] * 9) as f64).unwrap();
        let tiles = stack_tiles(&img, &g).unwrap();
        assert_eq!(tiles.shape(), &[1, 2, 5, 3]);
        assert_eq!(tiles.data(), img.data());
    }

    #[test]
    fn mismatches_rejected() {
        let g = tile_grid(8, 8, 4, 4).unwrap();
        assert!(stack_tiles(&Tensor::zeros(&[1, 8, 7]), &g).is_err());
        assert!(reassemble_tiles(&Tensor::zeros(&[3, 1, 4, 4]), &g).is_err());
    }

    proptest! {
        #[test]
        fn stack_reassemble_round_trip(
            cols in 1usize..4, rows in 1usize..4, tw in 1usize..6, th in 1usize..6, c in 1usize..4,
            seed in any::<u64>()
        ) {
            let g = tile_grid(cols * tw, rows * th, tw, th).unwrap();
            let mut s = seed;
            let img = Tensor::from_fn(&[c, g.padded_width, g.padded_height], |_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            }).unwrap();
            let back = reassemble_tiles(&stack_tiles(&img, &g).unwrap(), &g).unwrap();
            prop_assert_eq!(back, img);
        }
    }
}
