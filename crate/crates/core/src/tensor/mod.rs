//! Dense row-major `f64` tensors and the handful of linear-algebra and
//! resampling routines the rest of the crate is built on.
//!
//! Spatial maps are stored as `[.., width, height]`: the second-to-last axis
//! is `x`, the last axis is `y`, so a single column `x` of a plane is a
//! contiguous run of `height` values.

mod container;
mod resize;
mod svd;

pub use container::{CONTAINER_MAGIC, CONTAINER_VERSION};
pub use resize::{resize2d, ResizeMethod};
pub use svd::{truncated_svd, SvdResult, MAX_SWEEPS};

use crate::error::{Error, Result};

/// Dense tensor. `shape.iter().product() == data.len()` and every entry is
/// finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    let mut n: usize = 1;
    for (axis, &extent) in shape.iter().enumerate() {
        if extent == 0 {
            return Err(Error::arg(format!("axis {axis} has zero extent")));
        }
        n = n
            .checked_mul(extent)
            .ok_or_else(|| Error::arg(format!("shape {shape:?} overflows usize")))?;
    }
    Ok(n)
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(Error::arg(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value at flat index {i}")));
        }
        Ok(Self { shape, data })
    }

    /// Construction for values the caller has already validated.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = check_shape(shape).expect("zeros: invalid shape");
        Self::from_parts(shape.to_vec(), vec![0.0; n])
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        assert!(value.is_finite());
        let n = check_shape(shape).expect("filled: invalid shape");
        Self::from_parts(shape.to_vec(), vec![value; n])
    }

    /// Builds a tensor by evaluating `f` at each multi-index in row-major order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let n = check_shape(shape)?;
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            for axis in (0..shape.len()).rev() {
                idx[axis] += 1;
                if idx[axis] < shape[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        Self::new(shape.to_vec(), data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for axis in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * self.shape[axis + 1];
        }
        strides
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &n)| {
                assert!(i < n, "index {index:?} out of bounds for {:?}", self.shape);
                acc * n + i
            })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != self.data.len() {
            return Err(Error::arg(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self::from_parts(shape, self.data))
    }

    /// Rows of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        assert_eq!(self.rank(), 2, "rows() on rank-{} tensor", self.rank());
        self.shape[0]
    }

    /// Columns of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        assert_eq!(self.rank(), 2, "cols() on rank-{} tensor", self.rank());
        self.shape[1]
    }

    /// Contiguous sub-block `index` along axis 0 (a channel plane for
    /// `[C, W, H]` maps, a row for matrices).
    pub fn slab(&self, index: usize) -> &[f64] {
        let step = self.data.len() / self.shape[0];
        &self.data[index * step..(index + 1) * step]
    }

    pub(crate) fn slab_mut(&mut self, index: usize) -> &mut [f64] {
        let step = self.data.len() / self.shape[0];
        &mut self.data[index * step..(index + 1) * step]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    /// Concatenates along axis 0. All inputs must agree on the trailing axes.
    pub fn concat(parts: &[&Tensor]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::arg("concat of zero tensors"))?;
        let tail = &first.shape[1..];
        let mut lead = 0;
        let mut data = Vec::with_capacity(parts.iter().map(|t| t.len()).sum());
        for (i, t) in parts.iter().enumerate() {
            if t.rank() != first.rank() || &t.shape[1..] != tail {
                return Err(Error::arg(format!(
                    "concat part {i} has shape {:?}, expected [_, {tail:?}]",
                    t.shape
                )));
            }
            lead += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        let mut shape = first.shape.clone();
        shape[0] = lead;
        Ok(Self::from_parts(shape, data))
    }

    /// Mode-`mode` unfolding: an `extent(mode) x prod(other extents)` matrix.
    ///
    /// Columns enumerate the remaining axes in increasing axis order with the
    /// lowest remaining axis varying fastest: for a `[I0, I1, I2]` tensor
    /// unfolded on mode 1, entry `(i0, i1, i2)` lands in column `i0 + I0 * i2`.
    pub fn unfold(&self, mode: usize) -> Result<Self> {
        if mode >= self.rank() {
            return Err(Error::arg(format!(
                "mode {mode} out of range for rank-{} tensor",
                self.rank()
            )));
        }
        let rows = self.shape[mode];
        let cols = self.data.len() / rows;
        let col_strides = unfold_column_strides(&self.shape, mode);
        let mut out = vec![0.0; self.data.len()];
        self.for_each_index(|flat, idx| {
            let col: usize = idx
                .iter()
                .zip(&col_strides)
                .map(|(&i, &s)| i * s)
                .sum();
            out[idx[mode] * cols + col] = self.data[flat];
        });
        Ok(Self::from_parts(vec![rows, cols], out))
    }

    /// Inverse of [`Tensor::unfold`].
    pub fn fold(matrix: &Tensor, mode: usize, shape: &[usize]) -> Result<Self> {
        if mode >= shape.len() {
            return Err(Error::arg(format!(
                "mode {mode} out of range for rank-{} shape",
                shape.len()
            )));
        }
        let n = check_shape(shape)?;
        if matrix.rank() != 2 || matrix.rows() != shape[mode] || matrix.len() != n {
            return Err(Error::arg(format!(
                "matrix {:?} is not a mode-{mode} unfolding of {shape:?}",
                matrix.shape
            )));
        }
        let cols = matrix.cols();
        let col_strides = unfold_column_strides(shape, mode);
        let mut out = Self::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for flat in 0..n {
            let col: usize = idx
                .iter()
                .zip(&col_strides)
                .map(|(&i, &s)| i * s)
                .sum();
            out.data[flat] = matrix.data[idx[mode] * cols + col];
            advance(&mut idx, shape);
        }
        Ok(out)
    }

    fn for_each_index(&self, mut f: impl FnMut(usize, &[usize])) {
        let mut idx = vec![0usize; self.shape.len()];
        for flat in 0..self.data.len() {
            f(flat, &idx);
            advance(&mut idx, &self.shape);
        }
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self::from_parts(vec![c, r], out)
    }

    pub fn matmul(&self, rhs: &Tensor) -> Result<Self> {
        if self.rank() != 2 || rhs.rank() != 2 || self.cols() != rhs.rows() {
            return Err(Error::arg(format!(
                "matmul shape mismatch: {:?} x {:?}",
                self.shape, rhs.shape
            )));
        }
        let (m, k, n) = (self.rows(), self.cols(), rhs.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in row.iter_mut().zip(&rhs.data[p * n..(p + 1) * n]) {
                    *o += a * b;
                }
            }
        }
        Self::new(vec![m, n], out)
    }

    /// `n x n` identity.
    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let c = self.cols();
        (0..self.rows()).map(|i| self.data[i * c + j]).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        container::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        container::decode(bytes)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn advance(idx: &mut [usize], shape: &[usize]) {
    for axis in (0..shape.len()).rev() {
        idx[axis] += 1;
        if idx[axis] < shape[axis] {
            return;
        }
        idx[axis] = 0;
    }
}

fn unfold_column_strides(shape: &[usize], mode: usize) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for (axis, &extent) in shape.iter().enumerate() {
        if axis == mode {
            continue;
        }
        strides[axis] = acc;
        acc *= extent;
    }
    strides
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iota(shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert!(matches!(
            Tensor::new(vec![2], vec![1.0, f64::NAN]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn unfold_shape() {
        let t = iota(&[2, 3, 4]);
        assert_eq!(t.unfold(0).unwrap().shape(), &[2, 12]);
        assert_eq!(t.unfold(2).unwrap().shape(), &[4, 6]);
        assert!(t.unfold(3).is_err());
    }

    #[test]
    fn unfold_matches_index_enumeration() {
        // Brute force: walk every multi-index and place it by the documented
        // column rule (lowest remaining axis fastest).
        let t = iota(&[2, 2, 2]);
        let m = t.unfold(1).unwrap();
        let mut expected = vec![vec![0.0; 4]; 2];
        for i0 in 0..2 {
            for i1 in 0..2 {
                for i2 in 0..2 {
                    expected[i1][i0 + 2 * i2] = (i0 * 4 + i1 * 2 + i2) as f64;
                }
            }
        }
        assert_eq!(m.slab(0), expected[0].as_slice());
        assert_eq!(m.slab(1), expected[1].as_slice());
        let mut row0 = m.slab(0).to_vec();
        row0.sort_by(f64::total_cmp);
        assert_eq!(row0, vec![0.0, 1.0, 4.0, 5.0]);
    }

    #[test]
    fn matmul_and_transpose() {
        let a = Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = a.transpose();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[14., 32., 32., 77.]);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn concat_leading_axis() {
        let a = iota(&[1, 2, 2]);
        let b = iota(&[2, 2, 2]);
        let c = Tensor::concat(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[3, 2, 2]);
        assert_eq!(&c.data()[4..], b.data());
        assert!(Tensor::concat(&[&a, &iota(&[1, 2, 3])]).is_err());
    }

    fn arb_tensor() -> impl Strategy<Value = Tensor> {
        prop::collection::vec(1usize..4, 1..=5).prop_flat_map(|shape| {
            let n = shape.iter().product::<usize>();
            prop::collection::vec(-1e3f64..1e3, n)
                .prop_map(move |data| Tensor::new(shape.clone(), data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn fold_inverts_unfold(t in arb_tensor()) {
            for mode in 0..t.rank() {
                let m = t.unfold(mode).unwrap();
                prop_assert_eq!(m.rows(), t.shape()[mode]);
                let back = Tensor::fold(&m, mode, t.shape()).unwrap();
                prop_assert_eq!(&back, &t);
            }
        }

        #[test]
        fn container_round_trip_is_bit_exact(t in arb_tensor()) {
            let bytes = t.to_bytes();
            let back = Tensor::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            let same = back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }
}
