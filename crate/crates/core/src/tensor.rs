//! Dense row-major tensors: the universal value type of the training stack.

use std::fmt;

use crate::scalar::Scalar;

/// Errors from tensor construction and plain tensor math.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TensorError {
    /// `product(shape)` does not match the data length.
    ShapeDataMismatch { shape: Vec<usize>, data_len: usize },
    /// A NaN or infinity reached a constructor that rejects them.
    NonFiniteInput { index: usize },
    /// Operand shapes do not conform for the named operation.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// Axis index out of range for the tensor rank.
    AxisOutOfRange { axis: usize, ndim: usize },
    /// Slice range falls outside the axis extent.
    RangeOutOfBounds {
        axis: usize,
        start: usize,
        len: usize,
        extent: usize,
    },
    /// A shape with a zero extent was supplied.
    EmptyShape,
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeDataMismatch { shape, data_len } => {
                write!(
                    f,
                    "shape {shape:?} implies {} elements, got {data_len}",
                    shape.iter().product::<usize>()
                )
            }
            TensorError::NonFiniteInput { index } => {
                write!(f, "non-finite value at flat index {index}")
            }
            TensorError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: incompatible shapes {lhs:?} and {rhs:?}")
            }
            TensorError::AxisOutOfRange { axis, ndim } => {
                write!(f, "axis {axis} out of range for rank {ndim}")
            }
            TensorError::RangeOutOfBounds {
                axis,
                start,
                len,
                extent,
            } => {
                write!(
                    f,
                    "range {start}..{} out of bounds on axis {axis} (extent {extent})",
                    start + len
                )
            }
            TensorError::EmptyShape => write!(f, "shape must have positive extents"),
        }
    }
}

impl std::error::Error for TensorError {}

/// Dense multi-dimensional array of real scalars, row-major.
///
/// Value-semantic: construction copies or takes ownership of the buffer, so
/// later mutation of the source cannot alias the tensor. All constructors
/// except [`Tensor::from_vec_allow_non_finite`] reject NaN/Inf.
#[derive(Clone, PartialEq)]
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}{:?}", self.shape, self.data)
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self, TensorError> {
        Self::check_shape(&shape, data.len())?;
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFiniteInput { index });
        }
        Ok(Tensor { shape, data })
    }

    /// Diagnostics-only constructor that admits NaN/Inf.
    pub fn from_vec_allow_non_finite(shape: Vec<usize>, data: Vec<T>) -> Result<Self, TensorError> {
        Self::check_shape(&shape, data.len())?;
        Ok(Tensor { shape, data })
    }

    pub fn from_slice(shape: Vec<usize>, data: &[T]) -> Result<Self, TensorError> {
        Self::from_vec(shape, data.to_vec())
    }

    fn check_shape(shape: &[usize], data_len: usize) -> Result<(), TensorError> {
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::EmptyShape);
        }
        let expected: usize = shape.iter().product();
        if expected != data_len {
            return Err(TensorError::ShapeDataMismatch {
                shape: shape.to_vec(),
                data_len,
            });
        }
        Ok(())
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn ones(shape: Vec<usize>) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: Vec<usize>, value: T) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// True when the tensor holds exactly one element (shape `[1]`, `[1,1]`, ...).
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn first(&self) -> T {
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row count of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.ndim(), 2);
        self.shape[0]
    }

    /// Column count of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.ndim(), 2);
        self.shape[1]
    }

    pub fn at2(&self, r: usize, c: usize) -> T {
        debug_assert_eq!(self.ndim(), 2);
        self.data[r * self.shape[1] + c]
    }

    pub fn set2(&mut self, r: usize, c: usize, v: T) {
        debug_assert_eq!(self.ndim(), 2);
        self.data[r * self.shape[1] + c] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(
        &self,
        other: &Tensor<T>,
        op: &'static str,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>, TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, c: T) -> Tensor<T> {
        self.map(|v| v * c)
    }

    pub fn add_scalar(&self, c: T) -> Tensor<T> {
        self.map(|v| v + c)
    }

    pub fn neg(&self) -> Tensor<T> {
        self.map(|v| -v)
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn mean(&self) -> T {
        self.sum() / T::lit(self.len() as f64)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    /// `[m x k] @ [k x n] -> [m x n]`, fixed ikj loop order.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        if self.ndim() != 2 || other.ndim() != 2 || self.shape[1] != other.shape[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                let row = &other.data[p * n..(p + 1) * n];
                let dst = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    dst[j] += a * row[j];
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&self) -> Result<Tensor<T>, TensorError> {
        if self.ndim() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "transpose",
                lhs: self.shape.clone(),
                rhs: vec![],
            });
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor {
            shape: vec![c, r],
            data: out,
        })
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor<T>, TensorError> {
        Self::check_shape(&shape, self.data.len())?;
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    /// Concatenate along `axis`. All parts must agree on every other axis.
    pub fn concat(axis: usize, parts: &[&Tensor<T>]) -> Result<Tensor<T>, TensorError> {
        let first = parts.first().ok_or(TensorError::EmptyShape)?;
        let ndim = first.ndim();
        if axis >= ndim {
            return Err(TensorError::AxisOutOfRange { axis, ndim });
        }
        let mut out_shape = first.shape.clone();
        let mut axis_total = 0;
        for part in parts {
            if part.ndim() != ndim {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape.clone(),
                    rhs: part.shape.clone(),
                });
            }
            for (d, (&a, &b)) in first.shape.iter().zip(&part.shape).enumerate() {
                if d != axis && a != b {
                    return Err(TensorError::ShapeMismatch {
                        op: "concat",
                        lhs: first.shape.clone(),
                        rhs: part.shape.clone(),
                    });
                }
            }
            axis_total += part.shape[axis];
        }
        out_shape[axis] = axis_total;

        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for part in parts {
                let block = part.shape[axis] * inner;
                data.extend_from_slice(&part.data[o * block..(o + 1) * block]);
            }
        }
        Ok(Tensor {
            shape: out_shape,
            data,
        })
    }

    /// Contiguous slice `start..start+len` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>, TensorError> {
        let ndim = self.ndim();
        if axis >= ndim {
            return Err(TensorError::AxisOutOfRange { axis, ndim });
        }
        let extent = self.shape[axis];
        if len == 0 || start + len > extent {
            return Err(TensorError::RangeOutOfBounds {
                axis,
                start,
                len,
                extent,
            });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out_shape = self.shape.clone();
        out_shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * extent * inner + start * inner;
            data.extend_from_slice(&self.data[base..base + len * inner]);
        }
        Ok(Tensor {
            shape: out_shape,
            data,
        })
    }

    /// Scatter-add `src` (shaped like the slice) back into `self` at the
    /// slice position. Used by the reverse rule of `slice`.
    pub fn slice_add_assign(
        &mut self,
        axis: usize,
        start: usize,
        src: &Tensor<T>,
    ) -> Result<(), TensorError> {
        let ndim = self.ndim();
        if axis >= ndim {
            return Err(TensorError::AxisOutOfRange { axis, ndim });
        }
        let len = src.shape[axis];
        let extent = self.shape[axis];
        if start + len > extent {
            return Err(TensorError::RangeOutOfBounds {
                axis,
                start,
                len,
                extent,
            });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        for o in 0..outer {
            let dst_base = o * extent * inner + start * inner;
            let src_base = o * len * inner;
            for i in 0..len * inner {
                self.data[dst_base + i] += src.data[src_base + i];
            }
        }
        Ok(())
    }

    /// Gather whole rows of a rank-2 tensor by index.
    pub fn take_rows(&self, indices: &[usize]) -> Tensor<T> {
        debug_assert_eq!(self.ndim(), 2);
        let c = self.shape[1];
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(&self.data[i * c..(i + 1) * c]);
        }
        Tensor {
            shape: vec![indices.len(), c],
            data,
        }
    }

    /// Column-wise sums of a rank-2 tensor, shape `[cols]`.
    pub fn column_sums(&self) -> Tensor<T> {
        debug_assert_eq!(self.ndim(), 2);
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![T::zero(); c];
        for i in 0..r {
            for j in 0..c {
                out[j] += self.data[i * c + j];
            }
        }
        Tensor {
            shape: vec![c],
            data: out,
        }
    }

    /// Max absolute elementwise difference; shapes must already match.
    pub fn max_abs_diff(&self, other: &Tensor<T>) -> T {
        debug_assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type T64 = Tensor<f64>;

    #[test]
    fn construction_happy_path() {
        let t = T64::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.at2(1, 0), 3.0);
    }

    #[test]
    fn construction_zero_vector() {
        let t = T64::from_vec(vec![3], vec![0.0; 3]).unwrap();
        assert_eq!(t.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn construction_rejects_nan() {
        let err = T64::from_vec(vec![2], vec![1.0, f64::NAN]).unwrap_err();
        assert_eq!(err, TensorError::NonFiniteInput { index: 1 });
    }

    #[test]
    fn construction_rejects_shape_mismatch() {
        let err = T64::from_vec(vec![2, 2], vec![1.0]).unwrap_err();
        assert!(matches!(err, TensorError::ShapeDataMismatch { .. }));
    }

    #[test]
    fn value_semantics_do_not_alias_source() {
        let mut src = vec![1.0, 2.0];
        let t = T64::from_slice(vec![2], &src).unwrap();
        src[0] = 99.0;
        assert_eq!(t.data(), &[1.0, 2.0]);
    }

    #[test]
    fn matmul_hand_case() {
        let a = T64::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = T64::from_vec(vec![2, 1], vec![1.0, 1.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_error() {
        let a = T64::zeros(vec![2, 3]);
        let b = T64::zeros(vec![2, 3]);
        assert!(matches!(
            a.matmul(&b),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn concat_axis0_vectors() {
        let a = T64::from_vec(vec![2], vec![1.0, 2.0]).unwrap();
        let b = T64::from_vec(vec![1], vec![3.0]).unwrap();
        let c = T64::concat(0, &[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[3]);
        assert_eq!(c.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn concat_axis1_matrices() {
        let a = T64::from_vec(vec![2, 1], vec![1.0, 3.0]).unwrap();
        let b = T64::from_vec(vec![2, 2], vec![2.0, 9.0, 4.0, 8.0]).unwrap();
        let c = T64::concat(1, &[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.data(), &[1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
    }

    #[test]
    fn slice_and_scatter_round_trip() {
        let t = T64::from_vec(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let s = t.slice(1, 1, 2).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.data(), &[2.0, 3.0, 5.0, 6.0]);

        let mut z = T64::zeros(vec![2, 3]);
        z.slice_add_assign(1, 1, &s).unwrap();
        assert_eq!(z.data(), &[0.0, 2.0, 3.0, 0.0, 5.0, 6.0]);
    }

    #[test]
    fn slice_3d_middle_axis() {
        // shape [2,2,2]: entries 0..8 row-major
        let t = T64::from_vec(vec![2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
        let s = t.slice(1, 1, 1).unwrap();
        assert_eq!(s.shape(), &[2, 1, 2]);
        assert_eq!(s.data(), &[2.0, 3.0, 6.0, 7.0]);
    }

    #[test]
    fn transpose_round_trip() {
        let t = T64::from_vec(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let tt = t.transpose().unwrap();
        assert_eq!(tt.shape(), &[3, 2]);
        assert_eq!(tt.at2(2, 1), 6.0);
        assert_eq!(tt.transpose().unwrap(), t);
    }

    #[test]
    fn column_sums_match_hand_case() {
        let t = T64::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.column_sums().data(), &[4.0, 6.0]);
    }
}
