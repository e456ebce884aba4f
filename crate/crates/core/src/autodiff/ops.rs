//! Graph builders: each op validates shapes, runs the forward computation,
//! and records the node with its backward-rule identifier.
//!
//! Shape rules are strict: elementwise ops demand identical shapes, with
//! the single exception that a one-element operand broadcasts against any
//! tensor. Everything else requires an explicit reshape.

use super::{AdError, Graph, NodeId, Op, ParamStore};
use crate::scalar::{sigmoid, Scalar};
use crate::spline::Grid;
use crate::tensor::{Tensor, TensorError};

impl<T: Scalar> Graph<T> {
    /// Leaf holding a constant (inputs, targets, noise draws).
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Const, vec![])
    }

    /// Leaf bound to a registered trainable parameter.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<NodeId, AdError> {
        let value = store
            .get(name)
            .ok_or_else(|| AdError::UnknownParam(name.to_string()))?
            .clone();
        Ok(self.push(value, Op::Param(name.to_string()), vec![]))
    }

    fn binary_elementwise(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>, AdError> {
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        let out = if va.shape() == vb.shape() {
            va.zip_map(vb, op_name, &f)?
        } else if va.is_scalar() {
            let s = va.first();
            vb.map(|v| f(s, v))
        } else if vb.is_scalar() {
            let s = vb.first();
            va.map(|v| f(v, s))
        } else {
            return Err(TensorError::ShapeMismatch {
                op: op_name,
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            }
            .into());
        };
        Self::check_finite(out, op_name)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let out = self.binary_elementwise("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add, vec![a, b]))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let out = self.binary_elementwise("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub, vec![a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let out = self.binary_elementwise("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul, vec![a, b]))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        let out = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        let out = Self::check_finite(out, "matmul")?;
        Ok(self.push(out, Op::Matmul, vec![a, b]))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, AdError> {
        let out = self.nodes[a.0].value.transpose()?;
        Ok(self.push(out, Op::Transpose, vec![a]))
    }

    pub fn concat(&mut self, axis: usize, parts: &[NodeId]) -> Result<NodeId, AdError> {
        let tensors: Vec<&Tensor<T>> = parts.iter().map(|id| &self.nodes[id.0].value).collect();
        let out = Tensor::concat(axis, &tensors)?;
        Ok(self.push(out, Op::Concat { axis }, parts.to_vec()))
    }

    pub fn slice(
        &mut self,
        a: NodeId,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<NodeId, AdError> {
        let out = self.nodes[a.0].value.slice(axis, start, len)?;
        Ok(self.push(out, Op::Slice { axis, start }, vec![a]))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId, AdError> {
        let out = self.nodes[a.0].value.reshape(shape)?;
        Ok(self.push(out, Op::Reshape, vec![a]))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, AdError> {
        let out = Self::check_finite(Tensor::scalar(self.nodes[a.0].value.sum()), "sum")?;
        Ok(self.push(out, Op::Sum, vec![a]))
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId, AdError> {
        let out = Self::check_finite(Tensor::scalar(self.nodes[a.0].value.mean()), "mean")?;
        Ok(self.push(out, Op::Mean, vec![a]))
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId, AdError> {
        let out = self.nodes[a.0].value.map(|v| v.abs());
        Ok(self.push(out, Op::Abs, vec![a]))
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId, AdError> {
        let out = Self::check_finite(self.nodes[a.0].value.map(|v| v.exp()), "exp")?;
        Ok(self.push(out, Op::Exp, vec![a]))
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId, AdError> {
        let value = &self.nodes[a.0].value;
        if let Some(&bad) = value.data().iter().find(|&&v| v <= T::zero()) {
            return Err(AdError::Domain {
                op: "log",
                detail: format!("log of non-positive value {bad}"),
            });
        }
        let out = Self::check_finite(value.map(|v| v.ln()), "log")?;
        Ok(self.push(out, Op::Log, vec![a]))
    }

    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId, AdError> {
        let value = &self.nodes[a.0].value;
        if let Some(&bad) = value.data().iter().find(|&&v| v <= T::zero()) {
            return Err(AdError::Domain {
                op: "sqrt",
                detail: format!("sqrt of non-positive value {bad}"),
            });
        }
        let out = value.map(|v| v.sqrt());
        Ok(self.push(out, Op::Sqrt, vec![a]))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId, AdError> {
        let out = Self::check_finite(self.nodes[a.0].value.map(|v| v * v), "square")?;
        Ok(self.push(out, Op::Square, vec![a]))
    }

    /// `x * sigmoid(x)`.
    pub fn silu(&mut self, a: NodeId) -> Result<NodeId, AdError> {
        let out = self.nodes[a.0].value.map(|v| v * sigmoid(v));
        Ok(self.push(out, Op::Silu, vec![a]))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, AdError> {
        let out = self.nodes[a.0].value.map(|v| v.tanh());
        Ok(self.push(out, Op::Tanh, vec![a]))
    }

    /// Elementwise clamp to `[lo, hi]`; gradient passes inside the band.
    pub fn clamp(&mut self, a: NodeId, lo: T, hi: T) -> Result<NodeId, AdError> {
        let out = self.nodes[a.0].value.map(|v| v.max(lo).min(hi));
        Ok(self.push(out, Op::Clamp { lo, hi }, vec![a]))
    }

    pub fn scalar_mul(&mut self, a: NodeId, c: T) -> Result<NodeId, AdError> {
        let out = Self::check_finite(self.nodes[a.0].value.scale(c), "scalar_mul")?;
        Ok(self.push(out, Op::ScalarMul { c }, vec![a]))
    }

    pub fn scalar_add(&mut self, a: NodeId, c: T) -> Result<NodeId, AdError> {
        let out = Self::check_finite(self.nodes[a.0].value.add_scalar(c), "scalar_add")?;
        Ok(self.push(out, Op::ScalarAdd, vec![a]))
    }

    /// Add a length-`n` vector to every row of a `[b x n]` matrix.
    pub fn add_row(&mut self, mat: NodeId, vec_id: NodeId) -> Result<NodeId, AdError> {
        let m = &self.nodes[mat.0].value;
        let v = &self.nodes[vec_id.0].value;
        if m.ndim() != 2 || v.ndim() != 1 || m.cols() != v.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: m.shape().to_vec(),
                rhs: v.shape().to_vec(),
            }
            .into());
        }
        let (rows, cols) = (m.rows(), m.cols());
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m.at2(i, j) + v.data()[j]);
            }
        }
        let out = Self::check_finite(
            Tensor::from_vec_allow_non_finite(vec![rows, cols], data)?,
            "add_row",
        )?;
        Ok(self.push(out, Op::AddRow, vec![mat, vec_id]))
    }

    /// Scale every row of a `[b x n]` matrix elementwise by a length-`n` vector.
    pub fn mul_row(&mut self, mat: NodeId, vec_id: NodeId) -> Result<NodeId, AdError> {
        let m = &self.nodes[mat.0].value;
        let v = &self.nodes[vec_id.0].value;
        if m.ndim() != 2 || v.ndim() != 1 || m.cols() != v.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "mul_row",
                lhs: m.shape().to_vec(),
                rhs: v.shape().to_vec(),
            }
            .into());
        }
        let (rows, cols) = (m.rows(), m.cols());
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m.at2(i, j) * v.data()[j]);
            }
        }
        let out = Self::check_finite(
            Tensor::from_vec_allow_non_finite(vec![rows, cols], data)?,
            "mul_row",
        )?;
        Ok(self.push(out, Op::MulRow, vec![mat, vec_id]))
    }

    /// B-spline basis expansion of a length-`b` vector into `[b x basis_count]`.
    /// Inputs outside the grid range are clamped; clamp events are counted
    /// on the graph as a diagnostic.
    pub fn spline_basis(&mut self, a: NodeId, grid: &Grid<T>) -> Result<NodeId, AdError> {
        let x = &self.nodes[a.0].value;
        if x.ndim() != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "spline_basis",
                lhs: x.shape().to_vec(),
                rhs: vec![],
            }
            .into());
        }
        let b = x.shape()[0];
        let m = grid.basis_count();
        let mut data = Vec::with_capacity(b * m);
        let mut clamps = 0u64;
        for &xi in x.data() {
            if grid.clamp(xi).1 {
                clamps += 1;
            }
            data.extend_from_slice(&grid.basis(xi));
        }
        self.note_clamps(clamps);
        let out = Tensor::from_vec_allow_non_finite(vec![b, m], data)?;
        Ok(self.push(out, Op::SplineBasis { grid: grid.clone() }, vec![a]))
    }
}
