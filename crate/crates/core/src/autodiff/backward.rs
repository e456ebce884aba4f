//! Reverse rules, one per op. Accumulation order follows tape order, so a
//! fixed graph always produces bit-identical gradients.

use super::{AdError, Graph, NodeId, Op};
use crate::scalar::{sigmoid, Scalar};
use crate::tensor::Tensor;

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, contribution: Tensor<T>) {
    match slot {
        Some(existing) => {
            *existing = existing
                .add(&contribution)
                .expect("gradient contributions to one node must share its shape");
        }
        None => *slot = Some(contribution),
    }
}

impl<T: Scalar> Graph<T> {
    pub(crate) fn apply_backward(
        &self,
        id: usize,
        upstream: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<(), AdError> {
        let node = &self.nodes[id];
        let parents = &node.parents;
        let value = |p: NodeId| &self.nodes[p.0].value;
        match &node.op {
            Op::Const | Op::Param(_) => {}
            Op::Add => {
                for &p in parents {
                    accumulate(&mut grads[p.0], reduce_to_shape(upstream, value(p)));
                }
            }
            Op::Sub => {
                accumulate(
                    &mut grads[parents[0].0],
                    reduce_to_shape(upstream, value(parents[0])),
                );
                accumulate(
                    &mut grads[parents[1].0],
                    reduce_to_shape(&upstream.neg(), value(parents[1])),
                );
            }
            Op::Mul => {
                let (a, b) = (parents[0], parents[1]);
                // d(a*b) = upstream * other operand, collapsed onto scalar operands
                let scaled_by = |other: &Tensor<T>| -> Tensor<T> {
                    if other.is_scalar() {
                        upstream.scale(other.first())
                    } else {
                        upstream.mul(other).expect("shape checked at build")
                    }
                };
                accumulate(
                    &mut grads[a.0],
                    reduce_to_shape(&scaled_by(value(b)), value(a)),
                );
                accumulate(
                    &mut grads[b.0],
                    reduce_to_shape(&scaled_by(value(a)), value(b)),
                );
            }
            Op::Matmul => {
                let (a, b) = (parents[0], parents[1]);
                let da = upstream
                    .matmul(&value(b).transpose().expect("2d"))
                    .expect("shape checked at build");
                let db = value(a)
                    .transpose()
                    .expect("2d")
                    .matmul(upstream)
                    .expect("shape checked at build");
                accumulate(&mut grads[a.0], da);
                accumulate(&mut grads[b.0], db);
            }
            Op::Transpose => {
                accumulate(&mut grads[parents[0].0], upstream.transpose().expect("2d"));
            }
            Op::Concat { axis } => {
                let mut offset = 0;
                for &p in parents {
                    let extent = value(p).shape()[*axis];
                    let part = upstream
                        .slice(*axis, offset, extent)
                        .expect("within concat output");
                    accumulate(&mut grads[p.0], part);
                    offset += extent;
                }
            }
            Op::Slice { axis, start } => {
                let parent = parents[0];
                let mut padded = Tensor::zeros(value(parent).shape().to_vec());
                padded
                    .slice_add_assign(*axis, *start, upstream)
                    .expect("slice region validated at build");
                accumulate(&mut grads[parent.0], padded);
            }
            Op::Reshape => {
                let parent = parents[0];
                accumulate(
                    &mut grads[parent.0],
                    upstream
                        .reshape(value(parent).shape().to_vec())
                        .expect("same length"),
                );
            }
            Op::Sum => {
                let parent = parents[0];
                accumulate(
                    &mut grads[parent.0],
                    Tensor::full(value(parent).shape().to_vec(), upstream.first()),
                );
            }
            Op::Mean => {
                let parent = parents[0];
                let n = T::lit(value(parent).len() as f64);
                accumulate(
                    &mut grads[parent.0],
                    Tensor::full(value(parent).shape().to_vec(), upstream.first() / n),
                );
            }
            Op::Abs => {
                // subgradient 0 at exactly zero
                let parent = parents[0];
                let sign = value(parent).map(|v| {
                    if v > T::zero() {
                        T::one()
                    } else if v < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    }
                });
                accumulate(
                    &mut grads[parent.0],
                    upstream.mul(&sign).expect("same shape"),
                );
            }
            Op::Exp => {
                accumulate(
                    &mut grads[parents[0].0],
                    upstream.mul(&node.value).expect("same shape"),
                );
            }
            Op::Log => {
                let parent = parents[0];
                let inv = value(parent).map(|v| T::one() / v);
                accumulate(
                    &mut grads[parent.0],
                    upstream.mul(&inv).expect("same shape"),
                );
            }
            Op::Sqrt => {
                let half = T::lit(0.5);
                let d = node.value.map(|v| half / v);
                accumulate(
                    &mut grads[parents[0].0],
                    upstream.mul(&d).expect("same shape"),
                );
            }
            Op::Square => {
                let parent = parents[0];
                let two = T::lit(2.0);
                let d = value(parent).map(|v| two * v);
                accumulate(&mut grads[parent.0], upstream.mul(&d).expect("same shape"));
            }
            Op::Silu => {
                let parent = parents[0];
                let d = value(parent).map(|v| {
                    let s = sigmoid(v);
                    s * (T::one() + v * (T::one() - s))
                });
                accumulate(&mut grads[parent.0], upstream.mul(&d).expect("same shape"));
            }
            Op::Tanh => {
                let d = node.value.map(|v| T::one() - v * v);
                accumulate(
                    &mut grads[parents[0].0],
                    upstream.mul(&d).expect("same shape"),
                );
            }
            Op::Clamp { lo, hi } => {
                let parent = parents[0];
                let (lo, hi) = (*lo, *hi);
                let mask = value(parent).map(|v| {
                    if v >= lo && v <= hi {
                        T::one()
                    } else {
                        T::zero()
                    }
                });
                accumulate(
                    &mut grads[parent.0],
                    upstream.mul(&mask).expect("same shape"),
                );
            }
            Op::ScalarMul { c } => {
                accumulate(&mut grads[parents[0].0], upstream.scale(*c));
            }
            Op::ScalarAdd => {
                accumulate(&mut grads[parents[0].0], upstream.clone());
            }
            Op::AddRow => {
                accumulate(&mut grads[parents[0].0], upstream.clone());
                accumulate(&mut grads[parents[1].0], upstream.column_sums());
            }
            Op::MulRow => {
                let (mat, vec_id) = (parents[0], parents[1]);
                let v = value(vec_id);
                let (rows, cols) = (upstream.rows(), upstream.cols());
                let mut dmat = Vec::with_capacity(rows * cols);
                let mut dvec = vec![T::zero(); cols];
                for i in 0..rows {
                    for j in 0..cols {
                        let u = upstream.at2(i, j);
                        dmat.push(u * v.data()[j]);
                        dvec[j] += u * value(mat).at2(i, j);
                    }
                }
                accumulate(
                    &mut grads[mat.0],
                    Tensor::from_vec_allow_non_finite(vec![rows, cols], dmat).expect("shape"),
                );
                accumulate(
                    &mut grads[vec_id.0],
                    Tensor::from_vec_allow_non_finite(vec![cols], dvec).expect("shape"),
                );
            }
            Op::SplineBasis { grid } => {
                let parent = parents[0];
                let x = value(parent);
                let m = grid.basis_count();
                let mut dx = Vec::with_capacity(x.len());
                for (j, &xj) in x.data().iter().enumerate() {
                    let (_, deriv) = grid.basis_with_derivative(xj);
                    let mut acc = T::zero();
                    for i in 0..m {
                        acc += upstream.at2(j, i) * deriv[i];
                    }
                    dx.push(acc);
                }
                accumulate(
                    &mut grads[parent.0],
                    Tensor::from_vec_allow_non_finite(vec![x.len()], dx).expect("shape"),
                );
            }
        }
        Ok(())
    }
}

/// Collapse an upstream gradient onto a scalar operand of a broadcasting
/// elementwise op; pass it through unchanged otherwise.
fn reduce_to_shape<T: Scalar>(upstream: &Tensor<T>, operand: &Tensor<T>) -> Tensor<T> {
    if operand.shape() == upstream.shape() {
        upstream.clone()
    } else {
        debug_assert!(operand.is_scalar());
        Tensor::from_vec_allow_non_finite(operand.shape().to_vec(), vec![upstream.sum()])
            .expect("scalar shape")
    }
}
