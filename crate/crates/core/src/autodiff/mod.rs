//! Reverse-mode automatic differentiation over dense tensors.
//!
//! Define-by-run: a [`Graph`] is rebuilt per minibatch, ops append nodes to
//! a tape, and [`Graph::backward`] walks it in reverse. The tape survives
//! backward, so several losses sharing subgraphs can each run their own
//! backward pass against one parameter snapshot — the two-objective
//! gradient coordination needs exactly that.

mod backward;
mod grad_check;
mod ops;

pub use grad_check::{grad_check, GradCheckError};

use std::collections::BTreeMap;
use std::fmt;

use crate::scalar::Scalar;
use crate::spline::Grid;
use crate::tensor::{Tensor, TensorError};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

/// Errors raised while building a graph or running backward.
#[derive(Debug, Clone, PartialEq)]
pub enum AdError {
    Tensor(TensorError),
    /// Input outside the mathematical domain of the op (log/sqrt of
    /// non-positive values).
    Domain {
        op: &'static str,
        detail: String,
    },
    /// An op produced NaN or infinity.
    NonFiniteResult {
        op: &'static str,
    },
    /// backward() requires a single-element loss.
    NonScalarLoss {
        shape: Vec<usize>,
    },
    UnknownParam(String),
    DuplicateParam(String),
}

impl fmt::Display for AdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdError::Tensor(e) => write!(f, "{e}"),
            AdError::Domain { op, detail } => write!(f, "{op}: domain error: {detail}"),
            AdError::NonFiniteResult { op } => write!(f, "{op}: produced non-finite values"),
            AdError::NonScalarLoss { shape } => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            AdError::UnknownParam(name) => write!(f, "unknown parameter `{name}`"),
            AdError::DuplicateParam(name) => write!(f, "parameter `{name}` already registered"),
        }
    }
}

impl std::error::Error for AdError {}

impl From<TensorError> for AdError {
    fn from(e: TensorError) -> Self {
        AdError::Tensor(e)
    }
}

/// Backward-rule identifier recorded on each node.
#[derive(Debug, Clone)]
pub(crate) enum Op<T: Scalar> {
    Const,
    Param(String),
    Add,
    Sub,
    Mul,
    Matmul,
    Transpose,
    Concat { axis: usize },
    Slice { axis: usize, start: usize },
    Reshape,
    Sum,
    Mean,
    Abs,
    Exp,
    Log,
    Sqrt,
    Square,
    Silu,
    Tanh,
    Clamp { lo: T, hi: T },
    ScalarMul { c: T },
    ScalarAdd,
    AddRow,
    MulRow,
    SplineBasis { grid: Grid<T> },
}

pub(crate) struct Node<T: Scalar> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    pub(crate) parents: Vec<NodeId>,
}

/// Registry of named trainable parameters. Deterministically ordered.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T: Scalar> {
    inner: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            inner: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<(), AdError> {
        let name = name.into();
        if self.inner.contains_key(&name) {
            return Err(AdError::DuplicateParam(name));
        }
        self.inner.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.inner.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.inner.get_mut(name)
    }

    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<(), AdError> {
        match self.inner.get_mut(name) {
            Some(slot) => {
                debug_assert_eq!(slot.shape(), value.shape());
                *slot = value;
                Ok(())
            }
            None => Err(AdError::UnknownParam(name.to_string())),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.inner.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.inner.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    /// Total number of scalar entries across all parameters.
    pub fn total_len(&self) -> usize {
        self.inner.values().map(|t| t.len()).sum()
    }
}

/// Gradients keyed by parameter identifier. Keys are exactly the registered
/// parameters reachable from the loss that produced the map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradientMap<T: Scalar> {
    inner: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> GradientMap<T> {
    pub fn new() -> Self {
        GradientMap {
            inner: BTreeMap::new(),
        }
    }

    /// Add a contribution, summing with any existing entry.
    pub fn accumulate(&mut self, name: &str, grad: Tensor<T>) {
        match self.inner.get_mut(name) {
            Some(slot) => {
                *slot = slot
                    .add(&grad)
                    .expect("gradient shapes for one parameter must agree");
            }
            None => {
                self.inner.insert(name.to_string(), grad);
            }
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Tensor<T>) {
        self.inner.insert(name.into(), grad);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.inner.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.inner.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.inner.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }
}

/// Define-by-run computation tape.
pub struct Graph<T: Scalar> {
    pub(crate) nodes: Vec<Node<T>>,
    last_grads: Vec<Option<Tensor<T>>>,
    clamp_events: u64,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            last_grads: Vec::new(),
            clamp_events: 0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Scalar forward value (first element) of a node.
    pub fn scalar_value(&self, id: NodeId) -> T {
        self.nodes[id.0].value.first()
    }

    /// Gradient of a node from the most recent backward pass; `None` when
    /// the node was unreachable from that loss (i.e. its gradient is zero).
    pub fn grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.last_grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a node, materializing zeros for unreachable nodes.
    pub fn grad_or_zeros(&self, id: NodeId) -> Tensor<T> {
        match self.grad(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.nodes[id.0].value.shape().to_vec()),
        }
    }

    /// How many spline-basis evaluations fell outside the grid range and
    /// were clamped while building this graph.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events
    }

    pub(crate) fn note_clamps(&mut self, n: u64) {
        self.clamp_events += n;
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: Vec<NodeId>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, op, parents });
        id
    }

    pub(crate) fn check_finite(value: Tensor<T>, op: &'static str) -> Result<Tensor<T>, AdError> {
        if value.all_finite() {
            Ok(value)
        } else {
            Err(AdError::NonFiniteResult { op })
        }
    }

    /// Reverse-topological gradient accumulation from a scalar loss.
    ///
    /// Returns gradients for every parameter leaf reachable from `loss`;
    /// the tape is retained, so further backward calls on other losses are
    /// valid as long as parameters have not been mutated in between.
    pub fn backward(&mut self, loss: NodeId) -> Result<GradientMap<T>, AdError> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 {
            return Err(AdError::NonScalarLoss {
                shape: loss_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(loss_value.shape().to_vec()));

        // Creation order is a topological order, so one reverse sweep works.
        for id in (0..=loss.0).rev() {
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            self.apply_backward(id, &upstream, &mut grads)?;
            grads[id] = Some(upstream);
        }

        let mut map = GradientMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(name) = &node.op {
                if let Some(g) = &grads[idx] {
                    map.accumulate(name, g.clone());
                }
            }
        }
        self.last_grads = grads;
        Ok(map)
    }
}
