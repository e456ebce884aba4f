//! Kolmogorov-Arnold network layers: learnable univariate functions on the
//! edges, summed into each output node.
//!
//! Every edge (q, p) carries
//! `phi(t) = w_b * silu(t) + w_s * dot(coef, basis(t))`,
//! the spline part on a shared grid, plus a residual silu so untrained
//! edges still pass signal. A layer maps `out[q] = sum_p phi_qp(x_p)`.

use std::fmt;

use crate::autodiff::{AdError, Graph, NodeId, ParamStore};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::spline::{Grid, GridSpec, SplineError};
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Clone, PartialEq)]
pub enum KanError {
    /// Width spec needs at least two entries, all positive.
    BadWidths {
        widths: Vec<usize>,
    },
    /// Attribution requires a non-empty probe batch.
    EmptyProbe,
    Ad(AdError),
    Spline(SplineError),
    Tensor(TensorError),
}

impl fmt::Display for KanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KanError::BadWidths { widths } => {
                write!(f, "bad widths {widths:?}: need >= 2 positive layer sizes")
            }
            KanError::EmptyProbe => write!(f, "probe batch is empty"),
            KanError::Ad(e) => write!(f, "{e}"),
            KanError::Spline(e) => write!(f, "{e}"),
            KanError::Tensor(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for KanError {}

impl From<AdError> for KanError {
    fn from(e: AdError) -> Self {
        KanError::Ad(e)
    }
}

impl From<SplineError> for KanError {
    fn from(e: SplineError) -> Self {
        KanError::Spline(e)
    }
}

impl From<TensorError> for KanError {
    fn from(e: TensorError) -> Self {
        KanError::Tensor(e)
    }
}

/// One layer: `n_in -> n_out` with per-edge base weight, spline scale and
/// spline coefficients, all registered in the parameter store as
/// `{prefix}.w_b` (`[n_out x n_in]`), `{prefix}.w_s` (`[n_out x n_in]`) and
/// `{prefix}.coef` (`[n_out x n_in x basis_count]`).
#[derive(Debug, Clone)]
pub struct KanLayer<T: Scalar> {
    pub n_in: usize,
    pub n_out: usize,
    pub grid: Grid<T>,
    prefix: String,
}

impl<T: Scalar> KanLayer<T> {
    pub fn coef_name(&self) -> String {
        format!("{}.coef", self.prefix)
    }

    pub fn w_b_name(&self) -> String {
        format!("{}.w_b", self.prefix)
    }

    pub fn w_s_name(&self) -> String {
        format!("{}.w_s", self.prefix)
    }

    /// Trainable scalars in this layer: each edge has basis_count + 2.
    pub fn param_count(&self) -> usize {
        self.n_out * self.n_in * (self.grid.basis_count() + 2)
    }

    /// Graph forward: `x` is `[batch x n_in]`, result `[batch x n_out]`.
    pub fn forward_graph(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
    ) -> Result<NodeId, KanError> {
        let shape = g.value(x).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.n_in {
            return Err(TensorError::ShapeMismatch {
                op: "kan_layer_forward",
                lhs: shape,
                rhs: vec![0, self.n_in],
            }
            .into());
        }
        let batch = shape[0];
        let m = self.grid.basis_count();

        let w_b = g.param(store, &self.w_b_name())?;
        let w_s = g.param(store, &self.w_s_name())?;
        let coef = g.param(store, &self.coef_name())?;

        let silu_x = g.silu(x)?;
        let w_b_t = g.transpose(w_b)?;
        let mut acc = g.matmul(silu_x, w_b_t)?;

        for p in 0..self.n_in {
            let xp_col = g.slice(x, 1, p, 1)?;
            let xp = g.reshape(xp_col, vec![batch])?;
            let basis = g.spline_basis(xp, &self.grid)?;

            let coef_p = g.slice(coef, 1, p, 1)?;
            let coef_p = g.reshape(coef_p, vec![self.n_out, m])?;
            let coef_p_t = g.transpose(coef_p)?;
            let spline_part = g.matmul(basis, coef_p_t)?;

            let ws_p = g.slice(w_s, 1, p, 1)?;
            let ws_p = g.reshape(ws_p, vec![self.n_out])?;
            let scaled = g.mul_row(spline_part, ws_p)?;
            acc = g.add(acc, scaled)?;
        }
        Ok(acc)
    }

    /// Plain (tape-free) forward used by evaluation helpers.
    pub fn forward_values(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
    ) -> Result<Tensor<T>, KanError> {
        let w_b = store
            .get(&self.w_b_name())
            .ok_or_else(|| AdError::UnknownParam(self.w_b_name()))?;
        let w_s = store
            .get(&self.w_s_name())
            .ok_or_else(|| AdError::UnknownParam(self.w_s_name()))?;
        let coef = store
            .get(&self.coef_name())
            .ok_or_else(|| AdError::UnknownParam(self.coef_name()))?;
        let batch = x.rows();
        let m = self.grid.basis_count();
        let mut out = Tensor::zeros(vec![batch, self.n_out]);
        for j in 0..batch {
            for p in 0..self.n_in {
                let t = x.at2(j, p);
                let basis = self.grid.basis(t);
                let silu_t = t * crate::scalar::sigmoid(t);
                for q in 0..self.n_out {
                    let mut spline = T::zero();
                    let base = (q * self.n_in + p) * m;
                    for i in 0..m {
                        spline += coef.data()[base + i] * basis[i];
                    }
                    let phi = w_b.at2(q, p) * silu_t + w_s.at2(q, p) * spline;
                    out.set2(j, q, out.at2(j, q) + phi);
                }
            }
        }
        Ok(out)
    }
}

/// Edge-magnitude summary of one layer over a probe batch:
/// `values[q][p] = mean |phi_qp(x_p)|`, all non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeAttribution<T: Scalar> {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `[n_out x n_in]`.
    pub values: Vec<T>,
}

impl<T: Scalar> EdgeAttribution<T> {
    pub fn get(&self, q: usize, p: usize) -> T {
        self.values[q * self.n_in + p]
    }
}

/// A stack of layers; `widths[i]` is the node count entering layer `i`.
#[derive(Debug, Clone)]
pub struct KanNetwork<T: Scalar> {
    pub widths: Vec<usize>,
    pub layers: Vec<KanLayer<T>>,
}

impl<T: Scalar> KanNetwork<T> {
    /// Register freshly initialized parameters for a network with the given
    /// widths under `{prefix}.l{i}.*`. Base weights are uniform in
    /// `(-1/sqrt(n_in), 1/sqrt(n_in))`, spline coefficients are normal with
    /// std `0.1 / basis_count`, spline scales start at one.
    pub fn init(
        store: &mut ParamStore<T>,
        prefix: &str,
        widths: &[usize],
        grid_spec: GridSpec,
        rng: &mut Rng,
    ) -> Result<Self, KanError> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(KanError::BadWidths {
                widths: widths.to_vec(),
            });
        }
        let grid = Grid::uniform(grid_spec)?;
        let m = grid.basis_count();
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for l in 0..widths.len() - 1 {
            let (n_in, n_out) = (widths[l], widths[l + 1]);
            let layer = KanLayer {
                n_in,
                n_out,
                grid: grid.clone(),
                prefix: format!("{prefix}.l{l}"),
            };

            let bound = 1.0 / (n_in as f64).sqrt();
            let w_b: Vec<T> = (0..n_out * n_in)
                .map(|_| T::lit(rng.range(-bound, bound)))
                .collect();
            let coef_std = 0.1 / m as f64;
            let coef: Vec<T> = (0..n_out * n_in * m)
                .map(|_| T::lit(rng.normal() * coef_std))
                .collect();

            store.insert(layer.w_b_name(), Tensor::from_vec(vec![n_out, n_in], w_b)?)?;
            store.insert(layer.w_s_name(), Tensor::ones(vec![n_out, n_in]))?;
            store.insert(
                layer.coef_name(),
                Tensor::from_vec(vec![n_out, n_in, m], coef)?,
            )?;
            layers.push(layer);
        }
        Ok(KanNetwork {
            widths: widths.to_vec(),
            layers,
        })
    }

    /// Convenience seeded constructor.
    pub fn init_seeded(
        store: &mut ParamStore<T>,
        prefix: &str,
        widths: &[usize],
        grid_spec: GridSpec,
        seed: u64,
    ) -> Result<Self, KanError> {
        let mut rng = Rng::seed_from_u64(seed);
        Self::init(store, prefix, widths, grid_spec, &mut rng)
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(KanLayer::param_count).sum()
    }

    /// Graph forward: composition of all layers.
    pub fn forward_graph(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
    ) -> Result<NodeId, KanError> {
        let mut cur = x;
        for layer in &self.layers {
            cur = layer.forward_graph(g, store, cur)?;
        }
        Ok(cur)
    }

    /// Tape-free forward returning the input of every layer plus the final
    /// output (`widths.len()` tensors in total).
    pub fn activations(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
    ) -> Result<Vec<Tensor<T>>, KanError> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward_values(store, acts.last().expect("non-empty"))?;
            acts.push(next);
        }
        Ok(acts)
    }

    /// Tape-free forward, output only.
    pub fn forward_values(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
    ) -> Result<Tensor<T>, KanError> {
        Ok(self.activations(store, x)?.pop().expect("non-empty"))
    }

    /// Mean absolute edge output over a probe batch, per layer.
    pub fn edge_attribution(
        &self,
        store: &ParamStore<T>,
        probe: &Tensor<T>,
    ) -> Result<Vec<EdgeAttribution<T>>, KanError> {
        if probe.ndim() != 2 || probe.rows() == 0 {
            return Err(KanError::EmptyProbe);
        }
        let acts = self.activations(store, probe)?;
        let batch = T::lit(probe.rows() as f64);
        let mut out = Vec::with_capacity(self.layers.len());
        for (layer, x) in self.layers.iter().zip(&acts) {
            let w_b = store.get(&layer.w_b_name()).expect("registered");
            let w_s = store.get(&layer.w_s_name()).expect("registered");
            let coef = store.get(&layer.coef_name()).expect("registered");
            let m = layer.grid.basis_count();
            let mut values = vec![T::zero(); layer.n_out * layer.n_in];
            for j in 0..x.rows() {
                for p in 0..layer.n_in {
                    let t = x.at2(j, p);
                    let basis = layer.grid.basis(t);
                    let silu_t = t * crate::scalar::sigmoid(t);
                    for q in 0..layer.n_out {
                        let mut spline = T::zero();
                        let base = (q * layer.n_in + p) * m;
                        for i in 0..m {
                            spline += coef.data()[base + i] * basis[i];
                        }
                        let phi = w_b.at2(q, p) * silu_t + w_s.at2(q, p) * spline;
                        values[q * layer.n_in + p] += phi.abs();
                    }
                }
            }
            for v in &mut values {
                *v /= batch;
            }
            out.push(EdgeAttribution {
                n_in: layer.n_in,
                n_out: layer.n_out,
                values,
            });
        }
        Ok(out)
    }
}
