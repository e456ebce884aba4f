//! Per-modality variational information bottleneck.
//!
//! Each modality's features are encoded by two small nets into the mean and
//! log-variance of a diagonal Gaussian; a reparameterized sample feeds both
//! the fusion head and a linear unimodal decoder. The loss combines MAE
//! likelihood terms with a closed-form KL pull toward the standard normal,
//! weighted by the compression coefficient beta.

use crate::autodiff::{AdError, Graph, NodeId, ParamStore};
use crate::modality::PerModality;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Log-variance outputs are clamped to this band before exponentiation.
pub const LOG_VAR_CLAMP: f64 = 10.0;

/// Shapes and parameter names of one modality's mean / log-variance nets
/// (each `affine -> silu -> affine`). Parameters live in the store under
/// `{prefix}.mu.*` and `{prefix}.logvar.*`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEncoder {
    pub in_dim: usize,
    pub mid_dim: usize,
    pub code_dim: usize,
    prefix: String,
}

impl GaussianEncoder {
    /// Register freshly initialized parameters: weights uniform in
    /// `(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        in_dim: usize,
        mid_dim: usize,
        code_dim: usize,
        rng: &mut Rng,
    ) -> Result<Self, AdError> {
        let enc = GaussianEncoder {
            in_dim,
            mid_dim,
            code_dim,
            prefix: prefix.to_string(),
        };
        for net in ["mu", "logvar"] {
            let w1: Vec<T> = (0..in_dim * mid_dim)
                .map(|_| T::lit(rng.range(-1.0, 1.0) / (in_dim as f64).sqrt()))
                .collect();
            let w2: Vec<T> = (0..mid_dim * code_dim)
                .map(|_| T::lit(rng.range(-1.0, 1.0) / (mid_dim as f64).sqrt()))
                .collect();
            store.insert(
                format!("{prefix}.{net}.w1"),
                Tensor::from_vec(vec![in_dim, mid_dim], w1)?,
            )?;
            store.insert(format!("{prefix}.{net}.b1"), Tensor::zeros(vec![mid_dim]))?;
            store.insert(
                format!("{prefix}.{net}.w2"),
                Tensor::from_vec(vec![mid_dim, code_dim], w2)?,
            )?;
            store.insert(format!("{prefix}.{net}.b2"), Tensor::zeros(vec![code_dim]))?;
        }
        Ok(enc)
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(8);
        for net in ["mu", "logvar"] {
            for p in ["w1", "b1", "w2", "b2"] {
                names.push(format!("{}.{net}.{p}", self.prefix));
            }
        }
        names
    }

    fn net_forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        net: &str,
        x: NodeId,
    ) -> Result<NodeId, AdError> {
        let w1 = g.param(store, &format!("{}.{net}.w1", self.prefix))?;
        let b1 = g.param(store, &format!("{}.{net}.b1", self.prefix))?;
        let w2 = g.param(store, &format!("{}.{net}.w2", self.prefix))?;
        let b2 = g.param(store, &format!("{}.{net}.b2", self.prefix))?;
        let h = g.matmul(x, w1)?;
        let h = g.add_row(h, b1)?;
        let h = g.silu(h)?;
        let out = g.matmul(h, w2)?;
        g.add_row(out, b2)
    }
}

/// Graph handles of one modality's stochastic code.
#[derive(Debug, Clone, Copy)]
pub struct Code {
    pub mu: NodeId,
    pub log_var: NodeId,
    /// `mu + sigma * eps`, the reparameterized sample.
    pub sample: NodeId,
}

/// Encode a `[batch x in_dim]` feature block into a diagonal-Gaussian code,
/// sampling with the provided noise (`[batch x code_dim]`). All randomness
/// lives in `eps`, so gradients flow through the mean and log-variance.
pub fn encode<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    enc: &GaussianEncoder,
    x: NodeId,
    eps: &Tensor<T>,
) -> Result<Code, AdError> {
    let mu = enc.net_forward(g, store, "mu", x)?;
    let raw_lv = enc.net_forward(g, store, "logvar", x)?;
    let log_var = g.clamp(raw_lv, T::lit(-LOG_VAR_CLAMP), T::lit(LOG_VAR_CLAMP))?;
    let half_lv = g.scalar_mul(log_var, T::lit(0.5))?;
    let sigma = g.exp(half_lv)?;
    let eps_node = g.constant(eps.clone());
    let noise = g.mul(sigma, eps_node)?;
    let sample = g.add(mu, noise)?;
    Ok(Code {
        mu,
        log_var,
        sample,
    })
}

/// Closed-form `KL(N(mu, diag(sigma^2)) || N(0, I))`, summed over every
/// entry: `0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2)`.
pub fn kl_std_normal<T: Scalar>(
    g: &mut Graph<T>,
    mu: NodeId,
    log_var: NodeId,
) -> Result<NodeId, AdError> {
    let mu_sq = g.square(mu)?;
    let var = g.exp(log_var)?;
    let sum_terms = g.add(mu_sq, var)?;
    let minus_lv = g.sub(sum_terms, log_var)?;
    let shifted = g.scalar_add(minus_lv, -T::one())?;
    let total = g.sum(shifted)?;
    g.scalar_mul(total, T::lit(0.5))
}

/// Mean absolute error over the batch (the constant of the Laplace
/// likelihood is dropped; it has no gradient).
pub fn nll_mae<T: Scalar>(
    g: &mut Graph<T>,
    prediction: NodeId,
    target: NodeId,
) -> Result<NodeId, AdError> {
    let diff = g.sub(prediction, target)?;
    let dist = g.abs(diff)?;
    g.mean(dist)
}

/// The loss decomposition handed to gradient coordination.
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown {
    pub total: NodeId,
    /// MAE of the fused prediction.
    pub multi: NodeId,
    /// Per-modality `MAE + beta * KL / batch`.
    pub uni: PerModality<NodeId>,
    /// Per-modality raw KL terms (diagnostics).
    pub kl: PerModality<NodeId>,
}

/// Assemble the full objective:
/// `total = mae(y_multi, y) + sum_m [ mae(y_m, y) + beta * KL_m / batch ]`.
/// Minimizing it maximizes the variational bound up to dropped constants.
pub fn drd_mib_loss<T: Scalar>(
    g: &mut Graph<T>,
    y_hat_multi: NodeId,
    y_hat_uni: &PerModality<NodeId>,
    codes: &PerModality<Code>,
    y: NodeId,
    beta: T,
) -> Result<LossBreakdown, AdError> {
    let batch = g.value(y).shape()[0];
    let multi = nll_mae(g, y_hat_multi, y)?;

    let kl = codes.try_map(|_, code| kl_std_normal(g, code.mu, code.log_var))?;
    let uni = y_hat_uni.try_map(|m, &pred| {
        let mae = nll_mae(g, pred, y)?;
        let kl_scaled = g.scalar_mul(*kl.get(m), beta / T::lit(batch as f64))?;
        g.add(mae, kl_scaled)
    })?;

    let mut total = g.add(multi, uni.text)?;
    total = g.add(total, uni.audio)?;
    total = g.add(total, uni.visual)?;
    Ok(LossBreakdown {
        total,
        multi,
        uni,
        kl,
    })
}
