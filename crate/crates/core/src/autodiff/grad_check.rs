//! Central-finite-difference verification of reverse-mode gradients.

use std::fmt;

use super::{AdError, Graph, NodeId, ParamStore};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum GradCheckError {
    /// Step must lie in `(0, 1e-2]`.
    BadStep(f64),
    /// Two forward passes of the builder disagreed.
    NonDeterministicGraph,
    Ad(AdError),
}

impl fmt::Display for GradCheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradCheckError::BadStep(s) => write!(f, "step {s} outside (0, 1e-2]"),
            GradCheckError::NonDeterministicGraph => {
                write!(
                    f,
                    "graph builder is not deterministic: forward passes disagree"
                )
            }
            GradCheckError::Ad(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for GradCheckError {}

impl From<AdError> for GradCheckError {
    fn from(e: AdError) -> Self {
        GradCheckError::Ad(e)
    }
}

/// Compare reverse-mode gradients of `build`'s scalar loss against central
/// finite differences over every entry of every parameter in `store`.
///
/// Returns `max |autodiff - fd| / max(1, |fd|)` across all entries.
pub fn grad_check<T, F>(build: &F, store: &ParamStore<T>, step: f64) -> Result<f64, GradCheckError>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &ParamStore<T>) -> Result<NodeId, AdError>,
{
    if !(step > 0.0 && step <= 1e-2) {
        return Err(GradCheckError::BadStep(step));
    }

    let eval = |s: &ParamStore<T>| -> Result<T, AdError> {
        let mut g = Graph::new();
        let loss = build(&mut g, s)?;
        Ok(g.scalar_value(loss))
    };

    let mut graph = Graph::new();
    let loss = build(&mut graph, store)?;
    let base = graph.scalar_value(loss);
    let repeat = eval(store)?;
    if base != repeat {
        return Err(GradCheckError::NonDeterministicGraph);
    }
    let grads = graph.backward(loss)?;

    let h = T::lit(step);
    let mut max_rel = 0.0f64;
    for (name, tensor) in store.iter() {
        let analytic = grads.get(name);
        for i in 0..tensor.len() {
            let mut plus = store.clone();
            plus.get_mut(name).expect("iterating store keys").data_mut()[i] += h;
            let vp = eval(&plus)?;

            let mut minus = store.clone();
            minus
                .get_mut(name)
                .expect("iterating store keys")
                .data_mut()[i] -= h;
            let vm = eval(&minus)?;

            let fd = ((vp - vm) / (T::lit(2.0) * h)).as_f64();
            let ad = analytic.map_or(0.0, |g| g.data()[i].as_f64());
            let rel = (ad - fd).abs() / fd.abs().max(1.0);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
