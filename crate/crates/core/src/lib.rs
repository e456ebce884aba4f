//! Interpretable multimodal sentiment regression at desk scale.
//!
//! The pipeline: per-modality Gaussian information-bottleneck encoders
//! compress raw features into small stochastic codes, a Kolmogorov-Arnold
//! network fuses the concatenated codes into a prediction, and training
//! balances the multimodal objective against per-modality auxiliary
//! objectives with a two-objective Pareto gradient combination.
//!
//! Everything numeric is generic over [`scalar::Scalar`] (`f32`/`f64`);
//! the aliases at the crate root pin the default `f64` instantiation.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod kan;
pub mod linalg;
pub mod metrics;
pub mod mib;
pub mod modality;
pub mod model;
pub mod optim;
pub mod pareto;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod spline;
pub mod tensor;
pub mod viz;

pub use modality::{Modality, PerModality};
pub use rng::Rng;
pub use scalar::Scalar;

/// Default-precision tensor.
pub type Tensor = tensor::Tensor<f64>;
/// Default-precision computation graph.
pub type Graph = autodiff::Graph<f64>;
/// Default-precision parameter registry.
pub type ParamStore = autodiff::ParamStore<f64>;
/// Default-precision gradient map.
pub type GradientMap = autodiff::GradientMap<f64>;
/// Default-precision spline grid.
pub type Grid = spline::Grid<f64>;
/// Default-precision spline-edge network.
pub type KanNetwork = kan::KanNetwork<f64>;
/// Default-precision assembled model.
pub type KanMcpModel = model::KanMcpModel<f64>;
/// Default-precision training state.
pub type TrainState = model::TrainState<f64>;

/// Single-precision variants for builds that trade accuracy for footprint.
pub type Tensor32 = tensor::Tensor<f32>;
pub type Graph32 = autodiff::Graph<f32>;
pub type KanMcpModel32 = model::KanMcpModel<f32>;
