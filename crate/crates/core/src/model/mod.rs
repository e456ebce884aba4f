//! The full pipeline: per-modality Gaussian encoders, linear unimodal
//! decoders, a spline-network fusion head over the concatenated codes, and
//! a training loop that coordinates multimodal and unimodal gradients.

use std::fmt;

use crate::autodiff::{AdError, GradCheckError, Graph, NodeId, ParamStore};
use crate::data::{minibatches, ColumnStats, DataError, ModalityBatch, PreparedData};
use crate::kan::{KanError, KanNetwork};
use crate::metrics::{self, MetricError, MetricReport};
use crate::mib::{self, Code, GaussianEncoder};
use crate::modality::{Modality, PerModality};
use crate::optim::{Adam, AdamConfig};
use crate::pareto::{mcpareto_apply, GroupKind, ParetoDecision, ParetoError, ParetoMode};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::spline::GridSpec;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug)]
pub enum ModelError {
    BadConfig {
        detail: String,
    },
    EmptySequence,
    EmptyDataset,
    /// Batch dimensions disagree with the model's input dimensions.
    DimMismatch {
        modality: Modality,
        expected: usize,
        got: usize,
    },
    Ad(AdError),
    Kan(KanError),
    Pareto(ParetoError),
    Metric(MetricError),
    Data(DataError),
    Tensor(TensorError),
    GradCheck(GradCheckError),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::BadConfig { detail } => write!(f, "bad config: {detail}"),
            ModelError::EmptySequence => write!(f, "temporal average of an empty sequence"),
            ModelError::EmptyDataset => write!(f, "dataset is empty"),
            ModelError::DimMismatch {
                modality,
                expected,
                got,
            } => {
                write!(
                    f,
                    "{modality} features have {got} columns, model expects {expected}"
                )
            }
            ModelError::Ad(e) => write!(f, "{e}"),
            ModelError::Kan(e) => write!(f, "{e}"),
            ModelError::Pareto(e) => write!(f, "{e}"),
            ModelError::Metric(e) => write!(f, "{e}"),
            ModelError::Data(e) => write!(f, "{e}"),
            ModelError::Tensor(e) => write!(f, "{e}"),
            ModelError::GradCheck(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ModelError {}

macro_rules! from_err {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for ModelError {
            fn from(e: $ty) -> Self {
                ModelError::$variant(e)
            }
        }
    };
}

from_err!(Ad, AdError);
from_err!(Kan, KanError);
from_err!(Pareto, ParetoError);
from_err!(Metric, MetricError);
from_err!(Data, DataError);
from_err!(Tensor, TensorError);
from_err!(GradCheck, GradCheckError);

/// Every tunable of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    /// Compression weight of the KL terms.
    pub beta: f64,
    /// Per-modality code dimension.
    pub code_dim: usize,
    /// Hidden width of the encoder nets.
    pub mid_dim: usize,
    /// Hidden widths of the fusion head (input and output widths are
    /// derived: `3 * code_dim` and 1).
    pub head_hidden: Vec<usize>,
    pub grid: GridSpec,
    pub batch_size: usize,
    pub epochs: usize,
    /// Learning rate of the text branch (encoder + decoder).
    pub lr_text: f64,
    /// Learning rate of everything else.
    pub lr_other: f64,
    pub seed: u64,
    /// Coordinate gradients (true) or merge by plain summation (false).
    pub mcpareto: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            beta: 1e-3,
            code_dim: 3,
            mid_dim: 64,
            head_hidden: vec![4],
            grid: GridSpec::default(),
            batch_size: 32,
            epochs: 30,
            lr_text: 1e-3,
            lr_other: 1e-3,
            seed: 42,
            mcpareto: true,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |detail: String| Err(ModelError::BadConfig { detail });
        if !(self.beta >= 0.0) {
            return bad(format!("beta must be >= 0, got {}", self.beta));
        }
        if self.code_dim == 0 {
            return bad("code_dim must be >= 1".to_string());
        }
        if self.mid_dim == 0 {
            return bad("mid_dim must be >= 1".to_string());
        }
        if self.head_hidden.iter().any(|&w| w == 0) {
            return bad(format!(
                "head_hidden {:?} must be positive",
                self.head_hidden
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".to_string());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".to_string());
        }
        if !(self.lr_text > 0.0) || !(self.lr_other > 0.0) {
            return bad("learning rates must be > 0".to_string());
        }
        if self.grid.degree == 0 || self.grid.intervals == 0 || !(self.grid.t_min < self.grid.t_max)
        {
            return bad(format!("invalid grid spec {:?}", self.grid));
        }
        Ok(())
    }

    pub fn head_widths(&self) -> Vec<usize> {
        let mut widths = Vec::with_capacity(self.head_hidden.len() + 2);
        widths.push(3 * self.code_dim);
        widths.extend_from_slice(&self.head_hidden);
        widths.push(1);
        widths
    }
}

/// Column-mean over the time axis of a `[steps x d]` sequence, the
/// preprocessing that turns a feature sequence into one sample row.
pub fn temporal_average<T: Scalar>(steps: &[Vec<T>]) -> Result<Vec<T>, ModelError> {
    let Some(first) = steps.first() else {
        return Err(ModelError::EmptySequence);
    };
    let d = first.len();
    let mut out = vec![T::zero(); d];
    for row in steps {
        if row.len() != d {
            return Err(TensorError::ShapeMismatch {
                op: "temporal_average",
                lhs: vec![steps.len(), d],
                rhs: vec![row.len()],
            }
            .into());
        }
        for (acc, &v) in out.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let n = T::lit(steps.len() as f64);
    for acc in &mut out {
        *acc /= n;
    }
    Ok(out)
}

fn branch_lr(name: &str, lr_text: f64, lr_other: f64) -> f64 {
    if name.starts_with("enc.text.") || name.starts_with("dec.text.") {
        lr_text
    } else {
        lr_other
    }
}

fn enc_prefix(m: Modality) -> String {
    format!("enc.{m}")
}

fn dec_w_name(m: Modality) -> String {
    format!("dec.{m}.w")
}

fn dec_b_name(m: Modality) -> String {
    format!("dec.{m}.b")
}

/// The assembled model: all parameters live in one store, grouped by name
/// prefix (`enc.{m}.*`, `dec.{m}.*`, `head.*`).
#[derive(Debug, Clone)]
pub struct KanMcpModel<T: Scalar> {
    pub hyper: HyperParams,
    pub dims: PerModality<usize>,
    pub store: ParamStore<T>,
    pub encoders: PerModality<GaussianEncoder>,
    pub head: KanNetwork<T>,
    /// Feature standardization fitted on the training split; stored so
    /// evaluation of a checkpoint reproduces training-time inputs exactly.
    pub stats: Option<PerModality<ColumnStats<T>>>,
}

impl<T: Scalar> KanMcpModel<T> {
    pub fn new(dims: PerModality<usize>, hyper: HyperParams) -> Result<Self, ModelError> {
        hyper.validate()?;
        for (m, &d) in dims.iter() {
            if d == 0 {
                return Err(ModelError::BadConfig {
                    detail: format!("d_{m} must be positive"),
                });
            }
        }
        let mut store = ParamStore::new();
        let mut rng = Rng::derive(hyper.seed, 0x1817);

        let encoders = dims.try_map(|m, &d| {
            GaussianEncoder::init(
                &mut store,
                &enc_prefix(m),
                d,
                hyper.mid_dim,
                hyper.code_dim,
                &mut rng,
            )
        })?;

        for m in Modality::ALL {
            let bound = 1.0 / (hyper.code_dim as f64).sqrt();
            let w: Vec<T> = (0..hyper.code_dim)
                .map(|_| T::lit(rng.range(-bound, bound)))
                .collect();
            store.insert(dec_w_name(m), Tensor::from_vec(vec![hyper.code_dim, 1], w)?)?;
            store.insert(dec_b_name(m), Tensor::zeros(vec![1]))?;
        }

        let head = KanNetwork::init(
            &mut store,
            "head",
            &hyper.head_widths(),
            hyper.grid,
            &mut rng,
        )?;
        assert_eq!(
            head.input_width(),
            3 * hyper.code_dim,
            "fusion head must see the concatenation of all three codes"
        );
        Ok(KanMcpModel {
            hyper,
            dims,
            store,
            encoders,
            head,
            stats: None,
        })
    }

    /// Gradient-coordination role of a parameter group.
    pub fn group_kind(name: &str) -> Option<GroupKind> {
        if let Some(rest) = name.strip_prefix("enc.") {
            let m = Modality::from_str(rest.split('.').next()?)?;
            return Some(GroupKind::Encoder(m));
        }
        if let Some(rest) = name.strip_prefix("dec.") {
            let m = Modality::from_str(rest.split('.').next()?)?;
            return Some(GroupKind::Decoder(m));
        }
        if name.starts_with("head.") {
            return Some(GroupKind::Fusion);
        }
        None
    }

    /// Per-group learning rate: the text branch has its own.
    pub fn learning_rate(&self, name: &str) -> f64 {
        branch_lr(name, self.hyper.lr_text, self.hyper.lr_other)
    }

    fn check_dims(&self, batch: &ModalityBatch<T>) -> Result<(), ModelError> {
        for (m, &expected) in self.dims.iter() {
            let got = batch.feature(m).cols();
            if got != expected {
                return Err(ModelError::DimMismatch {
                    modality: m,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }

    /// Build the forward graph for one batch. `eps` carries one noise draw
    /// per modality; `None` evaluates at the posterior mean.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        batch: &ModalityBatch<T>,
        eps: Option<&PerModality<Tensor<T>>>,
    ) -> Result<ForwardNodes, ModelError> {
        self.check_dims(batch)?;
        let b = batch.len();

        let codes = self
            .encoders
            .try_map(|m, enc| -> Result<Code, ModelError> {
                let x = g.constant(batch.feature(m).clone());
                let zero;
                let eps_m = match eps {
                    Some(per) => per.get(m),
                    None => {
                        zero = Tensor::zeros(vec![b, self.hyper.code_dim]);
                        &zero
                    }
                };
                Ok(mib::encode(g, &self.store, enc, x, eps_m)?)
            })?;

        let y_uni = codes.try_map(|m, code| -> Result<NodeId, ModelError> {
            let w = g.param(&self.store, &dec_w_name(m))?;
            let bconst = g.param(&self.store, &dec_b_name(m))?;
            let proj = g.matmul(code.sample, w)?;
            Ok(g.add_row(proj, bconst)?)
        })?;

        let fused_raw = g.concat(
            1,
            &[codes.text.sample, codes.audio.sample, codes.visual.sample],
        )?;
        let fused = g.tanh(fused_raw)?;
        let y_multi = self.head.forward_graph(g, &self.store, fused)?;

        Ok(ForwardNodes {
            y_multi,
            y_uni,
            codes,
            fused,
        })
    }

    /// Tape-free predictions at the posterior mean, for evaluation.
    /// Returns the fused prediction and the per-modality decoder outputs.
    pub fn predict(
        &self,
        batch: &ModalityBatch<T>,
    ) -> Result<(Vec<f64>, PerModality<Vec<f64>>), ModelError> {
        let mut g = Graph::new();
        let fwd = self.forward(&mut g, batch, None)?;
        let multi = g
            .value(fwd.y_multi)
            .data()
            .iter()
            .map(|v| v.as_f64())
            .collect();
        let uni = fwd
            .y_uni
            .map(|_, &node| g.value(node).data().iter().map(|v| v.as_f64()).collect());
        Ok((multi, uni))
    }
}

/// Node handles of one forward pass.
pub struct ForwardNodes {
    pub y_multi: NodeId,
    pub y_uni: PerModality<NodeId>,
    pub codes: PerModality<Code>,
    pub fused: NodeId,
}

/// Per-epoch mean training losses, one series per objective.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub multi: Vec<f64>,
    pub text: Vec<f64>,
    pub audio: Vec<f64>,
    pub visual: Vec<f64>,
}

impl LossHistory {
    pub fn len(&self) -> usize {
        self.multi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multi.is_empty()
    }

    pub fn push(&mut self, multi: f64, uni: &PerModality<f64>) {
        self.multi.push(multi);
        self.text.push(uni.text);
        self.audio.push(uni.audio);
        self.visual.push(uni.visual);
    }

    pub fn series(&self) -> [(&'static str, &[f64]); 4] {
        [
            ("multi", &self.multi),
            ("text", &self.text),
            ("audio", &self.audio),
            ("visual", &self.visual),
        ]
    }
}

/// Mutable training state; checkpoints freeze and restore it exactly.
#[derive(Debug, Clone)]
pub struct TrainState<T: Scalar> {
    pub model: KanMcpModel<T>,
    pub optim: Adam<T>,
    pub epoch: usize,
    pub step: u64,
    pub rng: Rng,
    pub history: LossHistory,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(model: KanMcpModel<T>) -> Self {
        let rng = Rng::derive(model.hyper.seed, 0x7247);
        TrainState {
            model,
            optim: Adam::new(AdamConfig::default()),
            epoch: 0,
            step: 0,
            rng,
            history: LossHistory::default(),
        }
    }
}

/// Scalars and decisions coming out of one optimization step.
pub struct StepOutput<T: Scalar> {
    pub loss_total: f64,
    pub loss_multi: f64,
    pub loss_uni: PerModality<f64>,
    pub kl: PerModality<f64>,
    pub decisions: Vec<(String, ParetoDecision<T>)>,
    pub clamp_events: u64,
}

/// One optimization step: forward, four backward passes against the same
/// parameter snapshot, gradient coordination, one Adam update.
pub fn train_step<T: Scalar>(
    state: &mut TrainState<T>,
    batch: &ModalityBatch<T>,
) -> Result<StepOutput<T>, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let b = batch.len();
    let code_dim = state.model.hyper.code_dim;

    // one noise draw per modality, shared by the unimodal and fused paths
    let eps = PerModality::new((), (), ()).try_map(|_, _| -> Result<Tensor<T>, ModelError> {
        let data: Vec<T> = (0..b * code_dim)
            .map(|_| T::lit(state.rng.normal()))
            .collect();
        Ok(Tensor::from_vec(vec![b, code_dim], data)?)
    })?;

    let mut g = Graph::new();
    let fwd = state.model.forward(&mut g, batch, Some(&eps))?;
    let y = g.constant(batch.label_tensor());
    let losses = mib::drd_mib_loss(
        &mut g,
        fwd.y_multi,
        &fwd.y_uni,
        &fwd.codes,
        y,
        T::lit(state.model.hyper.beta),
    )?;

    let loss_total = g.scalar_value(losses.total).as_f64();
    let loss_multi = g.scalar_value(losses.multi).as_f64();
    let loss_uni = losses.uni.map(|_, &n| g.scalar_value(n).as_f64());
    let kl = losses.kl.map(|_, &n| g.scalar_value(n).as_f64());

    let multi_map = g.backward(losses.multi)?;
    let uni_maps = losses.uni.try_map(|_, &n| g.backward(n))?;

    let mode = if state.model.hyper.mcpareto {
        ParetoMode::Coordinated
    } else {
        ParetoMode::PlainSum
    };
    let (merged, decisions) =
        mcpareto_apply(&multi_map, &uni_maps, KanMcpModel::<T>::group_kind, mode)?;

    let (lr_text, lr_other) = (state.model.hyper.lr_text, state.model.hyper.lr_other);
    state.optim.step(&mut state.model.store, &merged, |name| {
        branch_lr(name, lr_text, lr_other)
    });
    state.step += 1;

    Ok(StepOutput {
        loss_total,
        loss_multi,
        loss_uni,
        kl,
        decisions,
        clamp_events: g.clamp_events(),
    })
}

/// One row of the per-step gradient-coordination log.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoLogRow {
    pub step: u64,
    pub group: String,
    pub cos_beta: f64,
    pub alpha_m: f64,
    pub lambda: f64,
    pub conflict: bool,
}

/// Evaluation output: the metric suite plus per-modality decoder MAE.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricOutput {
    pub report: MetricReport,
    pub unimodal_mae: PerModality<f64>,
}

/// Evaluate at the posterior mean, sharded over `workers` threads.
pub fn evaluate<T: Scalar>(
    model: &KanMcpModel<T>,
    batch: &ModalityBatch<T>,
    workers: usize,
) -> Result<MetricOutput, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let n = batch.len();
    let chunk = 512usize;
    let ranges: Vec<(usize, usize)> = (0..n.div_ceil(chunk))
        .map(|c| (c * chunk, ((c + 1) * chunk).min(n)))
        .collect();

    type ChunkOut = (Vec<f64>, PerModality<Vec<f64>>);
    let workers = workers.max(1).min(ranges.len());
    let mut results: Vec<Option<ChunkOut>> = Vec::new();
    results.resize_with(ranges.len(), || None);

    if workers == 1 {
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            let idx: Vec<usize> = (lo..hi).collect();
            results[i] = Some(model.predict(&batch.take(&idx))?);
        }
    } else {
        // stripe chunks across workers; merge in chunk order for
        // deterministic output regardless of scheduling
        let collected: Vec<Result<Vec<(usize, ChunkOut)>, ModelError>> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..workers)
                    .map(|w| {
                        let ranges = &ranges;
                        scope.spawn(move || {
                            let mut out = Vec::new();
                            let mut i = w;
                            while i < ranges.len() {
                                let (lo, hi) = ranges[i];
                                let idx: Vec<usize> = (lo..hi).collect();
                                out.push((i, model.predict(&batch.take(&idx))?));
                                i += workers;
                            }
                            Ok(out)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("evaluation worker panicked"))
                    .collect()
            });
        for worker_out in collected {
            for (i, out) in worker_out? {
                results[i] = Some(out);
            }
        }
    }

    let mut multi = Vec::with_capacity(n);
    let mut uni = PerModality::new(
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for slot in results {
        let (m, u) = slot.expect("every chunk computed");
        multi.extend(m);
        for modality in Modality::ALL {
            uni.get_mut(modality)
                .extend(u.get(modality).iter().copied());
        }
    }

    let labels: Vec<f64> = batch.labels().iter().map(|&y| y.as_f64()).collect();
    let report = metrics::full_report(&multi, &labels)?;
    let unimodal_mae = uni.try_map(|_, preds| metrics::mae(preds, &labels))?;
    Ok(MetricOutput {
        report,
        unimodal_mae,
    })
}

/// Everything a training run leaves behind besides the state itself.
pub struct TrainOutputs {
    pub pareto_rows: Vec<ParetoLogRow>,
    /// Validation metrics after each epoch (1-based epoch numbers).
    pub epoch_val: Vec<(usize, MetricOutput)>,
    /// Test metrics of the final model.
    pub test: MetricOutput,
    pub clamp_events: u64,
}

/// Train for `hyper.epochs` epochs over `data.train`, recording loss
/// history, per-step coordination decisions and per-epoch validation
/// metrics. Deterministic for a fixed model seed and dataset.
pub fn run_training<T: Scalar>(
    state: &mut TrainState<T>,
    data: &PreparedData<T>,
) -> Result<TrainOutputs, ModelError> {
    if data.train.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    state.model.stats = Some(data.stats.clone());

    let epochs = state.model.hyper.epochs;
    let batch_size = state.model.hyper.batch_size;
    let seed = state.model.hyper.seed;
    let mut pareto_rows = Vec::new();
    let mut epoch_val = Vec::new();
    let mut clamp_events = 0u64;

    for _ in 0..epochs {
        let mut weighted = (0.0f64, PerModality::splat(0.0f64));
        let mut samples = 0usize;
        let batches: Vec<ModalityBatch<T>> =
            minibatches(&data.train, batch_size, seed, state.epoch).collect();
        for batch in &batches {
            let out = train_step(state, batch)?;
            let w = batch.len() as f64;
            weighted.0 += out.loss_multi * w;
            for m in Modality::ALL {
                *weighted.1.get_mut(m) += out.loss_uni.get(m) * w;
            }
            samples += batch.len();
            clamp_events += out.clamp_events;
            for (group, d) in out.decisions {
                pareto_rows.push(ParetoLogRow {
                    step: state.step,
                    group,
                    cos_beta: d.cos_beta.as_f64(),
                    alpha_m: d.alpha_m.as_f64(),
                    lambda: d.lambda.as_f64(),
                    conflict: d.conflict,
                });
            }
        }
        let n = samples as f64;
        state
            .history
            .push(weighted.0 / n, &weighted.1.map(|_, &v| v / n));
        state.epoch += 1;
        debug_assert_eq!(
            state.history.len(),
            state.epoch,
            "one history row per epoch"
        );

        if !data.val.is_empty() {
            epoch_val.push((state.epoch, evaluate(&state.model, &data.val, 1)?));
        }
    }

    let test = evaluate(&state.model, &data.test, 1)?;
    Ok(TrainOutputs {
        pareto_rows,
        epoch_val,
        test,
        clamp_events,
    })
}

/// Attributions of the fusion head over a probe batch (its codes at the
/// posterior mean, squashed exactly as the head sees them).
pub fn head_attribution<T: Scalar>(
    model: &KanMcpModel<T>,
    probe: &ModalityBatch<T>,
) -> Result<Vec<crate::kan::EdgeAttribution<T>>, ModelError> {
    if probe.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut g = Graph::new();
    let fwd = model.forward(&mut g, probe, None)?;
    let fused = g.value(fwd.fused).clone();
    Ok(model.head.edge_attribution(&model.store, &fused)?)
}

/// Mean first-layer attribution of each modality's input block.
pub fn modality_block_attribution<T: Scalar>(
    attrs: &[crate::kan::EdgeAttribution<T>],
    code_dim: usize,
) -> PerModality<f64> {
    let first = &attrs[0];
    let mut sums = PerModality::splat(0.0f64);
    for q in 0..first.n_out {
        for p in 0..first.n_in {
            let m = match p / code_dim {
                0 => Modality::Text,
                1 => Modality::Audio,
                _ => Modality::Visual,
            };
            *sums.get_mut(m) += first.get(q, p).as_f64();
        }
    }
    let per_block = (first.n_out * code_dim) as f64;
    sums.map(|_, &s| s / per_block)
}

#[cfg(test)]
mod tests;
