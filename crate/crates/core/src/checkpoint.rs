//! Binary checkpoint format.
//!
//! Layout: magic `KMCP`, version `u16` little-endian, then a sequence of
//! TLV records (`tag: u16`, `length: u64`, payload), and a trailing CRC32
//! of every preceding byte. Parameter payloads are `f64` regardless of the
//! in-memory scalar type, so checkpoints are precision-portable.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use crate::data::ColumnStats;
use crate::modality::{Modality, PerModality};
use crate::model::{HyperParams, KanMcpModel, LossHistory, ModelError, TrainState};
use crate::optim::{Adam, AdamConfig};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::spline::GridSpec;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"KMCP";
pub const VERSION: u16 = 1;

const TAG_META: u16 = 1;
const TAG_PARAM: u16 = 2;
const TAG_ADAM_M: u16 = 3;
const TAG_ADAM_V: u16 = 4;
const TAG_RNG: u16 = 5;
const TAG_HISTORY: u16 = 6;
const TAG_NORM_STATS: u16 = 7;

#[derive(Debug)]
pub enum CheckpointError {
    Io(io::Error),
    BadMagic,
    UnsupportedVersion { found: u16, expected: u16 },
    Truncated,
    CrcMismatch { stored: u32, computed: u32 },
    Malformed { detail: String },
    Model(ModelError),
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::Io(e) => write!(f, "io error: {e}"),
            CheckpointError::BadMagic => write!(f, "not a checkpoint (bad magic)"),
            CheckpointError::UnsupportedVersion { found, expected } => {
                write!(
                    f,
                    "unsupported checkpoint version {found}, expected {expected}"
                )
            }
            CheckpointError::Truncated => write!(f, "checkpoint truncated"),
            CheckpointError::CrcMismatch { stored, computed } => {
                write!(
                    f,
                    "checksum mismatch: stored {stored:#010x}, computed {computed:#010x}"
                )
            }
            CheckpointError::Malformed { detail } => write!(f, "malformed checkpoint: {detail}"),
            CheckpointError::Model(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CheckpointError {}

impl From<io::Error> for CheckpointError {
    fn from(e: io::Error) -> Self {
        CheckpointError::Io(e)
    }
}

impl From<ModelError> for CheckpointError {
    fn from(e: ModelError) -> Self {
        CheckpointError::Model(e)
    }
}

fn malformed(detail: impl Into<String>) -> CheckpointError {
    CheckpointError::Malformed {
        detail: detail.into(),
    }
}

// --- writing ---------------------------------------------------------------

fn push_record(out: &mut Vec<u8>, tag: u16, payload: &[u8]) {
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

fn tensor_payload<T: Scalar>(name: &str, tensor: &Tensor<T>) -> Vec<u8> {
    let mut p = Vec::with_capacity(name.len() + 8 + tensor.len() * 8);
    p.extend_from_slice(&(name.len() as u16).to_le_bytes());
    p.extend_from_slice(name.as_bytes());
    p.push(tensor.ndim() as u8);
    for &d in tensor.shape() {
        p.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in tensor.data() {
        p.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    p
}

/// 17 significant digits: exact f64 round-trip through text.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn meta_payload<T: Scalar>(state: &TrainState<T>) -> Vec<u8> {
    let h = &state.model.hyper;
    let dims = state.model.dims;
    let cfg = state.optim.config;
    let head_hidden: Vec<String> = h.head_hidden.iter().map(usize::to_string).collect();
    let mut text = String::new();
    let mut kv = |k: &str, v: String| {
        text.push_str(k);
        text.push('=');
        text.push_str(&v);
        text.push('\n');
    };
    kv("beta", fmt_f64(h.beta));
    kv("code_dim", h.code_dim.to_string());
    kv("mid_dim", h.mid_dim.to_string());
    kv("head_hidden", head_hidden.join(","));
    kv("grid_intervals", h.grid.intervals.to_string());
    kv("grid_degree", h.grid.degree.to_string());
    kv("grid_min", fmt_f64(h.grid.t_min));
    kv("grid_max", fmt_f64(h.grid.t_max));
    kv("batch_size", h.batch_size.to_string());
    kv("epochs", h.epochs.to_string());
    kv("lr_text", fmt_f64(h.lr_text));
    kv("lr_other", fmt_f64(h.lr_other));
    kv("seed", h.seed.to_string());
    kv(
        "mcpareto",
        if h.mcpareto { "on" } else { "off" }.to_string(),
    );
    kv("d_t", dims.text.to_string());
    kv("d_a", dims.audio.to_string());
    kv("d_v", dims.visual.to_string());
    kv("epoch", state.epoch.to_string());
    kv("step", state.step.to_string());
    kv("adam_t", state.optim.step_count().to_string());
    kv("adam_beta1", fmt_f64(cfg.beta1));
    kv("adam_beta2", fmt_f64(cfg.beta2));
    kv("adam_eps", fmt_f64(cfg.eps));
    text.into_bytes()
}

fn stats_payload<T: Scalar>(stats: &PerModality<ColumnStats<T>>) -> Vec<u8> {
    let mut p = Vec::new();
    for m in Modality::ALL {
        let s = stats.get(m);
        p.extend_from_slice(&(s.mean.len() as u32).to_le_bytes());
        for &v in &s.mean {
            p.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        for &v in &s.std {
            p.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    p
}

fn history_payload(history: &LossHistory) -> Vec<u8> {
    let mut p = Vec::new();
    p.extend_from_slice(&(history.len() as u32).to_le_bytes());
    for (_, series) in history.series() {
        for &v in series {
            p.extend_from_slice(&v.to_le_bytes());
        }
    }
    p
}

/// Serialize a training state to bytes.
pub fn encode_checkpoint<T: Scalar>(state: &TrainState<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());

    push_record(&mut out, TAG_META, &meta_payload(state));
    if let Some(stats) = &state.model.stats {
        push_record(&mut out, TAG_NORM_STATS, &stats_payload(stats));
    }
    for (name, tensor) in state.model.store.iter() {
        push_record(&mut out, TAG_PARAM, &tensor_payload(name, tensor));
    }
    let (m, v) = state.optim.moments();
    for (name, tensor) in m {
        push_record(&mut out, TAG_ADAM_M, &tensor_payload(name, tensor));
    }
    for (name, tensor) in v {
        push_record(&mut out, TAG_ADAM_V, &tensor_payload(name, tensor));
    }
    let mut rng_payload = Vec::with_capacity(32);
    for word in state.rng.state() {
        rng_payload.extend_from_slice(&word.to_le_bytes());
    }
    push_record(&mut out, TAG_RNG, &rng_payload);
    push_record(&mut out, TAG_HISTORY, &history_payload(&state.history));

    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn save_checkpoint<T: Scalar>(
    state: &TrainState<T>,
    path: &Path,
) -> Result<(), CheckpointError> {
    Ok(fs::write(path, encode_checkpoint(state))?)
}

// --- reading ---------------------------------------------------------------

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn parse_tensor_record<T: Scalar>(payload: &[u8]) -> Result<(String, Tensor<T>), CheckpointError> {
    let mut c = Cursor {
        bytes: payload,
        pos: 0,
    };
    let name_len = c.u16()? as usize;
    let name = String::from_utf8(c.take(name_len)?.to_vec())
        .map_err(|_| malformed("parameter name is not utf-8"))?;
    let ndim = c.take(1)?[0] as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(c.u32()? as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(T::lit(c.f64()?));
    }
    if !c.done() {
        return Err(malformed(format!(
            "trailing bytes in tensor record `{name}`"
        )));
    }
    let tensor =
        Tensor::from_vec(shape, data).map_err(|e| malformed(format!("tensor `{name}`: {e}")))?;
    Ok((name, tensor))
}

struct Meta {
    map: BTreeMap<String, String>,
}

impl Meta {
    fn parse(payload: &[u8]) -> Result<Meta, CheckpointError> {
        let text = std::str::from_utf8(payload).map_err(|_| malformed("meta is not utf-8"))?;
        let mut map = BTreeMap::new();
        for line in text.lines() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| malformed(format!("meta line `{line}` is not key=value")))?;
            map.insert(k.to_string(), v.to_string());
        }
        Ok(Meta { map })
    }

    fn get(&self, key: &str) -> Result<&str, CheckpointError> {
        self.map
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| malformed(format!("meta missing `{key}`")))
    }

    fn parse_as<F: std::str::FromStr>(&self, key: &str) -> Result<F, CheckpointError> {
        self.get(key)?
            .parse()
            .map_err(|_| malformed(format!("meta `{key}` unparseable")))
    }
}

fn parse_stats<T: Scalar>(payload: &[u8]) -> Result<PerModality<ColumnStats<T>>, CheckpointError> {
    let mut c = Cursor {
        bytes: payload,
        pos: 0,
    };
    let mut stats = Vec::with_capacity(3);
    for _ in 0..3 {
        let d = c.u32()? as usize;
        let mut mean = Vec::with_capacity(d);
        for _ in 0..d {
            mean.push(T::lit(c.f64()?));
        }
        let mut std = Vec::with_capacity(d);
        for _ in 0..d {
            std.push(T::lit(c.f64()?));
        }
        stats.push(ColumnStats { mean, std });
    }
    if !c.done() {
        return Err(malformed("trailing bytes in stats record"));
    }
    let visual = stats.pop().expect("three entries");
    let audio = stats.pop().expect("three entries");
    let text = stats.pop().expect("three entries");
    Ok(PerModality::new(text, audio, visual))
}

fn parse_history(payload: &[u8]) -> Result<LossHistory, CheckpointError> {
    let mut c = Cursor {
        bytes: payload,
        pos: 0,
    };
    let epochs = c.u32()? as usize;
    let mut series = Vec::with_capacity(4);
    for _ in 0..4 {
        let mut s = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            s.push(c.f64()?);
        }
        series.push(s);
    }
    if !c.done() {
        return Err(malformed("trailing bytes in history record"));
    }
    let visual = series.pop().expect("four series");
    let audio = series.pop().expect("four series");
    let text = series.pop().expect("four series");
    let multi = series.pop().expect("four series");
    Ok(LossHistory {
        multi,
        text,
        audio,
        visual,
    })
}

/// Parse checkpoint bytes back into a training state.
pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<TrainState<T>, CheckpointError> {
    if bytes.len() < MAGIC.len() + 2 + 4 {
        return Err(CheckpointError::Truncated);
    }
    if &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion {
            found: version,
            expected: VERSION,
        });
    }
    let body_end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(CheckpointError::CrcMismatch { stored, computed });
    }

    let mut cursor = Cursor {
        bytes: &bytes[6..body_end],
        pos: 0,
    };
    let mut meta = None;
    let mut stats = None;
    let mut params: BTreeMap<String, Tensor<T>> = BTreeMap::new();
    let mut adam_m: BTreeMap<String, Tensor<T>> = BTreeMap::new();
    let mut adam_v: BTreeMap<String, Tensor<T>> = BTreeMap::new();
    let mut rng = None;
    let mut history = None;

    while !cursor.done() {
        let tag = cursor.u16()?;
        let len = cursor.u64()? as usize;
        let payload = cursor.take(len)?;
        match tag {
            TAG_META => meta = Some(Meta::parse(payload)?),
            TAG_NORM_STATS => stats = Some(parse_stats::<T>(payload)?),
            TAG_PARAM => {
                let (name, tensor) = parse_tensor_record::<T>(payload)?;
                params.insert(name, tensor);
            }
            TAG_ADAM_M => {
                let (name, tensor) = parse_tensor_record::<T>(payload)?;
                adam_m.insert(name, tensor);
            }
            TAG_ADAM_V => {
                let (name, tensor) = parse_tensor_record::<T>(payload)?;
                adam_v.insert(name, tensor);
            }
            TAG_RNG => {
                let mut c = Cursor {
                    bytes: payload,
                    pos: 0,
                };
                let state = [c.u64()?, c.u64()?, c.u64()?, c.u64()?];
                if !c.done() {
                    return Err(malformed("trailing bytes in rng record"));
                }
                rng = Some(Rng::from_state(state));
            }
            TAG_HISTORY => history = Some(parse_history(payload)?),
            other => return Err(malformed(format!("unknown record tag {other}"))),
        }
    }

    let meta = meta.ok_or_else(|| malformed("missing meta record"))?;
    let hyper = HyperParams {
        beta: meta.parse_as("beta")?,
        code_dim: meta.parse_as("code_dim")?,
        mid_dim: meta.parse_as("mid_dim")?,
        head_hidden: {
            let raw = meta.get("head_hidden")?;
            raw.split(',')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| malformed("bad head_hidden")))
                .collect::<Result<Vec<usize>, _>>()?
        },
        grid: GridSpec {
            intervals: meta.parse_as("grid_intervals")?,
            degree: meta.parse_as("grid_degree")?,
            t_min: meta.parse_as("grid_min")?,
            t_max: meta.parse_as("grid_max")?,
        },
        batch_size: meta.parse_as("batch_size")?,
        epochs: meta.parse_as("epochs")?,
        lr_text: meta.parse_as("lr_text")?,
        lr_other: meta.parse_as("lr_other")?,
        seed: meta.parse_as("seed")?,
        mcpareto: match meta.get("mcpareto")? {
            "on" => true,
            "off" => false,
            other => return Err(malformed(format!("bad mcpareto flag `{other}`"))),
        },
    };
    let dims = PerModality::new(
        meta.parse_as("d_t")?,
        meta.parse_as("d_a")?,
        meta.parse_as("d_v")?,
    );

    let mut model = KanMcpModel::<T>::new(dims, hyper)?;
    let expected: Vec<String> = model.store.names().map(str::to_string).collect();
    let loaded: Vec<String> = params.keys().cloned().collect();
    if expected != loaded {
        return Err(malformed(format!(
            "parameter set mismatch: expected {} groups, found {}",
            expected.len(),
            loaded.len()
        )));
    }
    for (name, tensor) in params {
        if model.store.get(&name).map(|t| t.shape()) != Some(tensor.shape()) {
            return Err(malformed(format!("shape mismatch for `{name}`")));
        }
        model
            .store
            .set(&name, tensor)
            .map_err(|e| malformed(e.to_string()))?;
    }
    model.stats = stats;

    let adam_cfg = AdamConfig {
        beta1: meta.parse_as("adam_beta1")?,
        beta2: meta.parse_as("adam_beta2")?,
        eps: meta.parse_as("adam_eps")?,
    };
    let optim = Adam::restore(adam_cfg, meta.parse_as("adam_t")?, adam_m, adam_v);

    Ok(TrainState {
        model,
        optim,
        epoch: meta.parse_as("epoch")?,
        step: meta.parse_as("step")?,
        rng: rng.ok_or_else(|| malformed("missing rng record"))?,
        history: history.ok_or_else(|| malformed("missing history record"))?,
    })
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<TrainState<T>, CheckpointError> {
    let bytes = fs::read(path)?;
    decode_checkpoint(&bytes)
}
