//! Dataset ingestion, synthetic multimodal generation, splits and
//! standardization.
//!
//! On-disk format: `text.csv` / `audio.csv` / `visual.csv` with one sample
//! per row, `labels.csv` with a single `y` column, and a `manifest` of
//! `key=value` lines pinning dimensions and row count.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use crate::modality::{Modality, PerModality};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};

/// Sentiment labels live in this closed range.
pub const LABEL_RANGE: f64 = 3.0;

#[derive(Debug)]
pub enum DataError {
    MissingFile {
        path: String,
    },
    RowCountMismatch {
        file: String,
        expected: usize,
        got: usize,
    },
    DimMismatch {
        file: String,
        expected: usize,
        got: usize,
    },
    ParseError {
        file: String,
        line: usize,
        col: usize,
        detail: String,
    },
    LabelOutOfRange {
        line: usize,
        value: f64,
    },
    BadSpec {
        detail: String,
    },
    Io(io::Error),
    Tensor(TensorError),
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::MissingFile { path } => write!(f, "missing file: {path}"),
            DataError::RowCountMismatch {
                file,
                expected,
                got,
            } => {
                write!(f, "{file}: expected {expected} rows, got {got}")
            }
            DataError::DimMismatch {
                file,
                expected,
                got,
            } => {
                write!(f, "{file}: expected {expected} columns, got {got}")
            }
            DataError::ParseError {
                file,
                line,
                col,
                detail,
            } => {
                write!(f, "{file}:{line}:{col}: {detail}")
            }
            DataError::LabelOutOfRange { line, value } => {
                write!(f, "labels.csv:{line}: label {value} outside [-3, 3]")
            }
            DataError::BadSpec { detail } => write!(f, "bad synthesis spec: {detail}"),
            DataError::Io(e) => write!(f, "io error: {e}"),
            DataError::Tensor(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for DataError {}

impl From<io::Error> for DataError {
    fn from(e: io::Error) -> Self {
        DataError::Io(e)
    }
}

impl From<TensorError> for DataError {
    fn from(e: TensorError) -> Self {
        DataError::Tensor(e)
    }
}

/// Aligned per-modality feature matrices plus regression labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityBatch<T: Scalar> {
    features: PerModality<Tensor<T>>,
    labels: Vec<T>,
}

impl<T: Scalar> ModalityBatch<T> {
    /// Validates aligned row counts and the label range.
    pub fn new(features: PerModality<Tensor<T>>, labels: Vec<T>) -> Result<Self, DataError> {
        let n = labels.len();
        for (m, t) in features.iter() {
            if t.ndim() != 2 || t.rows() != n {
                return Err(DataError::RowCountMismatch {
                    file: format!("{m} features"),
                    expected: n,
                    got: if t.ndim() == 2 { t.rows() } else { 0 },
                });
            }
        }
        let bound = T::lit(LABEL_RANGE);
        for (i, &y) in labels.iter().enumerate() {
            if !y.is_finite() || y < -bound || y > bound {
                return Err(DataError::LabelOutOfRange {
                    line: i + 2,
                    value: y.as_f64(),
                });
            }
        }
        Ok(ModalityBatch { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &PerModality<Tensor<T>> {
        &self.features
    }

    pub fn feature(&self, m: Modality) -> &Tensor<T> {
        self.features.get(m)
    }

    pub fn labels(&self) -> &[T] {
        &self.labels
    }

    pub fn dims(&self) -> PerModality<usize> {
        self.features.map(|_, t| t.cols())
    }

    /// Label vector as a `[n x 1]` tensor.
    pub fn label_tensor(&self) -> Tensor<T> {
        Tensor::from_vec(vec![self.labels.len(), 1], self.labels.clone()).expect("validated labels")
    }

    /// Gather a sub-batch by row indices.
    pub fn take(&self, indices: &[usize]) -> ModalityBatch<T> {
        ModalityBatch {
            features: self.features.map(|_, t| t.take_rows(indices)),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Synthetic-regime selector: how the latent sentiment reaches the
/// modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelFn {
    /// Use the per-modality SNRs as given.
    Additive,
    /// Audio and visual carry zero signal regardless of their SNRs.
    TextDominant,
    /// All three modalities share the text SNR.
    Balanced,
}

impl LabelFn {
    pub fn from_str(s: &str) -> Option<LabelFn> {
        match s {
            "additive" => Some(LabelFn::Additive),
            "text-dominant" => Some(LabelFn::TextDominant),
            "balanced" => Some(LabelFn::Balanced),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelFn::Additive => "additive",
            LabelFn::TextDominant => "text-dominant",
            LabelFn::Balanced => "balanced",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub dims: PerModality<usize>,
    pub snr: PerModality<f64>,
    pub label_fn: LabelFn,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n < 10 {
            return Err(DataError::BadSpec {
                detail: format!("n={} must be >= 10", self.n),
            });
        }
        for (m, &d) in self.dims.iter() {
            if d == 0 {
                return Err(DataError::BadSpec {
                    detail: format!("d_{m} must be positive"),
                });
            }
        }
        for (m, &s) in self.snr.iter() {
            if !(s >= 0.0) {
                return Err(DataError::BadSpec {
                    detail: format!("snr_{m}={s} must be >= 0"),
                });
            }
        }
        Ok(())
    }

    fn effective_snr(&self) -> PerModality<f64> {
        match self.label_fn {
            LabelFn::Additive => self.snr,
            LabelFn::TextDominant => PerModality::new(self.snr.text, 0.0, 0.0),
            LabelFn::Balanced => PerModality::splat(self.snr.text),
        }
    }
}

/// Generate the full synthetic dataset: latent sentiment `s` uniform in
/// `[-3, 3]`, labels `y = s`, and per-modality features
/// `snr * (u_j * s/3 + w_j * sin(pi s / 3)) / sqrt(2) + noise` with `u`
/// and `w` unit-norm direction vectors. Normalizing the directions makes a
/// modality's total recoverable signal depend on its SNR alone, not on its
/// feature dimension.
pub fn synth_full<T: Scalar>(spec: &SynthSpec) -> Result<ModalityBatch<T>, DataError> {
    spec.validate()?;
    let mut rng = Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let latent: Vec<f64> = (0..n)
        .map(|_| rng.range(-LABEL_RANGE, LABEL_RANGE))
        .collect();
    let snr = spec.effective_snr();

    let features = spec.dims.try_map(|m, &d| -> Result<Tensor<T>, DataError> {
        let strength = *snr.get(m);
        let unit = |v: Vec<f64>| -> Vec<f64> {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x / norm).collect()
        };
        let u = unit((0..d).map(|_| rng.normal()).collect());
        // orthogonalize the second channel so every modality measures the
        // two signal components along an orthonormal pair
        let w_raw: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let overlap: f64 = w_raw.iter().zip(&u).map(|(a, b)| a * b).sum();
        let w_res: Vec<f64> = w_raw.iter().zip(&u).map(|(a, b)| a - overlap * b).collect();
        let res_norm = w_res.iter().map(|x| x * x).sum::<f64>().sqrt();
        let w: Vec<f64> = if res_norm < 1e-9 {
            vec![0.0; d]
        } else {
            w_res.into_iter().map(|x| x / res_norm).collect()
        };
        let mut data = Vec::with_capacity(n * d);
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        for &s in &latent {
            let lin = s / LABEL_RANGE;
            let nonlin = (std::f64::consts::PI * s / LABEL_RANGE).sin();
            for j in 0..d {
                let signal = strength * (u[j] * lin + w[j] * nonlin) * inv_sqrt2;
                data.push(T::lit(signal + rng.normal()));
            }
        }
        Ok(Tensor::from_vec(vec![n, d], data)?)
    })?;

    let labels: Vec<T> = latent.iter().map(|&s| T::lit(s)).collect();
    ModalityBatch::new(features, labels)
}

/// Deterministic 70/10/20 split of `0..n`, shuffled by `seed`.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::derive(seed, 0x5111);
    rng.shuffle(&mut order);
    let n_train = (n * 7) / 10;
    let n_val = n / 10;
    let train = order[..n_train].to_vec();
    let val = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..].to_vec();
    (train, val, test)
}

/// Train/val/test batches of one dataset.
#[derive(Debug, Clone)]
pub struct SplitBatches<T: Scalar> {
    pub train: ModalityBatch<T>,
    pub val: ModalityBatch<T>,
    pub test: ModalityBatch<T>,
}

/// Generate and split a synthetic dataset (split keyed by the spec seed).
pub fn synth_generate<T: Scalar>(spec: &SynthSpec) -> Result<SplitBatches<T>, DataError> {
    let full = synth_full(spec)?;
    let (train, val, test) = split_indices(full.len(), spec.seed);
    Ok(SplitBatches {
        train: full.take(&train),
        val: full.take(&val),
        test: full.take(&test),
    })
}

/// Per-column mean and standard deviation of one modality's training block.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats<T: Scalar> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> ColumnStats<T> {
    pub fn fit(features: &Tensor<T>) -> ColumnStats<T> {
        let (rows, cols) = (features.rows(), features.cols());
        let n = T::lit(rows as f64);
        let mut mean = vec![T::zero(); cols];
        for i in 0..rows {
            for j in 0..cols {
                mean[j] += features.at2(i, j);
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![T::zero(); cols];
        for i in 0..rows {
            for j in 0..cols {
                let d = features.at2(i, j) - mean[j];
                var[j] += d * d;
            }
        }
        let floor = T::lit(1e-12);
        let std = var
            .iter()
            .map(|&v| {
                let s = (v / n).sqrt();
                if s < floor {
                    T::one()
                } else {
                    s
                }
            })
            .collect();
        ColumnStats { mean, std }
    }

    pub fn apply(&self, features: &Tensor<T>) -> Tensor<T> {
        let (rows, cols) = (features.rows(), features.cols());
        let mut out = features.clone();
        for i in 0..rows {
            for j in 0..cols {
                out.set2(i, j, (features.at2(i, j) - self.mean[j]) / self.std[j]);
            }
        }
        out
    }
}

/// Split + standardized views of a dataset, with the statistics that did it.
#[derive(Debug, Clone)]
pub struct PreparedData<T: Scalar> {
    pub train: ModalityBatch<T>,
    pub val: ModalityBatch<T>,
    pub test: ModalityBatch<T>,
    pub stats: PerModality<ColumnStats<T>>,
}

fn standardize_batch<T: Scalar>(
    batch: &ModalityBatch<T>,
    stats: &PerModality<ColumnStats<T>>,
) -> ModalityBatch<T> {
    ModalityBatch {
        features: batch.features.map(|m, t| stats.get(m).apply(t)),
        labels: batch.labels.clone(),
    }
}

/// Split by `seed`, fit per-column z-score statistics on the training split
/// and standardize every split with them.
pub fn prepare<T: Scalar>(full: &ModalityBatch<T>, seed: u64) -> PreparedData<T> {
    let (train_idx, val_idx, test_idx) = split_indices(full.len(), seed);
    let train = full.take(&train_idx);
    let stats = train.features.map(|_, t| ColumnStats::fit(t));
    PreparedData {
        train: standardize_batch(&train, &stats),
        val: standardize_batch(&full.take(&val_idx), &stats),
        test: standardize_batch(&full.take(&test_idx), &stats),
        stats,
    }
}

/// Like [`prepare`] but with frozen statistics from a checkpoint, so the
/// splits seen at evaluation time match training bit for bit.
pub fn prepare_with_stats<T: Scalar>(
    full: &ModalityBatch<T>,
    seed: u64,
    stats: PerModality<ColumnStats<T>>,
) -> PreparedData<T> {
    let (train_idx, val_idx, test_idx) = split_indices(full.len(), seed);
    PreparedData {
        train: standardize_batch(&full.take(&train_idx), &stats),
        val: standardize_batch(&full.take(&val_idx), &stats),
        test: standardize_batch(&full.take(&test_idx), &stats),
        stats,
    }
}

/// Epoch-deterministic minibatch iterator; the last partial batch is kept.
pub struct Minibatches<'a, T: Scalar> {
    dataset: &'a ModalityBatch<T>,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

pub fn minibatches<T: Scalar>(
    dataset: &ModalityBatch<T>,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Minibatches<'_, T> {
    assert!(batch_size >= 1, "batch size must be >= 1");
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = Rng::derive(seed, 0xb000 + epoch as u64);
    rng.shuffle(&mut order);
    Minibatches {
        dataset,
        order,
        batch_size,
        cursor: 0,
    }
}

impl<T: Scalar> Iterator for Minibatches<'_, T> {
    type Item = ModalityBatch<T>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.dataset.take(&self.order[self.cursor..end]);
        self.cursor = end;
        Some(batch)
    }
}

// ---------------------------------------------------------------------------
// CSV interchange
// ---------------------------------------------------------------------------

/// 17 significant digits: round-trips every f64 exactly.
fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn feature_file(m: Modality) -> &'static str {
    match m {
        Modality::Text => "text.csv",
        Modality::Audio => "audio.csv",
        Modality::Visual => "visual.csv",
    }
}

/// Write `text/audio/visual/labels.csv` plus the manifest into `dir`
/// (created if absent).
pub fn write_csv_dir<T: Scalar>(batch: &ModalityBatch<T>, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir)?;
    for (m, t) in batch.features.iter() {
        let mut out = String::new();
        let cols = t.cols();
        for j in 0..cols {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("f{j}"));
        }
        out.push('\n');
        for i in 0..t.rows() {
            for j in 0..cols {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&fmt_float(t.at2(i, j).as_f64()));
            }
            out.push('\n');
        }
        fs::write(dir.join(feature_file(m)), out)?;
    }
    let mut labels = String::from("y\n");
    for &y in batch.labels() {
        labels.push_str(&fmt_float(y.as_f64()));
        labels.push('\n');
    }
    fs::write(dir.join("labels.csv"), labels)?;

    let dims = batch.dims();
    let manifest = format!(
        "n={}\nd_t={}\nd_a={}\nd_v={}\n",
        batch.len(),
        dims.text,
        dims.audio,
        dims.visual
    );
    fs::write(dir.join("manifest"), manifest)?;
    Ok(())
}

fn read_file(dir: &Path, name: &str) -> Result<String, DataError> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(DataError::MissingFile {
            path: path.display().to_string(),
        });
    }
    Ok(fs::read_to_string(path)?)
}

fn parse_csv<T: Scalar>(file: &str, content: &str) -> Result<(usize, Vec<Vec<T>>), DataError> {
    let mut lines = content.lines();
    let header = lines.next().ok_or_else(|| DataError::ParseError {
        file: file.to_string(),
        line: 1,
        col: 1,
        detail: "empty file".to_string(),
    })?;
    let cols = header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(cols);
        for (c, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| DataError::ParseError {
                file: file.to_string(),
                line: line_no,
                col: c + 1,
                detail: format!("not a number: `{}`", cell.trim()),
            })?;
            if !v.is_finite() {
                return Err(DataError::ParseError {
                    file: file.to_string(),
                    line: line_no,
                    col: c + 1,
                    detail: format!("non-finite value {v}"),
                });
            }
            row.push(T::lit(v));
        }
        if row.len() != cols {
            return Err(DataError::DimMismatch {
                file: file.to_string(),
                expected: cols,
                got: row.len(),
            });
        }
        rows.push(row);
    }
    Ok((cols, rows))
}

fn parse_manifest(content: &str) -> Result<(usize, PerModality<usize>), DataError> {
    let mut n = None;
    let mut dims = PerModality::new(None, None, None);
    for (i, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| DataError::ParseError {
            file: "manifest".to_string(),
            line: i + 1,
            col: 1,
            detail: "expected key=value".to_string(),
        })?;
        let value: usize = value.trim().parse().map_err(|_| DataError::ParseError {
            file: "manifest".to_string(),
            line: i + 1,
            col: key.len() + 2,
            detail: format!("not an integer: `{}`", value.trim()),
        })?;
        match key.trim() {
            "n" => n = Some(value),
            "d_t" => dims.text = Some(value),
            "d_a" => dims.audio = Some(value),
            "d_v" => dims.visual = Some(value),
            other => {
                return Err(DataError::ParseError {
                    file: "manifest".to_string(),
                    line: i + 1,
                    col: 1,
                    detail: format!("unknown key `{other}`"),
                })
            }
        }
    }
    let missing = |what: &str| DataError::ParseError {
        file: "manifest".to_string(),
        line: 1,
        col: 1,
        detail: format!("missing `{what}`"),
    };
    Ok((
        n.ok_or_else(|| missing("n"))?,
        PerModality::new(
            dims.text.ok_or_else(|| missing("d_t"))?,
            dims.audio.ok_or_else(|| missing("d_a"))?,
            dims.visual.ok_or_else(|| missing("d_v"))?,
        ),
    ))
}

/// Load a dataset directory, validating row counts and dimensions against
/// the manifest and the label range.
pub fn load_features<T: Scalar>(dir: &Path) -> Result<ModalityBatch<T>, DataError> {
    let (n, dims) = parse_manifest(&read_file(dir, "manifest")?)?;

    let features = dims.try_map(|m, &expected_dim| -> Result<Tensor<T>, DataError> {
        let file = feature_file(m);
        let (cols, rows) = parse_csv::<T>(file, &read_file(dir, file)?)?;
        if cols != expected_dim {
            return Err(DataError::DimMismatch {
                file: file.to_string(),
                expected: expected_dim,
                got: cols,
            });
        }
        if rows.len() != n {
            return Err(DataError::RowCountMismatch {
                file: file.to_string(),
                expected: n,
                got: rows.len(),
            });
        }
        let data: Vec<T> = rows.into_iter().flatten().collect();
        Ok(Tensor::from_vec(vec![n, cols], data)?)
    })?;

    let (label_cols, label_rows) = parse_csv::<T>("labels.csv", &read_file(dir, "labels.csv")?)?;
    if label_cols != 1 {
        return Err(DataError::DimMismatch {
            file: "labels.csv".to_string(),
            expected: 1,
            got: label_cols,
        });
    }
    if label_rows.len() != n {
        return Err(DataError::RowCountMismatch {
            file: "labels.csv".to_string(),
            expected: n,
            got: label_rows.len(),
        });
    }
    let labels: Vec<T> = label_rows.into_iter().map(|r| r[0]).collect();
    ModalityBatch::new(features, labels)
}

#[cfg(test)]
mod tests;
