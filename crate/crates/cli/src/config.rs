//! Plain `key = value` configuration files, `#` comments, no nesting.
//! Unknown keys are rejected so typos fail loudly.

use std::collections::BTreeMap;
use std::path::Path;

use kan_mcp::data::{LabelFn, SynthSpec};
use kan_mcp::modality::PerModality;
use kan_mcp::model::HyperParams;
use kan_mcp::spline::GridSpec;

use crate::error::CliError;

fn parse_kv(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let content = std::fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (i, raw) in content.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "{}:{}: expected `key = value`, got `{raw}`",
                path.display(),
                i + 1
            )));
        };
        let key = key.trim().to_string();
        if map.contains_key(&key) {
            return Err(CliError::Config(format!(
                "{}:{}: duplicate key `{key}`",
                path.display(),
                i + 1
            )));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

struct Fields {
    map: BTreeMap<String, String>,
    origin: String,
}

impl Fields {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        match self.take(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| {
                CliError::Config(format!(
                    "{}: field `{key}`: cannot parse `{raw}`",
                    self.origin
                ))
            }),
        }
    }

    fn require<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, CliError> {
        match self.take(key) {
            None => Err(CliError::Config(format!(
                "{}: missing field `{key}`",
                self.origin
            ))),
            Some(raw) => raw.parse().map_err(|_| {
                CliError::Config(format!(
                    "{}: field `{key}`: cannot parse `{raw}`",
                    self.origin
                ))
            }),
        }
    }

    fn finish(self) -> Result<(), CliError> {
        if let Some(key) = self.map.keys().next() {
            return Err(CliError::Config(format!(
                "{}: unknown key `{key}`",
                self.origin
            )));
        }
        Ok(())
    }
}

fn parse_on_off(origin: &str, key: &str, raw: &str) -> Result<bool, CliError> {
    match raw {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        other => Err(CliError::Config(format!(
            "{origin}: field `{key}` must be on/off, got `{other}`"
        ))),
    }
}

/// Parse a training configuration; absent keys keep their defaults.
pub fn load_run_config(path: &Path) -> Result<HyperParams, CliError> {
    let mut fields = Fields {
        map: parse_kv(path)?,
        origin: path.display().to_string(),
    };
    let defaults = HyperParams::default();

    let head_hidden = match fields.take("head_hidden") {
        None => defaults.head_hidden.clone(),
        Some(raw) => raw
            .split(',')
            .map(|s| {
                s.trim().parse::<usize>().map_err(|_| {
                    CliError::Config(format!(
                        "{}: field `head_hidden`: cannot parse `{raw}`",
                        path.display()
                    ))
                })
            })
            .collect::<Result<Vec<usize>, CliError>>()?,
    };
    let mcpareto = match fields.take("mcpareto") {
        None => defaults.mcpareto,
        Some(raw) => parse_on_off(&fields.origin, "mcpareto", &raw)?,
    };

    let hyper = HyperParams {
        beta: fields.parse("beta", defaults.beta)?,
        code_dim: fields.parse("code_dim", defaults.code_dim)?,
        mid_dim: fields.parse("mid_dim", defaults.mid_dim)?,
        head_hidden,
        grid: GridSpec {
            intervals: fields.parse("grid_intervals", defaults.grid.intervals)?,
            degree: fields.parse("grid_degree", defaults.grid.degree)?,
            t_min: fields.parse("grid_min", defaults.grid.t_min)?,
            t_max: fields.parse("grid_max", defaults.grid.t_max)?,
        },
        batch_size: fields.parse("batch_size", defaults.batch_size)?,
        epochs: fields.parse("epochs", defaults.epochs)?,
        lr_text: fields.parse("lr_text", defaults.lr_text)?,
        lr_other: fields.parse("lr_other", defaults.lr_other)?,
        seed: fields.parse("seed", defaults.seed)?,
        mcpareto,
    };
    fields.finish()?;
    hyper.validate().map_err(CliError::from)?;
    Ok(hyper)
}

/// Parse a synthesis specification (all keys required except label_fn and
/// seed).
pub fn load_synth_spec(path: &Path) -> Result<SynthSpec, CliError> {
    let mut fields = Fields {
        map: parse_kv(path)?,
        origin: path.display().to_string(),
    };
    let label_fn = match fields.take("label_fn") {
        None => LabelFn::Additive,
        Some(raw) => LabelFn::from_str(&raw).ok_or_else(|| {
            CliError::Config(format!(
                "{}: field `label_fn` must be additive|text-dominant|balanced, got `{raw}`",
                path.display()
            ))
        })?,
    };
    let spec = SynthSpec {
        n: fields.require("n")?,
        dims: PerModality::new(
            fields.require("d_t")?,
            fields.require("d_a")?,
            fields.require("d_v")?,
        ),
        snr: PerModality::new(
            fields.require("snr_t")?,
            fields.require("snr_a")?,
            fields.require("snr_v")?,
        ),
        label_fn,
        seed: fields.parse("seed", 42)?,
    };
    fields.finish()?;
    spec.validate().map_err(CliError::from)?;
    Ok(spec)
}
