//! Subcommand implementations. All output is deterministic unless the
//! `--timestamps` flag opts into wall-clock log prefixes.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use kan_mcp::checkpoint::{load_checkpoint, save_checkpoint};
use kan_mcp::data::{
    load_features, prepare, prepare_with_stats, synth_full, write_csv_dir, SynthSpec,
};
use kan_mcp::model::{
    evaluate, head_attribution, modality_block_attribution, run_training, HyperParams, KanMcpModel,
    MetricOutput, TrainState,
};
use kan_mcp::report;
use kan_mcp::viz::{plot_loss_curves, render_dot, render_edge_functions, render_svg, RenderSpec};

use crate::error::CliError;

pub struct Logger {
    timestamps: bool,
}

impl Logger {
    pub fn new(timestamps: bool) -> Self {
        Logger { timestamps }
    }

    pub fn line(&self, msg: &str) {
        if self.timestamps {
            let now = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0);
            println!("[{now}] {msg}");
        } else {
            println!("{msg}");
        }
    }
}

pub fn cmd_synth(spec: &SynthSpec, out: &Path, log: &Logger) -> Result<(), CliError> {
    let batch = synth_full::<f64>(spec)?;
    write_csv_dir(&batch, out)?;
    let dims = batch.dims();
    log.line(&format!(
        "synth: wrote {} samples (d_t={}, d_a={}, d_v={}, label_fn={}) to {}",
        batch.len(),
        dims.text,
        dims.audio,
        dims.visual,
        spec.label_fn.as_str(),
        out.display()
    ));
    Ok(())
}

fn print_metrics(out: &MetricOutput, log: &Logger) {
    for line in report::metrics_text(out).lines() {
        log.line(line);
    }
}

pub fn cmd_train(
    hyper: HyperParams,
    data_dir: &Path,
    out: &Path,
    log: &Logger,
) -> Result<(), CliError> {
    let full = load_features::<f64>(data_dir)?;
    let data = prepare(&full, hyper.seed);
    let model = KanMcpModel::new(full.dims(), hyper)?;
    let mut state = TrainState::new(model);
    let outputs = run_training(&mut state, &data)?;

    for (i, _) in state.history.multi.iter().enumerate() {
        log.line(&format!(
            "epoch {}/{}: loss multi={:.6} text={:.6} audio={:.6} visual={:.6} val_mae={:.6}",
            i + 1,
            state.model.hyper.epochs,
            state.history.multi[i],
            state.history.text[i],
            state.history.audio[i],
            state.history.visual[i],
            outputs.epoch_val[i].1.report.mae,
        ));
    }
    let conflicts = outputs.pareto_rows.iter().filter(|r| r.conflict).count();
    log.line(&format!(
        "training complete: {} steps, {} gradient conflicts, {} clamp events",
        state.step, conflicts, outputs.clamp_events
    ));

    std::fs::create_dir_all(out)?;
    save_checkpoint(&state, &out.join("checkpoint.kmcp"))?;
    std::fs::write(out.join("report.txt"), report::metrics_text(&outputs.test))?;
    std::fs::write(out.join("report.json"), report::metrics_json(&outputs.test))?;
    std::fs::write(
        out.join("metrics_per_epoch.csv"),
        report::epoch_metrics_csv(&outputs.epoch_val),
    )?;
    std::fs::write(
        out.join("loss_history.csv"),
        report::loss_history_csv(&state.history),
    )?;
    std::fs::write(
        out.join("pareto_log.csv"),
        report::pareto_log_csv(&outputs.pareto_rows),
    )?;
    std::fs::write(
        out.join("loss_curves.svg"),
        plot_loss_curves(&state.history)?,
    )?;

    log.line("test metrics:");
    print_metrics(&outputs.test, log);
    log.line(&format!("artifacts written to {}", out.display()));
    Ok(())
}

fn load_prepared(
    checkpoint: &Path,
    data_dir: &Path,
) -> Result<(TrainState<f64>, kan_mcp::data::PreparedData<f64>), CliError> {
    let state = load_checkpoint::<f64>(checkpoint)?;
    let full = load_features::<f64>(data_dir)?;
    for (m, &expected) in state.model.dims.iter() {
        let got = full.feature(m).cols();
        if got != expected {
            return Err(CliError::Data(kan_mcp::data::DataError::DimMismatch {
                file: format!("{m} features"),
                expected,
                got,
            }));
        }
    }
    let stats = state.model.stats.clone().ok_or_else(|| {
        CliError::Checkpoint(kan_mcp::checkpoint::CheckpointError::Malformed {
            detail: "checkpoint carries no feature statistics".to_string(),
        })
    })?;
    let prepared = prepare_with_stats(&full, state.model.hyper.seed, stats);
    Ok((state, prepared))
}

pub fn cmd_eval(
    checkpoint: &Path,
    data_dir: &Path,
    out: Option<&Path>,
    workers: usize,
    log: &Logger,
) -> Result<(), CliError> {
    let (state, prepared) = load_prepared(checkpoint, data_dir)?;
    let output = evaluate(&state.model, &prepared.test, workers)?;
    print_metrics(&output, log);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.txt"), report::metrics_text(&output))?;
        std::fs::write(dir.join("report.json"), report::metrics_json(&output))?;
        log.line(&format!("report written to {}", dir.display()));
    }
    Ok(())
}

pub fn cmd_viz(
    checkpoint: &Path,
    data_dir: &Path,
    out: &Path,
    edges: Option<usize>,
    edges_out: Option<&Path>,
    log: &Logger,
) -> Result<(), CliError> {
    let (state, prepared) = load_prepared(checkpoint, data_dir)?;
    // attributions over the validation split, the stated probe convention
    let attrs = head_attribution(&state.model, &prepared.val)?;

    let rendered = match out.extension().and_then(|e| e.to_str()) {
        Some("svg") => {
            let spec = RenderSpec::modality_blocks(state.model.hyper.code_dim);
            render_svg(&state.model.head, &attrs, &spec)?
        }
        Some("dot") => render_dot(&state.model.head, &attrs)?,
        other => {
            return Err(CliError::Usage(format!(
                "unsupported output extension `{}`; supported formats: .svg, .dot",
                other.unwrap_or("")
            )))
        }
    };
    std::fs::write(out, rendered)?;

    let blocks = modality_block_attribution(&attrs, state.model.hyper.code_dim);
    log.line(&format!(
        "attribution means: text={:.6} audio={:.6} visual={:.6}",
        blocks.text, blocks.audio, blocks.visual
    ));
    log.line(&format!("diagram written to {}", out.display()));

    if let Some(layer) = edges {
        let target = edges_out.ok_or_else(|| {
            CliError::Usage("--edges requires --edges-out <FILE.svg>".to_string())
        })?;
        let svg = render_edge_functions(&state.model.head, &state.model.store, layer)?;
        std::fs::write(target, svg)?;
        log.line(&format!(
            "edge-function panels written to {}",
            target.display()
        ));
    }
    Ok(())
}
