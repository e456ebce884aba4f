//! Text artifacts of a training or evaluation run: metric reports
//! (key=value and JSON), the per-step gradient-coordination log, loss
//! history, and per-epoch validation metrics.
//!
//! All floats use Rust's shortest round-trip formatting, so identical runs
//! produce byte-identical files.

use std::fmt::Write as _;

use crate::modality::Modality;
use crate::model::{LossHistory, MetricOutput, ParetoLogRow};

/// Key=value report (one metric per line).
pub fn metrics_text(out: &MetricOutput) -> String {
    let r = &out.report;
    let mut s = String::new();
    let _ = writeln!(s, "acc7={}", r.acc7);
    let _ = writeln!(s, "acc5={}", r.acc5);
    let _ = writeln!(s, "acc3={}", r.acc3);
    let _ = writeln!(s, "acc2={}", r.acc2);
    let _ = writeln!(s, "f1={}", r.f1);
    let _ = writeln!(s, "mae={}", r.mae);
    let _ = writeln!(s, "corr={}", r.corr);
    let _ = writeln!(s, "corr_defined={}", r.corr_defined);
    for m in Modality::ALL {
        let _ = writeln!(s, "unimodal_mae_{m}={}", out.unimodal_mae.get(m));
    }
    s
}

/// The same report as a JSON object.
pub fn metrics_json(out: &MetricOutput) -> String {
    let r = &out.report;
    let mut s = String::from("{\n");
    let _ = writeln!(s, "  \"acc7\": {},", r.acc7);
    let _ = writeln!(s, "  \"acc5\": {},", r.acc5);
    let _ = writeln!(s, "  \"acc3\": {},", r.acc3);
    let _ = writeln!(s, "  \"acc2\": {},", r.acc2);
    let _ = writeln!(s, "  \"f1\": {},", r.f1);
    let _ = writeln!(s, "  \"mae\": {},", r.mae);
    let _ = writeln!(s, "  \"corr\": {},", r.corr);
    let _ = writeln!(s, "  \"corr_defined\": {},", r.corr_defined);
    let _ = writeln!(s, "  \"unimodal_mae\": {{");
    let _ = writeln!(s, "    \"text\": {},", out.unimodal_mae.text);
    let _ = writeln!(s, "    \"audio\": {},", out.unimodal_mae.audio);
    let _ = writeln!(s, "    \"visual\": {}", out.unimodal_mae.visual);
    let _ = writeln!(s, "  }}");
    s.push('}');
    s.push('\n');
    s
}

/// CSV of per-step coordination decisions.
pub fn pareto_log_csv(rows: &[ParetoLogRow]) -> String {
    let mut s = String::from("step,group,cos_beta,alpha_m,lambda,conflict\n");
    for row in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            row.step, row.group, row.cos_beta, row.alpha_m, row.lambda, row.conflict
        );
    }
    s
}

/// CSV of per-epoch mean training losses.
pub fn loss_history_csv(history: &LossHistory) -> String {
    let mut s = String::from("epoch,multi,text,audio,visual\n");
    for i in 0..history.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            i + 1,
            history.multi[i],
            history.text[i],
            history.audio[i],
            history.visual[i]
        );
    }
    s
}

/// CSV of per-epoch validation metrics.
pub fn epoch_metrics_csv(rows: &[(usize, MetricOutput)]) -> String {
    let mut s = String::from("epoch,acc7,acc5,acc3,acc2,f1,mae,corr\n");
    for (epoch, out) in rows {
        let r = &out.report;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            epoch, r.acc7, r.acc5, r.acc3, r.acc2, r.f1, r.mae, r.corr
        );
    }
    s
}
