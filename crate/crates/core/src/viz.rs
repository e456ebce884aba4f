//! Transparency-coded network diagrams and loss-curve plots, rendered as
//! plain SVG 1.1 text (plus a DOT export). Outputs are pure functions of
//! their inputs: identical calls produce byte-identical files.

use std::fmt;
use std::fmt::Write as _;

use crate::kan::{EdgeAttribution, KanNetwork};
use crate::model::LossHistory;
use crate::scalar::Scalar;

#[derive(Debug)]
pub enum VizError {
    EmptyHistory,
    AttributionShapeMismatch { detail: String },
    Io(std::io::Error),
}

impl fmt::Display for VizError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VizError::EmptyHistory => write!(f, "loss history is empty"),
            VizError::AttributionShapeMismatch { detail } => {
                write!(f, "attributions do not match the network: {detail}")
            }
            VizError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for VizError {}

impl From<std::io::Error> for VizError {
    fn from(e: std::io::Error) -> Self {
        VizError::Io(e)
    }
}

/// A labeled, colored group of input nodes (one per modality).
#[derive(Debug, Clone, PartialEq)]
pub struct InputBlock {
    pub label: String,
    pub width: usize,
    pub color: String,
}

/// Layout and opacity mapping of the network diagram.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderSpec {
    /// Opacity floor; attributions map to `clamp(a / max_a, o_min, 1)`.
    pub o_min: f64,
    pub layer_gap: f64,
    pub node_gap: f64,
    pub margin: f64,
    pub node_radius: f64,
    /// Input-layer grouping; widths must sum to the input width.
    pub input_blocks: Vec<InputBlock>,
}

impl RenderSpec {
    /// One anonymous input block covering all inputs.
    pub fn plain(input_width: usize) -> RenderSpec {
        RenderSpec {
            o_min: 0.05,
            layer_gap: 170.0,
            node_gap: 46.0,
            margin: 60.0,
            node_radius: 7.0,
            input_blocks: vec![InputBlock {
                label: String::new(),
                width: input_width,
                color: "#4c78a8".to_string(),
            }],
        }
    }

    /// Text / audio / visual blocks of `code_dim` nodes each.
    pub fn modality_blocks(code_dim: usize) -> RenderSpec {
        let block = |label: &str, color: &str| InputBlock {
            label: label.to_string(),
            width: code_dim,
            color: color.to_string(),
        };
        RenderSpec {
            input_blocks: vec![
                block("text", "#4c78a8"),
                block("audio", "#e45756"),
                block("visual", "#59a14f"),
            ],
            ..RenderSpec::plain(3 * code_dim)
        }
    }

    /// Map an attribution to stroke opacity.
    pub fn opacity(&self, a: f64, max_a: f64) -> f64 {
        if max_a <= 0.0 {
            return self.o_min;
        }
        (a / max_a).clamp(self.o_min, 1.0)
    }
}

fn check_attrs<T: Scalar>(
    net: &KanNetwork<T>,
    attrs: &[EdgeAttribution<T>],
) -> Result<(), VizError> {
    if attrs.len() != net.layers.len() {
        return Err(VizError::AttributionShapeMismatch {
            detail: format!(
                "{} layers vs {} attribution matrices",
                net.layers.len(),
                attrs.len()
            ),
        });
    }
    for (layer, attr) in net.layers.iter().zip(attrs) {
        if attr.n_in != layer.n_in || attr.n_out != layer.n_out {
            return Err(VizError::AttributionShapeMismatch {
                detail: format!(
                    "layer is {}x{}, attribution is {}x{}",
                    layer.n_out, layer.n_in, attr.n_out, attr.n_in
                ),
            });
        }
    }
    Ok(())
}

/// Render the transparency-coded network diagram. Edge stroke opacity is
/// the attribution normalized by the diagram-wide maximum; node opacity is
/// the maximum over incident edges.
pub fn render_svg<T: Scalar>(
    net: &KanNetwork<T>,
    attrs: &[EdgeAttribution<T>],
    spec: &RenderSpec,
) -> Result<String, VizError> {
    check_attrs(net, attrs)?;
    let widths = &net.widths;
    let block_total: usize = spec.input_blocks.iter().map(|b| b.width).sum();
    if block_total != widths[0] {
        return Err(VizError::AttributionShapeMismatch {
            detail: format!(
                "input blocks cover {block_total} nodes, input width is {}",
                widths[0]
            ),
        });
    }

    let max_width = *widths.iter().max().expect("non-empty widths") as f64;
    let width_px = 2.0 * spec.margin + (widths.len() - 1) as f64 * spec.layer_gap;
    let height_px = 2.0 * spec.margin + (max_width - 1.0).max(0.0) * spec.node_gap;
    let x_of = |layer: usize| spec.margin + layer as f64 * spec.layer_gap;
    let y_of = |layer: usize, idx: usize| {
        spec.margin
            + idx as f64 * spec.node_gap
            + (max_width - widths[layer] as f64) * spec.node_gap / 2.0
    };

    let max_a = attrs
        .iter()
        .flat_map(|a| a.values.iter())
        .fold(0.0f64, |acc, v| acc.max(v.as_f64()));

    // node opacity: max over incident edges
    let mut node_opacity: Vec<Vec<f64>> = widths.iter().map(|&w| vec![0.0; w]).collect();
    for (l, attr) in attrs.iter().enumerate() {
        for q in 0..attr.n_out {
            for p in 0..attr.n_in {
                let o = spec.opacity(attr.get(q, p).as_f64(), max_a);
                if o > node_opacity[l][p] {
                    node_opacity[l][p] = o;
                }
                if o > node_opacity[l + 1][q] {
                    node_opacity[l + 1][q] = o;
                }
            }
        }
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width_px:.0}\" height=\"{height_px:.0}\" viewBox=\"0 0 {width_px:.0} {height_px:.0}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>");

    // edges, layer by layer, output-major
    for (l, attr) in attrs.iter().enumerate() {
        for q in 0..attr.n_out {
            for p in 0..attr.n_in {
                let o = spec.opacity(attr.get(q, p).as_f64(), max_a);
                let _ = writeln!(
                    s,
                    "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#333333\" stroke-width=\"1.5\" stroke-opacity=\"{:.6}\"/>",
                    x_of(l),
                    y_of(l, p),
                    x_of(l + 1),
                    y_of(l + 1, q),
                    o
                );
            }
        }
    }

    // input nodes colored per block, with labels
    let mut p = 0usize;
    for block in &spec.input_blocks {
        if !block.label.is_empty() {
            let y_mid = (y_of(0, p) + y_of(0, p + block.width - 1)) / 2.0;
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"end\" fill=\"{}\">{}</text>",
                x_of(0) - 14.0,
                y_mid + 4.0,
                block.color,
                block.label
            );
        }
        for _ in 0..block.width {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"{:.1}\" fill=\"{}\" fill-opacity=\"{:.6}\" stroke=\"#333333\" stroke-width=\"0.8\"/>",
                x_of(0),
                y_of(0, p),
                spec.node_radius,
                block.color,
                node_opacity[0][p].max(spec.o_min)
            );
            p += 1;
        }
    }

    // hidden and output nodes
    for (l, &w) in widths.iter().enumerate().skip(1) {
        for i in 0..w {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"{:.1}\" fill=\"#888888\" fill-opacity=\"{:.6}\" stroke=\"#333333\" stroke-width=\"0.8\"/>",
                x_of(l),
                y_of(l, i),
                spec.node_radius,
                node_opacity[l][i].max(spec.o_min)
            );
        }
    }

    s.push_str("</svg>\n");
    Ok(s)
}

/// DOT export with `weight` set to the raw attribution and stable node
/// names `l{layer}n{index}`.
pub fn render_dot<T: Scalar>(
    net: &KanNetwork<T>,
    attrs: &[EdgeAttribution<T>],
) -> Result<String, VizError> {
    check_attrs(net, attrs)?;
    let mut s = String::from("digraph kan {\n  rankdir=LR;\n");
    for (l, &w) in net.widths.iter().enumerate() {
        for i in 0..w {
            let _ = writeln!(s, "  l{l}n{i};");
        }
    }
    for (l, attr) in attrs.iter().enumerate() {
        for q in 0..attr.n_out {
            for p in 0..attr.n_in {
                let _ = writeln!(
                    s,
                    "  l{l}n{p} -> l{}n{q} [weight={:.12e}];",
                    l + 1,
                    attr.get(q, p).as_f64()
                );
            }
        }
    }
    s.push_str("}\n");
    Ok(s)
}

/// Per-edge function plots of one layer: each edge's learned `phi`
/// sampled at 64 points over the grid range, drawn as a grid of small
/// polyline panels.
pub fn render_edge_functions<T: Scalar>(
    net: &KanNetwork<T>,
    store: &crate::autodiff::ParamStore<T>,
    layer_index: usize,
) -> Result<String, VizError> {
    let Some(layer) = net.layers.get(layer_index) else {
        return Err(VizError::AttributionShapeMismatch {
            detail: format!(
                "layer {layer_index} out of range ({} layers)",
                net.layers.len()
            ),
        });
    };
    const SAMPLES: usize = 64;
    let (panel_w, panel_h, pad) = (120.0, 80.0, 14.0);
    let width_px = pad + layer.n_in as f64 * (panel_w + pad);
    let height_px = pad + layer.n_out as f64 * (panel_h + pad);

    let t_min = layer.grid.t_min().as_f64();
    let t_max = layer.grid.t_max().as_f64();
    let probe: Vec<f64> = (0..SAMPLES)
        .map(|i| t_min + (t_max - t_min) * i as f64 / (SAMPLES - 1) as f64)
        .collect();

    // evaluate each edge function on the probe
    let w_b = store.get(&layer.w_b_name()).expect("registered");
    let w_s = store.get(&layer.w_s_name()).expect("registered");
    let coef = store.get(&layer.coef_name()).expect("registered");
    let m = layer.grid.basis_count();

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width_px:.0}\" height=\"{height_px:.0}\" viewBox=\"0 0 {width_px:.0} {height_px:.0}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>");
    for q in 0..layer.n_out {
        for p in 0..layer.n_in {
            let values: Vec<f64> = probe
                .iter()
                .map(|&t| {
                    let tt = T::lit(t);
                    let basis = layer.grid.basis(tt);
                    let mut spline = T::zero();
                    let base = (q * layer.n_in + p) * m;
                    for i in 0..m {
                        spline += coef.data()[base + i] * basis[i];
                    }
                    let phi =
                        w_b.at2(q, p) * (tt * crate::scalar::sigmoid(tt)) + w_s.at2(q, p) * spline;
                    phi.as_f64()
                })
                .collect();
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let span = if hi - lo < 1e-12 { 1.0 } else { hi - lo };
            let x0 = pad + p as f64 * (panel_w + pad);
            let y0 = pad + q as f64 * (panel_h + pad);
            let _ = writeln!(
                s,
                "<rect x=\"{x0:.1}\" y=\"{y0:.1}\" width=\"{panel_w:.1}\" height=\"{panel_h:.1}\" fill=\"none\" stroke=\"#cccccc\"/>"
            );
            let points: Vec<String> = values
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let x = x0 + panel_w * i as f64 / (SAMPLES - 1) as f64;
                    let y = y0 + panel_h * (1.0 - (v - lo) / span);
                    format!("{x:.1},{y:.1}")
                })
                .collect();
            let _ = writeln!(
                s,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"#4c78a8\" stroke-width=\"1.2\"/>",
                points.join(" ")
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

const SERIES_COLORS: [(&str, &str); 4] = [
    ("multi", "#4c78a8"),
    ("text", "#e45756"),
    ("audio", "#59a14f"),
    ("visual", "#b279a2"),
];

/// Line chart of the four per-epoch training-loss series.
pub fn plot_loss_curves(history: &LossHistory) -> Result<String, VizError> {
    if history.is_empty() {
        return Err(VizError::EmptyHistory);
    }
    let (width_px, height_px) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 150.0, 30.0, 50.0);
    let plot_w = width_px - left - right;
    let plot_h = height_px - top - bottom;
    let epochs = history.len();

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, series) in history.series() {
        for &v in series {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !(hi > lo) {
        lo -= 1.0;
        hi += 1.0;
    }

    let x_of = |epoch_idx: usize| {
        if epochs == 1 {
            left + plot_w / 2.0
        } else {
            left + plot_w * epoch_idx as f64 / (epochs - 1) as f64
        }
    };
    let y_of = |v: f64| top + plot_h * (1.0 - (v - lo) / (hi - lo));

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width_px:.0}\" height=\"{height_px:.0}\" viewBox=\"0 0 {width_px:.0} {height_px:.0}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>");
    // axes
    let _ = writeln!(
        s,
        "<line x1=\"{left:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#333333\"/>",
        top + plot_h,
        left + plot_w,
        top + plot_h
    );
    let _ = writeln!(
        s,
        "<line x1=\"{left:.1}\" y1=\"{top:.1}\" x2=\"{left:.1}\" y2=\"{:.1}\" stroke=\"#333333\"/>",
        top + plot_h
    );
    // epoch ticks (at most ~12 labeled)
    let tick_step = epochs.div_ceil(12).max(1);
    for e in (0..epochs).step_by(tick_step) {
        let x = x_of(e);
        let _ = writeln!(
            s,
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#333333\"/>",
            top + plot_h,
            top + plot_h + 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            top + plot_h + 18.0,
            e + 1
        );
    }
    // y-range labels
    for (v, anchor_y) in [(hi, top + 4.0), (lo, top + plot_h + 4.0)] {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{anchor_y:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{v:.3}</text>",
            left - 8.0
        );
    }

    for (i, (name, series)) in history.series().into_iter().enumerate() {
        let color = SERIES_COLORS[i].1;
        debug_assert_eq!(SERIES_COLORS[i].0, name);
        let points: Vec<String> = series
            .iter()
            .enumerate()
            .map(|(e, &v)| format!("{:.2},{:.2}", x_of(e), y_of(v)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>",
            points.join(" ")
        );
        // legend
        let ly = top + 14.0 + i as f64 * 18.0;
        let lx = left + plot_w + 16.0;
        let _ = writeln!(
            s,
            "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"1.8\"/>",
            lx + 22.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{name}</text>",
            lx + 28.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
