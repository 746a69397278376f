//! Text formats for embeddings, checkpoints, predictions, metrics and
//! training logs. Floats are written with enough digits to round-trip.

use std::fmt::Write as _;
use std::io::BufRead;

use ndarray::Array2;

use crate::cascade::SocialNetwork;
use crate::error::{DceError, Result};
use crate::evaluation::MetricReport;
use crate::model::{Activation, EmbeddingMatrix, Layer, ModelParams};
use crate::prediction::PredictionRanking;
use crate::training::LossBreakdown;

const CHECKPOINT_MAGIC: &str = "dce-checkpoint 1";

fn parse_err(line: usize, msg: impl Into<String>) -> DceError {
    DceError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(line, format!("bad {what} `{tok}`")))
}

fn write_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

fn read_row(tokens: std::str::SplitWhitespace<'_>, width: usize, line: usize) -> Result<Vec<f64>> {
    let row = tokens
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| parse_err(line, format!("bad number `{t}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if row.len() != width {
        return Err(parse_err(
            line,
            format!("expected {width} values, found {}", row.len()),
        ));
    }
    Ok(row)
}

/// Numbered, non-empty lines with `#` comments stripped.
fn content_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader.lines().enumerate().filter_map(|(i, l)| match l {
        Err(e) => Some(Err(e.into())),
        Ok(l) => {
            let body = l.split('#').next().unwrap_or("").trim().to_string();
            (!body.is_empty()).then_some(Ok((i + 1, body)))
        }
    })
}

/// Header `N d`, then one row of `d` values per node.
pub fn write_embedding(z: &EmbeddingMatrix) -> String {
    let mut out = format!("{} {}\n", z.n_nodes(), z.dim());
    for row in z.0.rows() {
        write_row(&mut out, &row.to_vec());
    }
    out
}

pub fn read_embedding<R: BufRead>(reader: R) -> Result<EmbeddingMatrix> {
    let mut lines = content_lines(reader);
    let (ln, header) = lines
        .next()
        .transpose()?
        .ok_or_else(|| parse_err(1, "empty embedding file"))?;
    let mut h = header.split_whitespace();
    let n: usize = parse_num(h.next(), ln, "node count")?;
    let d: usize = parse_num(h.next(), ln, "dimension")?;
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let (ln, body) = lines
            .next()
            .transpose()?
            .ok_or_else(|| parse_err(ln, format!("expected {n} rows")))?;
        data.extend(read_row(body.split_whitespace(), d, ln)?);
    }
    if let Some(extra) = lines.next() {
        return Err(parse_err(extra?.0, "trailing rows after embedding"));
    }
    Ok(EmbeddingMatrix(
        Array2::from_shape_vec((n, d), data).expect("row count checked"),
    ))
}

/// Header with the activation and layer widths, then each tensor as a
/// `tensor <name> <rows> <cols>` line followed by its rows.
pub fn write_checkpoint(params: &ModelParams) -> String {
    let mut out = format!(
        "{CHECKPOINT_MAGIC}\nactivation {}\n",
        params.activation.name()
    );
    let hidden: Vec<String> = params
        .hidden_widths()
        .iter()
        .map(usize::to_string)
        .collect();
    let _ = writeln!(
        out,
        "shape {} {} {} {} {}",
        params.n_nodes(),
        params.n_cascades(),
        params.embedding_dim(),
        params.fusion_width(),
        hidden.join(",")
    );
    for t in params.tensors() {
        let _ = writeln!(out, "tensor {} {} {}", t.name, t.rows, t.cols);
        for row in t.values.chunks(t.cols) {
            write_row(&mut out, row);
        }
    }
    out
}

fn zero_params(
    activation: Activation,
    n: usize,
    m: usize,
    d: usize,
    fusion: usize,
    hidden: &[usize],
) -> ModelParams {
    let mut widths = vec![n];
    widths.extend(hidden);
    widths.push(fusion);
    ModelParams {
        activation,
        encoders: (0..m)
            .map(|_| {
                widths
                    .windows(2)
                    .map(|w| Layer::zeros(w[0], w[1]))
                    .collect()
            })
            .collect(),
        output: Layer::zeros(fusion, d),
        expansion: Layer::zeros(d, fusion),
        decoders: (0..m)
            .map(|_| {
                widths
                    .windows(2)
                    .map(|w| Layer::zeros(w[1], w[0]))
                    .collect()
            })
            .collect(),
    }
}

/// Tensors are matched by name; every tensor must appear exactly once.
pub fn read_checkpoint<R: BufRead>(reader: R) -> Result<ModelParams> {
    let mut lines = content_lines(reader);
    let mut next = |what: &str| -> Result<(usize, String)> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| parse_err(0, format!("unexpected end of checkpoint, expected {what}")))
    };
    let (ln, magic) = next("header")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(parse_err(
            ln,
            format!("not a checkpoint (header `{magic}`)"),
        ));
    }
    let (ln, act) = next("activation")?;
    let activation: Activation = act
        .strip_prefix("activation ")
        .ok_or_else(|| parse_err(ln, "expected `activation <name>`"))?
        .trim()
        .parse()
        .map_err(|_| parse_err(ln, format!("unknown activation in `{act}`")))?;
    let (ln, shape) = next("shape")?;
    let mut s = shape.split_whitespace();
    if s.next() != Some("shape") {
        return Err(parse_err(ln, "expected `shape` line"));
    }
    let n: usize = parse_num(s.next(), ln, "node count")?;
    let m: usize = parse_num(s.next(), ln, "cascade count")?;
    let d: usize = parse_num(s.next(), ln, "embedding dimension")?;
    let fusion: usize = parse_num(s.next(), ln, "fusion width")?;
    let hidden = s
        .next()
        .unwrap_or("")
        .split(',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| parse_err(ln, format!("bad hidden width `{t}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if m == 0 {
        return Err(parse_err(ln, "checkpoint has no cascade branches"));
    }

    let mut params = zero_params(activation, n, m, d, fusion, &hidden);
    let shapes: Vec<(String, usize, usize)> = params
        .tensors()
        .iter()
        .map(|t| (t.name.clone(), t.rows, t.cols))
        .collect();
    let mut filled = vec![false; shapes.len()];
    let mut slots = params.tensors_mut();
    for _ in 0..shapes.len() {
        let (ln, head) = next("tensor")?;
        let mut h = head.split_whitespace();
        if h.next() != Some("tensor") {
            return Err(parse_err(
                ln,
                format!("expected `tensor` line, found `{head}`"),
            ));
        }
        let name = h
            .next()
            .ok_or_else(|| parse_err(ln, "missing tensor name"))?;
        let rows: usize = parse_num(h.next(), ln, "row count")?;
        let cols: usize = parse_num(h.next(), ln, "column count")?;
        let idx = shapes
            .iter()
            .position(|(n, _, _)| n == name)
            .ok_or_else(|| parse_err(ln, format!("unknown tensor `{name}`")))?;
        if filled[idx] {
            return Err(parse_err(ln, format!("tensor `{name}` given twice")));
        }
        if (rows, cols) != (shapes[idx].1, shapes[idx].2) {
            return Err(parse_err(
                ln,
                format!(
                    "tensor `{name}` is {rows}x{cols}, expected {}x{}",
                    shapes[idx].1, shapes[idx].2
                ),
            ));
        }
        for r in 0..rows {
            let (ln, body) = next("tensor row")?;
            let row = read_row(body.split_whitespace(), cols, ln)?;
            slots[idx].values[r * cols..(r + 1) * cols].copy_from_slice(&row);
        }
        filled[idx] = true;
    }
    drop(slots);
    if let Ok((ln, _)) = next("") {
        return Err(parse_err(ln, "trailing content after last tensor"));
    }
    Ok(params)
}

/// `cascade rank node probability` per line, ranks from 1. `cascade_label`
/// maps a ranking's cascade id to its printable name.
pub fn write_predictions<'a>(
    rankings: &[PredictionRanking],
    network: &SocialNetwork,
    cascade_label: impl Fn(usize) -> &'a str,
) -> String {
    let mut out = String::new();
    for r in rankings {
        let label = cascade_label(r.cascade_id);
        for (rank, (v, p)) in r.entries.iter().enumerate() {
            let _ = writeln!(out, "{label} {} {} {p:.16e}", rank + 1, network.label(*v));
        }
    }
    out
}

/// `metric k value` per line; `k` is `-` for metrics without a cutoff.
pub fn write_metrics(report: &MetricReport) -> String {
    let mut out = String::new();
    for (k, v) in &report.map_at_k {
        let _ = writeln!(out, "map {k} {v:.16e}");
    }
    let _ = writeln!(out, "order_precision - {:.16e}", report.order_precision);
    let _ = writeln!(out, "cascades - {}", report.n_cascades);
    let _ = writeln!(out, "skipped - {}", report.n_skipped);
    out
}

pub const TRAINING_LOG_HEADER: &str = "epoch reconstruction affinity structural regularizer total";

/// One line per epoch, matching [`TRAINING_LOG_HEADER`].
pub fn training_log_line(epoch: usize, loss: &LossBreakdown) -> String {
    format!(
        "{epoch} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
        loss.reconstruction, loss.affinity, loss.structural, loss.regularizer, loss.total
    )
}
