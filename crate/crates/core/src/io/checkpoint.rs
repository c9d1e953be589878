use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, write_atomic};
use crate::error::{Error, Result};
use crate::mpn::{Aggregation, MessageSource, ModelParams};

pub const CHECKPOINT_MAGIC: &str = "GNNCCA-CKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained weights plus the seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub seed: u64,
}

/// Text layout:
///
/// ```text
/// GNNCCA-CKPT 1
/// descriptor_dim 512
/// steps 4
/// message_source self
/// aggregation mean
/// seed 0
/// tensor node_encoder.0.weight 128 512
/// <one line per row>
/// tensor node_encoder.0.bias 128
/// <one line>
/// ...
/// end
/// ```
pub fn format_checkpoint(ckpt: &Checkpoint) -> String {
    let p = &ckpt.params;
    let mut s = String::new();
    let _ = writeln!(s, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
    let _ = writeln!(s, "descriptor_dim {}", p.descriptor_dim());
    let _ = writeln!(s, "steps {}", p.steps);
    let _ = writeln!(s, "message_source {}", p.message_source.as_str());
    let _ = writeln!(s, "aggregation {}", p.aggregation.as_str());
    let _ = writeln!(s, "seed {}", ckpt.seed);
    for (name, net) in p.networks() {
        for (i, layer) in net.layers.iter().enumerate() {
            let (rows, cols) = (layer.weight.rows(), layer.weight.cols());
            let _ = writeln!(s, "tensor {name}.{i}.weight {rows} {cols}");
            for r in 0..rows {
                push_row(&mut s, layer.weight.row(r));
            }
            let _ = writeln!(s, "tensor {name}.{i}.bias {}", layer.bias.len());
            push_row(&mut s, &layer.bias);
        }
    }
    s.push_str("end\n");
    s
}

fn push_row(s: &mut String, values: &[f64]) {
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s.push('\n');
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    origin: &'a str,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        let (idx, line) = self
            .inner
            .next()
            .ok_or_else(|| Error::Data(format!("{}: unexpected end of checkpoint", self.origin)))?;
        self.last = idx + 1;
        Ok(line)
    }

    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::Data(format!("{}:{}: {msg}", self.origin, self.last))
    }

    fn key_value(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v),
            _ => Err(self.err(format!("expected `{key} <value>`"))),
        }
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>> {
        let line = self.next()?;
        let vals = line
            .split(' ')
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| self.err("invalid number"))?;
        if vals.len() != n {
            return Err(self.err(format!("expected {n} values, got {}", vals.len())));
        }
        Ok(vals)
    }
}

pub fn parse_checkpoint(text: &str, origin: &str) -> Result<Checkpoint> {
    let mut lines = Lines { inner: text.lines().enumerate(), origin, last: 0 };
    let header = lines.next()?;
    if header != format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}") {
        return Err(match header.split_once(' ') {
            Some((CHECKPOINT_MAGIC, v)) => lines.err(format!("unsupported checkpoint version {v}")),
            _ => lines.err("not a checkpoint file"),
        });
    }
    let dim: usize = lines.key_value("descriptor_dim")?.parse().map_err(|_| lines.err("invalid descriptor_dim"))?;
    let steps: usize = lines.key_value("steps")?.parse().map_err(|_| lines.err("invalid steps"))?;
    let source: MessageSource = lines.key_value("message_source")?.parse().map_err(|e| lines.err(e))?;
    let aggregation: Aggregation = lines.key_value("aggregation")?.parse().map_err(|e| lines.err(e))?;
    let seed: u64 = lines.key_value("seed")?.parse().map_err(|_| lines.err("invalid seed"))?;
    let mut params = ModelParams::zeros(dim, steps, source).map_err(|e| lines.err(e))?.with_aggregation(aggregation);
    params.validate().map_err(|e| lines.err(e))?;
    for (name, net) in params.networks_mut() {
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let (rows, cols) = (layer.weight.rows(), layer.weight.cols());
            if lines.next()? != format!("tensor {name}.{i}.weight {rows} {cols}") {
                return Err(lines.err(format!("expected tensor {name}.{i}.weight {rows} {cols}")));
            }
            for r in 0..rows {
                let row = lines.values(cols)?;
                layer.weight.as_mut_slice()[r * cols..(r + 1) * cols].copy_from_slice(&row);
            }
            if lines.next()? != format!("tensor {name}.{i}.bias {rows}") {
                return Err(lines.err(format!("expected tensor {name}.{i}.bias {rows}")));
            }
            layer.bias = lines.values(rows)?;
        }
    }
    if lines.next()? != "end" {
        return Err(lines.err("expected `end`"));
    }
    Ok(Checkpoint { params, seed })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    parse_checkpoint(&read_text(path)?, &path.display().to_string())
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    ckpt.params.validate()?;
    write_atomic(path, format_checkpoint(ckpt).as_bytes())
}
