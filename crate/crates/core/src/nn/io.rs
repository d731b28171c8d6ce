//! Plain-text model file:
//!
//! ```text
//! ISEDNN 1
//! arch 4 256 256 256 256 4
//! norm_in <x> norm_out <y>
//! layer relu bn
//! W
//! <fan_in rows of width values>
//! b <width values>
//! gamma ... / beta ... / running_mean ... / running_var ...   (bn layers only)
//! ...
//! checksum <FNV-1a 64 of every preceding byte, hex>
//! ```
//!
//! Numbers carry 17 significant digits so a reload is bit-identical. An
//! unfitted normalization is written as `0 0`.

use std::fmt::Write as _;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::network::{Activation, BatchNorm, Layer, NetworkModel, Normalization};

pub const MODEL_VERSION: u32 = 1;
const MAGIC: &str = "ISEDNN";

fn checksum(bytes: &[u8]) -> String {
    let mut h = FnvHasher::default();
    h.write(bytes);
    format!("{:016x}", h.finish())
}

fn push_row<'a, S: Scalar>(out: &mut String, label: Option<&str>, values: impl IntoIterator<Item = &'a S>) {
    let mut first = true;
    if let Some(l) = label {
        out.push_str(l);
        first = false;
    }
    for v in values {
        if !first {
            out.push(' ');
        }
        out.push_str(&v.to_text());
        first = false;
    }
    out.push('\n');
}

pub fn to_text<S: Scalar>(model: &NetworkModel<S>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {MODEL_VERSION}");
    let arch: Vec<String> = model.architecture().iter().map(|w| w.to_string()).collect();
    let _ = writeln!(out, "arch {}", arch.join(" "));
    let (ni, no) = model
        .normalization()
        .map_or((S::zero(), S::zero()), |n| (n.norm_in, n.norm_out));
    let _ = writeln!(out, "norm_in {} norm_out {}", ni.to_text(), no.to_text());
    for layer in model.layers() {
        let act = match layer.activation {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        };
        let bn = if layer.batchnorm.is_some() { "bn" } else { "nobn" };
        let _ = writeln!(out, "layer {act} {bn}");
        out.push_str("W\n");
        for row in layer.weights.rows() {
            push_row(&mut out, None, row.iter());
        }
        push_row(&mut out, Some("b"), layer.bias.iter());
        if let Some(bn) = &layer.batchnorm {
            push_row(&mut out, Some("gamma"), bn.gamma.iter());
            push_row(&mut out, Some("beta"), bn.beta.iter());
            push_row(&mut out, Some("running_mean"), bn.running_mean.iter());
            push_row(&mut out, Some("running_var"), bn.running_var.iter());
        }
    }
    let sum = checksum(out.as_bytes());
    let _ = writeln!(out, "checksum {sum}");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l)
            }
            None => Err(Error::parse(self.last + 1, format!("file ends where {what} was expected"))),
        }
    }
}

fn numbers<S: Scalar>(line: usize, fields: &[&str], expected: usize) -> Result<Vec<S>> {
    if fields.len() != expected {
        return Err(Error::parse(line, format!("expected {expected} values, found {}", fields.len())));
    }
    fields
        .iter()
        .map(|f| S::parse_text(f).ok_or_else(|| Error::parse(line, format!("not a number: {f:?}"))))
        .collect()
}

fn labelled<S: Scalar>(lines: &mut Lines<'_>, label: &str, width: usize) -> Result<Array1<S>> {
    let l = lines.next(label)?;
    let fields: Vec<&str> = l.split_whitespace().collect();
    if fields.first() != Some(&label) {
        return Err(Error::parse(lines.last, format!("expected a {label} row")));
    }
    Ok(Array1::from(numbers(lines.last, &fields[1..], width)?))
}

pub fn from_text<S: Scalar>(text: &str) -> Result<NetworkModel<S>> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let header = lines.next("header")?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(Error::parse(1, "not a model file"));
    }
    let found: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(1, "missing version"))?;
    if found != MODEL_VERSION {
        return Err(Error::Version {
            found,
            expected: MODEL_VERSION,
        });
    }

    // Verify the trailer before trusting anything else.
    let body_end = text
        .trim_end_matches('\n')
        .rfind('\n')
        .map(|i| i + 1)
        .ok_or_else(|| Error::parse(1, "missing checksum line"))?;
    let trailer = text[body_end..].trim_end();
    let stored = trailer
        .strip_prefix("checksum ")
        .ok_or_else(|| Error::parse(text[..body_end].lines().count() + 1, "missing checksum line"))?;
    let computed = checksum(&text.as_bytes()[..body_end]);
    if stored != computed {
        return Err(Error::Checksum {
            stored: stored.to_string(),
            computed,
        });
    }

    let arch_line = lines.next("arch")?;
    let mut arch_fields = arch_line.split_whitespace();
    if arch_fields.next() != Some("arch") {
        return Err(Error::parse(2, "expected arch line"));
    }
    let arch: Vec<usize> = arch_fields
        .map(|v| v.parse().map_err(|_| Error::parse(2, format!("bad width {v:?}"))))
        .collect::<Result<_>>()?;
    if arch.len() < 2 || arch.contains(&0) {
        return Err(Error::parse(2, "arch needs an input width and at least one positive layer width"));
    }

    let norm_line = lines.next("normalization")?;
    let nf: Vec<&str> = norm_line.split_whitespace().collect();
    if nf.len() != 4 || nf[0] != "norm_in" || nf[2] != "norm_out" {
        return Err(Error::parse(3, "expected norm_in <x> norm_out <y>"));
    }
    let scales: Vec<S> = numbers(3, &[nf[1], nf[3]], 2)?;
    let norm = if scales[0] == S::zero() && scales[1] == S::zero() {
        None
    } else {
        Some(Normalization::new(scales[0], scales[1]).map_err(|e| Error::parse(3, e.to_string()))?)
    };

    let mut layers = Vec::with_capacity(arch.len() - 1);
    for pair in arch.windows(2) {
        let (fan_in, width) = (pair[0], pair[1]);
        let l = lines.next("layer")?;
        let lf: Vec<&str> = l.split_whitespace().collect();
        let (activation, has_bn) = match lf.as_slice() {
            ["layer", act, bn] => {
                let a = match *act {
                    "relu" => Activation::Relu,
                    "sigmoid" => Activation::Sigmoid,
                    other => return Err(Error::parse(lines.last, format!("unknown activation {other:?}"))),
                };
                let b = match *bn {
                    "bn" => true,
                    "nobn" => false,
                    other => return Err(Error::parse(lines.last, format!("unknown norm flag {other:?}"))),
                };
                (a, b)
            }
            _ => return Err(Error::parse(lines.last, "expected layer line")),
        };
        if lines.next("W")?.trim() != "W" {
            return Err(Error::parse(lines.last, "expected W"));
        }
        let mut w = Vec::with_capacity(fan_in * width);
        for _ in 0..fan_in {
            let row = lines.next("weight row")?;
            let fields: Vec<&str> = row.split_whitespace().collect();
            w.extend(numbers::<S>(lines.last, &fields, width)?);
        }
        let weights = Array2::from_shape_vec((fan_in, width), w).expect("row count checked");
        let bias = labelled(&mut lines, "b", width)?;
        let batchnorm = if has_bn {
            Some(BatchNorm {
                gamma: labelled(&mut lines, "gamma", width)?,
                beta: labelled(&mut lines, "beta", width)?,
                running_mean: labelled(&mut lines, "running_mean", width)?,
                running_var: labelled(&mut lines, "running_var", width)?,
            })
        } else {
            None
        };
        layers.push(Layer {
            weights,
            bias,
            batchnorm,
            activation,
        });
    }
    let trailing = lines.next("checksum")?;
    if !trailing.starts_with("checksum ") {
        return Err(Error::parse(lines.last, "unexpected content before checksum"));
    }
    NetworkModel::from_layers(arch[0], layers, norm).map_err(|e| Error::parse(lines.last, e.to_string()))
}

pub fn save<S: Scalar>(model: &NetworkModel<S>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_text(model)).map_err(|e| Error::io(path, e))
}

pub fn load<S: Scalar>(path: impl AsRef<Path>) -> Result<NetworkModel<S>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text)
}
