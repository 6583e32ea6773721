//! Text model files:
//!
//! ```text
//! dfsmc-svm v1 K=<k> dim=<d> C=<c>
//! <b_0> <w_0,0> ... <w_0,d-1>
//! ...
//! mean <m_0> ... <m_d-1>
//! scale <s_0> ... <s_d-1>
//! ```
//! Values use 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::SvmModel;
use crate::error::{Error, Result};

pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn encode_svm(model: &SvmModel) -> String {
    let mut out = format!(
        "dfsmc-svm v1 K={} dim={} C={}\n",
        model.class_count(),
        model.dim(),
        model.cost
    );
    for (w, b) in model.weights.iter().zip(&model.biases) {
        out.push_str(&fmt17(*b));
        for v in w {
            write!(out, " {}", fmt17(*v)).expect("string write");
        }
        out.push('\n');
    }
    for (label, values) in [("mean", &model.mean), ("scale", &model.scale)] {
        out.push_str(label);
        for v in values {
            write!(out, " {}", fmt17(*v)).expect("string write");
        }
        out.push('\n');
    }
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::SvmFile(msg.into())
}

fn floats(fields: &[&str], expected: usize, what: &str) -> Result<Vec<f64>> {
    if fields.len() != expected {
        return Err(bad(format!(
            "{what}: expected {expected} values, got {}",
            fields.len()
        )));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| bad(format!("{what}: bad number {f:?}")))
        })
        .collect()
}

pub fn decode_svm(text: &str) -> Result<SvmModel> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    let rest = header
        .strip_prefix("dfsmc-svm v1 ")
        .ok_or_else(|| bad(format!("bad header {header:?}")))?;
    let (mut k, mut dim, mut cost) = (None, None, None);
    for kv in rest.split_whitespace() {
        match kv.split_once('=') {
            Some(("K", v)) => k = v.parse::<usize>().ok(),
            Some(("dim", v)) => dim = v.parse::<usize>().ok(),
            Some(("C", v)) => cost = v.parse::<f64>().ok(),
            _ => return Err(bad(format!("bad header field {kv:?}"))),
        }
    }
    let (Some(k), Some(dim), Some(cost)) = (k, dim, cost) else {
        return Err(bad("header needs K, dim and C"));
    };
    let mut weights = Vec::with_capacity(k);
    let mut biases = Vec::with_capacity(k);
    for class in 0..k {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("missing class {class} line")))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let mut v = floats(&fields, dim + 1, &format!("class {class}"))?;
        biases.push(v.remove(0));
        weights.push(v);
    }
    let mut tail = |label: &str| -> Result<Vec<f64>> {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("missing {label} line")))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.split_first() {
            Some((&head, values)) if head == label => floats(values, dim, label),
            _ => Err(bad(format!("expected {label} line"))),
        }
    };
    let mean = tail("mean")?;
    let scale = tail("scale")?;
    Ok(SvmModel {
        weights,
        biases,
        cost,
        mean,
        scale,
        objectives: Vec::new(),
        iterations: Vec::new(),
    })
}

pub fn save_svm(model: &SvmModel, path: &Path) -> Result<()> {
    crate::pipeline::write_atomic(path, encode_svm(model).as_bytes())
}

pub fn load_svm(path: &Path) -> Result<SvmModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_svm(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_rows() {
        let m = SvmModel {
            weights: vec![vec![1.0, -0.1], vec![0.3, 2.0]],
            biases: vec![0.5, -0.25],
            cost: 1.0,
            mean: vec![0.0, 1.0 / 3.0],
            scale: vec![1.0, 2.0],
            objectives: vec![],
            iterations: vec![],
        };
        let text = encode_svm(&m);
        assert!(text.starts_with("dfsmc-svm v1 K=2 dim=2 C=1\n"));
        assert!(text.contains("5.0000000000000000e-1 1.0000000000000000e0"));
        assert_eq!(decode_svm(&text).unwrap(), m);
    }

    #[test]
    fn malformed() {
        assert!(decode_svm("").is_err());
        assert!(decode_svm("dfsmc-svm v2 K=1 dim=1 C=1\n").is_err());
        assert!(decode_svm("dfsmc-svm v1 K=1 dim=2 C=1\n0 1\nmean 0 0\nscale 1 1\n").is_err());
    }
}
