//! LETOR / SVMLight-with-qid text format.
//!
//! `<label> qid:<id> <idx>:<val> ... [w:<weight>] [# comment]`, feature indices 1-based.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{Dataset, Document, QueryList};
use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLine {
    pub query_id: String,
    pub label: f64,
    /// `(1-based index, value)` in file order.
    pub features: Vec<(usize, f64)>,
    pub weight: Option<f64>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_number(line: usize, what: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| parse_err(line, format!("{what}: non-numeric value {s:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{what}: non-finite value {s:?}")));
    }
    Ok(v)
}

/// Parses one data line. `line_no` is only used for diagnostics.
pub fn parse_letor_line(line: &str, line_no: usize) -> Result<ParsedLine> {
    let body = line.split('#').next().unwrap_or("").trim();
    let mut tokens = body.split_whitespace();
    let label_tok = tokens.next().ok_or_else(|| parse_err(line_no, "empty line"))?;
    let label = parse_number(line_no, "label", label_tok)?;
    if label < 0.0 {
        return Err(parse_err(line_no, format!("negative label {label}")));
    }
    let qid_tok = tokens
        .next()
        .ok_or_else(|| parse_err(line_no, "missing qid"))?;
    let query_id = qid_tok
        .strip_prefix("qid:")
        .filter(|id| !id.is_empty())
        .ok_or_else(|| parse_err(line_no, format!("expected qid:<id>, found {qid_tok:?}")))?
        .to_string();

    let mut features = Vec::new();
    let mut seen = HashSet::new();
    let mut weight = None;
    for tok in tokens {
        let (key, value) = tok
            .split_once(':')
            .ok_or_else(|| parse_err(line_no, format!("malformed token {tok:?}")))?;
        if key == "w" {
            let w = parse_number(line_no, "weight", value)?;
            if w < 0.0 {
                return Err(parse_err(line_no, format!("negative weight {w}")));
            }
            weight = Some(w);
            continue;
        }
        let idx: usize = key
            .parse()
            .ok()
            .filter(|&i| i >= 1)
            .ok_or_else(|| parse_err(line_no, format!("malformed feature index {key:?}")))?;
        let v = parse_number(line_no, &format!("feature {idx}"), value)?;
        if !seen.insert(idx) {
            return Err(parse_err(line_no, format!("duplicate feature index {idx}")));
        }
        features.push((idx, v));
    }
    Ok(ParsedLine {
        query_id,
        label,
        features,
        weight,
    })
}

/// Reads LETOR lines and groups them by query id in first-seen order.
pub fn read_dataset<T: Scalar, R: BufRead>(reader: R, expected_dim: Option<usize>) -> Result<Dataset<T>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<ParsedLine>> = HashMap::new();
    let mut max_idx = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| parse_err(line_no, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parsed = parse_letor_line(trimmed, line_no)?;
        if let Some(&(idx, _)) = parsed.features.iter().max_by_key(|(i, _)| *i) {
            if let Some(dim) = expected_dim {
                if idx > dim {
                    return Err(parse_err(
                        line_no,
                        format!("feature index {idx} exceeds expected dimension {dim}"),
                    ));
                }
            }
            max_idx = max_idx.max(idx);
        }
        if !groups.contains_key(&parsed.query_id) {
            order.push(parsed.query_id.clone());
        }
        groups.entry(parsed.query_id.clone()).or_default().push(parsed);
    }
    if order.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = expected_dim.unwrap_or(max_idx);
    let queries = order
        .into_iter()
        .map(|qid| {
            let lines = groups.remove(&qid).unwrap_or_default();
            let docs = lines
                .into_iter()
                .map(|p| {
                    let mut features = vec![T::zero(); dim];
                    for (idx, v) in p.features {
                        features[idx - 1] = T::lit(v);
                    }
                    Document {
                        features,
                        label: T::lit(p.label),
                        weight: p.weight.map(T::lit),
                    }
                })
                .collect();
            QueryList::new(qid, docs)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(queries)
}

pub fn load_dataset<T: Scalar>(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), expected_dim)
}

/// Writes real documents in LETOR form. Zero-valued features are omitted.
pub fn write_letor<T: Scalar, W: Write>(ds: &Dataset<T>, mut out: W) -> std::io::Result<()> {
    for q in &ds.queries {
        for (doc, _) in q.docs.iter().zip(&q.mask).filter(|(_, &m)| m) {
            write!(out, "{} qid:{}", doc.label.as_f64(), q.query_id)?;
            for (i, v) in doc.features.iter().enumerate() {
                if *v != T::zero() {
                    write!(out, " {}:{}", i + 1, v.as_f64())?;
                }
            }
            if let Some(w) = doc.weight {
                write!(out, " w:{}", w.as_f64())?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
