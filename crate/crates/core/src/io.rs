//! CSV readers for probability vectors, pmf tables and cost tables.
//!
//! A first row that does not parse as numbers is taken as a header. Blank
//! lines and lines starting with `#` are skipped.

use std::io::Read;

use crate::dist::Pmf;
use crate::error::{Error, Result};

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Numeric rows of exactly `width` fields, with their line numbers.
fn numeric_rows(reader: impl Read, width: usize) -> Result<Vec<(u64, Vec<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(k as u64 + 1, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != width {
            return Err(parse_err(
                line,
                format!("expected {width} field(s), found {}", rec.len()),
            ));
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push((line, v)),
            Err(_) if rows.is_empty() && k == 0 => continue,
            Err(e) => return Err(parse_err(line, format!("not a number: {e}"))),
        }
    }
    Ok(rows)
}

/// One probability per line.
pub fn read_probabilities(reader: impl Read) -> Result<Vec<f64>> {
    let rows = numeric_rows(reader, 1)?;
    if rows.is_empty() {
        return Err(parse_err(1, "no probabilities found"));
    }
    rows.into_iter()
        .map(|(line, v)| {
            let p = v[0];
            if (0.0..=1.0).contains(&p) {
                Ok(p)
            } else {
                Err(parse_err(line, format!("probability {p} outside [0, 1]")))
            }
        })
        .collect()
}

/// Rows `index,prob`; indices may be sparse and in any order.
pub fn read_pmf(reader: impl Read) -> Result<Pmf> {
    let rows = numeric_rows(reader, 2)?;
    if rows.is_empty() {
        return Err(parse_err(1, "no pmf rows found"));
    }
    let mut entries = Vec::with_capacity(rows.len());
    for (line, v) in &rows {
        let (idx, p) = (v[0], v[1]);
        if idx < 0.0 || idx.fract() != 0.0 || idx > 1e7 {
            return Err(parse_err(
                *line,
                format!("index {idx} is not a non-negative integer"),
            ));
        }
        if !(p >= 0.0 && p.is_finite()) {
            return Err(parse_err(
                *line,
                format!("probability {p} is negative or not finite"),
            ));
        }
        entries.push((*line, idx as usize, p));
    }
    let top = entries.iter().map(|e| e.1).max().unwrap_or(0);
    let mut probs = vec![0.0; top + 1];
    let mut seen = vec![false; top + 1];
    for (line, i, p) in entries {
        if seen[i] {
            return Err(parse_err(line, format!("index {i} appears twice")));
        }
        seen[i] = true;
        probs[i] = p;
    }
    Pmf::from_probs(probs).map_err(|e| parse_err(rows[rows.len() - 1].0, e.to_string()))
}

/// One cost value `ρ(i)` per line, starting at `i = 0`.
pub fn read_cost_table(reader: impl Read) -> Result<Vec<f64>> {
    let rows = numeric_rows(reader, 1)?;
    if rows.is_empty() {
        return Err(parse_err(1, "no cost values found"));
    }
    for w in rows.windows(2) {
        if w[1].1[0] <= w[0].1[0] {
            return Err(parse_err(w[1].0, "cost values must be strictly increasing"));
        }
    }
    Ok(rows.into_iter().map(|(_, v)| v[0]).collect())
}
