//! CSV and JSON emission. Numbers are written in shortest round-trip form, so
//! every printed value parses back to the exact `f64` the library produced.

use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// One command result: either a single record or a table of rows.
pub enum Report {
    Record(Value),
    Table {
        columns: Vec<&'static str>,
        rows: Vec<Vec<Value>>,
        full: Value,
    },
}

impl Report {
    pub fn record(value: &impl Serialize) -> serde_json::Result<Self> {
        Ok(Report::Record(serde_json::to_value(value)?))
    }
}

/// Dotted-path leaves of `value`; arrays index by position, `null` becomes empty.
fn flatten(value: &Value, prefix: &str, out: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match value {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(v, &key(k), out)),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(v, &key(&i.to_string()), out)),
        leaf => out.push((prefix.to_string(), scalar(leaf))),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn emit(
    command: &str,
    report: &Report,
    format: Format,
    out: &mut dyn Write,
) -> std::io::Result<()> {
    match format {
        Format::Json => {
            let body = match report {
                Report::Record(v) => v,
                Report::Table { full, .. } => full,
            };
            let doc = json!({ "schema": SCHEMA, "command": command, "result": body });
            serde_json::to_writer_pretty(&mut *out, &doc)?;
            writeln!(out)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            match report {
                Report::Record(v) => {
                    let mut fields = Vec::new();
                    flatten(v, "", &mut fields);
                    w.write_record(["field", "value"])?;
                    for (k, v) in fields {
                        w.write_record([k, v])?;
                    }
                }
                Report::Table { columns, rows, .. } => {
                    w.write_record(columns)?;
                    for row in rows {
                        w.write_record(row.iter().map(scalar))?;
                    }
                }
            }
            w.flush()
        }
    }
}
