//! Result files: CSV with a `#` provenance block, or one JSON object with `meta` and `rows`.

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Format};
use crate::run::Report;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// SHA-256 of the canonical config JSON, output location excluded.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut v = cfg.to_json();
    if let Value::Object(m) = &mut v {
        m.remove("output");
    }
    hex::encode(Sha256::digest(serde_json::to_string(&v).expect("config serialises").as_bytes()))
}

fn provenance(cfg: &ExperimentConfig, report: &Report) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("tool".into(), json!("iltlab"));
    m.insert("version".into(), json!(VERSION));
    m.insert("command".into(), json!(cfg.command.name()));
    m.insert("seed".into(), cfg.seed.map_or(Value::Null, Value::from));
    m.insert("config_sha256".into(), json!(config_hash(cfg)));
    m.insert("columns".into(), json!(report.columns));
    m.insert("warnings".into(), json!(report.warnings));
    for (k, v) in &report.meta {
        m.insert(k.clone(), v.clone());
    }
    m
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn render(cfg: &ExperimentConfig, report: &Report, format: Format) -> String {
    let meta = provenance(cfg, report);
    match format {
        Format::Json => {
            let rows: Vec<Value> = report
                .rows
                .iter()
                .map(|r| Value::Object(report.columns.iter().cloned().zip(r.iter().cloned()).collect()))
                .collect();
            let mut s = serde_json::to_string_pretty(&json!({ "meta": meta, "rows": rows })).expect("report serialises");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut head = String::new();
            for key in ["tool", "version", "command", "seed", "config_sha256"] {
                head.push_str(&format!("# {key}: {}\n", cell(&meta[key])));
            }
            for (k, v) in &report.meta {
                head.push_str(&format!("# {k}: {v}\n"));
            }
            for w in &report.warnings {
                head.push_str(&format!("# warning: {w}\n"));
            }
            let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
            wtr.write_record(&report.columns).expect("in-memory write");
            for r in &report.rows {
                wtr.write_record(r.iter().map(cell)).expect("in-memory write");
            }
            head + &String::from_utf8(wtr.into_inner().expect("flush")).expect("utf-8")
        }
    }
}
