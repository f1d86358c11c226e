//! Deterministic output: canonical JSON (sorted keys, reals at 12
//! significant digits), CSV tables, and a manifest hashing every emitted
//! file.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use aire_core::analytics::{CorrelationTable, TemporalAggregate};
use aire_core::attention::MapSource;
use aire_core::metric::AirEReport;
use aire_core::program::OpKind;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Fixed-point rendering with 12 significant digits. The decimal count is
/// derived from the magnitude, so equal values always print identically.
pub fn format_real(v: f64) -> String {
    assert!(v.is_finite(), "refusing to print a non-finite real");
    if v == 0.0 {
        return "0.0".to_owned();
    }
    let a = v.abs();
    let mut exp = a.log10().floor() as i32;
    if 10f64.powi(exp) > a {
        exp -= 1;
    } else if 10f64.powi(exp + 1) <= a {
        exp += 1;
    }
    let decimals = (11 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Serialize to canonical JSON text: object keys sorted, two-space indent,
/// reals through [`format_real`], integers untouched.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("value serializes to JSON");
    let mut out = String::new();
    write_value(&v, 0, &mut out);
    out.push('\n');
    out
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&format_real(n.as_f64().expect("numeric JSON value")));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serializes"))
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                push_indent(indent + 1, out);
                write_value(item, indent + 1, out);
            }
            out.push('\n');
            push_indent(indent, out);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let sorted: BTreeMap<&String, &Value> = map.iter().collect();
            out.push('{');
            for (i, (key, item)) in sorted.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                push_indent(indent + 1, out);
                out.push_str(&serde_json::to_string(key).expect("key serializes"));
                out.push_str(": ");
                write_value(item, indent + 1, out);
            }
            out.push('\n');
            push_indent(indent, out);
            out.push('}');
        }
    }
}

fn push_indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files under one root and records a content hash for each; `finish`
/// adds `manifest.json` listing them all (the manifest does not hash itself).
pub struct Emitter {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl Emitter {
    pub fn new(root: &Path) -> io::Result<Emitter> {
        fs::create_dir_all(root)?;
        Ok(Emitter {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.files.insert(rel.to_owned(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> io::Result<()> {
        self.write(rel, canonical_json(value).as_bytes())
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    /// Write the manifest and return its path.
    pub fn finish(self) -> io::Result<PathBuf> {
        let manifest = serde_json::json!({ "files": self.files });
        let path = self.root.join("manifest.json");
        fs::write(&path, canonical_json(&manifest).as_bytes())?;
        Ok(path)
    }
}

/// One row per (question, source, step): the step's aggregated score (blank
/// when undefined) and whether the fallback fired.
pub fn corpus_csv(reports: &[AirEReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["question_id", "source", "step", "kind", "score", "fallback_used"])
        .expect("csv record");
    for r in reports {
        for s in &r.steps {
            w.write_record([
                r.question_id.as_str(),
                r.source.name(),
                &s.step.to_string(),
                s.kind.name(),
                &s.score.map(format_real).unwrap_or_default(),
                if s.fallback_used { "true" } else { "false" },
            ])
            .expect("csv record");
        }
    }
    String::from_utf8(w.into_inner().expect("csv buffer")).expect("csv is utf-8")
}

/// One row per map source, one column per operation kind in alphabetical
/// order; cells hold the correlation coefficient with a `*` mark when it is
/// significant, blank when undefined.
pub fn correlations_csv(tables: &BTreeMap<MapSource, CorrelationTable>) -> String {
    let mut kinds: Vec<OpKind> = OpKind::ALL.to_vec();
    kinds.sort_by_key(|k| k.name());

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["source".to_owned()];
    header.extend(kinds.iter().map(|k| k.name().to_owned()));
    w.write_record(&header).expect("csv record");

    for (source, table) in tables {
        let mut row = vec![source.name().to_owned()];
        for kind in &kinds {
            let cell = table
                .kinds
                .get(kind)
                .and_then(|c| {
                    c.r.map(|r| {
                        let mut s = format_real(r);
                        if c.significant {
                            s.push('*');
                        }
                        s
                    })
                })
                .unwrap_or_default();
            row.push(cell);
        }
        w.write_record(&row).expect("csv record");
    }
    String::from_utf8(w.into_inner().expect("csv buffer")).expect("csv is utf-8")
}

/// Long form of the aggregated temporal matrix: one row per (bin, step).
pub fn temporal_csv(agg: &TemporalAggregate, bins: &[(f64, f64)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin", "bin_start_ms", "bin_end_ms", "step", "mean_score", "n_questions"])
        .expect("csv record");
    for (b, row) in agg.mean.iter().enumerate() {
        let (lo, hi) = bins.get(b).copied().unwrap_or((f64::NAN, f64::NAN));
        for (s, cell) in row.iter().enumerate() {
            w.write_record([
                b.to_string(),
                if lo.is_finite() { format_real(lo) } else { String::new() },
                if hi.is_finite() { format_real(hi) } else { String::new() },
                s.to_string(),
                cell.map(format_real).unwrap_or_default(),
                agg.count[b][s].to_string(),
            ])
            .expect("csv record");
        }
    }
    String::from_utf8(w.into_inner().expect("csv buffer")).expect("csv is utf-8")
}
