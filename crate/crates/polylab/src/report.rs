//! Output rendering: CSV tables with comment headers, atomic file writes,
//! and the JSON run report printed to stdout.
//!
//! Floats are rendered as `{:.16e}` (17 significant digits), which
//! round-trips every finite `f64` bit pattern; integers and text never go
//! through float formatting.

use std::path::Path;

use serde::Serialize;

use crate::config::{ExperimentConfig, SeedSource};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

/// Full-precision float rendering for CSV cells.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn escape_csv(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// A CSV document: `# `-prefixed comment lines, a header row, data rows.
#[derive(Debug, Clone, Default)]
pub struct Table {
    comments: Vec<String>,
    header: Vec<String>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: Vec<S>) -> Self {
        Table {
            comments: Vec::new(),
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        let line = line.into();
        debug_assert!(!line.contains('\n'));
        self.comments.push(line);
    }

    pub fn row(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str(
            &self.header.iter().map(|h| escape_csv(h)).collect::<Vec<_>>().join(","),
        );
        out.push('\n');
        for row in &self.rows {
            let line = row
                .iter()
                .map(|v| match v {
                    Value::Int(i) => i.to_string(),
                    Value::Float(f) => format_float(*f),
                    Value::Text(s) => escape_csv(s),
                })
                .collect::<Vec<_>>()
                .join(",");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// Writes via a sibling temp file and rename, so readers never observe a
/// partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("output path {} has no file name", path.display())))?
        .to_string_lossy()
        .into_owned();
    let tmp_name = format!(".{file_name}.tmp{}", std::process::id());
    let tmp = match dir {
        Some(d) => d.join(&tmp_name),
        None => std::path::PathBuf::from(&tmp_name),
    };
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn build_id() -> String {
    format!(
        "polylab {} ({})",
        env!("CARGO_PKG_VERSION"),
        if cfg!(debug_assertions) { "debug" } else { "release" }
    )
}

/// The JSON report printed to stdout after a successful run.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub command: &'static str,
    pub build: String,
    /// Echo of the parsed configuration; parsing this echo reproduces the
    /// run byte for byte (together with `noise_seed`).
    pub config: ExperimentConfig,
    pub noise_seed: u64,
    pub seed_source: SeedSource,
    pub threads: String,
    pub wall_time_s: f64,
    pub output_path: String,
    pub notes: Vec<String>,
    pub summary: serde_json::Value,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}
