//! Report rows and their CSV / JSON files.
//!
//! Both files put the generation timestamp on a line of its own so that the
//! remaining bytes depend only on the config and seeds.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Observed by running an experiment.
    Measured,
    /// Exact integer from a counting rule.
    Counted,
    /// Outcome of a check against an independent route.
    Verified,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub config: String,
    pub metric: String,
    pub value: String,
    pub provenance: Provenance,
    pub seed: Option<u64>,
}

impl ReportRow {
    pub fn new(config: &str, metric: impl Into<String>, value: impl Into<String>, provenance: Provenance, seed: Option<u64>) -> Self {
        ReportRow {
            config: config.to_string(),
            metric: metric.into(),
            value: value.into(),
            provenance,
            seed,
        }
    }
}

/// Shortest round-trip scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// `key=value` pairs joined with `;`.
pub fn echo(pairs: &[(&str, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// Stable sort by config echo, then seed. Rows of one cell keep their order.
pub fn canonical_order(rows: &mut [ReportRow]) {
    rows.sort_by(|a, b| a.config.cmp(&b.config).then(a.seed.cmp(&b.seed)));
}

pub const CSV_NAME: &str = "report.csv";
pub const JSON_NAME: &str = "report.json";

pub fn csv_body(rows: &[ReportRow]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Report(e.to_string()))
}

pub fn json_body(rows: &[ReportRow]) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(rows)?)
}

fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes `report.csv` and `report.json` into `dir`, returning their paths.
pub fn write_reports(dir: &Path, rows: &[ReportRow]) -> Result<(PathBuf, PathBuf), CliError> {
    fs::create_dir_all(dir)?;
    let ts = timestamp();
    let csv_path = dir.join(CSV_NAME);
    let mut f = fs::File::create(&csv_path)?;
    writeln!(f, "# generated_unix={ts}")?;
    f.write_all(csv_body(rows)?.as_bytes())?;

    let json_path = dir.join(JSON_NAME);
    let mut f = fs::File::create(&json_path)?;
    writeln!(f, "{{")?;
    writeln!(f, "  \"generated_unix\": {ts},")?;
    writeln!(f, "  \"rows\": {}", json_body(rows)?.replace('\n', "\n  "))?;
    writeln!(f, "}}")?;
    Ok((csv_path, json_path))
}

/// File contents without the timestamp line.
pub fn strip_header(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with("# generated_unix=") && !l.trim_start().starts_with("\"generated_unix\""))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses the rows back from a written CSV report.
pub fn read_csv(path: &Path) -> Result<Vec<ReportRow>, CliError> {
    let text = fs::read_to_string(path)?;
    let body = strip_header(&text);
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

#[derive(Deserialize)]
struct JsonReport {
    #[allow(dead_code)]
    generated_unix: u64,
    rows: Vec<ReportRow>,
}

pub fn read_json(path: &Path) -> Result<Vec<ReportRow>, CliError> {
    let text = fs::read_to_string(path)?;
    let report: JsonReport = serde_json::from_str(&text)?;
    Ok(report.rows)
}
