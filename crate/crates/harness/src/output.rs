//! Artifact encoding. Every artifact embeds the resolved spec it came from.

use serde_json::{json, Value};

use crate::config::{ExperimentSpec, OutputFormat};

/// A CSV table; cells are preformatted strings.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&'static str]) -> Self {
        CsvTable {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// What a command produced, before encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub table: CsvTable,
    pub result: Value,
    /// `(metric, value)` pairs printed one per line.
    pub summary: Vec<(String, String)>,
    /// Spec fragment to merge into a later spec, written next to the artifact.
    pub overlay: Option<String>,
}

/// Where the overlay of `output_path` goes: same stem, `.overlay.toml`.
pub fn overlay_path(output_path: &str) -> std::path::PathBuf {
    std::path::Path::new(output_path).with_extension("overlay.toml")
}

/// Shortest round-trip decimal form, always with "." as separator.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn spec_json(spec: &ExperimentSpec) -> Value {
    serde_json::to_value(spec.to_table()).expect("spec tables always convert")
}

/// CSV with the resolved spec as leading `# ` comment lines.
pub fn encode_csv(spec: &ExperimentSpec, table: &CsvTable) -> Vec<u8> {
    let mut out = String::from("# tdadc experiment\n");
    for line in spec.echo().lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    for w in &spec.warnings {
        out.push_str("# warning: ");
        out.push_str(w);
        out.push('\n');
    }
    let mut bytes = out.into_bytes();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(&mut bytes);
    w.write_record(&table.header).expect("write to memory");
    for row in &table.rows {
        w.write_record(row).expect("write to memory");
    }
    w.flush().expect("write to memory");
    drop(w);
    bytes
}

/// Canonical JSON: object keys sorted, two-space indent, trailing newline.
pub fn encode_json(spec: &ExperimentSpec, result: &Value) -> Vec<u8> {
    let doc = json!({
        "spec": spec_json(spec),
        "warnings": spec.warnings,
        "result": result,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("values always serialize");
    s.push('\n');
    s.into_bytes()
}

pub fn encode(spec: &ExperimentSpec, outcome: &Outcome) -> Vec<u8> {
    match spec.output_format {
        OutputFormat::Csv => encode_csv(spec, &outcome.table),
        OutputFormat::Json => encode_json(spec, &outcome.result),
    }
}
