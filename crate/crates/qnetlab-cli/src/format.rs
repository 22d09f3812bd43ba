//! Artifact rendering. CSV is the default: a `#` manifest block, one header
//! row, then data rows whose floats carry exactly 10 significant digits in
//! scientific notation with a '.' separator, independent of locale. The
//! JSON form mirrors the same columns as object fields.

use serde_json::{json, Value};

use crate::manifest::RunManifest;

/// 10 significant digits, locale-free.
pub fn sig10(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.9e}")
    }
}

/// One table cell; `Missing` renders as an empty CSV field / JSON null.
#[derive(Clone, Debug)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
    Missing,
}

impl Cell {
    pub fn csv(&self) -> String {
        match self {
            Cell::Num(x) => sig10(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    pub fn json(&self) -> Value {
        match self {
            // NaN has no JSON number; it degrades to null like Missing.
            Cell::Num(x) => json!(x),
            Cell::Int(n) => json!(n),
            Cell::Bool(b) => json!(b),
            Cell::Text(s) => json!(s),
            Cell::Missing => Value::Null,
        }
    }
}

/// Column-labeled rows shared by both renderers.
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn render_csv(&self, manifest: &RunManifest) -> String {
        let mut out = manifest.csv_block();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            debug_assert_eq!(row.len(), self.columns.len());
            let line = row.iter().map(Cell::csv).collect::<Vec<_>>().join(",");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn render_json(&self, manifest: &RunManifest) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let fields: serde_json::Map<String, Value> = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(name, cell)| (name.to_string(), cell.json()))
                    .collect();
                Value::Object(fields)
            })
            .collect();
        let doc = json!({
            "manifest": manifest.json_value(),
            "columns": self.columns,
            "rows": rows,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("static document");
        text.push('\n');
        text
    }
}
