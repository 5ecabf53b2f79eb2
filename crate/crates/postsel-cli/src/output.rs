//! Table and JSON writers with a fixed numeric contract: 12 significant
//! digits in CSV, full double precision in JSON, and infinities spelled
//! `inf` / `-inf` in both.

use postsel::{Error, Result};
use serde_json::{json, Map, Value};
use std::io::Write;

/// 12 significant digits; `inf`, `-inf` and `nan` as literals.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{:.11e}", v)
    }
}

/// JSON value with non-finite numbers as strings.
pub fn json_num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

/// A rectangular table with named columns; cells are already formatted.
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(&mut w);
        writer.write_record(&self.columns).map_err(io_err)?;
        for row in &self.rows {
            writer.write_record(row).map_err(io_err)?;
        }
        writer.flush().map_err(|e| Error::Numerical(format!("write failed: {e}")))?;
        Ok(())
    }

}

fn io_err(e: csv::Error) -> Error {
    Error::Numerical(format!("write failed: {e}"))
}

/// Rows of `(column, value)` pairs rendered as a JSON array of objects.
pub fn json_rows(columns: &[&str], rows: Vec<Vec<Value>>) -> Value {
    let array: Vec<Value> = rows
        .into_iter()
        .map(|row| {
            let mut obj = Map::new();
            for (c, v) in columns.iter().zip(row) {
                obj.insert(c.to_string(), v);
            }
            Value::Object(obj)
        })
        .collect();
    Value::Array(array)
}

/// Write a string to `path`, or stdout when `path` is `None`.
pub fn write_out(path: Option<&str>, content: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(|e| Error::Numerical(format!("cannot write {p}: {e}"))),
        None => {
            print!("{content}");
            std::io::stdout().flush().map_err(|e| Error::Numerical(format!("stdout: {e}")))
        }
    }
}
