//! Run artifacts: `summary.json`, `tables/*.csv` and `fields/*.bin` with
//! JSON sidecars. Every number in a summary is paired with a `<key>_tol`
//! field giving its tolerance or noise floor.

use std::fs;
use std::path::Path;

use multibump::grid::Field;
use serde_json::{Map, Value};

use crate::error::CliError;

/// Roundoff scale for a quantity accumulated from terms of size `scale`.
pub fn roundoff(scale: f64) -> f64 {
    16.0 * f64::EPSILON * scale.abs().max(1.0)
}

#[derive(Debug, Clone, Default)]
pub struct Summary(Map<String, Value>);

fn number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

impl Summary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num(&mut self, key: &str, value: f64, tol: f64) -> &mut Self {
        self.0.insert(key.into(), number(value));
        self.0.insert(format!("{key}_tol"), number(tol));
        self
    }

    /// An exact integer.
    pub fn count(&mut self, key: &str, n: usize) -> &mut Self {
        self.0.insert(key.into(), Value::from(n));
        self.0.insert(format!("{key}_tol"), Value::from(0));
        self
    }

    pub fn opt(&mut self, key: &str, value: Option<f64>, tol: f64) -> &mut Self {
        match value {
            Some(v) => self.num(key, v, tol),
            None => {
                self.0.insert(key.into(), Value::Null);
                self
            }
        }
    }

    pub fn nums(&mut self, key: &str, values: &[f64], tol: f64) -> &mut Self {
        self.0.insert(key.into(), Value::Array(values.iter().map(|v| number(*v)).collect()));
        self.0.insert(format!("{key}_tol"), number(tol));
        self
    }

    pub fn points(&mut self, key: &str, points: &[Vec<f64>], tol: f64) -> &mut Self {
        let rows = points
            .iter()
            .map(|p| Value::Array(p.iter().map(|v| number(*v)).collect()))
            .collect();
        self.0.insert(key.into(), Value::Array(rows));
        self.0.insert(format!("{key}_tol"), number(tol));
        self
    }

    pub fn text(&mut self, key: &str, s: impl Into<String>) -> &mut Self {
        self.0.insert(key.into(), Value::String(s.into()));
        self
    }

    pub fn texts(&mut self, key: &str, items: &[String]) -> &mut Self {
        self.0.insert(key.into(), Value::from(items.to_vec()));
        self
    }

    pub fn flag(&mut self, key: &str, on: bool) -> &mut Self {
        self.0.insert(key.into(), Value::Bool(on));
        self
    }

    pub fn child(&mut self, key: &str, s: Summary) -> &mut Self {
        self.0.insert(key.into(), Value::Object(s.0));
        self
    }

    pub fn children(&mut self, key: &str, rows: Vec<Summary>) -> &mut Self {
        self.0.insert(key.into(), Value::Array(rows.into_iter().map(|s| Value::Object(s.0)).collect()));
        self
    }

    /// Adds the entries of `other` whose keys are not present yet.
    pub fn merge(&mut self, other: Summary) -> &mut Self {
        for (k, v) in other.0 {
            self.0.entry(k).or_insert(v);
        }
        self
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.0)
    }
}

pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }
}

/// Formats a float so that it parses back to the same value.
pub fn cell(v: f64) -> String {
    format!("{v:e}")
}

/// Everything a subcommand produces.
pub struct Artifacts {
    pub command: &'static str,
    pub summary: Summary,
    pub tables: Vec<Table>,
    pub fields: Vec<(String, Field)>,
}

impl Artifacts {
    pub fn new(command: &'static str, summary: Summary) -> Self {
        Self {
            command,
            summary,
            tables: Vec::new(),
            fields: Vec::new(),
        }
    }

    pub fn document(&self) -> Value {
        let mut top = Summary::new();
        top.text("command", self.command);
        let mut doc = top.into_value();
        if let (Value::Object(d), Value::Object(s)) = (&mut doc, self.summary.clone().into_value()) {
            d.extend(s);
        }
        doc
    }

    pub fn write(&self, dir: &Path, config_text: &str) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.document())? + "\n")?;
        fs::write(dir.join("run.conf"), config_text)?;
        if !self.tables.is_empty() {
            fs::create_dir_all(dir.join("tables"))?;
        }
        for t in &self.tables {
            let mut w = csv::Writer::from_path(dir.join("tables").join(format!("{}.csv", t.name)))?;
            w.write_record(&t.header)?;
            for r in &t.rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        if !self.fields.is_empty() {
            fs::create_dir_all(dir.join("fields"))?;
        }
        for (name, f) in &self.fields {
            f.dump(&dir.join("fields").join(name))?;
        }
        Ok(())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

/// Writes the error document when an output directory was requested.
pub fn write_error(dir: &Path, err: &CliError) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&err.to_json()).unwrap_or_default() + "\n",
    )
}

/// Keys holding numbers (or arrays of numbers) without a `_tol` companion.
pub fn missing_tolerances(v: &Value) -> Vec<String> {
    let mut out = Vec::new();
    collect_missing(v, "", &mut out);
    out
}

fn is_numeric(v: &Value) -> bool {
    match v {
        Value::Number(_) => true,
        Value::Array(a) => !a.is_empty() && a.iter().all(|x| is_numeric(x) || x.is_null()),
        _ => false,
    }
}

fn collect_missing(v: &Value, path: &str, out: &mut Vec<String>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let here = format!("{path}/{k}");
                if k.ends_with("_tol") {
                    continue;
                }
                if is_numeric(x) && !m.contains_key(&format!("{k}_tol")) {
                    out.push(here.clone());
                }
                collect_missing(x, &here, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                if x.is_object() {
                    collect_missing(x, &format!("{path}[{i}]"), out);
                }
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_number_gets_a_companion() {
        let mut s = Summary::new();
        s.num("w0", 1.4, 1e-8).count("kernel_dim", 1).nums("eigenvalues", &[3.0, 0.0], 1e-5);
        let mut row = Summary::new();
        row.num("value", 2.0, 1e-12);
        s.children("entries", vec![row]).text("note", "ok").flag("pass", true);
        assert!(missing_tolerances(&s.into_value()).is_empty());
    }

    #[test]
    fn bare_numbers_are_reported() {
        let v = serde_json::json!({"a": 1.0, "b": {"c": [1, 2]}, "a_tol": 0.0});
        assert_eq!(missing_tolerances(&v), vec!["/b/c".to_string()]);
    }

    #[test]
    fn non_finite_values_become_null() {
        let mut s = Summary::new();
        s.num("x", f64::NAN, 0.0);
        assert!(s.into_value()["x"].is_null());
    }

    #[test]
    fn cells_round_trip() {
        for v in [0.1, -1e-300, 6.02e23, 1.0 / 3.0] {
            assert_eq!(cell(v).parse::<f64>().unwrap(), v);
        }
    }
}
