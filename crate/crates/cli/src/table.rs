//! Tabular output shared by every command.
//!
//! Reals are written with 17 significant digits in scientific notation.
//! Divergent quantities are written as `inf` in CSV and `null` in JSON.

use qcrb::qfi::Quantity;
use serde_json::{Map, Number, Value};

use crate::config::{Format, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Qty(Quantity),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<Quantity> for Cell {
    fn from(q: Quantity) -> Self {
        Cell::Qty(q)
    }
}

impl From<usize> for Cell {
    fn from(k: usize) -> Self {
        Cell::Int(k as u64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        // `+ 0.0` folds -0 into 0
        format!("{:.16e}", x + 0.0)
    }
}

impl Cell {
    pub fn to_text(&self) -> String {
        match self {
            Cell::Real(x) => format_real(*x),
            Cell::Qty(Quantity::Finite(x)) => format_real(*x),
            Cell::Qty(Quantity::Divergent) => "inf".into(),
            Cell::Int(k) => k.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn to_json(&self) -> Value {
        let real = |x: f64| Number::from_f64(x + 0.0).map(Value::Number).unwrap_or(Value::Null);
        match self {
            Cell::Real(x) => real(*x),
            Cell::Qty(Quantity::Finite(x)) => real(*x),
            Cell::Qty(Quantity::Divergent) => Value::Null,
            Cell::Int(k) => Value::from(*k),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Text(s) => Value::String(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_text))?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self.columns.iter().cloned().zip(row.iter().map(Cell::to_json)).collect();
                Value::Object(obj)
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&Value::Array(rows))?;
        s.push('\n');
        Ok(s)
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

/// An ordered list of `key = value` pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyValues(pub Vec<(String, Cell)>);

impl KeyValues {
    pub fn push(&mut self, key: &str, value: impl Into<Cell>) {
        self.0.push((key.to_string(), value.into()));
    }

    pub fn get(&self, key: &str) -> Option<&Cell> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => Ok(self.0.iter().map(|(k, v)| format!("{k}={}\n", v.to_text())).collect()),
            Format::Json => {
                let obj: Map<String, Value> = self.0.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
                let mut s = serde_json::to_string_pretty(&Value::Object(obj))?;
                s.push('\n');
                Ok(s)
            }
        }
    }
}
