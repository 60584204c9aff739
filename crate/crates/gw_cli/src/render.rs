//! Unit handling and small formatting helpers shared by the subcommands.

use serde_json::{Map, Value};
use std::fmt::Write;

#[derive(Debug, Clone, Copy)]
pub struct Unit {
    pub bits: bool,
}

impl Unit {
    pub fn name(&self) -> &'static str {
        if self.bits {
            "bits"
        } else {
            "nats"
        }
    }

    /// Converts a value held in nats.
    pub fn of(&self, nats: f64) -> f64 {
        if self.bits {
            nats / std::f64::consts::LN_2
        } else {
            nats
        }
    }

    /// `stem` suffixed with the unit, e.g. `rd_nats`.
    pub fn key(&self, stem: &str) -> String {
        format!("{}_{}", stem, self.name())
    }
}

/// Shortest text that parses back to the same float, with an exponent for
/// very large or small magnitudes.
pub fn num(v: f64) -> String {
    format!("{:?}", v)
}

pub fn csv_opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Pretty JSON with a trailing newline.
pub fn json(v: Map<String, Value>) -> String {
    let mut s = serde_json::to_string_pretty(&Value::Object(v)).expect("maps serialize");
    s.push('\n');
    s
}

/// Two-column text table.
pub fn text(rows: &[(&str, String)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{:width$}  {}", k, v, width = width);
    }
    out
}

pub fn f(v: f64) -> String {
    format!("{:.6}", v)
}

pub fn pair(p: (f64, f64)) -> String {
    format!("({}, {})", p.0, p.1)
}
