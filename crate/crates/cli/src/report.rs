use std::io::{self, Write};

use nestmc::SlopeFit;
use serde_json::{json, Map, Value};

use crate::config::Format;

/// Written in place of any non-finite number.
pub const DEGENERATE: &str = "degenerate";
/// Written for a value that does not apply to the row.
pub const MISSING: &str = "NA";

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
    Missing,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) if v.is_finite() => v.to_string(),
            Cell::Float(_) => DEGENERATE.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => MISSING.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) if v.is_finite() => json!(v),
            Cell::Float(_) => json!(DEGENERATE),
            Cell::Text(s) => json!(s),
            Cell::Missing => Value::Null,
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metadata {
    pub command: &'static str,
    pub model: Option<String>,
    pub policy: Option<String>,
    pub seed: u64,
}

/// A slope fit and what it was fitted over.
#[derive(Clone, Debug, PartialEq)]
pub struct FitLine {
    pub estimator: Option<&'static str>,
    pub axis: &'static str,
    pub fit: Option<SlopeFit>,
    pub note: Option<String>,
}

impl FitLine {
    fn csv(&self) -> String {
        let mut line = String::from("#");
        if let Some(e) = self.estimator {
            line.push_str(&format!(" estimator={e}"));
        }
        line.push_str(&format!(" axis={}", self.axis));
        match &self.fit {
            Some(f) => line.push_str(&format!(
                " slope={} intercept={} residual_rms={} points={}",
                f.slope, f.intercept, f.residual_rms, f.points
            )),
            None => line.push_str(&format!(" slope={MISSING}")),
        }
        if let Some(n) = &self.note {
            line.push_str(&format!(" note={n}"));
        }
        line
    }

    fn json(&self) -> Value {
        let mut obj = Map::new();
        if let Some(e) = self.estimator {
            obj.insert("estimator".into(), json!(e));
        }
        obj.insert("axis".into(), json!(self.axis));
        let num = |v: Option<f64>| v.map_or(Value::Null, |x| json!(x));
        obj.insert("slope".into(), num(self.fit.map(|f| f.slope)));
        obj.insert("intercept".into(), num(self.fit.map(|f| f.intercept)));
        obj.insert("residual_rms".into(), num(self.fit.map(|f| f.residual_rms)));
        obj.insert("points".into(), self.fit.map_or(Value::Null, |f| json!(f.points)));
        obj.insert("note".into(), self.note.as_ref().map_or(Value::Null, |n| json!(n)));
        Value::Object(obj)
    }

    /// One-line summary for the terminal.
    pub fn summary(&self) -> String {
        let what = self.estimator.map_or(String::new(), |e| format!("{e} "));
        match (&self.fit, &self.note) {
            (Some(f), _) => format!("{what}slope vs {}: {:.4} ({} points)", self.axis, f.slope, f.points),
            (None, Some(n)) => format!("{what}slope vs {}: none ({n})", self.axis),
            (None, None) => format!("{what}slope vs {}: none", self.axis),
        }
    }
}

/// A finished command's output: a table plus fits and notes.
#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub metadata: Metadata,
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
    pub fits: Vec<FitLine>,
    pub notes: Vec<String>,
    /// Rows whose degenerate fraction crossed the harness limit.
    pub flagged_rows: usize,
}

impl Document {
    pub fn write(&self, format: Format, out: &mut dyn Write) -> io::Result<()> {
        match format {
            Format::Csv => self.write_csv(out),
            Format::Json => self.write_json(out),
        }
    }

    fn write_csv(&self, out: &mut dyn Write) -> io::Result<()> {
        {
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record(self.columns)?;
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::csv))?;
            }
            w.flush()?;
        }
        for f in &self.fits {
            writeln!(out, "{}", f.csv())?;
        }
        for n in &self.notes {
            writeln!(out, "# note={n}")?;
        }
        Ok(())
    }

    fn write_json(&self, out: &mut dyn Write) -> io::Result<()> {
        let opt = |v: &Option<String>| v.as_ref().map_or(Value::Null, |s| json!(s));
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| (c.to_string(), v.json()))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        let doc = json!({
            "metadata": {
                "command": self.metadata.command,
                "model": opt(&self.metadata.model),
                "policy": opt(&self.metadata.policy),
                "seed": self.metadata.seed,
                "version": env!("CARGO_PKG_VERSION"),
            },
            "rows": rows,
            "fits": self.fits.iter().map(FitLine::json).collect::<Vec<_>>(),
            "notes": self.notes,
        });
        serde_json::to_writer_pretty(&mut *out, &doc)?;
        writeln!(out)
    }
}
