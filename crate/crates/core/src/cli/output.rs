//! CSV grids with JSON sidecars.

use crate::error::{Error, Result};
use serde::Serialize;
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self { name: name.into(), values }
    }

    pub fn uniform(name: impl Into<String>, lo: f64, hi: f64, points: usize) -> Self {
        let step = if points > 1 { (hi - lo) / (points - 1) as f64 } else { 0.0 };
        Self::new(name, (0..points).map(|i| lo + step * i as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct AxisSummary {
    name: String,
    points: usize,
    lo: f64,
    hi: f64,
}

/// Values on the product of the axes, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridArtifact {
    pub axes: Vec<Axis>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub metadata: BTreeMap<String, Value>,
}

/// Shortest round-trip decimal form; independent of locale.
pub fn format_number(v: f64) -> String {
    format!("{v:?}")
}

impl GridArtifact {
    pub fn new(axes: Vec<Axis>, columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let expected: usize = axes.iter().map(|a| a.values.len()).product();
        if rows.len() != expected {
            return Err(Error::Dimension(format!("artifact has {} rows, axes describe {expected}", rows.len())));
        }
        if rows.iter().any(|r| r.len() != columns.len()) {
            return Err(Error::Dimension("artifact row width differs from column count".into()));
        }
        Ok(Self {
            axes,
            columns,
            rows,
            metadata: BTreeMap::new(),
        })
    }

    pub fn meta(&mut self, key: &str, value: impl Serialize) {
        self.metadata.insert(key.into(), serde_json::to_value(value).expect("serializable metadata"));
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<&str> = self.axes.iter().map(|a| a.name.as_str()).chain(self.columns.iter().map(String::as_str)).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        let shape: Vec<usize> = self.axes.iter().map(|a| a.values.len()).collect();
        for (flat, row) in self.rows.iter().enumerate() {
            let mut rem = flat;
            let mut coords = vec![0.0; shape.len()];
            for a in (0..shape.len()).rev() {
                coords[a] = self.axes[a].values[rem % shape[a]];
                rem /= shape[a];
            }
            let line: Vec<String> = coords.iter().chain(row).map(|v| format_number(*v)).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn sidecar(&self) -> Value {
        let axes: Vec<AxisSummary> = self
            .axes
            .iter()
            .map(|a| AxisSummary {
                name: a.name.clone(),
                points: a.values.len(),
                lo: a.values.first().copied().unwrap_or(0.0),
                hi: a.values.last().copied().unwrap_or(0.0),
            })
            .collect();
        let mut doc = serde_json::Map::new();
        doc.insert("axes".into(), serde_json::to_value(axes).expect("axes"));
        doc.insert("columns".into(), serde_json::to_value(&self.columns).expect("columns"));
        doc.insert("rows".into(), Value::from(self.rows.len()));
        doc.insert("engine_version".into(), Value::from(ENGINE_VERSION));
        for (k, v) in &self.metadata {
            doc.insert(k.clone(), v.clone());
        }
        Value::Object(doc)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv())?;
        write_json(&dir.join(format!("{stem}.json")), &self.sidecar())?;
        Ok(csv)
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_is_row_major() {
        let a = GridArtifact::new(
            vec![Axis::new("x", vec![0.0, 1.0]), Axis::new("y", vec![0.5, 1.5, 2.5])],
            vec!["v".into()],
            (0..6).map(|k| vec![k as f64 * 0.1]).collect(),
        )
        .unwrap();
        let csv = a.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x,y,v");
        assert_eq!(lines[1], "0.0,0.5,0.0");
        assert_eq!(lines[2], "0.0,1.5,0.1");
        assert_eq!(lines[4], "1.0,0.5,0.30000000000000004");
        assert_eq!(lines.len(), 7);
        assert!(GridArtifact::new(vec![Axis::new("x", vec![0.0])], vec!["v".into()], vec![]).is_err());
    }

    #[test]
    fn numbers_round_trip() {
        for v in [1e-300, -2.5, 1.0 / 3.0, 6.02e23] {
            assert_eq!(format_number(v).parse::<f64>().unwrap(), v);
        }
    }
}
