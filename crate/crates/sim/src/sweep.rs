//! Long-format sweep results: one row per (ratio, metric).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub metric: String,
    pub value: f64,
    /// Wall-clock time of the sweep point. Kept in memory only, so that the
    /// CSV on disk is reproducible byte for byte.
    #[serde(skip)]
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn push(&mut self, ratio: f64, metric: impl Into<String>, value: f64, runtime_ms: f64) {
        self.rows.push(SweepRow { ratio, metric: metric.into(), value, runtime_ms });
    }

    /// Metric names in first-seen order, each with its (ratio, value) points.
    pub fn series(&self) -> Vec<(String, Vec<(f64, f64)>)> {
        let mut order: Vec<String> = Vec::new();
        let mut points: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
        for row in &self.rows {
            if !points.contains_key(row.metric.as_str()) {
                order.push(row.metric.clone());
            }
            points.entry(row.metric.as_str()).or_default().push((row.ratio, row.value));
        }
        order
            .into_iter()
            .map(|name| {
                let mut pts = points.remove(name.as_str()).unwrap_or_default();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                (name, pts)
            })
            .collect()
    }

    pub fn metric(&self, name: &str) -> Vec<(f64, f64)> {
        self.series().into_iter().find(|(n, _)| n == name).map(|(_, p)| p).unwrap_or_default()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| SimError::config("sweep", e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| SimError::config("sweep", e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv_str(text: &str, file: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (i, rec) in r.deserialize::<SweepRow>().enumerate() {
            let row = rec.map_err(|e| SimError::Input {
                file: file.to_string(),
                line: i + 2,
                message: e.to_string(),
            })?;
            rows.push(row);
        }
        Ok(Self { rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_csv_str(&text, &path.display().to_string())
    }
}
