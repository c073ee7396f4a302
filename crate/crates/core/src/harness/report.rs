use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub seed: u64,
    pub variant: String,
    pub metric: String,
    pub value: f64,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
}

/// Output of one harness command. Everything in it is a deterministic
/// function of the configuration, the seed list and the crate version.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub provenance: Provenance,
    pub rows: Vec<MetricRow>,
    pub summary: BTreeMap<String, Value>,
    /// Invariant violations detected during the run.
    pub violations: Vec<String>,
}

impl Report {
    pub fn new(command: &str, config_hash: &str, seeds: &[u64]) -> Self {
        Self {
            provenance: Provenance {
                command: command.to_string(),
                config_hash: config_hash.to_string(),
                seeds: seeds.to_vec(),
                version: VERSION.to_string(),
            },
            rows: Vec::new(),
            summary: BTreeMap::new(),
            violations: Vec::new(),
        }
    }

    pub fn push(&mut self, run_id: &str, seed: u64, variant: &str, metric: &str, value: f64) {
        self.rows.push(MetricRow {
            run_id: run_id.to_string(),
            seed,
            variant: variant.to_string(),
            metric: metric.to_string(),
            value,
            config_hash: self.provenance.config_hash.clone(),
        });
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn violate(&mut self, message: impl Into<String>) {
        self.violations.push(message.into());
    }

    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn rows_for<'a>(&'a self, variant: &'a str, metric: &'a str) -> impl Iterator<Item = &'a MetricRow> + 'a {
        self.rows.iter().filter(move |r| r.variant == variant && r.metric == metric)
    }

    /// Writes `report.json` and `metrics.csv` into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
        w.write_record(["run_id", "seed", "variant", "metric", "value"])?;
        for r in &self.rows {
            w.write_record([r.run_id.clone(), r.seed.to_string(), r.variant.clone(), r.metric.clone(), format!("{:.17e}", r.value)])?;
        }
        w.flush()?;
        Ok(())
    }
}
