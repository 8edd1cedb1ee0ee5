//! Grid sweeps over zoo channel parameters.
//!
//! Config (JSON, `schema_version` 1):
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "channel": {"name": "phase_loss", "params": {"phi": 0.0}},
//!   "compute": "incompat-single-use",
//!   "weights": null,
//!   "grid": {"eta": [0.1, 0.2, 0.3]}
//! }
//! ```
//!
//! The grid is the Cartesian product of the listed axes, in key order with
//! the last key varying fastest. An empty `grid` object, or any empty axis,
//! gives no rows.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use qmetro::bounds::{rld_bound_weighted, single_use_bound_with, sql_bound_with, BoundMode};
use qmetro::channel::{zoo_build, ZooSpec};
use qmetro::incompat::{incompat_cost, naturalness_check_with};
use qmetro::sdp::SdpSettings;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Compute {
    BoundSingleUse,
    BoundSql,
    BoundRld,
    IncompatSingleUse,
    IncompatAsymptotic,
    Naturalness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: u32,
    pub channel: ZooSpec,
    pub compute: Compute,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub grid: BTreeMap<String, Vec<f64>>,
}

impl SweepConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text).context("sweep config")?;
        if cfg.schema_version != SCHEMA_VERSION {
            bail!("unsupported schema_version {} (expected {SCHEMA_VERSION})", cfg.schema_version);
        }
        Ok(cfg)
    }

    pub fn points(&self) -> Vec<BTreeMap<String, f64>> {
        if self.grid.is_empty() {
            return Vec::new();
        }
        let mut out = vec![BTreeMap::new()];
        for (key, values) in &self.grid {
            out = out
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(key.clone(), *v);
                        q
                    })
                })
                .collect();
        }
        out
    }

    pub fn columns(&self) -> Vec<String> {
        let mut cols = vec!["index".to_string()];
        cols.extend(self.grid.keys().cloned());
        cols.extend(["value".to_string(), "error".to_string()]);
        cols
    }
}

fn evaluate(cfg: &SweepConfig, point: &BTreeMap<String, f64>, settings: &SdpSettings) -> qmetro::error::Result<f64> {
    let mut spec = cfg.channel.clone();
    spec.params.extend(point.iter().map(|(k, v)| (k.clone(), *v)));
    let ch = zoo_build(&spec)?;
    let w = cfg.weights.clone().unwrap_or_else(|| vec![1.0; ch.num_params()]);
    Ok(match cfg.compute {
        Compute::BoundSingleUse => single_use_bound_with(&ch, &w, settings)?.value,
        Compute::BoundSql => sql_bound_with(&ch, &w, settings)?.value,
        Compute::BoundRld => rld_bound_weighted(&ch, &w)?.value,
        Compute::IncompatSingleUse => incompat_cost(&ch, BoundMode::SingleUse, settings)?.cost,
        Compute::IncompatAsymptotic => incompat_cost(&ch, BoundMode::Sql, settings)?.cost,
        Compute::Naturalness => naturalness_check_with(&ch, settings)?,
    })
}

/// One row per grid point, in grid order. Rows are independent and run on
/// the settings' execution policy.
pub fn run(cfg: &SweepConfig, settings: &SdpSettings) -> Vec<Value> {
    let points = cfg.points();
    settings.exec.map(points.len(), |i| {
        let mut row = serde_json::Map::new();
        row.insert("index".into(), json!(i));
        for (k, v) in &points[i] {
            row.insert(k.clone(), json!(v));
        }
        match evaluate(cfg, &points[i], settings) {
            Ok(v) => {
                // JSON has no infinity; an infinite RLD bound is written as a string.
                let v = if v.is_finite() { json!(v) } else { json!(v.to_string()) };
                row.insert("value".into(), v);
                row.insert("error".into(), Value::Null);
            }
            Err(e) => {
                row.insert("value".into(), Value::Null);
                row.insert("error".into(), json!(e.to_string()));
            }
        }
        Value::Object(row)
    })
}
