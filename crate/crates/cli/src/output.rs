//! Artifact writing and the stage cache.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use driftlab_core::sde::TrajectoryResult;
use driftlab_core::stats::EstimateReport;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::RunError;
use crate::pipeline::Outcome;

pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const RUNTIME_FILE: &str = "runtime.json";
pub const CACHE_DIR: &str = ".stage-cache";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
    pub cached: bool,
}

#[derive(Serialize)]
struct Runtime<'a> {
    version: &'a str,
    finished_unix: u64,
    threads: usize,
    total_seconds: f64,
    stages: &'a [StageTiming],
}

/// One row of the estimates table.
#[derive(Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub name: String,
    pub component: usize,
    pub value: f64,
    pub se: f64,
    pub n: u64,
    pub variant: String,
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
    pub seed: u64,
}

pub fn estimate_rows(reports: &[EstimateReport], seed: u64) -> Vec<EstimateRow> {
    let mut rows = Vec::new();
    for r in reports {
        for (i, (v, s)) in r.value.iter().zip(&r.se).enumerate() {
            rows.push(EstimateRow {
                name: r.name.clone(),
                component: i + 1,
                value: *v,
                se: *s,
                n: r.n,
                variant: r.variant.as_str().into(),
                epsilon: r.epsilon,
                lambda: r.lambda,
                seed,
            });
        }
    }
    rows
}

pub struct Output {
    dir: PathBuf,
    hash: String,
    cache: bool,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: PathBuf, hash: String, cache: bool) -> Self {
        Output { dir, hash, cache, written: Vec::new() }
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn path(&mut self, name: &str) -> Result<PathBuf, RunError> {
        fs::create_dir_all(&self.dir)?;
        let p = self.dir.join(name);
        if !self.written.contains(&p) {
            self.written.push(p.clone());
        }
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let p = self.path(name)?;
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(p, text)?;
        Ok(())
    }

    fn cache_path(&self, stage: &str) -> PathBuf {
        self.dir.join(CACHE_DIR).join(format!("{stage}-{}.json", &self.hash[..16]))
    }

    /// A cached stage result, if caching is on and a readable entry exists.
    pub fn load_cached<T: DeserializeOwned>(&self, stage: &str) -> Option<T> {
        if !self.cache {
            return None;
        }
        let text = fs::read_to_string(self.cache_path(stage)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn store_cached<T: Serialize>(&self, stage: &str, value: &T) -> Result<(), RunError> {
        if !self.cache {
            return Ok(());
        }
        let p = self.cache_path(stage);
        fs::create_dir_all(p.parent().unwrap())?;
        fs::write(p, serde_json::to_string(value)?)?;
        Ok(())
    }

    pub fn write_estimates(&mut self, outcome: &Outcome, seed: u64) -> Result<(), RunError> {
        let mut reports: Vec<&[EstimateReport]> = Vec::new();
        if let Some(c) = &outcome.calibration {
            reports.push(&c.estimates);
        }
        if let Some(s) = &outcome.statics {
            reports.push(&s.estimates);
        }
        if let Some(s) = &outcome.simulate {
            reports.push(&s.estimates);
        }
        if reports.is_empty() {
            return Ok(());
        }
        let p = self.path(ESTIMATES_FILE)?;
        let mut w = csv::Writer::from_path(p)?;
        for r in reports {
            for row in estimate_rows(r, seed) {
                w.serialize(row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_runtime(&mut self, stages: &[StageTiming], total_seconds: f64) -> Result<(), RunError> {
        if stages.is_empty() {
            return Ok(());
        }
        let finished_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let rt = Runtime {
            version: env!("CARGO_PKG_VERSION"),
            finished_unix,
            threads: rayon::current_num_threads(),
            total_seconds,
            stages,
        };
        self.write_json(RUNTIME_FILE, &rt)
    }

    pub fn write_trajectories(&mut self, name: &str, results: &[TrajectoryResult]) -> Result<(), RunError> {
        let p = self.path(name)?;
        write_trajectories(&p, results)
    }
}

/// One line per trajectory: endpoint, slope, time averages and drift diagnostics.
pub fn write_trajectories(path: &Path, results: &[TrajectoryResult]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    let d = results.first().map_or(0, |r| r.endpoint.len());
    let mut header = vec!["trajectory".to_string(), "replica".into(), "steps".into(), "h".into()];
    header.extend((1..=d).map(|i| format!("endpoint_{i}")));
    header.extend((1..=d).map(|i| format!("slope_{i}")));
    header.extend(driftlab_core::sde::observable_names(d).iter().map(|n| format!("time_average_{n}")));
    header.extend(["max_drift".into(), "drift_violations".into()]);
    w.write_record(&header)?;
    for r in results {
        let mut rec = vec![r.trajectory.to_string(), r.replica.to_string(), r.steps.to_string(), r.h.to_string()];
        rec.extend(r.endpoint.iter().chain(&r.slope).chain(&r.time_average).map(f64::to_string));
        rec.push(r.max_drift.to_string());
        rec.push(r.drift_violations.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
