use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{Map, Value};

use super::Result;

/// JSON run report shared by all subcommands.
///
/// `parameters` is the full resolved parameter set and can be passed back
/// through `--config`. Everything except `timings_ms` and `threads` is
/// deterministic for fixed parameters.
#[derive(Debug, Serialize)]
pub struct Report {
    command: &'static str,
    version: &'static str,
    parameters: Value,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    metrics: Map<String, Value>,
    timings_ms: BTreeMap<String, f64>,
    threads: usize,
    #[serde(skip)]
    started: Instant,
}

impl Report {
    pub fn new(command: &'static str, threads: usize) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            parameters: Value::Null,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            metrics: Map::new(),
            timings_ms: BTreeMap::new(),
            threads,
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.insert(name.into(), path.display().to_string());
    }

    pub fn output(&mut self, name: &str, path: &Path) {
        self.outputs.insert(name.into(), path.display().to_string());
    }

    pub fn metric(&mut self, name: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("metric values serialize");
        self.metrics.insert(name.into(), v);
    }

    pub fn metrics(&self) -> &Map<String, Value> {
        &self.metrics
    }

    /// Runs `f` and records its wall time under `stage`.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings_ms.insert(stage.into(), t.elapsed().as_secs_f64() * 1e3);
        out
    }

    pub(super) fn finish(&mut self, parameters: &impl Serialize) -> Result<()> {
        self.parameters = serde_json::to_value(parameters)?;
        self.timings_ms
            .insert("total".into(), self.started.elapsed().as_secs_f64() * 1e3);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub(super) fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}
