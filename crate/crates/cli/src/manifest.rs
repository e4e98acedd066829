use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Config;
use crate::jobs::{create, Job, Outcome};

/// Everything needed to replay a run: the resolved job, the full effective
/// configuration and where things went.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub job: Job,
    pub config: Config,
    pub threads: usize,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
    pub summary: Value,
}

impl RunManifest {
    pub fn new(job: Job, config: Config, outcome: &Outcome, wall_clock_seconds: f64) -> Self {
        RunManifest {
            tool: "ordercone".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            job,
            config,
            threads: rayon::current_num_threads(),
            inputs: outcome.inputs.clone(),
            outputs: outcome.outputs.clone(),
            wall_clock_seconds,
            summary: outcome.summary.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, self)?;
        std::io::Write::write_all(&mut w, b"\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: RunManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        m.config.validate()?;
        Ok(m)
    }
}
