//! Benchmark harness: timed in situ and in transit runs, CSV records,
//! summaries and charts.

use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

use crate::bridge::{BridgeConfig, BridgeError, ConfigError};
use crate::solver::{SolverError, SolverParams};
use crate::staging::StagingError;

mod chart;
mod insitu;
mod intransit;
mod memory;
pub mod records;
mod report;
mod scaling;

pub use insitu::{run_insitu, run_insitu_interleaved, InsituOutcome};
pub use intransit::{
    endpoint_label, producer_label, run_endpoint, run_intransit, run_producer, EndpointOutcome, IntransitOutcome,
    Launch, ProducerOutcome, LISTENING_PREFIX, STATUS_FILE,
};
pub use memory::{measure_memory_hwm, MemoryError};
pub use records::{ByteRecord, MemoryRecord, Phase, SummaryRow, TimingRecord};
pub use report::{find_files, find_row, mean_stddev, original_by_subtraction, report, summarize, summary_chart};
pub use scaling::{scaling_chart, weak_scaling, ScalingRow, SCALING_FILE, SCALING_HEADER};

/// One `null` sink on every step.
pub const NULL_CONFIG_XML: &str = r#"<sensei>
  <analysis type="null" frequency="1"/>
</sensei>
"#;

/// Binary checkpoints every 100 steps into `checkpoints/`.
pub const CHECKPOINT_CONFIG_XML: &str = r#"<sensei>
  <analysis type="checkpoint" frequency="100" dir="checkpoints" format="binary"/>
</sensei>
"#;

/// Temperature and velocity-magnitude images every 100 steps into `render/`.
pub const RENDER_CONFIG_XML: &str = r#"<sensei>
  <analysis type="render" frequency="100" dir="render" width="256" height="256"
            field="temperature,velocity:mag"/>
</sensei>
"#;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}: schema mismatch: {reason}")]
    Schema { path: PathBuf, reason: String },
    #[error("no data")]
    NoData,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Staging(#[from] StagingError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("invalid run configuration: {0}")]
    InvalidRun(String),
    #[error("{role} process failed ({status}): {stderr}")]
    Child { role: String, status: String, stderr: String },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Insitu,
    IntransitProducer,
    IntransitEndpoint,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    pub solver: SolverParams,
    pub steps: u64,
    /// `None` is the empty bridge (the uninstrumented baseline).
    pub bridge_config_path: Option<PathBuf>,
    /// Producer count for in transit runs.
    pub producers: u32,
    pub output_dir: PathBuf,
    pub label: String,
    /// In transit: producers stream every `stream_frequency`-th step.
    pub stream_frequency: u64,
    /// In transit: also stream the initial state.
    pub stream_step_zero: bool,
    pub endpoint_address: String,
    /// In transit: delay the endpoint adds before each ack.
    pub ack_delay: Duration,
}

impl RunConfig {
    pub fn new(mode: Mode, output_dir: impl Into<PathBuf>, label: impl Into<String>) -> Self {
        Self {
            mode,
            solver: SolverParams::default(),
            steps: 3000,
            bridge_config_path: None,
            producers: 4,
            output_dir: output_dir.into(),
            label: label.into(),
            stream_frequency: 100,
            stream_step_zero: true,
            endpoint_address: "127.0.0.1:0".into(),
            ack_delay: Duration::ZERO,
        }
    }

    pub fn with_bridge(mut self, path: impl Into<PathBuf>) -> Self {
        self.bridge_config_path = Some(path.into());
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.steps == 0 {
            return Err(HarnessError::InvalidRun("steps must be at least 1".into()));
        }
        if self.producers == 0 {
            return Err(HarnessError::InvalidRun("producers must be at least 1".into()));
        }
        if self.stream_frequency == 0 {
            return Err(HarnessError::InvalidRun("stream frequency must be at least 1".into()));
        }
        if let Some(p) = &self.bridge_config_path {
            if !p.is_file() {
                return Err(HarnessError::InvalidRun(format!("bridge config {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// The bridge configuration, empty when no path is set.
    pub fn bridge_config(&self) -> Result<BridgeConfig, HarnessError> {
        match &self.bridge_config_path {
            Some(p) => Ok(BridgeConfig::load(p)?),
            None => Ok(BridgeConfig::from_specs(Vec::new())),
        }
    }
}

/// Writes `xml` to `dir/name` and returns the path.
pub fn write_config(dir: &Path, name: &str, xml: &str) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, xml).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::parse_config;

    #[test]
    fn canned_configs_parse_cleanly() {
        for xml in [NULL_CONFIG_XML, CHECKPOINT_CONFIG_XML, RENDER_CONFIG_XML] {
            let cfg = parse_config(xml).unwrap();
            assert_eq!(cfg.specs.len(), 1);
            assert!(cfg.warnings.is_empty(), "{:?}", cfg.warnings);
        }
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::new(Mode::Insitu, "/tmp/x", "a");
        assert!(c.validate().is_ok());
        c.steps = 0;
        assert!(c.validate().is_err());
        let c = RunConfig::new(Mode::Insitu, "/tmp/x", "a").with_bridge("/nonexistent/cfg.xml");
        assert!(c.validate().is_err());
    }
}
