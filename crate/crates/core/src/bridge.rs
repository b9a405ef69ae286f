//! Runtime-configured dispatch of snapshots to analysis sinks.
//!
//! The configuration is an XML document:
//!
//! ```xml
//! <sensei>
//!   <analysis type="checkpoint" frequency="100" dir="ckpt" format="binary"/>
//!   <analysis type="render" frequency="100" dir="img" width="256" height="256"
//!             field="temperature,velocity:mag"/>
//! </sensei>
//! ```
//!
//! Changing the document changes which sinks run; nothing is recompiled.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::warn;
use thiserror::Error;

use crate::data::{validate_snapshot, Snapshot};
use crate::sinks::{
    AnalysisKind, CheckpointFormat, CheckpointSink, NullSink, RenderSink, Sink, SinkError, StatsSink,
};

pub const DEFAULT_RENDER_FIELDS: &str = "temperature,velocity:mag";
pub const DEFAULT_RENDER_SIZE: u32 = 256;
pub const DEFAULT_RENDER_DIR: &str = "render";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed configuration document: {0}")]
    Malformed(String),
    #[error("root element must be <sensei>, found <{0}>")]
    WrongRoot(String),
    #[error("{0}")]
    UnknownKind(String),
    #[error("analysis {index}: frequency must be a positive integer, got '{value}'")]
    BadFrequency { index: usize, value: String },
    #[error("analysis {index} ({kind}): missing required attribute '{attr}'")]
    MissingParam {
        index: usize,
        kind: AnalysisKind,
        attr: &'static str,
    },
    #[error("analysis {index} ({kind}): invalid value '{value}' for '{attr}'")]
    BadParam {
        index: usize,
        kind: AnalysisKind,
        attr: String,
        value: String,
    },
    #[error("cannot read configuration {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("sink {index} ({kind}) failed to initialize: {source}")]
    SinkInit {
        index: usize,
        kind: AnalysisKind,
        #[source]
        source: SinkError,
    },
    #[error("step {step} is not after the previous update's step {previous}")]
    NonIncreasingStep { step: u64, previous: u64 },
    #[error("invalid snapshot: {0}")]
    InvalidSnapshot(String),
}

/// One `<analysis>` element.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisSpec {
    pub kind: AnalysisKind,
    pub frequency: u64,
    pub params: BTreeMap<String, String>,
}

impl AnalysisSpec {
    pub fn new(kind: AnalysisKind, frequency: u64) -> Self {
        Self {
            kind,
            frequency,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BridgeConfig {
    pub specs: Vec<AnalysisSpec>,
    pub trigger_at_step_zero: bool,
    /// Ignored attributes, one message each.
    pub warnings: Vec<String>,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            specs: Vec::new(),
            trigger_at_step_zero: true,
            warnings: Vec::new(),
        }
    }
}

impl BridgeConfig {
    pub fn from_specs(specs: Vec<AnalysisSpec>) -> Self {
        Self {
            specs,
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        parse_config(&text)
    }
}

fn known_attrs(kind: AnalysisKind) -> &'static [&'static str] {
    match kind {
        AnalysisKind::Checkpoint => &["dir", "format"],
        AnalysisKind::Render => &["dir", "width", "height", "field", "vmin", "vmax"],
        AnalysisKind::Stats => &["path"],
        AnalysisKind::Null => &[],
    }
}

fn required_attrs(kind: AnalysisKind) -> &'static [&'static str] {
    match kind {
        AnalysisKind::Checkpoint => &["dir"],
        AnalysisKind::Stats => &["path"],
        AnalysisKind::Render | AnalysisKind::Null => &[],
    }
}

/// Parses a `<sensei>` configuration document.
pub fn parse_config(text: &str) -> Result<BridgeConfig, ConfigError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "sensei" {
        return Err(ConfigError::WrongRoot(root.tag_name().name().to_string()));
    }

    let mut cfg = BridgeConfig::default();
    for attr in root.attributes() {
        match attr.name() {
            "trigger_at_step_zero" => {
                cfg.trigger_at_step_zero = parse_bool(attr.value()).ok_or_else(|| {
                    ConfigError::Malformed(format!("trigger_at_step_zero must be true or false, got '{}'", attr.value()))
                })?;
            }
            other => cfg.warnings.push(format!("<sensei>: ignoring attribute '{other}'")),
        }
    }

    for (index, node) in root.children().filter(|n| n.is_element()).enumerate() {
        if node.tag_name().name() != "analysis" {
            cfg.warnings
                .push(format!("ignoring element <{}>", node.tag_name().name()));
            continue;
        }
        let kind_text = node
            .attribute("type")
            .ok_or_else(|| ConfigError::UnknownKind(format!("analysis {index}: missing 'type'")))?;
        let kind: AnalysisKind = kind_text.parse().map_err(ConfigError::UnknownKind)?;

        let frequency = match node.attribute("frequency") {
            None => 1,
            Some(v) => match v.trim().parse::<u64>() {
                Ok(f) if f >= 1 => f,
                _ => {
                    return Err(ConfigError::BadFrequency {
                        index,
                        value: v.to_string(),
                    })
                }
            },
        };

        let mut spec = AnalysisSpec::new(kind, frequency);
        for attr in node.attributes() {
            let name = attr.name();
            if name == "type" || name == "frequency" {
                continue;
            }
            if known_attrs(kind).contains(&name) {
                spec.params.insert(name.to_string(), attr.value().to_string());
            } else {
                cfg.warnings
                    .push(format!("analysis {index} ({kind}): ignoring attribute '{name}'"));
            }
        }
        for &attr in required_attrs(kind) {
            if spec.param(attr).is_none() {
                return Err(ConfigError::MissingParam { index, kind, attr });
            }
        }
        check_param_values(index, &spec)?;
        cfg.specs.push(spec);
    }

    for w in &cfg.warnings {
        warn!("{w}");
    }
    Ok(cfg)
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.trim() {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

fn check_param_values(index: usize, spec: &AnalysisSpec) -> Result<(), ConfigError> {
    let bad = |attr: &str, value: &str| ConfigError::BadParam {
        index,
        kind: spec.kind,
        attr: attr.to_string(),
        value: value.to_string(),
    };
    for (k, v) in &spec.params {
        let ok = match k.as_str() {
            "format" => v.parse::<CheckpointFormat>().is_ok(),
            "width" | "height" => v.trim().parse::<u32>().is_ok_and(|n| n > 0),
            "vmin" | "vmax" => v.trim().parse::<f64>().is_ok_and(f64::is_finite),
            "dir" | "path" | "field" => !v.trim().is_empty(),
            _ => true,
        };
        if !ok {
            return Err(bad(k, v));
        }
    }
    Ok(())
}

/// True iff `step` is a trigger step for `spec`.
pub fn should_trigger(spec: &AnalysisSpec, step: u64, trigger_at_step_zero: bool) -> bool {
    step % spec.frequency == 0 && (step > 0 || trigger_at_step_zero)
}

/// Outcome of one sink invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct SinkReport {
    pub index: usize,
    pub kind: AnalysisKind,
    pub seconds: f64,
    pub bytes: u64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub sinks: Vec<SinkReport>,
}

impl StepReport {
    pub fn is_empty(&self) -> bool {
        self.sinks.is_empty()
    }

    pub fn total_seconds(&self) -> f64 {
        self.sinks.iter().map(|r| r.seconds).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.sinks.iter().map(|r| r.bytes).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SinkTotals {
    pub index: usize,
    pub kind: AnalysisKind,
    pub invocations: u64,
    pub failures: u64,
    pub seconds: f64,
    pub bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BridgeSummary {
    pub sinks: Vec<SinkTotals>,
    /// `(sink index, message)` for sinks whose final flush failed.
    pub flush_errors: Vec<(usize, String)>,
}

struct Slot {
    spec: AnalysisSpec,
    sink: Box<dyn Sink>,
    totals: SinkTotals,
}

/// Owns the configured sinks and their counters.
pub struct BridgeHandle {
    slots: Vec<Slot>,
    trigger_at_step_zero: bool,
    last_step: Option<u64>,
}

impl std::fmt::Debug for BridgeHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeHandle")
            .field("sinks", &self.slots.iter().map(|s| s.spec.kind).collect::<Vec<_>>())
            .field("last_step", &self.last_step)
            .finish()
    }
}

/// Builds the sinks of `cfg`, resolving relative output paths against the
/// working directory.
pub fn initialize(cfg: &BridgeConfig) -> Result<BridgeHandle, BridgeError> {
    initialize_in(cfg, Path::new(""))
}

/// Builds the sinks of `cfg`, resolving relative output paths against `base`.
/// Output directories are created now so I/O problems surface before the run.
pub fn initialize_in(cfg: &BridgeConfig, base: &Path) -> Result<BridgeHandle, BridgeError> {
    let mut handle = BridgeHandle {
        slots: Vec::with_capacity(cfg.specs.len()),
        trigger_at_step_zero: cfg.trigger_at_step_zero,
        last_step: None,
    };
    for (index, spec) in cfg.specs.iter().enumerate() {
        let sink = build_sink(spec, base).map_err(|source| BridgeError::SinkInit {
            index,
            kind: spec.kind,
            source,
        })?;
        handle.push(spec.clone(), sink);
    }
    Ok(handle)
}

fn build_sink(spec: &AnalysisSpec, base: &Path) -> Result<Box<dyn Sink>, SinkError> {
    let resolve = |p: &str| base.join(p);
    Ok(match spec.kind {
        AnalysisKind::Checkpoint => {
            let format = spec
                .param("format")
                .map(|f| f.parse::<CheckpointFormat>().map_err(SinkError::Other))
                .transpose()?
                .unwrap_or_default();
            Box::new(CheckpointSink::new(resolve(spec.param("dir").unwrap_or("checkpoint")), format)?)
        }
        AnalysisKind::Render => {
            let num = |key: &str| spec.param(key).and_then(|v| v.trim().parse::<u32>().ok());
            let float = |key: &str| spec.param(key).and_then(|v| v.trim().parse::<f64>().ok());
            let fields = spec
                .param("field")
                .unwrap_or(DEFAULT_RENDER_FIELDS)
                .split(',')
                .map(|f| f.trim().to_string())
                .filter(|f| !f.is_empty())
                .collect();
            Box::new(RenderSink::new(
                resolve(spec.param("dir").unwrap_or(DEFAULT_RENDER_DIR)),
                fields,
                num("width").unwrap_or(DEFAULT_RENDER_SIZE),
                num("height").unwrap_or(DEFAULT_RENDER_SIZE),
                float("vmin"),
                float("vmax"),
            )?)
        }
        AnalysisKind::Stats => Box::new(StatsSink::new(resolve(spec.param("path").unwrap_or("stats.csv")))?),
        AnalysisKind::Null => Box::new(NullSink::new()),
    })
}

impl BridgeHandle {
    /// Appends an externally constructed sink, triggered per `spec`.
    pub fn push(&mut self, spec: AnalysisSpec, sink: Box<dyn Sink>) {
        let index = self.slots.len();
        self.slots.push(Slot {
            totals: SinkTotals {
                index,
                kind: spec.kind,
                invocations: 0,
                failures: 0,
                seconds: 0.0,
                bytes: 0,
            },
            spec,
            sink,
        });
    }

    pub fn sink_count(&self) -> usize {
        self.slots.len()
    }

    pub fn invocations(&self) -> Vec<u64> {
        self.slots.iter().map(|s| s.totals.invocations).collect()
    }

    pub fn trigger_at_step_zero(&self) -> bool {
        self.trigger_at_step_zero
    }

    /// True when at least one sink triggers at `step`.
    pub fn wants(&self, step: u64) -> bool {
        self.slots
            .iter()
            .any(|s| should_trigger(&s.spec, step, self.trigger_at_step_zero))
    }

    fn check_step(&self, step: u64) -> Result<(), BridgeError> {
        match self.last_step {
            Some(previous) if step <= previous => Err(BridgeError::NonIncreasingStep { step, previous }),
            _ => Ok(()),
        }
    }

    fn check_snapshot(s: &Snapshot) -> Result<(), BridgeError> {
        let violations = validate_snapshot(s);
        if violations.is_empty() {
            Ok(())
        } else {
            let msgs: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Err(BridgeError::InvalidSnapshot(msgs.join("; ")))
        }
    }

    /// Dispatches `s` to every sink that triggers at `s.step`, in spec order.
    ///
    /// A failing sink is recorded in the report and does not stop later sinks.
    pub fn update(&mut self, s: &Snapshot) -> Result<StepReport, BridgeError> {
        self.check_step(s.step)?;
        Self::check_snapshot(s)?;
        self.last_step = Some(s.step);
        Ok(self.run_sinks(s))
    }

    /// Like [`update`](Self::update), but builds the snapshot with `make` only
    /// when some sink triggers at `step`. Returns the report and the seconds
    /// spent in `make` (zero when nothing triggered).
    pub fn update_with<F>(&mut self, step: u64, make: F) -> Result<(StepReport, f64), BridgeError>
    where
        F: FnOnce() -> Snapshot,
    {
        self.check_step(step)?;
        if !self.wants(step) {
            self.last_step = Some(step);
            return Ok((StepReport { step, sinks: Vec::new() }, 0.0));
        }
        let t0 = Instant::now();
        let s = make();
        let copy = t0.elapsed().as_secs_f64();
        if s.step != step {
            return Err(BridgeError::InvalidSnapshot(format!(
                "snapshot step {} differs from update step {step}",
                s.step
            )));
        }
        Self::check_snapshot(&s)?;
        self.last_step = Some(step);
        Ok((self.run_sinks(&s), copy))
    }

    fn run_sinks(&mut self, s: &Snapshot) -> StepReport {
        let mut report = StepReport {
            step: s.step,
            sinks: Vec::new(),
        };
        for slot in &mut self.slots {
            if !should_trigger(&slot.spec, s.step, self.trigger_at_step_zero) {
                continue;
            }
            let t0 = Instant::now();
            let outcome = slot.sink.execute(s);
            let seconds = t0.elapsed().as_secs_f64();
            let (bytes, error) = match outcome {
                Ok(b) => (b, None),
                Err(e) => {
                    warn!("sink {} ({}) failed at step {}: {e}", slot.totals.index, slot.spec.kind, s.step);
                    slot.totals.failures += 1;
                    (0, Some(e.to_string()))
                }
            };
            slot.totals.invocations += 1;
            slot.totals.seconds += seconds;
            slot.totals.bytes += bytes;
            report.sinks.push(SinkReport {
                index: slot.totals.index,
                kind: slot.spec.kind,
                seconds,
                bytes,
                error,
            });
        }
        report
    }

    /// Flushes all sinks and returns per-sink totals.
    pub fn finalize(mut self) -> BridgeSummary {
        let mut summary = BridgeSummary::default();
        for slot in &mut self.slots {
            if let Err(e) = slot.sink.flush() {
                summary.flush_errors.push((slot.totals.index, e.to_string()));
            }
            summary.sinks.push(slot.totals.clone());
        }
        summary
    }
}
