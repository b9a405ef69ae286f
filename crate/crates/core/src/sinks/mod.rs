//! Analysis endpoints the bridge dispatches snapshots to.

pub mod checkpoint;
pub mod render;
mod stats;

pub use checkpoint::{
    binary_checkpoint_size, checkpoint_file_name, checkpoint_read, checkpoint_write, CheckpointError, CheckpointFile,
    CheckpointFormat,
};
pub use render::{encode_ppm, render, write_ppm, ColorMap, ImageRGB, RenderError};
pub use stats::{field_stats, FieldStats, StatsSink, STATS_HEADER};

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::data::Snapshot;

/// The analysis kinds a configuration can select.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AnalysisKind {
    Checkpoint,
    Render,
    Null,
    Stats,
}

impl AnalysisKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnalysisKind::Checkpoint => "checkpoint",
            AnalysisKind::Render => "render",
            AnalysisKind::Null => "null",
            AnalysisKind::Stats => "stats",
        }
    }
}

impl fmt::Display for AnalysisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnalysisKind {
    type Err = String;

    /// `catalyst` is accepted as an alias for `render`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "checkpoint" => Ok(AnalysisKind::Checkpoint),
            "render" | "catalyst" => Ok(AnalysisKind::Render),
            "null" => Ok(AnalysisKind::Null),
            "stats" => Ok(AnalysisKind::Stats),
            other => Err(format!("unknown analysis kind '{other}'")),
        }
    }
}

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Other(String),
}

impl SinkError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        SinkError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// A pluggable consumer of snapshots.
pub trait Sink: Send {
    fn kind(&self) -> AnalysisKind;

    /// Processes one snapshot and returns the number of bytes written.
    fn execute(&mut self, s: &Snapshot) -> Result<u64, SinkError>;

    fn flush(&mut self) -> Result<(), SinkError> {
        Ok(())
    }
}

/// Creates `dir` (and parents) and checks that files can be created in it.
pub fn ensure_writable_dir(dir: &Path) -> Result<(), SinkError> {
    fs::create_dir_all(dir).map_err(|e| SinkError::io(dir, e))?;
    let probe = dir.join(".nekmini-write-probe");
    fs::write(&probe, b"").map_err(|e| SinkError::io(dir, e))?;
    fs::remove_file(&probe).map_err(|e| SinkError::io(&probe, e))?;
    Ok(())
}

pub struct CheckpointSink {
    dir: PathBuf,
    format: CheckpointFormat,
    files: Vec<PathBuf>,
}

impl CheckpointSink {
    pub fn new(dir: impl Into<PathBuf>, format: CheckpointFormat) -> Result<Self, SinkError> {
        let dir = dir.into();
        ensure_writable_dir(&dir)?;
        Ok(Self {
            dir,
            format,
            files: Vec::new(),
        })
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }
}

impl Sink for CheckpointSink {
    fn kind(&self) -> AnalysisKind {
        AnalysisKind::Checkpoint
    }

    fn execute(&mut self, s: &Snapshot) -> Result<u64, SinkError> {
        let (paths, bytes) = checkpoint_write(s, &self.dir, self.format)?;
        self.files.extend(paths);
        Ok(bytes)
    }
}

/// Renders one image per configured field on every invocation.
pub struct RenderSink {
    dir: PathBuf,
    fields: Vec<String>,
    width: u32,
    height: u32,
    vmin: Option<f64>,
    vmax: Option<f64>,
    cmap: ColorMap,
}

impl RenderSink {
    pub fn new(
        dir: impl Into<PathBuf>,
        fields: Vec<String>,
        width: u32,
        height: u32,
        vmin: Option<f64>,
        vmax: Option<f64>,
    ) -> Result<Self, SinkError> {
        if width == 0 || height == 0 {
            return Err(RenderError::InvalidSize(width, height).into());
        }
        if fields.is_empty() {
            return Err(SinkError::Other("render sink needs at least one field".into()));
        }
        let dir = dir.into();
        ensure_writable_dir(&dir)?;
        Ok(Self {
            dir,
            fields,
            width,
            height,
            vmin,
            vmax,
            cmap: ColorMap::default(),
        })
    }

    /// `velocity:mag` at step 100 becomes `velocity_mag_step000100.ppm`.
    pub fn image_name(field: &str, step: u64) -> String {
        format!("{}_step{step:06}.ppm", field.replace(':', "_"))
    }
}

impl Sink for RenderSink {
    fn kind(&self) -> AnalysisKind {
        AnalysisKind::Render
    }

    fn execute(&mut self, s: &Snapshot) -> Result<u64, SinkError> {
        let mut total = 0;
        for field in &self.fields {
            let img = render(s, field, &self.cmap, self.width, self.height, self.vmin, self.vmax)?;
            let path = self.dir.join(Self::image_name(field, s.step));
            total += write_ppm(&img, &path).map_err(|e| SinkError::io(&path, e))?;
        }
        Ok(total)
    }
}

/// Counts invocations and touches nothing.
#[derive(Debug, Default)]
pub struct NullSink {
    count: u64,
}

impl NullSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Records one invocation and returns the new count.
    pub fn observe(&mut self, _s: &Snapshot) -> u64 {
        self.count += 1;
        self.count
    }
}

impl Sink for NullSink {
    fn kind(&self) -> AnalysisKind {
        AnalysisKind::Null
    }

    fn execute(&mut self, s: &Snapshot) -> Result<u64, SinkError> {
        self.observe(s);
        Ok(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{init_state, snapshot_of, SolverParams};

    #[test]
    fn kinds_parse_with_alias() {
        assert_eq!("catalyst".parse::<AnalysisKind>(), Ok(AnalysisKind::Render));
        assert_eq!("stats".parse::<AnalysisKind>(), Ok(AnalysisKind::Stats));
        assert!("frobnicate".parse::<AnalysisKind>().unwrap_err().contains("unknown analysis kind"));
    }

    #[test]
    fn null_sink_counts_without_mutation() {
        let s = snapshot_of(&init_state(&SolverParams::new(8, 8, 1e5, 0.7)).unwrap(), 0, 0);
        let before = s.clone();
        let mut sink = NullSink::new();
        assert_eq!(sink.observe(&s), 1);
        for _ in 0..29 {
            sink.execute(&s).unwrap();
        }
        assert_eq!(sink.count(), 30);
        assert_eq!(s, before);
    }

    #[test]
    fn unwritable_dir_fails_at_construction() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain-file");
        fs::write(&file, b"x").unwrap();
        assert!(CheckpointSink::new(file.join("sub"), CheckpointFormat::Binary).is_err());
    }

    #[test]
    fn render_sink_writes_one_image_per_field() {
        let dir = tempfile::tempdir().unwrap();
        let s = snapshot_of(&init_state(&SolverParams::new(8, 8, 1e5, 0.7)).unwrap(), 0, 0);
        let mut sink = RenderSink::new(
            dir.path(),
            vec!["temperature".into(), "velocity:mag".into()],
            32,
            16,
            None,
            None,
        )
        .unwrap();
        let bytes = sink.execute(&s).unwrap();
        assert_eq!(bytes, 2 * (13 + 3 * 32 * 16));
        assert!(dir.path().join("velocity_mag_step000000.ppm").exists());
        assert!(dir.path().join("temperature_step000000.ppm").exists());
    }
}
