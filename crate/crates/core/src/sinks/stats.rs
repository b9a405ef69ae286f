use std::fs::File;
use std::path::{Path, PathBuf};

use super::{AnalysisKind, Sink, SinkError};
use crate::data::Snapshot;

pub const STATS_HEADER: [&str; 6] = ["step", "time", "field", "min", "max", "mean"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Min, max and mean over every value (all components, all blocks) of `field`.
pub fn field_stats(s: &Snapshot, field: &str) -> Option<FieldStats> {
    let mut n = 0usize;
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for b in &s.blocks {
        let f = b.field(field)?;
        for &v in &f.values {
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
    }
    (n > 0).then(|| FieldStats {
        min,
        max,
        mean: sum / n as f64,
    })
}

/// Appends one `step,time,field,min,max,mean` row per field and invocation.
pub struct StatsSink {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl StatsSink {
    /// Creates (truncating) the CSV file and writes the header.
    pub fn new(path: impl Into<PathBuf>) -> Result<Self, SinkError> {
        let path = path.into();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| SinkError::io(parent, e))?;
        }
        let file = File::create(&path).map_err(|e| SinkError::io(&path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(STATS_HEADER)?;
        writer.flush().map_err(|e| SinkError::io(&path, e))?;
        Ok(Self { path, writer })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Sink for StatsSink {
    fn kind(&self) -> AnalysisKind {
        AnalysisKind::Stats
    }

    fn execute(&mut self, s: &Snapshot) -> Result<u64, SinkError> {
        let Some(first) = s.blocks.first() else {
            return Ok(0);
        };
        let mut bytes = 0;
        for f in &first.fields {
            let Some(st) = field_stats(s, &f.name) else {
                continue;
            };
            let row = [
                s.step.to_string(),
                s.time.to_string(),
                f.name.clone(),
                st.min.to_string(),
                st.max.to_string(),
                st.mean.to_string(),
            ];
            bytes += row.iter().map(|c| c.len() as u64 + 1).sum::<u64>();
            self.writer.write_record(&row)?;
        }
        self.writer.flush().map_err(|e| SinkError::io(&self.path, e))?;
        Ok(bytes)
    }

    fn flush(&mut self) -> Result<(), SinkError> {
        self.writer.flush().map_err(|e| SinkError::io(&self.path, e))
    }
}
