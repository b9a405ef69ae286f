use std::fmt;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use super::HarnessError;
use crate::sinks::AnalysisKind;

pub const TIMINGS_HEADER: [&str; 4] = ["label", "step", "phase", "seconds"];
pub const BYTES_HEADER: [&str; 4] = ["label", "step", "phase", "bytes"];
pub const MEMORY_HEADER: [&str; 3] = ["label", "role", "peak_rss_bytes"];
pub const SUMMARY_HEADER: [&str; 5] = ["label", "phase", "mean_s", "stddev_s", "total_bytes"];

pub const TIMINGS_FILE: &str = "timings.csv";
pub const BYTES_FILE: &str = "bytes.csv";
pub const MEMORY_FILE: &str = "memory.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

/// What a timing row measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    /// One solver step.
    Solve,
    /// Building the snapshot out of solver state.
    SnapshotCopy,
    /// All sinks of one step together.
    Sink,
    /// Streaming one step to the endpoint and waiting for its ack.
    Transport,
    /// Endpoint: first header to last block of a step.
    Gather,
    /// Endpoint: global assembly.
    Assemble,
    /// One invocation of one sink.
    SinkKind(AnalysisKind),
    /// Sum of the per-step phases; only appears in summaries.
    Step,
}

impl Phase {
    /// Phases that partition one step's wall time.
    pub fn is_step_part(self) -> bool {
        matches!(
            self,
            Phase::Solve | Phase::SnapshotCopy | Phase::Sink | Phase::Transport | Phase::Gather | Phase::Assemble
        )
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Solve => f.write_str("solve"),
            Phase::SnapshotCopy => f.write_str("snapshot_copy"),
            Phase::Sink => f.write_str("sink"),
            Phase::Transport => f.write_str("transport"),
            Phase::Gather => f.write_str("gather"),
            Phase::Assemble => f.write_str("assemble"),
            Phase::SinkKind(k) => write!(f, "sink:{k}"),
            Phase::Step => f.write_str("step"),
        }
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "solve" => Phase::Solve,
            "snapshot_copy" => Phase::SnapshotCopy,
            "sink" => Phase::Sink,
            "transport" => Phase::Transport,
            "gather" => Phase::Gather,
            "assemble" => Phase::Assemble,
            "step" => Phase::Step,
            other => match other.strip_prefix("sink:") {
                Some(k) => Phase::SinkKind(k.parse()?),
                None => return Err(format!("unknown phase '{other}'")),
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRecord {
    pub label: String,
    pub step: u64,
    pub phase: Phase,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ByteRecord {
    pub label: String,
    pub step: u64,
    pub phase: Phase,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryRecord {
    pub label: String,
    pub role: String,
    pub peak_rss_bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub phase: Phase,
    pub mean_s: f64,
    pub stddev_s: f64,
    pub total_bytes: u64,
}

fn writer(path: &Path, header: &[&str]) -> Result<csv::Writer<File>, HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    Ok(w)
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<(), HarnessError> {
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_timings(path: &Path, rows: &[TimingRecord]) -> Result<(), HarnessError> {
    let mut w = writer(path, &TIMINGS_HEADER)?;
    for r in rows {
        w.write_record([r.label.clone(), r.step.to_string(), r.phase.to_string(), r.seconds.to_string()])?;
    }
    finish(w, path)
}

pub fn write_bytes(path: &Path, rows: &[ByteRecord]) -> Result<(), HarnessError> {
    let mut w = writer(path, &BYTES_HEADER)?;
    for r in rows {
        w.write_record([r.label.clone(), r.step.to_string(), r.phase.to_string(), r.bytes.to_string()])?;
    }
    finish(w, path)
}

pub fn write_memory(path: &Path, rows: &[MemoryRecord]) -> Result<(), HarnessError> {
    let mut w = writer(path, &MEMORY_HEADER)?;
    for r in rows {
        w.write_record([r.label.clone(), r.role.clone(), r.peak_rss_bytes.to_string()])?;
    }
    finish(w, path)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut w = writer(path, &SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            r.phase.to_string(),
            format!("{:.9e}", r.mean_s),
            format!("{:.9e}", r.stddev_s),
            r.total_bytes.to_string(),
        ])?;
    }
    finish(w, path)
}

/// Reads every row of `path`, checking the header matches `header` exactly.
fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let found = r.headers()?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(HarnessError::Schema {
            path: path.to_path_buf(),
            reason: format!("expected header {}, found {}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        });
    }
    r.records().map(|rec| rec.map_err(HarnessError::from)).collect()
}

fn cell<T: FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T, HarnessError>
where
    T::Err: fmt::Display,
{
    rec[i].parse().map_err(|e: T::Err| HarnessError::Schema {
        path: path.to_path_buf(),
        reason: format!("line {}: column {i}: '{}': {e}", rec.position().map_or(0, |p| p.line()), &rec[i]),
    })
}

pub fn read_timings(path: &Path) -> Result<Vec<TimingRecord>, HarnessError> {
    read_rows(path, &TIMINGS_HEADER)?
        .iter()
        .map(|r| {
            let seconds: f64 = cell(path, r, 3)?;
            if !(seconds >= 0.0) {
                return Err(HarnessError::Schema {
                    path: path.to_path_buf(),
                    reason: format!("negative or NaN seconds {seconds}"),
                });
            }
            Ok(TimingRecord {
                label: r[0].to_string(),
                step: cell(path, r, 1)?,
                phase: cell(path, r, 2)?,
                seconds,
            })
        })
        .collect()
}

pub fn read_bytes(path: &Path) -> Result<Vec<ByteRecord>, HarnessError> {
    read_rows(path, &BYTES_HEADER)?
        .iter()
        .map(|r| {
            Ok(ByteRecord {
                label: r[0].to_string(),
                step: cell(path, r, 1)?,
                phase: cell(path, r, 2)?,
                bytes: cell(path, r, 3)?,
            })
        })
        .collect()
}

pub fn read_memory(path: &Path) -> Result<Vec<MemoryRecord>, HarnessError> {
    read_rows(path, &MEMORY_HEADER)?
        .iter()
        .map(|r| {
            Ok(MemoryRecord {
                label: r[0].to_string(),
                role: r[1].to_string(),
                peak_rss_bytes: cell(path, r, 2)?,
            })
        })
        .collect()
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    read_rows(path, &SUMMARY_HEADER)?
        .iter()
        .map(|r| {
            Ok(SummaryRow {
                label: r[0].to_string(),
                phase: cell(path, r, 1)?,
                mean_s: cell(path, r, 2)?,
                stddev_s: cell(path, r, 3)?,
                total_bytes: cell(path, r, 4)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_names_round_trip() {
        for p in [
            Phase::Solve,
            Phase::SnapshotCopy,
            Phase::Sink,
            Phase::Transport,
            Phase::Gather,
            Phase::Assemble,
            Phase::SinkKind(AnalysisKind::Render),
            Phase::Step,
        ] {
            assert_eq!(p.to_string().parse::<Phase>().unwrap(), p);
        }
        assert_eq!("sink:catalyst".parse::<Phase>().unwrap(), Phase::SinkKind(AnalysisKind::Render));
        assert!("bogus".parse::<Phase>().is_err());
    }

    #[test]
    fn timings_round_trip_and_schema_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TIMINGS_FILE);
        let rows = vec![TimingRecord {
            label: "a".into(),
            step: 7,
            phase: Phase::SinkKind(AnalysisKind::Checkpoint),
            seconds: 0.125,
        }];
        write_timings(&path, &rows).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "label,step,phase,seconds\na,7,sink:checkpoint,0.125\n");
        assert_eq!(read_timings(&path).unwrap(), rows);

        std::fs::write(&path, "label,step,seconds\na,1,0.5\n").unwrap();
        assert!(matches!(read_timings(&path), Err(HarnessError::Schema { .. })));
        std::fs::write(&path, "label,step,phase,seconds\na,1,solve,-1\n").unwrap();
        assert!(read_timings(&path).is_err());
    }
}
