use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::chart;
use super::records::*;
use super::HarnessError;

pub const CHART_FILE: &str = "chart.svg";

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates timing and byte rows per `(label, phase)`.
///
/// Each label with per-step phases also gets a `step` row holding the
/// distribution of per-step totals. `sink` rows count the bytes of every
/// `sink:<kind>` row; `step` rows count all of the label's bytes.
pub fn summarize(timings: &[TimingRecord], bytes: &[ByteRecord]) -> Result<Vec<SummaryRow>, HarnessError> {
    if timings.is_empty() {
        return Err(HarnessError::NoData);
    }
    let mut samples: BTreeMap<(String, Phase), Vec<f64>> = BTreeMap::new();
    let mut per_step: BTreeMap<(String, u64), f64> = BTreeMap::new();
    for t in timings {
        samples.entry((t.label.clone(), t.phase)).or_default().push(t.seconds);
        if t.phase.is_step_part() {
            *per_step.entry((t.label.clone(), t.step)).or_default() += t.seconds;
        }
    }
    for ((label, _), total) in &per_step {
        samples.entry((label.clone(), Phase::Step)).or_default().push(*total);
    }
    let mut byte_totals: BTreeMap<(String, Phase), u64> = BTreeMap::new();
    for b in bytes {
        *byte_totals.entry((b.label.clone(), b.phase)).or_default() += b.bytes;
        if let Phase::SinkKind(_) = b.phase {
            *byte_totals.entry((b.label.clone(), Phase::Sink)).or_default() += b.bytes;
        }
        *byte_totals.entry((b.label.clone(), Phase::Step)).or_default() += b.bytes;
    }
    for key in byte_totals.keys() {
        samples.entry(key.clone()).or_default();
    }
    Ok(samples
        .into_iter()
        .map(|((label, phase), xs)| {
            let (mean_s, stddev_s) = mean_stddev(&xs);
            let total_bytes = byte_totals.get(&(label.clone(), phase)).copied().unwrap_or(0);
            SummaryRow {
                label,
                phase,
                mean_s,
                stddev_s,
                total_bytes,
            }
        })
        .collect())
}

pub fn find_row<'a>(rows: &'a [SummaryRow], label: &str, phase: Phase) -> Option<&'a SummaryRow> {
    rows.iter().find(|r| r.label == label && r.phase == phase)
}

/// Baseline per-step time estimated the indirect way: a sink run's step
/// mean minus its sink mean.
pub fn original_by_subtraction(rows: &[SummaryRow], label: &str) -> Option<f64> {
    let step = find_row(rows, label, Phase::Step)?.mean_s;
    let sink = find_row(rows, label, Phase::Sink).map_or(0.0, |r| r.mean_s);
    let copy = find_row(rows, label, Phase::SnapshotCopy).map_or(0.0, |r| r.mean_s);
    Some(step - sink - copy)
}

/// Stacked per-step phase means, one bar per label.
pub fn summary_chart(rows: &[SummaryRow]) -> String {
    let mut labels: Vec<String> = Vec::new();
    let mut phases: Vec<Phase> = Vec::new();
    for r in rows.iter().filter(|r| r.phase.is_step_part()) {
        if !labels.contains(&r.label) {
            labels.push(r.label.clone());
        }
        if !phases.contains(&r.phase) {
            phases.push(r.phase);
        }
    }
    phases.sort();
    let stacks: Vec<Vec<f64>> = labels
        .iter()
        .map(|l| phases.iter().map(|&p| find_row(rows, l, p).map_or(0.0, |r| r.mean_s)).collect())
        .collect();
    let names: Vec<String> = phases.iter().map(ToString::to_string).collect();
    chart::stacked_bars("Mean time per step", "seconds", &labels, &names, &stacks)
}

/// Every file called `name` under `dir`, in sorted path order.
pub fn find_files(dir: &Path, name: &str) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|e| HarnessError::io(&d, e))?;
        for entry in entries {
            let p = entry.map_err(|e| HarnessError::io(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|f| f == name) {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Reads every `timings.csv` and `bytes.csv` under `dir` and writes
/// `summary.csv` and `chart.svg` into `dir`.
pub fn report(dir: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    let mut timings = Vec::new();
    for p in find_files(dir, TIMINGS_FILE)? {
        timings.extend(read_timings(&p)?);
    }
    let mut bytes = Vec::new();
    for p in find_files(dir, BYTES_FILE)? {
        bytes.extend(read_bytes(&p)?);
    }
    let rows = summarize(&timings, &bytes)?;
    write_summary(&dir.join(SUMMARY_FILE), &rows)?;
    let svg = summary_chart(&rows);
    let chart_path = dir.join(CHART_FILE);
    std::fs::write(&chart_path, svg).map_err(|e| HarnessError::io(&chart_path, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sinks::AnalysisKind;

    fn t(label: &str, step: u64, phase: Phase, seconds: f64) -> TimingRecord {
        TimingRecord {
            label: label.into(),
            step,
            phase,
            seconds,
        }
    }

    #[test]
    fn sample_stddev() {
        assert_eq!(mean_stddev(&[]), (0.0, 0.0));
        assert_eq!(mean_stddev(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_stddev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_input_is_no_data() {
        let e = summarize(&[], &[]).unwrap_err();
        assert!(e.to_string().contains("no data"));
    }

    #[test]
    fn byte_rollups() {
        let ts = vec![
            t("c", 0, Phase::Solve, 1.0),
            t("c", 0, Phase::SnapshotCopy, 0.25),
            t("c", 0, Phase::Sink, 0.5),
            t("c", 0, Phase::SinkKind(AnalysisKind::Checkpoint), 0.5),
        ];
        let bs = vec![ByteRecord {
            label: "c".into(),
            step: 0,
            phase: Phase::SinkKind(AnalysisKind::Checkpoint),
            bytes: 100,
        }];
        let rows = summarize(&ts, &bs).unwrap();
        assert_eq!(find_row(&rows, "c", Phase::Step).unwrap().mean_s, 1.75);
        assert_eq!(find_row(&rows, "c", Phase::Sink).unwrap().total_bytes, 100);
        assert_eq!(find_row(&rows, "c", Phase::Step).unwrap().total_bytes, 100);
        assert_eq!(find_row(&rows, "c", Phase::Solve).unwrap().total_bytes, 0);
        assert_eq!(original_by_subtraction(&rows, "c"), Some(1.0));
    }
}
