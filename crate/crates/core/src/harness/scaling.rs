use std::fs::File;
use std::path::Path;

use super::chart;
use super::intransit::{run_intransit, Launch};
use super::{create_dir, mean_stddev, HarnessError, RunConfig};

pub const SCALING_FILE: &str = "scaling.csv";
pub const SCALING_CHART_FILE: &str = "scaling.svg";
pub const SCALING_HEADER: [&str; 6] = [
    "producers",
    "mean_step_s",
    "stddev_s",
    "producer_peak_rss_mean_bytes",
    "payload_bytes_per_producer",
    "endpoint_steps",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub producers: u32,
    /// Mean producer step time, pooled over all producers.
    pub mean_step_s: f64,
    pub stddev_s: f64,
    pub producer_peak_rss_mean: f64,
    /// Streamed payload bytes of each producer, in producer-id order.
    pub payload_bytes: Vec<u64>,
    pub endpoint_steps: u64,
}

/// Runs `base` once per producer count (same per-producer grid and steps),
/// each into `base.output_dir/P<count>`, and writes `scaling.csv` and
/// `scaling.svg` into `base.output_dir`.
pub fn weak_scaling(base: &RunConfig, counts: &[u32], launch: &Launch) -> Result<Vec<ScalingRow>, HarnessError> {
    if counts.is_empty() {
        return Err(HarnessError::NoData);
    }
    create_dir(&base.output_dir)?;
    let mut rows = Vec::with_capacity(counts.len());
    for &p in counts {
        let mut cfg = base.clone();
        cfg.producers = p;
        cfg.label = format!("{}-P{p}", base.label);
        cfg.output_dir = base.output_dir.join(format!("P{p}"));
        let out = run_intransit(&cfg, launch)?;
        let times: Vec<f64> = out.producers.iter().flat_map(|o| o.step_times()).collect();
        let (mean_step_s, stddev_s) = mean_stddev(&times);
        let rss: Vec<f64> = out.producers.iter().map(|o| o.memory.peak_rss_bytes as f64).collect();
        rows.push(ScalingRow {
            producers: p,
            mean_step_s,
            stddev_s,
            producer_peak_rss_mean: mean_stddev(&rss).0,
            payload_bytes: out.producers.iter().map(|o| o.payload_bytes()).collect(),
            endpoint_steps: out.endpoint.steps_completed,
        });
    }
    write_scaling(&base.output_dir.join(SCALING_FILE), &rows)?;
    let chart_path = base.output_dir.join(SCALING_CHART_FILE);
    std::fs::write(&chart_path, scaling_chart(&rows)).map_err(|e| HarnessError::io(&chart_path, e))?;
    Ok(rows)
}

fn write_scaling(path: &Path, rows: &[ScalingRow]) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(SCALING_HEADER)?;
    for r in rows {
        let payload = r.payload_bytes.first().copied().unwrap_or(0);
        w.write_record([
            r.producers.to_string(),
            format!("{:.9e}", r.mean_step_s),
            format!("{:.9e}", r.stddev_s),
            format!("{:.0}", r.producer_peak_rss_mean),
            payload.to_string(),
            r.endpoint_steps.to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Mean producer step time against producer count.
pub fn scaling_chart(rows: &[ScalingRow]) -> String {
    let xs: Vec<f64> = rows.iter().map(|r| r.producers as f64).collect();
    let series = vec![(
        "mean time per step".to_string(),
        rows.iter().map(|r| r.mean_step_s).collect(),
        rows.iter().map(|r| r.stddev_s).collect(),
    )];
    chart::line_chart("Weak scaling", "producers", "seconds per step", &xs, &series)
}
