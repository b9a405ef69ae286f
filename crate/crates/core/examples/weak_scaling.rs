//! Weak scaling with a null endpoint: each producer keeps the same grid while
//! the producer count grows. Uses child processes when the `nekmini` binary
//! is built, otherwise threads.
//!
//! cargo build --release && cargo run --release --example weak_scaling

use std::path::PathBuf;

use nekmini::harness::{weak_scaling, write_config, Launch, Mode, RunConfig, NULL_CONFIG_XML};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from("weak_scaling_out");
    let mut cfg = RunConfig::new(Mode::IntransitEndpoint, &out, "weak")
        .with_bridge(write_config(&out, "null.xml", NULL_CONFIG_XML)?);
    cfg.steps = 300;
    cfg.stream_frequency = 10;

    let exe = std::env::current_exe()?.parent().and_then(|d| d.parent()).map(|d| d.join("nekmini"));
    let launch = match exe.filter(|p| p.is_file()) {
        Some(exe) => Launch::Spawn { exe },
        None => Launch::Threads,
    };
    println!("launch: {launch:?}");
    let rows = weak_scaling(&cfg, &[1, 2, 4], &launch)?;
    let base = rows[0].mean_step_s;
    for r in &rows {
        println!(
            "P={} mean {:.3} ms/step (x{:.2} of P=1), payload {} bytes per producer, peak RSS {:.1} MiB",
            r.producers,
            r.mean_step_s * 1e3,
            r.mean_step_s / base,
            r.payload_bytes[0],
            r.producer_peak_rss_mean / 1048576.0
        );
    }
    println!("table and chart in {}", out.display());
    Ok(())
}
