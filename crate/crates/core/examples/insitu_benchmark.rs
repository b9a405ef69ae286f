//! The three-way in situ comparison: the uninstrumented baseline, binary
//! checkpoints, and rendering, each run through the harness.
//!
//! cargo run --release --example insitu_benchmark -- [steps]

use std::path::PathBuf;

use nekmini::harness::{
    original_by_subtraction, run_insitu, write_config, Mode, RunConfig, CHECKPOINT_CONFIG_XML, RENDER_CONFIG_XML,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3000);
    let out = PathBuf::from("insitu_benchmark_out");
    let configs = [
        ("original", None),
        ("checkpoint", Some(write_config(&out, "checkpoint.xml", CHECKPOINT_CONFIG_XML)?)),
        ("render", Some(write_config(&out, "render.xml", RENDER_CONFIG_XML)?)),
    ];
    let mut base = None;
    for (label, config) in configs {
        let mut cfg = RunConfig::new(Mode::Insitu, out.join(label), label);
        cfg.bridge_config_path = config;
        cfg.steps = steps;
        let o = run_insitu(&cfg)?;
        let per_step = o.time_per_step();
        let rel = base.map_or(String::new(), |b: f64| format!(" ({:+.2}%)", 100.0 * (per_step / b - 1.0)));
        base.get_or_insert(per_step);
        println!(
            "{label:<10} {:.4} ms/step{rel}, {} bytes written, peak RSS {:.1} MiB",
            per_step * 1e3,
            o.sink_bytes(),
            o.memory.peak_rss_bytes as f64 / 1048576.0
        );
        if label != "original" {
            let sub = original_by_subtraction(&o.summary, label).unwrap_or(f64::NAN);
            println!("           baseline by subtraction {:.4} ms/step", sub * 1e3);
        }
    }
    Ok(())
}
