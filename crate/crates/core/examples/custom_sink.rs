//! A hand-written sink plugged into the bridge next to a configured one.
//! This one reports the hottest point of each triggered step.
//!
//! cargo run --release --example custom_sink

use nekmini::bridge::{initialize, AnalysisSpec, BridgeConfig};
use nekmini::data::Snapshot;
use nekmini::sinks::{AnalysisKind, Sink, SinkError};
use nekmini::solver::{init_state, snapshot_of, step_in_place, SolverParams};

/// Reports where the temperature most exceeds the conduction profile.
struct HotSpot;

impl Sink for HotSpot {
    fn kind(&self) -> AnalysisKind {
        AnalysisKind::Null
    }

    fn execute(&mut self, s: &Snapshot) -> Result<u64, SinkError> {
        let b = &s.blocks[0];
        let t = b.field("temperature").ok_or_else(|| SinkError::Other("no temperature".into()))?;
        let nx = b.extents.points_along(0);
        let ny = b.extents.points_along(1);
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for j in 0..ny {
            let y = j as f64 / (ny - 1) as f64;
            for i in 0..nx {
                let theta = t.values[i + nx * j] - (1.0 - y);
                if theta > best.0 {
                    best = (theta, i, j);
                }
            }
        }
        println!("step {:>5}: hottest excess {:+.4} at ({}, {})", s.step, best.0, best.1, best.2);
        Ok(0)
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut bridge = initialize(&BridgeConfig::from_specs(Vec::new()))?;
    bridge.push(AnalysisSpec::new(AnalysisKind::Null, 1000), Box::new(HotSpot));

    let p = SolverParams::default();
    let mut s = init_state(&p)?;
    for n in 1..=10_000 {
        step_in_place(&mut s, &p)?;
        bridge.update_with(n, || snapshot_of(&s, 0, 0))?;
    }
    let summary = bridge.finalize();
    println!("custom sink ran {} times", summary.sinks[0].invocations);
    Ok(())
}
