//! Couples the solver to a checkpoint sink through the bridge, then reads the
//! last checkpoint back and checks it against the live state.
//!
//! cargo run --release --example insitu_checkpoint

use nekmini::bridge::{initialize_in, AnalysisSpec, BridgeConfig};
use nekmini::sinks::{checkpoint_read, AnalysisKind};
use nekmini::solver::{init_state, snapshot_of, step_in_place, SolverParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cfg = BridgeConfig::from_specs(vec![AnalysisSpec::new(AnalysisKind::Checkpoint, 100)
        .with("dir", "checkpoints")
        .with("format", "binary")]);
    let mut bridge = initialize_in(&cfg, dir.path())?;

    let p = SolverParams::default();
    let mut s = init_state(&p)?;
    bridge.update(&snapshot_of(&s, 0, 0))?;
    for n in 1..=500 {
        step_in_place(&mut s, &p)?;
        let (report, copy) = bridge.update_with(n, || snapshot_of(&s, 0, 0))?;
        for r in &report.sinks {
            println!("step {n}: {} wrote {} bytes in {:.2} ms (copy {:.3} ms)", r.kind, r.bytes, r.seconds * 1e3, copy * 1e3);
        }
    }
    let summary = bridge.finalize();
    println!("{} invocations, {} bytes", summary.sinks[0].invocations, summary.sinks[0].bytes);

    let last = dir.path().join("checkpoints/step000500_blk000.vtk");
    let back = checkpoint_read(&last)?;
    let live = snapshot_of(&s, 0, 0);
    assert_eq!(back.block, live.blocks[0]);
    println!("{} matches the solver state bit for bit (time {})", last.display(), back.time);
    Ok(())
}
