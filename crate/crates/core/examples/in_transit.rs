//! Four producer threads stream their 16x64 blocks to one endpoint, which
//! assembles a 64x64 global block each step and hands it to a checkpoint
//! sink.
//!
//! cargo run --release --example in_transit

use std::thread;

use nekmini::bridge::{initialize_in, AnalysisSpec, BridgeConfig};
use nekmini::sinks::{checkpoint_read, AnalysisKind};
use nekmini::solver::{init_state, snapshot_of, step_in_place, SolverParams};
use nekmini::staging::{connect, Endpoint, EndpointConfig, ProducerConfig};

const K: u32 = 4;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = tempfile::tempdir()?;
    let cfg = BridgeConfig::from_specs(vec![AnalysisSpec::new(AnalysisKind::Checkpoint, 1).with("dir", "global")]);
    let mut bridge = initialize_in(&cfg, out.path())?;
    let endpoint = Endpoint::bind(EndpointConfig::new("127.0.0.1:0", K))?;
    let addr = endpoint.local_addr()?.to_string();

    let producers: Vec<_> = (0..K)
        .map(|id| {
            let addr = addr.clone();
            thread::spawn(move || -> Result<u64, nekmini::staging::StagingError> {
                let mut p = SolverParams::new(16, 64, 1e5, 0.7);
                p.seed = id as u64;
                let mut s = init_state(&p).expect("valid params");
                let mut conn = connect(&ProducerConfig::new(addr, id))?;
                for n in 1..=200u64 {
                    step_in_place(&mut s, &p).expect("stable");
                    if n % 50 == 0 {
                        conn.send_step(&snapshot_of(&s, id, id as i64 * 16))?;
                    }
                }
                conn.close()
            })
        })
        .collect();

    let summary = endpoint.serve(&mut bridge)?;
    for (id, h) in producers.into_iter().enumerate() {
        println!("producer {id}: {} bytes sent", h.join().expect("producer thread")?);
    }
    bridge.finalize();
    println!("endpoint completed {} steps", summary.steps_completed());
    for s in &summary.steps {
        println!(
            "  step {:>3}: gather {:.2} ms, assemble {:.3} ms, bridge {:.2} ms",
            s.step,
            s.gather_seconds * 1e3,
            s.assemble_seconds * 1e3,
            s.bridge_seconds * 1e3
        );
    }
    let global = checkpoint_read(&out.path().join("global/step000200_blk000.vtk"))?;
    println!("global block point dims {:?}", global.block.extents.point_dims());
    Ok(())
}
