//! One program, different analyses: the sinks are chosen by the XML file
//! given on the command line, with no rebuild.
//!
//! cargo run --release --example runtime_swap -- examples/configs/render.xml
//! cargo run --release --example runtime_swap -- examples/configs/checkpoint.xml

use std::path::{Path, PathBuf};

use nekmini::bridge::{initialize_in, BridgeConfig};
use nekmini::solver::{init_state, snapshot_of, step_in_place, SolverParams};

fn list(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for e in std::fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            list(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/render.xml").into())
        .into();
    let cfg = BridgeConfig::load(&config)?;
    for w in &cfg.warnings {
        println!("warning: {w}");
    }
    let out = tempfile::tempdir()?;
    let mut bridge = initialize_in(&cfg, out.path())?;

    let p = SolverParams::default();
    let mut s = init_state(&p)?;
    bridge.update(&snapshot_of(&s, 0, 0))?;
    for n in 1..=300 {
        step_in_place(&mut s, &p)?;
        bridge.update_with(n, || snapshot_of(&s, 0, 0))?;
    }
    for t in bridge.finalize().sinks {
        println!("{}: {} invocations, {} bytes", t.kind, t.invocations, t.bytes);
    }
    let mut files = Vec::new();
    list(out.path(), &mut files)?;
    files.sort();
    for f in files {
        println!("  {}", f.strip_prefix(out.path())?.display());
    }
    Ok(())
}
