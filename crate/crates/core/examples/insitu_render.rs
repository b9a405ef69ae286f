//! Renders temperature and speed images of a developed convection state and
//! compares their size with a binary checkpoint of the same snapshot.
//!
//! cargo run --release --example insitu_render -- [out_dir]

use std::path::PathBuf;

use nekmini::sinks::{binary_checkpoint_size, render, write_ppm, ColorMap};
use nekmini::solver::{init_state, snapshot_of, step_in_place, SolverParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "render_out".into()).into();
    std::fs::create_dir_all(&out)?;

    let p = SolverParams::default();
    let mut s = init_state(&p)?;
    for _ in 0..12_000 {
        step_in_place(&mut s, &p)?;
    }
    let snap = snapshot_of(&s, 0, 0);
    let cmap = ColorMap::default();
    let mut image_bytes = 0;
    for field in ["temperature", "velocity:mag"] {
        let img = render(&snap, field, &cmap, 256, 256, None, None)?;
        let path = out.join(format!("{}.ppm", field.replace(':', "_")));
        image_bytes += write_ppm(&img, &path)?;
        println!("wrote {}", path.display());
    }
    let ckpt = binary_checkpoint_size(&snap, &snap.blocks[0])?;
    println!(
        "two images: {image_bytes} bytes, one binary checkpoint: {ckpt} bytes (ratio {:.2})",
        ckpt as f64 / image_bytes as f64
    );
    Ok(())
}
