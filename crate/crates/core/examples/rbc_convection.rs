//! Runs the convection solver from rest and prints the Nusselt number and
//! kinetic energy as the rolls develop.
//!
//! cargo run --release --example rbc_convection -- [steps] [rayleigh]

use nekmini::solver::{init_state, nusselt, stable_dt, step_in_place, SolverParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(12_000);
    let ra: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1e5);

    let mut p = SolverParams::new(64, 64, ra, 0.7);
    p.dt = stable_dt(p.ny, ra, p.prandtl);
    let mut s = init_state(&p)?;
    println!("Ra = {ra:e}, dt = {:.3e}, conduction Nu = {}", p.dt, nusselt(&s));
    println!("{:>7} {:>10} {:>12} {:>12} {:>10}", "step", "time", "Nu", "KE", "max|div|");
    for n in 1..=steps {
        step_in_place(&mut s, &p)?;
        if n % (steps / 12).max(1) == 0 {
            println!(
                "{n:>7} {:>10.5} {:>12.6} {:>12.4e} {:>10.2e}",
                s.time,
                nusselt(&s),
                s.kinetic_energy(),
                s.divergence_max()
            );
        }
    }
    Ok(())
}
