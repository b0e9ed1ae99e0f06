//! Full projection against the single-pole and distance baselines.

use semproj::harness::{run_with, RunConfig};
use semproj::synthetic::{build_world, WorldSpec};

fn main() -> semproj::Result<()> {
    let world = build_world(&WorldSpec { categories: 4, pairs: 12, ..WorldSpec::default() })?;
    let cfg = RunConfig { n_perm: 2000, sweep: false, ..RunConfig::default() };
    let summary = run_with(&cfg, &world.store, &world.dataset, &world.ratings)?;
    println!("{:<22} {:<5} {:>8} {:>8} {:>6} {:>8}", "control", "meas", "proj", "control", "d", "p");
    for c in &summary.comparisons {
        println!(
            "{:<22} {:<5} {:>8.3} {:>8.3} {:>6.2} {:>8.4}",
            c.method, c.measure, c.median_projection, c.median_control, c.cohen_d, c.p
        );
    }
    Ok(())
}
