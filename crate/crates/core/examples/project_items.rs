//! Projects a category onto one feature scale and prints the ranking.

use semproj::synthetic::{build_world, WorldSpec};
use semproj::{build_subspace, project};

fn main() -> semproj::Result<()> {
    let world = build_world(&WorldSpec::default())?;
    let ds = &world.dataset;
    let sub = build_subspace(&world.store, ds.poles("feat0")?)?;
    let proj = project(&world.store, "cat0", ds.items("cat0")?, &sub)?;

    let mut scores: Vec<_> = proj.scores.iter().collect();
    scores.sort_by(|a, b| b.z.total_cmp(&a.z));
    for s in scores.iter().take(5) {
        println!("{:<12} z {:+.2}", s.item, s.z);
    }
    println!("...");
    for s in scores.iter().rev().take(3).rev() {
        println!("{:<12} z {:+.2}", s.item, s.z);
    }

    // The planted value of each item is known, so the ranking can be checked.
    let truth = &world.latent[&semproj::ExperimentId::new("cat0", "feat0")];
    let z: Vec<f64> = proj.scores.iter().map(|s| s.z).collect();
    println!("r with planted values: {:.3}", semproj::stats::pearson_r(&z, truth)?);
    Ok(())
}
