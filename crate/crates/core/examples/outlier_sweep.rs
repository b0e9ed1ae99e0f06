//! Drops the most extreme items one at a time and tracks agreement.

use semproj::evaluate::{evaluate_projection, sweep_from};
use semproj::synthetic::{build_world, WorldSpec};
use semproj::{build_subspace, project, EvalConfig};

fn main() -> semproj::Result<()> {
    let world = build_world(&WorldSpec { items_per_category: 30, ..WorldSpec::default() })?;
    let id = &world.dataset.pairs[0];
    let sub = build_subspace(&world.store, world.dataset.poles(&id.feature)?)?;
    let proj = project(&world.store, &id.category, world.dataset.items(&id.category)?, &sub)?;
    let base = evaluate_projection(&proj, &world.ratings[id], &EvalConfig { n_perm: 1000, ..EvalConfig::default() })?;

    for p in sweep_from(&base, 10)? {
        println!(
            "k {:>2}  items {:>2}  r {:.3}  OC_p {:.3}  IS-r {:.3}  removed {}",
            p.k, p.n_items, p.r, p.oc_p, p.mean_is_r, p.removed.as_deref().unwrap_or("-")
        );
    }
    Ok(())
}
