//! One experiment end to end: projection, ratings, permutation p-values and
//! the reliability-adjusted scores.

use semproj::synthetic::{build_world, shuffle_item_labels, WorldSpec};
use semproj::{evaluate_experiment, EvalConfig};

fn main() -> semproj::Result<()> {
    let world = build_world(&WorldSpec::default())?;
    let id = world.dataset.pairs[0].clone();
    let cfg = EvalConfig { n_perm: 10_000, ..EvalConfig::default() };

    let ev = evaluate_experiment(&world.store, &world.dataset, &id, &world.ratings[&id], &cfg)?;
    let r = &ev.report;
    println!("{id}: r {:.3} (p {:.2e}), OC_p {:.3} (p {:.2e})", r.r, r.p_r, r.oc_p, r.p_ocp);
    println!("IS-r {:.3}, adjusted r {:?}, adjusted OC_p {:?}", r.mean_is_r, r.adjusted_r, r.adjusted_ocp);

    let shuffled = shuffle_item_labels(&world.ratings[&id], 1);
    let ev = evaluate_experiment(&world.store, &world.dataset, &id, &shuffled, &cfg)?;
    println!("shuffled labels: r {:.3} (p {:.3})", ev.report.r, ev.report.p_r);
    Ok(())
}
