//! Inter-subject reliability of a ratings table, with one random responder
//! mixed in to show the exclusion step.

use semproj::ratings::{reliability_pipeline, RatingsTable};
use semproj::synthetic::{build_world, random_raters, WorldSpec};

fn main() -> semproj::Result<()> {
    let world = build_world(&WorldSpec { raters: 20, ..WorldSpec::default() })?;
    let (id, table) = world.ratings.iter().next().unwrap();
    let noise = random_raters(id, &table.items, 1, 3)?;

    let mut participants = table.participants.clone();
    participants.push("random".into());
    let mut rows = table.raw.clone();
    rows.extend(noise.raw);
    let mixed = RatingsTable::new(id.clone(), participants, table.items.clone(), rows)?;

    let (kept, report) = reliability_pipeline(&mixed)?;
    for (p, r) in report.participants.iter().zip(&report.is_r).rev().take(4) {
        println!("{p:<7} IS-r {r:+.3}");
    }
    println!("excluded {:?}, kept {} raters", report.excluded, kept.n_participants());
    println!("mean IS-r {:.3}, IS-OC_p {:.3}", report.mean_is_r, report.is_ocp);
    Ok(())
}
