//! Two-dimensional PCA view of items and both scale endpoints.

use semproj::synthetic::{build_world, WorldSpec};
use semproj::{build_subspace, pca_viz};

fn main() -> semproj::Result<()> {
    let world = build_world(&WorldSpec::default())?;
    let sub = build_subspace(&world.store, world.dataset.poles("feat1")?)?;
    let view = pca_viz(&world.store, "cat0", world.dataset.items("cat0")?, &sub, 2)?;
    println!("explained variance ratio {:?}", view.explained_variance_ratio);
    println!("strong end {:?}", view.strong_end);
    println!("weak end   {:?}", view.weak_end);
    for (item, xy) in view.items.iter().take(5) {
        println!("{item:<12} ({:+.2}, {:+.2})", xy[0], xy[1]);
    }
    Ok(())
}
