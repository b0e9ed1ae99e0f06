//! Pair selection from norming means plus a manual list.

use semproj::dataset::{NormingMean, SelectedPair};
use semproj::{select_pairs, ExperimentId};

fn main() -> semproj::Result<()> {
    let means = [
        ("animals", "size", 4.6),
        ("animals", "danger", 4.1),
        ("animals", "wetness", 2.2),
        ("cities", "cost", 3.9),
        ("cities", "religiosity", 2.8),
        ("clothing", "arousal", 3.3),
        ("names", "gender", 4.8),
        ("sports", "speed", 3.0),
    ];
    let norming: Vec<NormingMean> = means
        .iter()
        .map(|&(c, f, m)| NormingMean { category: c.into(), feature: f.into(), mean_rating: m })
        .collect();
    let manual = [ExperimentId::new("clothing", "arousal"), ExperimentId::new("names", "gender")];
    let exclude = [ExperimentId::new("animals", "danger")];

    let sel = select_pairs(&norming, &manual, &exclude, 75.0)?;
    println!("threshold {} from {} means", sel.threshold, sel.n_means);
    for SelectedPair { id, route, mean_rating } in &sel.pairs {
        println!("{id:<18} {route:?} {mean_rating:?}");
    }
    Ok(())
}
