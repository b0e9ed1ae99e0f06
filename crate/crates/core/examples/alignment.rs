//! Within- and cross-feature alignment of antonym pole lines.
//!
//! `cargo run --example alignment [vectors]` uses the bundled features when a
//! vector file is given, otherwise a synthetic world with planted directions.

use semproj::synthetic::{build_world, WorldSpec};
use semproj::{alignment_diagnostics, Dataset, EmbeddingStore};

fn main() -> semproj::Result<()> {
    let (store, features) = match std::env::args().nth(1) {
        Some(path) => (
            EmbeddingStore::open(path, semproj::DEFAULT_VOCAB_LIMIT)?,
            Dataset::bundled()?.feature_list(),
        ),
        None => {
            let w = build_world(&WorldSpec { features: 6, ..WorldSpec::default() })?;
            let f = w.dataset.feature_list();
            (w.store, f)
        }
    };
    let report = alignment_diagnostics(&store, &features)?;
    for f in &report.features {
        println!("{:<14} lines {:>2}  within {:>7}  cross {:.3}", f.feature, f.line_count,
            f.within.map_or("-".into(), |w| format!("{w:.3}")), f.cross);
    }
    println!("within {:?} ({:?} deg), cross {:.3} ({:.1} deg)",
        report.within, report.within_degrees, report.cross, report.cross_degrees);
    Ok(())
}
