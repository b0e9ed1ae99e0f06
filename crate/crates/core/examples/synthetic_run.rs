//! The whole pipeline on a synthetic world, written to disk.
//!
//! `cargo run --release --example synthetic_run [out-dir]`

use std::path::PathBuf;

use semproj::harness::{run_all, write_outputs, RunConfig};
use semproj::load_dataset;
use semproj::synthetic::{build_world, WorldSpec};

fn main() -> semproj::Result<()> {
    env_logger::init();
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "semproj-synthetic".into()));
    let world = build_world(&WorldSpec { categories: 4, pairs: 12, ..WorldSpec::default() })?;
    let input = out.join("input");
    world.write_to(&input)?;

    let cfg = RunConfig {
        embeddings: Some(input.join("embeddings.txt")),
        n_perm: 5000,
        svg: true,
        ..RunConfig::default()
    };
    let summary = run_all(&cfg, &load_dataset(input.join("dataset.json"))?, &input.join("ratings"))?;
    write_outputs(&summary, &out.join("results"), cfg.svg)?;
    println!("{}", serde_json::to_string_pretty(&summary.summary)?);
    println!("tables in {}", out.join("results").display());
    Ok(())
}
