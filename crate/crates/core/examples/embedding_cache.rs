//! Converts an embedding text file to the binary cache and reads it back.
//!
//! Run with `cargo run --example embedding_cache [vectors.txt]`. Without an
//! argument a small synthetic file is written to a temp dir first.

use std::path::PathBuf;
use std::time::Instant;

use semproj::synthetic::{build_world, WorldSpec};
use semproj::EmbeddingStore;

fn main() -> semproj::Result<()> {
    let tmp = tempfile::tempdir().expect("temp dir");
    let text = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            build_world(&WorldSpec::default())?.write_to(tmp.path())?;
            tmp.path().join("embeddings.txt")
        }
    };

    let t = Instant::now();
    let store = EmbeddingStore::open(&text, semproj::DEFAULT_VOCAB_LIMIT)?;
    println!("text: {} x {} in {:?}", store.len(), store.dim(), t.elapsed());

    let cache = tmp.path().join("vectors.bin");
    store.save_cache(&cache)?;
    let t = Instant::now();
    let cached = EmbeddingStore::open(&cache, usize::MAX)?;
    println!("cache: {} x {} in {:?}", cached.len(), cached.dim(), t.elapsed());
    assert_eq!(store, cached);

    let first = &store.vocab()[0];
    println!("first token {first:?}, first components {:?}", &store.lookup(first)?[..3]);
    Ok(())
}
