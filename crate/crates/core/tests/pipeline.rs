use semproj::harness::{run_all, RunConfig};
use semproj::ratings::RatingsTable;
use semproj::synthetic::{build_world, WorldSpec};
use semproj::{evaluate_experiment, load_dataset, EvalConfig, EmbeddingStore};

#[test]
fn unresolvable_item_is_dropped_not_fatal() {
    let mut world = build_world(&WorldSpec::default()).unwrap();
    let id = world.dataset.pairs[0].clone();
    world.dataset.categories.get_mut(&id.category).unwrap().push("zzzunknown".into());
    let t = &world.ratings[&id];
    let mut items = t.items.clone();
    items.push("zzzunknown".into());
    let rows = t.raw.iter().map(|r| [r.as_slice(), &[50.0]].concat()).collect();
    let ratings = RatingsTable::new(id.clone(), t.participants.clone(), items, rows).unwrap();

    let cfg = EvalConfig { n_perm: 500, ..EvalConfig::default() };
    let ev = evaluate_experiment(&world.store, &world.dataset, &id, &ratings, &cfg).unwrap();
    assert_eq!(ev.report.n_items, 20);
    assert_eq!(ev.report.n_items_dropped, 1);
    assert_eq!(ev.dropped_items, ["zzzunknown"]);
    assert!(ev.report.r > 0.9);
}

#[test]
fn mismatched_ratings_file_is_rejected() {
    let world = build_world(&WorldSpec::default()).unwrap();
    let (a, b) = (&world.dataset.pairs[0], &world.dataset.pairs[1]);
    let err = evaluate_experiment(&world.store, &world.dataset, a, &world.ratings[b], &EvalConfig::default());
    assert!(err.is_err());
}

#[test]
fn files_on_disk_match_in_memory_run() {
    let world = build_world(&WorldSpec { pairs: 3, ..WorldSpec::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    world.write_to(dir.path()).unwrap();
    let cache = dir.path().join("emb.bin");
    EmbeddingStore::open(dir.path().join("embeddings.txt"), usize::MAX)
        .unwrap()
        .save_cache(&cache)
        .unwrap();

    let cfg = RunConfig {
        embeddings: Some(cache),
        n_perm: 400,
        max_outlier_removals: 3,
        out_dir: Some(dir.path().join("out")),
        ..RunConfig::default()
    };
    let ds = load_dataset(dir.path().join("dataset.json")).unwrap();
    let from_disk = run_all(&cfg, &ds, &dir.path().join("ratings")).unwrap();
    let in_memory = semproj::run_with(&cfg, &world.store, &world.dataset, &world.ratings).unwrap();
    assert_eq!(from_disk.reports.len(), 3);
    for (a, b) in from_disk.reports.iter().zip(&in_memory.reports) {
        assert_eq!(a.r.to_bits(), b.r.to_bits());
        assert_eq!(a.p_ocp.to_bits(), b.p_ocp.to_bits());
    }
    assert!(dir.path().join("out/reports.csv").exists());
    assert_eq!(from_disk.sweep.len(), 3 * 4);
}
