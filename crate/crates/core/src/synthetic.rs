//! Seeded synthetic worlds: an embedding with planted feature directions, a
//! matching dataset, and simulated raters who share the planted signal.
//!
//! Each feature has a unit direction `u`, and a topic vector `t` shared by
//! both of its poles: strong words sit at `t + a u`, weak words at `t - a u`.
//! Items are `sum_f v_f u_f` plus isotropic noise, where `v_f` is the item's
//! latent value on feature `f`. Projection onto the pole difference recovers
//! `v_f`; a single pole also picks up the topic vector, so it is noisier.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Dataset, ExperimentId};
use crate::embed_store::EmbeddingStore;
use crate::error::{Error, Result};
use crate::ratings::{write_ratings, RatingsTable};
use crate::subspace::FeaturePoles;

#[derive(Clone, Debug, PartialEq)]
pub struct WorldSpec {
    pub categories: usize,
    pub items_per_category: usize,
    pub features: usize,
    /// Number of experiments, taken category-major from all pairs.
    pub pairs: usize,
    pub raters: usize,
    pub dim: usize,
    pub words_per_pole: usize,
    /// Distance of each pole from its topic vector along the feature.
    pub pole_offset: f64,
    pub topic_norm: f64,
    /// Per-component SD of item and pole word noise.
    pub embedding_noise: f64,
    /// SD of each rater's noise in latent units.
    pub rater_noise: f64,
    /// Extra unrelated vocabulary rows.
    pub filler_words: usize,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            categories: 3,
            items_per_category: 20,
            features: 4,
            pairs: 6,
            raters: 25,
            dim: 50,
            words_per_pole: 3,
            pole_offset: 1.0,
            topic_norm: 3.0,
            embedding_noise: 0.05,
            rater_noise: 0.6,
            filler_words: 100,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticWorld {
    pub spec: WorldSpec,
    pub store: EmbeddingStore,
    pub dataset: Dataset,
    /// Latent feature value of every item, keyed by experiment.
    pub latent: BTreeMap<ExperimentId, Vec<f64>>,
    pub ratings: BTreeMap<ExperimentId, RatingsTable>,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, sd: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn category_name(c: usize) -> String {
    format!("cat{c}")
}

pub fn feature_name(f: usize) -> String {
    format!("feat{f}")
}

pub fn item_name(c: usize, i: usize) -> String {
    format!("cat{c}item{i}")
}

/// Builds a world. Identical specs give identical worlds.
pub fn build_world(spec: &WorldSpec) -> Result<SyntheticWorld> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;
    let dirs: Vec<Vec<f64>> = (0..spec.features).map(|_| unit(gaussian(&mut rng, d, 1.0))).collect();
    let topics: Vec<Vec<f64>> = (0..spec.features)
        .map(|_| {
            unit(gaussian(&mut rng, d, 1.0))
                .into_iter()
                .map(|x| x * spec.topic_norm)
                .collect()
        })
        .collect();

    let mut rows: Vec<(String, Vec<f32>)> = Vec::new();
    let mut features = BTreeMap::new();
    for f in 0..spec.features {
        let mut poles = (Vec::new(), Vec::new());
        for (sign, words, tag) in [(1.0, &mut poles.0, 's'), (-1.0, &mut poles.1, 'w')] {
            for j in 0..spec.words_per_pole {
                let noise = gaussian(&mut rng, d, spec.embedding_noise);
                let v: Vec<f32> = (0..d)
                    .map(|k| (topics[f][k] + sign * spec.pole_offset * dirs[f][k] + noise[k]) as f32)
                    .collect();
                let word = format!("{}{tag}{j}", feature_name(f));
                rows.push((word.clone(), v));
                words.push(word);
            }
        }
        let name = feature_name(f);
        features.insert(name.clone(), FeaturePoles::new(name, poles.0, poles.1));
    }

    let mut categories = BTreeMap::new();
    let mut values: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for c in 0..spec.categories {
        let mut names = Vec::new();
        for i in 0..spec.items_per_category {
            let latent: Vec<f64> = gaussian(&mut rng, spec.features, 1.0);
            let noise = gaussian(&mut rng, d, spec.embedding_noise);
            let v: Vec<f32> = (0..d)
                .map(|k| {
                    let signal: f64 = (0..spec.features).map(|f| latent[f] * dirs[f][k]).sum();
                    (signal + noise[k]) as f32
                })
                .collect();
            let name = item_name(c, i);
            rows.push((name.clone(), v));
            names.push(name);
            values.insert((c, i), latent);
        }
        categories.insert(category_name(c), names);
    }
    for w in 0..spec.filler_words {
        let v = gaussian(&mut rng, d, 1.0).into_iter().map(|x| x as f32).collect();
        rows.push((format!("filler{w}"), v));
    }
    let store = EmbeddingStore::from_rows(rows, format!("synthetic world, seed {}", spec.seed))?;

    let mut pairs = Vec::new();
    'outer: for c in 0..spec.categories {
        for f in 0..spec.features {
            if pairs.len() == spec.pairs {
                break 'outer;
            }
            pairs.push((c, f));
        }
    }
    let dataset = Dataset {
        categories,
        features,
        pairs: pairs
            .iter()
            .map(|&(c, f)| ExperimentId::new(category_name(c), feature_name(f)))
            .collect(),
        provenance: format!("synthetic world, seed {}", spec.seed),
    };
    dataset.validate()?;

    let mut latent = BTreeMap::new();
    let mut ratings = BTreeMap::new();
    for &(c, f) in &pairs {
        let id = ExperimentId::new(category_name(c), feature_name(f));
        let v: Vec<f64> = (0..spec.items_per_category).map(|i| values[&(c, i)][f]).collect();
        let table = simulate_raters(&id, &dataset.categories[&category_name(c)], &v, spec, &mut rng)?;
        latent.insert(id.clone(), v);
        ratings.insert(id, table);
    }
    Ok(SyntheticWorld {
        spec: spec.clone(),
        store,
        dataset,
        latent,
        ratings,
    })
}

fn simulate_raters(
    id: &ExperimentId,
    items: &[String],
    latent: &[f64],
    spec: &WorldSpec,
    rng: &mut ChaCha8Rng,
) -> Result<RatingsTable> {
    let rows: Vec<Vec<f64>> = (0..spec.raters)
        .map(|_| {
            let scale: f64 = rng.random_range(10.0..20.0);
            let bias: f64 = rng.random_range(-10.0..10.0);
            latent
                .iter()
                .map(|v| {
                    let e: f64 = rng.sample(StandardNormal);
                    (50.0 + bias + scale * (v + spec.rater_noise * e)).round().clamp(0.0, 100.0)
                })
                .collect()
        })
        .collect();
    RatingsTable::new(
        id.clone(),
        (0..spec.raters).map(|p| format!("p{p:02}")).collect(),
        items.to_vec(),
        rows,
    )
}

impl SyntheticWorld {
    /// Writes `embeddings.txt`, `dataset.json` and `ratings/<category>_<feature>.csv`
    /// under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let ratings_dir = dir.join("ratings");
        fs::create_dir_all(&ratings_dir).map_err(|e| Error::io(&ratings_dir, e))?;
        let path = dir.join("embeddings.txt");
        let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        self.store.write_text(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        let path = dir.join("dataset.json");
        fs::write(&path, self.dataset.to_json()?).map_err(|e| Error::io(&path, e))?;
        for (id, table) in &self.ratings {
            let path = ratings_dir.join(format!("{}.csv", id.file_stem()));
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_ratings(table, BufWriter::new(f))?;
        }
        Ok(())
    }
}

/// The same ratings with item labels permuted: rater agreement is unchanged
/// but any correspondence with the model is broken.
pub fn shuffle_item_labels(table: &RatingsTable, seed: u64) -> RatingsTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = table.items.clone();
    items.shuffle(&mut rng);
    RatingsTable {
        items,
        zscored: None,
        exclusion_applied: false,
        ..table.clone()
    }
}

/// Ratings from raters who ignore the items entirely.
pub fn random_raters(id: &ExperimentId, items: &[String], raters: usize, seed: u64) -> Result<RatingsTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..raters)
        .map(|_| items.iter().map(|_| rng.random_range(0..=100) as f64).collect())
        .collect();
    RatingsTable::new(
        id.clone(),
        (0..raters).map(|p| format!("p{p:02}")).collect(),
        items.to_vec(),
        rows,
    )
}
