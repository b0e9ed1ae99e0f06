//! Category items, feature pole definitions, and the list of category/feature
//! experiments to run.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed_store::normalize_item;
use crate::error::{Error, Result};
use crate::subspace::FeaturePoles;

/// Bundled dataset: nine categories and seventeen features.
pub const BUNDLED_DATASET: &str = include_str!("../data/bundled_dataset.json");

/// Item counts the bundled dataset must match.
pub const BUNDLED_CATEGORY_COUNTS: [(&str, usize); 9] = [
    ("animals", 34),
    ("cities", 50),
    ("clothing", 50),
    ("mythological", 50),
    ("names", 50),
    ("professions", 49),
    ("sports", 50),
    ("states", 50),
    ("weather", 37),
];
pub const BUNDLED_FEATURE_COUNT: usize = 17;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExperimentId {
    pub category: String,
    pub feature: String,
}

impl ExperimentId {
    pub fn new(category: impl Into<String>, feature: impl Into<String>) -> Self {
        ExperimentId {
            category: category.into(),
            feature: feature.into(),
        }
    }

    /// File-name friendly form, `category_feature`.
    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.category, self.feature)
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&format!("{}/{}", self.category, self.feature))
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('/') {
            Some((c, f)) if !c.trim().is_empty() && !f.trim().is_empty() && !f.contains('/') => {
                Ok(ExperimentId::new(c.trim(), f.trim()))
            }
            _ => Err(Error::invalid(format!(
                "experiment id {s:?} is not of the form category/feature"
            ))),
        }
    }
}

#[derive(Deserialize, Serialize)]
struct PolesFile {
    strong: Vec<String>,
    weak: Vec<String>,
}

#[derive(Deserialize, Serialize)]
struct DatasetFile {
    #[serde(default)]
    provenance: String,
    categories: BTreeMap<String, Vec<String>>,
    features: BTreeMap<String, PolesFile>,
    #[serde(default)]
    pairs: Vec<ExperimentId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub categories: BTreeMap<String, Vec<String>>,
    pub features: BTreeMap<String, FeaturePoles>,
    pub pairs: Vec<ExperimentId>,
    pub provenance: String,
}

impl Dataset {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(text)?;
        let ds = Dataset {
            categories: file.categories,
            features: file
                .features
                .into_iter()
                .map(|(name, p)| {
                    let poles = FeaturePoles::new(name.clone(), p.strong, p.weak);
                    (name, poles)
                })
                .collect(),
            pairs: file.pairs,
            provenance: file.provenance,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = DatasetFile {
            provenance: self.provenance.clone(),
            categories: self.categories.clone(),
            features: self
                .features
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        PolesFile {
                            strong: p.strong.clone(),
                            weak: p.weak.clone(),
                        },
                    )
                })
                .collect(),
            pairs: self.pairs.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// The bundled dataset, with its item and feature counts checked.
    pub fn bundled() -> Result<Self> {
        let ds = Dataset::from_json(BUNDLED_DATASET)?;
        ds.check_bundled_counts()?;
        Ok(ds)
    }

    pub fn check_bundled_counts(&self) -> Result<()> {
        if self.categories.len() != BUNDLED_CATEGORY_COUNTS.len() {
            return Err(Error::Dataset(format!(
                "expected {} categories, found {}",
                BUNDLED_CATEGORY_COUNTS.len(),
                self.categories.len()
            )));
        }
        for (name, n) in BUNDLED_CATEGORY_COUNTS {
            let found = self.categories.get(name).map(Vec::len);
            if found != Some(n) {
                return Err(Error::Dataset(format!(
                    "category {name:?}: expected {n} items, found {found:?}"
                )));
            }
        }
        if self.features.len() != BUNDLED_FEATURE_COUNT {
            return Err(Error::Dataset(format!(
                "expected {BUNDLED_FEATURE_COUNT} features, found {}",
                self.features.len()
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, items) in &self.categories {
            if items.is_empty() {
                return Err(Error::Dataset(format!("category {name:?} has no items")));
            }
            let mut seen = HashSet::new();
            for item in items {
                if item.trim().is_empty() {
                    return Err(Error::Dataset(format!("category {name:?} has an empty item")));
                }
                if !seen.insert(normalize_item(item)) {
                    return Err(Error::Dataset(format!(
                        "category {name:?} lists {item:?} more than once"
                    )));
                }
            }
        }
        for poles in self.features.values() {
            poles.validate()?;
        }
        let mut seen = HashSet::new();
        for id in &self.pairs {
            if !self.categories.contains_key(&id.category) {
                return Err(Error::Dataset(format!("pair {id}: unknown category {:?}", id.category)));
            }
            if !self.features.contains_key(&id.feature) {
                return Err(Error::Dataset(format!("pair {id}: unknown feature {:?}", id.feature)));
            }
            if !seen.insert(id) {
                return Err(Error::Dataset(format!("pair {id} listed more than once")));
            }
        }
        Ok(())
    }

    pub fn items(&self, category: &str) -> Result<&[String]> {
        self.categories
            .get(category)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Dataset(format!("unknown category {category:?}")))
    }

    pub fn poles(&self, feature: &str) -> Result<&FeaturePoles> {
        self.features
            .get(feature)
            .ok_or_else(|| Error::Dataset(format!("unknown feature {feature:?}")))
    }

    pub fn feature_list(&self) -> Vec<FeaturePoles> {
        self.features.values().cloned().collect()
    }

    /// Replaces the pair list, checking every pair exists.
    pub fn with_pairs(mut self, pairs: Vec<ExperimentId>) -> Result<Self> {
        self.pairs = pairs;
        self.validate()?;
        Ok(self)
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_json(&text).map_err(|e| match e {
        Error::Json(j) => Error::Dataset(format!("{}: {j}", path.display())),
        e => e,
    })
}

/// Reads a newline-separated list of `category/feature` ids. Blank lines and
/// lines starting with `#` are ignored.
pub fn load_pair_list(path: impl AsRef<Path>) -> Result<Vec<ExperimentId>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormingMean {
    pub category: String,
    pub feature: String,
    pub mean_rating: f64,
}

impl NormingMean {
    pub fn id(&self) -> ExperimentId {
        ExperimentId::new(&self.category, &self.feature)
    }
}

/// Reads `category,feature,mean_rating` rows.
pub fn load_norming(path: impl AsRef<Path>) -> Result<Vec<NormingMean>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Norming,
    Manual,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectedPair {
    pub id: ExperimentId,
    pub route: Route,
    pub mean_rating: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairSelection {
    pub percentile: f64,
    pub threshold: f64,
    pub n_means: usize,
    /// Pairs at or above the threshold before exclusions.
    pub above_threshold: usize,
    /// Exclusions that removed a pair from the normed set.
    pub excluded: Vec<ExperimentId>,
    pub normed: usize,
    pub manual: usize,
    pub overlap: usize,
    pub pairs: Vec<SelectedPair>,
}

impl PairSelection {
    pub fn ids(&self) -> Vec<ExperimentId> {
        self.pairs.iter().map(|p| p.id.clone()).collect()
    }
}

/// Percentile threshold: the smallest value whose rank exceeds `percentile`%
/// of the sorted values, i.e. `x[floor(p n / 100)]` (0-based), clamped to the
/// maximum.
pub fn percentile_threshold(values: &[f64], percentile: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("percentile of an empty list"));
    }
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(Error::Config(format!("percentile {percentile} outside (0, 100)")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((percentile / 100.0) * n as f64).floor() as usize;
    Ok(sorted[rank.min(n - 1)])
}

/// Admits norming pairs at or above the percentile threshold, drops
/// exclusions, and unites the result with the manual pairs. The output is
/// sorted by id.
pub fn select_pairs(
    norming: &[NormingMean],
    manual: &[ExperimentId],
    exclusions: &[ExperimentId],
    percentile: f64,
) -> Result<PairSelection> {
    if norming.is_empty() {
        return Err(Error::invalid("no norming means supplied"));
    }
    let mut means: BTreeMap<ExperimentId, f64> = BTreeMap::new();
    for m in norming {
        if !(1.0..=5.0).contains(&m.mean_rating) {
            return Err(Error::invalid(format!(
                "{}: norming mean {} outside [1, 5]",
                m.id(),
                m.mean_rating
            )));
        }
        if means.insert(m.id(), m.mean_rating).is_some() {
            return Err(Error::invalid(format!("{} appears twice in the norming data", m.id())));
        }
    }
    let values: Vec<f64> = means.values().copied().collect();
    let threshold = percentile_threshold(&values, percentile)?;
    let exclusions: BTreeSet<&ExperimentId> = exclusions.iter().collect();

    let above: Vec<&ExperimentId> = means
        .iter()
        .filter(|(_, &v)| v >= threshold)
        .map(|(id, _)| id)
        .collect();
    let excluded: Vec<ExperimentId> = above
        .iter()
        .filter(|id| exclusions.contains(*id))
        .map(|id| (*id).clone())
        .collect();
    let normed: BTreeSet<&ExperimentId> = above
        .iter()
        .copied()
        .filter(|id| !exclusions.contains(id))
        .collect();
    let manual_set: BTreeSet<&ExperimentId> =
        manual.iter().filter(|id| !exclusions.contains(id)).collect();

    let all: BTreeSet<&ExperimentId> = normed.union(&manual_set).copied().collect();
    let pairs = all
        .into_iter()
        .map(|id| {
            let route = match (normed.contains(id), manual_set.contains(id)) {
                (true, true) => Route::Both,
                (true, false) => Route::Norming,
                _ => Route::Manual,
            };
            SelectedPair {
                id: id.clone(),
                route,
                mean_rating: means.get(id).copied(),
            }
        })
        .collect::<Vec<_>>();
    let overlap = pairs.iter().filter(|p| p.route == Route::Both).count();
    Ok(PairSelection {
        percentile,
        threshold,
        n_means: means.len(),
        above_threshold: above.len(),
        excluded,
        normed: normed.len(),
        manual: manual_set.len(),
        overlap,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_counts() {
        let ds = Dataset::bundled().unwrap();
        assert_eq!(ds.categories.len(), 9);
        assert_eq!(ds.features.len(), 17);
        assert_eq!(&ds.items("animals").unwrap()[..3], ["Alligator", "Ant", "Bee"]);
        let size = ds.poles("size").unwrap();
        assert_eq!(size.strong, ["large", "big", "huge"]);
        assert_eq!(size.weak, ["small", "little", "tiny"]);
        assert!(ds.pairs.contains(&ExperimentId::new("animals", "size")));
    }

    #[test]
    fn json_round_trip() {
        let ds = Dataset::bundled().unwrap();
        assert_eq!(Dataset::from_json(&ds.to_json().unwrap()).unwrap(), ds);
    }

    #[test]
    fn duplicate_item_rejected() {
        let text = r#"{"categories": {"animals": ["Dog", "Cat", "Dog"]},
            "features": {"size": {"strong": ["big"], "weak": ["small"]}}, "pairs": []}"#;
        let e = Dataset::from_json(text).unwrap_err().to_string();
        assert!(e.contains("Dog"), "{e}");
    }

    #[test]
    fn unknown_pair_rejected() {
        let text = r#"{"categories": {"animals": ["Dog", "Cat"]},
            "features": {"size": {"strong": ["big"], "weak": ["small"]}},
            "pairs": [{"category": "animals", "feature": "speed"}]}"#;
        assert!(Dataset::from_json(text).is_err());
    }

    #[test]
    fn count_mismatch_detected() {
        let mut ds = Dataset::bundled().unwrap();
        ds.categories.get_mut("animals").unwrap().pop();
        assert!(ds.check_bundled_counts().is_err());
    }

    #[test]
    fn experiment_id_parse() {
        let id: ExperimentId = "animals/size".parse().unwrap();
        assert_eq!(id, ExperimentId::new("animals", "size"));
        assert_eq!(id.to_string(), "animals/size");
        assert!("animals".parse::<ExperimentId>().is_err());
        assert!("a/b/c".parse::<ExperimentId>().is_err());
    }

    fn nm(c: &str, f: &str, v: f64) -> NormingMean {
        NormingMean {
            category: c.into(),
            feature: f.into(),
            mean_rating: v,
        }
    }

    #[test]
    fn toy_percentile() {
        let means = [nm("a", "w", 1.0), nm("a", "x", 2.0), nm("a", "y", 3.0), nm("a", "z", 4.0)];
        let sel = select_pairs(&means, &[], &[], 75.0).unwrap();
        assert_eq!(sel.threshold, 4.0);
        assert_eq!(sel.ids(), [ExperimentId::new("a", "z")]);
        assert_eq!(sel.pairs[0].route, Route::Norming);
    }

    #[test]
    fn routes_and_exclusions() {
        let means = [nm("a", "w", 1.0), nm("a", "x", 2.0), nm("a", "y", 4.5), nm("a", "z", 4.0)];
        let manual = [ExperimentId::new("a", "w"), ExperimentId::new("a", "y")];
        let excl = [ExperimentId::new("a", "z")];
        let sel = select_pairs(&means, &manual, &excl, 50.0).unwrap();
        assert_eq!(sel.threshold, 4.0);
        assert_eq!(sel.excluded, excl);
        let got: Vec<(String, Route)> =
            sel.pairs.iter().map(|p| (p.id.to_string(), p.route)).collect();
        assert_eq!(got, [("a/w".to_string(), Route::Manual), ("a/y".to_string(), Route::Both)]);
    }

    #[test]
    fn empty_and_out_of_range() {
        assert!(select_pairs(&[], &[], &[], 75.0).is_err());
        assert!(select_pairs(&[nm("a", "b", 5.5)], &[], &[], 75.0).is_err());
        assert!(select_pairs(&[nm("a", "b", 3.0)], &[], &[], 100.0).is_err());
    }
}
