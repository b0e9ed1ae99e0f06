//! One-dimensional feature scales built from antonym pole word sets.
//!
//! A feature such as size is defined by a strong pole (`large`, `big`, `huge`)
//! and a weak pole (`small`, `little`, `tiny`). Every strong/weak pair gives a
//! difference vector ("line"); the scale direction is the mean of all lines,
//! oriented strong minus weak so a larger projection means more of the feature.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::embed_store::EmbeddingStore;
use crate::error::{Error, Result};
use crate::linalg::{self, cosine, to_f64};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturePoles {
    pub name: String,
    pub strong: Vec<String>,
    pub weak: Vec<String>,
}

impl FeaturePoles {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        strong: impl IntoIterator<Item = S>,
        weak: impl IntoIterator<Item = S>,
    ) -> Self {
        FeaturePoles {
            name: name.into(),
            strong: strong.into_iter().map(Into::into).collect(),
            weak: weak.into_iter().map(Into::into).collect(),
        }
    }

    /// Both poles non-empty and disjoint after lowercasing.
    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidPoles {
            feature: self.name.clone(),
            message,
        };
        if self.strong.is_empty() || self.weak.is_empty() {
            return Err(invalid("both poles need at least one word".into()));
        }
        let strong: BTreeSet<String> = self.strong.iter().map(|w| w.to_lowercase()).collect();
        let shared: Vec<&String> = self
            .weak
            .iter()
            .filter(|w| strong.contains(&w.to_lowercase()))
            .collect();
        if !shared.is_empty() {
            return Err(invalid(format!("words on both poles: {shared:?}")));
        }
        Ok(())
    }

    /// The same feature with strong and weak poles swapped.
    pub fn reversed(&self) -> Self {
        FeaturePoles {
            name: self.name.clone(),
            strong: self.weak.clone(),
            weak: self.strong.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSubspace {
    pub name: String,
    pub direction: Vec<f64>,
    pub line_count: usize,
    pub strong_words: Vec<String>,
    pub weak_words: Vec<String>,
}

impl FeatureSubspace {
    /// Wraps an arbitrary direction, e.g. a single-end control or a rescaled scale.
    pub fn from_direction(name: impl Into<String>, direction: Vec<f64>) -> Result<Self> {
        let name = name.into();
        let n = linalg::norm(&direction);
        if !n.is_finite() {
            return Err(Error::invalid(format!("direction {name:?} is not finite")));
        }
        if n == 0.0 {
            return Err(Error::ZeroDirection(name));
        }
        Ok(FeatureSubspace {
            name,
            direction,
            line_count: 1,
            strong_words: Vec::new(),
            weak_words: Vec::new(),
        })
    }
}

fn lookup_all(store: &EmbeddingStore, feature: &str, words: &[String]) -> Result<Vec<Vec<f64>>> {
    let mut missing = Vec::new();
    let mut vectors = Vec::with_capacity(words.len());
    for w in words {
        match store.lookup(w) {
            Ok(row) => vectors.push(to_f64(row)),
            Err(_) => missing.push(w.clone()),
        }
    }
    if missing.is_empty() {
        Ok(vectors)
    } else {
        Err(Error::MissingPoleWord {
            feature: feature.to_string(),
            words: missing,
        })
    }
}

/// All strong-minus-weak difference vectors, strong-major order.
pub fn pole_lines(store: &EmbeddingStore, poles: &FeaturePoles) -> Result<Vec<Vec<f64>>> {
    poles.validate()?;
    let (strong, weak) = resolve_poles(store, poles)?;
    Ok(strong
        .iter()
        .flat_map(|s| weak.iter().map(move |w| linalg::sub(s, w)))
        .collect())
}

fn resolve_poles(
    store: &EmbeddingStore,
    poles: &FeaturePoles,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let strong = lookup_all(store, &poles.name, &poles.strong);
    let weak = lookup_all(store, &poles.name, &poles.weak);
    match (strong, weak) {
        (Ok(s), Ok(w)) => Ok((s, w)),
        (s, w) => {
            let mut words = Vec::new();
            for r in [s, w] {
                if let Err(Error::MissingPoleWord { words: m, .. }) = r {
                    words.extend(m);
                }
            }
            Err(Error::MissingPoleWord {
                feature: poles.name.clone(),
                words,
            })
        }
    }
}

/// Averages the |strong| x |weak| pairwise difference vectors.
pub fn build_subspace(store: &EmbeddingStore, poles: &FeaturePoles) -> Result<FeatureSubspace> {
    let lines = pole_lines(store, poles)?;
    let direction = linalg::centroid(&lines);
    if linalg::norm(&direction) == 0.0 {
        return Err(Error::ZeroDirection(poles.name.clone()));
    }
    Ok(FeatureSubspace {
        name: poles.name.clone(),
        direction,
        line_count: lines.len(),
        strong_words: poles.strong.clone(),
        weak_words: poles.weak.clone(),
    })
}

/// Centroid of one pole's word vectors.
pub fn single_end_direction(store: &EmbeddingStore, words: &[String]) -> Result<Vec<f64>> {
    if words.is_empty() {
        return Err(Error::invalid("single-end direction needs at least one word"));
    }
    let vectors = lookup_all(store, "single-end", words)?;
    Ok(linalg::centroid(&vectors))
}

#[derive(Clone, Debug, Serialize)]
pub struct FeatureAlignment {
    pub feature: String,
    pub line_count: usize,
    /// Mean cosine between each line and the mean of the feature's other lines.
    /// `None` for single-line features.
    pub within: Option<f64>,
    /// Mean over other features of this feature's line-to-other-direction cosine.
    pub cross: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlignmentReport {
    pub features: Vec<FeatureAlignment>,
    /// Per-feature means, then averaged over features with at least two lines.
    pub within: Option<f64>,
    /// Per ordered feature pair means, then averaged over pairs.
    pub cross: f64,
    /// Mean over every line of every multi-line feature.
    pub within_pooled: Option<f64>,
    /// Mean over every (line, other feature) combination.
    pub cross_pooled: f64,
    pub within_degrees: Option<f64>,
    pub cross_degrees: f64,
    /// Features left out of the within score for having a single line.
    pub skipped: Vec<String>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn degrees(c: f64) -> f64 {
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Leave-one-out line alignment within each feature and line-to-direction
/// alignment across features.
pub fn alignment_diagnostics(
    store: &EmbeddingStore,
    features: &[FeaturePoles],
) -> Result<AlignmentReport> {
    if features.len() < 2 {
        return Err(Error::invalid(
            "cross-feature alignment needs at least two features",
        ));
    }
    let resolved: Vec<(Vec<Vec<f64>>, Vec<f64>)> = features
        .iter()
        .map(|poles| {
            let lines = pole_lines(store, poles)?;
            let dir = linalg::centroid(&lines);
            Ok((lines, dir))
        })
        .collect::<Result<_>>()?;

    let mut per_feature = Vec::with_capacity(features.len());
    let mut skipped = Vec::new();
    let mut within_all = Vec::new();
    let mut cross_pairs = Vec::new();
    let mut cross_all = Vec::new();

    for (a, (poles, (lines, dir))) in features.iter().zip(&resolved).enumerate() {
        let within = if lines.len() < 2 {
            log::warn!("feature {:?} has a single line; skipped for within alignment", poles.name);
            skipped.push(poles.name.clone());
            None
        } else {
            let n = lines.len() as f64;
            let total: Vec<f64> = dir.iter().map(|x| x * n).collect();
            let cs: Vec<f64> = lines
                .iter()
                .map(|line| {
                    let rest: Vec<f64> = total
                        .iter()
                        .zip(line)
                        .map(|(t, l)| (t - l) / (n - 1.0))
                        .collect();
                    cosine(line, &rest).unwrap_or(0.0)
                })
                .collect();
            within_all.extend_from_slice(&cs);
            Some(mean(&cs))
        };

        let mut cross_here = Vec::new();
        for (b, (_, other_dir)) in resolved.iter().enumerate() {
            if a == b {
                continue;
            }
            let cs: Vec<f64> = lines
                .iter()
                .map(|l| cosine(l, other_dir).unwrap_or(0.0))
                .collect();
            cross_all.extend_from_slice(&cs);
            let m = mean(&cs);
            cross_pairs.push(m);
            cross_here.push(m);
        }

        per_feature.push(FeatureAlignment {
            feature: poles.name.clone(),
            line_count: lines.len(),
            within,
            cross: mean(&cross_here),
        });
    }

    let withins: Vec<f64> = per_feature.iter().filter_map(|f| f.within).collect();
    let within = (!withins.is_empty()).then(|| mean(&withins));
    let cross = mean(&cross_pairs);
    Ok(AlignmentReport {
        features: per_feature,
        within,
        cross,
        within_pooled: (!within_all.is_empty()).then(|| mean(&within_all)),
        cross_pooled: mean(&cross_all),
        within_degrees: within.map(degrees),
        cross_degrees: degrees(cross),
        skipped,
    })
}
