//! Per-experiment evaluation: projection scores against mean human ratings.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::dataset::{Dataset, ExperimentId};
use crate::embed_store::{normalize_item, EmbeddingStore};
use crate::error::{Error, Result};
use crate::projection::{project, ProjectionResult};
use crate::ratings::{
    mean_item_ratings, reliability, reliability_pipeline, zscore_participants, RatingsTable,
    ReliabilityReport,
};
use crate::stats::{
    adjust_upper_bound, pairwise_oc, pearson_r, permutation_test_both, zscore, Measure,
    NullDistribution, PermutationConfig, DEFAULT_EXHAUSTIVE_LIMIT, DEFAULT_PERMUTATIONS,
};
use crate::subspace::build_subspace;

pub const DEFAULT_MAX_REMOVE: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalConfig {
    pub n_perm: usize,
    /// Global seed; each experiment derives its own from this and its id.
    pub seed: u64,
    pub exhaustive_limit: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_perm: DEFAULT_PERMUTATIONS,
            seed: 0,
            exhaustive_limit: DEFAULT_EXHAUSTIVE_LIMIT,
        }
    }
}

impl EvalConfig {
    pub fn permutation_config(&self, experiment: &str) -> PermutationConfig {
        PermutationConfig {
            n_perm: self.n_perm,
            seed: experiment_seed(self.seed, experiment),
            exhaustive_limit: self.exhaustive_limit,
        }
    }
}

/// Stable per-experiment seed: FNV-1a of the id, mixed with the global seed.
pub fn experiment_seed(seed: u64, experiment: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in experiment.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h ^ splitmix64(seed))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// One row of the per-experiment report table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub experiment: String,
    pub category: String,
    pub feature: String,
    pub method: String,
    pub n_items: usize,
    pub n_items_dropped: usize,
    pub n_participants: usize,
    pub n_excluded: usize,
    pub r: f64,
    pub p_r: f64,
    pub oc_p: f64,
    pub p_ocp: f64,
    pub mean_is_r: f64,
    pub is_ocp: f64,
    /// Empty when the reliability is not positive.
    pub adjusted_r: Option<f64>,
    pub r_negative: bool,
    pub adjusted_ocp: Option<f64>,
    pub null_r_mean: f64,
    pub null_r_sd: f64,
    pub null_ocp_mean: f64,
    pub null_ocp_sd: f64,
    pub n_permutations: usize,
    pub exhaustive: bool,
    pub seed: u64,
    pub fdr_p_r: Option<f64>,
    pub fdr_p_ocp: Option<f64>,
    pub significant: bool,
    pub low_reliability: bool,
}

/// Model and mean human z-score for one item (scatter plot data).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ItemPoint {
    pub experiment: String,
    pub item: String,
    pub model_z: f64,
    pub human_z: f64,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: EvalReport,
    pub points: Vec<ItemPoint>,
    pub reliability: ReliabilityReport,
    /// Ratings after z-scoring and participant exclusion, restricted to the
    /// evaluated items.
    pub ratings: RatingsTable,
    pub null_r: NullDistribution,
    pub null_ocp: NullDistribution,
    /// Items rated but without a model score, and items scored but not rated.
    pub dropped_items: Vec<String>,
}

/// Builds the subspace, projects the category's items and evaluates the
/// projection against `ratings`. Errors carry the experiment id.
pub fn evaluate_experiment(
    store: &EmbeddingStore,
    dataset: &Dataset,
    id: &ExperimentId,
    ratings: &RatingsTable,
    cfg: &EvalConfig,
) -> Result<Evaluation> {
    let run = || {
        if ratings.experiment != *id {
            return Err(Error::invalid(format!(
                "ratings belong to experiment {}",
                ratings.experiment
            )));
        }
        let poles = dataset.poles(&id.feature)?;
        let subspace = build_subspace(store, poles)?;
        let projection = project(store, &id.category, dataset.items(&id.category)?, &subspace)?;
        evaluate_projection_inner(&projection, ratings, cfg)
    };
    run().map_err(|e| e.in_experiment(id))
}

/// Evaluates an existing projection (the main one or a control) against
/// ratings.
pub fn evaluate_projection(
    projection: &ProjectionResult,
    ratings: &RatingsTable,
    cfg: &EvalConfig,
) -> Result<Evaluation> {
    evaluate_projection_inner(projection, ratings, cfg).map_err(|e| {
        e.in_experiment(format!("{}/{}", projection.category, projection.feature))
    })
}

struct Matched {
    /// Rating-table item names, in projection order.
    rating_items: Vec<String>,
    /// Raw model scores aligned with `rating_items`.
    model_raw: Vec<f64>,
    dropped: Vec<String>,
}

fn match_items(projection: &ProjectionResult, ratings: &RatingsTable) -> Result<Matched> {
    let rated: HashMap<String, &String> = ratings
        .items
        .iter()
        .map(|i| (normalize_item(i), i))
        .collect();
    let mut rating_items = Vec::new();
    let mut model_raw = Vec::new();
    let mut used = BTreeSet::new();
    let mut dropped = Vec::new();
    for s in &projection.scores {
        let key = normalize_item(&s.item);
        match rated.get(&key) {
            Some(name) => {
                rating_items.push((*name).clone());
                model_raw.push(s.raw);
                used.insert(key);
            }
            None => dropped.push(s.item.clone()),
        }
    }
    dropped.extend(
        ratings
            .items
            .iter()
            .filter(|i| !used.contains(&normalize_item(i)))
            .cloned(),
    );
    if !dropped.is_empty() {
        log::warn!(
            "{}/{}: items without both a model score and ratings dropped: {dropped:?}",
            projection.category,
            projection.feature
        );
    }
    if rating_items.len() < 3 {
        return Err(Error::invalid(format!(
            "only {} item(s) have both a model score and ratings, need at least 3",
            rating_items.len()
        )));
    }
    Ok(Matched {
        rating_items,
        model_raw,
        dropped,
    })
}

fn evaluate_projection_inner(
    projection: &ProjectionResult,
    ratings: &RatingsTable,
    cfg: &EvalConfig,
) -> Result<Evaluation> {
    let matched = match_items(projection, ratings)?;
    let restricted = ratings.restrict_items(&matched.rating_items)?;
    let (kept, rel) = reliability_pipeline(&restricted)?;
    let human = mean_item_ratings(&kept)?;
    let model = zscore(&matched.model_raw)?;

    let experiment = format!("{}/{}", projection.category, projection.feature);
    let pcfg = cfg.permutation_config(&experiment);
    let (r_out, oc_out) = permutation_test_both(&model, &human, &pcfg)?;
    let adjusted = |value: f64, reliability: f64, kind: Measure| -> Result<Option<f64>> {
        if reliability > 0.0 {
            Ok(Some(adjust_upper_bound(value, reliability, kind)?.value))
        } else {
            Ok(None)
        }
    };

    let report = EvalReport {
        experiment: experiment.clone(),
        category: projection.category.clone(),
        feature: projection.feature.clone(),
        method: projection.method.to_string(),
        n_items: model.len(),
        n_items_dropped: matched.dropped.len(),
        n_participants: kept.n_participants(),
        n_excluded: rel.excluded.len(),
        r: r_out.observed,
        p_r: r_out.p,
        oc_p: oc_out.observed,
        p_ocp: oc_out.p,
        mean_is_r: rel.mean_is_r,
        is_ocp: rel.is_ocp,
        adjusted_r: adjusted(r_out.observed, rel.mean_is_r, Measure::R)?,
        r_negative: r_out.observed < 0.0,
        adjusted_ocp: adjusted(oc_out.observed, rel.is_ocp, Measure::Ocp)?,
        null_r_mean: r_out.null.mean,
        null_r_sd: r_out.null.sd,
        null_ocp_mean: oc_out.null.mean,
        null_ocp_sd: oc_out.null.sd,
        n_permutations: r_out.null.n_permutations,
        exhaustive: r_out.null.exhaustive,
        seed: pcfg.seed,
        fdr_p_r: None,
        fdr_p_ocp: None,
        significant: false,
        low_reliability: false,
    };
    let points = matched
        .rating_items
        .iter()
        .zip(model.iter().zip(&human))
        .map(|(item, (&m, &h))| ItemPoint {
            experiment: experiment.clone(),
            item: item.clone(),
            model_z: m,
            human_z: h,
        })
        .collect();
    Ok(Evaluation {
        report,
        points,
        reliability: rel,
        ratings: kept,
        null_r: r_out.null,
        null_ocp: oc_out.null,
        dropped_items: matched.dropped,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub experiment: String,
    pub k: usize,
    /// Item removed at this step; empty for `k = 0`.
    pub removed: Option<String>,
    pub n_items: usize,
    pub r: f64,
    pub oc_p: f64,
    pub mean_is_r: f64,
    pub is_ocp: f64,
}

/// Items ordered from most to least extreme mean human z-score, ties broken
/// by name.
pub fn extremeness_order(items: &[String], human_z: &[f64]) -> Vec<String> {
    let mut order: Vec<(&String, f64)> = items.iter().zip(human_z.iter().map(|z| z.abs())).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    order.into_iter().map(|(i, _)| i.clone()).collect()
}

/// Removes the most extreme items one at a time and recomputes r, OC_p,
/// IS-r and IS-OC_p. Items are ranked once on the full set. Participants
/// excluded in the base evaluation stay excluded; the remaining participants
/// are z-scored again on each reduced item set.
pub fn outlier_sweep(
    projection: &ProjectionResult,
    ratings: &RatingsTable,
    max_remove: usize,
    cfg: &EvalConfig,
) -> Result<Vec<SweepPoint>> {
    let experiment = format!("{}/{}", projection.category, projection.feature);
    let run = || -> Result<Vec<SweepPoint>> {
        let base = evaluate_projection_inner(projection, ratings, cfg)?;
        sweep_from(&base, max_remove)
    };
    run().map_err(|e| e.in_experiment(experiment.clone()))
}

/// Sweep given an already computed base evaluation.
pub fn sweep_from(base: &Evaluation, max_remove: usize) -> Result<Vec<SweepPoint>> {
    let items: Vec<String> = base.points.iter().map(|p| p.item.clone()).collect();
    let model: Vec<f64> = base.points.iter().map(|p| p.model_z).collect();
    let human: Vec<f64> = base.points.iter().map(|p| p.human_z).collect();
    if items.len() < max_remove + 3 {
        return Err(Error::invalid(format!(
            "removing {max_remove} of {} items leaves fewer than 3",
            items.len()
        )));
    }
    let order = extremeness_order(&items, &human);
    let experiment = base.report.experiment.clone();
    let mut curve = vec![SweepPoint {
        experiment: experiment.clone(),
        k: 0,
        removed: None,
        n_items: items.len(),
        r: base.report.r,
        oc_p: base.report.oc_p,
        mean_is_r: base.report.mean_is_r,
        is_ocp: base.report.is_ocp,
    }];
    let mut raw_table = base.ratings.clone();
    raw_table.zscored = None;
    for k in 1..=max_remove {
        let removed: BTreeSet<&String> = order[..k].iter().collect();
        let keep: Vec<usize> = (0..items.len()).filter(|&i| !removed.contains(&items[i])).collect();
        let kept_items: Vec<String> = keep.iter().map(|&i| items[i].clone()).collect();
        let model_k = zscore(&keep.iter().map(|&i| model[i]).collect::<Vec<_>>())?;
        let (z, _) = zscore_participants(&raw_table.restrict_items(&kept_items)?)?;
        let rel = reliability(&z)?;
        let human_k = mean_item_ratings(&z)?;
        curve.push(SweepPoint {
            experiment: experiment.clone(),
            k,
            removed: Some(order[k - 1].clone()),
            n_items: kept_items.len(),
            r: pearson_r(&model_k, &human_k)?,
            oc_p: pairwise_oc(&model_k, &human_k)?,
            mean_is_r: rel.mean_is_r,
            is_ocp: rel.is_ocp,
        });
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed_store::EmbeddingStore;
    use crate::projection::Method;
    use crate::projection::ItemScore;
    use crate::embed_store::Resolution;

    fn projection(items: &[&str], raw: &[f64]) -> ProjectionResult {
        let z = zscore(raw).unwrap();
        ProjectionResult {
            category: "c".into(),
            feature: "f".into(),
            method: Method::Subspace,
            scores: items
                .iter()
                .zip(raw.iter().zip(&z))
                .map(|(i, (&raw, &z))| ItemScore {
                    item: i.to_string(),
                    raw,
                    z,
                    resolution: Resolution::Direct(i.to_lowercase()),
                })
                .collect(),
            unresolved: vec![],
        }
    }

    fn ratings(items: &[&str], rows: Vec<Vec<f64>>) -> RatingsTable {
        RatingsTable::new(
            ExperimentId::new("c", "f"),
            (0..rows.len()).map(|i| format!("p{i}")).collect(),
            items.iter().map(|s| s.to_string()).collect(),
            rows,
        )
        .unwrap()
    }

    fn cfg() -> EvalConfig {
        EvalConfig {
            n_perm: 500,
            seed: 3,
            exhaustive_limit: DEFAULT_EXHAUSTIVE_LIMIT,
        }
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(experiment_seed(1, "a/b"), experiment_seed(1, "a/b"));
        assert_ne!(experiment_seed(1, "a/b"), experiment_seed(1, "a/c"));
        assert_ne!(experiment_seed(1, "a/b"), experiment_seed(2, "a/b"));
    }

    #[test]
    fn planted_signal_scores_perfectly() {
        let items = ["A", "B", "C", "D", "E", "F"];
        let model = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|p| model.iter().map(|m| m * 10.0 + p as f64).collect())
            .collect();
        let ev = evaluate_projection(&projection(&items, &model), &ratings(&items, rows), &cfg()).unwrap();
        assert!((ev.report.r - 1.0).abs() < 1e-12);
        assert_eq!(ev.report.oc_p, 1.0);
        assert!(ev.report.exhaustive);
        assert!((ev.report.p_ocp - 1.0 / 720.0).abs() < 1e-15);
        assert_eq!(ev.report.adjusted_ocp, Some(1.0));
    }

    #[test]
    fn unrated_and_unscored_items_dropped() {
        let items = ["A", "B", "C", "D", "E"];
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|p| vec![10.0, 20.0 + p as f64, 35.0, 40.0, 70.0])
            .collect();
        let r = ratings(&items, rows);
        let proj = projection(&["a", "B", "C", "D", "Zebra"], &[1.0, 2.0, 4.0, 3.0, 9.0]);
        let ev = evaluate_projection(&proj, &r, &cfg()).unwrap();
        assert_eq!(ev.report.n_items, 4);
        assert_eq!(ev.dropped_items, ["Zebra", "E"]);
        assert_eq!(ev.points[0].item, "A");
    }

    #[test]
    fn too_few_common_items() {
        let r = ratings(&["A", "B", "C"], vec![vec![1.0, 2.0, 3.0]; 3]);
        let e = evaluate_projection(&projection(&["A", "B", "X"], &[1.0, 2.0, 3.0]), &r, &cfg())
            .unwrap_err();
        assert!(e.to_string().contains("c/f"), "{e}");
    }

    #[test]
    fn wrong_experiment_rejected() {
        let store = EmbeddingStore::from_rows(
            vec![("big", vec![1.0, 0.0]), ("small", vec![-1.0, 0.0])],
            "t",
        )
        .unwrap();
        let ds = Dataset::from_json(
            r#"{"categories": {"c": ["big", "small", "x"]},
                "features": {"f": {"strong": ["big"], "weak": ["small"]}}, "pairs": []}"#,
        )
        .unwrap();
        let r = ratings(&["big", "small", "x"], vec![vec![1.0, 2.0, 3.0]; 3]);
        let other = ExperimentId::new("c", "g");
        assert!(evaluate_experiment(&store, &ds, &other, &r, &cfg()).is_err());
    }

    #[test]
    fn extremeness_ties_by_name() {
        let items: Vec<String> = ["b", "a", "c", "d"].iter().map(|s| s.to_string()).collect();
        assert_eq!(extremeness_order(&items, &[1.0, -1.0, 0.5, 2.0]), ["d", "a", "b", "c"]);
    }

    #[test]
    fn sweep_base_row_matches_and_outlier_matters() {
        // One item far from the rest carries all of the agreement.
        let items = ["A", "B", "C", "D", "E", "F", "G", "H"];
        let model = [0.0, 1.0, 0.5, 0.2, 0.9, 0.3, 0.7, 10.0];
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|p| {
                let noise = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0];
                let mut row: Vec<f64> =
                    (0..7).map(|i| 30.0 + noise[(i + p) % 7] * 2.0).collect();
                row.push(100.0);
                row
            })
            .collect();
        let proj = projection(&items, &model);
        let r = ratings(&items, rows);
        let base = evaluate_projection(&proj, &r, &cfg()).unwrap();
        let curve = outlier_sweep(&proj, &r, 3, &cfg()).unwrap();
        assert_eq!(curve.len(), 4);
        assert_eq!(curve[0].r.to_bits(), base.report.r.to_bits());
        assert_eq!(curve[0].oc_p.to_bits(), base.report.oc_p.to_bits());
        assert_eq!(curve[0].mean_is_r.to_bits(), base.report.mean_is_r.to_bits());
        assert_eq!(curve[1].removed.as_deref(), Some("H"));
        assert!(curve[1].r < curve[0].r);

        // Direct recomputation of k = 1 without the helper.
        let kept: Vec<String> = items[..7].iter().map(|s| s.to_string()).collect();
        let t = base.ratings.restrict_items(&kept).unwrap();
        let (z, _) = zscore_participants(&t).unwrap();
        let human = mean_item_ratings(&z).unwrap();
        let m = zscore(&model[..7]).unwrap();
        assert!((pearson_r(&m, &human).unwrap() - curve[1].r).abs() < 1e-12);
    }

    #[test]
    fn sweep_needs_enough_items() {
        let items = ["A", "B", "C", "D"];
        let rows: Vec<Vec<f64>> = (0..3).map(|p| vec![1.0, 2.0 + p as f64, 3.0, 9.0]).collect();
        let proj = projection(&items, &[1.0, 2.0, 3.0, 4.0]);
        assert!(outlier_sweep(&proj, &ratings(&items, rows), 2, &cfg()).is_err());
    }
}
