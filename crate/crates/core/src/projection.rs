//! Scoring category items on a feature scale.
//!
//! The main scorer is the plain inner product of each item vector with the
//! (unnormalized) scale direction. Control scorers project onto one pole only
//! or measure the distance to one pole's centroid.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::embed_store::{EmbeddingStore, Resolution, ResolvedItem};
use crate::error::{Error, Result};
use crate::linalg::{self, dot};
use crate::subspace::{single_end_direction, FeaturePoles, FeatureSubspace};

pub use crate::stats::zscore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleEnd {
    Strong,
    Weak,
}

impl fmt::Display for PoleEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoleEnd::Strong => "strong",
            PoleEnd::Weak => "weak",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Cosine,
    Euclidean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    Subspace,
    SingleEnd(PoleEnd),
    Distance(DistanceMetric, PoleEnd),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Subspace => f.write_str("subspace"),
            Method::SingleEnd(end) => write!(f, "single_end_{end}"),
            Method::Distance(DistanceMetric::Cosine, end) => write!(f, "cosine_dist_{end}"),
            Method::Distance(DistanceMetric::Euclidean, end) => write!(f, "euclidean_dist_{end}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItemScore {
    pub item: String,
    pub raw: f64,
    pub z: f64,
    pub resolution: Resolution,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionResult {
    pub category: String,
    pub feature: String,
    pub method: Method,
    pub scores: Vec<ItemScore>,
    /// Items that could not be mapped to a vector and were left out.
    pub unresolved: Vec<String>,
}

impl ProjectionResult {
    pub fn items(&self) -> impl Iterator<Item = &str> {
        self.scores.iter().map(|s| s.item.as_str())
    }

    pub fn get(&self, item: &str) -> Option<&ItemScore> {
        self.scores.iter().find(|s| s.item == item)
    }

    /// Writes the `item,raw,z,method,provenance` table.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["item", "raw", "z", "method", "provenance"])?;
        for s in &self.scores {
            out.write_record([
                s.item.clone(),
                s.raw.to_string(),
                s.z.to_string(),
                self.method.to_string(),
                s.resolution.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Resolves every item, collecting the ones that fail.
pub fn resolve_items(
    store: &EmbeddingStore,
    items: &[String],
) -> (Vec<(String, ResolvedItem)>, Vec<String>) {
    let mut resolved = Vec::with_capacity(items.len());
    let mut unresolved = Vec::new();
    for item in items {
        match store.resolve_item(item) {
            Ok(r) => resolved.push((item.clone(), r)),
            Err(_) => unresolved.push(item.clone()),
        }
    }
    if !unresolved.is_empty() {
        log::warn!("unresolvable items dropped: {unresolved:?}");
    }
    (resolved, unresolved)
}

fn score_items(
    store: &EmbeddingStore,
    category: &str,
    feature: &str,
    items: &[String],
    method: Method,
    score: impl Fn(&[f64]) -> Result<f64>,
) -> Result<ProjectionResult> {
    let (resolved, unresolved) = resolve_items(store, items);
    if resolved.len() < 2 {
        return Err(Error::invalid(format!(
            "{category}/{feature}: only {} item(s) resolvable, need at least 2",
            resolved.len()
        )));
    }
    let raw: Vec<f64> = resolved
        .iter()
        .map(|(_, r)| score(&r.vector))
        .collect::<Result<_>>()?;
    let z = zscore(&raw)?;
    let scores = resolved
        .into_iter()
        .zip(raw.iter().zip(&z))
        .map(|((item, r), (&raw, &z))| ItemScore {
            item,
            raw,
            z,
            resolution: r.resolution,
        })
        .collect();
    Ok(ProjectionResult {
        category: category.to_string(),
        feature: feature.to_string(),
        method,
        scores,
        unresolved,
    })
}

/// Inner product of each item vector with the scale direction, then z-scored.
pub fn project(
    store: &EmbeddingStore,
    category: &str,
    items: &[String],
    subspace: &FeatureSubspace,
) -> Result<ProjectionResult> {
    if subspace.direction.len() != store.dim() {
        return Err(Error::LengthMismatch(subspace.direction.len(), store.dim()));
    }
    score_items(store, category, &subspace.name, items, Method::Subspace, |v| {
        Ok(dot(v, &subspace.direction))
    })
}

/// Projection onto the centroid of a single pole.
pub fn project_single_end(
    store: &EmbeddingStore,
    category: &str,
    items: &[String],
    poles: &FeaturePoles,
    end: PoleEnd,
) -> Result<ProjectionResult> {
    let words = match end {
        PoleEnd::Strong => &poles.strong,
        PoleEnd::Weak => &poles.weak,
    };
    let dir = single_end_direction(store, words)?;
    score_items(store, category, &poles.name, items, Method::SingleEnd(end), |v| {
        Ok(dot(v, &dir))
    })
}

/// Distance from each item vector to one pole's centroid. Cosine distance is
/// `1 - cosine similarity`.
pub fn distance_control(
    store: &EmbeddingStore,
    category: &str,
    items: &[String],
    poles: &FeaturePoles,
    end: PoleEnd,
    metric: DistanceMetric,
) -> Result<ProjectionResult> {
    let words = match end {
        PoleEnd::Strong => &poles.strong,
        PoleEnd::Weak => &poles.weak,
    };
    let centroid = single_end_direction(store, words)?;
    score_items(
        store,
        category,
        &poles.name,
        items,
        Method::Distance(metric, end),
        |v| match metric {
            DistanceMetric::Euclidean => Ok(linalg::euclidean(v, &centroid)),
            DistanceMetric::Cosine => linalg::cosine(v, &centroid)
                .map(|c| 1.0 - c)
                .ok_or_else(|| Error::invalid("cosine distance with a zero-norm vector")),
        },
    )
}

#[derive(Clone, Debug)]
pub struct PcaFit {
    pub mean: Vec<f64>,
    /// Unit principal axes, largest variance first.
    pub components: Vec<Vec<f64>>,
    /// Variance along each kept axis.
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    /// Input points in component coordinates.
    pub coords: Vec<Vec<f64>>,
}

impl PcaFit {
    pub fn transform(&self, point: &[f64]) -> Vec<f64> {
        let centered = linalg::sub(point, &self.mean);
        self.components.iter().map(|c| dot(&centered, c)).collect()
    }
}

/// Mean-centers the points and projects them on the top `k` eigenvectors of
/// their sample covariance. Each axis is signed so its largest-magnitude
/// loading is positive.
pub fn pca_reduce(points: &[Vec<f64>], k: usize) -> Result<PcaFit> {
    let n = points.len();
    if k == 0 {
        return Err(Error::invalid("PCA needs k >= 1"));
    }
    if n < k + 1 {
        return Err(Error::invalid(format!(
            "PCA with k={k} needs at least {} points, got {n}",
            k + 1
        )));
    }
    let dim = points[0].len();
    if dim < k || points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid(format!(
            "PCA with k={k} needs equal-length points of dimension >= {k}"
        )));
    }
    let mean = linalg::centroid(points);
    let centered = DMatrix::from_fn(n, dim, |i, j| points[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut components = Vec::with_capacity(k);
    let mut explained = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let mut lead = 0;
        for (i, v) in axis.iter().enumerate() {
            if v.abs() > axis[lead].abs() {
                lead = i;
            }
        }
        if axis[lead] < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(axis);
        explained.push(eig.eigenvalues[idx].max(0.0));
    }

    let mut fit = PcaFit {
        mean,
        components,
        explained_variance: explained,
        total_variance,
        coords: Vec::new(),
    };
    fit.coords = points.iter().map(|p| fit.transform(p)).collect();
    Ok(fit)
}

#[derive(Clone, Debug, Serialize)]
pub struct PcaView {
    pub category: String,
    pub feature: String,
    pub items: Vec<(String, Vec<f64>)>,
    pub strong_end: Vec<f64>,
    pub weak_end: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub unresolved: Vec<String>,
}

/// Low-dimensional coordinates of the items and both pole centroids, for
/// drawing the scale as a segment among the items. The centroids are part of
/// the PCA fit.
pub fn pca_viz(
    store: &EmbeddingStore,
    category: &str,
    items: &[String],
    subspace: &FeatureSubspace,
    k: usize,
) -> Result<PcaView> {
    if !(k == 2 || k == 3) {
        return Err(Error::invalid(format!("visualization needs k = 2 or 3, got {k}")));
    }
    if subspace.strong_words.is_empty() || subspace.weak_words.is_empty() {
        return Err(Error::invalid(format!(
            "subspace {:?} has no pole words to place",
            subspace.name
        )));
    }
    let (resolved, unresolved) = resolve_items(store, items);
    if resolved.len() < k + 1 {
        return Err(Error::invalid(format!(
            "visualization with k={k} needs at least {} resolvable items",
            k + 1
        )));
    }
    let strong = single_end_direction(store, &subspace.strong_words)?;
    let weak = single_end_direction(store, &subspace.weak_words)?;
    let mut points: Vec<Vec<f64>> = resolved.iter().map(|(_, r)| r.vector.clone()).collect();
    points.push(strong);
    points.push(weak);
    let fit = pca_reduce(&points, k)?;
    let n = resolved.len();
    let ratio = fit
        .explained_variance
        .iter()
        .map(|v| if fit.total_variance > 0.0 { v / fit.total_variance } else { 0.0 })
        .collect();
    Ok(PcaView {
        category: category.to_string(),
        feature: subspace.name.clone(),
        items: resolved
            .into_iter()
            .map(|(item, _)| item)
            .zip(fit.coords[..n].iter().cloned())
            .collect(),
        strong_end: fit.coords[n].clone(),
        weak_end: fit.coords[n + 1].clone(),
        explained_variance_ratio: ratio,
        unresolved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subspace::build_subspace;

    fn store(rows: &[(&str, &[f32])]) -> EmbeddingStore {
        EmbeddingStore::from_rows(rows.iter().map(|(t, v)| (*t, v.to_vec())), "toy").unwrap()
    }

    fn items(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn projection_by_hand() {
        let s = store(&[("a", &[3.0, 4.0]), ("b", &[-1.0, 2.0]), ("c", &[0.0, 5.0])]);
        let dir = FeatureSubspace::from_direction("x", vec![1.0, 0.0]).unwrap();
        let r = project(&s, "toy", &items(&["a", "b"]), &dir).unwrap();
        assert_eq!(r.scores[0].raw, 3.0);
        assert_eq!(r.scores[1].raw, -1.0);
        let h = 1.0 / 2f64.sqrt();
        assert!((r.scores[0].z - h).abs() < 1e-12);
        assert!((r.scores[1].z + h).abs() < 1e-12);

        let r = project(&s, "toy", &items(&["a", "c"]), &dir).unwrap();
        assert_eq!(r.get("c").unwrap().raw, 0.0);
    }

    #[test]
    fn projection_drops_unresolved_and_needs_two() {
        let s = store(&[("a", &[3.0, 4.0]), ("b", &[-1.0, 2.0])]);
        let dir = FeatureSubspace::from_direction("x", vec![1.0, 0.0]).unwrap();
        let r = project(&s, "toy", &items(&["a", "zz", "b"]), &dir).unwrap();
        assert_eq!(r.unresolved, ["zz"]);
        assert_eq!(r.scores.len(), 2);
        assert!(project(&s, "toy", &items(&["a", "zz"]), &dir).is_err());
    }

    #[test]
    fn zero_variance_projection_errors() {
        let s = store(&[("a", &[1.0, 4.0]), ("b", &[1.0, 2.0])]);
        let dir = FeatureSubspace::from_direction("x", vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            project(&s, "toy", &items(&["a", "b"]), &dir),
            Err(Error::ZeroVariance(_))
        ));
    }

    #[test]
    fn scale_and_negation() {
        let s = store(&[
            ("big", &[1.0, 0.5, 0.0]),
            ("small", &[-1.0, 0.0, 0.2]),
            ("a", &[0.3, 0.1, 0.9]),
            ("b", &[2.0, -0.4, 0.1]),
            ("c", &[-0.7, 0.8, 0.3]),
        ]);
        let sub = build_subspace(&s, &FeaturePoles::new("size", ["big"], ["small"])).unwrap();
        let its = items(&["a", "b", "c"]);
        let base = project(&s, "t", &its, &sub).unwrap();
        let scaled = FeatureSubspace::from_direction(
            "size",
            sub.direction.iter().map(|v| v * 37.5).collect(),
        )
        .unwrap();
        let neg =
            FeatureSubspace::from_direction("size", sub.direction.iter().map(|v| -v).collect())
                .unwrap();
        let rs = project(&s, "t", &its, &scaled).unwrap();
        let rn = project(&s, "t", &its, &neg).unwrap();
        for i in 0..3 {
            assert!((base.scores[i].z - rs.scores[i].z).abs() < 1e-9);
            assert!((base.scores[i].z + rn.scores[i].z).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_controls() {
        let s = store(&[
            ("hot", &[0.0, 2.0]),
            ("warm", &[0.0, 4.0]),
            ("cold", &[1.0, 0.0]),
            ("on", &[0.0, 3.0]),
            ("par", &[0.0, 9.0]),
            ("ortho", &[1.0, 0.0]),
        ]);
        let poles = FeaturePoles::new("temperature", ["hot", "warm"], ["cold"]);
        let its = items(&["on", "par", "ortho"]);
        let e = distance_control(&s, "t", &its, &poles, PoleEnd::Strong, DistanceMetric::Euclidean)
            .unwrap();
        assert_eq!(e.get("on").unwrap().raw, 0.0);
        let c = distance_control(&s, "t", &its, &poles, PoleEnd::Strong, DistanceMetric::Cosine)
            .unwrap();
        assert!(c.get("par").unwrap().raw.abs() < 1e-15);
        assert!((c.get("ortho").unwrap().raw - 1.0).abs() < 1e-15);
        assert_eq!(c.method.to_string(), "cosine_dist_strong");
    }

    #[test]
    fn zero_vector_under_cosine_errors() {
        let s = store(&[("p", &[1.0, 1.0]), ("z", &[0.0, 0.0]), ("a", &[1.0, 2.0])]);
        let poles = FeaturePoles::new("f", ["p"], ["a"]);
        assert!(distance_control(
            &s,
            "t",
            &items(&["z", "a"]),
            &poles,
            PoleEnd::Strong,
            DistanceMetric::Cosine
        )
        .is_err());
    }

    #[test]
    fn pca_exact_subspace_and_collinear() {
        // points in a 2-d affine plane inside R^4
        let base = [1.0, -2.0, 0.5, 3.0];
        let u = [1.0, 0.0, 1.0, 0.0];
        let v = [0.0, 2.0, 0.0, -1.0];
        let coeffs = [(0.0, 0.0), (1.0, 2.0), (-3.0, 0.5), (2.5, -1.0), (0.3, 0.7)];
        let pts: Vec<Vec<f64>> = coeffs
            .iter()
            .map(|(a, b)| (0..4).map(|i| base[i] + a * u[i] + b * v[i]).collect())
            .collect();
        let fit = pca_reduce(&pts, 2).unwrap();
        let mut resid = 0.0;
        for (p, c) in pts.iter().zip(&fit.coords) {
            for i in 0..4 {
                let rec = fit.mean[i] + c[0] * fit.components[0][i] + c[1] * fit.components[1][i];
                resid += (rec - p[i]).powi(2);
            }
        }
        let total_ss = fit.total_variance * (pts.len() as f64 - 1.0);
        assert!(resid < 1e-6 * total_ss);

        let line: Vec<Vec<f64>> = (0..3)
            .map(|t| vec![t as f64, 2.0 * t as f64, -(t as f64)])
            .collect();
        let fit = pca_reduce(&line, 2).unwrap();
        assert!(fit.explained_variance[1] < 1e-9 * fit.total_variance);
        assert!(pca_reduce(&line[..2], 2).is_err());
    }

    #[test]
    fn pca_sign_convention_and_determinism() {
        let pts: Vec<Vec<f64>> = (0..6)
            .map(|i| {
                let t = i as f64;
                vec![t.sin(), (2.0 * t).cos(), 0.3 * t, -0.1 * t * t]
            })
            .collect();
        let a = pca_reduce(&pts, 3).unwrap();
        let b = pca_reduce(&pts, 3).unwrap();
        for comp in &a.components {
            let lead = comp.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(lead > 0.0);
        }
        for (x, y) in a.coords.iter().flatten().zip(b.coords.iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
