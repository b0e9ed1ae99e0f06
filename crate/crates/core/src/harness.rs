//! Full runs over many experiments: evaluation, reliability flagging, FDR,
//! summary statistics, control baselines, outlier sweeps, and the tables
//! behind each figure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Dataset, ExperimentId};
use crate::embed_store::{EmbeddingStore, DEFAULT_VOCAB_LIMIT};
use crate::error::{Error, Result};
use crate::evaluate::{
    evaluate_experiment, evaluate_projection, experiment_seed, sweep_from, EvalConfig,
    EvalReport, Evaluation, ItemPoint, SweepPoint, DEFAULT_MAX_REMOVE,
};
use crate::projection::{
    distance_control, project_single_end, DistanceMetric, PoleEnd, ProjectionResult,
};
use crate::ratings::{flag_low_reliability, load_ratings, RatingsTable, DEFAULT_RELIABILITY_THRESHOLD};
use crate::stats::{
    compare_schemes, fdr_by, iqr, median, PermutationConfig, DEFAULT_EXHAUSTIVE_LIMIT,
    DEFAULT_PERMUTATIONS,
};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub embeddings: Option<PathBuf>,
    pub vocab_limit: usize,
    pub n_perm: usize,
    pub fdr_q: f64,
    pub seed: u64,
    pub reliability_threshold: f64,
    pub max_outlier_removals: usize,
    pub norming_percentile: f64,
    pub exhaustive_limit: u64,
    pub out_dir: Option<PathBuf>,
    pub keep_going: bool,
    pub controls: bool,
    pub sweep: bool,
    pub svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            embeddings: None,
            vocab_limit: DEFAULT_VOCAB_LIMIT,
            n_perm: DEFAULT_PERMUTATIONS,
            fdr_q: 0.05,
            seed: 0,
            reliability_threshold: DEFAULT_RELIABILITY_THRESHOLD,
            max_outlier_removals: DEFAULT_MAX_REMOVE,
            norming_percentile: 75.0,
            exhaustive_limit: DEFAULT_EXHAUSTIVE_LIMIT,
            out_dir: None,
            keep_going: false,
            controls: true,
            sweep: true,
            svg: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vocab_limit == 0 {
            return bad("vocabulary limit must be positive".into());
        }
        if self.n_perm == 0 {
            return bad("number of permutations must be positive".into());
        }
        if !(self.fdr_q > 0.0 && self.fdr_q < 1.0) {
            return bad(format!("FDR level {} outside (0, 1)", self.fdr_q));
        }
        if !(self.reliability_threshold > 0.0) {
            return bad("reliability threshold must be positive".into());
        }
        if !(self.norming_percentile > 0.0 && self.norming_percentile < 100.0) {
            return bad(format!("percentile {} outside (0, 100)", self.norming_percentile));
        }
        Ok(())
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            n_perm: self.n_perm,
            seed: self.seed,
            exhaustive_limit: self.exhaustive_limit,
        }
    }
}

/// Control scoring schemes, oriented so larger means more of the feature.
pub const CONTROL_METHODS: [(&str, Control); 6] = [
    ("single_end_strong", Control::SingleEnd(PoleEnd::Strong)),
    ("single_end_weak", Control::SingleEnd(PoleEnd::Weak)),
    ("cosine_dist_strong", Control::Distance(DistanceMetric::Cosine, PoleEnd::Strong)),
    ("cosine_dist_weak", Control::Distance(DistanceMetric::Cosine, PoleEnd::Weak)),
    ("euclidean_dist_strong", Control::Distance(DistanceMetric::Euclidean, PoleEnd::Strong)),
    ("euclidean_dist_weak", Control::Distance(DistanceMetric::Euclidean, PoleEnd::Weak)),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    SingleEnd(PoleEnd),
    Distance(DistanceMetric, PoleEnd),
}

fn negated(mut p: ProjectionResult) -> ProjectionResult {
    for s in &mut p.scores {
        s.raw = -s.raw;
        s.z = -s.z;
    }
    p
}

/// Scores a category with a control scheme. Projections on the weak pole and
/// distances to the strong pole are negated.
pub fn control_projection(
    store: &EmbeddingStore,
    dataset: &Dataset,
    id: &ExperimentId,
    control: Control,
) -> Result<ProjectionResult> {
    let items = dataset.items(&id.category)?;
    let poles = dataset.poles(&id.feature)?;
    Ok(match control {
        Control::SingleEnd(end) => {
            let p = project_single_end(store, &id.category, items, poles, end)?;
            if end == PoleEnd::Weak { negated(p) } else { p }
        }
        Control::Distance(metric, end) => {
            let p = distance_control(store, &id.category, items, poles, end, metric)?;
            if end == PoleEnd::Strong { negated(p) } else { p }
        }
    })
}

/// Evaluates every control scheme for one experiment.
pub fn evaluate_controls(
    store: &EmbeddingStore,
    dataset: &Dataset,
    id: &ExperimentId,
    ratings: &RatingsTable,
    cfg: &EvalConfig,
) -> Result<Vec<EvalReport>> {
    CONTROL_METHODS
        .iter()
        .map(|&(name, control)| {
            let p = control_projection(store, dataset, id, control).map_err(|e| e.in_experiment(id))?;
            let mut report = evaluate_projection(&p, ratings, cfg)?.report;
            report.method = name.to_string();
            Ok(report)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub experiment: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryStats {
    pub n_pairs: usize,
    pub n_failed: usize,
    pub n_flagged: usize,
    pub n_retained: usize,
    pub median_r: f64,
    pub iqr_r: f64,
    pub median_oc_p: f64,
    pub iqr_oc_p: f64,
    pub median_adjusted_r: f64,
    pub median_adjusted_ocp: f64,
    pub median_is_r: f64,
    pub median_is_ocp: f64,
    pub n_r_above_half: usize,
    pub n_ocp_above_half: usize,
    pub n_significant_r: usize,
    pub n_significant_ocp: usize,
    pub n_significant_both: usize,
    pub fdr_q: f64,
    pub reliability_threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramBin {
    pub measure: String,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlComparison {
    pub method: String,
    pub measure: String,
    pub n: usize,
    pub median_projection: f64,
    pub median_control: f64,
    pub cohen_d: f64,
    pub p: f64,
    pub exhaustive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub k: usize,
    pub n_experiments: usize,
    pub median_r: f64,
    pub median_oc_p: f64,
    pub median_is_r: f64,
    pub median_is_ocp: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub summary: SummaryStats,
    /// Every evaluated experiment in pair order, including flagged ones.
    pub reports: Vec<EvalReport>,
    pub flagged: Vec<String>,
    pub failures: Vec<Failure>,
    pub histogram: Vec<HistogramBin>,
    pub points: Vec<ItemPoint>,
    pub controls: Vec<EvalReport>,
    pub comparisons: Vec<ControlComparison>,
    pub sweep: Vec<SweepPoint>,
    pub sweep_summary: Vec<SweepSummary>,
}

impl RunSummary {
    pub fn retained(&self) -> impl Iterator<Item = &EvalReport> {
        self.reports.iter().filter(|r| !r.low_reliability)
    }
}

struct ExperimentOutput {
    eval: Evaluation,
    controls: Vec<EvalReport>,
    sweep: Vec<SweepPoint>,
}

fn run_experiment(
    cfg: &RunConfig,
    store: &EmbeddingStore,
    dataset: &Dataset,
    id: &ExperimentId,
    ratings: &RatingsTable,
) -> Result<ExperimentOutput> {
    let ecfg = cfg.eval_config();
    let eval = evaluate_experiment(store, dataset, id, ratings, &ecfg)?;
    let controls = if cfg.controls {
        evaluate_controls(store, dataset, id, ratings, &ecfg)?
    } else {
        Vec::new()
    };
    let sweep = if cfg.sweep {
        sweep_from(&eval, cfg.max_outlier_removals).map_err(|e| e.in_experiment(id))?
    } else {
        Vec::new()
    };
    Ok(ExperimentOutput {
        eval,
        controls,
        sweep,
    })
}

/// Loads embeddings and one ratings file per pair (`<category>_<feature>.csv`
/// in `ratings_dir`), then runs [`run_with`].
pub fn run_all(cfg: &RunConfig, dataset: &Dataset, ratings_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let path = cfg
        .embeddings
        .as_ref()
        .ok_or_else(|| Error::Config("no embedding file given".into()))?;
    let store = EmbeddingStore::open(path, cfg.vocab_limit)?;
    let mut ratings = BTreeMap::new();
    let mut failures = Vec::new();
    for id in &dataset.pairs {
        let file = ratings_dir.join(format!("{}.csv", id.file_stem()));
        match load_ratings(&file) {
            Ok(t) if t.experiment == *id => {
                ratings.insert(id.clone(), t);
            }
            Ok(t) => failures.push((
                id.clone(),
                Error::invalid(format!("{} holds ratings for {}", file.display(), t.experiment)),
            )),
            Err(e) => failures.push((id.clone(), e)),
        }
    }
    if !cfg.keep_going {
        if let Some((id, e)) = failures.into_iter().next() {
            return Err(e.in_experiment(id));
        }
        return run_with(cfg, &store, dataset, &ratings);
    }
    let mut summary = run_with(cfg, &store, dataset, &ratings)?;
    let mut extra: Vec<Failure> = failures
        .into_iter()
        .map(|(id, e)| Failure {
            experiment: id.to_string(),
            error: e.to_string(),
        })
        .collect();
    summary.failures.retain(|f| !extra.iter().any(|x| x.experiment == f.experiment));
    summary.failures.append(&mut extra);
    summary.failures.sort_by(|a, b| a.experiment.cmp(&b.experiment));
    summary.summary.n_failed = summary.failures.len();
    if let Some(dir) = &cfg.out_dir {
        write_outputs(&summary, dir, cfg.svg)?;
    }
    Ok(summary)
}

/// Runs every pair in `dataset` against in-memory ratings.
pub fn run_with(
    cfg: &RunConfig,
    store: &EmbeddingStore,
    dataset: &Dataset,
    ratings: &BTreeMap<ExperimentId, RatingsTable>,
) -> Result<RunSummary> {
    cfg.validate()?;
    if dataset.pairs.is_empty() {
        return Err(Error::Config("the pair list is empty".into()));
    }
    let results: Vec<(ExperimentId, Result<ExperimentOutput>)> = dataset
        .pairs
        .par_iter()
        .map(|id| {
            let out = ratings
                .get(id)
                .ok_or_else(|| Error::invalid("no ratings loaded").in_experiment(id))
                .and_then(|t| run_experiment(cfg, store, dataset, id, t));
            (id.clone(), out)
        })
        .collect();

    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    for (id, res) in results {
        match res {
            Ok(o) => outputs.push(o),
            Err(e) if cfg.keep_going => {
                log::error!("{e}");
                failures.push(Failure {
                    experiment: id.to_string(),
                    error: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let summary = assemble(cfg, dataset.pairs.len(), outputs, failures)?;
    if let Some(dir) = &cfg.out_dir {
        write_outputs(&summary, dir, cfg.svg)?;
    }
    Ok(summary)
}

fn assemble(
    cfg: &RunConfig,
    n_pairs: usize,
    outputs: Vec<ExperimentOutput>,
    failures: Vec<Failure>,
) -> Result<RunSummary> {
    let mut reports: Vec<EvalReport> = outputs.iter().map(|o| o.eval.report.clone()).collect();
    let is_r: BTreeMap<String, f64> = reports
        .iter()
        .map(|r| (r.experiment.clone(), r.mean_is_r))
        .collect();
    let (_, flagged) = flag_low_reliability(&is_r, cfg.reliability_threshold);
    for r in &mut reports {
        r.low_reliability = flagged.contains(&r.experiment);
    }

    let kept: Vec<usize> = (0..reports.len()).filter(|&i| !reports[i].low_reliability).collect();
    if !kept.is_empty() {
        let p_r: Vec<f64> = kept.iter().map(|&i| reports[i].p_r).collect();
        let p_o: Vec<f64> = kept.iter().map(|&i| reports[i].p_ocp).collect();
        let fr = fdr_by(&p_r, cfg.fdr_q)?;
        let fo = fdr_by(&p_o, cfg.fdr_q)?;
        for (j, &i) in kept.iter().enumerate() {
            reports[i].fdr_p_r = Some(fr.adjusted[j]);
            reports[i].fdr_p_ocp = Some(fo.adjusted[j]);
            reports[i].significant = fr.reject[j] && fo.reject[j];
        }
    }

    let retained: Vec<&EvalReport> = kept.iter().map(|&i| &reports[i]).collect();
    let col = |f: &dyn Fn(&EvalReport) -> Option<f64>| -> Vec<f64> {
        retained.iter().filter_map(|r| f(r)).collect()
    };
    let r = col(&|x| Some(x.r));
    let oc = col(&|x| Some(x.oc_p));
    let count = |f: &dyn Fn(&EvalReport) -> bool| retained.iter().filter(|r| f(r)).count();
    let threshold_rejects = |p: Option<f64>| p.is_some_and(|p| p <= cfg.fdr_q);
    let summary = SummaryStats {
        n_pairs,
        n_failed: failures.len(),
        n_flagged: flagged.len(),
        n_retained: retained.len(),
        median_r: median(&r),
        iqr_r: iqr(&r),
        median_oc_p: median(&oc),
        iqr_oc_p: iqr(&oc),
        median_adjusted_r: median(&col(&|x| x.adjusted_r)),
        median_adjusted_ocp: median(&col(&|x| x.adjusted_ocp)),
        median_is_r: median(&col(&|x| Some(x.mean_is_r))),
        median_is_ocp: median(&col(&|x| Some(x.is_ocp))),
        n_r_above_half: count(&|x| x.r > 0.5),
        n_ocp_above_half: count(&|x| x.oc_p > 0.5),
        n_significant_r: count(&|x| threshold_rejects(x.fdr_p_r)),
        n_significant_ocp: count(&|x| threshold_rejects(x.fdr_p_ocp)),
        n_significant_both: count(&|x| x.significant),
        fdr_q: cfg.fdr_q,
        reliability_threshold: cfg.reliability_threshold,
    };

    let mut histogram = histogram_bins("r", &r, -1.0, 1.0, 20);
    histogram.extend(histogram_bins("oc_p", &oc, 0.0, 1.0, 20));
    histogram.extend(histogram_bins("adjusted_r", &col(&|x| x.adjusted_r), 0.0, 1.0, 20));
    histogram.extend(histogram_bins("adjusted_ocp", &col(&|x| x.adjusted_ocp), 0.0, 1.0, 20));

    let keep_exp = |e: &str| !flagged.iter().any(|f| f == e);
    let points: Vec<ItemPoint> = outputs
        .iter()
        .filter(|o| keep_exp(&o.eval.report.experiment))
        .flat_map(|o| o.eval.points.iter().cloned())
        .collect();
    let controls: Vec<EvalReport> = outputs.iter().flat_map(|o| o.controls.iter().cloned()).collect();
    let comparisons = compare_controls(cfg, &retained, &controls)?;
    let sweep: Vec<SweepPoint> = outputs
        .iter()
        .filter(|o| keep_exp(&o.eval.report.experiment))
        .flat_map(|o| o.sweep.iter().cloned())
        .collect();
    let sweep_summary = summarize_sweep(&sweep);

    Ok(RunSummary {
        summary,
        reports,
        flagged,
        failures,
        histogram,
        points,
        controls,
        comparisons,
        sweep,
        sweep_summary,
    })
}

/// Equal-width bins over `[lo, hi]`; the last bin is closed on the right.
pub fn histogram_bins(measure: &str, values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<HistogramBin> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| HistogramBin {
            measure: measure.to_string(),
            lower: lo + b as f64 * width,
            upper: lo + (b + 1) as f64 * width,
            count,
        })
        .collect()
}

fn compare_controls(
    cfg: &RunConfig,
    retained: &[&EvalReport],
    controls: &[EvalReport],
) -> Result<Vec<ControlComparison>> {
    if controls.is_empty() || retained.len() < 2 {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (method, _) in CONTROL_METHODS {
        for measure in ["r", "oc_p"] {
            let pick = |r: &EvalReport| if measure == "r" { r.r } else { r.oc_p };
            let full: BTreeMap<String, f64> =
                retained.iter().map(|r| (r.experiment.clone(), pick(r))).collect();
            let ctrl: BTreeMap<String, f64> = controls
                .iter()
                .filter(|c| c.method == method && full.contains_key(&c.experiment))
                .map(|c| (c.experiment.clone(), pick(c)))
                .collect();
            let pcfg = PermutationConfig {
                n_perm: cfg.n_perm,
                seed: experiment_seed(cfg.seed, &format!("controls/{method}/{measure}")),
                exhaustive_limit: cfg.exhaustive_limit,
            };
            let c = compare_schemes(&full, &ctrl, &pcfg)?;
            out.push(ControlComparison {
                method: method.to_string(),
                measure: measure.to_string(),
                n: c.n,
                median_projection: c.median_a,
                median_control: c.median_b,
                cohen_d: c.cohen_d,
                p: c.p,
                exhaustive: c.exhaustive,
            });
        }
    }
    Ok(out)
}

fn summarize_sweep(sweep: &[SweepPoint]) -> Vec<SweepSummary> {
    let mut by_k: BTreeMap<usize, Vec<&SweepPoint>> = BTreeMap::new();
    for p in sweep {
        by_k.entry(p.k).or_default().push(p);
    }
    by_k.into_iter()
        .map(|(k, ps)| {
            let m = |f: fn(&SweepPoint) -> f64| median(&ps.iter().map(|p| f(p)).collect::<Vec<_>>());
            SweepSummary {
                k,
                n_experiments: ps.len(),
                median_r: m(|p| p.r),
                median_oc_p: m(|p| p.oc_p),
                median_is_r: m(|p| p.mean_is_r),
                median_is_ocp: m(|p| p.is_ocp),
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes every table of a run into `dir`.
pub fn write_outputs(summary: &RunSummary, dir: &Path, svg: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(&dir.join("reports.csv"), &summary.reports)?;
    write_csv(&dir.join("summary.csv"), std::slice::from_ref(&summary.summary))?;
    write_csv(&dir.join("histogram.csv"), &summary.histogram)?;
    write_csv(&dir.join("scatter.csv"), &summary.points)?;
    write_csv(&dir.join("controls.csv"), &summary.controls)?;
    write_csv(&dir.join("control_comparison.csv"), &summary.comparisons)?;
    write_csv(&dir.join("sweep.csv"), &summary.sweep)?;
    write_csv(&dir.join("sweep_summary.csv"), &summary.sweep_summary)?;
    write_csv(&dir.join("failures.csv"), &summary.failures)?;
    let json = serde_json::to_string_pretty(&summary.summary)?;
    fs::write(dir.join("summary.json"), json).map_err(|e| Error::io(dir, e))?;
    if svg {
        let svg_dir = dir.join("svg");
        fs::create_dir_all(&svg_dir).map_err(|e| Error::io(&svg_dir, e))?;
        let mut by_exp: BTreeMap<&str, Vec<&ItemPoint>> = BTreeMap::new();
        for p in &summary.points {
            by_exp.entry(&p.experiment).or_default().push(p);
        }
        for (exp, pts) in by_exp {
            let path = svg_dir.join(format!("scatter_{}.svg", exp.replace('/', "_")));
            fs::write(&path, scatter_svg(exp, &pts)).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

/// A self-contained SVG scatter of model z (x) against human z (y).
pub fn scatter_svg(title: &str, points: &[&ItemPoint]) -> String {
    let (w, h, pad) = (400.0, 400.0, 40.0);
    let lim = points
        .iter()
        .flat_map(|p| [p.model_z.abs(), p.human_z.abs()])
        .fold(1.0f64, f64::max)
        .ceil();
    let sx = |v: f64| pad + (v + lim) / (2.0 * lim) * (w - 2.0 * pad);
    let sy = |v: f64| h - pad - (v + lim) / (2.0 * lim) * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray"/>"#, sx(-lim), sy(0.0), sx(lim), sy(0.0));
    let _ = writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray"/>"#, sx(0.0), sy(-lim), sx(0.0), sy(lim));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">model z</text>"#, w / 2.0, h - 8.0);
    let _ = writeln!(s, r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">human z</text>"#, h / 2.0, h / 2.0);
    for p in points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"><title>{}</title></circle>"#,
            sx(p.model_z),
            sy(p.human_z),
            escape(&p.item)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
