use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semproj::dataset::{load_norming, load_pair_list, Dataset, ExperimentId};
use semproj::evaluate::{evaluate_projection, sweep_from, EvalConfig};
use semproj::harness::{run_all, write_csv, RunConfig};
use semproj::{
    alignment_diagnostics, build_subspace, load_dataset, load_ratings, pca_viz, project,
    select_pairs, EmbeddingStore, Error, Result, DEFAULT_VOCAB_LIMIT,
};

#[derive(Parser)]
#[command(name = "semproj", version, about = "Semantic projection of word embeddings onto feature scales")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Embedding text file or binary cache.
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = DEFAULT_VOCAB_LIMIT)]
    vocab_limit: usize,
    #[arg(long, global = true, default_value_t = 10_000)]
    permutations: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 0.05)]
    fdr_q: f64,
    #[arg(long, global = true, default_value_t = semproj::stats::DEFAULT_EXHAUSTIVE_LIMIT)]
    exhaustive_limit: u64,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    keep_going: bool,
    /// Dataset JSON; the bundled dataset when omitted.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct Experiment {
    #[arg(long)]
    category: String,
    #[arg(long)]
    feature: String,
}

#[derive(Subcommand)]
enum Command {
    /// Convert an embedding text file to the binary cache format.
    Cache { embeddings: PathBuf, out: PathBuf },
    /// Within- and cross-feature alignment of pole difference lines.
    Diag,
    /// Project a category's items onto a feature scale.
    Project(Experiment),
    /// Evaluate one experiment against a ratings file.
    Eval {
        #[command(flatten)]
        exp: Experiment,
        #[arg(long)]
        ratings: PathBuf,
    },
    /// Single-end and distance baselines compared with the full projection
    /// across all pairs.
    Controls {
        #[arg(long)]
        ratings_dir: PathBuf,
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Remove the most extreme items one at a time.
    Sweep {
        #[command(flatten)]
        exp: Experiment,
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long, default_value_t = 10)]
        max_remove: usize,
    },
    /// PCA coordinates of items and scale endpoints.
    Viz {
        #[command(flatten)]
        exp: Experiment,
        #[arg(long, default_value_t = 2)]
        k: usize,
    },
    /// Choose category/feature pairs from norming means.
    SelectPairs {
        #[arg(long)]
        norming: PathBuf,
        #[arg(long)]
        manual: Option<PathBuf>,
        #[arg(long)]
        exclude: Option<PathBuf>,
        #[arg(long, default_value_t = 75.0)]
        percentile: f64,
    },
    /// Evaluate every pair and write all report tables.
    Run {
        #[arg(long)]
        ratings_dir: PathBuf,
        /// Newline-separated category/feature ids replacing the dataset's pairs.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        max_remove: usize,
        #[arg(long)]
        svg: bool,
        #[arg(long)]
        no_controls: bool,
        #[arg(long)]
        no_sweep: bool,
    },
}

impl Global {
    fn store(&self) -> Result<EmbeddingStore> {
        let path = self
            .embeddings
            .as_ref()
            .ok_or_else(|| Error::Config("--embeddings is required".into()))?;
        EmbeddingStore::open(path, self.vocab_limit)
    }

    fn dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            Some(p) => load_dataset(p),
            None => Dataset::bundled(),
        }
    }

    fn dataset_with(&self, pairs: &Option<PathBuf>) -> Result<Dataset> {
        let ds = self.dataset()?;
        match pairs {
            Some(p) => ds.with_pairs(load_pair_list(p)?),
            None => Ok(ds),
        }
    }

    fn run_config(&self) -> RunConfig {
        RunConfig {
            embeddings: self.embeddings.clone(),
            vocab_limit: self.vocab_limit,
            n_perm: self.permutations,
            fdr_q: self.fdr_q,
            seed: self.seed,
            exhaustive_limit: self.exhaustive_limit,
            out_dir: Some(self.out_dir.clone().unwrap_or_else(|| Path::new("semproj-out").to_path_buf())),
            keep_going: self.keep_going,
            ..RunConfig::default()
        }
    }

    fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            n_perm: self.permutations,
            seed: self.seed,
            exhaustive_limit: self.exhaustive_limit,
        }
    }

    fn output(&self, name: &str) -> Result<Option<PathBuf>> {
        match &self.out_dir {
            Some(d) => {
                std::fs::create_dir_all(d).map_err(|e| Error::Io { path: d.clone(), source: e })?;
                Ok(Some(d.join(name)))
            }
            None => Ok(None),
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn emit_csv<T: serde::Serialize>(global: &Global, name: &str, rows: &[T]) -> Result<()> {
    match global.output(name)? {
        Some(path) => {
            write_csv(&path, rows)?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in rows {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| Error::Io { path: "<stdout>".into(), source: e })?;
        }
    }
    Ok(())
}

fn read_ids(path: &Option<PathBuf>) -> Result<Vec<ExperimentId>> {
    path.as_deref().map(load_pair_list).unwrap_or(Ok(Vec::new()))
}

fn execute(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Cache { embeddings, out } => {
            let store = EmbeddingStore::open(embeddings, g.vocab_limit)?;
            store.save_cache(out)?;
            eprintln!("cached {} tokens x {} dims to {}", store.len(), store.dim(), out.display());
        }
        Command::Diag => {
            let report = alignment_diagnostics(&g.store()?, &g.dataset()?.feature_list())?;
            print_json(&report)?;
            if let Some(p) = g.output("diag.json")? {
                std::fs::write(&p, serde_json::to_string_pretty(&report)?)
                    .map_err(|e| Error::Io { path: p.clone(), source: e })?;
            }
        }
        Command::Project(e) => {
            let (store, ds) = (g.store()?, g.dataset()?);
            let sub = build_subspace(&store, ds.poles(&e.feature)?)?;
            let proj = project(&store, &e.category, ds.items(&e.category)?, &sub)?;
            match g.output(&format!("projection_{}_{}.csv", e.category, e.feature))? {
                Some(p) => {
                    let f = std::fs::File::create(&p).map_err(|err| Error::Io { path: p.clone(), source: err })?;
                    proj.write_csv(f)?;
                }
                None => proj.write_csv(std::io::stdout().lock())?,
            }
        }
        Command::Eval { exp, ratings } => {
            let id = ExperimentId::new(&exp.category, &exp.feature);
            let ev = semproj::evaluate_experiment(&g.store()?, &g.dataset()?, &id, &load_ratings(ratings)?, &g.eval_config())?;
            print_json(&ev.report)?;
            emit_csv(g, &format!("scatter_{}.csv", id.file_stem()), &ev.points)?;
        }
        Command::Controls { ratings_dir, pairs } => {
            let cfg = RunConfig { sweep: false, ..g.run_config() };
            let summary = run_all(&cfg, &g.dataset_with(pairs)?, ratings_dir)?;
            print_json(&summary.comparisons)?;
        }
        Command::Sweep { exp, ratings, max_remove } => {
            let (store, ds) = (g.store()?, g.dataset()?);
            let sub = build_subspace(&store, ds.poles(&exp.feature)?)?;
            let proj = project(&store, &exp.category, ds.items(&exp.category)?, &sub)?;
            let base = evaluate_projection(&proj, &load_ratings(ratings)?, &g.eval_config())?;
            let curve = sweep_from(&base, *max_remove)?;
            emit_csv(g, &format!("sweep_{}_{}.csv", exp.category, exp.feature), &curve)?;
        }
        Command::Viz { exp, k } => {
            let (store, ds) = (g.store()?, g.dataset()?);
            let sub = build_subspace(&store, ds.poles(&exp.feature)?)?;
            let view = pca_viz(&store, &exp.category, ds.items(&exp.category)?, &sub, *k)?;
            print_json(&view)?;
        }
        Command::SelectPairs { norming, manual, exclude, percentile } => {
            let sel = select_pairs(&load_norming(norming)?, &read_ids(manual)?, &read_ids(exclude)?, *percentile)?;
            eprintln!(
                "threshold {} (percentile {}, {} means): {} at or above, {} excluded, {} normed + {} manual - {} shared = {} pairs",
                sel.threshold,
                sel.percentile,
                sel.n_means,
                sel.above_threshold,
                sel.excluded.len(),
                sel.normed,
                sel.manual,
                sel.overlap,
                sel.pairs.len()
            );
            let rows: Vec<_> = sel
                .pairs
                .iter()
                .map(|p| (p.id.category.clone(), p.id.feature.clone(), p.route, p.mean_rating))
                .collect();
            let mut out = csv::Writer::from_writer(Vec::new());
            out.write_record(["category", "feature", "route", "mean_rating"])?;
            for r in &rows {
                out.serialize(r)?;
            }
            let bytes = out.into_inner().map_err(|e| Error::Config(e.to_string()))?;
            match g.output("pairs.csv")? {
                Some(p) => std::fs::write(&p, bytes).map_err(|e| Error::Io { path: p.clone(), source: e })?,
                None => std::io::stdout().write_all(&bytes).map_err(|e| Error::Io { path: "<stdout>".into(), source: e })?,
            }
        }
        Command::Run { ratings_dir, pairs, max_remove, svg, no_controls, no_sweep } => {
            let cfg = RunConfig {
                max_outlier_removals: *max_remove,
                controls: !no_controls,
                sweep: !no_sweep,
                svg: *svg,
                ..g.run_config()
            };
            let summary = run_all(&cfg, &g.dataset_with(pairs)?, ratings_dir)?;
            print_json(&summary.summary)?;
            for f in &summary.failures {
                eprintln!("failed: {}: {}", f.experiment, f.error);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
