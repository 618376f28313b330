//! mcds: materialize machine-learning models over an ordered dataset and
//! answer range-scoped model queries by reusing what is already built.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mcds_core::bench::{run_bench, write_csv, BenchSpec, SizeDist};
use mcds_core::catalog::{Catalog, ModelId, ModelKind};
use mcds_core::datastore::{ingest_csv, DataStore, TargetKind};
use mcds_core::executor::{
    answer_query, explain, materialize_range, QueryConfig, QueryOptions,
};
use mcds_core::logreg::{theorem_bound, BoundInputs};
use mcds_core::planner::CostModel;
use mcds_core::synth::{synth_dataset, SynthKind, SynthSpec};
use mcds_core::IdRange;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "mcds", version, about = "Incremental model materialization and reuse")]
struct Cli {
    /// Dataset directory (data file, meta sidecar and catalog live here).
    #[arg(long, global = true, default_value = ".")]
    data: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct HyperParams {
    /// Regularization strength (ridge and logistic).
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    /// SGD learning rate.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// SGD passes over each chunk.
    #[arg(long, default_value_t = 1)]
    epochs: u32,
    /// Logistic chunk size l.
    #[arg(long, default_value_t = 10_000)]
    chunk_size: u64,
    /// Global seed (shuffling, synthesis, benchmarks).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl HyperParams {
    fn query_config(&self) -> QueryConfig {
        QueryConfig {
            lambda: self.lambda,
            alpha: self.alpha,
            epochs: self.epochs,
            seed: self.seed,
            chunk_size: self.chunk_size,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset in the datastore format.
    Synth {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        d: u32,
        /// regression | classification
        #[arg(long, default_value = "regression")]
        kind: String,
        #[arg(long, default_value_t = 2)]
        classes: u32,
        /// Target noise (regression).
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        /// Class blob separation (classification).
        #[arg(long, default_value_t = 3.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Ingest a headered CSV file.
    Ingest {
        #[arg(long)]
        csv: PathBuf,
        /// Name of the target column.
        #[arg(long)]
        target: String,
        /// regression | classification
        #[arg(long, default_value = "regression")]
        kind: String,
        /// Class count (classification; inferred when omitted).
        #[arg(long)]
        classes: Option<u32>,
    },
    /// Build a model over a range and store it in the catalog.
    Materialize {
        #[arg(long)]
        kind: String,
        /// Closed id range lo:hi.
        #[arg(long)]
        range: String,
        #[command(flatten)]
        hyper: HyperParams,
    },
    /// Answer a model-construction query.
    Query {
        #[arg(long)]
        kind: String,
        /// Closed id range lo:hi.
        #[arg(long)]
        range: String,
        /// Build from scratch, ignoring the catalog.
        #[arg(long)]
        no_reuse: bool,
        /// Do not materialize the produced model.
        #[arg(long)]
        no_materialize: bool,
        /// Print the plan without executing it.
        #[arg(long)]
        explain: bool,
        /// Output format: text | json
        #[arg(long, default_value = "text")]
        report: String,
        #[command(flatten)]
        hyper: HyperParams,
    },
    /// Inspect the catalog.
    Catalog {
        #[command(subcommand)]
        command: CatalogCommand,
    },
    /// Evaluate the mixture-vs-SGD distance bound.
    Bound {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        chunk_size: u64,
        #[arg(long)]
        query_size: u64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
    },
    /// Speedup-vs-coverage benchmark over a generated query set.
    Bench {
        #[arg(long)]
        kind: String,
        /// Comma-separated coverage percentages, e.g. 0,20,40,60,80,90.
        #[arg(long, default_value = "0,20,40,60,80,90")]
        coverage: String,
        /// fixed:K | uniform:LO:HI | normal:MEAN:SD
        #[arg(long, default_value = "normal:50000:12500")]
        model_size: String,
        #[arg(long, default_value = "normal:50000:12500")]
        query_size: String,
        #[arg(long, default_value_t = 200)]
        queries: usize,
        /// Timed passes over the query set per coverage level.
        #[arg(long, default_value_t = 2)]
        repeats: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also run the query set concurrently and verify identical results.
        #[arg(long)]
        parallel: bool,
        #[command(flatten)]
        hyper: HyperParams,
    },
}

#[derive(Subcommand)]
enum CatalogCommand {
    /// List all materialized models.
    List,
    /// Show one model's descriptor and payload size.
    Show { id: u64 },
    /// Coverage percentage for one model kind.
    Coverage {
        #[arg(long)]
        kind: String,
    },
}

fn catalog_dir(data: &Path) -> PathBuf {
    data.join("catalog")
}

fn parse_kind(kind: &str) -> Result<ModelKind> {
    Ok(kind.parse::<ModelKind>()?)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth {
            n,
            d,
            kind,
            classes,
            noise,
            separation,
            seed,
        } => {
            let kind = match kind.parse::<TargetKind>()? {
                TargetKind::Regression => SynthKind::Regression { noise },
                TargetKind::Classification => SynthKind::Classification {
                    classes,
                    separation,
                },
            };
            let meta = synth_dataset(&cli.data, &SynthSpec { n, d, seed, kind })
                .context("synthesizing dataset")?;
            println!(
                "wrote {} records (d={}, {}) to {}",
                meta.n,
                meta.d,
                meta.target_kind,
                cli.data.display()
            );
        }
        Command::Ingest {
            csv,
            target,
            kind,
            classes,
        } => {
            let kind = kind.parse::<TargetKind>()?;
            let meta = ingest_csv(&cli.data, &csv, &target, kind, classes)
                .context("ingesting csv")?;
            println!(
                "ingested {} records (d={}, {}) from {}",
                meta.n,
                meta.d,
                meta.target_kind,
                csv.display()
            );
        }
        Command::Materialize { kind, range, hyper } => {
            let kind = parse_kind(&kind)?;
            let range = IdRange::parse(&range)?;
            let store = DataStore::open(&cli.data)?;
            let catalog = Catalog::open(&catalog_dir(&cli.data))?;
            let ids = materialize_range(range, kind, &store, &catalog, &hyper.query_config())?;
            for id in ids {
                println!("materialized {kind} {range} as {id}");
            }
        }
        Command::Query {
            kind,
            range,
            no_reuse,
            no_materialize,
            explain: explain_only,
            report,
            hyper,
        } => {
            let kind = parse_kind(&kind)?;
            let query = IdRange::parse(&range)?;
            let store = DataStore::open(&cli.data)?;
            let catalog = Catalog::open(&catalog_dir(&cli.data))?;
            let cost_model = CostModel::calibrate(&store);
            let cfg = hyper.query_config();

            if explain_only {
                let mut relevant = catalog.relevant_models(query, kind);
                if kind == ModelKind::LogregChunk {
                    relevant.retain(|e| {
                        e.descriptor.range.lo % cfg.chunk_size == 0
                            && e.descriptor.range.len() == cfg.chunk_size
                    });
                }
                let mode = if kind == ModelKind::LogregChunk {
                    mcds_core::planner::GraphMode::Directed
                } else {
                    mcds_core::planner::GraphMode::Undirected
                };
                let graph = mcds_core::planner::generate_graph(&relevant, query, &cost_model, mode);
                let plan = mcds_core::planner::optimal_path(&graph)?;
                print!(
                    "{}",
                    mcds_core::planner::render_plan(
                        &plan,
                        query,
                        cost_model.fetch_cost(query.len())
                    )
                );
                return Ok(());
            }

            let result = answer_query(
                query,
                kind,
                &store,
                &catalog,
                &cost_model,
                &cfg,
                QueryOptions {
                    no_reuse,
                    no_materialize,
                },
            )?;
            match report.as_str() {
                "json" => println!("{}", result.to_json()?),
                "text" => {
                    print!("{}", explain(&result));
                    if let Some(w) = result.model.weights() {
                        println!("weights: {w:?}");
                    }
                    if let Some(p) = result.model.nb_params() {
                        println!("priors: {:?}", p.priors());
                    }
                    if let Some(id) = result.materialized {
                        println!("materialized result as {id}");
                    }
                    println!(
                        "timings ms: plan {:.3} io {:.3} merge {:.3} train {:.3} total {:.3}",
                        result.timings.plan_ms,
                        result.timings.io_ms,
                        result.timings.merge_ms,
                        result.timings.train_ms,
                        result.timings.total_ms
                    );
                }
                other => bail!("unknown report format {other:?}"),
            }
        }
        Command::Catalog { command } => {
            let catalog = Catalog::open(&catalog_dir(&cli.data))?;
            match command {
                CatalogCommand::List => {
                    for entry in catalog.all_entries() {
                        println!(
                            "{}\t{}\t{}\t{} bytes",
                            entry.descriptor.id,
                            entry.descriptor.kind,
                            entry.descriptor.range,
                            entry.payload_bytes
                        );
                    }
                }
                CatalogCommand::Show { id } => {
                    let (descriptor, payload) = catalog.load(ModelId(id))?;
                    println!(
                        "{}\t{}\t{}\t{} bytes (checksum ok)",
                        descriptor.id,
                        descriptor.kind,
                        descriptor.range,
                        payload.len()
                    );
                }
                CatalogCommand::Coverage { kind } => {
                    let kind = parse_kind(&kind)?;
                    let store = DataStore::open(&cli.data)?;
                    println!(
                        "{:.2}%",
                        catalog.coverage(kind, store.meta().n)
                    );
                }
            }
        }
        Command::Bound {
            r,
            lambda,
            chunk_size,
            query_size,
            delta,
        } => {
            let inputs = BoundInputs::new(r, lambda, chunk_size, query_size, delta)?;
            println!("{}", theorem_bound(&inputs)?);
        }
        Command::Bench {
            kind,
            coverage,
            model_size,
            query_size,
            queries,
            repeats,
            out,
            parallel,
            hyper,
        } => {
            let kind = parse_kind(&kind)?;
            let coverage_targets: Vec<f64> = coverage
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .with_context(|| format!("bad coverage value {t:?}"))
                })
                .collect::<Result<_>>()?;
            if coverage_targets.iter().any(|c| !(0.0..=100.0).contains(c)) {
                bail!("coverage percentages must be within [0, 100]");
            }
            let store = DataStore::open(&cli.data)?;
            let spec = BenchSpec {
                kind,
                coverage_targets,
                model_size: SizeDist::parse(&model_size)?,
                query_size: SizeDist::parse(&query_size)?,
                query_count: queries,
                timing_repeats: repeats,
                seed: hyper.seed,
                cfg: hyper.query_config(),
                parallel,
            };
            let work = cli.data.join("bench");
            let result = run_bench(&store, &work, &spec)?;
            match out {
                Some(path) => {
                    let file = std::fs::File::create(&path)?;
                    write_csv(&result, file)?;
                    println!("wrote {}", path.display());
                }
                None => write_csv(&result, std::io::stdout().lock())?,
            }
        }
    }
    Ok(())
}
