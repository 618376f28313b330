//! Plan execution and the end-to-end query path.
//!
//! For the additive model families (regression, naive Bayes) execution is a
//! running signed accumulation of per-step statistics in plan order,
//! followed by one parameter extraction. The order is mathematically
//! irrelevant but fixed, so results are deterministic. Logistic plans
//! delegate to the chunked mixture build, whose reuse decisions always
//! coincide with the directed plan's model steps under the default cost
//! model.

use crate::catalog::{Catalog, ModelId, ModelKind};
use crate::datastore::{DataStore, TargetKind};
use crate::error::{Error, Result};
use crate::linreg::{self, SufficientStats};
use crate::logreg::{self, MixtureModel, SgdConfig};
use crate::naive_bayes::{GaussianClassStats, MultinomialClassStats, NbParameters};
use crate::planner::{
    self, generate_graph, optimal_path, validate_telescoping, CostModel, EdgeSource,
    ExecutionPlan, GraphMode,
};
use crate::range::IdRange;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Per-query hyperparameters shared by all model kinds.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QueryConfig {
    /// Ridge / logistic regularization strength.
    pub lambda: f64,
    pub alpha: f64,
    pub epochs: u32,
    pub seed: u64,
    /// Logistic chunk size l.
    pub chunk_size: u64,
}

impl Default for QueryConfig {
    fn default() -> Self {
        QueryConfig {
            lambda: 1e-3,
            alpha: 0.05,
            epochs: 1,
            seed: 0,
            chunk_size: 10_000,
        }
    }
}

impl QueryConfig {
    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            alpha: self.alpha,
            lambda: self.lambda,
            epochs: self.epochs,
            shuffle_seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct QueryOptions {
    /// Skip planning and build from scratch.
    pub no_reuse: bool,
    /// Do not materialize anything this query produces.
    pub no_materialize: bool,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct Timings {
    pub plan_ms: f64,
    pub io_ms: f64,
    pub merge_ms: f64,
    pub train_ms: f64,
    pub total_ms: f64,
}

/// The fitted model a query produces.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum FittedModel {
    LinReg {
        stats: SufficientStats,
        weights: Vec<f64>,
        lambda: f64,
    },
    NbGaussian {
        stats: GaussianClassStats,
        params: NbParameters,
    },
    NbMultinomial {
        stats: MultinomialClassStats,
        params: NbParameters,
    },
    Logreg {
        mixture: MixtureModel,
    },
}

impl FittedModel {
    /// Weight vector, for the kinds that have one.
    pub fn weights(&self) -> Option<&[f64]> {
        match self {
            FittedModel::LinReg { weights, .. } => Some(weights),
            FittedModel::Logreg { mixture } => Some(&mixture.weights),
            _ => None,
        }
    }

    pub fn nb_params(&self) -> Option<&NbParameters> {
        match self {
            FittedModel::NbGaussian { params, .. } => Some(params),
            FittedModel::NbMultinomial { params, .. } => Some(params),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub query: IdRange,
    pub kind: ModelKind,
    pub model: FittedModel,
    pub timings: Timings,
    pub steps_executed: usize,
    pub bytes_fetched: u64,
    /// The executed plan, when one was computed.
    pub plan: Option<ExecutionPlan>,
    /// Estimated cost of the one-fetch baseline plan, for explain output.
    pub baseline_cost_estimate: Option<f64>,
    /// Id of the materialized query result, when materialization ran.
    pub materialized: Option<ModelId>,
}

impl ExecutionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_query_bounds(store: &DataStore, query: IdRange) -> Result<()> {
    let n = store.meta().n;
    if n == 0 || query.hi > n - 1 {
        return Err(Error::RangeOutOfBounds {
            lo: query.lo,
            hi: query.hi,
            n,
        });
    }
    Ok(())
}

fn class_count(store: &DataStore) -> Result<usize> {
    if store.meta().target_kind != TargetKind::Classification {
        return Err(Error::InvalidArgument(
            "classification model kinds need a classification dataset".into(),
        ));
    }
    Ok(store.meta().class_count as usize)
}

/// Signed accumulator over plan steps, generic in the statistic type.
struct StepRun<'a> {
    store: &'a DataStore,
    catalog: &'a Catalog,
    io_ms: f64,
    merge_ms: f64,
    bytes_fetched: u64,
}

impl<'a> StepRun<'a> {
    fn new(store: &'a DataStore, catalog: &'a Catalog) -> Self {
        StepRun {
            store,
            catalog,
            io_ms: 0.0,
            merge_ms: 0.0,
            bytes_fetched: 0,
        }
    }

    fn run<S>(
        &mut self,
        plan: &ExecutionPlan,
        mut acc: S,
        load: impl Fn(&[u8], IdRange) -> Result<S>,
        compute: impl Fn(&crate::datastore::RowBlock) -> Result<S>,
        add: impl Fn(&mut S, &S, linreg::Sign) -> Result<()>,
    ) -> Result<S> {
        for step in &plan.steps {
            let delta = match step.source {
                EdgeSource::Model(id) => {
                    let io = Instant::now();
                    let (descriptor, payload) = self.catalog.load(id)?;
                    self.io_ms += io.elapsed().as_secs_f64() * 1e3;
                    self.bytes_fetched += payload.len() as u64;
                    if descriptor.range != step.range {
                        return Err(Error::InvalidPlan(format!(
                            "model {id} covers {} but the plan step covers {}",
                            descriptor.range, step.range
                        )));
                    }
                    load(&payload, step.range)?
                }
                EdgeSource::Fetch => {
                    let io = Instant::now();
                    let block = self.store.fetch_id_range(step.range)?;
                    self.io_ms += io.elapsed().as_secs_f64() * 1e3;
                    self.bytes_fetched += block.byte_len();
                    let merge = Instant::now();
                    let s = compute(&block)?;
                    self.merge_ms += merge.elapsed().as_secs_f64() * 1e3;
                    s
                }
            };
            let merge = Instant::now();
            add(&mut acc, &delta, step.sign)?;
            self.merge_ms += merge.elapsed().as_secs_f64() * 1e3;
        }
        Ok(acc)
    }
}

/// Executes a plan for `query`. The plan must telescope to exactly the
/// query range; additive kinds validate that up front.
pub fn execute(
    plan: &ExecutionPlan,
    query: IdRange,
    kind: ModelKind,
    store: &DataStore,
    catalog: &Catalog,
    cfg: &QueryConfig,
    materialize_chunks: bool,
) -> Result<ExecutionReport> {
    check_query_bounds(store, query)?;
    let start = Instant::now();
    let d = store.meta().d as usize;

    if kind == ModelKind::LogregChunk {
        let (mixture, stats) = logreg::incremental_logreg(
            store,
            Some(catalog),
            query,
            &cfg.sgd(),
            cfg.chunk_size,
            materialize_chunks,
        )?;
        return Ok(ExecutionReport {
            query,
            kind,
            model: FittedModel::Logreg { mixture },
            timings: Timings {
                plan_ms: 0.0,
                io_ms: stats.io_ms,
                merge_ms: 0.0,
                train_ms: stats.train_ms,
                total_ms: start.elapsed().as_secs_f64() * 1e3,
            },
            steps_executed: plan.steps.len(),
            bytes_fetched: stats.bytes_fetched,
            plan: Some(plan.clone()),
            baseline_cost_estimate: None,
            materialized: None,
        });
    }

    if !validate_telescoping(plan, query) {
        return Err(Error::InvalidPlan(format!(
            "steps do not telescope to the query range {query}"
        )));
    }

    let mut run = StepRun::new(store, catalog);
    let (model, steps_executed) = match kind {
        ModelKind::LinReg => {
            let stats = run.run(
                plan,
                SufficientStats::zeros(d),
                |payload, expect_range| {
                    let (range, stats) = SufficientStats::from_payload(payload)?;
                    if range != expect_range {
                        return Err(Error::InvalidPlan(format!(
                            "payload range {range} does not match step range {expect_range}"
                        )));
                    }
                    Ok(stats)
                },
                |block| SufficientStats::from_rows(block.iter(), d),
                |acc, delta, sign| acc.accumulate(delta, sign),
            )?;
            stats.check_counts()?;
            let merge = Instant::now();
            let weights = linreg::solve_weights(&stats, cfg.lambda)?;
            run.merge_ms += merge.elapsed().as_secs_f64() * 1e3;
            (
                FittedModel::LinReg {
                    stats,
                    weights,
                    lambda: cfg.lambda,
                },
                plan.steps.len(),
            )
        }
        ModelKind::NbGaussian => {
            let c = class_count(store)?;
            let stats = run.run(
                plan,
                GaussianClassStats::zeros(c, d),
                |payload, _| GaussianClassStats::from_payload(payload),
                |block| GaussianClassStats::from_rows(block.iter(), c, d),
                |acc, delta, sign| acc.accumulate(delta, sign),
            )?;
            stats.check_counts()?;
            let merge = Instant::now();
            let params = stats.parameters()?;
            run.merge_ms += merge.elapsed().as_secs_f64() * 1e3;
            (FittedModel::NbGaussian { stats, params }, plan.steps.len())
        }
        ModelKind::NbMultinomial => {
            let c = class_count(store)?;
            let stats = run.run(
                plan,
                MultinomialClassStats::zeros(c, d),
                |payload, _| MultinomialClassStats::from_payload(payload),
                |block| MultinomialClassStats::from_rows(block.iter(), c, d),
                |acc, delta, sign| acc.accumulate(delta, sign),
            )?;
            stats.check_counts()?;
            let merge = Instant::now();
            let params = stats.parameters()?;
            run.merge_ms += merge.elapsed().as_secs_f64() * 1e3;
            (
                FittedModel::NbMultinomial { stats, params },
                plan.steps.len(),
            )
        }
        ModelKind::LogregChunk => unreachable!(),
    };

    Ok(ExecutionReport {
        query,
        kind,
        model,
        timings: Timings {
            plan_ms: 0.0,
            io_ms: run.io_ms,
            merge_ms: run.merge_ms,
            train_ms: 0.0,
            total_ms: start.elapsed().as_secs_f64() * 1e3,
        },
        steps_executed,
        bytes_fetched: run.bytes_fetched,
        plan: Some(plan.clone()),
        baseline_cost_estimate: None,
        materialized: None,
    })
}

/// From-scratch build: one full-range fetch plus a direct fit. The
/// reference point for all speedup measurements.
pub fn baseline_build(
    query: IdRange,
    kind: ModelKind,
    store: &DataStore,
    cfg: &QueryConfig,
) -> Result<ExecutionReport> {
    check_query_bounds(store, query)?;
    let start = Instant::now();
    let d = store.meta().d as usize;
    let mut timings = Timings::default();

    let (model, bytes) = match kind {
        ModelKind::LogregChunk => {
            let io = Instant::now();
            let block = store.fetch_id_range(query)?;
            timings.io_ms = io.elapsed().as_secs_f64() * 1e3;
            let train = Instant::now();
            let chunk =
                logreg::train_chunk_from_block(&block, &cfg.sgd().with_chunk_seed(query.lo), query)?;
            timings.train_ms = train.elapsed().as_secs_f64() * 1e3;
            (
                FittedModel::Logreg {
                    mixture: MixtureModel {
                        weights: chunk.weights,
                        contributing: vec![query],
                        chunk_size: query.len(),
                    },
                },
                block.byte_len(),
            )
        }
        ModelKind::LinReg => {
            let io = Instant::now();
            let block = store.fetch_id_range(query)?;
            timings.io_ms = io.elapsed().as_secs_f64() * 1e3;
            let merge = Instant::now();
            let stats = SufficientStats::from_rows(block.iter(), d)?;
            let weights = linreg::solve_weights(&stats, cfg.lambda)?;
            timings.merge_ms = merge.elapsed().as_secs_f64() * 1e3;
            (
                FittedModel::LinReg {
                    stats,
                    weights,
                    lambda: cfg.lambda,
                },
                block.byte_len(),
            )
        }
        ModelKind::NbGaussian => {
            let c = class_count(store)?;
            let io = Instant::now();
            let block = store.fetch_id_range(query)?;
            timings.io_ms = io.elapsed().as_secs_f64() * 1e3;
            let merge = Instant::now();
            let stats = GaussianClassStats::from_rows(block.iter(), c, d)?;
            let params = stats.parameters()?;
            timings.merge_ms = merge.elapsed().as_secs_f64() * 1e3;
            (FittedModel::NbGaussian { stats, params }, block.byte_len())
        }
        ModelKind::NbMultinomial => {
            let c = class_count(store)?;
            let io = Instant::now();
            let block = store.fetch_id_range(query)?;
            timings.io_ms = io.elapsed().as_secs_f64() * 1e3;
            let merge = Instant::now();
            let stats = MultinomialClassStats::from_rows(block.iter(), c, d)?;
            let params = stats.parameters()?;
            timings.merge_ms = merge.elapsed().as_secs_f64() * 1e3;
            (
                FittedModel::NbMultinomial { stats, params },
                block.byte_len(),
            )
        }
    };

    timings.total_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(ExecutionReport {
        query,
        kind,
        model,
        timings,
        steps_executed: 1,
        bytes_fetched: bytes,
        plan: None,
        baseline_cost_estimate: None,
        materialized: None,
    })
}

fn result_payload(model: &FittedModel, query: IdRange) -> Result<Option<Vec<u8>>> {
    Ok(match model {
        FittedModel::LinReg { stats, .. } => Some(stats.to_payload(query)?),
        FittedModel::NbGaussian { stats, .. } => Some(stats.to_payload()?),
        FittedModel::NbMultinomial { stats, .. } => Some(stats.to_payload()?),
        // Logistic materialization happens per grid chunk during the build.
        FittedModel::Logreg { .. } => None,
    })
}

/// End-to-end query: relevant models, query graph, shortest path, plan
/// execution, and (by default) materialization of the produced model.
pub fn answer_query(
    query: IdRange,
    kind: ModelKind,
    store: &DataStore,
    catalog: &Catalog,
    cost_model: &CostModel,
    cfg: &QueryConfig,
    opts: QueryOptions,
) -> Result<ExecutionReport> {
    check_query_bounds(store, query)?;
    let start = Instant::now();

    let mut report = if opts.no_reuse {
        baseline_build(query, kind, store, cfg)?
    } else {
        let plan_start = Instant::now();
        let mut relevant = catalog.relevant_models(query, kind);
        if kind == ModelKind::LogregChunk {
            relevant.retain(|e| {
                e.descriptor.range.lo % cfg.chunk_size == 0
                    && e.descriptor.range.len() == cfg.chunk_size
            });
        }
        let mode = if kind == ModelKind::LogregChunk {
            GraphMode::Directed
        } else {
            GraphMode::Undirected
        };
        let graph = generate_graph(&relevant, query, cost_model, mode);
        let plan = match optimal_path(&graph) {
            Ok(plan) => plan,
            Err(Error::NoPlan) => ExecutionPlan::baseline(query, cost_model),
            Err(e) => return Err(e),
        };
        let plan_ms = plan_start.elapsed().as_secs_f64() * 1e3;
        let mut report = execute(
            plan.as_ref(),
            query,
            kind,
            store,
            catalog,
            cfg,
            !opts.no_materialize,
        )?;
        report.timings.plan_ms = plan_ms;
        report.baseline_cost_estimate = Some(cost_model.fetch_cost(query.len()));
        report
    };

    if !opts.no_materialize {
        if let Some(payload) = result_payload(&report.model, query)? {
            report.materialized = Some(catalog.materialize(kind, query, &payload)?);
        }
    }
    report.timings.total_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

/// Builds and materializes a model over `range` directly (no planning):
/// the seeding path for catalogs. Logistic ranges materialize every
/// grid-aligned chunk they fully contain.
pub fn materialize_range(
    range: IdRange,
    kind: ModelKind,
    store: &DataStore,
    catalog: &Catalog,
    cfg: &QueryConfig,
) -> Result<Vec<ModelId>> {
    check_query_bounds(store, range)?;
    let d = store.meta().d as usize;
    match kind {
        ModelKind::LinReg => {
            let block = store.fetch_id_range(range)?;
            let stats = SufficientStats::from_rows(block.iter(), d)?;
            Ok(vec![catalog.materialize(
                kind,
                range,
                &stats.to_payload(range)?,
            )?])
        }
        ModelKind::NbGaussian => {
            let c = class_count(store)?;
            let block = store.fetch_id_range(range)?;
            let stats = GaussianClassStats::from_rows(block.iter(), c, d)?;
            Ok(vec![catalog.materialize(kind, range, &stats.to_payload()?)?])
        }
        ModelKind::NbMultinomial => {
            let c = class_count(store)?;
            let block = store.fetch_id_range(range)?;
            let stats = MultinomialClassStats::from_rows(block.iter(), c, d)?;
            Ok(vec![catalog.materialize(kind, range, &stats.to_payload()?)?])
        }
        ModelKind::LogregChunk => {
            let mut ids = Vec::new();
            for piece in logreg::grid_pieces(range, cfg.chunk_size) {
                if !piece.aligned {
                    continue;
                }
                if catalog.find_exact(kind, piece.range).is_some() {
                    continue;
                }
                let block = store.fetch_id_range(piece.range)?;
                let chunk = logreg::train_chunk_from_block(
                    &block,
                    &cfg.sgd().with_chunk_seed(piece.range.lo),
                    piece.range,
                )?;
                ids.push(catalog.materialize(kind, piece.range, &chunk.to_payload())?);
            }
            if ids.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "range {range} contains no grid-aligned chunk of size {}",
                    cfg.chunk_size
                )));
            }
            Ok(ids)
        }
    }
}

impl AsRef<ExecutionPlan> for ExecutionPlan {
    fn as_ref(&self) -> &ExecutionPlan {
        self
    }
}

/// Renders plan and costs the way `query --explain` prints them.
pub fn explain(report: &ExecutionReport) -> String {
    match (&report.plan, report.baseline_cost_estimate) {
        (Some(plan), baseline) => planner::render_plan(
            plan,
            report.query,
            baseline.unwrap_or(f64::NAN),
        ),
        (None, _) => format!("plan for query {}: baseline build (no reuse)\n", report.query),
    }
}
