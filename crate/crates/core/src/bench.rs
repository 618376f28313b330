//! Benchmark harness: speedup versus catalog coverage.
//!
//! Coverage targets run in ascending order against one growing catalog:
//! each level tops the previous one up with more uniformly placed models,
//! so the set of reusable models is nested across levels and measured
//! speedup depends on coverage, not on the luck of independent catalog
//! draws. The same query set is answered at every level, once from
//! scratch (the baseline) and once through the planner, with the pair
//! order alternating between timing repeats to cancel drift. Reported
//! speedup is `T0 / T` (baseline time over framework time), so 2 means
//! twice as fast. Queries run with materialization off so coverage stays
//! at its target while the set executes.
//!
//! Logistic runs additionally record training-accuracy differences
//! `A0 - A` between the direct-SGD baseline model and the mixture model.

use crate::catalog::{Catalog, ModelKind};
use crate::datastore::DataStore;
use crate::error::{Error, Result};
use crate::executor::{answer_query, baseline_build, materialize_range, QueryConfig, QueryOptions};
use crate::logreg;
use crate::planner::CostModel;
use crate::range::IdRange;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Gives up on a coverage target after this many model placements.
const MAX_PLACEMENTS: usize = 50_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SizeDist {
    Fixed(u64),
    Uniform(u64, u64),
    Normal { mean: f64, sd: f64 },
}

impl SizeDist {
    /// Parses `fixed:K`, `uniform:LO:HI` or `normal:MEAN:SD`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidArgument(format!("bad size distribution {s:?}"));
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
        match parts.as_slice() {
            ["fixed", k] => Ok(SizeDist::Fixed(num(k)? as u64)),
            ["uniform", lo, hi] => {
                let (lo, hi) = (num(lo)? as u64, num(hi)? as u64);
                if lo == 0 || hi < lo {
                    return Err(bad());
                }
                Ok(SizeDist::Uniform(lo, hi))
            }
            ["normal", mean, sd] => Ok(SizeDist::Normal {
                mean: num(mean)?,
                sd: num(sd)?,
            }),
            _ => Err(bad()),
        }
    }

    fn sample(&self, rng: &mut ChaCha20Rng, max: u64) -> u64 {
        let raw = match self {
            SizeDist::Fixed(k) => *k as f64,
            SizeDist::Uniform(lo, hi) => rng.gen_range(*lo..=*hi) as f64,
            SizeDist::Normal { mean, sd } => {
                Normal::new(*mean, *sd).map_or(*mean, |n| n.sample(rng))
            }
        };
        (raw.round().max(1.0) as u64).min(max)
    }
}

#[derive(Clone, Debug)]
pub struct BenchSpec {
    pub kind: ModelKind,
    /// Coverage percentages in [0, 100].
    pub coverage_targets: Vec<f64>,
    pub model_size: SizeDist,
    pub query_size: SizeDist,
    pub query_count: usize,
    /// Number of timed passes over the query set per coverage level.
    pub timing_repeats: usize,
    pub seed: u64,
    pub cfg: QueryConfig,
    /// Re-run the query set concurrently and verify results match the
    /// sequential run (correctness exercise, not a timing one).
    pub parallel: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchRow {
    pub coverage_target: f64,
    pub coverage_actual: f64,
    /// Mean speedup T0/T over the query set.
    pub speedup: f64,
    pub plan_ms: f64,
    pub io_ms: f64,
    pub merge_ms: f64,
    pub train_ms: f64,
    pub baseline_ms: f64,
    pub framework_ms: f64,
    pub acc_mean_diff: Option<f64>,
    pub acc_pos_mean_diff: Option<f64>,
    pub acc_max_diff: Option<f64>,
    pub catalog_bytes: u64,
    /// True when the coverage target could not be reached.
    pub skipped: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
}

/// CSV with one row per coverage target. The speedup column is T0/T.
pub fn write_csv<W: Write>(result: &BenchResult, mut out: W) -> Result<()> {
    writeln!(
        out,
        "coverage,speedup,plan_ms,io_ms,merge_ms,train_ms,acc_mean_diff,acc_pos_mean_diff,acc_max_diff,catalog_bytes"
    )?;
    for row in &result.rows {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        writeln!(
            out,
            "{:.2},{:.4},{:.4},{:.4},{:.4},{:.4},{},{},{},{}",
            row.coverage_actual,
            row.speedup,
            row.plan_ms,
            row.io_ms,
            row.merge_ms,
            row.train_ms,
            opt(row.acc_mean_diff),
            opt(row.acc_pos_mean_diff),
            opt(row.acc_max_diff),
            row.catalog_bytes
        )?;
    }
    Ok(())
}

fn prewarm(store: &DataStore) -> Result<()> {
    let n = store.meta().n;
    let mut lo = 0u64;
    while lo < n {
        let hi = (lo + 65_535).min(n - 1);
        let _ = store.fetch_block(lo, hi)?;
        lo = hi + 1;
    }
    Ok(())
}

fn sample_query(rng: &mut ChaCha20Rng, dist: &SizeDist, n: u64) -> IdRange {
    let size = dist.sample(rng, n).max(2);
    let lo = rng.gen_range(0..=n - size);
    IdRange {
        lo,
        hi: lo + size - 1,
    }
}

/// First base id not covered by any model of the given kind.
fn first_gap(catalog: &Catalog, kind: ModelKind, n: u64) -> Option<u64> {
    let mut ranges: Vec<IdRange> = catalog
        .entries(kind)
        .iter()
        .map(|e| e.descriptor.range)
        .collect();
    ranges.sort();
    let mut cursor = 0u64;
    for r in ranges {
        if r.lo > cursor {
            return Some(cursor);
        }
        cursor = cursor.max(r.hi + 1);
    }
    (cursor < n).then_some(cursor)
}

/// Seeds `catalog` with random models until the coverage target is met.
/// Placement is uniform; whenever a placement fails to grow coverage the
/// next one targets the first uncovered gap, so high targets still
/// terminate. Returns false when the target is unreachable within the
/// placement budget.
pub fn seed_coverage(
    store: &DataStore,
    catalog: &Catalog,
    spec: &BenchSpec,
    target: f64,
    rng: &mut ChaCha20Rng,
) -> Result<bool> {
    let n = store.meta().n;
    if target <= 0.0 {
        return Ok(true);
    }
    if spec.kind == ModelKind::LogregChunk {
        // Chunk models live on the alignment grid: top the catalog up with
        // random cells that are not materialized yet.
        let l = spec.cfg.chunk_size;
        let cells = n / l;
        let want = ((target / 100.0 * n as f64 / l as f64).round() as u64).min(cells);
        let cell_range = |c: u64| IdRange {
            lo: c * l,
            hi: c * l + l - 1,
        };
        let mut missing: Vec<u64> = (0..cells)
            .filter(|&c| catalog.find_exact(spec.kind, cell_range(c)).is_none())
            .collect();
        let have = cells - missing.len() as u64;
        for i in (1..missing.len()).rev() {
            missing.swap(i, rng.gen_range(0..=i));
        }
        for &cell in missing.iter().take(want.saturating_sub(have) as usize) {
            materialize_range(cell_range(cell), spec.kind, store, catalog, &spec.cfg)?;
        }
        return Ok(catalog.coverage(spec.kind, n) + 1e-9 >= want as f64 * l as f64 / n as f64 * 100.0);
    }
    let mut placements = 0;
    let mut fill_gap = false;
    loop {
        let covered = catalog.coverage(spec.kind, n);
        if covered >= target {
            return Ok(true);
        }
        if placements >= MAX_PLACEMENTS {
            return Ok(false);
        }
        let size = spec.model_size.sample(rng, n);
        let lo = if fill_gap {
            first_gap(catalog, spec.kind, n)
                .unwrap_or(0)
                .min(n - size)
        } else {
            rng.gen_range(0..=n - size)
        };
        let range = IdRange {
            lo,
            hi: lo + size - 1,
        };
        materialize_range(range, spec.kind, store, catalog, &spec.cfg)?;
        fill_gap = catalog.coverage(spec.kind, n) <= covered + 1e-12;
        placements += 1;
    }
}

pub fn run_bench(store: &DataStore, work_dir: &Path, spec: &BenchSpec) -> Result<BenchResult> {
    if spec.query_count == 0 {
        return Err(Error::InvalidArgument("query_count must be >= 1".into()));
    }
    let n = store.meta().n;
    if n < 4 {
        return Err(Error::InvalidArgument("dataset too small to benchmark".into()));
    }
    prewarm(store)?;
    let cost_model = CostModel::calibrate(store);

    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let queries: Vec<IdRange> = (0..spec.query_count)
        .map(|_| sample_query(&mut rng, &spec.query_size, n))
        .collect();

    let mut targets = spec.coverage_targets.clone();
    targets.sort_by(f64::total_cmp);

    let run_opts = QueryOptions {
        no_reuse: false,
        no_materialize: true,
    };

    // One catalog across all levels: ascending targets top it up, so every
    // model reusable at one level stays reusable at the next.
    let catalog = Catalog::open(&work_dir.join("catalog"))?;
    let repeats = spec.timing_repeats.max(1);

    let mut rows = Vec::new();
    for &target in &targets {
        let reached = seed_coverage(store, &catalog, spec, target, &mut rng)?;
        let coverage_actual = catalog.coverage(spec.kind, n);
        if !reached {
            rows.push(BenchRow {
                coverage_target: target,
                coverage_actual,
                speedup: 0.0,
                plan_ms: 0.0,
                io_ms: 0.0,
                merge_ms: 0.0,
                train_ms: 0.0,
                baseline_ms: 0.0,
                framework_ms: 0.0,
                acc_mean_diff: None,
                acc_pos_mean_diff: None,
                acc_max_diff: None,
                catalog_bytes: catalog.total_bytes(),
                skipped: true,
            });
            continue;
        }

        let mut t_baseline = 0.0;
        let mut t_framework = 0.0;
        let mut sums = [0.0f64; 4]; // plan, io, merge, train
        let mut acc_diffs: Vec<f64> = Vec::new();
        let mut framework_results: Vec<String> = Vec::new();
        for rep in 0..repeats {
            for &query in &queries {
                // Alternate pair order between repeats to cancel drift.
                let (baseline, framework) = if rep % 2 == 0 {
                    let b = baseline_build(query, spec.kind, store, &spec.cfg)?;
                    let f = answer_query(
                        query, spec.kind, store, &catalog, &cost_model, &spec.cfg, run_opts,
                    )?;
                    (b, f)
                } else {
                    let f = answer_query(
                        query, spec.kind, store, &catalog, &cost_model, &spec.cfg, run_opts,
                    )?;
                    let b = baseline_build(query, spec.kind, store, &spec.cfg)?;
                    (b, f)
                };
                t_baseline += baseline.timings.total_ms;
                t_framework += framework.timings.total_ms;
                sums[0] += framework.timings.plan_ms;
                sums[1] += framework.timings.io_ms;
                sums[2] += framework.timings.merge_ms;
                sums[3] += framework.timings.train_ms;
                if rep == 0 && spec.kind == ModelKind::LogregChunk {
                    let block = store.fetch_id_range(query)?;
                    let a0 = logreg::accuracy(baseline.model.weights().unwrap(), &block);
                    let a = logreg::accuracy(framework.model.weights().unwrap(), &block);
                    acc_diffs.push(a0 - a);
                }
                if rep == 0 && spec.parallel {
                    framework_results.push(serde_json::to_string(&framework.model)?);
                }
            }
        }

        if spec.parallel {
            verify_parallel(
                store,
                &catalog,
                &cost_model,
                spec,
                &queries,
                &framework_results,
            )?;
        }

        let q = (spec.query_count * repeats) as f64;
        let (acc_mean, acc_pos_mean, acc_max) = if acc_diffs.is_empty() {
            (None, None, None)
        } else {
            let mean = acc_diffs.iter().sum::<f64>() / acc_diffs.len() as f64;
            let positives: Vec<f64> = acc_diffs.iter().copied().filter(|d| *d > 0.0).collect();
            let pos_mean = if positives.is_empty() {
                0.0
            } else {
                positives.iter().sum::<f64>() / positives.len() as f64
            };
            let max = acc_diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (Some(mean), Some(pos_mean), Some(max))
        };

        rows.push(BenchRow {
            coverage_target: target,
            coverage_actual,
            speedup: t_baseline / t_framework,
            plan_ms: sums[0] / q,
            io_ms: sums[1] / q,
            merge_ms: sums[2] / q,
            train_ms: sums[3] / q,
            baseline_ms: t_baseline / q,
            framework_ms: t_framework / q,
            acc_mean_diff: acc_mean,
            acc_pos_mean_diff: acc_pos_mean,
            acc_max_diff: acc_max,
            catalog_bytes: catalog.total_bytes(),
            skipped: false,
        });
    }
    Ok(BenchResult { rows })
}

/// Runs the query set across threads against one catalog snapshot and
/// checks every result matches the sequential run bit for bit.
fn verify_parallel(
    store: &DataStore,
    catalog: &Catalog,
    cost_model: &CostModel,
    spec: &BenchSpec,
    queries: &[IdRange],
    expected: &[String],
) -> Result<()> {
    let threads = 4;
    let chunk = queries.len().div_ceil(threads);
    let mut mismatch = false;
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (qs, es) in queries.chunks(chunk).zip(expected.chunks(chunk)) {
            handles.push(scope.spawn(move || -> Result<bool> {
                for (query, expect) in qs.iter().zip(es) {
                    let report = answer_query(
                        *query,
                        spec.kind,
                        store,
                        catalog,
                        cost_model,
                        &spec.cfg,
                        QueryOptions {
                            no_reuse: false,
                            no_materialize: true,
                        },
                    )?;
                    if serde_json::to_string(&report.model)? != *expect {
                        return Ok(false);
                    }
                }
                Ok(true)
            }));
        }
        for h in handles {
            match h.join().expect("bench worker panicked") {
                Ok(true) => {}
                Ok(false) => mismatch = true,
                Err(e) => return Err(e),
            }
        }
        Ok(())
    })?;
    if mismatch {
        return Err(Error::InvalidArgument(
            "concurrent query execution diverged from the sequential run".into(),
        ));
    }
    Ok(())
}
