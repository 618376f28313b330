//! Cross-module behavior of the plan executor and the end-to-end query
//! path, on small synthetic datasets.

use mcds_core::catalog::{Catalog, ModelKind};
use mcds_core::datastore::DataStore;
use mcds_core::executor::{
    answer_query, baseline_build, execute, materialize_range, FittedModel, QueryConfig,
    QueryOptions,
};
use mcds_core::linreg::Sign;
use mcds_core::planner::{
    generate_graph, optimal_path, plan_cost, validate_telescoping, CostModel, EdgeSource,
    ExecutionPlan, GraphMode, PlanStep,
};
use mcds_core::synth::{synth_dataset, SynthKind, SynthSpec};
use mcds_core::{Error, IdRange};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tempfile::TempDir;

fn regression_setup(n: u64, seed: u64) -> (TempDir, DataStore, Catalog) {
    let tmp = TempDir::new().unwrap();
    synth_dataset(
        tmp.path(),
        &SynthSpec {
            n,
            d: 5,
            seed,
            kind: SynthKind::Regression { noise: 0.4 },
        },
    )
    .unwrap();
    let store = DataStore::open(tmp.path()).unwrap();
    let catalog = Catalog::open(&tmp.path().join("catalog")).unwrap();
    (tmp, store, catalog)
}

fn classification_setup(n: u64, seed: u64) -> (TempDir, DataStore, Catalog) {
    let tmp = TempDir::new().unwrap();
    synth_dataset(
        tmp.path(),
        &SynthSpec {
            n,
            d: 5,
            seed,
            kind: SynthKind::Classification {
                classes: 3,
                separation: 3.0,
            },
        },
    )
    .unwrap();
    let store = DataStore::open(tmp.path()).unwrap();
    let catalog = Catalog::open(&tmp.path().join("catalog")).unwrap();
    (tmp, store, catalog)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn assert_close(got: &[f64], want: &[f64], tol: f64, what: &str) {
    assert_eq!(got.len(), want.len(), "{what}: length");
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!(rel_err(*g, *w) < tol, "{what}[{i}]: {g} vs {w}");
    }
}

#[test]
fn single_fetch_plan_equals_baseline() {
    let (_tmp, store, catalog) = regression_setup(5_000, 1);
    let cfg = QueryConfig::default();
    let cm = CostModel::default_rates();
    let query = IdRange::new(700, 3_200).unwrap();
    let plan = ExecutionPlan::baseline(query, &cm);
    let via_plan = execute(&plan, query, ModelKind::LinReg, &store, &catalog, &cfg, false).unwrap();
    let direct = baseline_build(query, ModelKind::LinReg, &store, &cfg).unwrap();
    assert_eq!(
        via_plan.model.weights().unwrap(),
        direct.model.weights().unwrap()
    );
    assert!(direct.timings.io_ms > 0.0);
}

/// The worked overlap layout: D3=[10,29]k and D4=[30,49]k materialized,
/// query [20,39]k built as D3 + D4 - fetch[10,19]k - fetch[40,49]k.
#[test]
fn signed_model_composition_matches_from_scratch() {
    let (_tmp, store, catalog) = regression_setup(50_000, 2);
    let cfg = QueryConfig::default();
    let d3 = materialize_range(
        IdRange::new(10_000, 29_999).unwrap(),
        ModelKind::LinReg,
        &store,
        &catalog,
        &cfg,
    )
    .unwrap()[0];
    let d4 = materialize_range(
        IdRange::new(30_000, 49_999).unwrap(),
        ModelKind::LinReg,
        &store,
        &catalog,
        &cfg,
    )
    .unwrap()[0];

    let query = IdRange::new(20_000, 39_999).unwrap();
    let step = |source, lo, hi, sign| PlanStep {
        source,
        range: IdRange::new(lo, hi).unwrap(),
        sign,
        cost: 1.0,
    };
    let plan = ExecutionPlan {
        steps: vec![
            step(EdgeSource::Model(d3), 10_000, 29_999, Sign::Add),
            step(EdgeSource::Model(d4), 30_000, 49_999, Sign::Add),
            step(EdgeSource::Fetch, 10_000, 19_999, Sign::Remove),
            step(EdgeSource::Fetch, 40_000, 49_999, Sign::Remove),
        ],
        estimated_cost: 4.0,
    };
    assert!(validate_telescoping(&plan, query));
    let via_plan = execute(&plan, query, ModelKind::LinReg, &store, &catalog, &cfg, false).unwrap();
    let direct = baseline_build(query, ModelKind::LinReg, &store, &cfg).unwrap();
    assert_close(
        via_plan.model.weights().unwrap(),
        direct.model.weights().unwrap(),
        1e-6,
        "weights",
    );
}

#[test]
fn non_telescoping_plan_rejected() {
    let (_tmp, store, catalog) = regression_setup(1_000, 3);
    let cfg = QueryConfig::default();
    let query = IdRange::new(100, 499).unwrap();
    let plan = ExecutionPlan {
        steps: vec![PlanStep {
            source: EdgeSource::Fetch,
            range: IdRange::new(100, 400).unwrap(),
            sign: Sign::Add,
            cost: 1.0,
        }],
        estimated_cost: 1.0,
    };
    assert!(matches!(
        execute(&plan, query, ModelKind::LinReg, &store, &catalog, &cfg, false),
        Err(Error::InvalidPlan(_))
    ));
}

fn params_close(got: &FittedModel, want: &FittedModel, what: &str) {
    use mcds_core::naive_bayes::NbParameters;
    match (got, want) {
        (
            FittedModel::LinReg { weights: g, stats: gs, .. },
            FittedModel::LinReg { weights: w, stats: ws, .. },
        ) => {
            assert_eq!(gs.n_points(), ws.n_points(), "{what}: n_points");
            assert_close(g, w, 1e-6, what);
        }
        (FittedModel::NbGaussian { params: g, stats: gs }, FittedModel::NbGaussian { params: w, stats: ws }) => {
            for c in 0..gs.class_count() {
                assert_eq!(gs.count(c), ws.count(c), "{what}: class {c} count");
            }
            let (
                NbParameters::Gaussian { priors: gp, means: gm, variances: gv, .. },
                NbParameters::Gaussian { priors: wp, means: wm, variances: wv, .. },
            ) = (g, w)
            else {
                panic!("{what}: kind mismatch");
            };
            assert_close(gp, wp, 1e-6, "priors");
            assert_close(gm, wm, 1e-6, "means");
            assert_close(gv, wv, 1e-6, "variances");
        }
        (FittedModel::NbMultinomial { params: g, stats: gs }, FittedModel::NbMultinomial { params: w, stats: ws }) => {
            for c in 0..gs.class_count() {
                assert_eq!(gs.sample_count(c), ws.sample_count(c), "{what}: class {c}");
            }
            let (
                NbParameters::Multinomial { priors: gp, theta: gt, .. },
                NbParameters::Multinomial { priors: wp, theta: wt, .. },
            ) = (g, w)
            else {
                panic!("{what}: kind mismatch");
            };
            assert_close(gp, wp, 1e-6, "priors");
            assert_close(gt, wt, 1e-6, "theta");
        }
        _ => panic!("{what}: model kind mismatch"),
    }
}

fn randomized_equivalence(kind: ModelKind, trials: usize, seed: u64) {
    let n = 20_000u64;
    let (_tmp, store, catalog_root) = match kind {
        ModelKind::LinReg => regression_setup(n, seed),
        _ => classification_setup(n, seed),
    };
    let root = catalog_root.dir().to_path_buf();
    let cfg = QueryConfig::default();
    let cm = CostModel::default_rates();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xABCD);
    for trial in 0..trials {
        let catalog = Catalog::open(&root.join(format!("t{trial}"))).unwrap();
        for _ in 0..rng.gen_range(0..6) {
            let size = rng.gen_range(500..6_000);
            let lo = rng.gen_range(0..n - size);
            materialize_range(
                IdRange::new(lo, lo + size - 1).unwrap(),
                kind,
                &store,
                &catalog,
                &cfg,
            )
            .unwrap();
        }
        let size = rng.gen_range(1_000..10_000);
        let lo = rng.gen_range(0..n - size);
        let query = IdRange::new(lo, lo + size - 1).unwrap();
        let framework = answer_query(
            query,
            kind,
            &store,
            &catalog,
            &cm,
            &cfg,
            QueryOptions::default(),
        )
        .unwrap();
        if let Some(plan) = &framework.plan {
            assert!(validate_telescoping(plan, query), "trial {trial}");
        }
        let direct = baseline_build(query, kind, &store, &cfg).unwrap();
        params_close(&framework.model, &direct.model, &format!("trial {trial}"));
    }
}

#[test]
fn randomized_linreg_matches_from_scratch() {
    randomized_equivalence(ModelKind::LinReg, 30, 11);
}

#[test]
fn randomized_nb_gaussian_matches_from_scratch() {
    randomized_equivalence(ModelKind::NbGaussian, 30, 12);
}

#[test]
fn randomized_nb_multinomial_matches_from_scratch() {
    randomized_equivalence(ModelKind::NbMultinomial, 30, 13);
}

#[test]
fn baseline_is_deterministic() {
    let (_tmp, store, _) = regression_setup(8_000, 21);
    let cfg = QueryConfig::default();
    let query = IdRange::new(1_000, 6_999).unwrap();
    let a = baseline_build(query, ModelKind::LinReg, &store, &cfg).unwrap();
    let b = baseline_build(query, ModelKind::LinReg, &store, &cfg).unwrap();
    assert_eq!(a.model.weights().unwrap(), b.model.weights().unwrap());
}

#[test]
fn empty_catalog_query_equals_baseline() {
    let (_tmp, store, catalog) = regression_setup(8_000, 22);
    let cfg = QueryConfig::default();
    let cm = CostModel::default_rates();
    let query = IdRange::new(900, 5_400).unwrap();
    let framework = answer_query(
        query,
        ModelKind::LinReg,
        &store,
        &catalog,
        &cm,
        &cfg,
        QueryOptions {
            no_reuse: false,
            no_materialize: true,
        },
    )
    .unwrap();
    let plan = framework.plan.as_ref().unwrap();
    assert_eq!(plan.steps.len(), 1);
    assert!(matches!(plan.steps[0].source, EdgeSource::Fetch));
    let baseline = baseline_build(query, ModelKind::LinReg, &store, &cfg).unwrap();
    assert_eq!(
        framework.model.weights().unwrap(),
        baseline.model.weights().unwrap()
    );
}

#[test]
fn repeated_query_hits_materialized_result() {
    let (_tmp, store, catalog) = regression_setup(8_000, 23);
    let cfg = QueryConfig::default();
    let cm = CostModel::default_rates();
    let query = IdRange::new(2_000, 4_999).unwrap();
    let first = answer_query(
        query,
        ModelKind::LinReg,
        &store,
        &catalog,
        &cm,
        &cfg,
        QueryOptions::default(),
    )
    .unwrap();
    let id = first.materialized.expect("result should materialize");
    let second = answer_query(
        query,
        ModelKind::LinReg,
        &store,
        &catalog,
        &cm,
        &cfg,
        QueryOptions::default(),
    )
    .unwrap();
    let plan = second.plan.as_ref().unwrap();
    assert_eq!(plan.steps.len(), 1);
    assert!(matches!(plan.steps[0].source, EdgeSource::Model(m) if m == id));
    assert_eq!(
        first.model.weights().unwrap(),
        second.model.weights().unwrap()
    );
}

#[test]
fn timing_decomposition_bounded_by_total() {
    let (_tmp, store, catalog) = regression_setup(30_000, 24);
    let cfg = QueryConfig::default();
    let cm = CostModel::default_rates();
    materialize_range(
        IdRange::new(5_000, 14_999).unwrap(),
        ModelKind::LinReg,
        &store,
        &catalog,
        &cfg,
    )
    .unwrap();
    for (lo, hi) in [(0u64, 9_999u64), (4_000, 19_999), (25_000, 29_999)] {
        let report = answer_query(
            IdRange::new(lo, hi).unwrap(),
            ModelKind::LinReg,
            &store,
            &catalog,
            &cm,
            &cfg,
            QueryOptions::default(),
        )
        .unwrap();
        let t = report.timings;
        assert!(
            t.plan_ms + t.io_ms + t.merge_ms + t.train_ms <= t.total_ms * 1.05,
            "decomposition exceeds total: {t:?}"
        );
        assert_eq!(report.steps_executed, report.plan.unwrap().steps.len());
    }
}

#[test]
fn logreg_answer_query_is_reuse_neutral() {
    let (_tmp, store, catalog) = {
        let tmp = TempDir::new().unwrap();
        synth_dataset(
            tmp.path(),
            &SynthSpec {
                n: 30_000,
                d: 5,
                seed: 31,
                kind: SynthKind::Classification {
                    classes: 2,
                    separation: 3.0,
                },
            },
        )
        .unwrap();
        let store = DataStore::open(tmp.path()).unwrap();
        let catalog = Catalog::open(&tmp.path().join("catalog")).unwrap();
        (tmp, store, catalog)
    };
    let cfg = QueryConfig {
        chunk_size: 2_000,
        ..QueryConfig::default()
    };
    let cm = CostModel::default_rates();
    let query = IdRange::new(3_123, 27_456).unwrap();

    // Pre-materialize a few aligned chunks through a smaller query.
    answer_query(
        IdRange::new(6_000, 13_999).unwrap(),
        ModelKind::LogregChunk,
        &store,
        &catalog,
        &cm,
        &cfg,
        QueryOptions::default(),
    )
    .unwrap();
    assert!(catalog.model_count() > 0);

    let with_reuse = answer_query(
        query,
        ModelKind::LogregChunk,
        &store,
        &catalog,
        &cm,
        &cfg,
        QueryOptions::default(),
    )
    .unwrap();
    let no_reuse = mcds_core::logreg::incremental_logreg(
        &store,
        None,
        query,
        &cfg.sgd(),
        cfg.chunk_size,
        false,
    )
    .unwrap()
    .0;
    let bits = |w: &[f64]| w.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(
        bits(with_reuse.model.weights().unwrap()),
        bits(&no_reuse.weights)
    );
}

#[test]
fn directed_logreg_plan_only_adds_and_costs_come_out() {
    let tmp = TempDir::new().unwrap();
    synth_dataset(
        tmp.path(),
        &SynthSpec {
            n: 20_000,
            d: 5,
            seed: 41,
            kind: SynthKind::Classification {
                classes: 2,
                separation: 3.0,
            },
        },
    )
    .unwrap();
    let store = DataStore::open(tmp.path()).unwrap();
    let catalog = Catalog::open(&tmp.path().join("catalog")).unwrap();
    let cfg = QueryConfig {
        chunk_size: 1_000,
        ..QueryConfig::default()
    };
    let cm = CostModel::default_rates();
    materialize_range(
        IdRange::new(4_000, 7_999).unwrap(),
        ModelKind::LogregChunk,
        &store,
        &catalog,
        &cfg,
    )
    .unwrap();
    let query = IdRange::new(3_500, 9_200).unwrap();
    let mut relevant = catalog.relevant_models(query, ModelKind::LogregChunk);
    relevant.retain(|e| {
        e.descriptor.range.lo % cfg.chunk_size == 0 && e.descriptor.range.len() == cfg.chunk_size
    });
    assert_eq!(relevant.len(), 4);
    let graph = generate_graph(&relevant, query, &cm, GraphMode::Directed);
    let plan = optimal_path(&graph).unwrap();
    assert!(plan.steps.iter().all(|s| s.sign == Sign::Add));
    assert!(validate_telescoping(&plan, query));
    assert!((plan_cost(&plan, &cm) - plan.estimated_cost).abs() < 1e-12);
    assert!(plan
        .steps
        .iter()
        .any(|s| matches!(s.source, EdgeSource::Model(_))));
}

#[test]
fn report_serializes_to_json() {
    let (_tmp, store, catalog) = regression_setup(2_000, 51);
    let cfg = QueryConfig::default();
    let cm = CostModel::default_rates();
    let report = answer_query(
        IdRange::new(100, 1_500).unwrap(),
        ModelKind::LinReg,
        &store,
        &catalog,
        &cm,
        &cfg,
        QueryOptions::default(),
    )
    .unwrap();
    let json = report.to_json().unwrap();
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(value["kind"], "LinReg");
    assert!(value["timings"]["total_ms"].as_f64().unwrap() > 0.0);
    assert!(value["plan"]["steps"].as_array().unwrap().len() >= 1);
}

#[test]
fn concurrent_queries_share_store_and_catalog() {
    let (_tmp, store, catalog) = regression_setup(20_000, 61);
    let cfg = QueryConfig::default();
    let cm = CostModel::default_rates();
    for i in 0..4u64 {
        materialize_range(
            IdRange::new(i * 5_000, i * 5_000 + 4_999).unwrap(),
            ModelKind::LinReg,
            &store,
            &catalog,
            &cfg,
        )
        .unwrap();
    }
    let expected = answer_query(
        IdRange::new(2_500, 17_499).unwrap(),
        ModelKind::LinReg,
        &store,
        &catalog,
        &cm,
        &cfg,
        QueryOptions {
            no_reuse: false,
            no_materialize: true,
        },
    )
    .unwrap();
    let expected_w = expected.model.weights().unwrap().to_vec();
    std::thread::scope(|scope| {
        for _ in 0..6 {
            scope.spawn(|| {
                let report = answer_query(
                    IdRange::new(2_500, 17_499).unwrap(),
                    ModelKind::LinReg,
                    &store,
                    &catalog,
                    &cm,
                    &cfg,
                    QueryOptions {
                        no_reuse: false,
                        no_materialize: true,
                    },
                )
                .unwrap();
                assert_eq!(report.model.weights().unwrap(), expected_w);
            });
        }
    });
}
