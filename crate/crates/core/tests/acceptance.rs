//! Acceptance run. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 4 to 9 are exact and any failure among them fails the run.
//! Criteria 1 to 3 train 12 ensembles at the default configuration
//! (`DIVCLUST_MAX_WORKERS` caps how many run at once); their outcome is
//! empirical and only fails the run when `DIVCLUST_ACCEPTANCE_STRICT=1`.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use divclust::autodiff::{finite_difference_check, Bindings, Graph, NodeId, Tensor};
use divclust::consensus::{coassociation, consensus, consensus_labels, select, Ensemble, Strategy};
use divclust::controller::ThresholdState;
use divclust::loss::diversity::{build_objective, diversity_loss, similarity_matrix, aggregate_similarity, SIMILARITY_TAG};
use divclust::metrics::{ari, nmi, optimal_assignment};
use divclust::model::{AssignmentMatrix, ModelDims, ModelParams};
use divclust::rng::{derive_seed, Stream};
use divclust::runner::{max_workers, run_sweep, ExperimentConfig, RunOutcome, TrainingGraph};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

type Outcome = Result<String, String>;

const SEEDS: [u64; 3] = [0, 1, 2];
const TARGETS: [f64; 4] = [0.9, 0.7, 0.5, 1.0];

fn ensemble_config(target: f64, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.seed = seed;
    c.model.clusterings = 8;
    c.model.clusters = 5;
    c.controller.target = target;
    c
}

struct SweepRun {
    target: f64,
    seed: u64,
    outcome: RunOutcome,
}

fn sweep() -> Result<(Vec<SweepRun>, f64), String> {
    let keys: Vec<(f64, u64)> = TARGETS.iter().flat_map(|&t| SEEDS.iter().map(move |&s| (t, s))).collect();
    let configs: Vec<ExperimentConfig> = keys.iter().map(|&(t, s)| ensemble_config(t, s)).collect();
    let started = Instant::now();
    let results = run_sweep(&configs, max_workers());
    let per_run = started.elapsed().as_secs_f64() * max_workers().min(configs.len()) as f64 / configs.len() as f64;
    let mut runs = Vec::new();
    for (&(target, seed), result) in keys.iter().zip(results) {
        let outcome = result.map_err(|e| format!("run D_T={target} seed={seed} failed: {e}"))?;
        let r = &outcome.report;
        let accs = r.per_clustering_acc().unwrap();
        println!(
            "  run D_T={target} seed={seed}: D_R={:.4} d={:.4} CNF={:.4} ACC mean={:.4} min={:.4} max={:.4} consensus-C={:.4}",
            r.measured_similarity,
            r.final_bound,
            r.cnf,
            r.mean_acc.unwrap(),
            accs.iter().copied().fold(f64::INFINITY, f64::min),
            r.max_acc.unwrap(),
            r.consensus_scores(Strategy::C).unwrap().acc,
        );
        runs.push(SweepRun { target, seed, outcome });
    }
    Ok((runs, per_run))
}

/// Single-head accuracy at the same data and model settings, for context.
fn single_head_accuracy() -> Result<f64, String> {
    let configs: Vec<ExperimentConfig> = SEEDS
        .iter()
        .map(|&s| {
            let mut c = ensemble_config(1.0, s);
            c.model.clusterings = 1;
            c
        })
        .collect();
    let mut total = 0.0;
    for r in run_sweep(&configs, max_workers()) {
        total += r.map_err(|e| e.to_string())?.report.mean_acc.unwrap();
    }
    Ok(total / SEEDS.len() as f64)
}

fn diversity_bound(runs: &[SweepRun], per_run: f64, single: f64) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for run in runs.iter().filter(|r| r.target < 1.0) {
        let excess = run.outcome.report.measured_similarity - run.target;
        worst = worst.max(excess);
        if excess > 0.02 {
            failures.push(format!("D_T={} seed={} D_R={:.4}", run.target, run.seed, run.outcome.report.measured_similarity));
        }
    }
    let detail = format!(
        "worst D_R - D_T = {worst:+.4} (limit +0.02); single-head ACC {single:.3}; {per_run:.1} s per run"
    );
    if failures.is_empty() && per_run <= 300.0 {
        Ok(detail)
    } else {
        Err(format!("{detail}; over bound: {}", failures.join(", ")))
    }
}

fn collapse(runs: &[SweepRun]) -> Outcome {
    let values: Vec<(u64, f64)> = runs
        .iter()
        .filter(|r| r.target == 1.0)
        .map(|r| (r.seed, r.outcome.report.measured_similarity))
        .collect();
    let detail = values.iter().map(|(s, v)| format!("seed {s}: {v:.4}")).collect::<Vec<_>>().join(", ");
    if values.iter().all(|&(_, v)| v >= 0.95) {
        Ok(format!("D_R >= 0.95 for D_T = 1 ({detail})"))
    } else {
        Err(format!("D_R below 0.95 for D_T = 1 ({detail})"))
    }
}

fn consensus_quality(runs: &[SweepRun]) -> Outcome {
    let mut failures = Vec::new();
    let mut checked = 0;
    for run in runs.iter().filter(|r| r.target == 0.9 || r.target == 0.7) {
        let r = &run.outcome.report;
        let accs = r.per_clustering_acc().unwrap();
        let mean = r.mean_acc.unwrap();
        let min = accs.iter().copied().fold(f64::INFINITY, f64::min);
        let c = r.consensus_scores(Strategy::C).unwrap().acc;
        checked += 1;
        if c < mean - 0.05 || c < min {
            failures.push(format!("D_T={} seed={}: C={c:.4} mean={mean:.4} min={min:.4}", run.target, run.seed));
        }
    }
    if failures.is_empty() {
        Ok(format!("{checked} runs with consensus ACC >= mean - 0.05 and >= min"))
    } else {
        Err(format!("{} of {checked} runs short: {}", failures.len(), failures.join("; ")))
    }
}

/// Smallest gap between the two largest entries of any similarity row, and
/// between any aggregate similarity and `d`.
fn kink_margin(heads: &[AssignmentMatrix], d: f64) -> f64 {
    let mut margin = f64::INFINITY;
    for a in heads {
        for b in heads.iter().filter(|b| b.clustering_id != a.clustering_id) {
            let s = similarity_matrix(a, b).unwrap();
            for i in 0..s.values.rows() {
                let mut row = s.values.row(i).to_vec();
                row.sort_by(|x, y| y.total_cmp(x));
                margin = margin.min(row[0] - row[1]);
            }
            margin = margin.min((aggregate_similarity(&s) - d).abs());
        }
    }
    margin
}

fn gradient_correctness() -> Outcome {
    let dims = ModelDims { input_dim: 4, hidden_dim: 6, feature_dim: 5, clusterings: 3, clusters: 3 };
    let width = 8;
    let objective = TrainingGraph::build(&dims, width).map_err(|e| e.to_string())?;
    let mut found = None;
    for attempt in 0..200 {
        let mut rng = Stream::derived(2024, "fd-point", attempt);
        let mut params = ModelParams::init(derive_seed(2024, "fd-model", attempt), dims).unwrap();
        for (_, t) in params.iter_mut() {
            t.data_mut().iter_mut().for_each(|w| *w += 0.5 * rng.gaussian());
        }
        let v1 = Tensor::matrix(width, 4, (0..width * 4).map(|_| 2.0 * rng.gaussian()).collect());
        let v2 = Tensor::matrix(width, 4, v1.data().iter().map(|x| x + 0.3 * rng.gaussian()).collect());
        // pick d between the aggregate similarities so some hinges are active
        let probe = TrainingGraph::bindings(&params, &v1, &v2, 0.5);
        let eval = objective.graph.forward(&probe).map_err(|e| e.to_string())?;
        let heads: Vec<AssignmentMatrix> = objective
            .view1_heads
            .iter()
            .enumerate()
            .map(|(k, &h)| AssignmentMatrix::new(eval.value(h).clone(), k))
            .collect();
        let mut s_aggr: Vec<f64> = heads
            .iter()
            .flat_map(|a| heads.iter().filter(move |b| b.clustering_id != a.clustering_id).map(move |b| (a, b)))
            .map(|(a, b)| aggregate_similarity(&similarity_matrix(a, b).unwrap()))
            .collect();
        s_aggr.sort_by(f64::total_cmp);
        let d = (s_aggr[2] + s_aggr[3]) / 2.0;
        if kink_margin(&heads, d) > 1e-3 {
            found = Some((TrainingGraph::bindings(&params, &v1, &v2, d), d));
            break;
        }
    }
    let Some((bindings, d)) = found else { return Err("no point away from kinks found".into()) };
    let full = finite_difference_check(&objective.graph, &bindings, 1e-6).map_err(|e| e.to_string())?;

    type Build = fn(&mut Graph, NodeId, NodeId) -> NodeId;
    let primitives: Vec<(&str, Build)> = vec![
        ("matmul", |g, x, y| {
            let yt = g.transpose(y).unwrap();
            g.matmul(x, yt).unwrap()
        }),
        ("add", |g, x, y| g.add(x, y).unwrap()),
        ("sub", |g, x, y| g.sub(x, y).unwrap()),
        ("mul", |g, x, y| g.mul(x, y).unwrap()),
        ("scale", |g, x, _| g.scale(x, 2.5)),
        ("transpose", |g, x, _| g.transpose(x).unwrap()),
        ("softmax_columns", |g, x, _| g.softmax_columns(x).unwrap()),
        ("normalize_rows", |g, x, _| g.normalize_rows(x, 1e-12).unwrap()),
        ("row_max", |g, x, _| g.row_max(x).unwrap()),
        ("log", |g, x, _| {
            let sq = g.mul(x, x).unwrap();
            g.log(sq)
        }),
        ("hinge", |g, x, _| g.hinge(x)),
        ("tanh", |g, x, _| g.tanh(x)),
        ("clamp_min", |g, x, _| g.clamp_min(x, 0.1)),
        ("mean", |g, x, _| g.mean(x)),
        ("sum", |g, x, _| g.sum(x)),
    ];
    let mut rng = Stream::new(77);
    let mut worst: (f64, &str) = (0.0, "");
    for (name, build) in primitives {
        let mut g = Graph::new();
        let x = g.param("x", &[3, 4]).unwrap();
        let y = g.param("y", &[3, 4]).unwrap();
        let out = build(&mut g, x, y);
        let shape = g.shape(out).to_vec();
        let w = g.constant(Tensor::new(shape.clone(), (0..shape.iter().product()).map(|_| rng.gaussian()).collect()).unwrap());
        let weighted = g.mul(out, w).unwrap();
        let total = g.sum(weighted);
        g.set_output(total).unwrap();
        // distinct magnitudes in [0.2, 1.4], random signs: clear of every kink
        let mut xs: Vec<f64> = (0..12).map(|i| 0.2 + 0.1 * i as f64).collect();
        rng.shuffle(&mut xs);
        xs.iter_mut().for_each(|v| if rng.uniform() < 0.5 { *v = -*v });
        let mut b = Bindings::new();
        b.insert("x".into(), Tensor::matrix(3, 4, xs));
        b.insert("y".into(), Tensor::matrix(3, 4, (0..12).map(|_| rng.gaussian()).collect()));
        let err = finite_difference_check(&g, &b, 1e-6).map_err(|e| e.to_string())?;
        if err > worst.0 {
            worst = (err, name);
        }
    }
    let detail = format!("full objective {full:.2e} at d={d:.4} (limit 1e-4); worst primitive {} {:.2e} (limit 1e-5)", worst.1, worst.0);
    if full <= 1e-4 && worst.0 <= 1e-5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn metric_oracles() -> Outcome {
    let mut rng = Stream::new(5);
    for trial in 0..100 {
        let c = 1 + trial % 7;
        let cost: Vec<Vec<f64>> = (0..c).map(|_| (0..c).map(|_| rng.uniform_in(0.0, 10.0)).collect()).collect();
        let got = optimal_assignment(&cost).map_err(|e| e.to_string())?;
        let (expected, best) = brute_force_assignment(&cost);
        if got != expected || (assignment_cost(&cost, &got) - best).abs() > 1e-12 {
            return Err(format!("assignment differs on trial {trial} (C={c})"));
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (ka, kb) = (1 + rng.below(8), 1 + rng.below(8));
        let a = random_labels(&mut rng, 200, ka);
        let b = random_labels(&mut rng, 200, kb);
        let dn = (nmi(&a, &b).map_err(|e| e.to_string())? - oracle_nmi(&a, &b)).abs();
        let da = (ari(&a, &b).map_err(|e| e.to_string())? - oracle_ari(&a, &b)).abs();
        worst = worst.max(dn).max(da);
    }
    let detail = format!("100 assignments match exhaustive search (C<=7); worst NMI/ARI deviation {worst:.1e}");
    if worst <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn controller_exactness() -> Outcome {
    // (d, m, D_R, D_T, expected)
    let table: &[(f64, f64, f64, f64, f64)] = &[
        (0.5, 0.01, 0.8, 0.7, 0.495),
        (0.5, 0.01, 0.6, 0.7, 0.505),
        (0.5, 0.01, 0.7, 0.7, 0.505),
        (0.999, 0.01, 0.2, 0.9, 1.0),
        (1.0, 0.01, 1.0, 1.0, 1.0),
        (0.0, 0.01, 0.9, 0.5, 0.0),
        (0.0, 0.5, 0.1, 0.5, 0.0),
        (0.2, 0.5, 0.9, 0.5, 0.1),
        (0.8, 0.5, 0.1, 0.5, 1.0),
        (1.0, 0.3, 0.95, 0.9, 0.7),
    ];
    for &(d, m, measured, target, expected) in table {
        let got = ThresholdState::new(d, m, 20).update_threshold(measured, target).d;
        let exact = if measured > target { (d * (1.0 - m)).max(0.0) } else { (d * (1.0 + m)).min(1.0) };
        if got.to_bits() != exact.to_bits() || (got - expected).abs() > 1e-15 {
            return Err(format!("d={d} m={m} D_R={measured} D_T={target}: got {got}, expected {expected}"));
        }
    }
    let mut rng = Stream::new(6);
    for seq in 0..10_000 {
        let mut state = ThresholdState::new(rng.uniform(), rng.uniform_in(1e-3, 0.999), 20);
        for _ in 0..1 + rng.below(100) {
            state = state.update_threshold(rng.uniform(), rng.uniform());
            if !(0.0..=1.0).contains(&state.d) {
                return Err(format!("sequence {seq} left [0, 1]: d = {}", state.d));
            }
        }
    }
    Ok(format!("{} table cases exact including both clamps; d in [0, 1] over 10000 random sequences", table.len()))
}

fn similarity_cost(clusterings: usize, clusters: usize) -> Result<(u64, u64), String> {
    let dims = ModelDims { input_dim: 6, hidden_dim: 8, feature_dim: 4, clusterings, clusters };
    let width = 32;
    let objective = TrainingGraph::build(&dims, width).map_err(|e| e.to_string())?;
    let params = ModelParams::init(3, dims).unwrap();
    let mut rng = Stream::new(8);
    let v1 = Tensor::matrix(width, 6, (0..width * 6).map(|_| rng.gaussian()).collect());
    let v2 = Tensor::matrix(width, 6, (0..width * 6).map(|_| rng.gaussian()).collect());
    let eval = objective.graph.forward(&TrainingGraph::bindings(&params, &v1, &v2, 0.5)).map_err(|e| e.to_string())?;
    let cost = eval.cost(SIMILARITY_TAG);
    Ok((cost.invocations, cost.multiply_adds / cost.invocations))
}

fn complexity() -> Outcome {
    let (k4, _) = similarity_cost(4, 5)?;
    let (k8, _) = similarity_cost(8, 5)?;
    let (_, c4) = similarity_cost(2, 4)?;
    let (_, c8) = similarity_cost(2, 8)?;
    let detail = format!("similarity invocations K=4: {k4}, K=8: {k8}; multiply-adds per pair C=4: {c4}, C=8: {c8}");
    if k4 == 12 && k8 == 56 && c8 == 4 * c4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn hinge_monotonicity() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 1000, failure_persistence: None, ..Config::default() });
    let cases = (any::<u64>(), 2usize..5, 2usize..6, 2usize..16, 0.0f64..1.0, 0.0f64..1.0);
    runner
        .run(&cases, |(seed, k, c, n, x, y)| {
            let mut rng = Stream::new(seed);
            let heads: Vec<Vec<Vec<f64>>> = (0..k).map(|_| random_assignment(&mut rng, c, n)).collect();
            let mut g = Graph::new();
            let nodes: Vec<NodeId> = (0..k).map(|i| g.input(&format!("p{i}"), &[c, n]).unwrap()).collect();
            let mains: Vec<NodeId> = (0..k).map(|_| g.constant(Tensor::scalar(0.0))).collect();
            let t = g.input("d", &[1]).unwrap();
            let obj = build_objective(&mut g, &mains, &nodes, t).unwrap();
            g.set_output(obj.total).unwrap();
            let terms = |d: f64| -> Vec<f64> {
                let mut b = Bindings::new();
                for (i, h) in heads.iter().enumerate() {
                    b.insert(format!("p{i}"), Tensor::from_rows(h));
                }
                b.insert("d".into(), Tensor::scalar(d));
                let eval = g.forward(&b).unwrap();
                obj.diversity.iter().map(|&(_, _, node)| eval.value(node).item()).collect()
            };
            prop_assert!(terms(1.0).iter().all(|&v| v == 0.0));
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            for (a, b) in terms(lo).iter().zip(terms(hi)) {
                prop_assert!(*a >= b);
            }
            let s = aggregate_similarity(&similarity_matrix(
                &AssignmentMatrix::new(Tensor::from_rows(&heads[0]), 0),
                &AssignmentMatrix::new(Tensor::from_rows(&heads[1]), 1),
            ).unwrap());
            prop_assert_eq!(diversity_loss(s, 1.0), 0.0);
            prop_assert!(diversity_loss(s, lo) >= diversity_loss(s, hi));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 random ensembles: zero at d = 1, non-increasing in d".into())
}

fn consensus_sanity() -> Outcome {
    let mut rng = Stream::new(9);
    let mut base = random_labels(&mut rng, 40, 4);
    base[..4].copy_from_slice(&[0, 1, 2, 3]);
    let losses: Vec<f64> = (0..12).map(|_| rng.uniform()).collect();
    let ensemble = Ensemble::new(vec![base.clone(); 12], losses, 4).map_err(|e| e.to_string())?;
    for strategy in Strategy::ALL {
        let out = consensus(&ensemble, strategy).map_err(|e| e.to_string())?;
        if ari(&out, &base).unwrap() != 1.0 {
            return Err(format!("identical ensemble, strategy {strategy}: ARI {}", ari(&out, &base).unwrap()));
        }
    }
    if select(&ensemble, Strategy::C).unwrap().len() != 10 {
        return Err("strategy C did not keep 10 of 12 labelings".into());
    }

    let majority: Vec<usize> = (0..30).map(|i| i / 10).collect();
    let noise = random_labels(&mut rng, 30, 3);
    let out = consensus_labels(&coassociation(&[majority.clone(), noise.clone(), majority.clone()]).unwrap(), 3)
        .map_err(|e| e.to_string())?;
    let score = ari(&out, &majority).unwrap();
    if score != 1.0 {
        return Err(format!("majority instance: ARI {score}"));
    }
    Ok("identical ensemble ARI 1 for A, B, C; 30-sample majority pair recovered exactly".into())
}

fn main() -> ExitCode {
    let mut outcomes: Vec<(usize, &str, Outcome)> = vec![
        (4, "gradient correctness", gradient_correctness()),
        (5, "metric oracles", metric_oracles()),
        (6, "controller exactness", controller_exactness()),
        (7, "complexity invariant", complexity()),
        (8, "hinge and monotonicity", hinge_monotonicity()),
        (9, "consensus sanity", consensus_sanity()),
    ];

    println!("training {} ensembles on up to {} workers", TARGETS.len() * SEEDS.len(), max_workers());
    match sweep().and_then(|(runs, per_run)| single_head_accuracy().map(|s| (runs, per_run, s))) {
        Ok((runs, per_run, single)) => {
            outcomes.push((1, "diversity control bound", diversity_bound(&runs, per_run, single)));
            outcomes.push((2, "collapse without control", collapse(&runs)));
            outcomes.push((3, "consensus quality", consensus_quality(&runs)));
        }
        Err(e) => {
            for (n, name) in [(1, "diversity control bound"), (2, "collapse without control"), (3, "consensus quality")] {
                outcomes.push((n, name, Err(e.clone())));
            }
        }
    }

    outcomes.sort_by_key(|o| o.0);
    for (number, name, outcome) in &outcomes {
        match outcome {
            Ok(detail) => println!("criterion {number} {name}: PASS {detail}"),
            Err(detail) => println!("criterion {number} {name}: FAIL {detail}"),
        }
    }
    let passed = outcomes.iter().filter(|o| o.2.is_ok()).count();
    println!("acceptance: {passed}/{} criteria passed", outcomes.len());
    let strict = std::env::var("DIVCLUST_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let fatal = outcomes.iter().any(|(n, _, o)| o.is_err() && (strict || *n >= 4));
    if !fatal {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
