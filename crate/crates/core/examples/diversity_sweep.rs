//! Several targets at once on worker threads. DIVCLUST_MAX_WORKERS caps
//! the thread count.
//!
//! cargo run --release --example diversity_sweep -- [steps]

use divclust::consensus::Strategy;
use divclust::runner::{max_workers, run_sweep, ExperimentConfig};

fn main() {
    let steps = std::env::args().nth(1).map_or(1_000, |s| s.parse().expect("step count"));
    let targets = [1.0, 0.9, 0.7, 0.5];
    let configs: Vec<ExperimentConfig> = targets
        .iter()
        .map(|&t| {
            let mut c = ExperimentConfig::default();
            c.model.clusterings = 8;
            c.controller.target = t;
            c.optimizer.steps = steps;
            c
        })
        .collect();

    println!("{:>5} {:>7} {:>7} {:>9} {:>8} {:>8}", "D_T", "D_R", "d", "mean ACC", "max ACC", "C ACC");
    for (t, result) in targets.iter().zip(run_sweep(&configs, max_workers())) {
        let r = result.unwrap().report;
        println!(
            "{t:>5} {:>7.4} {:>7.4} {:>9.4} {:>8.4} {:>8.4}",
            r.measured_similarity,
            r.final_bound,
            r.mean_acc.unwrap(),
            r.max_acc.unwrap(),
            r.consensus_scores(Strategy::C).unwrap().acc
        );
    }
}
