//! Train one ensemble on Gaussian blobs and print the summary table.
//!
//! cargo run --release --example train_blobs -- [target] [steps]

use divclust::runner::{run_experiment, ExperimentConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let mut config = ExperimentConfig::default();
    config.model.clusterings = 8;
    if let Some(t) = args.next() {
        config.controller.target = t.parse().expect("target in [0, 1]");
    }
    if let Some(s) = args.next() {
        config.optimizer.steps = s.parse().expect("step count");
    }

    let data = config.dataset().unwrap();
    let out = run_experiment(&config, &data).unwrap();
    print!("{}", out.report.render_table());
    if let Some(last) = out.trained.trace.last() {
        println!("last controller measurement at step {}: D_R {:.4}", last.step, last.measured);
    }
}
