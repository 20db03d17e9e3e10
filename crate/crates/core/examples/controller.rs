//! Drive the threshold with synthetic labelings whose agreement we control.
//!
//! Each "step" pushes K labelings that copy a shared labeling with probability
//! `agree` and are random otherwise. The loop lowers `agree` as `d` falls,
//! standing in for the effect the diversity loss has during training.

use divclust::controller::{MemoryBank, ThresholdState};
use divclust::rng::Stream;

fn main() {
    let (k, c, batch, target) = (4, 5, 100, 0.6);
    let mut bank = MemoryBank::new(k, c, 2_000);
    let mut state = ThresholdState::new(1.0, 0.01, 20);
    let mut rng = Stream::new(1);

    for step in 1..=2_000u64 {
        let agree = 0.4 + 0.6 * state.d;
        let shared: Vec<usize> = (0..batch).map(|_| rng.below(c)).collect();
        let labels: Vec<Vec<usize>> = (0..k)
            .map(|_| shared.iter().map(|&l| if rng.uniform() < agree { l } else { rng.below(c) }).collect())
            .collect();
        bank.push(&labels).unwrap();
        let (next, measured) = state.maybe_update(&bank, target, step);
        state = next;
        if let (Some(m), true) = (measured, step % 200 == 0) {
            println!("step {step:5}  D_R {m:.3}  d {:.3}", state.d);
        }
    }
}
