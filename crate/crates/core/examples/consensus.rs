//! Combine an ensemble of labelings with each selection strategy.

use divclust::consensus::{coassociation, consensus, select, Ensemble, Strategy};
use divclust::metrics::accuracy;

fn main() {
    let truth = vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2];
    let labelings = vec![
        vec![0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2],
        vec![1, 1, 1, 1, 0, 0, 0, 2, 2, 2, 2, 2],
        vec![2, 2, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0],
        vec![0, 0, 0, 0, 2, 2, 1, 1, 1, 1, 1, 1],
    ];
    let losses = vec![-0.9, -1.0, -0.7, -0.8];

    let co = coassociation(&labelings).unwrap();
    println!("co-association row 0: {:?}", co.row(0));

    let ensemble = Ensemble::new(labelings, losses, 3).unwrap();
    for strategy in Strategy::ALL {
        let labels = consensus(&ensemble, strategy).unwrap();
        println!(
            "{strategy}: heads {:?} -> {labels:?}  ACC {:.3}",
            select(&ensemble, strategy).unwrap(),
            accuracy(&labels, &truth).unwrap()
        );
    }
}
