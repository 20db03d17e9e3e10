//! Similarity between two soft clusterings and the hinge penalty on it.

use divclust::autodiff::Tensor;
use divclust::loss::diversity::{aggregate_similarity, diversity_loss, similarity_matrix};
use divclust::model::AssignmentMatrix;

fn main() {
    // rows are clusters, columns samples; each column sums to one
    let a = AssignmentMatrix::new(
        Tensor::from_rows(&[vec![0.9, 0.8, 0.1, 0.2], vec![0.1, 0.2, 0.9, 0.8]]),
        0,
    );
    let same = a.clone();
    let crossed = AssignmentMatrix::new(
        Tensor::from_rows(&[vec![0.9, 0.2, 0.8, 0.1], vec![0.1, 0.8, 0.2, 0.9]]),
        1,
    );

    for (name, b) in [("same", &same), ("crossed", &crossed)] {
        let s = similarity_matrix(&a, b).unwrap();
        let aggr = aggregate_similarity(&s);
        println!("{name}: S_aggr = {aggr:.4}");
        for d in [1.0, 0.8, 0.5] {
            println!("  d = {d}: L_div = {:.4}", diversity_loss(aggr, d));
        }
    }
}
