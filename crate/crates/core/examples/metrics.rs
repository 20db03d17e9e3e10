use divclust::metrics::{accuracy, ari, mean_pairwise_nmi, nmi, optimal_assignment};

fn main() {
    let truth = [0, 0, 0, 1, 1, 1, 2, 2, 2];
    let pred = [2, 2, 1, 0, 0, 0, 1, 1, 1];
    println!("ACC {:.4}", accuracy(&pred, &truth).unwrap());
    println!("NMI {:.4}", nmi(&pred, &truth).unwrap());
    println!("ARI {:.4}", ari(&pred, &truth).unwrap());

    let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
    println!("assignment {:?}", optimal_assignment(&cost).unwrap());

    let ensemble = vec![truth.to_vec(), pred.to_vec(), vec![0, 1, 2, 0, 1, 2, 0, 1, 2]];
    println!("mean pairwise NMI {:.4}", mean_pairwise_nmi(&ensemble).unwrap());
}
