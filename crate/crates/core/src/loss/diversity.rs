//! Inter-clustering similarity and the hinge that bounds it.
//!
//! For two clusterings `A`, `B` over the same batch, `S_AB(i, j)` is the
//! cosine similarity between membership rows `q_A(i)` and `q_B(j)`. The
//! aggregate similarity averages each row's maximum, and the diversity loss
//! `[S_aggr − d]_+` is active only while the aggregate exceeds the bound `d`.
//!
//! `S_AB` is not symmetric under swapping `A` and `B` once the row maximum is
//! taken, so both directed pairs contribute. Each head `k` averages its `K−1`
//! outgoing terms and the total objective averages the `K` joint losses.

use crate::autodiff::{EngineError, Graph, NodeId, Tensor};
use crate::model::AssignmentMatrix;

use super::LossError;

/// Added to membership norms before dividing.
pub const NORM_EPS: f64 = 1e-12;

/// Tag on the `S_AB` matmul nodes.
pub const SIMILARITY_TAG: &str = "similarity";
/// Tag on the hinge nodes, one per directed pair.
pub const DIVERSITY_TAG: &str = "diversity";

/// `C × C` cosine similarities between the clusters of two clusterings.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Tensor,
    pub pair: (usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiversityLossConfig {
    /// Current similarity upper bound, in `[0, 1]`.
    pub d: f64,
    pub clusterings: usize,
}

impl DiversityLossConfig {
    pub fn new(d: f64, clusterings: usize) -> Result<Self, LossError> {
        if !(0.0..=1.0).contains(&d) {
            return Err(LossError::ThresholdRange(d));
        }
        Ok(Self { d, clusterings })
    }
}

fn row_norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt() + NORM_EPS
}

pub fn similarity_matrix(a: &AssignmentMatrix, b: &AssignmentMatrix) -> Result<SimilarityMatrix, LossError> {
    if a.values.shape() != b.values.shape() {
        return Err(LossError::ShapeMismatch(a.values.shape().to_vec(), b.values.shape().to_vec()));
    }
    let c = a.clusters();
    let mut values = Vec::with_capacity(c * c);
    for i in 0..c {
        let qa = a.membership(i);
        let na = row_norm(qa);
        for j in 0..c {
            let qb = b.membership(j);
            let dot: f64 = qa.iter().zip(qb).map(|(x, y)| x * y).sum();
            values.push(dot / (na * row_norm(qb)));
        }
    }
    Ok(SimilarityMatrix { values: Tensor::matrix(c, c, values), pair: (a.clustering_id, b.clustering_id) })
}

/// Mean over rows of the row maximum.
pub fn aggregate_similarity(s: &SimilarityMatrix) -> f64 {
    let c = s.values.rows();
    (0..c).map(|i| s.values.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max)).sum::<f64>() / c as f64
}

pub fn diversity_loss(s_aggr: f64, d: f64) -> f64 {
    (s_aggr - d).max(0.0)
}

/// `L_main(k) + 1/(K−1) · Σ_{k'≠k} L_div(k, k')`; just `L_main(k)` when `K = 1`.
pub fn joint_loss(k: usize, main_losses: &[f64], assignments: &[AssignmentMatrix], d: f64) -> Result<f64, LossError> {
    let clusterings = assignments.len();
    if main_losses.len() != clusterings {
        return Err(LossError::CountMismatch { expected: clusterings, found: main_losses.len() });
    }
    if k >= clusterings {
        return Err(LossError::NoSuchClustering { index: k, clusterings });
    }
    let outgoing = (0..clusterings)
        .filter(|&o| o != k)
        .map(|o| Ok(diversity_loss(aggregate_similarity(&similarity_matrix(&assignments[k], &assignments[o])?), d)))
        .collect::<Result<Vec<_>, LossError>>()?;
    Ok(combine_joint(main_losses[k], &outgoing))
}

/// `main + mean(outgoing)`, or `main` alone when there are no other heads.
pub fn combine_joint(main: f64, outgoing: &[f64]) -> f64 {
    if outgoing.is_empty() {
        main
    } else {
        main + outgoing.iter().sum::<f64>() / outgoing.len() as f64
    }
}

pub fn total_loss(joint_losses: &[f64]) -> f64 {
    joint_losses.iter().sum::<f64>() / joint_losses.len() as f64
}

/// Nodes of the full objective inside a training graph.
#[derive(Clone, Debug)]
pub struct ObjectiveNodes {
    pub total: NodeId,
    pub joint: Vec<NodeId>,
    /// `(k, k', L_div(k, k'))` for every ordered pair.
    pub diversity: Vec<(usize, usize, NodeId)>,
    /// `(k, k', S_aggr)` for every ordered pair.
    pub aggregate: Vec<(usize, usize, NodeId)>,
}

/// Adds the aggregated objective over per-head base losses `main` and
/// assignment nodes `assignments` (each `C × n`). `threshold` is a `[1]` leaf
/// holding the current `d`.
pub fn build_objective(
    graph: &mut Graph,
    main: &[NodeId],
    assignments: &[NodeId],
    threshold: NodeId,
) -> Result<ObjectiveNodes, EngineError> {
    let clusterings = assignments.len();
    assert_eq!(main.len(), clusterings, "one base loss per head");
    let normalized = assignments
        .iter()
        .map(|&p| graph.normalize_rows(p, NORM_EPS))
        .collect::<Result<Vec<_>, _>>()?;
    let transposed = if clusterings > 1 {
        normalized.iter().map(|&n| graph.transpose(n)).collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };

    let mut joint = Vec::with_capacity(clusterings);
    let mut diversity = Vec::new();
    let mut aggregate = Vec::new();
    for k in 0..clusterings {
        if clusterings == 1 {
            joint.push(main[k]);
            break;
        }
        let mut terms = Vec::with_capacity(clusterings - 1);
        for other in (0..clusterings).filter(|&o| o != k) {
            let s = graph.tagged(SIMILARITY_TAG, |g| g.matmul(normalized[k], transposed[other]))?;
            let best = graph.row_max(s)?;
            let s_aggr = graph.mean(best);
            let excess = graph.sub(s_aggr, threshold)?;
            let term = graph.tagged(DIVERSITY_TAG, |g| g.hinge(excess));
            aggregate.push((k, other, s_aggr));
            diversity.push((k, other, term));
            terms.push(term);
        }
        let sum = graph.add_all(&terms)?;
        let mean = graph.scale(sum, 1.0 / (clusterings - 1) as f64);
        joint.push(graph.add(main[k], mean)?);
    }
    let total = {
        let sum = graph.add_all(&joint)?;
        graph.scale(sum, 1.0 / clusterings as f64)
    };
    Ok(ObjectiveNodes { total, joint, diversity, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Bindings;

    fn rows(r: &[&[f64]], id: usize) -> AssignmentMatrix {
        AssignmentMatrix::new(Tensor::from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()), id)
    }

    fn sim(values: &[&[f64]]) -> SimilarityMatrix {
        SimilarityMatrix { values: Tensor::from_rows(&values.iter().map(|x| x.to_vec()).collect::<Vec<_>>()), pair: (0, 1) }
    }

    #[test]
    fn cosine_examples() {
        let a = rows(&[&[1.0, 0.0, 1.0, 0.0], &[1.0, 0.0, 0.0, 0.0], &[1.0, 1.0, 0.0, 0.0]], 0);
        let b = rows(&[&[1.0, 0.0, 1.0, 0.0], &[0.0, 1.0, 0.0, 0.0], &[1.0, 0.0, 1.0, 0.0]], 1);
        let s = similarity_matrix(&a, &b).unwrap();
        assert!((s.values.get(0, 0) - 1.0).abs() < 1e-9);
        assert_eq!(s.values.get(1, 1), 0.0);
        assert!((s.values.get(2, 2) - 0.5).abs() < 1e-9);
        assert_eq!(s.pair, (0, 1));
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_similarity(&sim(&[&[1.0, 0.0], &[0.0, 1.0]])), 1.0);
        assert!((aggregate_similarity(&sim(&[&[0.9, 0.2], &[0.3, 0.8]])) - 0.85).abs() < 1e-12);
        assert_eq!(aggregate_similarity(&sim(&[&[0.0, 0.0], &[0.0, 0.0]])), 0.0);
    }

    #[test]
    fn hinge_examples() {
        assert_eq!(diversity_loss(0.85, 0.9), 0.0);
        assert!((diversity_loss(0.85, 0.8) - 0.05).abs() < 1e-12);
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(diversity_loss(x, 1.0), 0.0);
        }
    }

    #[test]
    fn joint_loss_examples() {
        assert!((combine_joint(1.0, &[0.04, 0.02]) - 1.03).abs() < 1e-12);
        assert_eq!(combine_joint(0.7, &[]), 0.7);

        let p = rows(&[&[0.9, 0.2, 0.6], &[0.1, 0.8, 0.4]], 0);
        let q = rows(&[&[0.3, 0.7, 0.5], &[0.7, 0.3, 0.5]], 1);
        let main = [0.4, -0.2];
        // inactive bound
        assert_eq!(joint_loss(0, &main, &[p.clone(), q.clone()], 1.0).unwrap(), 0.4);
        // active bound equals hand-expanded value
        let s = aggregate_similarity(&similarity_matrix(&p, &q).unwrap());
        let j = joint_loss(0, &main, &[p.clone(), q.clone()], 0.1).unwrap();
        assert!((j - (0.4 + (s - 0.1))).abs() < 1e-12);
        // single head: no diversity term at all
        assert_eq!(joint_loss(0, &main[..1], &[p.clone()], 0.0).unwrap(), 0.4);
        assert!(matches!(joint_loss(0, &main, &[p.clone()], 0.0), Err(LossError::CountMismatch { .. })));
        assert!(matches!(joint_loss(2, &main, &[p, q], 0.0), Err(LossError::NoSuchClustering { .. })));
    }

    #[test]
    fn identical_heads_saturate_similarity() {
        let p = rows(&[&[0.9, 0.1, 0.3], &[0.1, 0.9, 0.7]], 0);
        let s = similarity_matrix(&p, &p).unwrap();
        assert!((aggregate_similarity(&s) - 1.0).abs() < 1e-9);
        assert!((diversity_loss(aggregate_similarity(&s), 0.3) - 0.7).abs() < 1e-9);
    }

    #[test]
    fn total_is_mean() {
        assert_eq!(total_loss(&[1.0, 1.0, 1.0]), 1.0);
        assert!((total_loss(&[0.2, 0.4]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn threshold_config_range() {
        assert!(DiversityLossConfig::new(1.2, 3).is_err());
        assert!(DiversityLossConfig::new(0.0, 3).is_ok());
    }

    #[test]
    fn graph_counts_directed_pairs() {
        for k in [1usize, 2, 4] {
            let mut g = Graph::new();
            let d = g.input("d", &[1]).unwrap();
            let heads: Vec<NodeId> = (0..k).map(|i| g.param(&format!("p{i}"), &[3, 5]).unwrap()).collect();
            let main: Vec<NodeId> = heads.iter().map(|&h| g.mean(h)).collect();
            let obj = build_objective(&mut g, &main, &heads, d).unwrap();
            assert_eq!(obj.diversity.len(), k * (k - 1));
            assert_eq!(obj.joint.len(), k);
            let mut b = Bindings::new();
            b.insert("d".into(), Tensor::scalar(0.5));
            for i in 0..k {
                b.insert(format!("p{i}"), Tensor::filled(&[3, 5], 1.0 / 3.0));
            }
            g.set_output(obj.total).unwrap();
            let ev = g.forward(&b).unwrap();
            assert_eq!(ev.cost(SIMILARITY_TAG).invocations as usize, k * (k - 1));
            assert_eq!(ev.cost(DIVERSITY_TAG).invocations as usize, k * (k - 1));
        }
    }
}
