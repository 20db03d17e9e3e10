//! Two-view mutual-information clustering loss for a single head.
//!
//! `J = (P₁ P₂ᵀ / n + its transpose) / 2` estimates the joint distribution of
//! cluster indices across the two views; the loss is `−I(J)`, minimised by
//! confident, agreeing, marginally balanced assignments.

use crate::autodiff::{EngineError, Graph, NodeId, Tensor};
use crate::model::AssignmentMatrix;

use super::LossError;

/// Lower clamp applied to every argument of a log.
pub const LOG_EPS: f64 = 1e-12;

pub const BASE_LOSS_TAG: &str = "base_loss";

/// Symmetric `C × C` joint distribution over cluster pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    pub values: Tensor,
}

impl JointDistribution {
    pub fn clusters(&self) -> usize {
        self.values.rows()
    }

    pub fn row_marginals(&self) -> Vec<f64> {
        (0..self.clusters()).map(|i| self.values.row(i).iter().sum()).collect()
    }

    pub fn col_marginals(&self) -> Vec<f64> {
        let c = self.clusters();
        (0..c).map(|j| (0..c).map(|i| self.values.get(i, j)).sum()).collect()
    }
}

pub fn joint_distribution(view1: &AssignmentMatrix, view2: &AssignmentMatrix) -> Result<JointDistribution, LossError> {
    if view1.values.shape() != view2.values.shape() {
        return Err(LossError::ShapeMismatch(view1.values.shape().to_vec(), view2.values.shape().to_vec()));
    }
    let (c, n) = (view1.clusters(), view1.samples());
    let mut raw = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..c {
            let dot: f64 = view1.membership(i).iter().zip(view2.membership(j)).map(|(a, b)| a * b).sum();
            raw[i * c + j] = dot / n as f64;
        }
    }
    let mut values = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..c {
            values[i * c + j] = 0.5 * (raw[i * c + j] + raw[j * c + i]);
        }
    }
    Ok(JointDistribution { values: Tensor::matrix(c, c, values) })
}

/// `−Σ J(i,j) · (log J(i,j) − log J_row(i) − log J_col(j))`, logs of clamped values.
pub fn mi_loss(joint: &JointDistribution) -> f64 {
    let c = joint.clusters();
    let rows = joint.row_marginals();
    let cols = joint.col_marginals();
    let mut mi = 0.0;
    for i in 0..c {
        for j in 0..c {
            let p = joint.values.get(i, j);
            mi += p * (p.max(LOG_EPS).ln() - rows[i].max(LOG_EPS).ln() - cols[j].max(LOG_EPS).ln());
        }
    }
    -mi
}

/// Graph form of `mi_loss(joint_distribution(view1, view2))`.
pub fn build_mi_loss(graph: &mut Graph, view1: NodeId, view2: NodeId) -> Result<NodeId, EngineError> {
    graph.tagged(BASE_LOSS_TAG, |g| {
        let [c, n] = [g.shape(view1)[0], g.shape(view1)[1]];
        let v2t = g.transpose(view2)?;
        let raw = g.matmul(view1, v2t)?;
        let raw = g.scale(raw, 1.0 / n as f64);
        let raw_t = g.transpose(raw)?;
        let both = g.add(raw, raw_t)?;
        let joint = g.scale(both, 0.5);

        let ones_col = g.constant(Tensor::filled(&[c, 1], 1.0));
        let ones_row = g.constant(Tensor::filled(&[1, c], 1.0));
        // marginals spread back to C x C via outer products with ones
        let row_sums = g.matmul(joint, ones_col)?;
        let row_sums = g.matmul(row_sums, ones_row)?;
        let col_sums = g.matmul(ones_row, joint)?;
        let col_sums = g.matmul(ones_col, col_sums)?;

        let log_of = |g: &mut Graph, x: NodeId| {
            let clamped = g.clamp_min(x, LOG_EPS);
            g.log(clamped)
        };
        let log_joint = log_of(g, joint);
        let log_rows = log_of(g, row_sums);
        let log_cols = log_of(g, col_sums);
        let pmi = g.sub(log_joint, log_rows)?;
        let pmi = g.sub(pmi, log_cols)?;
        let weighted = g.mul(joint, pmi)?;
        let mi = g.sum(weighted);
        Ok(g.scale(mi, -1.0))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assign(c: usize, n: usize, values: Vec<f64>) -> AssignmentMatrix {
        AssignmentMatrix::new(Tensor::matrix(c, n, values), 0)
    }

    #[test]
    fn one_hot_balanced_joint() {
        let p = assign(2, 4, vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let j = joint_distribution(&p, &p).unwrap();
        assert_eq!(j.values.data(), &[0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn uniform_joint_and_zero_information() {
        let p = assign(3, 5, vec![1.0 / 3.0; 15]);
        let j = joint_distribution(&p, &p).unwrap();
        assert!(j.values.data().iter().all(|&v| (v - 1.0 / 9.0).abs() < 1e-15));
        assert!(mi_loss(&j).abs() < 1e-12);
    }

    #[test]
    fn diagonal_joint_reaches_minus_log_c() {
        let j = JointDistribution { values: Tensor::matrix(4, 4, (0..16).map(|i| if i % 5 == 0 { 0.25 } else { 0.0 }).collect()) };
        assert!((mi_loss(&j) + 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn joint_sums_to_one_and_is_symmetric() {
        let a = assign(2, 3, vec![0.2, 0.7, 0.5, 0.8, 0.3, 0.5]);
        let b = assign(2, 3, vec![0.9, 0.4, 0.1, 0.1, 0.6, 0.9]);
        let j = joint_distribution(&a, &b).unwrap();
        assert!((j.values.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(j.values.get(0, 1), j.values.get(1, 0));
        let l = mi_loss(&j);
        assert!(l <= 0.0 && l >= -(2f64.ln()));
    }

    #[test]
    fn mismatched_views() {
        let a = assign(2, 3, vec![0.5; 6]);
        let b = assign(2, 2, vec![0.5; 4]);
        assert!(joint_distribution(&a, &b).is_err());
    }
}
