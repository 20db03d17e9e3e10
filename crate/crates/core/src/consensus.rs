//! Extracting one clustering from an ensemble.
//!
//! Three strategies are offered: `A` keeps the single head with the lowest
//! base loss, `B` builds a consensus over every head, and `C` builds it over
//! the ten lowest-loss heads. The consensus itself is average-linkage
//! agglomeration on `1 − co-association`, cut at `C` clusters.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Heads kept by strategy C.
pub const STRATEGY_C_SIZE: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsensusError {
    #[error("ensemble is empty")]
    Empty,
    #[error("labeling {index} has {found} samples, expected {expected}")]
    Misaligned { index: usize, expected: usize, found: usize },
    #[error("{losses} losses for {labelings} labelings")]
    LossCount { labelings: usize, losses: usize },
    #[error("cannot cut {samples} samples into {clusters} clusters")]
    TooManyClusters { samples: usize, clusters: usize },
    #[error("unknown strategy `{0}` (expected A, B or C)")]
    UnknownStrategy(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Single lowest-loss clustering.
    A,
    /// Consensus over all clusterings.
    B,
    /// Consensus over the ten lowest-loss clusterings.
    C,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::A, Strategy::B, Strategy::C];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::A => "A",
            Strategy::B => "B",
            Strategy::C => "C",
        })
    }
}

impl FromStr for Strategy {
    type Err = ConsensusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Strategy::A),
            "B" | "b" => Ok(Strategy::B),
            "C" | "c" => Ok(Strategy::C),
            other => Err(ConsensusError::UnknownStrategy(other.to_string())),
        }
    }
}

/// Hard labelings of every head plus the per-head base loss used for ranking.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub labelings: Vec<Vec<usize>>,
    pub losses: Vec<f64>,
    pub clusters: usize,
}

impl Ensemble {
    pub fn new(labelings: Vec<Vec<usize>>, losses: Vec<f64>, clusters: usize) -> Result<Self, ConsensusError> {
        check_aligned(&labelings)?;
        if losses.len() != labelings.len() {
            return Err(ConsensusError::LossCount { labelings: labelings.len(), losses: losses.len() });
        }
        Ok(Self { labelings, losses, clusters })
    }

    pub fn samples(&self) -> usize {
        self.labelings.first().map_or(0, Vec::len)
    }
}

fn check_aligned<L: AsRef<[usize]>>(labelings: &[L]) -> Result<(), ConsensusError> {
    let first = labelings.first().ok_or(ConsensusError::Empty)?.as_ref().len();
    for (index, l) in labelings.iter().enumerate() {
        if l.as_ref().len() != first {
            return Err(ConsensusError::Misaligned { index, expected: first, found: l.as_ref().len() });
        }
    }
    Ok(())
}

/// Indices of the heads a strategy uses, lowest loss first for A and C
/// (ties by index) and in ensemble order for B.
pub fn select(ensemble: &Ensemble, strategy: Strategy) -> Result<Vec<usize>, ConsensusError> {
    if ensemble.labelings.is_empty() {
        return Err(ConsensusError::Empty);
    }
    let mut ranked: Vec<usize> = (0..ensemble.labelings.len()).collect();
    ranked.sort_by(|&a, &b| ensemble.losses[a].total_cmp(&ensemble.losses[b]).then(a.cmp(&b)));
    Ok(match strategy {
        Strategy::A => vec![ranked[0]],
        Strategy::B => (0..ensemble.labelings.len()).collect(),
        Strategy::C => ranked.into_iter().take(STRATEGY_C_SIZE).collect(),
    })
}

/// Final labeling for a strategy: the chosen head itself for A, the
/// co-association consensus of the selected heads otherwise.
pub fn consensus(ensemble: &Ensemble, strategy: Strategy) -> Result<Vec<usize>, ConsensusError> {
    let chosen = select(ensemble, strategy)?;
    if strategy == Strategy::A {
        return Ok(ensemble.labelings[chosen[0]].clone());
    }
    let subset: Vec<&[usize]> = chosen.iter().map(|&i| ensemble.labelings[i].as_slice()).collect();
    consensus_labels(&coassociation(&subset)?, ensemble.clusters)
}

/// `N × N` fraction of labelings placing each pair of samples together.
#[derive(Clone, Debug, PartialEq)]
pub struct CoassociationMatrix {
    n: usize,
    labelings: u32,
    counts: Vec<u32>,
}

impl CoassociationMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of labelings the matrix was built from.
    pub fn labelings(&self) -> u32 {
        self.labelings
    }

    /// Labelings placing `i` and `j` together.
    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.n + j]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        f64::from(self.count(i, j)) / f64::from(self.labelings)
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.n).map(|j| self.get(i, j)).collect()
    }
}

pub fn coassociation<L: AsRef<[usize]>>(labelings: &[L]) -> Result<CoassociationMatrix, ConsensusError> {
    check_aligned(labelings)?;
    let n = labelings[0].as_ref().len();
    let mut counts = vec![0u32; n * n];
    for l in labelings {
        let l = l.as_ref();
        for i in 0..n {
            let row = &mut counts[i * n..(i + 1) * n];
            for (j, c) in row.iter_mut().enumerate() {
                if l[i] == l[j] {
                    *c += 1;
                }
            }
        }
    }
    Ok(CoassociationMatrix { n, labelings: labelings.len() as u32, counts })
}

/// Average-linkage agglomeration on `1 − coassoc`, stopped at `clusters`
/// clusters.
///
/// The closest pair is merged first; among equally close pairs the one with
/// the lowest (first, second) representative indices wins, where a cluster's
/// representative is its smallest sample index. Output labels number the
/// clusters in order of their smallest sample.
///
/// Samples that sit together in every labeling (co-association exactly 1)
/// are collapsed before linkage. Their zero-distance merges come first and
/// never change distances to anything else, so the result is unchanged. When
/// fewer than `clusters` such groups exist the cut lands inside the
/// zero-distance phase and is computed directly from the tie rule.
pub fn consensus_labels(coassoc: &CoassociationMatrix, clusters: usize) -> Result<Vec<usize>, ConsensusError> {
    let n = coassoc.len();
    if n == 0 {
        return Err(ConsensusError::Empty);
    }
    if clusters == 0 || clusters > n {
        return Err(ConsensusError::TooManyClusters { samples: n, clusters });
    }

    let mut group_of = vec![usize::MAX; n];
    let mut reps = Vec::new();
    for i in 0..n {
        if group_of[i] != usize::MAX {
            continue;
        }
        group_of[i] = reps.len();
        for j in i + 1..n {
            if group_of[j] == usize::MAX && coassoc.count(i, j) == coassoc.labelings() {
                group_of[j] = reps.len();
            }
        }
        reps.push(i);
    }
    let slot_of: Vec<usize> = if reps.len() < clusters {
        zero_distance_cut(&group_of, &reps, n - clusters)
    } else {
        let merged = link_groups(coassoc, &group_of, &reps, clusters);
        group_of.iter().map(|&g| reps[merged[g]]).collect()
    };
    Ok(number_by_first_member(&slot_of))
}

/// Distance-0 merges alone, stopped after `budget` of them. Under the
/// lowest-pair rule the group holding the smallest sample absorbs its
/// members in index order, then the next group, and so on. Returns the
/// smallest member of each sample's final cluster.
fn zero_distance_cut(group_of: &[usize], reps: &[usize], mut budget: usize) -> Vec<usize> {
    let mut members = vec![Vec::new(); reps.len()];
    for (i, &g) in group_of.iter().enumerate() {
        members[g].push(i);
    }
    let mut slot_of: Vec<usize> = (0..group_of.len()).collect();
    for group in &members {
        for &i in &group[1..] {
            if budget == 0 {
                return slot_of;
            }
            slot_of[i] = group[0];
            budget -= 1;
        }
    }
    slot_of
}

/// Average linkage between the groups; returns the surviving group per group.
fn link_groups(coassoc: &CoassociationMatrix, group_of: &[usize], reps: &[usize], clusters: usize) -> Vec<usize> {
    let mut sizes = vec![0u64; reps.len()];
    group_of.iter().for_each(|&x| sizes[x] += 1);
    let total = coassoc.labelings();
    // disagreements summed over member pairs; members of a group share a profile
    let disagree: Vec<u64> = reps
        .iter()
        .enumerate()
        .flat_map(|(x, &a)| {
            let sizes = &sizes;
            reps.iter()
                .enumerate()
                .map(move |(y, &b)| u64::from(total - coassoc.count(a, b)) * sizes[x] * sizes[y])
        })
        .collect();
    average_linkage(disagree, sizes, clusters)
}

/// Dense labels numbered in order of each cluster's first sample.
fn number_by_first_member(slot_of: &[usize]) -> Vec<usize> {
    let mut label_of_slot = std::collections::HashMap::new();
    slot_of
        .iter()
        .map(|&slot| {
            let next = label_of_slot.len();
            *label_of_slot.entry(slot).or_insert(next)
        })
        .collect()
}

/// Plain average linkage over single samples, without the grouping shortcut.
#[cfg(test)]
fn consensus_labels_unreduced(coassoc: &CoassociationMatrix, clusters: usize) -> Vec<usize> {
    let n = coassoc.len();
    let all: Vec<usize> = (0..n).collect();
    let merged = link_groups(coassoc, &all, &all, clusters);
    number_by_first_member(&merged)
}

/// Average distance between two clusters as an exact fraction
/// `disagreements / pairs`; the common `1/K'` factor is dropped.
#[derive(Clone, Copy, Debug)]
struct Linkage {
    disagreements: u64,
    pairs: u64,
}

impl Linkage {
    const NONE: Self = Self { disagreements: 1, pairs: 0 };

    fn less_than(self, other: Self) -> bool {
        if other.pairs == 0 {
            return self.pairs != 0;
        }
        u128::from(self.disagreements) * u128::from(other.pairs) < u128::from(other.disagreements) * u128::from(self.pairs)
    }

    fn equals(self, other: Self) -> bool {
        !self.less_than(other) && !other.less_than(self)
    }
}

/// Runs merges until `target` clusters remain; returns the surviving slot of
/// every initial slot. `disagree` is a dense `g × g` matrix of summed pair
/// disagreements. Merging adds rows, which keeps every distance exact, so
/// ties are real ties and break by index.
fn average_linkage(mut disagree: Vec<u64>, mut sizes: Vec<u64>, target: usize) -> Vec<usize> {
    let g = sizes.len();
    let mut active = vec![true; g];
    let mut parent: Vec<usize> = (0..g).collect();
    let link = |disagree: &[u64], sizes: &[u64], i: usize, j: usize| Linkage {
        disagreements: disagree[i * g + j],
        pairs: sizes[i] * sizes[j],
    };
    let nearest = |disagree: &[u64], sizes: &[u64], active: &[bool], i: usize| -> (Linkage, usize) {
        let mut best = (Linkage::NONE, usize::MAX);
        for j in (0..g).filter(|&j| j != i && active[j]) {
            let d = link(disagree, sizes, i, j);
            if d.less_than(best.0) {
                best = (d, j);
            }
        }
        best
    };
    let mut nn: Vec<(Linkage, usize)> = (0..g).map(|i| nearest(&disagree, &sizes, &active, i)).collect();

    for _ in 0..g - target {
        // lowest i attaining the global minimum, then its lowest partner
        let mut a = usize::MAX;
        for i in (0..g).filter(|&i| active[i]) {
            if a == usize::MAX || nn[i].0.less_than(nn[a].0) {
                a = i;
            }
        }
        let b = nn[a].1;
        let (keep, gone) = (a.min(b), a.max(b));
        for k in (0..g).filter(|&k| active[k] && k != keep && k != gone) {
            let d = disagree[keep * g + k] + disagree[gone * g + k];
            disagree[keep * g + k] = d;
            disagree[k * g + keep] = d;
        }
        active[gone] = false;
        sizes[keep] += sizes[gone];
        parent[gone] = keep;

        for i in (0..g).filter(|&i| active[i]) {
            if i == keep || nn[i].1 == keep || nn[i].1 == gone {
                nn[i] = nearest(&disagree, &sizes, &active, i);
            } else {
                let d = link(&disagree, &sizes, i, keep);
                if d.less_than(nn[i].0) || (d.equals(nn[i].0) && keep < nn[i].1) {
                    nn[i] = (d, keep);
                }
            }
        }
    }

    (0..g)
        .map(|mut s| {
            while parent[s] != s {
                s = parent[s];
            }
            s
        })
        .collect()
}
