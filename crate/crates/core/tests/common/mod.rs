//! Reference implementations written independently of the library, used as
//! oracles by the integration tests.

#![allow(dead_code)]

use std::collections::HashMap;

use divclust::rng::Stream;

/// Every permutation of `0..n`, lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                prefix.push(j);
                extend(prefix, used, out);
                prefix.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Exhaustive minimum-cost assignment; the first optimum in lexicographic
/// order wins.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for p in permutations(cost.len()) {
        let total: f64 = p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        if best.as_ref().map_or(true, |(_, b)| total < *b) {
            best = Some((p, total));
        }
    }
    best.unwrap()
}

pub fn assignment_cost(cost: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts.filter(|&c| c > 0).map(|c| {
        let p = c as f64 / n;
        -p * p.ln()
    }).sum()
}

/// NMI with arithmetic-mean normalisation, from explicit probabilities.
pub fn oracle_nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut ca: HashMap<usize, usize> = HashMap::new();
    let mut cb: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
    }
    let mut mi = 0.0;
    for (&(x, y), &c) in &joint {
        let pxy = c as f64 / n;
        let px = ca[&x] as f64 / n;
        let py = cb[&y] as f64 / n;
        mi += pxy * (pxy / (px * py)).ln();
    }
    let ha = entropy(ca.values().copied(), n);
    let hb = entropy(cb.values().copied(), n);
    if ha + hb == 0.0 {
        return 0.0;
    }
    mi / ((ha + hb) / 2.0)
}

/// ARI by counting agreeing pairs directly.
pub fn oracle_ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut only_a, mut only_b, mut pairs) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            pairs += 1.0;
            if sa && sb {
                both += 1.0;
            }
            if sa {
                only_a += 1.0;
            }
            if sb {
                only_b += 1.0;
            }
        }
    }
    let expected = only_a * only_b / pairs;
    let max = (only_a + only_b) / 2.0;
    if max == expected {
        return if both == max { 1.0 } else { 0.0 };
    }
    (both - expected) / (max - expected)
}

pub fn random_labels(rng: &mut Stream, n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|_| rng.below(classes)).collect()
}

/// Random column-stochastic `c × n` matrix as rows of memberships.
pub fn random_assignment(rng: &mut Stream, c: usize, n: usize) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; n]; c];
    for j in 0..n {
        let raw: Vec<f64> = (0..c).map(|_| (2.0 * rng.gaussian()).exp()).collect();
        let s: f64 = raw.iter().sum();
        for i in 0..c {
            rows[i][j] = raw[i] / s;
        }
    }
    rows
}

fn cosine(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nx * ny)
}

/// Average best-match cosine similarity of `a`'s clusters into `b`.
pub fn oracle_aggregate(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .map(|qa| b.iter().map(|qb| cosine(qa, qb)).fold(f64::MIN, f64::max))
        .sum::<f64>()
        / a.len() as f64
}

/// Mean over heads of `main[k] + mean over k' != k of hinge(S_aggr(k,k') - d)`.
pub fn oracle_total_loss(main: &[f64], heads: &[Vec<Vec<f64>>], d: f64) -> f64 {
    let k = heads.len();
    let mut total = 0.0;
    for i in 0..k {
        let mut div = 0.0;
        for j in 0..k {
            if i != j {
                div += (oracle_aggregate(&heads[i], &heads[j]) - d).max(0.0);
            }
        }
        total += main[i] + if k > 1 { div / (k - 1) as f64 } else { 0.0 };
    }
    total / k as f64
}

/// Negative mutual information of the symmetrised two-view joint.
pub fn oracle_mi_loss(p1: &[Vec<f64>], p2: &[Vec<f64>]) -> f64 {
    let c = p1.len();
    let n = p1[0].len() as f64;
    let mut j = vec![vec![0.0; c]; c];
    for a in 0..c {
        for b in 0..c {
            let ab: f64 = p1[a].iter().zip(&p2[b]).map(|(x, y)| x * y).sum();
            let ba: f64 = p1[b].iter().zip(&p2[a]).map(|(x, y)| x * y).sum();
            j[a][b] = (ab + ba) / (2.0 * n);
        }
    }
    let row: Vec<f64> = j.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<f64> = (0..c).map(|b| (0..c).map(|a| j[a][b]).sum()).collect();
    let mut mi = 0.0;
    for a in 0..c {
        for b in 0..c {
            if j[a][b] > 0.0 {
                mi += j[a][b] * (j[a][b] / (row[a] * col[b])).ln();
            }
        }
    }
    -mi
}
