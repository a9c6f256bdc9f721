//! CART classification tree: binary splits on Gini impurity, grown until
//! every leaf is pure or its rows cannot be separated on any feature.
//! A split that leaves impurity unchanged is still taken (weighted child
//! impurity never exceeds the parent's), so consistent data with distinct
//! rows is always fitted exactly.
//!
//! Split quality is compared in exact integer arithmetic so that equally
//! good splits always tie and the (feature, threshold) tie-break applies.

use std::cmp::Ordering;

use crate::ingest::Grade;
use crate::matrix::Matrix;

use super::{argmax_lower, PredictionOutcome};

type Counts = [u64; 5];

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf { counts: Counts },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    nodes: Vec<Node>,
}

/// Gini impurity of a label multiset.
pub fn gini(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let sq: u64 = counts.iter().map(|c| c * c).sum();
    1.0 - sq as f64 / (n * n) as f64
}

/// n·Gini as the exact fraction (n² − Σc²) / n.
fn weighted_impurity(counts: &Counts) -> (u128, u128) {
    let n: u64 = counts.iter().sum();
    let sq: u64 = counts.iter().map(|c| c * c).sum();
    (u128::from(n * n - sq), u128::from(n.max(1)))
}

/// Sum of two fractions, unreduced.
fn add((a, b): (u128, u128), (c, d): (u128, u128)) -> (u128, u128) {
    (a * d + c * b, b * d)
}

fn cmp_frac((a, b): (u128, u128), (c, d): (u128, u128)) -> Ordering {
    (a * d).cmp(&(c * b))
}

fn counts_of(idx: &[usize], y: &[Grade]) -> Counts {
    let mut c = [0; 5];
    for &i in idx {
        c[y[i].index()] += 1;
    }
    c
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: (u128, u128),
}

pub fn fit(x: &Matrix, y: &[Grade]) -> TreeModel {
    let d = x.cols();
    // per feature, row indices sorted by value (stable in row order)
    let sorted: Vec<Vec<usize>> = (0..d)
        .map(|j| {
            let mut idx: Vec<usize> = (0..x.rows()).collect();
            idx.sort_by(|&a, &b| x.get(a, j).total_cmp(&x.get(b, j)));
            idx
        })
        .collect();
    let mut nodes = Vec::new();
    grow(x, y, sorted, &mut nodes);
    TreeModel { nodes }
}

fn grow(x: &Matrix, y: &[Grade], sorted: Vec<Vec<usize>>, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    let members = &sorted[0];
    let counts = counts_of(members, y);
    nodes.push(Node::Leaf { counts });
    if counts.iter().filter(|&&c| c > 0).count() <= 1 {
        return id;
    }
    let Some(best) = best_split(x, y, &sorted, &counts) else { return id };

    let mut goes_left = vec![false; x.rows()];
    for &i in members {
        goes_left[i] = x.get(i, best.feature) <= best.threshold;
    }
    let (left_sorted, right_sorted): (Vec<_>, Vec<_>) = sorted
        .into_iter()
        .map(|idx| idx.into_iter().partition::<Vec<usize>, _>(|&i| goes_left[i]))
        .unzip();
    let left = grow(x, y, left_sorted, nodes);
    let right = grow(x, y, right_sorted, nodes);
    nodes[id] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
    id
}

fn best_split(x: &Matrix, y: &[Grade], sorted: &[Vec<usize>], parent: &Counts) -> Option<Candidate> {
    let parent_score = weighted_impurity(parent);
    let mut best: Option<Candidate> = None;
    for (feature, idx) in sorted.iter().enumerate() {
        let mut left = [0u64; 5];
        let mut right = *parent;
        for k in 0..idx.len() - 1 {
            let c = y[idx[k]].index();
            left[c] += 1;
            right[c] -= 1;
            let (lo, hi) = (x.get(idx[k], feature), x.get(idx[k + 1], feature));
            if lo == hi {
                continue;
            }
            let score = add(weighted_impurity(&left), weighted_impurity(&right));
            if cmp_frac(score, parent_score) == Ordering::Greater {
                continue;
            }
            if best.as_ref().is_none_or(|b| cmp_frac(score, b.score) == Ordering::Less) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Candidate { feature, threshold, score });
            }
        }
    }
    best
}

impl TreeModel {
    fn leaf(&self, x: &[f64]) -> &Counts {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { counts } => return counts,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> PredictionOutcome {
        let counts = self.leaf(x);
        let n: u64 = counts.iter().sum();
        let mut scores = [0.0; 5];
        for (s, &c) in scores.iter_mut().zip(counts) {
            *s = c as f64 / n as f64;
        }
        PredictionOutcome { grade: argmax_lower(&scores), class_scores: scores }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// (feature, threshold) of the root split, if any.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first()? {
            Node::Split { feature, threshold, .. } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }
}
