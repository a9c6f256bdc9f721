//! One-vs-one RBF support vector classifier.

use crate::ingest::Grade;
use crate::matrix::{squared_distance, Matrix};

use super::smo::{self, Problem, SmoConfig};
use super::{argmax_lower, PredictionOutcome};

/// Weight of the summed |decision value| relative to one pairwise vote.
const MARGIN_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
struct PairMachine {
    /// Votes for `positive` when the decision value is > 0.
    positive: Grade,
    negative: Grade,
    /// (training row, αᵢyᵢ) for every support vector.
    support: Vec<(usize, f64)>,
    rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    gamma: f64,
    train: Matrix,
    machines: Vec<PairMachine>,
    /// Set when only one class was present in training.
    only_class: Option<Grade>,
    pub(crate) converged: bool,
}

pub fn rbf_kernel_matrix(x: &Matrix, gamma: f64) -> Matrix {
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k.set(i, i, 1.0);
        for j in 0..i {
            let v = (-gamma * squared_distance(x.row(i), x.row(j))).exp();
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

pub fn fit(x: &Matrix, y: &[Grade], c: f64, cfg: &SmoConfig) -> SvmModel {
    let gamma = 1.0 / x.cols() as f64;
    let mut classes: Vec<Grade> = y.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return SvmModel {
            gamma,
            train: Matrix::zeros(0, x.cols()),
            machines: Vec::new(),
            only_class: classes.first().copied(),
            converged: true,
        };
    }

    let kernel = rbf_kernel_matrix(x, gamma);
    let cfg = SmoConfig { c, ..*cfg };
    let mut machines = Vec::new();
    let mut converged = true;
    for (a, &pos) in classes.iter().enumerate() {
        for &neg in &classes[a + 1..] {
            let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == pos || y[i] == neg).collect();
            let labels: Vec<f64> = rows.iter().map(|&i| if y[i] == pos { 1.0 } else { -1.0 }).collect();
            let prob = Problem { kernel: &kernel, p: vec![-1.0; rows.len()], rows, y: labels };
            let sol = smo::solve(&prob, &cfg);
            converged &= sol.converged;
            let support = prob
                .rows
                .iter()
                .zip(&sol.alpha)
                .zip(&prob.y)
                .filter(|((_, &a), _)| a > 0.0)
                .map(|((&r, &a), &yl)| (r, a * yl))
                .collect();
            machines.push(PairMachine { positive: pos, negative: neg, support, rho: sol.rho });
        }
    }
    SvmModel { gamma, train: x.clone(), machines, only_class: None, converged }
}

impl SvmModel {
    /// Decision value of every pairwise machine, in (lower, higher) class
    /// order.
    pub fn decision_values(&self, x: &[f64]) -> Vec<(Grade, Grade, f64)> {
        let mut cache: Vec<Option<f64>> = vec![None; self.train.rows()];
        let mut kernel = |r: usize| {
            *cache[r].get_or_insert_with(|| (-self.gamma * squared_distance(self.train.row(r), x)).exp())
        };
        self.machines
            .iter()
            .map(|m| {
                let dec = m.support.iter().map(|&(r, coef)| coef * kernel(r)).sum::<f64>() - m.rho;
                (m.positive, m.negative, dec)
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> PredictionOutcome {
        if let Some(g) = self.only_class {
            let mut scores = [0.0; 5];
            scores[g.index()] = 1.0;
            return PredictionOutcome { grade: g, class_scores: scores };
        }
        let mut votes = [0.0; 5];
        let mut margin = [0.0; 5];
        for (pos, neg, dec) in self.decision_values(x) {
            let winner = if dec > 0.0 { pos } else { neg };
            votes[winner.index()] += 1.0;
            margin[winner.index()] += dec.abs();
        }
        let mut scores = [0.0; 5];
        for g in 0..5 {
            scores[g] = votes[g] + MARGIN_WEIGHT * margin[g];
        }
        PredictionOutcome { grade: argmax_lower(&scores), class_scores: scores }
    }
}
