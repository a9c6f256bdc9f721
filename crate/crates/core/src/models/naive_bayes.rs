//! Gaussian naive Bayes.

use std::f64::consts::PI;

use crate::ingest::Grade;
use crate::matrix::Matrix;

use super::{argmax_lower, PredictionOutcome};

/// Fraction of the largest feature variance added to every variance.
pub const VAR_SMOOTHING: f64 = 1e-9;

/// Score given to classes never seen in training.
pub const ABSENT_CLASS_SCORE: f64 = f64::MIN;

#[derive(Debug, Clone, PartialEq)]
struct ClassStats {
    log_prior: f64,
    mean: Vec<f64>,
    var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayesModel {
    classes: [Option<ClassStats>; 5],
}

pub fn fit(x: &Matrix, y: &[Grade]) -> NaiveBayesModel {
    let (n, d) = (x.rows(), x.cols());
    let all: Vec<usize> = (0..n).collect();
    let (_, overall_var) = moments(x, &all);
    let largest = overall_var.iter().copied().fold(0.0, f64::max);
    // an all-constant training set would otherwise leave zero variances
    let epsilon = if largest > 0.0 { VAR_SMOOTHING * largest } else { VAR_SMOOTHING };

    let classes = std::array::from_fn(|c| {
        let rows: Vec<usize> = (0..n).filter(|&i| y[i].index() == c).collect();
        if rows.is_empty() {
            return None;
        }
        let (mean, mut var) = moments(x, &rows);
        var.iter_mut().for_each(|v| *v += epsilon);
        debug_assert_eq!(mean.len(), d);
        Some(ClassStats { log_prior: (rows.len() as f64 / n as f64).ln(), mean, var })
    });
    NaiveBayesModel { classes }
}

/// Per-column mean and population variance over `rows`.
fn moments(x: &Matrix, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let d = x.cols();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in rows {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for &i in rows {
        for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

impl NaiveBayesModel {
    /// Joint log-likelihood `log P(c) + Σ log N(xⱼ; μ, σ²)` per class.
    pub fn log_scores(&self, x: &[f64]) -> [f64; 5] {
        std::array::from_fn(|c| match &self.classes[c] {
            None => ABSENT_CLASS_SCORE,
            Some(s) => {
                s.log_prior
                    + x.iter()
                        .zip(&s.mean)
                        .zip(&s.var)
                        .map(|((v, m), var)| -0.5 * (2.0 * PI * var).ln() - (v - m) * (v - m) / (2.0 * var))
                        .sum::<f64>()
            }
        })
    }

    pub fn predict(&self, x: &[f64]) -> PredictionOutcome {
        let scores = self.log_scores(x);
        PredictionOutcome { grade: argmax_lower(&scores), class_scores: scores }
    }
}
