use crate::ingest::Grade;
use crate::matrix::{squared_distance, Matrix};

use super::PredictionOutcome;

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    k: usize,
    train: Matrix,
    labels: Vec<Grade>,
}

/// Stores the training set; `k` is clamped to its size.
pub fn fit(x: &Matrix, y: &[Grade], k: usize) -> KnnModel {
    KnnModel { k: k.min(x.rows()).max(1), train: x.clone(), labels: y.to_vec() }
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Training rows ordered by Euclidean distance, ties by row index.
    pub fn neighbors(&self, x: &[f64]) -> Vec<usize> {
        let mut by_dist: Vec<(f64, usize)> =
            self.train.iter_rows().enumerate().map(|(i, r)| (squared_distance(r, x), i)).collect();
        by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        by_dist.into_iter().take(self.k).map(|(_, i)| i).collect()
    }

    pub fn predict(&self, x: &[f64]) -> PredictionOutcome {
        let neighbors = self.neighbors(x);
        let mut votes = [0usize; 5];
        for &i in &neighbors {
            votes[self.labels[i].index()] += 1;
        }
        let top = *votes.iter().max().unwrap();
        // tied classes resolve to whichever one the nearest neighbor holds
        let grade = neighbors
            .iter()
            .map(|&i| self.labels[i])
            .find(|g| votes[g.index()] == top)
            .expect("k >= 1");
        let class_scores = votes.map(|v| v as f64 / self.k as f64);
        PredictionOutcome { grade, class_scores }
    }
}
