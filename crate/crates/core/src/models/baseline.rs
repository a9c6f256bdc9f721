use rand::Rng;

use crate::ingest::Grade;
use crate::rng;

use super::{argmax_lower, PredictionOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct MajorityModel {
    pub majority: Grade,
    pub frequencies: [f64; 5],
}

/// Most frequent training grade; equal counts go to the higher grade.
pub fn fit_majority(y: &[Grade]) -> MajorityModel {
    let mut counts = [0usize; 5];
    for g in y {
        counts[g.index()] += 1;
    }
    let best = (0..5).rev().max_by_key(|&c| (counts[c], c)).unwrap();
    let n = y.len() as f64;
    MajorityModel { majority: Grade::ALL[best], frequencies: counts.map(|c| c as f64 / n) }
}

impl MajorityModel {
    pub fn predict(&self) -> PredictionOutcome {
        PredictionOutcome { grade: self.majority, class_scores: self.frequencies }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomModel {
    pub seed: u64,
}

impl RandomModel {
    /// Prediction number `index` draws five independent uniform scores from
    /// the stream keyed by (seed, index); the grade is their argmax, which
    /// is uniform over the five grades.
    pub fn predict_at(&self, index: u64) -> PredictionOutcome {
        let mut rng = rng::stream(self.seed, index);
        let scores: [f64; 5] = std::array::from_fn(|_| rng.random::<f64>());
        PredictionOutcome { grade: argmax_lower(&scores), class_scores: scores }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_examples() {
        assert_eq!(fit_majority(&[Grade::A, Grade::A, Grade::B]).majority, Grade::A);
        assert_eq!(fit_majority(&[Grade::C, Grade::B]).majority, Grade::B);
        let mut y = vec![Grade::A; 119];
        y.extend([Grade::B; 72]);
        y.extend([Grade::C; 22]);
        y.extend([Grade::D; 10]);
        y.extend([Grade::F; 26]);
        let m = fit_majority(&y);
        assert_eq!(m.majority, Grade::A);
        assert_eq!(m.predict().class_scores[Grade::A.index()], 119.0 / 249.0);
    }

    #[test]
    fn random_is_reproducible_and_roughly_uniform() {
        let m = RandomModel { seed: 7 };
        let a: Vec<_> = (0..50).map(|i| m.predict_at(i).grade).collect();
        let b: Vec<_> = (0..50).map(|i| m.predict_at(i).grade).collect();
        assert_eq!(a, b);
        let mut counts = [0usize; 5];
        for i in 0..5000 {
            counts[m.predict_at(i).grade.index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 5000.0 - 0.2).abs() < 0.03, "{counts:?}");
        }
    }
}
