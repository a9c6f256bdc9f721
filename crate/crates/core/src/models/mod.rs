//! The five classifiers and two baselines behind one train/predict contract.
//!
//! Every prediction carries five class scores indexed F..A. The predicted
//! grade always attains the maximum score; when several grades tie, models
//! without a rule of their own pick the lowest.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Grade;
use crate::matrix::Matrix;

pub mod baseline;
pub mod knn;
pub mod naive_bayes;
pub mod regression;
pub mod smo;
pub mod svm;
pub mod tree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    SvmRbf,
    RegressionToGrade,
    DecisionTree,
    NaiveBayes,
    Knn,
    RandomBaseline,
    MajorityBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionBackend {
    LeastSquares,
    EpsilonSvr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Box constraint for the SVM and SVR duals.
    pub c: f64,
    pub k: usize,
    pub regression_backend: RegressionBackend,
    pub epsilon: f64,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            c: 1.0,
            k: 5,
            regression_backend: RegressionBackend::LeastSquares,
            epsilon: 0.1,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.c.is_nan() || self.c <= 0.0 {
            return Err(Error::InvalidSpec(format!("C must be > 0, got {}", self.c)));
        }
        if self.k < 1 {
            return Err(Error::InvalidSpec("k must be >= 1".into()));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::InvalidSpec(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }

    /// The command-line name: `svm`, `linreg`, `svr`, `tree`, `nb`, `knn`,
    /// `random` or `majority`.
    pub fn name(&self) -> &'static str {
        match (self.kind, self.regression_backend) {
            (ModelKind::SvmRbf, _) => "svm",
            (ModelKind::RegressionToGrade, RegressionBackend::LeastSquares) => "linreg",
            (ModelKind::RegressionToGrade, RegressionBackend::EpsilonSvr) => "svr",
            (ModelKind::DecisionTree, _) => "tree",
            (ModelKind::NaiveBayes, _) => "nb",
            (ModelKind::Knn, _) => "knn",
            (ModelKind::RandomBaseline, _) => "random",
            (ModelKind::MajorityBaseline, _) => "majority",
        }
    }

    /// Row label in rendered reports.
    pub fn label(&self) -> &'static str {
        match (self.kind, self.regression_backend) {
            (ModelKind::SvmRbf, _) => "SVM",
            (ModelKind::RegressionToGrade, RegressionBackend::LeastSquares) => "Lin. Reg",
            (ModelKind::RegressionToGrade, RegressionBackend::EpsilonSvr) => "SVR",
            (ModelKind::DecisionTree, _) => "Decision Tree",
            (ModelKind::NaiveBayes, _) => "Naive Bayes",
            (ModelKind::Knn, _) => "KNN",
            (ModelKind::RandomBaseline, _) => "Random",
            (ModelKind::MajorityBaseline, _) => "Majority",
        }
    }

    /// Position in report tables.
    pub fn report_rank(&self) -> usize {
        match (self.kind, self.regression_backend) {
            (ModelKind::SvmRbf, _) => 0,
            (ModelKind::RegressionToGrade, RegressionBackend::LeastSquares) => 1,
            (ModelKind::RegressionToGrade, RegressionBackend::EpsilonSvr) => 2,
            (ModelKind::DecisionTree, _) => 3,
            (ModelKind::NaiveBayes, _) => 4,
            (ModelKind::Knn, _) => 5,
            (ModelKind::RandomBaseline, _) => 6,
            (ModelKind::MajorityBaseline, _) => 7,
        }
    }

    pub fn all_names() -> [&'static str; 8] {
        ["svm", "linreg", "svr", "tree", "nb", "knn", "random", "majority"]
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec = match s.trim().to_ascii_lowercase().as_str() {
            "svm" => ModelSpec::new(ModelKind::SvmRbf),
            "linreg" => ModelSpec::new(ModelKind::RegressionToGrade),
            "svr" => ModelSpec {
                regression_backend: RegressionBackend::EpsilonSvr,
                ..ModelSpec::new(ModelKind::RegressionToGrade)
            },
            "tree" => ModelSpec::new(ModelKind::DecisionTree),
            "nb" => ModelSpec::new(ModelKind::NaiveBayes),
            "knn" => ModelSpec::new(ModelKind::Knn),
            "random" => ModelSpec::new(ModelKind::RandomBaseline),
            "majority" => ModelSpec::new(ModelKind::MajorityBaseline),
            other => return Err(Error::InvalidSpec(format!("unknown model `{other}`"))),
        };
        Ok(spec)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionOutcome {
    pub grade: Grade,
    /// Indexed by [`Grade::index`] (F first).
    pub class_scores: [f64; 5],
}

impl PredictionOutcome {
    pub fn score(&self, g: Grade) -> f64 {
        self.class_scores[g.index()]
    }

    pub fn max_score(&self) -> f64 {
        self.class_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Grade with the highest score; ties go to the lower grade.
pub fn argmax_lower(scores: &[f64; 5]) -> Grade {
    let mut best = 0;
    for c in 1..5 {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    Grade::ALL[best]
}

#[derive(Debug, Clone, PartialEq)]
enum Fitted {
    Svm(svm::SvmModel),
    Linear(regression::LinearModel),
    Tree(tree::TreeModel),
    NaiveBayes(naive_bayes::NaiveBayesModel),
    Knn(knn::KnnModel),
    Random(baseline::RandomModel),
    Majority(baseline::MajorityModel),
}

/// An immutable fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    spec: ModelSpec,
    n_features: usize,
    fitted: Fitted,
}

pub fn train(spec: &ModelSpec, x: &Matrix, y: &[Grade]) -> Result<TrainedModel> {
    spec.validate()?;
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if y.len() != x.rows() {
        return Err(Error::DimensionMismatch { expected: x.rows(), got: y.len() });
    }
    let smo_cfg = smo::SmoConfig { c: spec.c, ..smo::SmoConfig::default() };
    let fitted = match spec.kind {
        ModelKind::SvmRbf => Fitted::Svm(svm::fit(x, y, spec.c, &smo_cfg)),
        ModelKind::RegressionToGrade => Fitted::Linear(match spec.regression_backend {
            RegressionBackend::LeastSquares => regression::fit_least_squares(x, y),
            RegressionBackend::EpsilonSvr => regression::fit_epsilon_svr(x, y, spec.c, spec.epsilon, &smo_cfg),
        }),
        ModelKind::DecisionTree => Fitted::Tree(tree::fit(x, y)),
        ModelKind::NaiveBayes => Fitted::NaiveBayes(naive_bayes::fit(x, y)),
        ModelKind::Knn => Fitted::Knn(knn::fit(x, y, spec.k)),
        ModelKind::RandomBaseline => Fitted::Random(baseline::RandomModel { seed: spec.seed }),
        ModelKind::MajorityBaseline => Fitted::Majority(baseline::fit_majority(y)),
    };
    let model = TrainedModel { spec: *spec, n_features: x.cols(), fitted };
    if !model.converged() {
        log::warn!("{}: SMO hit its pass limit; using the best solution so far", spec.name());
    }
    Ok(model)
}

impl TrainedModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// False if an SMO solve stopped at its pass limit.
    pub fn converged(&self) -> bool {
        match &self.fitted {
            Fitted::Svm(m) => m.converged,
            Fitted::Linear(m) => m.converged,
            _ => true,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<PredictionOutcome> {
        self.predict_at(x, 0)
    }

    /// `index` only matters for the random baseline, whose `index`-th
    /// prediction is a fixed function of (seed, index).
    pub fn predict_at(&self, x: &[f64], index: u64) -> Result<PredictionOutcome> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: x.len() });
        }
        Ok(match &self.fitted {
            Fitted::Svm(m) => m.predict(x),
            Fitted::Linear(m) => m.predict(x),
            Fitted::Tree(m) => m.predict(x),
            Fitted::NaiveBayes(m) => m.predict(x),
            Fitted::Knn(m) => m.predict(x),
            Fitted::Random(m) => m.predict_at(index),
            Fitted::Majority(m) => m.predict(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_tie_and_shift_invariance() {
        assert_eq!(argmax_lower(&[0.0, 1.0, 1.0, 0.0, 0.5]), Grade::D);
        let s = [0.3, -2.0, 0.9, 0.9, 0.1];
        let shifted = s.map(|v| v + 17.5);
        assert_eq!(argmax_lower(&s), argmax_lower(&shifted));
    }

    #[test]
    fn names_round_trip() {
        for name in ModelSpec::all_names() {
            let spec: ModelSpec = name.parse().unwrap();
            assert_eq!(spec.name(), name);
        }
        assert!("xgboost".parse::<ModelSpec>().is_err());
    }

    #[test]
    fn invalid_hyperparameters() {
        let mut s = ModelSpec::new(ModelKind::SvmRbf);
        s.c = 0.0;
        assert!(s.validate().is_err());
        let mut s = ModelSpec::new(ModelKind::Knn);
        s.k = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let m = train(&ModelSpec::new(ModelKind::Knn), &x, &[Grade::A, Grade::B]).unwrap();
        assert!(matches!(m.predict(&[1.0]), Err(Error::DimensionMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn predicted_grade_attains_max_score() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.5], [2.0, 1.0], [3.0, 3.0], [0.5, 2.0], [2.5, 0.0]]);
        let y = [Grade::F, Grade::D, Grade::C, Grade::A, Grade::B, Grade::C];
        for name in ModelSpec::all_names() {
            let spec: ModelSpec = name.parse().unwrap();
            let m = train(&spec, &x, &y).unwrap();
            for probe in [[0.1, 0.2], [2.0, 2.0], [9.0, -1.0]] {
                let out = m.predict(&probe).unwrap();
                assert_eq!(out.score(out.grade), out.max_score(), "{name}");
                assert!(out.class_scores.iter().all(|s| s.is_finite()), "{name}");
            }
        }
    }

    #[test]
    fn majority_on_training_rows() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]);
        let m = train(&ModelSpec::new(ModelKind::MajorityBaseline), &x, &[Grade::A, Grade::A, Grade::B]).unwrap();
        assert_eq!(m.predict(&[5.0]).unwrap().grade, Grade::A);
    }
}
