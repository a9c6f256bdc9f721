//! Regression onto the numeric grade scale, rounded back to a letter.

use nalgebra::{DMatrix, DVector};

use crate::ingest::Grade;
use crate::matrix::{dot, Matrix};

use super::smo::{self, Problem, SmoConfig};
use super::PredictionOutcome;

/// Ridge damping added to the normal equations.
/// Ridge damping per training row: the penalty is `n·λ‖w‖²`, so the fit
/// only depends on the empirical distribution of the rows.
pub const DAMPING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub(crate) converged: bool,
}

impl LinearModel {
    pub fn raw(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.intercept
    }

    pub fn predict(&self, x: &[f64]) -> PredictionOutcome {
        outcome_from_value(self.raw(x))
    }
}

/// Clamps to [1, 5], rounds half away from zero; `class_scores[g] = −|ŷ − g|`.
pub fn outcome_from_value(value: f64) -> PredictionOutcome {
    let clamped = if value.is_nan() { 3.0 } else { value.clamp(1.0, 5.0) };
    let grade = Grade::new(clamped.round() as u8).expect("clamped to 1..=5");
    let mut scores = [0.0; 5];
    for g in Grade::ALL {
        scores[g.index()] = -(clamped - f64::from(g.value())).abs();
    }
    PredictionOutcome { grade, class_scores: scores }
}

fn targets(y: &[Grade]) -> Vec<f64> {
    y.iter().map(|g| f64::from(g.value())).collect()
}

/// Damped least squares with an unpenalized intercept: columns and targets
/// are centered, the ridge system is solved in whichever of the primal
/// (d × d) or dual (n × n) forms is smaller, and the intercept restores the
/// means. As the damping goes to zero this is the minimum-norm solution.
pub fn fit_least_squares(x: &Matrix, y: &[Grade]) -> LinearModel {
    let (n, d) = (x.rows(), x.cols());
    let t = targets(y);
    let y_mean = t.iter().sum::<f64>() / n as f64;
    let mut x_mean = vec![0.0; d];
    for r in x.iter_rows() {
        for (m, v) in x_mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= n as f64);

    let xc = DMatrix::from_fn(n, d, |i, j| x.get(i, j) - x_mean[j]);
    let yc = DVector::from_iterator(n, t.iter().map(|v| v - y_mean));

    let damping = DAMPING * n as f64;
    let w = if d <= n {
        let mut gram = xc.transpose() * &xc;
        let rhs = xc.transpose() * &yc;
        gram.iter_mut().step_by(d + 1).for_each(|v| *v += damping);
        solve_spd(gram, rhs)
    } else {
        let mut gram = &xc * xc.transpose();
        gram.iter_mut().step_by(n + 1).for_each(|v| *v += damping);
        let a = solve_spd(gram, yc);
        xc.transpose() * a
    };
    let weights: Vec<f64> = w.iter().copied().collect();
    let intercept = y_mean - dot(&weights, &x_mean);
    LinearModel { weights, intercept, converged: true }
}

/// Cholesky solve; falls back to an SVD pseudo-inverse if the damped Gram
/// matrix is numerically indefinite.
fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> DVector<f64> {
    match a.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => a.svd(true, true).solve(&b, 1e-12).expect("svd computed with u and v"),
    }
}

/// Linear-kernel ε-insensitive support vector regression.
pub fn fit_epsilon_svr(x: &Matrix, y: &[Grade], c: f64, epsilon: f64, cfg: &SmoConfig) -> LinearModel {
    let n = x.rows();
    let t = targets(y);
    let mut kernel = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = dot(x.row(i), x.row(j));
            kernel.set(i, j, v);
            kernel.set(j, i, v);
        }
    }
    // variables 0..n carry α⁺ (y = +1), n..2n carry α⁻ (y = −1)
    let rows: Vec<usize> = (0..n).chain(0..n).collect();
    let labels: Vec<f64> = (0..2 * n).map(|k| if k < n { 1.0 } else { -1.0 }).collect();
    let p: Vec<f64> = (0..2 * n).map(|k| if k < n { epsilon - t[k] } else { epsilon + t[k - n] }).collect();
    let prob = Problem { kernel: &kernel, rows, y: labels, p };
    let sol = smo::solve(&prob, &SmoConfig { c, ..*cfg });

    let mut weights = vec![0.0; x.cols()];
    for i in 0..n {
        let beta = sol.alpha[i] - sol.alpha[i + n];
        if beta != 0.0 {
            for (w, v) in weights.iter_mut().zip(x.row(i)) {
                *w += beta * v;
            }
        }
    }
    LinearModel { weights, intercept: -sol.rho, converged: sol.converged }
}
