//! Sequential minimal optimization for box-constrained quadratic programs
//! of the form
//!
//! ```text
//! minimize   ½ αᵀQα + pᵀα
//! subject to yᵀα = 0,  0 ≤ αᵢ ≤ C,  yᵢ ∈ {−1, +1}
//! ```
//!
//! with `Qᵢⱼ = yᵢ yⱼ K(row(i), row(j))` read from a precomputed kernel
//! matrix. Soft-margin classification and ε-insensitive regression are both
//! instances. Each step optimizes the maximal-violating pair (second-order
//! selection); the solver stops once no pair violates the KKT conditions by
//! more than the tolerance, i.e. a full scan finds nothing left to update.

use crate::matrix::Matrix;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoConfig {
    pub c: f64,
    /// KKT violation tolerance.
    pub tol: f64,
    /// Cap on full passes; one pass is `n` pair updates.
    pub max_passes: usize,
    /// Record the objective after every update.
    pub trace: bool,
}

impl Default for SmoConfig {
    fn default() -> Self {
        SmoConfig { c: 1.0, tol: 1e-3, max_passes: 10_000, trace: false }
    }
}

/// A dual problem over a subset of kernel rows.
pub struct Problem<'a> {
    pub kernel: &'a Matrix,
    /// Kernel row of each variable.
    pub rows: Vec<usize>,
    pub y: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub alpha: Vec<f64>,
    /// Offset; the decision value is `Σ αᵢ yᵢ K(xᵢ, x) − rho`.
    pub rho: f64,
    /// Value of `½ αᵀQα + pᵀα` at `alpha`.
    pub objective: f64,
    pub iterations: usize,
    /// Largest KKT violation `m(α) − M(α)` at exit.
    pub max_violation: f64,
    pub converged: bool,
    pub trace: Vec<f64>,
}

impl Problem<'_> {
    fn q(&self, i: usize, j: usize) -> f64 {
        self.y[i] * self.y[j] * self.kernel.get(self.rows[i], self.rows[j])
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn objective(&self, alpha: &[f64]) -> f64 {
        let n = self.len();
        let mut quad = 0.0;
        for i in 0..n {
            if alpha[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                quad += alpha[i] * alpha[j] * self.q(i, j);
            }
        }
        0.5 * quad + alpha.iter().zip(&self.p).map(|(a, p)| a * p).sum::<f64>()
    }
}

struct State<'p, 'k> {
    prob: &'p Problem<'k>,
    c: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    diag: Vec<f64>,
}

impl State<'_, '_> {
    fn upper(&self, t: usize) -> bool {
        self.alpha[t] >= self.c
    }

    fn lower(&self, t: usize) -> bool {
        self.alpha[t] <= 0.0
    }

    /// Returns the working pair, or `None` when optimal within `tol`, along
    /// with the current violation.
    fn select(&self, tol: f64) -> (Option<(usize, usize)>, f64) {
        let y = &self.prob.y;
        let g = &self.grad;
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..y.len() {
            let v = if y[t] > 0.0 {
                (!self.upper(t)).then(|| -g[t])
            } else {
                (!self.lower(t)).then(|| g[t])
            };
            if let Some(v) = v {
                if v > gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let Some(i) = i_sel else { return (None, 0.0) };

        let mut gmax2 = f64::NEG_INFINITY;
        let mut best_obj = f64::INFINITY;
        let mut j_sel = None;
        for t in 0..y.len() {
            let (in_low, grad_diff, v) = if y[t] > 0.0 {
                (!self.lower(t), gmax + g[t], g[t])
            } else {
                (!self.upper(t), gmax - g[t], -g[t])
            };
            if !in_low {
                continue;
            }
            gmax2 = gmax2.max(v);
            if grad_diff > 0.0 {
                // yᵢyₜQᵢₜ is the raw kernel entry
                let quad = self.diag[i] + self.diag[t] - 2.0 * y[i] * y[t] * self.prob.q(i, t);
                let quad = if quad > 0.0 { quad } else { TAU };
                let obj = -(grad_diff * grad_diff) / quad;
                if obj < best_obj {
                    best_obj = obj;
                    j_sel = Some(t);
                }
            }
        }
        let violation = gmax + gmax2;
        match j_sel {
            Some(j) if violation >= tol => (Some((i, j)), violation),
            _ => (None, violation.max(0.0)),
        }
    }

    fn update(&mut self, i: usize, j: usize) {
        let (c, y) = (self.c, &self.prob.y);
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let qij = self.prob.q(i, j);
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let quad = positive(self.diag[i] + self.diag[j] + 2.0 * qij);
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = positive(self.diag[i] + self.diag[j] - 2.0 * qij);
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for k in 0..self.grad.len() {
            self.grad[k] += self.prob.q(i, k) * di + self.prob.q(j, k) * dj;
        }
    }

    fn rho(&self) -> f64 {
        let y = &self.prob.y;
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut sum_free, mut n_free) = (0.0, 0usize);
        for t in 0..y.len() {
            let yg = y[t] * self.grad[t];
            if self.upper(t) {
                if y[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.lower(t) {
                if y[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                n_free += 1;
                sum_free += yg;
            }
        }
        if n_free > 0 {
            sum_free / n_free as f64
        } else {
            (ub + lb) / 2.0
        }
    }

    fn objective(&self) -> f64 {
        // ½ αᵀQα + pᵀα = ½ αᵀ(G + p)
        self.alpha.iter().zip(&self.grad).zip(&self.prob.p).map(|((a, g), p)| 0.5 * a * (g + p)).sum()
    }
}

fn positive(quad: f64) -> f64 {
    if quad > 0.0 {
        quad
    } else {
        TAU
    }
}

pub fn solve(prob: &Problem<'_>, cfg: &SmoConfig) -> Solution {
    let n = prob.len();
    let diag: Vec<f64> = (0..n).map(|i| prob.q(i, i)).collect();
    let mut st = State { prob, c: cfg.c, alpha: vec![0.0; n], grad: prob.p.clone(), diag };
    let max_iter = cfg.max_passes.saturating_mul(n.max(1));
    let mut trace = Vec::new();
    let mut iterations = 0;
    let (converged, max_violation) = loop {
        let (pair, violation) = st.select(cfg.tol);
        let Some((i, j)) = pair else { break (true, violation) };
        if iterations >= max_iter {
            break (false, violation);
        }
        st.update(i, j);
        iterations += 1;
        if cfg.trace {
            trace.push(st.objective());
        }
    };
    Solution {
        rho: st.rho(),
        objective: st.objective(),
        alpha: st.alpha,
        iterations,
        max_violation,
        converged,
        trace,
    }
}

/// Largest violation of the KKT conditions at `alpha`, computed from
/// scratch: `max_{I_up} −yᵢ∇ᵢ − min_{I_low} −yᵢ∇ᵢ` (0 if either set is
/// empty).
pub fn kkt_violation(prob: &Problem<'_>, alpha: &[f64], c: f64) -> f64 {
    let n = prob.len();
    let grad: Vec<f64> = (0..n).map(|i| prob.p[i] + (0..n).map(|j| prob.q(i, j) * alpha[j]).sum::<f64>()).collect();
    let (mut m, mut big_m) = (f64::NEG_INFINITY, f64::INFINITY);
    for t in 0..n {
        let v = -prob.y[t] * grad[t];
        let up = (prob.y[t] > 0.0 && alpha[t] < c) || (prob.y[t] < 0.0 && alpha[t] > 0.0);
        let low = (prob.y[t] > 0.0 && alpha[t] > 0.0) || (prob.y[t] < 0.0 && alpha[t] < c);
        if up {
            m = m.max(v);
        }
        if low {
            big_m = big_m.min(v);
        }
    }
    if m.is_finite() && big_m.is_finite() {
        (m - big_m).max(0.0)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rbf(points: &[[f64; 1]], gamma: f64) -> Matrix {
        let n = points.len();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let d = points[i][0] - points[j][0];
                k.set(i, j, (-gamma * d * d).exp());
            }
        }
        k
    }

    fn classification<'a>(k: &'a Matrix, y: &[f64]) -> Problem<'a> {
        Problem { kernel: k, rows: (0..y.len()).collect(), y: y.to_vec(), p: vec![-1.0; y.len()] }
    }

    #[test]
    fn two_point_closed_form() {
        // max 2a − a²(1 − k) with a ≤ C gives a = min(C, 1/(1 − k)).
        for (gap, c) in [(0.5, 1.0), (3.0, 1.0), (3.0, 10.0), (0.1, 0.5)] {
            let k = rbf(&[[0.0], [gap]], 1.0);
            let kij = k.get(0, 1);
            let prob = classification(&k, &[1.0, -1.0]);
            let sol = solve(&prob, &SmoConfig { c, ..SmoConfig::default() });
            let expect = c.min(1.0 / (1.0 - kij));
            assert!((sol.alpha[0] - expect).abs() < 1e-9, "{sol:?} vs {expect}");
            assert!((sol.alpha[1] - expect).abs() < 1e-9);
            assert!(sol.rho.abs() < 1e-9);
            assert!(sol.converged);
        }
    }

    #[test]
    fn objective_is_monotone_and_kkt_holds() {
        let pts = [[0.0], [0.3], [1.0], [1.2], [2.0], [2.1]];
        let y = [1.0, 1.0, -1.0, -1.0, 1.0, -1.0];
        let k = rbf(&pts, 0.7);
        let prob = classification(&k, &y);
        let sol = solve(&prob, &SmoConfig { trace: true, ..SmoConfig::default() });
        assert!(sol.converged);
        for w in sol.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "objective went up: {w:?}");
        }
        assert!(kkt_violation(&prob, &sol.alpha, 1.0) <= 1e-3);
        assert!((prob.objective(&sol.alpha) - sol.objective).abs() < 1e-9);
        let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(balance.abs() < 1e-12);
    }

    #[test]
    fn single_class_stays_at_zero() {
        let k = rbf(&[[0.0], [1.0]], 1.0);
        let prob = classification(&k, &[1.0, 1.0]);
        let sol = solve(&prob, &SmoConfig::default());
        assert_eq!(sol.alpha, vec![0.0, 0.0]);
        assert!(sol.converged);
    }
}
