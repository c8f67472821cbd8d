//! Proximal Newton with coordinate descent on the local quadratic model and
//! Armijo backtracking on the penalized objective.

use ndarray::{Array1, Array2};

use super::PenaltyConfig;

pub(crate) trait SmoothLoss {
    fn dim(&self) -> usize;
    fn value(&self, beta: &Array1<f64>) -> f64;
    /// Gradient and Hessian with respect to the coefficients.
    fn gradient_hessian(&self, beta: &Array1<f64>) -> (Array1<f64>, Array2<f64>);
}

#[derive(Debug, Clone)]
pub(crate) struct SolverOutput {
    pub beta: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

pub(crate) struct Solver {
    pub penalty: PenaltyConfig,
    /// 1 for penalized coordinates, 0 for free ones (intercept).
    pub weights: Array1<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

const INNER_MAX_SWEEPS: usize = 10_000;
const INNER_TOL: f64 = 1e-13;
const ARMIJO: f64 = 1e-4;

impl Solver {
    fn penalty_value(&self, beta: &Array1<f64>) -> f64 {
        let p = &self.penalty;
        beta.iter()
            .zip(&self.weights)
            .map(|(b, w)| w * p.alpha * (p.l1_ratio * b.abs() + 0.5 * (1.0 - p.l1_ratio) * b * b))
            .sum()
    }

    pub fn objective<L: SmoothLoss>(&self, loss: &L, beta: &Array1<f64>) -> f64 {
        loss.value(beta) + self.penalty_value(beta)
    }

    /// Minimizes `gᵀ(b − β) + ½(b − β)ᵀH(b − β) + penalty(b)` by cyclic
    /// coordinate descent in index order.
    fn quadratic_step(&self, beta: &Array1<f64>, g: &Array1<f64>, h: &Array2<f64>) -> Array1<f64> {
        let p = beta.len();
        let l1 = self.penalty.alpha * self.penalty.l1_ratio;
        let l2 = self.penalty.alpha * (1.0 - self.penalty.l1_ratio);
        let mut b = beta.clone();
        // r = g + H (b − β), the model gradient at b.
        let mut r = g.clone();
        for _ in 0..INNER_MAX_SWEEPS {
            let mut max_change: f64 = 0.0;
            for j in 0..p {
                let hjj = h[[j, j]];
                let denom = hjj + l2 * self.weights[j];
                if denom <= 1e-14 {
                    continue;
                }
                let u = hjj * b[j] - r[j];
                let thresh = l1 * self.weights[j];
                let new = soft_threshold(u, thresh) / denom;
                let delta = new - b[j];
                if delta != 0.0 {
                    b[j] = new;
                    r.scaled_add(delta, &h.column(j));
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change < INNER_TOL {
                break;
            }
        }
        b
    }

    pub fn run<L: SmoothLoss>(&self, loss: &L, start: Array1<f64>) -> SolverOutput {
        let mut beta = start;
        let mut f = self.objective(loss, &beta);
        let mut trace = vec![f];
        let mut converged = false;
        let mut iterations = 0;
        while iterations < self.max_iter {
            iterations += 1;
            let (g, h) = loss.gradient_hessian(&beta);
            let target = self.quadratic_step(&beta, &g, &h);
            let d = &target - &beta;
            let decrease = g.dot(&d) + self.penalty_value(&target) - self.penalty_value(&beta);
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1e-12 {
                let trial = &beta + &(&d * t);
                let ft = self.objective(loss, &trial);
                if ft.is_finite() && ft <= f + ARMIJO * t * decrease.min(0.0) {
                    accepted = Some((trial, ft));
                    break;
                }
                t *= 0.5;
            }
            let step = d.iter().fold(0.0f64, |m, v| m.max(v.abs())) * t;
            match accepted {
                Some((trial, ft)) => {
                    beta = trial;
                    f = ft;
                    trace.push(f);
                }
                None => {
                    // no descent possible along the model direction
                    converged = step < self.tol.sqrt();
                    break;
                }
            }
            if step < self.tol {
                converged = true;
                break;
            }
        }
        SolverOutput {
            beta,
            iterations,
            converged,
            objective_trace: trace,
        }
    }

    /// Largest violation of the optimality conditions at `beta` given the
    /// smooth-loss gradient.
    pub fn kkt_violation(&self, beta: &Array1<f64>, gradient: &Array1<f64>) -> f64 {
        let l1 = self.penalty.alpha * self.penalty.l1_ratio;
        let l2 = self.penalty.alpha * (1.0 - self.penalty.l1_ratio);
        (0..beta.len())
            .map(|j| {
                let w = self.weights[j];
                let g = gradient[j] + l2 * w * beta[j];
                if beta[j] == 0.0 {
                    (g.abs() - l1 * w).max(0.0)
                } else {
                    (g + l1 * w * beta[j].signum()).abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn soft_threshold(u: f64, t: f64) -> f64 {
    if u > t {
        u - t
    } else if u < -t {
        u + t
    } else {
        0.0
    }
}
