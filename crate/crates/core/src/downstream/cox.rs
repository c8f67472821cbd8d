use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::solver::{SmoothLoss, Solver};
use super::{check_rows, interpret, FittedModel, ModelKind, PenaltyConfig, Scaling, TrainingMeta};
use crate::error::{Error, Result};
use crate::linalg;

const MAX_ITER: usize = 10_000;
const TOL: f64 = 1e-8;

/// Negative Breslow partial log-likelihood divided by the sample count.
struct CoxLoss {
    x: Array2<f64>,
    event: Vec<bool>,
    /// Groups of tied times, latest first.
    groups: Vec<Vec<usize>>,
}

impl CoxLoss {
    fn new(x: Array2<f64>, time: ArrayView1<f64>, event: &[bool]) -> Self {
        let mut order: Vec<usize> = (0..time.len()).collect();
        order.sort_by(|&a, &b| time[b].total_cmp(&time[a]).then(a.cmp(&b)));
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in order {
            match groups.last_mut() {
                Some(g) if time[g[0]] == time[i] => g.push(i),
                _ => groups.push(vec![i]),
            }
        }
        Self {
            x,
            event: event.to_vec(),
            groups,
        }
    }

    fn shifted_risk(&self, beta: &Array1<f64>) -> (Array1<f64>, f64) {
        let eta = self.x.dot(beta);
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (eta, if shift.is_finite() { shift } else { 0.0 })
    }
}

impl SmoothLoss for CoxLoss {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn value(&self, beta: &Array1<f64>) -> f64 {
        let (eta, shift) = self.shifted_risk(beta);
        let mut s0 = 0.0;
        let mut total = 0.0;
        for g in &self.groups {
            for &i in g {
                s0 += (eta[i] - shift).exp();
            }
            let log_s0 = s0.ln();
            for &i in g {
                if self.event[i] {
                    total -= eta[i] - shift - log_s0;
                }
            }
        }
        total / self.event.len() as f64
    }

    fn gradient_hessian(&self, beta: &Array1<f64>) -> (Array1<f64>, Array2<f64>) {
        let p = self.dim();
        let n = self.event.len() as f64;
        let (eta, shift) = self.shifted_risk(beta);
        let mut s0 = 0.0;
        let mut s1 = Array1::zeros(p);
        let mut s2 = Array2::<f64>::zeros((p, p));
        let mut g = Array1::zeros(p);
        let mut h = Array2::<f64>::zeros((p, p));
        for grp in &self.groups {
            for &i in grp {
                let w = (eta[i] - shift).exp();
                let xi = self.x.row(i);
                s0 += w;
                s1.scaled_add(w, &xi);
                for a in 0..p {
                    let wa = w * xi[a];
                    if wa != 0.0 {
                        for b in 0..p {
                            s2[[a, b]] += wa * xi[b];
                        }
                    }
                }
            }
            let d = grp.iter().filter(|&&i| self.event[i]).count();
            if d == 0 {
                continue;
            }
            let mean = &s1 / s0;
            for &i in grp {
                if self.event[i] {
                    g -= &self.x.row(i);
                }
            }
            g.scaled_add(d as f64, &mean);
            for a in 0..p {
                for b in 0..p {
                    h[[a, b]] += d as f64 * (s2[[a, b]] / s0 - mean[a] * mean[b]);
                }
            }
        }
        (g / n, h / n)
    }
}

fn validate_outcome(time: ArrayView1<f64>, event: &[bool]) -> Result<()> {
    if time.len() != event.len() {
        return Err(Error::Schema("time and event lengths differ".into()));
    }
    if time.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::DegenerateData("survival times must be positive and finite".into()));
    }
    if !event.iter().any(|&e| e) {
        return Err(Error::NoEvents);
    }
    Ok(())
}

fn solver(penalty: PenaltyConfig, p: usize) -> Solver {
    Solver {
        penalty,
        weights: Array1::ones(p),
        max_iter: MAX_ITER,
        tol: TOL,
    }
}

/// Elastic-net penalized Cox regression (Breslow ties). The penalty is
/// `alpha·(l1_ratio·‖β‖₁ + (1 − l1_ratio)/2·‖β‖₂²)` on the standardized
/// scale, added to the per-sample mean negative partial log-likelihood.
pub fn coxph_elasticnet_fit(
    x: ArrayView2<f64>,
    time: ArrayView1<f64>,
    event: &[bool],
    feature_names: &[String],
    penalty: PenaltyConfig,
) -> Result<FittedModel> {
    penalty.validate()?;
    check_rows(x, time.len())?;
    validate_outcome(time, event)?;
    if feature_names.len() != x.ncols() {
        return Err(Error::Schema("one name per feature column is required".into()));
    }
    let scaling = Scaling::fit(x, penalty.standardize, true);
    let loss = CoxLoss::new(scaling.apply(x), time, event);
    let out = solver(penalty, x.ncols()).run(&loss, Array1::zeros(x.ncols()));
    let coefficients = scaling.unscale(&out.beta);

    let covariance = (penalty.alpha == 0.0)
        .then(|| {
            let raw = CoxLoss::new(x.to_owned(), time, event);
            let (_, h) = raw.gradient_hessian(&coefficients);
            let info = h * time.len() as f64;
            linalg::spd_inverse(info.view()).ok().map(|(c, _)| c)
        })
        .flatten();
    let interpretation = interpret(feature_names, &coefficients, covariance.as_ref());
    Ok(FittedModel {
        kind: ModelKind::Cox,
        feature_names: feature_names.to_vec(),
        coefficients,
        intercept: None,
        penalty: Some(penalty),
        interpretation,
        meta: TrainingMeta {
            seed: 0,
            iterations: out.iterations,
            converged: out.converged,
            objective_trace: out.objective_trace,
        },
    })
}

/// Linear predictor `Xβ`; higher means higher hazard.
pub fn coxph_risk_score(model: &FittedModel, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    if model.kind != ModelKind::Cox {
        return Err(Error::Schema("not a Cox model".into()));
    }
    model.check_features(x)?;
    Ok(x.dot(&model.coefficients))
}

/// Breslow partial log-likelihood at original-scale coefficients.
pub fn cox_partial_log_likelihood(x: ArrayView2<f64>, time: ArrayView1<f64>, event: &[bool], beta: ArrayView1<f64>) -> f64 {
    let loss = CoxLoss::new(x.to_owned(), time, event);
    -loss.value(&beta.to_owned()) * time.len() as f64
}

/// Largest optimality-condition violation on the standardized scale.
pub fn coxph_kkt_violation(model: &FittedModel, x: ArrayView2<f64>, time: ArrayView1<f64>, event: &[bool]) -> Result<f64> {
    model.check_features(x)?;
    let penalty = model.penalty.ok_or_else(|| Error::Schema("model has no penalty".into()))?;
    let scaling = Scaling::fit(x, penalty.standardize, true);
    let loss = CoxLoss::new(scaling.apply(x), time, event);
    let beta = scaling.rescale(&model.coefficients);
    let (g, _) = loss.gradient_hessian(&beta);
    Ok(solver(penalty, x.ncols()).kkt_violation(&beta, &g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn three_subject_closed_form() {
        let x = array![[0.0], [1.0], [0.0]];
        let t = array![1.0, 2.0, 3.0];
        let m = coxph_elasticnet_fit(x.view(), t.view(), &[true; 3], &names(1), PenaltyConfig::new(0.0, 0.5)).unwrap();
        assert!((m.coefficients[0] - 0.5 * 2f64.ln()).abs() < 1e-8, "{}", m.coefficients[0]);
        assert!(m.interpretation[0].standard_error.is_some());
    }

    #[test]
    fn huge_penalty_and_constant_column() {
        let x = array![[0.0, 2.0], [1.0, 2.0], [0.0, 2.0], [2.0, 2.0]];
        let t = array![1.0, 2.0, 3.0, 4.0];
        let ev = [true, false, true, true];
        let m = coxph_elasticnet_fit(x.view(), t.view(), &ev, &names(2), PenaltyConfig::new(1e6, 0.5)).unwrap();
        assert_eq!(m.coefficients.to_vec(), vec![0.0, 0.0]);
        let m = coxph_elasticnet_fit(x.view(), t.view(), &ev, &names(2), PenaltyConfig::new(0.01, 0.5)).unwrap();
        assert_eq!(m.coefficients[1], 0.0);
        assert_eq!(coxph_risk_score(&m, array![[0.0, 5.0]].view()).unwrap()[0], 0.0);
    }

    #[test]
    fn objective_never_increases() {
        let x = Array2::from_shape_fn((30, 3), |(i, j)| (((i + 1) * (j + 3) * 7) % 11) as f64 / 11.0);
        let t = Array1::from_shape_fn(30, |i| 1.0 + ((i * 13) % 17) as f64);
        let ev: Vec<bool> = (0..30).map(|i| i % 3 != 0).collect();
        let m = coxph_elasticnet_fit(x.view(), t.view(), &ev, &names(3), PenaltyConfig::new(0.02, 0.5)).unwrap();
        for w in m.meta.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        assert!(coxph_kkt_violation(&m, x.view(), t.view(), &ev).unwrap() < 1e-6);
    }

    #[test]
    fn no_events_rejected() {
        let x = array![[0.0], [1.0]];
        let t = array![1.0, 2.0];
        assert!(matches!(
            coxph_elasticnet_fit(x.view(), t.view(), &[false, false], &names(1), PenaltyConfig::new(0.1, 0.5)),
            Err(Error::NoEvents)
        ));
    }
}
