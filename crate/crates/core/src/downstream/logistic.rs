use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::solver::{SmoothLoss, Solver};
use super::{check_rows, interpret, FittedModel, ModelKind, PenaltyConfig, Scaling, TrainingMeta};
use crate::error::{Error, Result};
use crate::linalg;

const MAX_ITER: usize = 10_000;
const TOL: f64 = 1e-8;

/// Mean negative Bernoulli log-likelihood; column 0 of `x` is the intercept.
struct LogisticLoss {
    x: Array2<f64>,
    y: Array1<f64>,
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

impl SmoothLoss for LogisticLoss {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn value(&self, beta: &Array1<f64>) -> f64 {
        let eta = self.x.dot(beta);
        let n = self.y.len() as f64;
        eta.iter().zip(&self.y).map(|(&e, &y)| softplus(e) - y * e).sum::<f64>() / n
    }

    fn gradient_hessian(&self, beta: &Array1<f64>) -> (Array1<f64>, Array2<f64>) {
        let n = self.y.len() as f64;
        let p = self.x.dot(beta).mapv(sigmoid);
        let resid = &p - &self.y;
        let g = self.x.t().dot(&resid) / n;
        let w = p.mapv(|q| q * (1.0 - q));
        let xw = &self.x * &w.view().insert_axis(Axis(1));
        let h = self.x.t().dot(&xw) / n;
        (g, h)
    }
}

fn design(x: ArrayView2<f64>) -> Array2<f64> {
    let ones = Array2::ones((x.nrows(), 1));
    concatenate![Axis(1), ones, x]
}

fn check_labels(y: ArrayView1<f64>) -> Result<()> {
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Schema("labels must be 0 or 1".into()));
    }
    let cases = y.sum();
    if cases == 0.0 || cases == y.len() as f64 {
        return Err(Error::DegenerateLabels);
    }
    Ok(())
}

fn solver(penalty: PenaltyConfig, p: usize) -> Solver {
    let mut weights = Array1::ones(p + 1);
    weights[0] = 0.0;
    Solver {
        penalty,
        weights,
        max_iter: MAX_ITER,
        tol: TOL,
    }
}

/// Penalized logistic regression with an unpenalized intercept, solved on
/// standardized features and reported on the original scale.
pub fn logistic_l1_fit(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    feature_names: &[String],
    penalty: PenaltyConfig,
) -> Result<FittedModel> {
    penalty.validate()?;
    check_rows(x, y.len())?;
    check_labels(y)?;
    if feature_names.len() != x.ncols() {
        return Err(Error::Schema("one name per feature column is required".into()));
    }
    let scaling = Scaling::fit(x, penalty.standardize, true);
    let loss = LogisticLoss {
        x: design(scaling.apply(x).view()),
        y: y.to_owned(),
    };
    let prevalence = y.mean().unwrap_or(0.5);
    let mut start = Array1::zeros(x.ncols() + 1);
    start[0] = (prevalence / (1.0 - prevalence)).ln();
    let solver = solver(penalty, x.ncols());
    let out = solver.run(&loss, start);

    let coefficients = scaling.unscale(&out.beta.slice(s![1..]).to_owned());
    let intercept = out.beta[0] - coefficients.dot(&scaling.means);

    let covariance = (penalty.alpha == 0.0)
        .then(|| {
            let raw = LogisticLoss {
                x: design(x),
                y: y.to_owned(),
            };
            let mut full = Array1::zeros(x.ncols() + 1);
            full[0] = intercept;
            full.slice_mut(s![1..]).assign(&coefficients);
            let (_, h) = raw.gradient_hessian(&full);
            let info = h * y.len() as f64;
            linalg::spd_inverse(info.view()).ok().map(|(c, _)| c.slice(s![1.., 1..]).to_owned())
        })
        .flatten();
    let interpretation = interpret(feature_names, &coefficients, covariance.as_ref());
    Ok(FittedModel {
        kind: ModelKind::Logistic,
        feature_names: feature_names.to_vec(),
        coefficients,
        intercept: Some(intercept),
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

pub fn logistic_predict_proba(model: &FittedModel, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    if model.kind != ModelKind::Logistic {
        return Err(Error::Schema("not a logistic model".into()));
    }
    model.check_features(x)?;
    let b0 = model.intercept.unwrap_or(0.0);
    Ok(x.dot(&model.coefficients).mapv(|e| sigmoid(b0 + e)))
}

/// Largest optimality-condition violation of a fitted model on the
/// standardized scale used by the solver.
pub fn logistic_kkt_violation(model: &FittedModel, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<f64> {
    model.check_features(x)?;
    let penalty = model.penalty.ok_or_else(|| Error::Schema("model has no penalty".into()))?;
    let scaling = Scaling::fit(x, penalty.standardize, true);
    let loss = LogisticLoss {
        x: design(scaling.apply(x).view()),
        y: y.to_owned(),
    };
    let mut beta = Array1::zeros(x.ncols() + 1);
    beta[0] = model.intercept.unwrap_or(0.0) + model.coefficients.dot(&scaling.means);
    beta.slice_mut(s![1..]).assign(&scaling.rescale(&model.coefficients));
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
    fn huge_penalty_gives_prevalence_intercept() {
        let x = Array2::from_shape_fn((10, 2), |(i, j)| (i * (j + 2)) as f64 % 5.0);
        let y = array![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let m = logistic_l1_fit(x.view(), y.view(), &names(2), PenaltyConfig::lasso(1e6)).unwrap();
        assert!(m.coefficients.iter().all(|&b| b == 0.0));
        assert!((m.intercept.unwrap() - (3.0f64 / 7.0).ln()).abs() < 1e-9);
        let p = logistic_predict_proba(&m, Array2::zeros((2, 2)).view()).unwrap();
        assert!((p[0] - 0.3).abs() < 1e-9);
        assert!(m.interpretation.iter().all(|f| f.standard_error.is_none() && !f.selected));
    }

    #[test]
    fn constant_column_gets_zero() {
        let x = Array2::from_shape_fn((12, 2), |(i, j)| if j == 0 { 4.0 } else { ((i * 7) % 5) as f64 });
        let y = Array1::from_shape_fn(12, |i| ((i * 7) % 5 > 1 || i % 4 == 0) as u8 as f64);
        let m = logistic_l1_fit(x.view(), y.view(), &names(2), PenaltyConfig::lasso(0.0)).unwrap();
        assert_eq!(m.coefficients[0], 0.0);
    }

    #[test]
    fn single_class_rejected() {
        let x = Array2::zeros((3, 1));
        let y = array![1.0, 1.0, 1.0];
        assert!(matches!(
            logistic_l1_fit(x.view(), y.view(), &names(1), PenaltyConfig::lasso(1.0)),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = FittedModel {
            kind: ModelKind::Logistic,
            feature_names: names(1),
            coefficients: array![0.0],
            intercept: Some(0.0),
            penalty: None,
            interpretation: vec![],
            meta: TrainingMeta {
                seed: 0,
                iterations: 0,
                converged: true,
                objective_trace: vec![],
            },
        };
        let p = logistic_predict_proba(&m, array![[3.0], [-2.0]].view()).unwrap();
        assert_eq!(p.to_vec(), vec![0.5, 0.5]);
        assert!(matches!(logistic_predict_proba(&m, Array2::zeros((1, 2)).view()), Err(Error::Schema(_))));
    }
}
