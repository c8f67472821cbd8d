use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::check_rows;
use crate::error::{Error, Result};

/// Two-class Gaussian naive Bayes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub priors: [f64; 2],
    /// 2 × P per-class feature means.
    pub means: Array2<f64>,
    /// 2 × P per-class feature variances, smoothed.
    pub variances: Array2<f64>,
}

impl GaussianNb {
    /// Variances are smoothed by `1e-9` times the largest feature variance.
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Self> {
        check_rows(x, y.len())?;
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Schema("labels must be 0 or 1".into()));
        }
        let p = x.ncols();
        let max_var = x.var_axis(Axis(0), 0.0).iter().copied().fold(0.0, f64::max);
        let eps = if max_var > 0.0 { 1e-9 * max_var } else { 1e-9 };
        let mut means = Array2::zeros((2, p));
        let mut variances = Array2::zeros((2, p));
        let mut priors = [0.0; 2];
        for c in 0..2 {
            let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c as f64).collect();
            if rows.is_empty() {
                return Err(Error::DegenerateLabels);
            }
            let xc = x.select(Axis(0), &rows);
            means.row_mut(c).assign(&xc.mean_axis(Axis(0)).expect("non-empty"));
            variances.row_mut(c).assign(&(xc.var_axis(Axis(0), 0.0) + eps));
            priors[c] = rows.len() as f64 / y.len() as f64;
        }
        Ok(Self {
            priors,
            means,
            variances,
        })
    }

    fn log_joint(&self, row: ArrayView1<f64>, c: usize) -> f64 {
        let mut lp = self.priors[c].ln();
        for ((&v, &m), &var) in row.iter().zip(self.means.row(c)).zip(self.variances.row(c)) {
            lp -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (v - m).powi(2) / var);
        }
        lp
    }

    /// Posterior probability of class 1.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.means.ncols() {
            return Err(Error::Schema(format!(
                "model expects {} features, got {}",
                self.means.ncols(),
                x.ncols()
            )));
        }
        Ok(x
            .rows()
            .into_iter()
            .map(|row| {
                let (l0, l1) = (self.log_joint(row, 0), self.log_joint(row, 1));
                1.0 / (1.0 + (l0 - l1).exp())
            })
            .collect())
    }
}

pub fn gaussian_nb_fit_predict(
    x_train: ArrayView2<f64>,
    y_train: ArrayView1<f64>,
    x_test: ArrayView2<f64>,
) -> Result<Array1<f64>> {
    GaussianNb::fit(x_train, y_train)?.predict_proba(x_test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn symmetric_classes_give_half_at_origin() {
        let x = array![[-1.0], [-1.2], [-0.8], [1.0], [1.2], [0.8]];
        let y = array![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let p = gaussian_nb_fit_predict(x.view(), y.view(), array![[0.0]].view()).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn separated_classes() {
        let x = array![[-1.0], [0.0], [1.0], [9.0], [10.0], [11.0]];
        let y = array![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let p = gaussian_nb_fit_predict(x.view(), y.view(), array![[10.0]].view()).unwrap();
        assert!(p[0] > 0.999);
    }

    #[test]
    fn identical_classes_return_prior() {
        let x = array![[1.0], [2.0], [1.0], [2.0], [1.0], [2.0], [1.0], [2.0]];
        let y = array![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0];
        let p = gaussian_nb_fit_predict(x.view(), y.view(), array![[1.7]].view()).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_class_rejected() {
        let x = array![[1.0], [2.0]];
        assert!(matches!(
            GaussianNb::fit(x.view(), array![1.0, 1.0].view()),
            Err(Error::DegenerateLabels)
        ));
    }
}
