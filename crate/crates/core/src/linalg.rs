//! Thin bridge to nalgebra for the dense decompositions the crate needs.
//! Everything public in the crate speaks `ndarray`; conversions stay here.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

pub(crate) fn to_na(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Thin SVD `a = u · diag(s) · vᵀ` with singular values sorted descending.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub v: Array2<f64>,
}

pub fn thin_svd(a: ArrayView2<f64>) -> Result<ThinSvd> {
    let (n, d) = a.dim();
    let r = n.min(d);
    if r == 0 {
        return Ok(ThinSvd {
            u: Array2::zeros((n, 0)),
            s: Array1::zeros(0),
            v: Array2::zeros((d, 0)),
        });
    }
    let svd = nalgebra::SVD::try_new(to_na(a), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]).then(x.cmp(&y)));
    let mut out_u = Array2::zeros((n, r));
    let mut out_v = Array2::zeros((d, r));
    let mut out_s = Array1::zeros(r);
    for (k, &src) in order.iter().enumerate() {
        out_s[k] = svd.singular_values[src];
        for i in 0..n {
            out_u[[i, k]] = u[(i, src)];
        }
        for j in 0..d {
            out_v[[j, k]] = vt[(src, j)];
        }
    }
    Ok(ThinSvd {
        u: out_u,
        s: out_s,
        v: out_v,
    })
}

/// Inverse and log-determinant of a symmetric positive definite matrix.
pub fn spd_inverse(a: ArrayView2<f64>) -> Result<(Array2<f64>, f64)> {
    let chol = nalgebra::Cholesky::new(to_na(a))
        .ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    Ok((from_na(&chol.inverse()), logdet))
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn solve_spd(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let chol = nalgebra::Cholesky::new(to_na(a))
        .ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))?;
    let rhs = nalgebra::DVector::from_iterator(b.len(), b.iter().copied());
    let x = chol.solve(&rhs);
    Ok(Array1::from_iter(x.iter().copied()))
}

/// Orthonormal basis of the column space of a full-column-rank matrix (thin QR).
pub fn orthonormal_columns(a: ArrayView2<f64>) -> Array2<f64> {
    let qr = nalgebra::QR::new(to_na(a));
    from_na(&qr.q())
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(a: ArrayView2<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let eig = nalgebra::SymmetricEigen::new(to_na(a));
    eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Spectral norm via the smaller Gram matrix.
pub fn spectral_norm(a: ArrayView2<f64>) -> f64 {
    let gram = if a.nrows() >= a.ncols() {
        a.t().dot(&a)
    } else {
        a.dot(&a.t())
    };
    max_eigenvalue(gram.view()).max(0.0).sqrt()
}

/// Column means.
pub fn column_means(a: ArrayView2<f64>) -> Array1<f64> {
    if a.nrows() == 0 {
        return Array1::zeros(a.ncols());
    }
    a.mean_axis(Axis(0)).expect("non-empty")
}

pub fn center_columns(a: ArrayView2<f64>, means: ArrayView1<f64>) -> Array2<f64> {
    let mut out = a.to_owned();
    for mut row in out.rows_mut() {
        row -= &means;
    }
    out
}

pub fn frobenius_sq(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Index whose entry has the largest magnitude (first on ties).
pub fn argmax_abs(v: ArrayView1<f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in v.iter().enumerate() {
        match best {
            Some((_, b)) if x.abs() <= b => {}
            _ => best = Some((i, x.abs())),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn svd_reconstructs_and_sorts() {
        let a = array![[3.0, 0.0], [0.0, 5.0], [0.0, 0.0]];
        let svd = thin_svd(a.view()).unwrap();
        assert!((svd.s[0] - 5.0).abs() < 1e-12);
        assert!((svd.s[1] - 3.0).abs() < 1e-12);
        let recon = svd.u.dot(&Array2::from_diag(&svd.s)).dot(&svd.v.t());
        assert!((&recon - &a).iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn svd_wide_matrix() {
        let a = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let svd = thin_svd(a.view()).unwrap();
        assert_eq!(svd.u.dim(), (2, 2));
        assert_eq!(svd.v.dim(), (3, 2));
        let recon = svd.u.dot(&Array2::from_diag(&svd.s)).dot(&svd.v.t());
        assert!((&recon - &a).iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn spd_inverse_logdet() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let (inv, logdet) = spd_inverse(a.view()).unwrap();
        assert!((logdet - 11.0f64.ln()).abs() < 1e-12);
        let id = a.dot(&inv);
        assert!((id[[0, 0]] - 1.0).abs() < 1e-12 && id[[0, 1]].abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_of_diag() {
        let a = array![[2.0, 0.0, 0.0], [0.0, -7.0, 0.0]];
        assert!((spectral_norm(a.view()) - 7.0).abs() < 1e-12);
    }
}
