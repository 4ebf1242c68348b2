use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaussian posterior over linear weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorGaussian {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::validation(name, "contains non-finite values"))
    }
}

/// Conjugate posterior for `y = X w + e`, `e ~ N(0, noise_var I)`, `w ~ N(prior_mean, prior_cov)`.
///
/// Posterior precision is `X'X / noise_var + prior_cov^-1` and the mean solves
/// `precision * mean = X'y / noise_var + prior_cov^-1 prior_mean`. Because the
/// prior precision is positive definite the posterior exists for any `n`,
/// including `n = 0` and `n < d`.
pub fn bayes_posterior(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    noise_var: f64,
) -> Result<PosteriorGaussian> {
    let d = prior_mean.len();
    if prior_cov.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "prior covariance is {:?}, expected {d}x{d}",
            prior_cov.shape()
        )));
    }
    check_finite("prior_cov", prior_cov.as_slice())?;
    let prior_precision = prior_cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("prior_cov".into()))?
        .inverse();
    bayes_posterior_precision(x, y, prior_mean, &prior_precision, noise_var)
}

/// Same posterior parameterized by the prior *precision*, which may be
/// singular (zero precision gives ordinary least squares) as long as the
/// posterior precision is positive definite.
pub fn bayes_posterior_precision(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    prior_mean: &DVector<f64>,
    prior_precision: &DMatrix<f64>,
    noise_var: f64,
) -> Result<PosteriorGaussian> {
    let d = prior_mean.len();
    if x.ncols() != d && x.nrows() > 0 {
        return Err(Error::Dimension(format!("X has {} columns, prior has {d}", x.ncols())));
    }
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!("X has {} rows, y has {}", x.nrows(), y.len())));
    }
    if prior_precision.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "prior precision is {:?}, expected {d}x{d}",
            prior_precision.shape()
        )));
    }
    if !(noise_var.is_finite() && noise_var > 0.0) {
        return Err(Error::validation(
            "noise_var",
            format!("must be finite and > 0, got {noise_var}"),
        ));
    }
    check_finite("X", x.as_slice())?;
    check_finite("y", y.as_slice())?;
    check_finite("prior_mean", prior_mean.as_slice())?;
    check_finite("prior_precision", prior_precision.as_slice())?;

    let (gram, xty) = if x.nrows() == 0 {
        (DMatrix::zeros(d, d), DVector::zeros(d))
    } else {
        (x.transpose() * x, x.transpose() * y)
    };
    let precision = symmetrize(gram / noise_var + prior_precision);
    let rhs = xty / noise_var + prior_precision * prior_mean;
    let chol = precision
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("posterior precision".into()))?;
    let mean = chol.solve(&rhs);
    let covariance = symmetrize(chol.inverse());
    Ok(PosteriorGaussian { mean, covariance })
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_data_returns_the_prior() {
        let mean = DVector::from_vec(vec![0.5, -1.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let post = bayes_posterior(&DMatrix::zeros(0, 2), &DVector::zeros(0), &mean, &cov, 1.0).unwrap();
        assert!((post.mean - &mean).norm() < 1e-12);
        assert!((post.covariance - &cov).norm() < 1e-12);
    }

    #[test]
    fn one_dimensional_hand_case() {
        let post = bayes_posterior(
            &DMatrix::from_element(1, 1, 1.0),
            &DVector::from_element(1, 2.0),
            &DVector::zeros(1),
            &DMatrix::identity(1, 1),
            1.0,
        )
        .unwrap();
        assert!((post.mean[0] - 1.0).abs() < 1e-12);
        assert!((post.covariance[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tight_prior_dominates() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
        let y = DVector::from_vec(vec![10.0, -4.0, 7.0]);
        let m = DVector::from_vec(vec![0.25, 0.75]);
        let cov = DMatrix::identity(2, 2) * 1e-6;
        let post = bayes_posterior(&x, &y, &m, &cov, 1.0).unwrap();
        assert!((post.mean - m).amax() < 1e-3);
    }

    #[test]
    fn non_positive_definite_prior_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = bayes_posterior(&DMatrix::zeros(0, 2), &DVector::zeros(0), &DVector::zeros(2), &cov, 1.0);
        assert!(matches!(err, Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let x = DMatrix::from_element(1, 1, f64::NAN);
        let r = bayes_posterior(
            &x,
            &DVector::zeros(1),
            &DVector::zeros(1),
            &DMatrix::identity(1, 1),
            1.0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn zero_precision_is_least_squares() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let post = bayes_posterior_precision(&x, &y, &DVector::zeros(2), &DMatrix::zeros(2, 2), 1.0).unwrap();
        assert!((post.mean[0] - 1.0).abs() < 1e-10);
        assert!((post.mean[1] - 2.0).abs() < 1e-10);
    }
}
