//! Multivariate normal linear model of `X` on centered `(f_y, H)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousFit {
    pub a_hat: DMatrix<f64>,
    pub beta_hat: DMatrix<f64>,
    /// MLE covariance, divisor `n`.
    pub delta_hat: DMatrix<f64>,
    #[serde(skip)]
    pub residuals: DMatrix<f64>,
    pub x_mean: DVector<f64>,
    pub h_mean: DVector<f64>,
    /// Mean of the supplied basis design; zero for a centered design.
    pub f_mean: DVector<f64>,
}

impl ContinuousFit {
    pub fn p(&self) -> usize {
        self.x_mean.len()
    }

    pub fn precision(&self) -> Result<DMatrix<f64>> {
        crate::matops::spd_inverse(&self.delta_hat)
            .ok_or_else(|| Error::Singular("estimated covariance Δ̂ is singular".into()))
    }
}

fn centered(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mean = if m.nrows() == 0 {
        DVector::zeros(m.ncols())
    } else {
        m.row_mean().transpose()
    };
    let mut c = m.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    (c, mean)
}

fn ridge_of(m: &DMatrix<f64>) -> f64 {
    let dim = m.nrows().max(1) as f64;
    1e-8 * m.trace().max(f64::MIN_POSITIVE) / dim
}

/// OLS of `X` on `(f, H)`, both centered. With `ridge`, adds `1e-8 · trace/dim`
/// to the design cross-product and to `Δ̂`.
pub fn fit_continuous_design(
    x: &DMatrix<f64>,
    h: &DMatrix<f64>,
    f: &DMatrix<f64>,
    ridge: bool,
) -> Result<ContinuousFit> {
    let n = x.nrows();
    if h.nrows() != n || f.nrows() != n {
        return Err(Error::Dimension(
            "X, H and f have different row counts".into(),
        ));
    }
    let (p, q, r) = (x.ncols(), h.ncols(), f.ncols());
    let (xc, x_mean) = centered(x);
    let (hc, h_mean) = centered(h);
    let (fc, f_mean) = centered(f);
    let mut design = DMatrix::zeros(n, r + q);
    design.columns_mut(0, r).copy_from(&fc);
    design.columns_mut(r, q).copy_from(&hc);

    let mut gram = design.transpose() * &design;
    if ridge {
        let eps = ridge_of(&gram);
        for i in 0..gram.nrows() {
            gram[(i, i)] += eps;
        }
    }
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Singular("design of centered (f_y, H) is rank deficient; enable the ridge".into())
    })?;
    let coef_t = chol.solve(&(design.transpose() * &xc)); // (r+q) x p
    let coef = coef_t.transpose();
    let residuals = &xc - &design * &coef_t;
    let mut delta_hat = residuals.transpose() * &residuals / n as f64;
    delta_hat = (&delta_hat + delta_hat.transpose()) * 0.5;
    if ridge && p > 0 {
        let eps = ridge_of(&delta_hat);
        for i in 0..p {
            delta_hat[(i, i)] += eps;
        }
    }
    Ok(ContinuousFit {
        a_hat: coef.columns(0, r).into_owned(),
        beta_hat: coef.columns(r, q).into_owned(),
        delta_hat,
        residuals,
        x_mean,
        h_mean,
        f_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn qr_oracle(x: &DMatrix<f64>, l: &DMatrix<f64>) -> DMatrix<f64> {
        // least squares through QR of the centered design
        let (lc, _) = centered(l);
        let (xc, _) = centered(x);
        let qr = lc.qr();
        let rhs = qr.q().transpose() * xc;
        qr.r().solve_upper_triangular(&rhs).unwrap().transpose()
    }

    fn simulate(
        n: usize,
        seed: u64,
    ) -> (
        DMatrix<f64>,
        DMatrix<f64>,
        DMatrix<f64>,
        DMatrix<f64>,
        DMatrix<f64>,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, q, r) = (3, 2, 2);
        let a = DMatrix::from_row_slice(p, r, &[1.0, -0.5, 0.3, 2.0, -1.0, 0.0]);
        let beta = DMatrix::from_row_slice(p, q, &[0.5, 0.0, -0.2, 1.0, 0.0, 0.7]);
        let f = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
        let h = DMatrix::from_fn(n, q, |_, _| rng.random_range(0..2) as f64);
        let noise = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = &f * a.transpose() + &h * beta.transpose() + noise;
        (x, h, f, a, beta)
    }

    #[test]
    fn exact_linear_data() {
        let (_, h, f, a, beta) = simulate(40, 1);
        let x = &f * a.transpose() + &h * beta.transpose();
        let fit = fit_continuous_design(&x, &h, &f, false).unwrap();
        assert!((fit.a_hat - a).norm() < 1e-10);
        assert!((fit.beta_hat - beta).norm() < 1e-10);
        assert!(fit.delta_hat.norm() < 1e-20);
    }

    #[test]
    fn matches_qr_and_improves_with_n() {
        let mut errs = Vec::new();
        for &n in &[50, 200] {
            let (x, h, f, a, _) = simulate(n, 7);
            let fit = fit_continuous_design(&x, &h, &f, false).unwrap();
            let mut l = DMatrix::zeros(n, 4);
            l.columns_mut(0, 2).copy_from(&f);
            l.columns_mut(2, 2).copy_from(&h);
            let oracle = qr_oracle(&x, &l);
            assert!((oracle.columns(0, 2) - &fit.a_hat).norm() < 1e-10);
            assert!((oracle.columns(2, 2) - &fit.beta_hat).norm() < 1e-10);
            // fitted + residual reproduces centered X
            let (xc, _) = centered(&x);
            let (lc, _) = centered(&l);
            let mut coef = DMatrix::zeros(3, 4);
            coef.columns_mut(0, 2).copy_from(&fit.a_hat);
            coef.columns_mut(2, 2).copy_from(&fit.beta_hat);
            assert!((lc * coef.transpose() + &fit.residuals - xc).norm() < 1e-10);
            errs.push((fit.a_hat - a).norm());
        }
        assert!(errs[1] < errs[0]);
    }

    #[test]
    fn no_binary_block_is_plain_regression() {
        let (x, _, f, _, _) = simulate(60, 3);
        let h = DMatrix::zeros(60, 0);
        let fit = fit_continuous_design(&x, &h, &f, false).unwrap();
        assert!((qr_oracle(&x, &f) - &fit.a_hat).norm() < 1e-10);
        assert_eq!(fit.beta_hat.shape(), (3, 0));
    }

    #[test]
    fn rank_deficient_design() {
        let (x, _, f, _, _) = simulate(30, 4);
        let h = DMatrix::from_fn(30, 2, |i, _| (i % 2) as f64);
        assert!(matches!(
            fit_continuous_design(&x, &h, &f, false),
            Err(Error::Singular(_))
        ));
        assert!(fit_continuous_design(&x, &h, &f, true).is_ok());
    }
}
