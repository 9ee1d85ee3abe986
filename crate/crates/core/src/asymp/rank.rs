//! Sequential rank tests on an estimated coefficient matrix.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::cov::{c_covariances, estimate_v, fitted_params, vrcl};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estim::{fit_mle, resolve_kind, svd_truncate, Dims, FitOptions, MleFit, ReductionKind};
use crate::matops::{kron, pinv_sym, rank_sym, PINV_TOL};
use crate::model::params::natural_params;
use crate::model::FyBasis;

/// Draws used to simulate the weighted chi-square null.
pub const NULL_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankTest {
    /// `Λ1` against a weighted sum of `χ²₁`.
    #[serde(alias = "wchisq")]
    WeightedChiSq,
    /// `Λ2` against `χ²_s`.
    Wald,
}

impl std::str::FromStr for RankTest {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wchisq" | "weighted" => Ok(Self::WeightedChiSq),
            "wald" | "chisq" => Ok(Self::Wald),
            _ => Err(Error::Invalid(format!(
                "unknown test '{s}' (expected wchisq or wald)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedOutcome {
    pub statistic: f64,
    pub critical: f64,
    pub reject: bool,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldOutcome {
    pub statistic: f64,
    pub df: usize,
    pub critical: f64,
    pub reject: bool,
}

/// `vec(K̂0)` and `Q̂ = (R0ᵀ ⊗ U0ᵀ) V (R0 ⊗ U0)` at candidate rank `j`.
fn residual_pieces(
    b: &DMatrix<f64>,
    v: &DMatrix<f64>,
    j: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (m, r) = b.shape();
    if j >= m.min(r) {
        return Err(Error::Dimension(format!(
            "candidate rank {j} must be below min({m}, {r})"
        )));
    }
    if v.shape() != (m * r, m * r) {
        return Err(Error::Dimension(
            "covariance does not match the coefficient matrix".into(),
        ));
    }
    let svd = svd_truncate(b, j)?;
    let (u0, r0) = (svd.u0(), svd.r0());
    let k0 = u0.transpose() * b * &r0;
    let proj = kron(&r0.transpose(), &u0.transpose());
    let q = &proj * v * proj.transpose();
    Ok((
        DVector::from_column_slice(k0.as_slice()),
        (&q + q.transpose()) * 0.5,
    ))
}

/// Empirical `1 − α` quantile of `Σ ω_i Z_i²`.
pub fn weighted_chisq_quantile<R: Rng + ?Sized>(
    weights: &[f64],
    alpha: f64,
    draws: usize,
    rng: &mut R,
) -> f64 {
    let top = weights.iter().cloned().fold(0.0f64, f64::max);
    let active: Vec<f64> = weights
        .iter()
        .cloned()
        .filter(|&w| w > 1e-12 * top && w > 0.0)
        .collect();
    let mut sims: Vec<f64> = (0..draws)
        .map(|_| {
            active
                .iter()
                .map(|w| {
                    let z: f64 = rng.sample(StandardNormal);
                    w * z * z
                })
                .sum()
        })
        .collect();
    sims.sort_by(|a, b| a.total_cmp(b));
    let idx = (((1.0 - alpha) * draws as f64).ceil() as usize).clamp(1, draws) - 1;
    sims[idx]
}

pub fn test_rank_weighted<R: Rng + ?Sized>(
    b: &DMatrix<f64>,
    v_rcl: &DMatrix<f64>,
    j: usize,
    alpha: f64,
    n: usize,
    rng: &mut R,
) -> Result<WeightedOutcome> {
    let (k0, q) = residual_pieces(b, v_rcl, j)?;
    Ok(weighted_from_pieces(&k0, &q, alpha, n, rng))
}

fn weighted_from_pieces<R: Rng + ?Sized>(
    k0: &DVector<f64>,
    q: &DMatrix<f64>,
    alpha: f64,
    n: usize,
    rng: &mut R,
) -> WeightedOutcome {
    let statistic = n as f64 * k0.norm_squared();
    let mut weights: Vec<f64> = q
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .map(|&w| w.max(0.0))
        .collect();
    weights.sort_by(|a, b| b.total_cmp(a));
    let critical = weighted_chisq_quantile(&weights, alpha, NULL_DRAWS, rng);
    WeightedOutcome {
        statistic,
        critical,
        reject: statistic > critical,
        weights,
    }
}

pub fn chisq_quantile(df: usize, prob: f64) -> f64 {
    if df == 0 {
        return 0.0;
    }
    ChiSquared::new(df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(prob)
}

pub fn test_rank_wald(
    b: &DMatrix<f64>,
    v_rcl: &DMatrix<f64>,
    j: usize,
    alpha: f64,
    n: usize,
) -> Result<WaldOutcome> {
    let (k0, q) = residual_pieces(b, v_rcl, j)?;
    Ok(wald_from_pieces(
        &k0,
        &q,
        rank_sym(v_rcl, PINV_TOL),
        b.shape(),
        j,
        alpha,
        n,
    ))
}

fn wald_from_pieces(
    k0: &DVector<f64>,
    q: &DMatrix<f64>,
    v_rank: usize,
    shape: (usize, usize),
    j: usize,
    alpha: f64,
    n: usize,
) -> WaldOutcome {
    let (m, r) = shape;
    let (qinv, _) = pinv_sym(q, PINV_TOL);
    let statistic = n as f64 * (k0.transpose() * qinv * k0)[(0, 0)];
    let df = v_rank.min((r - j) * (m - j));
    let critical = chisq_quantile(df, 1.0 - alpha);
    WaldOutcome {
        statistic,
        df,
        critical,
        reject: df > 0 && statistic > critical,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankStep {
    pub j: usize,
    pub weighted: Option<WeightedOutcome>,
    pub wald: Option<WaldOutcome>,
}

/// Sequential tests on one coefficient matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub label: String,
    pub rows: usize,
    pub cols: usize,
    pub steps: Vec<RankStep>,
    pub d_weighted: usize,
    pub d_wald: usize,
    /// Every candidate was rejected and `d` fell back to `min(rows, cols)`.
    pub all_rejected_weighted: bool,
    pub all_rejected_wald: bool,
}

impl BranchReport {
    pub fn selected(&self, test: RankTest) -> usize {
        match test {
            RankTest::WeightedChiSq => self.d_weighted,
            RankTest::Wald => self.d_wald,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionTestReport {
    pub kind: ReductionKind,
    pub test: RankTest,
    pub alpha: f64,
    pub seed: u64,
    pub n: usize,
    pub v_rank_deficient: bool,
    pub branches: Vec<BranchReport>,
    pub selected: Dims,
}

/// Runs both tests for `j = 0, 1, ...` until each has failed to reject once.
/// The weighted null for branch `branch` and rank `j` uses ChaCha stream
/// `(branch << 32) | j` of `seed`.
pub fn sequential_tests(
    label: &str,
    b: &DMatrix<f64>,
    v: &DMatrix<f64>,
    n: usize,
    alpha: f64,
    seed: u64,
    branch: u64,
) -> Result<BranchReport> {
    sequential_tests_with(label, b, v, n, alpha, seed, branch, false)
}

/// As [`sequential_tests`]; with `exhaustive` every `j < min(rows, cols)` is
/// tested and reported, while the selected ranks are unchanged.
#[allow(clippy::too_many_arguments)]
pub fn sequential_tests_with(
    label: &str,
    b: &DMatrix<f64>,
    v: &DMatrix<f64>,
    n: usize,
    alpha: f64,
    seed: u64,
    branch: u64,
    exhaustive: bool,
) -> Result<BranchReport> {
    let (m, r) = b.shape();
    let top = m.min(r);
    let v_rank = rank_sym(v, PINV_TOL);
    let mut steps = Vec::new();
    let (mut dw, mut dl) = (None, None);
    for j in 0..top {
        if dw.is_some() && dl.is_some() && !exhaustive {
            break;
        }
        let (k0, q) = residual_pieces(b, v, j)?;
        let weighted = if dw.is_none() || exhaustive {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((branch << 32) | j as u64);
            let out = weighted_from_pieces(&k0, &q, alpha, n, &mut rng);
            if !out.reject && dw.is_none() {
                dw = Some(j);
            }
            Some(out)
        } else {
            None
        };
        let wald = if dl.is_none() || exhaustive {
            let out = wald_from_pieces(&k0, &q, v_rank, (m, r), j, alpha, n);
            if !out.reject && dl.is_none() {
                dl = Some(j);
            }
            Some(out)
        } else {
            None
        };
        steps.push(RankStep { j, weighted, wald });
    }
    Ok(BranchReport {
        label: label.to_string(),
        rows: m,
        cols: r,
        steps,
        d_weighted: dw.unwrap_or(top),
        d_wald: dl.unwrap_or(top),
        all_rejected_weighted: dw.is_none() && top > 0,
        all_rejected_wald: dl.is_none() && top > 0,
    })
}

/// Dimension selection from an existing fit and its centered basis design.
pub fn select_dimension_fit(
    fit: &MleFit,
    f: &DMatrix<f64>,
    kind: ReductionKind,
    test: RankTest,
    alpha: f64,
    seed: u64,
) -> Result<DimensionTestReport> {
    select_dimension_fit_with(fit, f, kind, test, alpha, seed, false)
}

/// As [`select_dimension_fit`], optionally reporting every candidate rank.
pub fn select_dimension_fit_with(
    fit: &MleFit,
    f: &DMatrix<f64>,
    kind: ReductionKind,
    test: RankTest,
    alpha: f64,
    seed: u64,
    exhaustive: bool,
) -> Result<DimensionTestReport> {
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(Error::Invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let n = f.nrows();
    let kind = resolve_kind(kind, fit.p, fit.q);
    let est = estimate_v(fit, f)?;
    let (branches, selected) = if kind == ReductionKind::Suboptimal {
        let nat = natural_params(&fitted_params(fit))?;
        let (c1, c2) = fit.assemble_c()?;
        let (v1, v2) = c_covariances(&nat, &est.v)?;
        let b1 = sequential_tests_with("c1", &c1, &v1, n, alpha, seed, 0, exhaustive)?;
        let mut branches = vec![b1];
        let d1 = branches[0].selected(test);
        let d2 = if c2.norm() <= crate::estim::reduction::TAU_ZERO_TOL || c2.nrows() == 0 {
            0
        } else {
            let b2 = sequential_tests_with("c2", &c2, &v2, n, alpha, seed, 1, exhaustive)?;
            let d2 = b2.selected(test);
            branches.push(b2);
            d2
        };
        (branches, Dims::Two(d1, d2))
    } else {
        let b = fit.assemble_b()?;
        let v = vrcl(&est.v, fit.p, fit.q, fit.r)?;
        let br = sequential_tests_with("b", &b, &v, n, alpha, seed, 0, exhaustive)?;
        let d = br.selected(test);
        (vec![br], Dims::One(d))
    };
    Ok(DimensionTestReport {
        kind,
        test,
        alpha,
        seed,
        n,
        v_rank_deficient: est.rank_deficient,
        branches,
        selected,
    })
}

pub fn select_dimension(
    data: &Dataset,
    fy: &FyBasis,
    kind: ReductionKind,
    test: RankTest,
    alpha: f64,
    seed: u64,
) -> Result<DimensionTestReport> {
    let fit = fit_mle(data, fy, FitOptions::default())?;
    let f = fy.design(&data.y)?;
    select_dimension_fit(&fit, &f, kind, test, alpha, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_rank_gives_zero_statistics() {
        let u = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 0.0, -1.0]);
        let w = DMatrix::from_row_slice(1, 3, &[1.0, -1.0, 0.5]);
        let b = u * w;
        let v = DMatrix::identity(12, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let wt = test_rank_weighted(&b, &v, 1, 0.05, 100, &mut rng).unwrap();
        assert!(wt.statistic < 1e-20 && !wt.reject);
        let wd = test_rank_wald(&b, &v, 1, 0.05, 100).unwrap();
        assert!(wd.statistic < 1e-20 && !wd.reject);
        assert_eq!(wd.df, 6);
    }

    #[test]
    fn single_weight_quantile() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = weighted_chisq_quantile(&[1.0], 0.05, NULL_DRAWS, &mut rng);
        assert!((q - 3.841).abs() < 0.1, "{q}");
    }

    #[test]
    fn scalar_wald() {
        let b = DMatrix::from_element(1, 1, 0.3);
        let v = DMatrix::identity(1, 1);
        let out = test_rank_wald(&b, &v, 0, 0.05, 50).unwrap();
        assert!((out.statistic - 50.0 * 0.09).abs() < 1e-12);
        assert_eq!(out.df, 1);
    }

    #[test]
    fn out_of_range_candidate() {
        let b = DMatrix::zeros(3, 2);
        assert!(test_rank_wald(&b, &DMatrix::identity(6, 6), 2, 0.05, 10).is_err());
    }

    #[test]
    fn zero_matrix_selects_zero() {
        let b = DMatrix::zeros(4, 3);
        let br = sequential_tests("b", &b, &DMatrix::identity(12, 12), 100, 0.05, 7, 0).unwrap();
        assert_eq!((br.d_weighted, br.d_wald), (0, 0));
    }

    #[test]
    fn null_calibration_small() {
        // rank-1 truth, Gaussian noise with identity covariance scaled by 1/n
        let n = 400;
        let mut rejects = (0, 0);
        let reps = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for rep in 0..reps {
            let truth = DMatrix::from_column_slice(4, 1, &[1.0, 1.0, 0.0, 0.0])
                * DMatrix::from_row_slice(1, 3, &[1.0, 0.5, 0.0]);
            let noise = DMatrix::from_fn(4, 3, |_, _| {
                rng.sample::<f64, _>(StandardNormal) / (n as f64).sqrt()
            });
            let b = truth + noise;
            let v = DMatrix::identity(12, 12);
            let br = sequential_tests("b", &b, &v, n, 0.05, rep, 0).unwrap();
            let step = br.steps.iter().find(|s| s.j == 1).unwrap();
            if step.weighted.as_ref().is_some_and(|w| w.reject) {
                rejects.0 += 1;
            }
            if step.wald.as_ref().is_some_and(|w| w.reject) {
                rejects.1 += 1;
            }
        }
        let limit = (0.10 * reps as f64) as usize;
        assert!(rejects.0 <= limit && rejects.1 <= limit, "{rejects:?}");
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-0.1..0.1));
        let v = DMatrix::identity(15, 15);
        let a = sequential_tests("b", &b, &v, 30, 0.05, 11, 0).unwrap();
        let c = sequential_tests("b", &b, &v, 30, 0.05, 11, 0).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn exhaustive_lists_every_rank() {
        let u = DMatrix::from_column_slice(5, 1, &[1.0, -1.0, 2.0, 0.0, 0.5]);
        let b = u * DMatrix::from_row_slice(1, 3, &[1.0, 0.3, -0.7]);
        let v = DMatrix::identity(15, 15);
        let short = sequential_tests("b", &b, &v, 200, 0.05, 4, 0).unwrap();
        let full = sequential_tests_with("b", &b, &v, 200, 0.05, 4, 0, true).unwrap();
        assert_eq!(full.steps.len(), 3);
        assert!(full
            .steps
            .iter()
            .all(|s| s.weighted.is_some() && s.wald.is_some()));
        assert_eq!(
            (full.d_weighted, full.d_wald),
            (short.d_weighted, short.d_wald)
        );
        assert_eq!(full.steps[..short.steps.len()], short.steps[..]);
    }
}
