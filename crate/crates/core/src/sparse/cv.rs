//! Cross-validated choice of `(λ, γ)` and the resulting variable selection.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::penalty::{
    linear_roles, stacked_roles, vech_roles, PenaltyKind, PenaltySpec, ProxWorkspace, RowRole,
};
use super::predictor::Downstream;
use super::solver::{orthonormalize, PenalizedProblem, SolverOptions};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estim::{
    fit_mle, reduction_from_fit, resolve_kind, svd_truncate, Dims, MleFit, ReductionKind,
    ReductionModel,
};
use crate::matops::block_diag;
use crate::model::stats::{stat_t_unchecked, stat_w_unchecked};
use crate::model::{FyBasis, FySpec};

/// Relative zero-row threshold: rows with norm at most this times the largest row norm are zero.
pub const ZERO_ROW_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvGrids {
    pub n_lambda: usize,
    /// Smallest grid value as a fraction of `λ_max`.
    pub lambda_ratio: f64,
    pub gammas: Vec<f64>,
}

impl Default for CvGrids {
    fn default() -> Self {
        Self {
            n_lambda: 100,
            lambda_ratio: 1e-4,
            gammas: (0..=10).map(|k| k as f64 / 10.0).collect(),
        }
    }
}

impl CvGrids {
    /// Fractions of `λ_max`, increasing, log-spaced, ending at 1.
    pub fn scales(&self) -> Vec<f64> {
        let n = self.n_lambda.max(1);
        if n == 1 {
            return vec![1.0];
        }
        let lo = self.lambda_ratio.ln();
        (0..n)
            .map(|k| (lo * (1.0 - k as f64 / (n - 1) as f64)).exp())
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda_ratio > 0.0 && self.lambda_ratio < 1.0) {
            return Err(Error::Invalid(format!(
                "lambda ratio must lie in (0, 1), got {}",
                self.lambda_ratio
            )));
        }
        if self.gammas.is_empty() || self.gammas.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::Invalid(
                "weights must be a nonempty list in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub gamma: Option<f64>,
    /// Fraction of `λ_max`.
    pub scale: f64,
    /// One level per branch.
    pub lambdas: Vec<f64>,
    /// Full-data solution per branch.
    pub solutions: Vec<DMatrix<f64>>,
    pub zero_rows: Vec<Vec<bool>>,
    pub kept_continuous: Vec<usize>,
    pub kept_binary: Vec<usize>,
    pub cv_errors: Vec<f64>,
    pub cv_mean: f64,
    pub cv_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub fold: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegPath {
    pub kind: ReductionKind,
    pub dims: Dims,
    pub penalties: Vec<PenaltyKind>,
    /// Empty unless a branch uses the mixed penalty.
    pub gammas: Vec<f64>,
    pub scales: Vec<f64>,
    /// `λ_max` per weight and branch.
    pub lambda_max: Vec<Vec<f64>>,
    /// Weight-major, scale increasing within a weight.
    pub points: Vec<PathPoint>,
    pub chosen: usize,
    pub folds: usize,
    pub seed: u64,
    pub skipped_folds: Vec<SkippedFold>,
}

impl RegPath {
    pub fn best(&self) -> &PathPoint {
        &self.points[self.chosen]
    }

    pub fn point(&self, gamma_index: usize, scale_index: usize) -> &PathPoint {
        &self.points[gamma_index * self.scales.len() + scale_index]
    }
}

/// One factorization problem: `b̂` (or `ĉ1`, `ĉ2`) with its row roles.
struct Branch {
    roles: Vec<RowRole>,
    penalty: PenaltyKind,
    problem: PenalizedProblem,
    start: DMatrix<f64>,
}

fn branch(
    matrix: &DMatrix<f64>,
    d: usize,
    roles: Vec<RowRole>,
    penalty: PenaltyKind,
) -> Result<Branch> {
    let svd = svd_truncate(matrix, d)?;
    let bb = svd.k1() * svd.r1().transpose();
    Ok(Branch {
        roles,
        penalty,
        problem: PenalizedProblem::new(matrix, &bb)?,
        start: svd.u1(),
    })
}

fn branches(fit: &MleFit, kind: ReductionKind, dims: Dims) -> Result<Vec<Branch>> {
    let (p, q) = (fit.p, fit.q);
    match (kind, dims) {
        (ReductionKind::Suboptimal, Dims::Two(d1, d2)) => {
            let (c1, c2) = fit.assemble_c()?;
            let d2 = if c2.norm() <= crate::estim::reduction::TAU_ZERO_TOL {
                0
            } else {
                d2
            };
            Ok(vec![
                branch(&c1, d1, linear_roles(p, q), PenaltyKind::ContinuousRows)?,
                branch(&c2, d2, vech_roles(q), PenaltyKind::BinaryOverlapping)?,
            ])
        }
        (ReductionKind::Suboptimal, Dims::One(_)) => Err(Error::Invalid(
            "the sub-optimal reduction takes a pair (d1, d2)".into(),
        )),
        (_, Dims::Two(..)) => Err(Error::Invalid(
            "only the sub-optimal reduction takes a pair of dimensions".into(),
        )),
        (kind, Dims::One(d)) => {
            let b = fit.assemble_b()?;
            let penalty = match kind {
                ReductionKind::Pfc => PenaltyKind::ContinuousRows,
                ReductionKind::BinaryOnly => PenaltyKind::BinaryOverlapping,
                _ => PenaltyKind::Mixed,
            };
            Ok(vec![branch(&b, d, stacked_roles(p, q), penalty)?])
        }
    }
}

fn penalty_for(br: &Branch, gamma: Option<f64>) -> Result<PenaltySpec> {
    let g = if br.penalty == PenaltyKind::Mixed {
        gamma
    } else {
        None
    };
    PenaltySpec::new(br.penalty, br.roles.clone(), g)
}

/// Centered statistics of every row, `n x len`, and the centering vector.
fn statistics(
    data: &Dataset,
    kind: ReductionKind,
    center: Option<&DVector<f64>>,
) -> (DMatrix<f64>, DVector<f64>) {
    let rows: Vec<DVector<f64>> = (0..data.n())
        .map(|i| {
            let x: Vec<f64> = data.x.row(i).iter().cloned().collect();
            let h: Vec<f64> = data.h.row(i).iter().cloned().collect();
            match kind {
                ReductionKind::Suboptimal => stat_w_unchecked(&x, &h),
                _ => stat_t_unchecked(&x, &h),
            }
        })
        .collect();
    let len = rows.first().map_or(0, |r| r.len());
    let mut s = DMatrix::zeros(rows.len(), len);
    for (i, r) in rows.iter().enumerate() {
        s.row_mut(i).copy_from(&r.transpose());
    }
    let mean = match center {
        Some(c) => c.clone(),
        None if !rows.is_empty() => s.row_mean().transpose(),
        None => DVector::zeros(len),
    };
    for mut row in s.row_iter_mut() {
        row -= mean.transpose();
    }
    (s, mean)
}

fn stacked_basis(solutions: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut alpha = orthonormalize(&solutions[0]);
    for c in &solutions[1..] {
        alpha = block_diag(&alpha, &orthonormalize(c));
    }
    alpha
}

struct Setup<'a> {
    kind: ReductionKind,
    dims: Dims,
    fy: FySpec,
    gammas: &'a [Option<f64>],
    scales: &'a [f64],
    lambda_max: &'a [Vec<f64>],
}

/// Walks the grid from the largest `λ` down with warm starts.
fn walk<F>(brs: &[Branch], setup: &Setup, mut visit: F) -> Result<()>
where
    F: FnMut(usize, usize, &[f64], &[DMatrix<f64>]) -> Result<()>,
{
    let opts = SolverOptions::default();
    for (gi, &gamma) in setup.gammas.iter().enumerate() {
        let specs: Vec<PenaltySpec> = brs
            .iter()
            .map(|b| penalty_for(b, gamma))
            .collect::<Result<_>>()?;
        let mut current: Vec<DMatrix<f64>> = brs.iter().map(|b| b.start.clone()).collect();
        let mut ws: Vec<ProxWorkspace> = brs.iter().map(|_| ProxWorkspace::default()).collect();
        for si in (0..setup.scales.len()).rev() {
            let lambdas: Vec<f64> = setup.lambda_max[gi]
                .iter()
                .map(|l| l * setup.scales[si])
                .collect();
            for (bi, br) in brs.iter().enumerate() {
                let sol =
                    br.problem
                        .solve(lambdas[bi], &specs[bi], &current[bi], opts, &mut ws[bi])?;
                current[bi] = sol.c;
            }
            visit(gi, si, &lambdas, &current)?;
        }
    }
    Ok(())
}

fn fold_errors(train: &Dataset, test: &Dataset, setup: &Setup) -> Result<Vec<Vec<f64>>> {
    let fy = FyBasis::build(&train.y, setup.fy)?;
    let fit = fit_mle(train, &fy, Default::default())?;
    let brs = branches(&fit, setup.kind, setup.dims)?;
    let (s_train, center) = statistics(train, setup.kind, None);
    let (s_test, _) = statistics(test, setup.kind, Some(&center));
    let mut errors = vec![vec![f64::NAN; setup.scales.len()]; setup.gammas.len()];
    let mut prev: Option<Downstream> = None;
    walk(&brs, setup, |gi, si, _, sols| {
        let alpha = stacked_basis(sols);
        let model = Downstream::fit_from(&(&s_train * &alpha), &train.y, prev.as_ref())?;
        errors[gi][si] = model.error(&(&s_test * &alpha), &test.y)?;
        prev = Some(model);
        Ok(())
    })?;
    Ok(errors)
}

/// Fold label of every observation after a seeded shuffle.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut label = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        label[i] = pos % folds;
    }
    label
}

/// Fits the whole `(γ, λ)` path and picks the pair with the smallest mean
/// held-out error. Ties go to the smaller weight, then the larger `λ`.
pub fn cv_select(
    data: &Dataset,
    fy: FySpec,
    kind: ReductionKind,
    dims: Dims,
    grids: &CvGrids,
    folds: usize,
    seed: u64,
) -> Result<RegPath> {
    grids.validate()?;
    let n = data.n();
    if folds < 2 || n < folds {
        return Err(Error::Invalid(format!(
            "{folds} folds for {n} observations"
        )));
    }
    let kind = resolve_kind(kind, data.p(), data.q());
    let full_fy = FyBasis::build(&data.y, fy)?;
    let fit = fit_mle(data, &full_fy, Default::default())?;
    let brs = branches(&fit, kind, dims)?;
    let mixed = brs.iter().any(|b| b.penalty == PenaltyKind::Mixed);
    let gammas: Vec<Option<f64>> = if mixed {
        grids.gammas.iter().map(|&g| Some(g)).collect()
    } else {
        vec![None]
    };
    let scales = grids.scales();
    let lambda_max: Vec<Vec<f64>> = gammas
        .iter()
        .map(|&g| {
            brs.iter()
                .map(|b| b.problem.lambda_max(&penalty_for(b, g)?))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let setup = Setup {
        kind,
        dims,
        fy,
        gammas: &gammas,
        scales: &scales,
        lambda_max: &lambda_max,
    };

    let label = fold_assignment(n, folds, seed);
    let mut per_fold = Vec::new();
    let mut skipped_folds = Vec::new();
    for fold in 0..folds {
        let test_rows: Vec<usize> = (0..n).filter(|&i| label[i] == fold).collect();
        let train_rows: Vec<usize> = (0..n).filter(|&i| label[i] != fold).collect();
        match fold_errors(&data.select(&train_rows), &data.select(&test_rows), &setup) {
            Ok(e) => per_fold.push(e),
            Err(e) => {
                log::warn!("fold {fold} skipped: {e}");
                skipped_folds.push(SkippedFold {
                    fold,
                    reason: e.to_string(),
                });
            }
        }
    }
    if per_fold.is_empty() {
        return Err(Error::Numerical(
            "every cross-validation fold failed".into(),
        ));
    }

    let mut points = Vec::with_capacity(gammas.len() * scales.len());
    let (p, q) = (data.p(), data.q());
    let mut slots: Vec<Option<PathPoint>> = vec![None; gammas.len() * scales.len()];
    walk(&brs, &setup, |gi, si, lambdas, sols| {
        let errs: Vec<f64> = per_fold.iter().map(|f| f[gi][si]).collect();
        let (mean, sd) = mean_sd(&errs);
        let tols: Vec<f64> = sols.iter().map(zero_tol).collect();
        let zero_rows = sols
            .iter()
            .zip(&tols)
            .map(|(c, &t)| zero_rows(c, t))
            .collect();
        let pairs: Vec<(&DMatrix<f64>, &[RowRole])> = sols
            .iter()
            .zip(&brs)
            .map(|(c, b)| (c, b.roles.as_slice()))
            .collect();
        let (kept_continuous, kept_binary) = selected_by_roles(&pairs, p, q, &tols);
        slots[gi * scales.len() + si] = Some(PathPoint {
            gamma: gammas[gi],
            scale: scales[si],
            lambdas: lambdas.to_vec(),
            solutions: sols.to_vec(),
            zero_rows,
            kept_continuous,
            kept_binary,
            cv_errors: errs,
            cv_mean: mean,
            cv_sd: sd,
        });
        Ok(())
    })?;
    points.extend(
        slots
            .into_iter()
            .map(|s| s.expect("every grid point visited")),
    );

    let mut chosen = 0;
    for gi in 0..gammas.len() {
        for si in (0..scales.len()).rev() {
            let k = gi * scales.len() + si;
            let best = points[chosen].cv_mean;
            if points[k].cv_mean < best || (gi == 0 && si == scales.len() - 1) {
                chosen = k;
            }
        }
    }
    Ok(RegPath {
        kind,
        dims,
        penalties: brs.iter().map(|b| b.penalty).collect(),
        gammas: gammas.iter().flatten().cloned().collect(),
        scales,
        lambda_max,
        points,
        chosen,
        folds,
        seed,
        skipped_folds,
    })
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// `ZERO_ROW_TOL` times the largest row norm of `c`.
pub fn zero_tol(c: &DMatrix<f64>) -> f64 {
    let top = (0..c.nrows()).map(|i| c.row(i).norm()).fold(0.0, f64::max);
    ZERO_ROW_TOL * top
}

pub fn zero_rows(c: &DMatrix<f64>, tol: f64) -> Vec<bool> {
    (0..c.nrows()).map(|i| c.row(i).norm() <= tol).collect()
}

/// Kept continuous and binary indices given several bases with their row roles.
/// A binary variable is kept when any row it enters is nonzero.
pub fn selected_by_roles(
    parts: &[(&DMatrix<f64>, &[RowRole])],
    p: usize,
    q: usize,
    tols: &[f64],
) -> (Vec<usize>, Vec<usize>) {
    let mut cont = vec![false; p];
    let mut bin = vec![false; q];
    for ((c, roles), &tol) in parts.iter().zip(tols) {
        for (row, role) in roles.iter().enumerate() {
            if c.row(row).norm() <= tol {
                continue;
            }
            match *role {
                RowRole::Continuous(j) => cont[j] = true,
                RowRole::Main(j) => bin[j] = true,
                RowRole::Pair(i, j) => {
                    bin[i] = true;
                    bin[j] = true;
                }
            }
        }
    }
    let idx = |v: Vec<bool>| {
        v.into_iter()
            .enumerate()
            .filter(|(_, k)| *k)
            .map(|(i, _)| i)
            .collect()
    };
    (idx(cont), idx(bin))
}

/// Selection for a basis over `t(x, h) = (x, h, pairs)`.
pub fn selected_variables(
    c: &DMatrix<f64>,
    p: usize,
    q: usize,
    tol: f64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let roles = stacked_roles(p, q);
    if c.nrows() != roles.len() {
        return Err(Error::Dimension(format!(
            "basis has {} rows, expected {}",
            c.nrows(),
            roles.len()
        )));
    }
    Ok(selected_by_roles(&[(c, &roles)], p, q, &[tol]))
}

/// Reduction whose basis spans the penalized solutions of `point`.
pub fn penalized_reduction(
    data: &Dataset,
    fy: FySpec,
    path: &RegPath,
    point: &PathPoint,
) -> Result<ReductionModel> {
    let basis = FyBasis::build(&data.y, fy)?;
    let fit = fit_mle(data, &basis, Default::default())?;
    let mut model = reduction_from_fit(data, basis, fit, path.kind, path.dims)?;
    let parts: Vec<DMatrix<f64>> = point.solutions.iter().map(orthonormalize).collect();
    model.dims = match path.dims {
        Dims::Two(..) => Dims::Two(parts[0].ncols(), parts.get(1).map_or(0, |a| a.ncols())),
        Dims::One(_) => Dims::One(parts[0].ncols()),
    };
    model.alpha = stacked_basis(&point.solutions);
    Ok(model)
}
