//! Sufficient reductions from the fitted `b` (optimal) or `c1`, `c2` (sub-optimal).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::continuous::{fit_continuous_design, ContinuousFit};
use super::ising_fit::{fit_ising_design, IsingFit};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matops::{block_diag, complete_basis, m_of};
use crate::model::params::assemble_b_blocks;
use crate::model::stats::{stat_t_unchecked, stat_w_unchecked};
use crate::model::FyBasis;

/// Full SVD with deterministic signs; the leading `d` triplets form the truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdParts {
    /// `rows x rows`, orthogonal.
    pub u: DMatrix<f64>,
    /// Decreasing, length `min(rows, cols)`.
    pub singular: Vec<f64>,
    /// `cols x cols`, orthogonal.
    pub v: DMatrix<f64>,
    pub d: usize,
}

impl SvdParts {
    pub fn u1(&self) -> DMatrix<f64> {
        self.u.columns(0, self.d).into_owned()
    }
    pub fn u0(&self) -> DMatrix<f64> {
        self.u.columns(self.d, self.u.ncols() - self.d).into_owned()
    }
    pub fn k1(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.singular[..self.d]))
    }
    pub fn r1(&self) -> DMatrix<f64> {
        self.v.columns(0, self.d).into_owned()
    }
    pub fn r0(&self) -> DMatrix<f64> {
        self.v.columns(self.d, self.v.ncols() - self.d).into_owned()
    }
    /// `U0ᵀ M R0`, the residual block.
    pub fn k0(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.u0().transpose() * m * self.r0()
    }
    pub fn low_rank(&self) -> DMatrix<f64> {
        self.u1() * self.k1() * self.r1().transpose()
    }
}

pub fn svd_truncate(m: &DMatrix<f64>, d: usize) -> Result<SvdParts> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if d > k {
        return Err(Error::Dimension(format!(
            "rank {d} exceeds min({rows}, {cols})"
        )));
    }
    if k == 0 {
        return Ok(SvdParts {
            u: DMatrix::identity(rows, rows),
            singular: vec![],
            v: DMatrix::identity(cols, cols),
            d,
        });
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("left vectors");
    let vt = svd.v_t.expect("right vectors");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut u1 = DMatrix::zeros(rows, k);
    let mut v1 = DMatrix::zeros(cols, k);
    let mut singular = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut uc = u.column(src).into_owned();
        let mut vc = vt.row(src).transpose();
        let big = uc
            .iter()
            .cloned()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if big < 0.0 {
            uc.neg_mut();
            vc.neg_mut();
        }
        u1.set_column(dst, &uc);
        v1.set_column(dst, &vc);
        singular.push(svd.singular_values[src]);
    }
    Ok(SvdParts {
        u: complete_basis(&u1),
        singular,
        v: complete_basis(&v1),
        d,
    })
}

/// Both parameter fits plus the design used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub cont: Option<ContinuousFit>,
    pub ising: Option<IsingFit>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Ridge-stabilize the continuous regression.
    pub ridge: bool,
}

pub fn fit_mle(data: &Dataset, fy: &FyBasis, opts: FitOptions) -> Result<MleFit> {
    let f = fy.design(&data.y)?;
    fit_mle_design(data, &f, opts)
}

pub fn fit_mle_design(data: &Dataset, f: &DMatrix<f64>, opts: FitOptions) -> Result<MleFit> {
    let (p, q, r) = (data.p(), data.q(), f.ncols());
    let cont = if p > 0 {
        Some(fit_continuous_design(&data.x, &data.h, f, opts.ridge)?)
    } else {
        None
    };
    let ising = if q > 0 {
        Some(fit_ising_design(&data.h, f)?)
    } else {
        None
    };
    Ok(MleFit {
        p,
        q,
        r,
        cont,
        ising,
    })
}

impl MleFit {
    fn lam_a(&self) -> Result<DMatrix<f64>> {
        match &self.cont {
            Some(c) => Ok(c.precision()? * &c.a_hat),
            None => Ok(DMatrix::zeros(0, self.r)),
        }
    }

    fn beta(&self) -> DMatrix<f64> {
        match &self.cont {
            Some(c) => c.beta_hat.clone(),
            None => DMatrix::zeros(0, self.q),
        }
    }

    fn tau(&self) -> DMatrix<f64> {
        match &self.ising {
            Some(i) => i.tau.clone(),
            None => DMatrix::zeros(0, self.r),
        }
    }

    /// `b̂ = (Δ̂⁻¹Â; Lτ̂ − β̂ᵀΔ̂⁻¹Â; Jτ̂)`.
    pub fn assemble_b(&self) -> Result<DMatrix<f64>> {
        Ok(assemble_b_blocks(&self.lam_a()?, &self.beta(), &self.tau()))
    }

    /// `ĉ1 = (Δ̂⁻¹Â; −β̂ᵀΔ̂⁻¹Â)`, `ĉ2 = τ̂`.
    pub fn assemble_c(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let lam_a = self.lam_a()?;
        let bl = -self.beta().transpose() * &lam_a;
        Ok((crate::matops::vstack(&[&lam_a, &bl]), self.tau()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionKind {
    Optimal,
    Suboptimal,
    Pfc,
    BinaryOnly,
}

impl std::str::FromStr for ReductionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => Ok(Self::Optimal),
            "suboptimal" => Ok(Self::Suboptimal),
            "pfc" => Ok(Self::Pfc),
            "binary-only" => Ok(Self::BinaryOnly),
            _ => Err(Error::Invalid(format!("unknown reduction kind '{s}'"))),
        }
    }
}

/// Requested dimension: one rank, or `(d1, d2)` for the sub-optimal kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dims {
    One(usize),
    Two(usize, usize),
}

/// Threshold under which `τ̂` counts as zero and the binary block is dropped.
pub const TAU_ZERO_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionModel {
    pub kind: ReductionKind,
    /// Orthonormal columns.
    pub alpha: DMatrix<f64>,
    pub dims: Dims,
    /// Singular values of `b̂`, or of `ĉ1` then `ĉ2`.
    pub singular_values: Vec<Vec<f64>>,
    /// Training mean of the reduced statistic.
    pub center: DVector<f64>,
    pub p: usize,
    pub q: usize,
    pub fy: FyBasis,
    pub fit: MleFit,
}

impl ReductionModel {
    pub fn d(&self) -> usize {
        self.alpha.ncols()
    }

    /// Statistic the basis acts on: `w` for sub-optimal, `t` otherwise.
    pub fn statistic(&self, x: &[f64], h: &[f64]) -> DVector<f64> {
        match self.kind {
            ReductionKind::Suboptimal => stat_w_unchecked(x, h),
            _ => stat_t_unchecked(x, h),
        }
    }

    pub fn stat_len(&self) -> usize {
        match self.kind {
            ReductionKind::Suboptimal => self.p + self.q + m_of(self.q),
            _ => self.p + self.q + crate::matops::k_of(self.q),
        }
    }
}

/// Effective kind: optimal becomes PFC without binaries and binary-only without continuous.
pub fn resolve_kind(kind: ReductionKind, p: usize, q: usize) -> ReductionKind {
    match kind {
        ReductionKind::Optimal if q == 0 => ReductionKind::Pfc,
        ReductionKind::Optimal if p == 0 => ReductionKind::BinaryOnly,
        k => k,
    }
}

pub fn fit_sdr(
    data: &Dataset,
    fy: &FyBasis,
    kind: ReductionKind,
    dims: Dims,
) -> Result<ReductionModel> {
    fit_sdr_with(data, fy, kind, dims, FitOptions::default())
}

pub fn fit_sdr_with(
    data: &Dataset,
    fy: &FyBasis,
    kind: ReductionKind,
    dims: Dims,
    opts: FitOptions,
) -> Result<ReductionModel> {
    let fit = fit_mle(data, fy, opts)?;
    reduction_from_fit(data, fy.clone(), fit, kind, dims)
}

/// Builds the reduction for an existing fit.
pub fn reduction_from_fit(
    data: &Dataset,
    fy: FyBasis,
    fit: MleFit,
    kind: ReductionKind,
    dims: Dims,
) -> Result<ReductionModel> {
    let (p, q, r) = (fit.p, fit.q, fit.r);
    let kind = resolve_kind(kind, p, q);
    match kind {
        ReductionKind::Pfc if q != 0 => {
            return Err(Error::Invalid(
                "the PFC reduction needs a dataset without binary predictors".into(),
            ))
        }
        ReductionKind::BinaryOnly if p != 0 => {
            return Err(Error::Invalid(
                "the binary-only reduction needs a dataset without continuous predictors".into(),
            ))
        }
        _ => {}
    }
    let (alpha, dims, singular_values) = match (kind, dims) {
        (ReductionKind::Suboptimal, Dims::Two(d1, d2)) => {
            if d1 > r.min(p) || d2 > r.min(m_of(q)) {
                return Err(Error::Dimension(format!(
                    "(d1, d2) = ({d1}, {d2}) exceeds (min(r, p), min(r, q(q+1)/2)) = ({}, {})",
                    r.min(p),
                    r.min(m_of(q))
                )));
            }
            let (c1, c2) = fit.assemble_c()?;
            let s1 = svd_truncate(&c1, d1)?;
            let tau_zero = c2.norm() <= TAU_ZERO_TOL;
            let d2 = if tau_zero { 0 } else { d2 };
            let s2 = svd_truncate(&c2, d2)?;
            let alpha = block_diag(&s1.u1(), &s2.u1());
            (alpha, Dims::Two(d1, d2), vec![s1.singular, s2.singular])
        }
        (ReductionKind::Suboptimal, Dims::One(_)) => {
            return Err(Error::Invalid(
                "the sub-optimal reduction takes a pair (d1, d2)".into(),
            ))
        }
        (_, Dims::One(d)) => {
            let b = fit.assemble_b()?;
            let m = b.nrows();
            if d > r.min(m) {
                return Err(Error::Dimension(format!(
                    "d = {d} exceeds min(r, m) = {}",
                    r.min(m)
                )));
            }
            let s = svd_truncate(&b, d)?;
            (s.u1(), dims, vec![s.singular])
        }
        (_, Dims::Two(..)) => {
            return Err(Error::Invalid(
                "only the sub-optimal reduction takes a pair of dimensions".into(),
            ))
        }
    };
    let mut model = ReductionModel {
        kind,
        alpha,
        dims,
        singular_values,
        center: DVector::zeros(0),
        p,
        q,
        fy,
        fit,
    };
    model.center = statistic_mean(&model, data);
    Ok(model)
}

fn statistic_mean(model: &ReductionModel, data: &Dataset) -> DVector<f64> {
    let n = data.n();
    let mut mean = DVector::zeros(model.stat_len());
    for i in 0..n {
        let x: Vec<f64> = data.x.row(i).iter().cloned().collect();
        let h: Vec<f64> = data.h.row(i).iter().cloned().collect();
        mean += model.statistic(&x, &h);
    }
    if n > 0 {
        mean /= n as f64;
    }
    mean
}

/// `α̂ᵀ(stat(x, h) − center)`.
pub fn apply_reduction(model: &ReductionModel, x: &[f64], h: &[f64]) -> Result<DVector<f64>> {
    if x.len() != model.p || h.len() != model.q {
        return Err(Error::Dimension(format!(
            "observation has ({}, {}) predictors, model expects ({}, {})",
            x.len(),
            h.len(),
            model.p,
            model.q
        )));
    }
    for (column, &v) in h.iter().enumerate() {
        if v != 0.0 && v != 1.0 {
            return Err(Error::NonBinary {
                row: 0,
                column,
                value: v,
            });
        }
    }
    Ok(model.alpha.transpose() * (model.statistic(x, h) - &model.center))
}

/// Reductions of every row, `n x d`.
pub fn reduce_dataset(model: &ReductionModel, data: &Dataset) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(data.n(), model.d());
    for i in 0..data.n() {
        let x: Vec<f64> = data.x.row(i).iter().cloned().collect();
        let h: Vec<f64> = data.h.row(i).iter().cloned().collect();
        out.row_mut(i)
            .copy_from(&apply_reduction(model, &x, &h)?.transpose());
    }
    Ok(out)
}
