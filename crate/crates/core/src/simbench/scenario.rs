//! Simulation designs with `p = 20` continuous and `q = 10` binary predictors
//! and a response uniform on six categories.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Response};
use crate::error::{Error, Result};
use crate::estim::{Dims, ReductionKind};
use crate::matops::{block_diag, m_of, orthonormal_basis, unvech, vech, vstack};
use crate::model::ising::IsingTable;
use crate::model::params::assemble_b_blocks;
use crate::sparse::cv::selected_by_roles;
use crate::sparse::penalty::stacked_roles;

pub const P: usize = 20;
pub const Q: usize = 10;
pub const R: usize = 5;
pub const CATEGORIES: usize = R + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    ContD1,
    ContD2,
    BinD1,
    BinD2,
    MixedD1,
    MixedD2,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 6] = [
        ScenarioName::ContD1,
        ScenarioName::ContD2,
        ScenarioName::BinD1,
        ScenarioName::BinD2,
        ScenarioName::MixedD1,
        ScenarioName::MixedD2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::ContD1 => "cont-d1",
            ScenarioName::ContD2 => "cont-d2",
            ScenarioName::BinD1 => "bin-d1",
            ScenarioName::BinD2 => "bin-d2",
            ScenarioName::MixedD1 => "mixed-d1",
            ScenarioName::MixedD2 => "mixed-d2",
        }
    }
}

impl std::fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScenarioName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|n| n.as_str() == s)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("unknown scenario '{s}'")))
    }
}

/// Banded interaction pattern on the first seven binary variables,
/// symmetrized as `(K + Kᵀ)/2`.
pub fn k1_matrix() -> DMatrix<f64> {
    let mut k = DMatrix::zeros(Q, Q);
    let band = [
        [1.0, 30.0, 5.0, 0.0, 0.0, 0.0],
        [30.0, 1.0, 10.0, 0.0, 0.0, 0.0],
        [5.0, 10.0, 1.0, 30.0, 0.0, 0.0],
        [0.0, 0.0, 30.0, 1.0, 30.0, 0.0],
        [0.0, 0.0, 0.0, 30.0, 1.0, 30.0],
        [0.0, 0.0, 0.0, 0.0, 30.0, 1.0],
    ];
    for (i, row) in band.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            k[(i, j)] = v;
        }
    }
    k[(6, 5)] = 30.0;
    (&k + k.transpose()) * 0.5
}

/// `3 K1 / sqrt(Σ_ij K1_ij)`.
fn tau_k1() -> DMatrix<f64> {
    let k = k1_matrix();
    &k * (3.0 / k.sum().sqrt())
}

fn tau_diag() -> DMatrix<f64> {
    let mut t = DMatrix::zeros(Q, Q);
    for i in 0..6 {
        t[(i, i)] = 12.0 / 6f64.sqrt();
    }
    t
}

/// True parameters of one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: ScenarioName,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    /// Continuous directions, `p x d_x`.
    pub alpha: DMatrix<f64>,
    pub xi: DMatrix<f64>,
    pub rho: Vec<f64>,
    pub delta: DMatrix<f64>,
    /// `Δ α ξ`.
    pub a: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    pub mu_h: DVector<f64>,
    pub tau0: DVector<f64>,
    /// `m_q x r`, columns `vech(τ_j)`.
    pub tau: DMatrix<f64>,
    /// Rank of the optimal `b`.
    pub d: usize,
    /// Ranks of `(c1, c2)` when both blocks are present.
    pub sub_dims: Option<(usize, usize)>,
}

fn continuous_part(d: usize) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let half: DVector<f64> = DVector::from_fn(P, |i, _| if i >= P / 2 { 1.0 } else { 0.0 });
    if d == 1 {
        let alpha = DMatrix::from_column_slice(P, 1, half.as_slice());
        let xi = DMatrix::from_element(1, R, 1.0);
        let rho = 0.55;
        let delta = (DMatrix::identity(P, P) + &alpha * alpha.transpose() * rho) * 5.0;
        (alpha, xi, vec![rho], delta)
    } else {
        let second: DVector<f64> = DVector::from_fn(P, |i, _| {
            if i < P / 2 {
                0.0
            } else if i < 3 * P / 4 {
                1.0
            } else {
                -1.0
            }
        });
        let a1 = &half / half.norm();
        let a2 = &second / second.norm();
        let alpha = DMatrix::from_columns(&[a1.clone(), a2.clone()]);
        let xi = DMatrix::from_row_slice(2, R, &[1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let (r1, r2) = (0.55, 0.25);
        let delta =
            (DMatrix::identity(P, P) + &a1 * a1.transpose() * r1 + &a2 * a2.transpose() * r2) * 5.0;
        (alpha, xi, vec![r1, r2], delta)
    }
}

fn binary_part(d: usize) -> DMatrix<f64> {
    let base = vech(&tau_k1());
    let mut tau = DMatrix::zeros(m_of(Q), R);
    for j in 0..R {
        tau.set_column(j, &base);
    }
    if d == 2 {
        tau.set_column(1, &vech(&tau_diag()));
    }
    tau
}

impl Scenario {
    pub fn new(name: ScenarioName) -> Self {
        let (has_x, has_h, dx, dh) = match name {
            ScenarioName::ContD1 => (true, false, 1, 0),
            ScenarioName::ContD2 => (true, false, 2, 0),
            ScenarioName::BinD1 => (false, true, 0, 1),
            ScenarioName::BinD2 => (false, true, 0, 2),
            ScenarioName::MixedD1 => (true, true, 1, 1),
            ScenarioName::MixedD2 => (true, true, 2, 1),
        };
        let p = if has_x { P } else { 0 };
        let q = if has_h { Q } else { 0 };
        let (alpha, xi, rho, delta) = if has_x {
            continuous_part(dx)
        } else {
            (
                DMatrix::zeros(0, 0),
                DMatrix::zeros(0, R),
                vec![],
                DMatrix::zeros(0, 0),
            )
        };
        let a = &delta * &alpha * &xi;
        let a = if has_x { a } else { DMatrix::zeros(0, R) };
        let beta = if has_x && has_h {
            DMatrix::from_fn(P, Q, |_, j| if j < 6 { 0.1 } else { 0.0 })
        } else {
            DMatrix::zeros(p, q)
        };
        let tau = if has_h {
            binary_part(dh)
        } else {
            DMatrix::zeros(0, R)
        };
        let d = dx.max(dh);
        let sub_dims = if has_x && has_h { Some((dx, dh)) } else { None };
        Scenario {
            name,
            p,
            q,
            r: R,
            alpha,
            xi,
            rho,
            delta,
            a,
            beta,
            mu_h: DVector::zeros(q),
            tau0: DVector::zeros(m_of(q)),
            tau,
            d,
            sub_dims,
        }
    }

    /// Reduction the design is built for.
    pub fn kind(&self) -> ReductionKind {
        match (self.p > 0, self.q > 0) {
            (true, false) => ReductionKind::Pfc,
            (false, true) => ReductionKind::BinaryOnly,
            _ => ReductionKind::Optimal,
        }
    }

    /// Reductions evaluated on this design.
    pub fn reductions(&self) -> Vec<ReductionKind> {
        match self.kind() {
            ReductionKind::Optimal => vec![ReductionKind::Optimal, ReductionKind::Suboptimal],
            k => vec![k],
        }
    }

    pub fn true_dims(&self, kind: ReductionKind) -> Dims {
        match (kind, self.sub_dims) {
            (ReductionKind::Suboptimal, Some((a, b))) => Dims::Two(a, b),
            _ => Dims::One(self.d),
        }
    }

    fn lam_a(&self) -> DMatrix<f64> {
        &self.alpha * &self.xi
    }

    /// Population `b = (Δ⁻¹A; Lτ − βᵀΔ⁻¹A; Jτ)`.
    pub fn true_b(&self) -> DMatrix<f64> {
        assemble_b_blocks(&self.lam_a(), &self.beta, &self.tau)
    }

    /// Population `(c1, c2)`.
    pub fn true_c(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let lam_a = self.lam_a();
        let bl = -self.beta.transpose() * &lam_a;
        (vstack(&[&lam_a, &bl]), self.tau.clone())
    }

    /// Orthonormal basis of the true reduction in the coordinates of its statistic.
    pub fn true_basis(&self, kind: ReductionKind) -> DMatrix<f64> {
        match kind {
            ReductionKind::Suboptimal => {
                let (c1, c2) = self.true_c();
                block_diag(
                    &orthonormal_basis(&c1, 1e-10),
                    &orthonormal_basis(&c2, 1e-10),
                )
            }
            _ => orthonormal_basis(&self.true_b(), 1e-10),
        }
    }

    /// Predictors that enter the true optimal reduction.
    pub fn relevant(&self) -> (Vec<usize>, Vec<usize>) {
        let b = self.true_b();
        let roles = stacked_roles(self.p, self.q);
        selected_by_roles(&[(&b, roles.as_slice())], self.p, self.q, &[1e-12])
    }

    /// `Γ_y` for the centered basis row `f`.
    pub fn gamma(&self, f: &DVector<f64>) -> DMatrix<f64> {
        let v = &self.tau0 + &self.tau * f;
        unvech(v.as_slice(), self.q)
    }

    pub fn generate<R2: Rng + ?Sized>(&self, n: usize, rng: &mut R2) -> Result<Dataset> {
        if n < CATEGORIES {
            return Err(Error::Invalid(format!(
                "need at least {CATEGORIES} observations, got {n}"
            )));
        }
        // exact uniform margins, remainder round-robin
        let codes: Vec<usize> = (0..n).map(|i| i % CATEGORIES).collect();
        let mut counts = [0usize; CATEGORIES];
        codes.iter().for_each(|&c| counts[c] += 1);
        let props = DVector::from_fn(R, |j, _| counts[j] as f64 / n as f64);
        let f_of = |c: usize| {
            let mut f = -props.clone();
            if c < R {
                f[c] += 1.0;
            }
            f
        };
        let mut h = DMatrix::zeros(n, self.q);
        if self.q > 0 {
            for c in 0..CATEGORIES {
                let table = IsingTable::new(&self.gamma(&f_of(c)))?;
                let draws = table.sample(rng, counts[c]);
                let rows = codes
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| k == c)
                    .map(|(i, _)| i);
                for (k, i) in rows.enumerate() {
                    h.row_mut(i).copy_from(&draws.row(k));
                }
            }
        }
        let mut x = DMatrix::zeros(n, self.p);
        if self.p > 0 {
            let chol = self
                .delta
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Singular("scenario covariance".into()))?;
            let l = chol.l();
            for i in 0..n {
                let mut mean = &self.a * f_of(codes[i]);
                if self.q > 0 {
                    let hi = h.row(i).transpose() - &self.mu_h;
                    mean += &self.beta * hi;
                }
                let z = DVector::from_fn(self.p, |_, _| rng.sample::<f64, _>(StandardNormal));
                x.row_mut(i).copy_from(&(mean + &l * z).transpose());
            }
        }
        let y = Response::Categorical {
            codes,
            levels: (1..=CATEGORIES).map(|k| k.to_string()).collect(),
        };
        Dataset::new(y, x, h)
    }
}

fn generate_checked<R2: Rng + ?Sized>(
    scenario: &Scenario,
    n: usize,
    rng: &mut R2,
    allowed: &[ScenarioName],
) -> Result<Dataset> {
    if !allowed.contains(&scenario.name) {
        return Err(Error::Invalid(format!(
            "generator does not handle scenario {}",
            scenario.name
        )));
    }
    scenario.generate(n, rng)
}

pub fn gen_continuous<R2: Rng + ?Sized>(
    scenario: &Scenario,
    n: usize,
    rng: &mut R2,
) -> Result<Dataset> {
    generate_checked(
        scenario,
        n,
        rng,
        &[ScenarioName::ContD1, ScenarioName::ContD2],
    )
}

pub fn gen_binary<R2: Rng + ?Sized>(
    scenario: &Scenario,
    n: usize,
    rng: &mut R2,
) -> Result<Dataset> {
    generate_checked(
        scenario,
        n,
        rng,
        &[ScenarioName::BinD1, ScenarioName::BinD2],
    )
}

pub fn gen_mixed<R2: Rng + ?Sized>(scenario: &Scenario, n: usize, rng: &mut R2) -> Result<Dataset> {
    generate_checked(
        scenario,
        n,
        rng,
        &[ScenarioName::MixedD1, ScenarioName::MixedD2],
    )
}
