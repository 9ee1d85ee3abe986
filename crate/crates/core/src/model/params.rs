//! Mixed model parameters and their exponential-family form.
//!
//! `X | H, Y ~ N(μ_X + A f + β(H − μ_H), Δ)` and `H | Y` Ising with
//! `vech(Γ_y) = τ0 + τ f`. The joint density of `(X, H) | Y` is a natural
//! exponential family with statistic `T(x, h)` and parameter `η_y`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{k_of, m_of, spd_inverse, spd_logdet, unvech, vech};
use crate::model::ising::IsingTable;

const LOG_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedModelParams {
    pub delta: DMatrix<f64>,
    pub mu_x: DVector<f64>,
    pub mu_h: DVector<f64>,
    pub a: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    pub tau0: DVector<f64>,
    pub tau: DMatrix<f64>,
}

impl MixedModelParams {
    pub fn p(&self) -> usize {
        self.delta.nrows()
    }

    pub fn q(&self) -> usize {
        self.mu_h.len()
    }

    pub fn r(&self) -> usize {
        self.a.ncols().max(self.tau.ncols())
    }

    pub fn validate(&self) -> Result<()> {
        let (p, q, r) = (self.p(), self.q(), self.r());
        let ok = self.delta.is_square()
            && self.mu_x.len() == p
            && self.a.shape() == (p, r)
            && self.beta.shape() == (p, q)
            && self.tau0.len() == m_of(q)
            && self.tau.shape() == (m_of(q), r);
        if !ok {
            return Err(Error::Dimension("inconsistent parameter shapes".into()));
        }
        Ok(())
    }

    /// `Γ_y = unvech(τ0 + τ f)`.
    pub fn gamma(&self, f: &DVector<f64>) -> DMatrix<f64> {
        let v = &self.tau0 + &self.tau * f;
        unvech(v.as_slice(), self.q())
    }

    fn precision(&self) -> Result<DMatrix<f64>> {
        if self.p() == 0 {
            return Ok(DMatrix::zeros(0, 0));
        }
        spd_inverse(&self.delta).ok_or_else(|| Error::Singular("Δ is not positive definite".into()))
    }

    /// Population `b = (Δ⁻¹A; Lτ − βᵀΔ⁻¹A; Jτ)`, `(p + q + k_q) x r`.
    pub fn b_matrix(&self) -> Result<DMatrix<f64>> {
        self.validate()?;
        let lam = self.precision()?;
        let lam_a = &lam * &self.a;
        Ok(assemble_b_blocks(&lam_a, &self.beta, &self.tau))
    }

    /// Random valid parameters, for tests and benchmarks.
    pub fn random<R: Rng + ?Sized>(p: usize, q: usize, r: usize, rng: &mut R) -> Self {
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let g = DMatrix::from_fn(p, p, |_, _| u(-1.0, 1.0));
        let delta = &g * g.transpose() + DMatrix::identity(p, p) * (0.5 + p as f64 * 0.1);
        let mu_x = DVector::from_fn(p, |_, _| u(-1.0, 1.0));
        let mu_h = DVector::from_fn(q, |_, _| u(0.0, 1.0));
        let a = DMatrix::from_fn(p, r, |_, _| u(-1.0, 1.0));
        let beta = DMatrix::from_fn(p, q, |_, _| u(-0.5, 0.5));
        let tau0 = DVector::from_fn(m_of(q), |_, _| u(-0.8, 0.8));
        let tau = DMatrix::from_fn(m_of(q), r, |_, _| u(-0.8, 0.8));
        Self {
            delta,
            mu_x,
            mu_h,
            a,
            beta,
            tau0,
            tau,
        }
    }
}

/// `(ΛA; Lτ − βᵀΛA; Jτ)` from `ΛA` (p x r), `β` (p x q) and `τ` (m_q x r).
pub fn assemble_b_blocks(
    lam_a: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    tau: &DMatrix<f64>,
) -> DMatrix<f64> {
    let (p, r) = lam_a.shape();
    let q = beta.ncols();
    let k = k_of(q);
    let bl = beta.transpose() * lam_a;
    let mut b = DMatrix::zeros(p + q + k, r);
    b.view_mut((0, 0), (p, r)).copy_from(lam_a);
    let mut row = 0;
    for j in 0..q {
        for i in j..q {
            let src = tau.row(row);
            if i == j {
                let mut dst = b.row_mut(p + j);
                dst.copy_from(&src);
                dst -= bl.row(j);
            } else {
                let at = p + q + crate::matops::pair_index(q, i, j);
                b.row_mut(at).copy_from(&src);
            }
            row += 1;
        }
    }
    b
}

/// Offsets of the stacked parameter vector
/// `(ϑ10, ϑ11, ϑ20, ϑ21, ϑ3, ϑ4, ϑ50, ϑ51)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThetaLayout {
    pub p: usize,
    pub q: usize,
    pub r: usize,
}

impl ThetaLayout {
    pub fn k(&self) -> usize {
        k_of(self.q)
    }
    pub fn block1(&self) -> usize {
        0
    }
    pub fn block2(&self) -> usize {
        self.p * (1 + self.r)
    }
    pub fn block3(&self) -> usize {
        self.block2() + self.q * (1 + self.r)
    }
    pub fn block4(&self) -> usize {
        self.block3() + m_of(self.p)
    }
    pub fn block5(&self) -> usize {
        self.block4() + self.p * self.q
    }
    pub fn len(&self) -> usize {
        self.block5() + self.k() * (1 + self.r)
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Start of `ϑ11`, `ϑ21`, `ϑ51`.
    pub fn slope1(&self) -> usize {
        self.p
    }
    pub fn slope2(&self) -> usize {
        self.block2() + self.q
    }
    pub fn slope5(&self) -> usize {
        self.block5() + self.k()
    }
}

/// Offsets of `η = (η1, η2, η3, η4, η5)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EtaLayout {
    pub p: usize,
    pub q: usize,
}

impl EtaLayout {
    pub fn e2(&self) -> usize {
        self.p
    }
    pub fn e3(&self) -> usize {
        self.p + self.q
    }
    pub fn e4(&self) -> usize {
        self.e3() + m_of(self.p)
    }
    pub fn e5(&self) -> usize {
        self.e4() + self.p * self.q
    }
    pub fn len(&self) -> usize {
        self.e5() + k_of(self.q)
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Blocks of `ϑ`; slopes are kept as matrices (`ϑ11 = vec(theta11)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalParams {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub theta10: DVector<f64>,
    pub theta11: DMatrix<f64>,
    pub theta20: DVector<f64>,
    pub theta21: DMatrix<f64>,
    pub theta3: DVector<f64>,
    /// `unvec(ϑ4) = Δ⁻¹β`, `p x q`.
    pub theta4: DMatrix<f64>,
    pub theta50: DVector<f64>,
    pub theta51: DMatrix<f64>,
}

impl NaturalParams {
    pub fn layout(&self) -> ThetaLayout {
        ThetaLayout {
            p: self.p,
            q: self.q,
            r: self.r,
        }
    }

    pub fn theta(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.layout().len());
        v.extend_from_slice(self.theta10.as_slice());
        v.extend_from_slice(self.theta11.as_slice());
        v.extend_from_slice(self.theta20.as_slice());
        v.extend_from_slice(self.theta21.as_slice());
        v.extend_from_slice(self.theta3.as_slice());
        v.extend_from_slice(self.theta4.as_slice());
        v.extend_from_slice(self.theta50.as_slice());
        v.extend_from_slice(self.theta51.as_slice());
        DVector::from_vec(v)
    }

    pub fn from_theta(theta: &[f64], p: usize, q: usize, r: usize) -> Result<Self> {
        let lay = ThetaLayout { p, q, r };
        if theta.len() != lay.len() {
            return Err(Error::Dimension(format!(
                "ϑ has length {}, expected {}",
                theta.len(),
                lay.len()
            )));
        }
        let k = lay.k();
        let vecs = |s: usize, n: usize| DVector::from_column_slice(&theta[s..s + n]);
        let mats = |s: usize, rows: usize, cols: usize| {
            DMatrix::from_column_slice(rows, cols, &theta[s..s + rows * cols])
        };
        Ok(Self {
            p,
            q,
            r,
            theta10: vecs(0, p),
            theta11: mats(p, p, r),
            theta20: vecs(lay.block2(), q),
            theta21: mats(lay.slope2(), q, r),
            theta3: vecs(lay.block3(), m_of(p)),
            theta4: mats(lay.block4(), p, q),
            theta50: vecs(lay.block5(), k),
            theta51: mats(lay.slope5(), k, r),
        })
    }

    /// `η_y = F_y ϑ` for centered basis value `f`.
    pub fn eta(&self, f: &DVector<f64>) -> DVector<f64> {
        let e1 = &self.theta10 + &self.theta11 * f;
        let e2 = &self.theta20 + &self.theta21 * f;
        let e5 = &self.theta50 + &self.theta51 * f;
        let mut v = Vec::with_capacity(
            EtaLayout {
                p: self.p,
                q: self.q,
            }
            .len(),
        );
        v.extend_from_slice(e1.as_slice());
        v.extend_from_slice(e2.as_slice());
        v.extend_from_slice(self.theta3.as_slice());
        v.extend_from_slice(self.theta4.as_slice());
        v.extend_from_slice(e5.as_slice());
        DVector::from_vec(v)
    }

    /// Slope blocks stacked as the `b` matrix `(ϑ11; ϑ21; ϑ51)`.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        crate::matops::vstack(&[&self.theta11, &self.theta21, &self.theta51])
    }
}

pub fn natural_params(params: &MixedModelParams) -> Result<NaturalParams> {
    params.validate()?;
    let (p, q, r) = (params.p(), params.q(), params.r());
    let lam = params.precision()?;
    let lam_beta = &lam * &params.beta;
    let lam_a = &lam * &params.a;
    let quad = params.beta.transpose() * &lam_beta;
    let gamma0 = unvech(params.tau0.as_slice(), q);

    let theta10 = &lam * &params.mu_x - &lam_beta * &params.mu_h;
    let mut theta20 = -lam_beta.transpose() * &params.mu_x + &quad * &params.mu_h;
    for i in 0..q {
        theta20[i] += gamma0[(i, i)] - 0.5 * quad[(i, i)];
    }
    let mut theta50 = DVector::zeros(k_of(q));
    for (kk, (i, j)) in crate::matops::lower_pairs(q).into_iter().enumerate() {
        theta50[kk] = gamma0[(i, j)] - quad[(i, j)];
    }
    let b = assemble_b_blocks(&lam_a, &params.beta, &params.tau);
    Ok(NaturalParams {
        p,
        q,
        r,
        theta10,
        theta11: lam_a,
        theta20,
        theta21: b.rows(p, q).into_owned(),
        theta3: vech(&lam),
        theta4: lam_beta,
        theta50,
        theta51: b.rows(p + q, k_of(q)).into_owned(),
    })
}

/// `T(x, h) = (x, h, T3, vec(x hᵀ), J vech(h hᵀ))` where `T3ᵀ vech(Λ) = −½ xᵀΛx`.
pub fn suff_stat(x: &[f64], h: &[f64]) -> DVector<f64> {
    let (p, q) = (x.len(), h.len());
    let mut v = Vec::with_capacity(EtaLayout { p, q }.len());
    v.extend_from_slice(x);
    v.extend_from_slice(h);
    for j in 0..p {
        for i in j..p {
            v.push(if i == j {
                -0.5 * x[i] * x[i]
            } else {
                -x[i] * x[j]
            });
        }
    }
    for &hj in h {
        for &xi in x {
            v.push(xi * hj);
        }
    }
    crate::model::stats::push_interactions(h, &mut v);
    DVector::from_vec(v)
}

/// Conditional-model quantities recovered from `η`.
#[derive(Debug, Clone)]
pub struct EtaDecoded {
    /// `Λ = unvech(η3)`, the precision of `X | H`.
    pub precision: DMatrix<f64>,
    /// `Δ = Λ⁻¹`.
    pub delta: DMatrix<f64>,
    pub logdet_precision: f64,
    /// `X | h` has mean `intercept + slope h`.
    pub intercept: DVector<f64>,
    pub slope: DMatrix<f64>,
    /// Ising parameter of the `H` marginal.
    pub gamma: DMatrix<f64>,
}

pub fn decode_eta(eta: &[f64], p: usize, q: usize) -> Result<EtaDecoded> {
    let lay = EtaLayout { p, q };
    if eta.len() != lay.len() {
        return Err(Error::Dimension(format!(
            "η has length {}, expected {}",
            eta.len(),
            lay.len()
        )));
    }
    let precision = unvech(&eta[lay.e3()..lay.e4()], p);
    let (delta, logdet_precision) = if p == 0 {
        (DMatrix::zeros(0, 0), 0.0)
    } else {
        let d = spd_inverse(&precision).ok_or_else(|| {
            Error::Numerical("precision block of η is not positive definite".into())
        })?;
        (d, spd_logdet(&precision).unwrap_or(0.0))
    };
    let eta1 = DVector::from_column_slice(&eta[..p]);
    let eta4 = DMatrix::from_column_slice(p, q, &eta[lay.e4()..lay.e5()]);
    let intercept = &delta * &eta1;
    let slope = &delta * &eta4;
    let quad = eta4.transpose() * &slope;
    let lin = eta4.transpose() * &intercept;
    let mut gamma = DMatrix::zeros(q, q);
    for i in 0..q {
        gamma[(i, i)] = eta[lay.e2() + i] + lin[i] + 0.5 * quad[(i, i)];
    }
    for (kk, (i, j)) in crate::matops::lower_pairs(q).into_iter().enumerate() {
        let v = eta[lay.e5() + kk] + quad[(i, j)];
        gamma[(i, j)] = v;
        gamma[(j, i)] = v;
    }
    Ok(EtaDecoded {
        precision,
        delta,
        logdet_precision,
        intercept,
        slope,
        gamma,
    })
}

/// Log normalizer `ψ(η) = −½ log|Λ| + ½ η1ᵀΛ⁻¹η1 + log G(η)`.
pub fn psi(eta: &[f64], p: usize, q: usize) -> Result<f64> {
    let dec = decode_eta(eta, p, q)?;
    let eta1 = DVector::from_column_slice(&eta[..p]);
    let log_g = IsingTable::new(&dec.gamma)?.log_partition;
    Ok(-0.5 * dec.logdet_precision + 0.5 * eta1.dot(&dec.intercept) + log_g)
}

/// Both evaluations of `log f(x, h | y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDensity {
    /// Gaussian conditional plus Ising marginal.
    pub factorized: f64,
    /// `log h(x,h) + Tᵀη_y − ψ(η_y)`.
    pub canonical: f64,
}

fn check_point(params: &MixedModelParams, x: &[f64], h: &[f64], f: &DVector<f64>) -> Result<()> {
    params.validate()?;
    if x.len() != params.p() || h.len() != params.q() || f.len() != params.r() {
        return Err(Error::Dimension(
            "observation does not match parameter dimensions".into(),
        ));
    }
    Ok(())
}

pub fn log_density_factorized(
    x: &[f64],
    h: &[f64],
    f: &DVector<f64>,
    params: &MixedModelParams,
) -> Result<f64> {
    check_point(params, x, h, f)?;
    let p = params.p();
    let hv = DVector::from_column_slice(h);
    let table = IsingTable::new(&params.gamma(f))?;
    let log_pmf = table.prob(h)?.ln();
    if p == 0 {
        return Ok(log_pmf);
    }
    let mean = &params.mu_x + &params.a * f + &params.beta * (&hv - &params.mu_h);
    let resid = DVector::from_column_slice(x) - mean;
    let chol = params
        .delta
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("Δ is not positive definite".into()))?;
    let z = chol
        .l()
        .solve_lower_triangular(&resid)
        .expect("triangular solve");
    let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    Ok(-0.5 * (p as f64 * LOG_2PI + logdet + z.norm_squared()) + log_pmf)
}

pub fn log_density_canonical(
    x: &[f64],
    h: &[f64],
    f: &DVector<f64>,
    params: &MixedModelParams,
) -> Result<f64> {
    check_point(params, x, h, f)?;
    let (p, q) = (params.p(), params.q());
    let eta = natural_params(params)?.eta(f);
    let t = suff_stat(x, h);
    Ok(-0.5 * p as f64 * LOG_2PI + t.dot(&eta) - psi(eta.as_slice(), p, q)?)
}

pub fn log_density(
    x: &[f64],
    h: &[f64],
    f: &DVector<f64>,
    params: &MixedModelParams,
) -> Result<LogDensity> {
    Ok(LogDensity {
        factorized: log_density_factorized(x, h, f, params)?,
        canonical: log_density_canonical(x, h, f, params)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matops::{orthonormal_basis, projection};
    use crate::model::ising::state_of;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_point(
        p: usize,
        q: usize,
        r: usize,
        rng: &mut ChaCha8Rng,
    ) -> (Vec<f64>, Vec<f64>, DVector<f64>) {
        let x = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let h = (0..q).map(|_| rng.random_range(0..2) as f64).collect();
        let f = DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
        (x, h, f)
    }

    #[test]
    fn decoupled_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut prm = MixedModelParams::random(3, 2, 2, &mut rng);
        prm.beta.fill(0.0);
        prm.tau.fill(0.0);
        prm.tau0.fill(0.0);
        prm.mu_x.fill(0.0);
        prm.mu_h.fill(0.0);
        let nat = natural_params(&prm).unwrap();
        assert!(nat.theta20.norm() == 0.0 && nat.theta21.norm() < 1e-15);
        assert!(nat.theta4.norm() == 0.0 && nat.theta50.norm() == 0.0 && nat.theta51.norm() == 0.0);
        assert!(nat.theta10.norm() == 0.0);
        let lam_a = spd_inverse(&prm.delta).unwrap() * &prm.a;
        assert!((nat.theta11 - lam_a).norm() < 1e-12);
    }

    #[test]
    fn scalar_precision() {
        let prm = MixedModelParams {
            delta: DMatrix::from_element(1, 1, 4.0),
            mu_x: DVector::zeros(1),
            mu_h: DVector::zeros(1),
            a: DMatrix::zeros(1, 1),
            beta: DMatrix::zeros(1, 1),
            tau0: DVector::zeros(1),
            tau: DMatrix::zeros(1, 1),
        };
        assert_eq!(natural_params(&prm).unwrap().theta3.as_slice(), &[0.25]);
    }

    #[test]
    fn precision_block_inverts_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let prm = MixedModelParams::random(2, 2, 1, &mut rng);
        let nat = natural_params(&prm).unwrap();
        let lam = unvech(nat.theta3.as_slice(), 2);
        assert!((lam * &prm.delta - DMatrix::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn theta_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let nat = natural_params(&MixedModelParams::random(3, 3, 2, &mut rng)).unwrap();
        let back = NaturalParams::from_theta(nat.theta().as_slice(), 3, 3, 2).unwrap();
        assert_eq!(back, nat);
        assert_eq!(nat.theta().len(), 3 * 3 + 3 * 3 + 6 + 9 + 3 * 3);
    }

    #[test]
    fn psi_trivial_values() {
        assert!(psi(&[0.0, 1.0], 1, 0).unwrap().abs() < 1e-15);
        assert!((psi(&[0.0], 0, 1).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gaussian_only_density() {
        let prm = MixedModelParams {
            delta: DMatrix::from_element(1, 1, 2.0),
            mu_x: DVector::from_element(1, 0.5),
            mu_h: DVector::zeros(0),
            a: DMatrix::from_element(1, 1, 1.5),
            beta: DMatrix::zeros(1, 0),
            tau0: DVector::zeros(0),
            tau: DMatrix::zeros(0, 1),
        };
        let f = DVector::from_element(1, 0.4);
        let x = 1.3;
        let mean = 0.5 + 1.5 * 0.4;
        let expect = -0.5 * (2.0 * std::f64::consts::PI * 2.0).ln() - (x - mean) * (x - mean) / 4.0;
        let ld = log_density(&[x], &[], &f, &prm).unwrap();
        assert!((ld.factorized - expect).abs() < 1e-12);
        assert!((ld.canonical - expect).abs() < 1e-12);
    }

    #[test]
    fn binary_only_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut prm = MixedModelParams::random(0, 3, 2, &mut rng);
        prm.delta = DMatrix::zeros(0, 0);
        let f = DVector::from_vec(vec![0.3, -0.2]);
        let h = [1.0, 0.0, 1.0];
        let pmf = crate::model::ising::ising_pmf(&h, &prm.gamma(&f)).unwrap();
        let ld = log_density(&[], &h, &f, &prm).unwrap();
        assert!((ld.factorized - pmf.ln()).abs() < 1e-12);
        assert!((ld.canonical - pmf.ln()).abs() < 1e-10);
    }

    #[test]
    fn two_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let prm = MixedModelParams::random(2, 2, 2, &mut rng);
        let (x, h, f) = random_point(2, 2, 2, &mut rng);
        let ld = log_density(&x, &h, &f, &prm).unwrap();
        assert!((ld.factorized - ld.canonical).abs() <= 1e-8);
    }

    #[test]
    fn density_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let prm = MixedModelParams::random(1, 1, 1, &mut rng);
        let f = DVector::from_element(1, 0.7);
        let eta = natural_params(&prm).unwrap().eta(&f);
        let sd = prm.delta[(0, 0)].sqrt();
        let mut total = 0.0;
        for m in 0..2u64 {
            let h = state_of(m, 1);
            let centre =
                prm.mu_x[0] + prm.a[(0, 0)] * f[0] + prm.beta[(0, 0)] * (h[0] - prm.mu_h[0]);
            // composite Simpson over ±12 sd
            let (lo, hi, steps) = (centre - 12.0 * sd, centre + 12.0 * sd, 4000);
            let step = (hi - lo) / steps as f64;
            for s in 0..=steps {
                let x = lo + s as f64 * step;
                let w = if s == 0 || s == steps {
                    1.0
                } else if s % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let t = suff_stat(&[x], &h);
                let ld = -0.5 * LOG_2PI + t.dot(&eta) - psi(eta.as_slice(), 1, 1).unwrap();
                total += w * ld.exp() * step / 3.0;
            }
        }
        assert!((total - 1.0).abs() < 1e-6, "total = {total}");
    }

    #[test]
    fn eta_deviations_lie_in_b_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let prm = MixedModelParams::random(3, 3, 3, &mut rng);
        let nat = natural_params(&prm).unwrap();
        let (p, q) = (3, 3);
        let lay = EtaLayout { p, q };
        // categorical basis over 4 categories, centered
        let fs: Vec<DVector<f64>> = (0..4)
            .map(|c| DVector::from_fn(3, |k, _| if k == c { 0.75 } else { -0.25 }))
            .collect();
        let etas: Vec<DVector<f64>> = fs.iter().map(|f| nat.eta(f)).collect();
        let mean = etas
            .iter()
            .fold(DVector::zeros(lay.len()), |acc, e| acc + e)
            / 4.0;
        let b = prm.b_matrix().unwrap();
        let mut a = DMatrix::zeros(lay.len(), 3);
        a.rows_mut(0, p + q).copy_from(&b.rows(0, p + q));
        a.rows_mut(lay.e5(), k_of(q))
            .copy_from(&b.rows(p + q, k_of(q)));
        let proj = projection(&orthonormal_basis(&a, 1e-10));
        for e in &etas {
            let dev = e - &mean;
            assert!((&dev - &proj * &dev).norm() <= 1e-10);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(1000))]
        #[test]
        fn exponential_family_identity(p in 0usize..=5, q in 0usize..=4, r in 1usize..=3, seed in proptest::prelude::any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let prm = MixedModelParams::random(p, q, r, &mut rng);
            let (x, h, f) = random_point(p, q, r, &mut rng);
            let ld = log_density(&x, &h, &f, &prm).unwrap();
            proptest::prop_assert!((ld.factorized - ld.canonical).abs() <= 1e-8,
                "{} vs {}", ld.factorized, ld.canonical);
        }
    }
}
