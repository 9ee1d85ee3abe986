//! Joint pseudo-likelihood fit of the Ising model with covariates.
//!
//! Parameters are stored per `vech` position `v` as the block
//! `(τ0_v, τ_{v,1..r})`, so each unordered pair has a single parameter set.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{m_of, vech_index};

pub const MAX_ITER: usize = 500;
pub const GRAD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingFit {
    pub tau0: DVector<f64>,
    /// `m_q x r`, one row per `vech` position.
    pub tau: DMatrix<f64>,
    pub converged: bool,
    pub pseudo_loglik: f64,
    pub iterations: usize,
    pub grad_sup: f64,
}

impl IsingFit {
    pub fn q(&self) -> usize {
        let m = self.tau0.len();
        ((((8 * m + 1) as f64).sqrt() as usize) - 1) / 2
    }

    pub fn params(&self) -> DVector<f64> {
        pack(&self.tau0, &self.tau)
    }
}

pub fn pack(tau0: &DVector<f64>, tau: &DMatrix<f64>) -> DVector<f64> {
    let (m, r) = tau.shape();
    let mut v = DVector::zeros(m * (1 + r));
    for row in 0..m {
        v[row * (1 + r)] = tau0[row];
        for c in 0..r {
            v[row * (1 + r) + 1 + c] = tau[(row, c)];
        }
    }
    v
}

pub fn unpack(theta: &DVector<f64>, r: usize) -> (DVector<f64>, DMatrix<f64>) {
    let m = theta.len() / (1 + r);
    let tau0 = DVector::from_fn(m, |row, _| theta[row * (1 + r)]);
    let tau = DMatrix::from_fn(m, r, |row, c| theta[row * (1 + r) + 1 + c]);
    (tau0, tau)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Pseudo-likelihood problem for fixed data.
pub struct PseudoLikelihood<'a> {
    h: &'a DMatrix<f64>,
    f: &'a DMatrix<f64>,
    q: usize,
    r: usize,
    /// `vech` positions touched by the conditional of `H_j`, indexed by `j'`.
    touched: Vec<Vec<usize>>,
}

impl<'a> PseudoLikelihood<'a> {
    pub fn new(h: &'a DMatrix<f64>, f: &'a DMatrix<f64>) -> Self {
        let q = h.ncols();
        let touched = (0..q)
            .map(|j| (0..q).map(|k| vech_index(q, j.max(k), j.min(k))).collect())
            .collect();
        Self {
            h,
            f,
            q,
            r: f.ncols(),
            touched,
        }
    }

    pub fn dim(&self) -> usize {
        m_of(self.q) * (1 + self.r)
    }

    fn g(&self, i: usize) -> Vec<f64> {
        let mut g = Vec::with_capacity(1 + self.r);
        g.push(1.0);
        g.extend(self.f.row(i).iter());
        g
    }

    /// `z_j` for observation `i`: 1 at `j`, `h_{ij'}` elsewhere.
    fn z(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.q)
            .map(|k| if k == j { 1.0 } else { self.h[(i, k)] })
            .collect()
    }

    fn logit(&self, theta: &DVector<f64>, g: &[f64], z: &[f64], j: usize) -> f64 {
        let w = 1 + self.r;
        let mut e = 0.0;
        for (k, &pos) in self.touched[j].iter().enumerate() {
            if z[k] == 0.0 {
                continue;
            }
            let base = pos * w;
            let mut s = 0.0;
            for c in 0..w {
                s += theta[base + c] * g[c];
            }
            e += z[k] * s;
        }
        e
    }

    /// `Σ_j ℓ_j`.
    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        let n = self.h.nrows();
        let mut total = 0.0;
        for i in 0..n {
            let g = self.g(i);
            for j in 0..self.q {
                let z = self.z(i, j);
                let e = self.logit(theta, &g, &z, j);
                total += self.h[(i, j)] * e - log1p_exp(e);
            }
        }
        total / n as f64
    }

    /// Value, gradient and (negative-definite) Hessian.
    pub fn derivatives(
        &self,
        theta: &DVector<f64>,
        with_hessian: bool,
    ) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = self.h.nrows();
        let w = 1 + self.r;
        let dim = self.dim();
        let mut grad = DVector::zeros(dim);
        let mut hess = if with_hessian {
            DMatrix::zeros(dim, dim)
        } else {
            DMatrix::zeros(0, 0)
        };
        let mut value = 0.0;
        let local = self.q * w;
        let mut block = DMatrix::zeros(local, local);
        for j in 0..self.q {
            if with_hessian {
                block.fill(0.0);
            }
            for i in 0..n {
                let g = self.g(i);
                let z = self.z(i, j);
                let e = self.logit(theta, &g, &z, j);
                let s = sigmoid(e);
                let hij = self.h[(i, j)];
                value += hij * e - log1p_exp(e);
                let resid = hij - s;
                for (k, &pos) in self.touched[j].iter().enumerate() {
                    if z[k] == 0.0 {
                        continue;
                    }
                    for c in 0..w {
                        grad[pos * w + c] += resid * z[k] * g[c];
                    }
                }
                if with_hessian {
                    let wt = s * (1.0 - s);
                    let xv: Vec<f64> = (0..local).map(|a| z[a / w] * g[a % w]).collect();
                    for b in 0..local {
                        let xb = xv[b] * wt;
                        if xb == 0.0 {
                            continue;
                        }
                        for a in b..local {
                            block[(a, b)] += xv[a] * xb;
                        }
                    }
                }
            }
            if with_hessian {
                let tj = &self.touched[j];
                for b in 0..local {
                    let gb = tj[b / w] * w + b % w;
                    for a in b..local {
                        let ga = tj[a / w] * w + a % w;
                        let v = block[(a, b)];
                        hess[(ga, gb)] -= v;
                        if ga != gb {
                            hess[(gb, ga)] -= v;
                        }
                    }
                }
            }
        }
        let nf = n as f64;
        (value / nf, grad / nf, hess / nf)
    }

    /// Per-observation score vectors (rows), summed over conditionals.
    pub fn scores(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let n = self.h.nrows();
        let w = 1 + self.r;
        let mut out = DMatrix::zeros(n, self.dim());
        for i in 0..n {
            let g = self.g(i);
            for j in 0..self.q {
                let z = self.z(i, j);
                let resid = self.h[(i, j)] - sigmoid(self.logit(theta, &g, &z, j));
                for (k, &pos) in self.touched[j].iter().enumerate() {
                    for c in 0..w {
                        out[(i, pos * w + c)] += resid * z[k] * g[c];
                    }
                }
            }
        }
        out
    }
}

/// Maximizes the joint pseudo-likelihood by damped Newton.
pub fn fit_ising_design(h: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<IsingFit> {
    let (n, q) = h.shape();
    let r = f.ncols();
    if f.nrows() != n {
        return Err(Error::Dimension("H and f have different row counts".into()));
    }
    for column in 0..q {
        let s: f64 = h.column(column).sum();
        if s == 0.0 || s == n as f64 {
            return Err(Error::Separation { column });
        }
    }
    let pl = PseudoLikelihood::new(h, f);
    let mut theta = DVector::zeros(pl.dim());
    // start main effects at the marginal log-odds
    for j in 0..q {
        let mean = h.column(j).mean();
        theta[vech_index(q, j, j) * (1 + r)] = (mean / (1.0 - mean)).ln();
    }
    let (mut value, mut grad, mut hess) = pl.derivatives(&theta, true);
    let mut iterations = 0;
    let mut converged = grad.amax() <= GRAD_TOL;
    while !converged && iterations < MAX_ITER {
        iterations += 1;
        let neg = -&hess;
        let newton = neg.cholesky().map(|c| c.solve(&grad));
        let mut accepted = false;
        for direction in newton.into_iter().chain(std::iter::once(grad.clone())) {
            let mut step = 1.0;
            for _ in 0..40 {
                let cand = &theta + &direction * step;
                let v = pl.value(&cand);
                if v.is_finite() && v >= value {
                    theta = cand;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            break;
        }
        (value, grad, hess) = pl.derivatives(&theta, true);
        converged = grad.amax() <= GRAD_TOL;
    }
    if !converged {
        log::warn!(
            "pseudo-likelihood fit stopped after {iterations} iterations, gradient {}",
            grad.amax()
        );
    }
    let (tau0, tau) = unpack(&theta, r);
    Ok(IsingFit {
        tau0,
        tau,
        converged,
        pseudo_loglik: value,
        iterations,
        grad_sup: grad.amax(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matops::unvech;
    use crate::model::ising::IsingTable;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_design(
        tau0: &DVector<f64>,
        tau: &DMatrix<f64>,
        n: usize,
        seed: u64,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = tau.ncols();
        let q = ((((8 * tau0.len() + 1) as f64).sqrt() as usize) - 1) / 2;
        // balanced categories with a centered indicator basis
        let levels = r + 1;
        let mut f = DMatrix::zeros(n, r);
        let mut h = DMatrix::zeros(n, q);
        let tables: Vec<IsingTable> = (0..levels)
            .map(|c| {
                let fc = DVector::from_fn(
                    r,
                    |k, _| if k == c { 1.0 } else { 0.0 } - 1.0 / levels as f64,
                );
                IsingTable::new(&unvech((tau0 + tau * fc).as_slice(), q)).unwrap()
            })
            .collect();
        for i in 0..n {
            let c = i % levels;
            for k in 0..r {
                f[(i, k)] = if k == c { 1.0 } else { 0.0 } - 1.0 / levels as f64;
            }
            h.row_mut(i)
                .copy_from(&tables[c].sample(&mut rng, 1).row(0));
        }
        (h, f)
    }

    #[test]
    fn intercept_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = DMatrix::from_fn(500, 1, |_, _| rng.random_range(0..2) as f64);
        let f = DMatrix::zeros(500, 0);
        let fit = fit_ising_design(&h, &f).unwrap();
        assert!(fit.converged);
        assert!(fit.tau0[0].abs() < 0.1);
    }

    #[test]
    fn constant_column_is_separation() {
        let h = DMatrix::from_fn(10, 2, |i, j| if j == 1 { 1.0 } else { (i % 2) as f64 });
        let f = DMatrix::zeros(10, 0);
        assert_eq!(
            fit_ising_design(&h, &f).unwrap_err(),
            Error::Separation { column: 1 }
        );
    }

    #[test]
    fn null_truth_small_estimates() {
        let (small_h, small_f) = sample_design(&DVector::zeros(3), &DMatrix::zeros(3, 2), 250, 1);
        let small = fit_ising_design(&small_h, &small_f).unwrap();
        let (h, f) = sample_design(&DVector::zeros(3), &DMatrix::zeros(3, 2), 1000, 2);
        let fit = fit_ising_design(&h, &f).unwrap();
        assert!(fit.converged);
        assert!(
            fit.tau.norm() < small.tau.norm() && fit.tau.norm() < 1.0,
            "{}",
            fit.tau.norm()
        );
        let pl = PseudoLikelihood::new(&h, &f);
        let (_, g, _) = pl.derivatives(&DVector::zeros(pl.dim()), false);
        // score at truth has sd of order 1/sqrt(n)
        assert!(g.amax() < 0.15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let tau0 = DVector::from_vec(vec![0.3, -0.5, 0.2, 0.8, -0.4, 0.1]);
        let tau = DMatrix::from_fn(6, 2, |i, j| 0.2 * (i as f64 - 2.5) * (j as f64 + 0.5));
        let (h, f) = sample_design(&tau0, &tau, 300, 3);
        let fit = fit_ising_design(&h, &f).unwrap();
        assert!(fit.converged && fit.grad_sup <= GRAD_TOL);
        let pl = PseudoLikelihood::new(&h, &f);
        // probe a point off the optimum so the gradient is not zero
        let theta = fit.params().map(|v| v + 0.1);
        let (_, g, _) = pl.derivatives(&theta, false);
        let step = 1e-6;
        for k in 0..pl.dim() {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[k] += step;
            dn[k] -= step;
            let fd = (pl.value(&up) - pl.value(&dn)) / (2.0 * step);
            assert!(
                (fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1e-3),
                "{k}: {fd} vs {}",
                g[k]
            );
        }
    }

    #[test]
    fn coverage_of_sandwich_intervals() {
        let tau0 = DVector::from_vec(vec![0.4, -0.6, -0.3]);
        let tau = DMatrix::from_row_slice(3, 1, &[0.8, 0.5, -0.7]);
        let truth = pack(&tau0, &tau);
        let mut covered = 0;
        let mut total = 0;
        for rep in 0..100 {
            let (h, f) = sample_design(&tau0, &tau, 2000, 100 + rep);
            let fit = fit_ising_design(&h, &f).unwrap();
            let pl = PseudoLikelihood::new(&h, &f);
            let est = fit.params();
            let (_, _, hess) = pl.derivatives(&est, true);
            let s = pl.scores(&est);
            let n = h.nrows() as f64;
            let bread = (-hess).try_inverse().unwrap();
            let meat = s.transpose() * &s / n;
            let cov = &bread * meat * &bread / n;
            for k in 0..truth.len() {
                total += 1;
                if (est[k] - truth[k]).abs() <= 3.0 * cov[(k, k)].sqrt() {
                    covered += 1;
                }
            }
        }
        assert!(covered as f64 >= 0.95 * total as f64, "{covered}/{total}");
    }
}
