//! Hessian of the log normalizer, `∂²ψ/∂η∂ηᵀ = Cov(T)`.
//!
//! Split as `E[Cov(T | H)] + Cov(E[T | H])`. Given `H = h`, `X` is normal with
//! mean `c + βh`, so the within part uses Gaussian moment identities, and
//! `E[T | h]` is linear in the monomials `z(h) = (1, h, h_i h_j)`, whose
//! moments come from enumerating the Ising states.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::matops::{k_of, lower_pairs, pair_index, vech_pairs};
use crate::model::ising::IsingTable;
use crate::model::params::{decode_eta, EtaLayout};

/// Mean and covariance of `z(H) = (1, H, J vech(HHᵀ))`.
pub fn monomial_moments(table: &IsingTable) -> (DVector<f64>, DMatrix<f64>) {
    let q = table.q;
    let dim = 1 + q + k_of(q);
    let pairs = lower_pairs(q);
    let mut mean = DVector::zeros(dim);
    let mut second = DMatrix::zeros(dim, dim);
    let mut active = Vec::with_capacity(dim);
    for (mask, &prob) in table.probs.iter().enumerate() {
        if prob == 0.0 {
            continue;
        }
        active.clear();
        active.push(0);
        for i in 0..q {
            if mask >> i & 1 == 1 {
                active.push(1 + i);
            }
        }
        for (kk, &(i, j)) in pairs.iter().enumerate() {
            if mask >> i & 1 == 1 && mask >> j & 1 == 1 {
                active.push(1 + q + kk);
            }
        }
        for &a in &active {
            mean[a] += prob;
            for &b in &active {
                second[(a, b)] += prob;
            }
        }
    }
    let cov = &second - &mean * mean.transpose();
    (mean, cov)
}

/// Position of the monomial `h_k h_l` in `z` (`h_k` when `k == l`).
fn zpos(q: usize, k: usize, l: usize) -> usize {
    if k == l {
        1 + k
    } else {
        1 + q + pair_index(q, k.max(l), k.min(l))
    }
}

/// `J(η) = ∂²ψ/∂η²`, square of size `p + q + m_p + pq + k_q`.
pub fn psi_hessian(eta: &[f64], p: usize, q: usize) -> Result<DMatrix<f64>> {
    let dec = decode_eta(eta, p, q)?;
    let table = IsingTable::new(&dec.gamma)?;
    let (zmean, zcov) = monomial_moments(&table);
    let lay = EtaLayout { p, q };
    let dim = lay.len();
    let nz = zmean.len();
    let (delta, c, beta) = (&dec.delta, &dec.intercept, &dec.slope);
    let vp = vech_pairs(p);
    let scale = |a: usize, b: usize| if a == b { 0.5 } else { 1.0 };

    // E[T | h] = G z(h)
    let mut g = DMatrix::zeros(dim, nz);
    for a in 0..p {
        g[(a, 0)] = c[a];
        for l in 0..q {
            g[(a, 1 + l)] = beta[(a, l)];
        }
    }
    for k in 0..q {
        g[(lay.e2() + k, 1 + k)] = 1.0;
    }
    for (v, &(a, b)) in vp.iter().enumerate() {
        let row = lay.e3() + v;
        let s = -scale(a, b);
        g[(row, 0)] = s * (delta[(a, b)] + c[a] * c[b]);
        for l in 0..q {
            g[(row, 1 + l)] += s * (c[a] * beta[(b, l)] + c[b] * beta[(a, l)]);
            for k in 0..q {
                g[(row, zpos(q, k, l))] += s * beta[(a, k)] * beta[(b, l)];
            }
        }
    }
    for k in 0..q {
        for a in 0..p {
            let row = lay.e4() + a + p * k;
            g[(row, 1 + k)] += c[a];
            for l in 0..q {
                g[(row, zpos(q, k, l))] += beta[(a, l)];
            }
        }
    }
    for kk in 0..k_of(q) {
        g[(lay.e5() + kk, 1 + q + kk)] = 1.0;
    }
    let mut hess = &g * &zcov * g.transpose();

    if p > 0 {
        // moments of the conditional mean m = c + βH
        let eh = zmean.rows(1, q).into_owned();
        let mut ehh = DMatrix::zeros(q, q);
        for k in 0..q {
            for l in 0..q {
                ehh[(k, l)] = zmean[zpos(q, k, l)];
            }
        }
        let em = c + beta * &eh;
        let emm = c * c.transpose()
            + c * (beta * &eh).transpose()
            + beta * &eh * c.transpose()
            + beta * &ehh * beta.transpose();
        // E[h_k m_a], q x p
        let ehm = &eh * c.transpose() + &ehh * beta.transpose();

        let mut add = |i: usize, j: usize, v: f64| {
            hess[(i, j)] += v;
        };
        // X with X
        for a in 0..p {
            for b in 0..p {
                add(a, b, delta[(a, b)]);
            }
        }
        // X with quadratic terms, both orders
        for (v, &(a, b)) in vp.iter().enumerate() {
            let s = -scale(a, b);
            for e in 0..p {
                let val = s * (em[a] * delta[(b, e)] + em[b] * delta[(a, e)]);
                add(e, lay.e3() + v, val);
                add(lay.e3() + v, e, val);
            }
        }
        // quadratic with quadratic
        for (v, &(a, b)) in vp.iter().enumerate() {
            for (w, &(cc, d)) in vp.iter().enumerate() {
                let s = scale(a, b) * scale(cc, d);
                let val = delta[(a, cc)] * delta[(b, d)]
                    + delta[(a, d)] * delta[(b, cc)]
                    + emm[(a, cc)] * delta[(b, d)]
                    + emm[(a, d)] * delta[(b, cc)]
                    + emm[(b, cc)] * delta[(a, d)]
                    + emm[(b, d)] * delta[(a, cc)];
                add(lay.e3() + v, lay.e3() + w, s * val);
            }
        }
        for k in 0..q {
            for a in 0..p {
                let t4 = lay.e4() + a + p * k;
                // X with h_k X_a
                for e in 0..p {
                    let val = eh[k] * delta[(e, a)];
                    add(e, t4, val);
                    add(t4, e, val);
                }
                // quadratic with h_k X_a
                for (v, &(u, w)) in vp.iter().enumerate() {
                    let val =
                        -scale(u, w) * (ehm[(k, u)] * delta[(w, a)] + ehm[(k, w)] * delta[(u, a)]);
                    add(lay.e3() + v, t4, val);
                    add(t4, lay.e3() + v, val);
                }
                // h_k X_a with h_l X_b
                for l in 0..q {
                    for b in 0..p {
                        add(t4, lay.e4() + b + p * l, ehh[(k, l)] * delta[(a, b)]);
                    }
                }
            }
        }
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    Ok(sym)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::{natural_params, psi, MixedModelParams};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_hessian(eta: &DVector<f64>, p: usize, q: usize, step: f64) -> DMatrix<f64> {
        let n = eta.len();
        let f = |v: &DVector<f64>| psi(v.as_slice(), p, q).unwrap();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let e = |di: f64, dj: f64| {
                    let mut v = eta.clone();
                    v[i] += di;
                    v[j] += dj;
                    f(&v)
                };
                let val = (e(step, step) - e(step, -step) - e(-step, step) + e(-step, -step))
                    / (4.0 * step * step);
                out[(i, j)] = val;
                out[(j, i)] = val;
            }
        }
        out
    }

    fn random_eta(p: usize, q: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prm = MixedModelParams::random(p, q, 2, &mut rng);
        let f = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        natural_params(&prm).unwrap().eta(&f)
    }

    #[test]
    fn standard_normal_case() {
        let eta = DVector::from_vec(vec![0.0, 1.0]);
        let j = psi_hessian(eta.as_slice(), 1, 0).unwrap();
        // Var(X) = 1, Var(-X²/2) = 1/2, Cov = 0
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        assert!((&j - expect).norm() < 1e-12);
        assert!((j - fd_hessian(&eta, 1, 0, 1e-5)).norm() < 1e-6);
    }

    #[test]
    fn bernoulli_variance() {
        let j = psi_hessian(&[0.0], 0, 1).unwrap();
        assert!((j[(0, 0)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn matches_finite_differences() {
        for (p, q, seed) in [(2, 2, 1), (1, 3, 2), (3, 1, 3), (2, 0, 4), (0, 3, 5)] {
            let eta = random_eta(p, q, seed);
            let j = psi_hessian(eta.as_slice(), p, q).unwrap();
            let fd = fd_hessian(&eta, p, q, 1e-4);
            let rel = (&j - &fd).norm() / j.norm();
            assert!(rel <= 1e-4, "p={p} q={q}: {rel}");
            assert!(j.clone().symmetric_eigen().eigenvalues.min() > -1e-10);
        }
    }
}
