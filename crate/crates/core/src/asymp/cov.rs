//! Information-based covariance of `√n ϑ̂` and of the derived `b̂`, `ĉ1`, `ĉ2`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::hessian::psi_hessian;
use crate::error::{Error, Result};
use crate::estim::{svd_truncate, MleFit};
use crate::matops::{k_of, kron, m_of, pinv_sym, vech_pairs, PINV_TOL};
use crate::model::params::{
    natural_params, EtaLayout, MixedModelParams, NaturalParams, ThetaLayout,
};

/// `V̂` and the information it inverts.
#[derive(Debug, Clone)]
pub struct VEstimate {
    pub v: DMatrix<f64>,
    pub information: DMatrix<f64>,
    /// Information was singular and `v` is a pseudo-inverse.
    pub rank_deficient: bool,
    pub rank: usize,
}

struct Block {
    eta_off: usize,
    len: usize,
    theta_off: usize,
    varying: bool,
}

fn blocks(p: usize, q: usize, r: usize) -> [Block; 5] {
    let e = EtaLayout { p, q };
    let t = ThetaLayout { p, q, r };
    [
        Block {
            eta_off: 0,
            len: p,
            theta_off: t.block1(),
            varying: true,
        },
        Block {
            eta_off: e.e2(),
            len: q,
            theta_off: t.block2(),
            varying: true,
        },
        Block {
            eta_off: e.e3(),
            len: m_of(p),
            theta_off: t.block3(),
            varying: false,
        },
        Block {
            eta_off: e.e4(),
            len: p * q,
            theta_off: t.block4(),
            varying: false,
        },
        Block {
            eta_off: e.e5(),
            len: k_of(q),
            theta_off: t.block5(),
            varying: true,
        },
    ]
}

/// Parameters implied by a fit: `μ_X = x̄`, `μ_H = h̄`.
pub fn fitted_params(fit: &MleFit) -> MixedModelParams {
    let (q, r) = (fit.q, fit.r);
    let (delta, mu_x, mu_h, a, beta) = match &fit.cont {
        Some(c) => (
            c.delta_hat.clone(),
            c.x_mean.clone(),
            c.h_mean.clone(),
            c.a_hat.clone(),
            c.beta_hat.clone(),
        ),
        None => (
            DMatrix::zeros(0, 0),
            DVector::zeros(0),
            DVector::zeros(q),
            DMatrix::zeros(0, r),
            DMatrix::zeros(0, q),
        ),
    };
    let (tau0, tau) = match &fit.ising {
        Some(i) => (i.tau0.clone(), i.tau.clone()),
        None => (DVector::zeros(0), DMatrix::zeros(0, r)),
    };
    MixedModelParams {
        delta,
        mu_x,
        mu_h,
        a,
        beta,
        tau0,
        tau,
    }
}

/// Empirical information `(1/n) Σ_i F_iᵀ J(η_i) F_i`, evaluated once per distinct
/// basis value.
pub fn information(nat: &NaturalParams, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (p, q, r) = (nat.p, nat.q, nat.r);
    if f.ncols() != r {
        return Err(Error::Dimension(format!(
            "basis has {} columns, parameters expect {r}",
            f.ncols()
        )));
    }
    let n = f.nrows();
    let mut groups: HashMap<Vec<u64>, (usize, usize)> = HashMap::new();
    let mut order = Vec::new();
    for i in 0..n {
        let key: Vec<u64> = f.row(i).iter().map(|v| v.to_bits()).collect();
        let entry = groups.entry(key).or_insert_with(|| {
            order.push(i);
            (i, 0)
        });
        entry.1 += 1;
    }
    let dim = ThetaLayout { p, q, r }.len();
    let mut info = DMatrix::zeros(dim, dim);
    let bl = blocks(p, q, r);
    for &first in &order {
        let key: Vec<u64> = f.row(first).iter().map(|v| v.to_bits()).collect();
        let count = groups[&key].1;
        let weight = count as f64 / n as f64;
        let fv = f.row(first).transpose();
        let mut g = vec![1.0];
        g.extend(fv.iter());
        let eta = nat.eta(&fv);
        let jm = psi_hessian(eta.as_slice(), p, q)?;
        for bk in &bl {
            let wk = if bk.varying { 1 + r } else { 1 };
            for bl_ in &bl {
                let wl = if bl_.varying { 1 + r } else { 1 };
                for a in 0..wk {
                    for b in 0..wl {
                        let coef = weight * g[a] * g[b];
                        if coef == 0.0 {
                            continue;
                        }
                        for j in 0..bl_.len {
                            let col = bl_.theta_off + b * bl_.len + j;
                            for i in 0..bk.len {
                                info[(bk.theta_off + a * bk.len + i, col)] +=
                                    coef * jm[(bk.eta_off + i, bl_.eta_off + j)];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(info)
}

/// `V̂ = (information)⁻¹`, or its Moore-Penrose inverse when singular.
pub fn estimate_v(fit: &MleFit, f: &DMatrix<f64>) -> Result<VEstimate> {
    let nat = natural_params(&fitted_params(fit))?;
    let info = information(&nat, f)?;
    invert_information(info)
}

pub fn invert_information(info: DMatrix<f64>) -> Result<VEstimate> {
    let dim = info.nrows();
    if let Some(ch) = info.clone().cholesky() {
        let v = ch.inverse();
        return Ok(VEstimate {
            v,
            information: info,
            rank_deficient: false,
            rank: dim,
        });
    }
    let (v, rank) = pinv_sym(&info, PINV_TOL);
    log::warn!("information matrix is rank deficient ({rank} of {dim}); using the pseudo-inverse");
    Ok(VEstimate {
        v,
        information: info,
        rank_deficient: true,
        rank,
    })
}

/// Position in `ϑ` of every entry of `vec(b)`, `b = (ϑ11; ϑ21; ϑ51)` stacked as matrices.
pub fn b_indices(p: usize, q: usize, r: usize) -> Vec<usize> {
    let lay = ThetaLayout { p, q, r };
    let k = k_of(q);
    let m = p + q + k;
    let mut idx = vec![0; m * r];
    for c in 0..r {
        for a in 0..p {
            idx[a + c * m] = lay.slope1() + a + p * c;
        }
        for a in 0..q {
            idx[p + a + c * m] = lay.slope2() + a + q * c;
        }
        for a in 0..k {
            idx[p + q + a + c * m] = lay.slope5() + a + k * c;
        }
    }
    idx
}

/// Selector `M`: `Mϑ = (vec ϑ11, vec ϑ21, vec ϑ51)`.
pub fn selector_m(p: usize, q: usize, r: usize) -> DMatrix<f64> {
    let lay = ThetaLayout { p, q, r };
    let k = k_of(q);
    let rows = (p + q + k) * r;
    let mut m = DMatrix::zeros(rows, lay.len());
    let mut row = 0;
    for (start, len) in [
        (lay.slope1(), p * r),
        (lay.slope2(), q * r),
        (lay.slope5(), k * r),
    ] {
        for i in 0..len {
            m[(row, start + i)] = 1.0;
            row += 1;
        }
    }
    m
}

/// Rearrangement `W`: `vec(b) = W (vec ϑ11, vec ϑ21, vec ϑ51)`.
pub fn arrange_w(p: usize, q: usize, r: usize) -> DMatrix<f64> {
    let k = k_of(q);
    let m = p + q + k;
    let mut w = DMatrix::zeros(m * r, m * r);
    let mut col = 0;
    for (offset, len) in [(0, p), (p, q), (p + q, k)] {
        for c in 0..r {
            for a in 0..len {
                w[(offset + a + c * m, col)] = 1.0;
                col += 1;
            }
        }
    }
    w
}

/// `V̂_rcl = W M V̂ Mᵀ Wᵀ`, the covariance of `√n vec(b̂)`.
pub fn vrcl(v: &DMatrix<f64>, p: usize, q: usize, r: usize) -> Result<DMatrix<f64>> {
    let len = ThetaLayout { p, q, r }.len();
    if v.shape() != (len, len) {
        return Err(Error::Dimension(format!(
            "V̂ is {:?}, expected {len} x {len}",
            v.shape()
        )));
    }
    let idx = b_indices(p, q, r);
    Ok(DMatrix::from_fn(idx.len(), idx.len(), |i, j| {
        v[(idx[i], idx[j])]
    }))
}

/// Jacobians of `vec(ĉ1)` and `vec(ĉ2)` with respect to `ϑ`.
///
/// With `Λ = unvech(ϑ3)`, `N = unvec(ϑ4)` and `Θ = unvec(ϑ11)`:
/// `ĉ1 = (Θ; G)` where `G = −NᵀΛ⁻¹Θ`, and `ĉ2` has rows `ϑ21 − G` at diagonal
/// `vech` positions and `ϑ51` elsewhere.
pub fn c_jacobians(nat: &NaturalParams) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (p, q, r) = (nat.p, nat.q, nat.r);
    let lay = nat.layout();
    let len = lay.len();
    let lam = crate::matops::unvech(nat.theta3.as_slice(), p);
    let delta = crate::matops::spd_inverse(&lam)
        .ok_or_else(|| Error::Singular("precision block is singular".into()))?;
    let dn = &delta * &nat.theta4; // p x q
    let dt = &delta * &nat.theta11; // p x r

    // dG[a, c] / dϑ, one row per (a, c) in column-major order
    let mut jg = DMatrix::zeros(q * r, len);
    for c in 0..r {
        for a in 0..q {
            let row = a + q * c;
            for u in 0..p {
                jg[(row, lay.block4() + u + p * a)] -= dt[(u, c)];
                jg[(row, lay.slope1() + u + p * c)] -= dn[(u, a)];
            }
            for (v, &(u, w)) in vech_pairs(p).iter().enumerate() {
                let val = if u == w {
                    dn[(u, a)] * dt[(u, c)]
                } else {
                    dn[(u, a)] * dt[(w, c)] + dn[(w, a)] * dt[(u, c)]
                };
                jg[(row, lay.block3() + v)] += val;
            }
        }
    }

    let m1 = p + q;
    let mut j1 = DMatrix::zeros(m1 * r, len);
    for c in 0..r {
        for a in 0..p {
            j1[(a + m1 * c, lay.slope1() + a + p * c)] = 1.0;
        }
        for a in 0..q {
            j1.row_mut(p + a + m1 * c).copy_from(&jg.row(a + q * c));
        }
    }

    let m2 = m_of(q);
    let k = k_of(q);
    let mut j2 = DMatrix::zeros(m2 * r, len);
    for c in 0..r {
        for (v, &(i, j)) in vech_pairs(q).iter().enumerate() {
            let row = v + m2 * c;
            if i == j {
                j2[(row, lay.slope2() + i + q * c)] = 1.0;
                let neg = -jg.row(i + q * c);
                let mut dst = j2.row_mut(row);
                dst += neg;
            } else {
                let kk = crate::matops::pair_index(q, i, j);
                j2[(row, lay.slope5() + kk + k * c)] = 1.0;
            }
        }
    }
    Ok((j1, j2))
}

/// Covariances of `√n vec(ĉ1)` and `√n vec(ĉ2)` by the delta method.
pub fn c_covariances(
    nat: &NaturalParams,
    v: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (j1, j2) = c_jacobians(nat)?;
    Ok((&j1 * v * j1.transpose(), &j2 * v * j2.transpose()))
}

/// Plug-in covariance of `√n vec(P_α̂ − P_α)` for the rank-`d` basis of `b̂`:
/// `(I + K)(b⁻ᵀ ⊗ Q) V̂_rcl (b⁻ ⊗ Q)(I + K)` with `b⁻ = R1 K1⁻¹ U1ᵀ`, `Q = I − P`.
pub fn projection_covariance(
    b: &DMatrix<f64>,
    v_rcl: &DMatrix<f64>,
    d: usize,
) -> Result<DMatrix<f64>> {
    let (m, r) = b.shape();
    if v_rcl.shape() != (m * r, m * r) {
        return Err(Error::Dimension("V̂_rcl does not match b̂".into()));
    }
    let svd = svd_truncate(b, d)?;
    let smax = svd.singular.first().copied().unwrap_or(0.0);
    if d > 0 && svd.singular[d - 1] <= 1e-12 * smax.max(f64::MIN_POSITIVE) {
        return Err(Error::Singular(format!("b̂ has rank below {d}")));
    }
    let u1 = svd.u1();
    let kinv = DMatrix::from_diagonal(&DVector::from_iterator(
        d,
        svd.singular[..d].iter().map(|s| 1.0 / s),
    ));
    let b_minus = svd.r1() * kinv * u1.transpose(); // r x m
    let q_perp = DMatrix::identity(m, m) - &u1 * u1.transpose();
    let a = kron(&b_minus.transpose(), &q_perp); // m² x mr
    let core = &a * v_rcl * a.transpose();
    let perm = |i: usize| (i % m) * m + i / m;
    let mm = m * m;
    let out = DMatrix::from_fn(mm, mm, |i, j| {
        core[(i, j)] + core[(perm(i), j)] + core[(i, perm(j))] + core[(perm(i), perm(j))]
    });
    Ok((&out + out.transpose()) * 0.5)
}
