//! vec/vech operator matrices and small dense linear-algebra helpers.
//!
//! Half-vectorization uses the column-major lower triangle including the
//! diagonal: `(g11, g21, ..., gq1, g22, ..., gqq)`. Every selector below
//! (`C`, `L`, `J`) is defined relative to that ordering.

use nalgebra::{DMatrix, DVector};

/// Default relative threshold for the Moore-Penrose inverse.
pub const PINV_TOL: f64 = 1e-10;

/// Number of strictly-lower entries of a `q x q` matrix.
pub fn k_of(q: usize) -> usize {
    q * q.saturating_sub(1) / 2
}

/// Length of `vech` for a `q x q` matrix.
pub fn m_of(q: usize) -> usize {
    q * (q + 1) / 2
}

/// Position of entry `(i, j)` (any order) inside `vech` of a `q x q` matrix.
pub fn vech_index(q: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    // column j of the lower triangle starts after sum_{c<j} (q - c) entries
    j * q - j * j.saturating_sub(1) / 2 + (i - j)
}

/// Position of the strictly-lower pair `(i, j)`, `i != j`, inside `J vech(G)`.
pub fn pair_index(q: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i > j { (i, j) } else { (j, i) };
    debug_assert!(i > j);
    j * (q - 1) - j * j.saturating_sub(1) / 2 + (i - j - 1)
}

/// Strictly-lower pairs `(i, j)`, `i > j`, in `J vech` order.
pub fn lower_pairs(q: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(k_of(q));
    for j in 0..q {
        for i in (j + 1)..q {
            out.push((i, j));
        }
    }
    out
}

/// All `(i, j)`, `i >= j`, in `vech` order.
pub fn vech_pairs(q: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(m_of(q));
    for j in 0..q {
        for i in j..q {
            out.push((i, j));
        }
    }
    out
}

pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), rows * cols, "unvec length mismatch");
    DMatrix::from_column_slice(rows, cols, v)
}

pub fn vech(g: &DMatrix<f64>) -> DVector<f64> {
    let q = g.nrows();
    DVector::from_iterator(m_of(q), vech_pairs(q).into_iter().map(|(i, j)| g[(i, j)]))
}

/// Symmetric matrix whose `vech` is `v`.
pub fn unvech(v: &[f64], q: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), m_of(q), "unvech length mismatch");
    let mut g = DMatrix::zeros(q, q);
    for (idx, (i, j)) in vech_pairs(q).into_iter().enumerate() {
        g[(i, j)] = v[idx];
        g[(j, i)] = v[idx];
    }
    g
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * s));
        }
    }
    out
}

/// Duplication matrix `D_q`: `D vech(G) = vec(G)` for symmetric `G`.
pub fn duplication_matrix(q: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(q * q, m_of(q));
    for j in 0..q {
        for i in 0..q {
            d[(i + j * q, vech_index(q, i, j))] = 1.0;
        }
    }
    d
}

/// `(C, L, J)`: `C vec(G) = vech(G)` for symmetric `G` (off-diagonal rows
/// average the symmetric pair), `L` picks the diagonal and `J` the strict
/// lower triangle out of `vech`.
pub fn selector_matrices(q: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let m = m_of(q);
    let mut c = DMatrix::zeros(m, q * q);
    for (idx, (i, j)) in vech_pairs(q).into_iter().enumerate() {
        if i == j {
            c[(idx, i + j * q)] = 1.0;
        } else {
            c[(idx, i + j * q)] = 0.5;
            c[(idx, j + i * q)] = 0.5;
        }
    }
    let mut l = DMatrix::zeros(q, m);
    for i in 0..q {
        l[(i, vech_index(q, i, i))] = 1.0;
    }
    let mut jm = DMatrix::zeros(k_of(q), m);
    for (row, (i, j)) in lower_pairs(q).into_iter().enumerate() {
        jm[(row, vech_index(q, i, j))] = 1.0;
    }
    (c, l, jm)
}

/// Commutation matrix `K_pm`: `K vec(A) = vec(A^T)` for every `p x m` `A`.
pub fn commutation_matrix(p: usize, m: usize) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(p * m, p * m);
    for i in 0..p {
        for j in 0..m {
            k[(j + i * m, i + j * p)] = 1.0;
        }
    }
    k
}

/// Bundle of the operator matrices for a given `(p, q)` pair.
#[derive(Debug, Clone)]
pub struct OperatorMatrices {
    pub p: usize,
    pub q: usize,
    pub d: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub k: DMatrix<f64>,
}

impl OperatorMatrices {
    /// Operators for `q x q` symmetric matrices and the `p x q` commutation.
    pub fn new(p: usize, q: usize) -> Self {
        let (c, l, j) = selector_matrices(q);
        Self {
            p,
            q,
            d: duplication_matrix(q),
            c,
            l,
            j,
            k: commutation_matrix(p, q),
        }
    }
}

/// Moore-Penrose inverse; singular values below `tol * sigma_max` are zeroed.
pub fn pinv(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let smax = svd.singular_values.max();
    let cut = tol * smax;
    let mut out = DMatrix::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut && s > 0.0 {
            out += (vt.row(k).transpose() * u.column(k).transpose()) / s;
        }
    }
    out
}

/// Moore-Penrose inverse of a symmetric matrix through its eigendecomposition.
/// Also returns the numerical rank.
pub fn pinv_sym(m: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, usize) {
    let n = m.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), 0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let cut = tol * lmax;
    let mut scaled = eig.eigenvectors.clone();
    let mut rank = 0;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() > cut && lam != 0.0 {
            rank += 1;
            scaled.column_mut(k).scale_mut(1.0 / lam);
        } else {
            scaled.column_mut(k).fill(0.0);
        }
    }
    (scaled * eig.eigenvectors.transpose(), rank)
}

/// Numerical rank of a symmetric matrix.
pub fn rank_sym(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let eig = ((m + m.transpose()) * 0.5).symmetric_eigenvalues();
    let lmax = eig.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    eig.iter()
        .filter(|&&v| v.abs() > tol * lmax && v != 0.0)
        .count()
}

/// Orthogonal projection onto the column space of `b`, `B (B^T B)^- B^T`.
pub fn projection(b: &DMatrix<f64>) -> DMatrix<f64> {
    let btb = b.transpose() * b;
    let (inv, _) = pinv_sym(&btb, PINV_TOL);
    b * inv * b.transpose()
}

/// Orthonormal basis of the column space of `b` (numerical rank by `tol`).
pub fn orthonormal_basis(b: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (r, c) = b.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(r, 0);
    }
    let svd = b.clone().svd(true, false);
    let u = svd.u.expect("svd u");
    let smax = svd.singular_values.max();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&k| svd.singular_values[k] > tol * smax && svd.singular_values[k] > 0.0)
        .collect();
    DMatrix::from_fn(r, keep.len(), |i, k| u[(i, keep[k])])
}

/// Completes the orthonormal columns of `u` (`m x k`) to an `m x m`
/// orthogonal matrix; the first `k` columns are `u` itself.
pub fn complete_basis(u: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, k) = u.shape();
    if k >= m {
        return u.columns(0, m).into_owned();
    }
    if k == 0 {
        return DMatrix::identity(m, m);
    }
    let qr = u.clone().qr();
    let mut full = DMatrix::identity(m, m);
    qr.q_tr_mul(&mut full);
    let full = full.transpose();
    let mut out = DMatrix::zeros(m, m);
    out.columns_mut(0, k).copy_from(u);
    out.columns_mut(k, m - k).copy_from(&full.columns(k, m - k));
    out
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    m.clone().cholesky().map(|c| c.inverse())
}

/// Log-determinant of an SPD matrix, `None` if Cholesky fails.
pub fn spd_logdet(m: &DMatrix<f64>) -> Option<f64> {
    if m.nrows() == 0 {
        return Some(0.0);
    }
    let ch = m.clone().cholesky()?;
    let l = ch.l_dirty();
    Some(2.0 * (0..m.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

/// Block-diagonal stacking of two matrices.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

/// Vertical stacking of matrices with equal column counts.
pub fn vstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = parts.first().map_or(0, |m| m.ncols());
    let rows: usize = parts.iter().map(|m| m.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for m in parts {
        assert_eq!(m.ncols(), cols, "vstack column mismatch");
        out.view_mut((at, 0), m.shape()).copy_from(*m);
        at += m.nrows();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(q: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(q, q, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        &a + a.transpose()
    }

    #[test]
    fn vech_index_matches_enumeration() {
        for q in 1..8 {
            for (idx, (i, j)) in vech_pairs(q).into_iter().enumerate() {
                assert_eq!(vech_index(q, i, j), idx);
                assert_eq!(vech_index(q, j, i), idx);
            }
            for (idx, (i, j)) in lower_pairs(q).into_iter().enumerate() {
                assert_eq!(pair_index(q, i, j), idx);
            }
        }
    }

    #[test]
    fn duplication_small_cases() {
        assert_eq!(duplication_matrix(1), DMatrix::from_element(1, 1, 1.0));
        let d2 = duplication_matrix(2);
        let expect =
            DMatrix::from_row_slice(4, 3, &[1., 0., 0., 0., 1., 0., 0., 1., 0., 0., 0., 1.]);
        assert_eq!(d2, expect);
    }

    #[test]
    fn duplication_roundtrip_q5() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_sym(5, &mut rng);
        let d = duplication_matrix(5);
        assert_eq!((&d * vech(&g) - vec(&g)).norm(), 0.0);
    }

    #[test]
    fn selectors_small_cases() {
        let (_, l1, j1) = selector_matrices(1);
        assert_eq!(l1, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(j1.shape(), (0, 1));
        let (_, _, j2) = selector_matrices(2);
        assert_eq!(j2, DMatrix::from_row_slice(1, 3, &[0., 1., 0.]));
    }

    #[test]
    fn selectors_pick_diagonal_and_lower() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = 4;
        let g = random_sym(q, &mut rng);
        let (c, l, j) = selector_matrices(q);
        let v = vech(&g);
        let diag = &l * &v;
        for i in 0..q {
            assert_eq!(diag[i], g[(i, i)]);
        }
        let low = &j * &v;
        for (row, (a, b)) in lower_pairs(q).into_iter().enumerate() {
            assert_eq!(low[row], g[(a, b)]);
        }
        assert!((&c * vec(&g) - v).norm() < 1e-14);
    }

    #[test]
    fn selector_masks_of_c() {
        for q in 1..6 {
            let (c, l, j) = selector_matrices(q);
            let lc = l.transpose() * &l * &c;
            let jc = j.transpose() * &j * &c;
            let c_no_half = c.map(|v| if v == 0.5 { 0.0 } else { v });
            let c_no_one = c.map(|v| if v == 1.0 { 0.0 } else { v });
            assert_eq!(lc, c_no_half);
            assert_eq!(jc, c_no_one);
        }
    }

    #[test]
    fn commutation_properties() {
        assert_eq!(commutation_matrix(1, 1), DMatrix::from_element(1, 1, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(2, 3, |_, _| rng.random::<f64>());
        let k = commutation_matrix(2, 3);
        assert_eq!(&k * vec(&a), vec(&a.transpose()));
        let kk = &k * commutation_matrix(3, 2);
        assert_eq!(kk, DMatrix::identity(6, 6));
    }

    #[test]
    fn pinv_cases() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert!((pinv(&i3, PINV_TOL) - &i3).norm() < 1e-14);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.0]));
        assert!((pinv(&d, PINV_TOL) - expect).norm() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = DMatrix::from_fn(5, 3, |_, _| rng.random::<f64>() - 0.5);
        let pi = pinv(&m, PINV_TOL);
        assert!((&pi * &m - DMatrix::<f64>::identity(3, 3)).norm() < 1e-10);
        // normal-equations oracle
        let ne = (m.transpose() * &m).try_inverse().unwrap() * m.transpose();
        assert!((pi - ne).norm() < 1e-10);
    }

    #[test]
    fn projection_cases() {
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 0.0]));
        assert!((projection(&e1) - expect).norm() < 1e-14);
        assert_eq!(projection(&DMatrix::zeros(3, 2)), DMatrix::zeros(3, 3));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = DMatrix::from_fn(6, 2, |_, _| rng.random::<f64>() - 0.5);
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -0.5, 3.0]);
        let p = projection(&b);
        assert!((&p - projection(&(&b * r))).norm() < 1e-12);
        assert!((&p * &p - &p).norm() < 1e-10);
        assert!((&p - p.transpose()).norm() < 1e-10);
    }

    #[test]
    fn complete_basis_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = DMatrix::from_fn(7, 3, |_, _| rng.random::<f64>() - 0.5);
        let u = orthonormal_basis(&b, 1e-12);
        let full = complete_basis(&u);
        assert!((full.transpose() * &full - DMatrix::<f64>::identity(7, 7)).norm() < 1e-12);
        assert!((full.columns(0, 3) - &u).norm() < 1e-14);
    }

    #[test]
    fn kron_matches_definition() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let k = kron(&a, &b);
        assert_eq!(
            k,
            DMatrix::from_row_slice(2, 4, &[1., -1., 2., -2., 3., -3., 4., -4.])
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn dup_times_c_is_identity_on_symmetric(q in 1usize..=6, seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let g = random_sym(q, &mut rng);
                let (c, _, _) = selector_matrices(q);
                let d = duplication_matrix(q);
                prop_assert!((&d * (&c * vec(&g)) - vec(&g)).amax() <= 1e-14);
            }

            #[test]
            fn projection_basis_invariance(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let b = DMatrix::from_fn(5, 2, |_, _| rng.random::<f64>() - 0.5);
                let mut r = DMatrix::from_fn(2, 2, |_, _| rng.random::<f64>() - 0.5);
                r[(0, 0)] += 2.0;
                r[(1, 1)] += 2.0;
                prop_assert!((projection(&b) - projection(&(&b * r))).amax() <= 1e-10);
            }
        }
    }
}
