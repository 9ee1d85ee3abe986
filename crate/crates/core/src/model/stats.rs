//! Reduction statistics `t`, `s`, `w` built from one observation.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::matops::{k_of, m_of};

fn check_binary(h: &[f64]) -> Result<()> {
    for (column, &v) in h.iter().enumerate() {
        if v != 0.0 && v != 1.0 {
            return Err(Error::NonBinary {
                row: 0,
                column,
                value: v,
            });
        }
    }
    Ok(())
}

/// Appends `J vech(h h^T)`: products `h_i h_j`, `i > j`, in column-major order.
pub(crate) fn push_interactions(h: &[f64], out: &mut Vec<f64>) {
    let q = h.len();
    for j in 0..q {
        for i in (j + 1)..q {
            out.push(h[i] * h[j]);
        }
    }
}

/// `t(x, h) = (x, h, J vech(h h^T))`, length `p + q + k_q`.
pub fn stat_t(x: &[f64], h: &[f64]) -> Result<DVector<f64>> {
    check_binary(h)?;
    Ok(stat_t_unchecked(x, h))
}

pub(crate) fn stat_t_unchecked(x: &[f64], h: &[f64]) -> DVector<f64> {
    let mut out = Vec::with_capacity(x.len() + h.len() + k_of(h.len()));
    out.extend_from_slice(x);
    out.extend_from_slice(h);
    push_interactions(h, &mut out);
    DVector::from_vec(out)
}

/// `s(h) = (h, J vech(h h^T))`, length `q + k_q`.
pub fn stat_s(h: &[f64]) -> Result<DVector<f64>> {
    stat_t(&[], h)
}

/// `w(x, h) = (x, h, vech(h h^T))`, length `p + q + q(q+1)/2`.
pub fn stat_w(x: &[f64], h: &[f64]) -> Result<DVector<f64>> {
    check_binary(h)?;
    Ok(stat_w_unchecked(x, h))
}

pub(crate) fn stat_w_unchecked(x: &[f64], h: &[f64]) -> DVector<f64> {
    let q = h.len();
    let mut out = Vec::with_capacity(x.len() + q + m_of(q));
    out.extend_from_slice(x);
    out.extend_from_slice(h);
    for j in 0..q {
        for i in j..q {
            out.push(h[i] * h[j]);
        }
    }
    DVector::from_vec(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matops::{lower_pairs, vech_pairs};

    #[test]
    fn t_without_interactions() {
        let t = stat_t(&[3.0], &[1.0]).unwrap();
        assert_eq!(t.as_slice(), &[3.0, 1.0]);
    }

    #[test]
    fn single_interaction() {
        let s = stat_s(&[1.0, 1.0]).unwrap();
        assert_eq!(s.as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn w_has_every_product() {
        let x = [0.3, -1.2];
        let h = [1.0, 0.0, 1.0];
        let w = stat_w(&x, &h).unwrap();
        assert_eq!(w.len(), 2 + 3 + 6);
        for (k, (i, j)) in vech_pairs(3).into_iter().enumerate() {
            assert_eq!(w[5 + k], h[i] * h[j]);
        }
        let t = stat_t(&x, &h).unwrap();
        for (k, (i, j)) in lower_pairs(3).into_iter().enumerate() {
            assert_eq!(t[5 + k], h[i] * h[j]);
        }
    }

    #[test]
    fn rejects_non_binary() {
        assert!(matches!(
            stat_t(&[1.0], &[0.5]),
            Err(Error::NonBinary { .. })
        ));
    }
}
