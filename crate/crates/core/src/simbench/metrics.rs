//! Subspace distances between true and estimated reductions.

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::estim::ReductionKind;
use crate::matops::{orthonormal_basis, spectral_norm};
use crate::model::stats::{stat_t_unchecked, stat_w_unchecked};

/// `‖P1 − P2‖₂` for orthonormal bases `q1`, `q2`.
fn projection_gap(q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> f64 {
    let a = q1 - q2 * (q2.transpose() * q1);
    let b = q2 - q1 * (q1.transpose() * q2);
    spectral_norm(&a).max(spectral_norm(&b))
}

/// `‖P_α − P_α̂‖₂`.
pub fn metric_subspace(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    projection_gap(
        &orthonormal_basis(est, 1e-12),
        &orthonormal_basis(truth, 1e-12),
    )
}

/// Centered statistics (`t` or, for the sub-optimal kind, `w`) of every row.
pub fn statistic_matrix(data: &Dataset, kind: ReductionKind) -> DMatrix<f64> {
    let rows: Vec<_> = (0..data.n())
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
    if !rows.is_empty() {
        let mean = s.row_mean();
        for mut row in s.row_iter_mut() {
            row -= &mean;
        }
    }
    s
}

/// `‖P_{S α} − P_{S α̂}‖₂` over the reduced coordinates `S α` of a fresh sample.
pub fn metric_prediction(est: &DMatrix<f64>, truth: &DMatrix<f64>, stats: &DMatrix<f64>) -> f64 {
    projection_gap(
        &orthonormal_basis(&(stats * est), 1e-12),
        &orthonormal_basis(&(stats * truth), 1e-12),
    )
}
