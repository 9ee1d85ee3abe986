//! Penalized factorization `min_C ‖b − C B‖²_F + λ Ω(C)` by monotone FISTA.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::penalty::{PenaltySpec, ProxWorkspace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Relative size of the proximal-gradient step that counts as stationary.
    pub tol: f64,
    /// Relative objective change allowed at exit.
    pub rel_change: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            tol: 1e-7,
            rel_change: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenalizedSolution {
    pub c: DMatrix<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective of the accepted iterate, starting at the initial point.
    pub history: Vec<f64>,
}

/// Iterations between stationarity probes while the objective still moves.
const PROBE_EVERY: usize = 20;

/// Quadratic data of the loss, shared across `λ`.
#[derive(Debug, Clone)]
pub struct PenalizedProblem {
    /// `b Bᵀ`, `m x d`.
    cross: DMatrix<f64>,
    /// `B Bᵀ`, `d x d`.
    gram: DMatrix<f64>,
    /// `‖b‖²`.
    offset: f64,
    lipschitz: f64,
}

impl PenalizedProblem {
    pub fn new(b: &DMatrix<f64>, bb: &DMatrix<f64>) -> Result<Self> {
        if b.ncols() != bb.ncols() {
            return Err(Error::Dimension(format!(
                "b has {} columns but B has {}",
                b.ncols(),
                bb.ncols()
            )));
        }
        let cross = b * bb.transpose();
        let gram = bb * bb.transpose();
        let lipschitz = if gram.nrows() == 0 {
            0.0
        } else {
            2.0 * gram.clone().symmetric_eigen().eigenvalues.max()
        };
        Ok(Self {
            cross,
            gram,
            offset: b.norm_squared(),
            lipschitz,
        })
    }

    pub fn rows(&self) -> usize {
        self.cross.nrows()
    }

    pub fn dim(&self) -> usize {
        self.cross.ncols()
    }

    /// `‖b − C B‖²`.
    pub fn loss(&self, c: &DMatrix<f64>) -> f64 {
        let quad = (c * &self.gram).component_mul(c).sum();
        (self.offset - 2.0 * c.component_mul(&self.cross).sum() + quad).max(0.0)
    }

    pub fn gradient(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        (c * &self.gram - &self.cross) * 2.0
    }

    /// Unpenalized minimizer `b Bᵀ (B Bᵀ)⁺`; equals `Û1` when `B = K1 R1ᵀ`.
    pub fn least_squares(&self) -> DMatrix<f64> {
        let (inv, _) = crate::matops::pinv_sym(&self.gram, crate::matops::PINV_TOL);
        &self.cross * inv
    }

    /// Smallest `λ` whose solution vanishes on every penalized row.
    pub fn lambda_max(&self, penalty: &PenaltySpec) -> Result<f64> {
        penalty.dual_norm(&(&self.cross * 2.0))
    }

    pub fn solve(
        &self,
        lambda: f64,
        penalty: &PenaltySpec,
        init: &DMatrix<f64>,
        opts: SolverOptions,
        ws: &mut ProxWorkspace,
    ) -> Result<PenalizedSolution> {
        let (m, d) = (self.rows(), self.dim());
        if penalty.rows() != m || init.shape() != (m, d) {
            return Err(Error::Dimension(format!(
                "penalty has {} rows and start is {:?}, expected {m} x {d}",
                penalty.rows(),
                init.shape()
            )));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Invalid(format!(
                "penalty level must be nonnegative, got {lambda}"
            )));
        }
        let objective = |c: &DMatrix<f64>| self.loss(c) + lambda * penalty.value(c);
        if d == 0 || m == 0 || self.lipschitz == 0.0 {
            let c = if self.lipschitz == 0.0 {
                DMatrix::zeros(m, d)
            } else {
                init.clone()
            };
            let f = objective(&c);
            return Ok(PenalizedSolution {
                c,
                objective: f,
                iterations: 0,
                converged: true,
                history: vec![f],
            });
        }
        let step = 1.0 / self.lipschitz;
        let thresh = lambda * step;
        let mut x = init.clone();
        let mut fx = objective(&x);
        let mut history = vec![fx];
        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut converged = false;
        let mut iterations = 0;
        for it in 1..=opts.max_iter {
            iterations = it;
            let z = penalty.prox(&(&y - self.gradient(&y) * step), thresh, ws);
            let fz = objective(&z);
            let x_prev = x.clone();
            let f_prev = fx;
            if fz <= fx {
                x = z.clone();
                fx = fz;
            }
            history.push(fx);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &x + (&z - &x) * (t / t_next) + (&x - &x_prev) * ((t - 1.0) / t_next);
            t = t_next;

            let settled = (f_prev - fx).abs() <= opts.rel_change * fx.abs().max(f64::MIN_POSITIVE);
            if !settled && it % PROBE_EVERY != 0 {
                continue;
            }
            let probe = penalty.prox(&(&x - self.gradient(&x) * step), thresh, ws);
            let fp = objective(&probe);
            let moved = (&probe - &x).norm();
            let still = moved <= opts.tol * x.norm().max(1.0);
            if fp < fx {
                // a plain proximal step from the best point is also a descent step
                x = probe;
                fx = fp;
                *history.last_mut().expect("history") = fx;
                y = x.clone();
                t = 1.0;
            }
            if still && settled {
                converged = true;
                break;
            }
        }
        // near λ_max the iterates creep toward zero; take zero rows when they are no worse
        let pen = penalty.penalized_rows();
        if pen.iter().any(|&on| on) {
            let mut snapped = x.clone();
            for (row, &on) in pen.iter().enumerate() {
                if on {
                    snapped.row_mut(row).fill(0.0);
                }
            }
            let fs = objective(&snapped);
            if snapped != x && fs <= fx {
                x = snapped;
                fx = fs;
                history.push(fx);
            }
        }
        if !converged {
            log::warn!("penalized solver stopped after {iterations} iterations at λ = {lambda}");
        }
        Ok(PenalizedSolution {
            c: x,
            objective: fx,
            iterations,
            converged,
            history,
        })
    }
}

/// `λ_max` for `b` and the factor `B`.
pub fn lambda_max(b: &DMatrix<f64>, bb: &DMatrix<f64>, penalty: &PenaltySpec) -> Result<f64> {
    PenalizedProblem::new(b, bb)?.lambda_max(penalty)
}

/// Solves from the unpenalized least-squares factor.
pub fn solve_penalized(
    b: &DMatrix<f64>,
    bb: &DMatrix<f64>,
    lambda: f64,
    penalty: &PenaltySpec,
) -> Result<PenalizedSolution> {
    let prob = PenalizedProblem::new(b, bb)?;
    let init = prob.least_squares();
    prob.solve(
        lambda,
        penalty,
        &init,
        SolverOptions::default(),
        &mut ProxWorkspace::default(),
    )
}

/// Orthonormal basis of `span(C)`. Zero rows of `C` stay exactly zero.
pub fn orthonormalize(c: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, d) = c.shape();
    if m == 0 || d == 0 {
        return DMatrix::zeros(m, 0);
    }
    let svd = c.clone().svd(false, true);
    let vt = svd.v_t.expect("svd v");
    let smax = svd.singular_values.max();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&k| svd.singular_values[k] > 1e-10 * smax && svd.singular_values[k] > 0.0)
        .collect();
    let mut out = DMatrix::zeros(m, keep.len());
    for (col, &k) in keep.iter().enumerate() {
        let v = vt.row(k).transpose();
        let u = c * v / svd.singular_values[k];
        out.set_column(col, &u);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estim::svd_truncate;
    use crate::matops::projection;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(
        m: usize,
        r: usize,
        d: usize,
        seed: u64,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(m, r, |_, _| rng.random_range(-1.0..1.0));
        let s = svd_truncate(&b, d).unwrap();
        let bb = s.k1() * s.r1().transpose();
        (b, bb, s.u1())
    }

    #[test]
    fn unpenalized_solution_is_leading_factor() {
        let (b, bb, u1) = instance(10, 4, 2, 1);
        let pen = PenaltySpec::mixed(4, 3, 0.5).unwrap();
        let sol = solve_penalized(&b, &bb, 0.0, &pen).unwrap();
        assert!(sol.converged);
        assert!((projection(&sol.c) - projection(&u1)).norm() < 1e-8);
    }

    #[test]
    fn zero_above_lambda_max() {
        let (b, bb, _) = instance(10, 4, 2, 2);
        let pen = PenaltySpec::mixed(4, 3, 0.3).unwrap();
        let lam = lambda_max(&b, &bb, &pen).unwrap();
        assert_eq!(
            solve_penalized(&b, &bb, 1.01 * lam, &pen).unwrap().c.norm(),
            0.0
        );
        assert!(solve_penalized(&b, &bb, 0.9 * lam, &pen).unwrap().c.norm() > 0.0);
        let zero = DMatrix::zeros(10, 4);
        assert_eq!(lambda_max(&zero, &bb, &pen).unwrap(), 0.0);
    }

    #[test]
    fn single_group_threshold_is_gradient_norm() {
        let (b, bb, _) = instance(1, 3, 1, 3);
        let pen = PenaltySpec::continuous_rows(1);
        let grad = (&b * bb.transpose()) * 2.0;
        assert!((lambda_max(&b, &bb, &pen).unwrap() - grad.norm()).abs() < 1e-14);
    }

    // d = 1 with disjoint rows separates into scalar problems
    // σ²(c − u)² + λ|c|, solved by soft-thresholding u at λ/(2σ²).
    #[test]
    fn rank_one_rows_soft_threshold() {
        let (b, bb, u1) = instance(6, 3, 1, 4);
        let sigma2 = bb.norm_squared();
        let pen = PenaltySpec::continuous_rows(6);
        let lam = 0.4 * lambda_max(&b, &bb, &pen).unwrap();
        let sol = solve_penalized(&b, &bb, lam, &pen).unwrap();
        for i in 0..6 {
            let u = u1[(i, 0)];
            let expect = u.signum() * (u.abs() - lam / (2.0 * sigma2)).max(0.0);
            assert!((sol.c[(i, 0)] - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn objective_is_monotone() {
        for seed in 0..10 {
            let (b, bb, _) = instance(3 + 3 + 3, 5, 2, 10 + seed);
            let pen = PenaltySpec::mixed(3, 3, 0.5).unwrap();
            let prob = PenalizedProblem::new(&b, &bb).unwrap();
            let lam = 0.3 * prob.lambda_max(&pen).unwrap();
            let init = DMatrix::from_element(9, 2, 0.3);
            let sol = prob
                .solve(
                    lam,
                    &pen,
                    &init,
                    SolverOptions::default(),
                    &mut ProxWorkspace::default(),
                )
                .unwrap();
            assert!(sol.converged);
            for w in sol.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
            }
            // the unpenalized loss agrees with the direct formula
            let direct = (&b - &sol.c * &bb).norm_squared();
            assert!((prob.loss(&sol.c) - direct).abs() < 1e-10 * direct.max(1.0));
        }
    }

    #[test]
    fn orthonormalize_keeps_zero_rows() {
        let mut c = DMatrix::from_fn(5, 2, |i, j| (i + 2 * j) as f64 + 0.5);
        c.row_mut(2).fill(0.0);
        let u = orthonormalize(&c);
        assert!((u.transpose() * &u - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
        assert_eq!(u.row(2).norm(), 0.0);
        assert!((projection(&u) - projection(&c)).norm() < 1e-12);
    }
}
