//! Downstream models fitted on reduced predictors: multinomial logistic
//! regression for a categorical response, least squares for a continuous one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Response;
use crate::error::{Error, Result};

/// Ridge on the standardized slopes of the mean negative log-likelihood;
/// keeps separated fits finite.
pub const LOGISTIC_RIDGE: f64 = 1e-4;
/// Intercepts get only a token ridge so the fit does not depend on where the predictors sit.
const INTERCEPT_RIDGE: f64 = 1e-10;
const LOGISTIC_MAX_ITER: usize = 100;
const LOGISTIC_TOL: f64 = 1e-8;

/// Class `0` is the reference; row `k − 1` of `coef` holds `(intercept, slopes)` of class `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub classes: usize,
    pub coef: DMatrix<f64>,
}

fn logits(coef: &DMatrix<f64>, row: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(coef.nrows() + 1);
    out.push(0.0);
    for k in 0..coef.nrows() {
        let mut s = coef[(k, 0)];
        for (j, v) in row.iter().enumerate() {
            s += coef[(k, j + 1)] * v;
        }
        out.push(s);
    }
    out
}

fn softmax(z: &mut [f64]) {
    let top = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - top).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

impl LogisticModel {
    pub fn probabilities(&self, row: &[f64]) -> Vec<f64> {
        let mut z = logits(&self.coef, row);
        softmax(&mut z);
        z
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        let z = logits(&self.coef, row);
        let mut best = 0;
        for k in 1..z.len() {
            if z[k] > z[best] {
                best = k;
            }
        }
        best
    }
}

fn rows_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .map(|i| x.row(i).iter().cloned().collect())
        .collect()
}

/// Penalized objective, gradient and Hessian in the packed coefficient vector.
fn logistic_terms(
    rows: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    coef: &DMatrix<f64>,
    with_hessian: bool,
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = rows.len() as f64;
    let w = coef.ncols();
    let dim = (classes - 1) * w;
    let mut value = 0.0;
    let mut grad = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(
        if with_hessian { dim } else { 0 },
        if with_hessian { dim } else { 0 },
    );
    let mut feat = vec![0.0; w];
    for (row, &y) in rows.iter().zip(labels) {
        let mut prob = logits(coef, row);
        let top = prob.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = top + prob.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
        value -= prob[y] - lse;
        softmax(&mut prob);
        feat[0] = 1.0;
        feat[1..].copy_from_slice(row);
        for k in 1..classes {
            let resid = prob[k] - if y == k { 1.0 } else { 0.0 };
            for a in 0..w {
                grad[(k - 1) * w + a] += resid * feat[a];
            }
            if with_hessian {
                for l in 1..classes {
                    let c = prob[k] * (if k == l { 1.0 } else { 0.0 } - prob[l]);
                    if c == 0.0 {
                        continue;
                    }
                    for a in 0..w {
                        let ca = c * feat[a];
                        for b in 0..w {
                            hess[((k - 1) * w + a, (l - 1) * w + b)] += ca * feat[b];
                        }
                    }
                }
            }
        }
    }
    value /= n;
    grad /= n;
    if with_hessian {
        hess /= n;
    }
    let flat = pack(coef);
    for i in 0..dim {
        let ridge = if i % w == 0 {
            INTERCEPT_RIDGE
        } else {
            LOGISTIC_RIDGE
        };
        value += 0.5 * ridge * flat[i] * flat[i];
        grad[i] += ridge * flat[i];
        if with_hessian {
            hess[(i, i)] += ridge;
        }
    }
    (value, grad, hess)
}

fn pack(coef: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(coef.len(), coef.transpose().iter().cloned())
}

fn unpack(v: &DVector<f64>, classes: usize, w: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(classes - 1, w, v.as_slice())
}

/// Column means and scales used to standardize the predictors; constant columns keep scale 1.
fn standardizer(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows().max(1) as f64;
    (0..x.ncols())
        .map(|j| {
            let col = x.column(j);
            let mean = col.sum() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            (mean, if sd > 0.0 { sd } else { 1.0 })
        })
        .unzip()
}

/// Coefficients on the standardized scale from the original one, or back when `inverse`.
fn rescale(coef: &DMatrix<f64>, mean: &[f64], sd: &[f64], inverse: bool) -> DMatrix<f64> {
    let mut out = coef.clone();
    for k in 0..coef.nrows() {
        let mut shift = 0.0;
        for j in 0..mean.len() {
            let slope = if inverse {
                coef[(k, j + 1)] / sd[j]
            } else {
                coef[(k, j + 1)] * sd[j]
            };
            out[(k, j + 1)] = slope;
            shift += if inverse { slope } else { coef[(k, j + 1)] } * mean[j];
        }
        out[(k, 0)] = if inverse {
            coef[(k, 0)] - shift
        } else {
            coef[(k, 0)] + shift
        };
    }
    out
}

/// Ridge-penalized multinomial logistic fit by damped Newton steps on
/// standardized predictors; coefficients are returned on the original scale.
pub fn fit_logistic(
    x: &DMatrix<f64>,
    labels: &[usize],
    classes: usize,
    init: Option<&LogisticModel>,
) -> Result<LogisticModel> {
    if labels.len() != x.nrows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} rows",
            labels.len(),
            x.nrows()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Invalid(format!(
            "label {bad} outside {classes} classes"
        )));
    }
    let mut seen = vec![false; classes];
    labels.iter().for_each(|&y| seen[y] = true);
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::DegenerateResponse(
            "the training response has a single class".into(),
        ));
    }
    let w = x.ncols() + 1;
    let (mean, sd) = standardizer(x);
    let rows: Vec<Vec<f64>> = rows_of(x)
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(j, v)| (v - mean[j]) / sd[j])
                .collect()
        })
        .collect();
    let mut coef = match init {
        Some(m) if m.classes == classes && m.coef.ncols() == w => {
            rescale(&m.coef, &mean, &sd, false)
        }
        _ => DMatrix::zeros(classes - 1, w),
    };
    for _ in 0..LOGISTIC_MAX_ITER {
        let (value, grad, hess) = logistic_terms(&rows, labels, classes, &coef, true);
        if grad.amax() <= LOGISTIC_TOL {
            break;
        }
        let dir = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let flat = pack(&coef);
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand = unpack(&(&flat - &dir * step), classes, w);
            let (v, _, _) = logistic_terms(&rows, labels, classes, &cand, false);
            if v <= value {
                coef = cand;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok(LogisticModel {
        classes,
        coef: rescale(&coef, &mean, &sd, true),
    })
}

/// `y ≈ (1, x)ᵀ coef`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coef: DVector<f64>,
}

impl LinearModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.coef[0]
            + row
                .iter()
                .zip(self.coef.iter().skip(1))
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }
}

pub fn fit_linear(x: &DMatrix<f64>, y: &[f64]) -> Result<LinearModel> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "{} responses for {n} rows",
            y.len()
        )));
    }
    if n == 0 {
        return Err(Error::DegenerateResponse("no training observations".into()));
    }
    let design = DMatrix::from_fn(
        n,
        x.ncols() + 1,
        |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] },
    );
    let (inv, _) =
        crate::matops::pinv_sym(&(design.transpose() * &design), crate::matops::PINV_TOL);
    let coef = inv * design.transpose() * DVector::from_column_slice(y);
    Ok(LinearModel { coef })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Downstream {
    Logistic(LogisticModel),
    Linear(LinearModel),
}

impl Downstream {
    pub fn fit(x: &DMatrix<f64>, y: &Response) -> Result<Self> {
        Self::fit_from(x, y, None)
    }

    /// Warm-started from `prev` when shapes agree.
    pub fn fit_from(x: &DMatrix<f64>, y: &Response, prev: Option<&Downstream>) -> Result<Self> {
        match y {
            Response::Categorical { codes, levels } => {
                let init = match prev {
                    Some(Downstream::Logistic(m)) => Some(m),
                    _ => None,
                };
                Ok(Self::Logistic(fit_logistic(x, codes, levels.len(), init)?))
            }
            Response::Continuous(v) => Ok(Self::Linear(fit_linear(x, v)?)),
        }
    }

    /// Misclassification rate or mean squared error.
    pub fn error(&self, x: &DMatrix<f64>, y: &Response) -> Result<f64> {
        let n = x.nrows();
        if y.len() != n {
            return Err(Error::Dimension(format!(
                "{} responses for {n} rows",
                y.len()
            )));
        }
        if n == 0 {
            return Ok(0.0);
        }
        let rows = rows_of(x);
        let total: f64 = match (self, y) {
            (Downstream::Logistic(m), Response::Categorical { codes, .. }) => {
                rows.iter()
                    .zip(codes)
                    .filter(|(r, &c)| m.predict(r) != c)
                    .count() as f64
            }
            (Downstream::Linear(m), Response::Continuous(v)) => rows
                .iter()
                .zip(v)
                .map(|(r, &t)| (m.predict(r) - t).powi(2))
                .sum(),
            _ => {
                return Err(Error::Invalid(
                    "response type does not match the downstream model".into(),
                ))
            }
        };
        Ok(total / n as f64)
    }
}

/// Area under the empirical ROC curve (trapezoidal, ties count one half).
pub fn auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            positive.len()
        )));
    }
    let n1 = positive.iter().filter(|&&p| p).count();
    let n0 = positive.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::DegenerateResponse("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if positive[k] {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok(u / (n1 as f64 * n0 as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn auc_by_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scores: Vec<f64> = (0..60)
            .map(|_| (rng.random_range(0.0..5.0f64)).floor())
            .collect();
        let labels: Vec<bool> = (0..60).map(|_| rng.random::<f64>() < 0.4).collect();
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..60 {
            for j in 0..60 {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        assert!((auc(&scores, &labels).unwrap() - wins / pairs).abs() < 1e-14);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        assert!((auc(&flipped, &labels).unwrap() - (1.0 - wins / pairs)).abs() < 1e-14);
    }

    #[test]
    fn logistic_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(40, 2, |_, _| rng.random_range(-1.0..1.0));
        let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
        let rows = rows_of(&x);
        let coef = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-0.5..0.5));
        let (_, grad, hess) = logistic_terms(&rows, &labels, 3, &coef, true);
        let flat = pack(&coef);
        let h = 1e-6;
        for i in 0..flat.len() {
            let mut up = flat.clone();
            let mut dn = flat.clone();
            up[i] += h;
            dn[i] -= h;
            let (fu, gu, _) = logistic_terms(&rows, &labels, 3, &unpack(&up, 3, 3), false);
            let (fd, gd, _) = logistic_terms(&rows, &labels, 3, &unpack(&dn, 3, 3), false);
            assert!(((fu - fd) / (2.0 * h) - grad[i]).abs() < 1e-7);
            let col = (gu - gd) / (2.0 * h);
            assert!((col - hess.column(i)).amax() < 1e-6);
        }
    }

    #[test]
    fn separated_classes_are_predicted() {
        let x = DMatrix::from_column_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let y = Response::Categorical {
            codes: vec![0, 0, 0, 1, 1, 1],
            levels: vec!["a".into(), "b".into()],
        };
        let m = Downstream::fit(&x, &y).unwrap();
        assert_eq!(m.error(&x, &y).unwrap(), 0.0);
        let single = Response::Categorical {
            codes: vec![1; 6],
            levels: vec!["a".into(), "b".into()],
        };
        assert!(matches!(
            Downstream::fit(&x, &single),
            Err(Error::DegenerateResponse(_))
        ));
    }

    #[test]
    fn logistic_ignores_predictor_location_and_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let labels: Vec<usize> = (0..90).map(|i| i % 3).collect();
        let x = DMatrix::from_fn(90, 2, |i, j| {
            let shift = if labels[i] == 2 && j == 0 { 2.0 } else { 0.0 };
            shift + rng.random_range(-1.0..1.0)
        });
        let moved = x.map(|v| 400.0 + 60.0 * v);
        let a = fit_logistic(&x, &labels, 3, None).unwrap();
        let b = fit_logistic(&moved, &labels, 3, None).unwrap();
        for i in 0..90 {
            let pa = a.probabilities(&x.row(i).iter().cloned().collect::<Vec<_>>());
            let pb = b.probabilities(&moved.row(i).iter().cloned().collect::<Vec<_>>());
            for k in 0..3 {
                assert!((pa[k] - pb[k]).abs() < 1e-6);
            }
        }
        // far-off separated class is still recognized
        let preds: Vec<usize> = (0..90)
            .map(|i| b.predict(&moved.row(i).iter().cloned().collect::<Vec<_>>()))
            .collect();
        let missed = (0..90)
            .filter(|&i| (labels[i] == 2) != (preds[i] == 2))
            .count();
        assert!(missed <= 3, "{missed}");
    }

    #[test]
    fn linear_recovers_coefficients() {
        let x = DMatrix::from_fn(10, 2, |i, j| ((i * (j + 2)) % 7) as f64);
        let y: Vec<f64> = (0..10)
            .map(|i| 1.0 + 2.0 * x[(i, 0)] - 0.5 * x[(i, 1)])
            .collect();
        let m = fit_linear(&x, &y).unwrap();
        assert!((m.coef.clone() - DVector::from_vec(vec![1.0, 2.0, -0.5])).amax() < 1e-10);
    }
}
