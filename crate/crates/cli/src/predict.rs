//! Downstream prediction on reduced predictors and leave-one-out evaluation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use mixsdr::estim::{fit_sdr, reduce_dataset, ReductionModel};
use mixsdr::model::{FyBasis, FyKind, FySpec};
use mixsdr::sparse::{auc, Downstream};
use mixsdr::{Dataset, Response};

use crate::error::{CliError, Result};

/// Prediction for one observation: a class code with class probabilities, or a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Prediction {
    Class {
        code: usize,
        probabilities: Vec<f64>,
    },
    Value(f64),
}

pub fn predict_rows(model: &Downstream, x: &DMatrix<f64>) -> Vec<Prediction> {
    (0..x.nrows())
        .map(|i| {
            let row: Vec<f64> = x.row(i).iter().cloned().collect();
            match model {
                Downstream::Logistic(m) => Prediction::Class {
                    code: m.predict(&row),
                    probabilities: m.probabilities(&row),
                },
                Downstream::Linear(m) => Prediction::Value(m.predict(&row)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooResult {
    /// Misclassification rate or mean squared error.
    pub error: f64,
    /// Binary response: AUC of the second level's probability. More levels:
    /// mean one-vs-rest AUC over the levels present. `None` for a continuous response.
    pub auc: Option<f64>,
    pub strict: bool,
    pub predictions: Vec<Prediction>,
}

/// Refit recipe for the reduction's response basis.
pub fn basis_spec(fy: &FyBasis) -> Result<FySpec> {
    match fy.kind {
        FyKind::Categorical { .. } => Ok(FySpec::Categorical),
        FyKind::Polynomial { degree } => Ok(FySpec::Polynomial { degree }),
        FyKind::Custom => Err(CliError::invalid(
            "a reduction with a custom basis cannot be refitted",
        )),
    }
}

fn without(n: usize, i: usize) -> Vec<usize> {
    (0..n).filter(|&k| k != i).collect()
}

/// Leave-one-out error of the downstream model on the reduced predictors.
/// Fast mode keeps `model` fixed; strict mode refits the reduction per left-out row.
pub fn loo_reduced(data: &Dataset, model: &ReductionModel, strict: bool) -> Result<LooResult> {
    let n = data.n();
    if n < 3 {
        return Err(CliError::invalid(
            "leave-one-out needs at least three observations",
        ));
    }
    let mut predictions = Vec::with_capacity(n);
    if strict {
        let spec = basis_spec(&model.fy)?;
        for i in 0..n {
            let train = data.select(&without(n, i));
            let held = data.select(&[i]);
            let fy = FyBasis::build(&train.y, spec)?;
            let refit = fit_sdr(&train, &fy, model.kind, model.dims)?;
            let down = Downstream::fit(&reduce_dataset(&refit, &train)?, &train.y)?;
            predictions.extend(predict_rows(&down, &reduce_dataset(&refit, &held)?));
        }
    } else {
        let z = reduce_dataset(model, data)?;
        predictions = loo_fixed(&z, &data.y)?;
    }
    score(&data.y, predictions, strict)
}

/// Leave-one-out error of the downstream model fitted on the given predictors.
pub fn loo_fixed(z: &DMatrix<f64>, y: &Response) -> Result<Vec<Prediction>> {
    let n = z.nrows();
    let full = Downstream::fit(z, y)?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let keep = without(n, i);
        let down = Downstream::fit_from(&z.select_rows(&keep), &y.select(&keep), Some(&full))?;
        out.extend(predict_rows(&down, &z.select_rows(&[i])));
    }
    Ok(out)
}

/// Leave-one-out error of the downstream model on all raw predictors `(X, H)`.
pub fn loo_full_predictors(data: &Dataset) -> Result<LooResult> {
    let z = DMatrix::from_fn(data.n(), data.p() + data.q(), |i, j| {
        if j < data.p() {
            data.x[(i, j)]
        } else {
            data.h[(i, j - data.p())]
        }
    });
    let predictions = loo_fixed(&z, &data.y)?;
    score(&data.y, predictions, false)
}

pub fn score(y: &Response, predictions: Vec<Prediction>, strict: bool) -> Result<LooResult> {
    let n = y.len();
    if predictions.len() != n {
        return Err(CliError::invalid(
            "prediction count does not match the response",
        ));
    }
    let (error, auc_value) = match y {
        Response::Categorical { codes, levels } => {
            let mut wrong = 0usize;
            let mut probs = Vec::with_capacity(n);
            for (p, &c) in predictions.iter().zip(codes) {
                match p {
                    Prediction::Class {
                        code,
                        probabilities,
                    } => {
                        wrong += (*code != c) as usize;
                        probs.push(probabilities.clone());
                    }
                    Prediction::Value(_) => {
                        return Err(CliError::invalid("class predictions expected"))
                    }
                }
            }
            (
                wrong as f64 / n as f64,
                class_auc(&probs, codes, levels.len())?,
            )
        }
        Response::Continuous(v) => {
            let mut sse = 0.0;
            for (p, &t) in predictions.iter().zip(v) {
                match p {
                    Prediction::Value(f) => sse += (f - t).powi(2),
                    Prediction::Class { .. } => {
                        return Err(CliError::invalid("value predictions expected"))
                    }
                }
            }
            (sse / n as f64, None)
        }
    };
    Ok(LooResult {
        error,
        auc: auc_value,
        strict,
        predictions,
    })
}

fn class_auc(probs: &[Vec<f64>], codes: &[usize], levels: usize) -> Result<Option<f64>> {
    let present: Vec<usize> = (0..levels).filter(|k| codes.contains(k)).collect();
    if present.len() < 2 {
        return Ok(None);
    }
    let one_vs_rest = |k: usize| -> Result<f64> {
        let scores: Vec<f64> = probs.iter().map(|p| p[k]).collect();
        let positive: Vec<bool> = codes.iter().map(|&c| c == k).collect();
        Ok(auc(&scores, &positive)?)
    };
    if levels == 2 {
        return Ok(Some(one_vs_rest(1)?));
    }
    let mut total = 0.0;
    for &k in &present {
        total += one_vs_rest(k)?;
    }
    Ok(Some(total / present.len() as f64))
}
