//! In-memory dataset: response, continuous block `X` and binary block `H`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Response values. Categorical codes index into `levels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Response {
    Categorical {
        codes: Vec<usize>,
        levels: Vec<String>,
    },
    Continuous(Vec<f64>),
}

impl Response {
    pub fn len(&self) -> usize {
        match self {
            Response::Categorical { codes, .. } => codes.len(),
            Response::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Builds a categorical response from raw labels. Levels are sorted
    /// numerically when every label parses as a number, lexically otherwise.
    pub fn categorical_from_labels<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut levels: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        levels.sort();
        levels.dedup();
        let numeric: Option<Vec<f64>> = levels
            .iter()
            .map(|s| s.trim().parse::<f64>().ok())
            .collect();
        if let Some(nums) = numeric {
            let mut paired: Vec<(f64, String)> = nums.into_iter().zip(levels).collect();
            paired.sort_by(|a, b| a.0.total_cmp(&b.0));
            levels = paired.into_iter().map(|(_, s)| s).collect();
        }
        let codes = labels
            .iter()
            .map(|s| {
                levels
                    .iter()
                    .position(|l| l == s.as_ref())
                    .expect("level present")
            })
            .collect();
        Response::Categorical { codes, levels }
    }

    /// Subset of observations, keeping the level set unchanged.
    pub fn select(&self, rows: &[usize]) -> Self {
        match self {
            Response::Categorical { codes, levels } => Response::Categorical {
                codes: rows.iter().map(|&i| codes[i]).collect(),
                levels: levels.clone(),
            },
            Response::Continuous(v) => Response::Continuous(rows.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// `n` observations of `(Y, X, H)` with `X: n x p` and `H: n x q` in `{0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Response,
    pub x: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: Response, x: DMatrix<f64>, h: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || h.nrows() != n {
            return Err(Error::Dimension(format!(
                "response has {n} rows, X has {}, H has {}",
                x.nrows(),
                h.nrows()
            )));
        }
        for column in 0..h.ncols() {
            for row in 0..n {
                let v = h[(row, column)];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::NonBinary {
                        row,
                        column,
                        value: v,
                    });
                }
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(
                "non-finite value in continuous block".into(),
            ));
        }
        Ok(Self { y, x, h })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.h.ncols()
    }

    pub fn x_row(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    pub fn h_row(&self, i: usize) -> DVector<f64> {
        self.h.row(i).transpose()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            y: self.y.select(rows),
            x: self.x.select_rows(rows),
            h: self.h.select_rows(rows),
        }
    }

    /// Keeps only the listed continuous and binary columns.
    pub fn select_columns(&self, x_cols: &[usize], h_cols: &[usize]) -> Self {
        Self {
            y: self.y.clone(),
            x: self.x.select_columns(x_cols),
            h: self.h.select_columns(h_cols),
        }
    }
}
