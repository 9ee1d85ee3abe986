//! Known response basis `f_Y`, centered on the training sample.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Response;
use crate::error::{Error, Result};

/// How the raw basis is built from the response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FySpec {
    /// Indicators of all observed categories but the last.
    Categorical,
    /// `(y, y^2, ..., y^degree)`.
    Polynomial { degree: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FyKind {
    /// `observed` holds the category codes seen in training, sorted; the
    /// last one is the baseline.
    Categorical {
        observed: Vec<usize>,
    },
    Polynomial {
        degree: usize,
    },
    /// Externally supplied basis values; cannot be evaluated at new responses.
    Custom,
}

/// Centered response basis. `mean` is the training mean of the raw basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FyBasis {
    pub kind: FyKind,
    pub r: usize,
    pub mean: DVector<f64>,
}

impl FyBasis {
    pub fn build(response: &Response, spec: FySpec) -> Result<Self> {
        match spec {
            FySpec::Categorical => Self::categorical(response),
            FySpec::Polynomial { degree } => Self::polynomial(response, degree),
        }
    }

    pub fn categorical(response: &Response) -> Result<Self> {
        let codes = match response {
            Response::Categorical { codes, .. } => codes,
            Response::Continuous(_) => {
                return Err(Error::Invalid(
                    "categorical basis needs a categorical response".into(),
                ))
            }
        };
        let mut observed = codes.clone();
        observed.sort_unstable();
        observed.dedup();
        if observed.len() < 2 {
            return Err(Error::DegenerateResponse(format!(
                "{} distinct categor{} in the response",
                observed.len(),
                if observed.len() == 1 { "y" } else { "ies" }
            )));
        }
        let r = observed.len() - 1;
        let n = codes.len() as f64;
        let mut mean = DVector::zeros(r);
        for &c in codes {
            if let Some(k) = observed[..r].iter().position(|&o| o == c) {
                mean[k] += 1.0 / n;
            }
        }
        Ok(Self {
            kind: FyKind::Categorical { observed },
            r,
            mean,
        })
    }

    pub fn polynomial(response: &Response, degree: usize) -> Result<Self> {
        let values = match response {
            Response::Continuous(v) => v,
            Response::Categorical { .. } => {
                return Err(Error::Invalid(
                    "polynomial basis needs a numeric response".into(),
                ))
            }
        };
        if degree == 0 {
            return Err(Error::Invalid(
                "polynomial degree must be at least 1".into(),
            ));
        }
        let first = values.first().copied().unwrap_or(0.0);
        if values.iter().all(|&v| v == first) {
            return Err(Error::DegenerateResponse(
                "constant numeric response".into(),
            ));
        }
        let n = values.len() as f64;
        let mut mean = DVector::zeros(degree);
        for &y in values {
            for k in 0..degree {
                mean[k] += y.powi(k as i32 + 1) / n;
            }
        }
        Ok(Self {
            kind: FyKind::Polynomial { degree },
            r: degree,
            mean,
        })
    }

    /// Custom basis from a raw `n x r` matrix; returns the basis and the
    /// centered design.
    pub fn custom(raw: &DMatrix<f64>) -> (Self, DMatrix<f64>) {
        let mean = raw.row_mean().transpose();
        let mut centered = raw.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        (
            Self {
                kind: FyKind::Custom,
                r: raw.ncols(),
                mean,
            },
            centered,
        )
    }

    fn raw_categorical(&self, code: usize) -> DVector<f64> {
        let observed = match &self.kind {
            FyKind::Categorical { observed } => observed,
            _ => unreachable!(),
        };
        let mut f = DVector::zeros(self.r);
        if let Some(k) = observed[..self.r].iter().position(|&o| o == code) {
            f[k] = 1.0;
        }
        f
    }

    fn raw_polynomial(&self, y: f64) -> DVector<f64> {
        DVector::from_fn(self.r, |k, _| y.powi(k as i32 + 1))
    }

    /// Centered basis value for observation `i` of `response`.
    pub fn centered_row(&self, response: &Response, i: usize) -> Result<DVector<f64>> {
        let raw = match (&self.kind, response) {
            (FyKind::Categorical { .. }, Response::Categorical { codes, .. }) => {
                self.raw_categorical(codes[i])
            }
            (FyKind::Polynomial { .. }, Response::Continuous(v)) => self.raw_polynomial(v[i]),
            (FyKind::Custom, _) => {
                return Err(Error::Invalid("custom basis cannot be re-evaluated".into()))
            }
            _ => {
                return Err(Error::Invalid(
                    "response type does not match the basis".into(),
                ))
            }
        };
        Ok(raw - &self.mean)
    }

    /// Centered `n x r` design for `response`.
    pub fn design(&self, response: &Response) -> Result<DMatrix<f64>> {
        let n = response.len();
        let mut out = DMatrix::zeros(n, self.r);
        for i in 0..n {
            out.row_mut(i)
                .copy_from(&self.centered_row(response, i)?.transpose());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_balanced_classes() {
        let y = Response::categorical_from_labels(&["1", "2", "1", "2"]);
        let fb = FyBasis::categorical(&y).unwrap();
        assert_eq!(fb.r, 1);
        let f = fb.design(&y).unwrap();
        assert_eq!(f.column(0).as_slice(), &[0.5, -0.5, 0.5, -0.5]);
    }

    #[test]
    fn six_categories_center_to_zero() {
        let labels: Vec<String> = (0..60).map(|i| format!("{}", i % 6 + 1)).collect();
        let y = Response::categorical_from_labels(&labels);
        let fb = FyBasis::categorical(&y).unwrap();
        assert_eq!(fb.r, 5);
        let f = fb.design(&y).unwrap();
        for c in 0..5 {
            assert!(f.column(c).mean().abs() < 1e-12);
        }
    }

    #[test]
    fn polynomial_degree_two() {
        let y = Response::Continuous(vec![0.0, 1.0, 2.0]);
        let fb = FyBasis::polynomial(&y, 2).unwrap();
        let f = fb.design(&y).unwrap();
        // ybar = 1, mean(y^2) = 5/3
        let expect = DMatrix::from_row_slice(
            3,
            2,
            &[-1.0, -5.0 / 3.0, 0.0, 1.0 - 5.0 / 3.0, 1.0, 4.0 - 5.0 / 3.0],
        );
        assert!((f - expect).norm() < 1e-14);
    }

    #[test]
    fn single_category_is_degenerate() {
        let y = Response::categorical_from_labels(&["a", "a"]);
        assert!(matches!(
            FyBasis::categorical(&y),
            Err(Error::DegenerateResponse(_))
        ));
    }
}
