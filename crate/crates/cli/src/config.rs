//! Run configuration: one TOML file, overridable from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mixsdr::asymp::RankTest;
use mixsdr::estim::{Dims, ReductionKind};
use mixsdr::simbench::ExperimentConfig;
use mixsdr::sparse::{CvGrids, PenaltyKind};

use crate::error::{CliError, Result};
use crate::schema::DataSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Fit,
    Reduce,
    Testdim,
    Select,
    Predict,
    Simulate,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Reduce => "reduce",
            Command::Testdim => "testdim",
            Command::Select => "select",
            Command::Predict => "predict",
            Command::Simulate => "simulate",
        }
    }
}

/// `d = 2` or `d = [2, 1]` (continuous, binary) for the sub-optimal kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimsSetting {
    One(usize),
    Two([usize; 2]),
}

impl DimsSetting {
    pub fn dims(self) -> Dims {
        match self {
            DimsSetting::One(d) => Dims::One(d),
            DimsSetting::Two([a, b]) => Dims::Two(a, b),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let num = |t: &str| {
            t.parse::<usize>().map_err(|_| {
                CliError::invalid(format!(
                    "dimension '{s}' is not a count or a pair of counts"
                ))
            })
        };
        match parts.as_slice() {
            [a] => Ok(DimsSetting::One(num(a)?)),
            [a, b] => Ok(DimsSetting::Two([num(a)?, num(b)?])),
            _ => Err(CliError::invalid(format!(
                "dimension '{s}' is not a count or a pair of counts"
            ))),
        }
    }
}

/// Response basis for a continuous response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSetting {
    /// Degree of the polynomial basis in `y`; categorical responses use indicators.
    pub degree: usize,
}

impl Default for BasisSetting {
    fn default() -> Self {
        Self { degree: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    /// Schema file; ignored when `schema` is given inline.
    pub schema_file: Option<PathBuf>,
    pub schema: Option<DataSchema>,
    pub kind: ReductionKind,
    pub d: Option<DimsSetting>,
    /// Choose `d` by sequential testing.
    pub auto: bool,
    pub test: RankTest,
    pub alpha: f64,
    pub basis: BasisSetting,
    /// Ridge-stabilize the continuous regression.
    pub ridge: bool,
    /// Must agree with the reduction kind when given.
    pub penalty: Option<PenaltyKind>,
    pub folds: usize,
    pub grids: CvGrids,
    pub seed: u64,
    pub out: PathBuf,
    /// Saved reduction used by `predict`.
    pub model: Option<PathBuf>,
    /// Observations to predict besides the training data.
    pub newdata: Option<PathBuf>,
    pub loo: bool,
    /// Leave-one-out also refits the reduction.
    pub strict_loo: bool,
    pub simulate: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            schema_file: None,
            schema: None,
            kind: ReductionKind::Optimal,
            d: None,
            auto: false,
            test: RankTest::WeightedChiSq,
            alpha: 0.05,
            basis: BasisSetting::default(),
            ridge: false,
            penalty: None,
            folds: 10,
            grids: CvGrids::default(),
            seed: 0,
            out: PathBuf::from("out"),
            model: None,
            newdata: None,
            loo: false,
            strict_loo: false,
            simulate: ExperimentConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Relative paths inside the file are taken relative to the file itself.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::invalid(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            for p in [
                &mut cfg.data,
                &mut cfg.schema_file,
                &mut cfg.model,
                &mut cfg.newdata,
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::invalid(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.folds < 2 {
            return Err(CliError::invalid("at least two folds are needed"));
        }
        if self.basis.degree == 0 {
            return Err(CliError::invalid(
                "the polynomial basis needs degree at least 1",
            ));
        }
        if self.auto && self.d.is_some() {
            return Err(CliError::invalid(
                "give either a dimension or auto, not both",
            ));
        }
        Ok(())
    }

    /// Inline schema, else the schema file.
    pub fn resolve_schema(&self) -> Result<DataSchema> {
        match (&self.schema, &self.schema_file) {
            (Some(s), _) => {
                s.validate()?;
                Ok(s.clone())
            }
            (None, Some(path)) => DataSchema::from_toml_file(path),
            (None, None) => Err(CliError::invalid("no schema given (--schema or [schema])")),
        }
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::invalid("no data file given (--data)"))
    }

    pub fn test_name(&self) -> &'static str {
        match self.test {
            RankTest::WeightedChiSq => "wchisq",
            RankTest::Wald => "wald",
        }
    }
}
