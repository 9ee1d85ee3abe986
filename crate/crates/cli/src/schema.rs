//! Delimited-text datasets described by a column schema.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use mixsdr::{Dataset, Response};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseType {
    Categorical,
    Continuous,
}

/// Which columns hold the response, the continuous and the binary predictors.
/// Without a header row, columns are named by their 1-based position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSchema {
    pub response: String,
    pub response_type: ResponseType,
    #[serde(default)]
    pub continuous: Vec<String>,
    #[serde(default)]
    pub binary: Vec<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_header")]
    pub header: bool,
}

fn default_delimiter() -> char {
    ','
}

fn default_header() -> bool {
    true
}

impl DataSchema {
    pub fn validate(&self) -> Result<()> {
        if !self.delimiter.is_ascii() || self.delimiter == '"' || self.delimiter == '\n' {
            return Err(CliError::invalid(format!(
                "unusable delimiter {:?}",
                self.delimiter
            )));
        }
        let mut seen = HashSet::new();
        for name in std::iter::once(&self.response)
            .chain(&self.continuous)
            .chain(&self.binary)
        {
            if !seen.insert(name.as_str()) {
                return Err(CliError::invalid(format!(
                    "column '{name}' is listed more than once"
                )));
            }
        }
        if self.continuous.is_empty() && self.binary.is_empty() {
            return Err(CliError::invalid("the schema lists no predictors"));
        }
        Ok(())
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::invalid(format!("cannot read schema {}: {e}", path.display()))
        })?;
        let schema: DataSchema = toml::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }
}

pub fn load_dataset(path: &Path, schema: &DataSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::invalid(format!("cannot open {}: {e}", path.display())))?;
    let data = read_dataset(file, schema)?;
    log::info!("loaded {} rows from {}", data.n(), path.display());
    log_summaries(&data, schema);
    Ok(data)
}

fn parse_number(raw: &str, row: usize, column: &str) -> Result<f64> {
    let v = raw.trim();
    if v.is_empty() || v.eq_ignore_ascii_case("na") || v.eq_ignore_ascii_case("nan") {
        return Err(CliError::invalid(format!(
            "missing value at row {row}, column '{column}'"
        )));
    }
    let x: f64 = v.parse().map_err(|_| {
        CliError::invalid(format!(
            "row {row}, column '{column}': '{v}' is not a number"
        ))
    })?;
    if !x.is_finite() {
        return Err(CliError::invalid(format!(
            "row {row}, column '{column}': non-finite value"
        )));
    }
    Ok(x)
}

/// Rows are numbered from 1, counting data rows only.
pub fn read_dataset<R: Read>(reader: R, schema: &DataSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(schema.header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let names: Vec<String> = if schema.header {
        rdr.headers()?.iter().map(str::to_string).collect()
    } else {
        let width = records.first().map_or(0, |r| r.len());
        (1..=width).map(|k| k.to_string()).collect()
    };
    let index = |name: &str| -> Result<usize> {
        names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::invalid(format!("column '{name}' not found")))
    };
    let yi = index(&schema.response)?;
    let xi: Vec<usize> = schema
        .continuous
        .iter()
        .map(|c| index(c))
        .collect::<Result<_>>()?;
    let hi: Vec<usize> = schema
        .binary
        .iter()
        .map(|c| index(c))
        .collect::<Result<_>>()?;
    let n = records.len();
    if n == 0 {
        return Err(CliError::invalid("the data file has no rows"));
    }
    let mut x = DMatrix::zeros(n, xi.len());
    let mut h = DMatrix::zeros(n, hi.len());
    let mut labels = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for (i, rec) in records.iter().enumerate() {
        let row = i + 1;
        let field = |k: usize| -> Result<&str> {
            rec.get(k).ok_or_else(|| {
                CliError::invalid(format!("row {row} has only {} fields", rec.len()))
            })
        };
        let y = field(yi)?;
        match schema.response_type {
            ResponseType::Categorical => {
                if y.is_empty() {
                    return Err(CliError::invalid(format!(
                        "missing value at row {row}, column '{}'",
                        schema.response
                    )));
                }
                labels.push(y.to_string());
            }
            ResponseType::Continuous => values.push(parse_number(y, row, &schema.response)?),
        }
        for (j, &k) in xi.iter().enumerate() {
            x[(i, j)] = parse_number(field(k)?, row, &schema.continuous[j])?;
        }
        for (j, &k) in hi.iter().enumerate() {
            let v = parse_number(field(k)?, row, &schema.binary[j])?;
            if v != 0.0 && v != 1.0 {
                return Err(CliError::invalid(format!(
                    "row {row}, binary column '{}': value {v} is not 0 or 1",
                    schema.binary[j]
                )));
            }
            h[(i, j)] = v;
        }
    }
    let y = match schema.response_type {
        ResponseType::Categorical => Response::categorical_from_labels(&labels),
        ResponseType::Continuous => Response::Continuous(values),
    };
    Ok(Dataset::new(y, x, h)?)
}

/// Shortest text that parses back to the same `f64`.
pub fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

fn response_field(y: &Response, i: usize) -> String {
    match y {
        Response::Categorical { codes, levels } => levels[codes[i]].clone(),
        Response::Continuous(v) => fmt_num(v[i]),
    }
}

/// Writes `data` in the layout `schema` describes: response, continuous, binary.
pub fn write_dataset<W: Write>(writer: W, data: &Dataset, schema: &DataSchema) -> Result<()> {
    schema.validate()?;
    if schema.continuous.len() != data.p() || schema.binary.len() != data.q() {
        return Err(CliError::invalid(
            "schema and dataset disagree on the number of columns",
        ));
    }
    let mut w = csv::WriterBuilder::new()
        .delimiter(schema.delimiter as u8)
        .from_writer(writer);
    if schema.header {
        let mut head = vec![schema.response.clone()];
        head.extend(schema.continuous.iter().cloned());
        head.extend(schema.binary.iter().cloned());
        w.write_record(&head)?;
    }
    for i in 0..data.n() {
        let mut rec = vec![response_field(&data.y, i)];
        rec.extend(data.x.row(i).iter().map(|&v| fmt_num(v)));
        rec.extend(data.h.row(i).iter().map(|&v| fmt_num(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Schema with columns `y`, `x1..xp`, `h1..hq` for a dataset of the given shape.
pub fn default_schema(p: usize, q: usize, response_type: ResponseType) -> DataSchema {
    DataSchema {
        response: "y".into(),
        response_type,
        continuous: (1..=p).map(|j| format!("x{j}")).collect(),
        binary: (1..=q).map(|j| format!("h{j}")).collect(),
        delimiter: ',',
        header: true,
    }
}

fn log_summaries(data: &Dataset, schema: &DataSchema) {
    let n = data.n() as f64;
    for (j, name) in schema.continuous.iter().enumerate() {
        let col = data.x.column(j);
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
        log::info!(
            "{name}: mean {mean:.4}, sd {sd:.4}, range [{:.4}, {:.4}]",
            col.min(),
            col.max()
        );
    }
    for (j, name) in schema.binary.iter().enumerate() {
        log::info!("{name}: share of ones {:.4}", data.h.column(j).mean());
    }
    if let Response::Categorical { codes, levels } = &data.y {
        for (k, level) in levels.iter().enumerate() {
            log::info!(
                "{}={level}: {} rows",
                schema.response,
                codes.iter().filter(|&&c| c == k).count()
            );
        }
    }
}
