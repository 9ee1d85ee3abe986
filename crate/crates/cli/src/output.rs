//! Output files. JSON documents carry a `meta` block; delimited tables start
//! with `#` comment lines holding the same information.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{Command, RunConfig};
use crate::error::{CliError, Result};
use crate::schema::fmt_num;

pub const TOOL: &str = "mixsdr";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    pub config: RunConfig,
}

impl Meta {
    pub fn new(command: Command, config: &RunConfig) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            command,
            seed: config.seed,
            config: config.clone(),
        }
    }

    fn comment_lines(&self) -> Result<String> {
        Ok(format!(
            "# {} {}\n# command: {}\n# seed: {}\n# config: {}\n",
            self.tool,
            self.version,
            self.command.as_str(),
            self.seed,
            serde_json::to_string(&self.config)?
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub meta: Meta,
    pub result: T,
}

/// Collects the files a command writes under the output directory.
pub struct OutputDir {
    root: PathBuf,
    meta: Meta,
    pub written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(meta: Meta) -> Result<Self> {
        let root = meta.config.out.clone();
        fs::create_dir_all(&root)
            .map_err(|e| CliError::invalid(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root,
            meta,
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn json<T: Serialize + Clone>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let doc = Stamped {
            meta: self.meta.clone(),
            result: value.clone(),
        };
        let path = self.path(name);
        fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Header row plus one row per record, every field already formatted.
    pub fn table(
        &mut self,
        name: &str,
        header: &[String],
        rows: &[Vec<String>],
    ) -> Result<PathBuf> {
        let path = self.path(name);
        let mut file = fs::File::create(&path)?;
        file.write_all(self.meta.comment_lines()?.as_bytes())?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Serializes records with the `csv` serde support.
    pub fn records<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf> {
        let path = self.path(name);
        let mut file = fs::File::create(&path)?;
        file.write_all(self.meta.comment_lines()?.as_bytes())?;
        let mut w = csv::Writer::from_writer(file);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn matrix(&mut self, name: &str, prefix: &str, m: &DMatrix<f64>) -> Result<PathBuf> {
        let header: Vec<String> = (1..=m.ncols()).map(|k| format!("{prefix}{k}")).collect();
        let rows: Vec<Vec<String>> = (0..m.nrows())
            .map(|i| m.row(i).iter().map(|&v| fmt_num(v)).collect())
            .collect();
        self.table(name, &header, &rows)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Stamped<T>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads a numeric table written by [`OutputDir::matrix`].
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    CliError::invalid(format!("{}: row {} has '{f}'", path.display(), i + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let ncols = rdr.headers()?.len();
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(CliError::invalid(format!(
            "{} should hold one column",
            path.display()
        )));
    }
    Ok(m.column(0).into_owned())
}
