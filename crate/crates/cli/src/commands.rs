//! One function per subcommand. Each reads the resolved configuration and
//! writes its results under `config.out`.

use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use mixsdr::asymp::{select_dimension_fit_with, DimensionTestReport};
use mixsdr::estim::{
    fit_mle, reduce_dataset, reduction_from_fit, Dims, FitOptions, MleFit, ReductionKind,
    ReductionModel,
};
use mixsdr::model::{FyBasis, FySpec};
use mixsdr::simbench::{dims_label, run_experiment, ExperimentResult};
use mixsdr::sparse::{cv_select, penalized_reduction, Downstream, PenaltyKind, RegPath};
use mixsdr::{Dataset, Response};

use crate::config::{Command, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{read_json, Meta, OutputDir};
use crate::predict::{loo_reduced, predict_rows, LooResult, Prediction};
use crate::schema::{fmt_num, load_dataset, DataSchema, ResponseType};

/// What a command wrote, plus a one-line summary for the terminal.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    match command {
        Command::Fit => cmd_fit(cfg),
        Command::Reduce => cmd_reduce(cfg),
        Command::Testdim => cmd_testdim(cfg),
        Command::Select => cmd_select(cfg),
        Command::Predict => cmd_predict(cfg),
        Command::Simulate => cmd_simulate(cfg),
    }
}

struct Loaded {
    data: Dataset,
    schema: DataSchema,
    spec: FySpec,
}

fn load(cfg: &RunConfig) -> Result<Loaded> {
    let schema = cfg.resolve_schema()?;
    let data = load_dataset(cfg.data_path()?, &schema)?;
    let spec = match schema.response_type {
        ResponseType::Categorical => FySpec::Categorical,
        ResponseType::Continuous => FySpec::Polynomial {
            degree: cfg.basis.degree,
        },
    };
    Ok(Loaded { data, schema, spec })
}

struct Fitted {
    fy: FyBasis,
    design: DMatrix<f64>,
    fit: MleFit,
}

fn fit_all(loaded: &Loaded, cfg: &RunConfig) -> Result<Fitted> {
    let fy = FyBasis::build(&loaded.data.y, loaded.spec)?;
    let design = fy.design(&loaded.data.y)?;
    let fit = fit_mle(&loaded.data, &fy, FitOptions { ridge: cfg.ridge })?;
    Ok(Fitted { fy, design, fit })
}

fn dimension_report(fitted: &Fitted, cfg: &RunConfig) -> Result<DimensionTestReport> {
    Ok(select_dimension_fit_with(
        &fitted.fit,
        &fitted.design,
        cfg.kind,
        cfg.test,
        cfg.alpha,
        cfg.seed,
        true,
    )?)
}

/// Requested dimension, or the tested one with `auto`.
fn resolve_dims(fitted: &Fitted, cfg: &RunConfig) -> Result<(Dims, Option<DimensionTestReport>)> {
    match (cfg.d, cfg.auto) {
        (Some(d), _) => Ok((d.dims(), None)),
        (None, true) => {
            let report = dimension_report(fitted, cfg)?;
            Ok((report.selected, Some(report)))
        }
        (None, false) => Err(CliError::invalid("give a dimension (--d) or --auto")),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOutput {
    pub n: usize,
    pub fy: FyBasis,
    pub fit: MleFit,
    /// Stacked coefficient matrix of the optimal reduction.
    pub b: DMatrix<f64>,
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<Outcome> {
    let loaded = load(cfg)?;
    let fitted = fit_all(&loaded, cfg)?;
    let b = fitted.fit.assemble_b()?;
    let mut out = OutputDir::create(Meta::new(Command::Fit, cfg))?;
    out.json(
        "fit.json",
        &FitOutput {
            n: loaded.data.n(),
            fy: fitted.fy,
            fit: fitted.fit,
            b: b.clone(),
        },
    )?;
    out.matrix("b.csv", "f", &b)?;
    Ok(Outcome {
        files: out.written,
        summary: format!(
            "fitted n = {}, b is {} x {}",
            loaded.data.n(),
            b.nrows(),
            b.ncols()
        ),
    })
}

fn write_reduction(out: &mut OutputDir, model: &ReductionModel, data: &Dataset) -> Result<()> {
    out.json("reduction.json", model)?;
    out.matrix("alpha.csv", "a", &model.alpha)?;
    out.matrix(
        "center.csv",
        "center",
        &DMatrix::from_column_slice(model.center.len(), 1, model.center.as_slice()),
    )?;
    let z = reduce_dataset(model, data)?;
    let mut header = vec!["y".to_string()];
    header.extend((1..=z.ncols()).map(|k| format!("r{k}")));
    let rows: Vec<Vec<String>> = (0..data.n())
        .map(|i| {
            let mut r = vec![response_label(&data.y, i)];
            r.extend(z.row(i).iter().map(|&v| fmt_num(v)));
            r
        })
        .collect();
    out.table("reduced.csv", &header, &rows)?;
    Ok(())
}

fn response_label(y: &Response, i: usize) -> String {
    match y {
        Response::Categorical { codes, levels } => levels[codes[i]].clone(),
        Response::Continuous(v) => fmt_num(v[i]),
    }
}

pub fn cmd_reduce(cfg: &RunConfig) -> Result<Outcome> {
    let loaded = load(cfg)?;
    let fitted = fit_all(&loaded, cfg)?;
    let (dims, report) = resolve_dims(&fitted, cfg)?;
    let model = reduction_from_fit(&loaded.data, fitted.fy, fitted.fit, cfg.kind, dims)?;
    let mut out = OutputDir::create(Meta::new(Command::Reduce, cfg))?;
    if let Some(r) = &report {
        out.json("testdim.json", r)?;
    }
    write_reduction(&mut out, &model, &loaded.data)?;
    Ok(Outcome {
        files: out.written,
        summary: format!(
            "{:?} reduction with d = {}",
            model.kind,
            dims_label(model.dims)
        ),
    })
}

pub fn cmd_testdim(cfg: &RunConfig) -> Result<Outcome> {
    let loaded = load(cfg)?;
    let fitted = fit_all(&loaded, cfg)?;
    let report = dimension_report(&fitted, cfg)?;
    let mut out = OutputDir::create(Meta::new(Command::Testdim, cfg))?;
    out.json("testdim.json", &report)?;
    let mut rows = Vec::new();
    for br in &report.branches {
        for step in &br.steps {
            let w = step.weighted.as_ref();
            let l = step.wald.as_ref();
            rows.push(vec![
                br.label.clone(),
                step.j.to_string(),
                w.map_or(String::new(), |o| fmt_num(o.statistic)),
                w.map_or(String::new(), |o| fmt_num(o.critical)),
                w.map_or(String::new(), |o| o.reject.to_string()),
                l.map_or(String::new(), |o| fmt_num(o.statistic)),
                l.map_or(String::new(), |o| fmt_num(o.critical)),
                l.map_or(String::new(), |o| o.reject.to_string()),
            ]);
        }
    }
    let header: Vec<String> = [
        "branch",
        "j",
        "wchisq_stat",
        "wchisq_crit",
        "wchisq_reject",
        "wald_stat",
        "wald_crit",
        "wald_reject",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    out.table("testdim.csv", &header, &rows)?;
    Ok(Outcome {
        files: out.written,
        summary: format!(
            "{} test selects d = {}",
            cfg.test_name(),
            dims_label(report.selected)
        ),
    })
}

fn expected_penalty(kind: ReductionKind) -> Option<PenaltyKind> {
    match kind {
        ReductionKind::Pfc => Some(PenaltyKind::ContinuousRows),
        ReductionKind::BinaryOnly => Some(PenaltyKind::BinaryOverlapping),
        ReductionKind::Optimal => Some(PenaltyKind::Mixed),
        ReductionKind::Suboptimal => None,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Selection {
    pub kept_continuous: Vec<String>,
    pub kept_binary: Vec<String>,
    pub gamma: Option<f64>,
    pub lambdas: Vec<f64>,
    pub cv_mean: f64,
    pub path: RegPath,
}

pub fn cmd_select(cfg: &RunConfig) -> Result<Outcome> {
    let loaded = load(cfg)?;
    let (p, q) = (loaded.data.p(), loaded.data.q());
    let kind = mixsdr::estim::resolve_kind(cfg.kind, p, q);
    if let Some(pen) = cfg.penalty {
        match expected_penalty(kind) {
            Some(want) if want == pen => {}
            Some(want) => {
                return Err(CliError::invalid(format!(
                    "the {kind:?} reduction uses the {want:?} penalty, not {pen:?}"
                )))
            }
            None => {
                return Err(CliError::invalid(
                    "the sub-optimal reduction penalizes its two blocks separately; drop --penalty",
                ))
            }
        }
    }
    let dims = match (cfg.d, cfg.auto) {
        (Some(d), _) => d.dims(),
        (None, true) => dimension_report(&fit_all(&loaded, cfg)?, cfg)?.selected,
        (None, false) => return Err(CliError::invalid("give a dimension (--d) or --auto")),
    };
    let path = cv_select(
        &loaded.data,
        loaded.spec,
        kind,
        dims,
        &cfg.grids,
        cfg.folds,
        cfg.seed,
    )?;
    let best = path.best().clone();
    let model = penalized_reduction(&loaded.data, loaded.spec, &path, &best)?;
    let selection = Selection {
        kept_continuous: best
            .kept_continuous
            .iter()
            .map(|&j| loaded.schema.continuous[j].clone())
            .collect(),
        kept_binary: best
            .kept_binary
            .iter()
            .map(|&j| loaded.schema.binary[j].clone())
            .collect(),
        gamma: best.gamma,
        lambdas: best.lambdas.clone(),
        cv_mean: best.cv_mean,
        path,
    };
    let mut out = OutputDir::create(Meta::new(Command::Select, cfg))?;
    out.json("regpath.json", &selection)?;
    write_reduction(&mut out, &model, &loaded.data)?;
    Ok(Outcome {
        files: out.written,
        summary: format!(
            "kept {} continuous and {} binary predictors (cv error {:.4})",
            selection.kept_continuous.len(),
            selection.kept_binary.len(),
            selection.cv_mean
        ),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictMetrics {
    pub n_train: usize,
    /// In-sample misclassification rate or mean squared error.
    pub train_error: f64,
    pub loo: Option<LooResult>,
    pub downstream: Downstream,
}

fn load_model(path: &std::path::Path, data: &Dataset) -> Result<ReductionModel> {
    let model: ReductionModel = read_json(path)?.result;
    if model.p != data.p() || model.q != data.q() {
        return Err(CliError::invalid(format!(
            "the saved reduction expects {} continuous and {} binary predictors, the data has {} and {}",
            model.p,
            model.q,
            data.p(),
            data.q()
        )));
    }
    Ok(model)
}

fn prediction_rows(
    set: &str,
    y: Option<&Response>,
    preds: &[Prediction],
    levels: Option<&[String]>,
) -> Vec<Vec<String>> {
    preds
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut r = vec![
                set.to_string(),
                (i + 1).to_string(),
                y.map_or(String::new(), |y| response_label(y, i)),
            ];
            match p {
                Prediction::Class {
                    code,
                    probabilities,
                } => {
                    r.push(levels.map_or(code.to_string(), |l| l[*code].clone()));
                    r.extend(probabilities.iter().map(|&v| fmt_num(v)));
                }
                Prediction::Value(v) => r.push(fmt_num(*v)),
            }
            r
        })
        .collect()
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<Outcome> {
    let loaded = load(cfg)?;
    let model = match &cfg.model {
        Some(path) => load_model(path, &loaded.data)?,
        None => {
            let fitted = fit_all(&loaded, cfg)?;
            let (dims, _) = resolve_dims(&fitted, cfg)?;
            reduction_from_fit(&loaded.data, fitted.fy, fitted.fit, cfg.kind, dims)?
        }
    };
    let z = reduce_dataset(&model, &loaded.data)?;
    let down = Downstream::fit(&z, &loaded.data.y)?;
    let train_preds = predict_rows(&down, &z);
    let train_error = down.error(&z, &loaded.data.y)?;
    let loo = if cfg.loo || cfg.strict_loo {
        Some(loo_reduced(&loaded.data, &model, cfg.strict_loo)?)
    } else {
        None
    };

    let levels = match &loaded.data.y {
        Response::Categorical { levels, .. } => Some(levels.clone()),
        Response::Continuous(_) => None,
    };
    let mut header: Vec<String> = ["set", "row", "y", "predicted"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if let Some(l) = &levels {
        header.extend(l.iter().map(|v| format!("p_{v}")));
    }
    let mut rows = prediction_rows(
        "train",
        Some(&loaded.data.y),
        &train_preds,
        levels.as_deref(),
    );
    if let Some(l) = &loo {
        rows.extend(prediction_rows(
            "loo",
            Some(&loaded.data.y),
            &l.predictions,
            levels.as_deref(),
        ));
    }
    if let Some(path) = &cfg.newdata {
        let fresh = load_dataset(path, &loaded.schema)?;
        let preds = predict_rows(&down, &reduce_dataset(&model, &fresh)?);
        rows.extend(prediction_rows(
            "new",
            Some(&fresh.y),
            &preds,
            levels.as_deref(),
        ));
    }
    let metrics = PredictMetrics {
        n_train: loaded.data.n(),
        train_error,
        loo: loo.clone(),
        downstream: down,
    };
    let mut out = OutputDir::create(Meta::new(Command::Predict, cfg))?;
    out.json("metrics.json", &metrics)?;
    out.table("predictions.csv", &header, &rows)?;
    let summary = match &loo {
        Some(l) => format!(
            "{} leave-one-out error {:.4}{}",
            if l.strict { "strict" } else { "fast" },
            l.error,
            l.auc.map_or(String::new(), |a| format!(", AUC {a:.4}"))
        ),
        None => format!("training error {train_error:.4}"),
    };
    Ok(Outcome {
        files: out.written,
        summary,
    })
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let mut exp = cfg.simulate.clone();
    exp.seed = cfg.seed;
    exp.alpha = cfg.alpha;
    exp.folds = cfg.folds;
    exp.grids = cfg.grids.clone();
    let result: ExperimentResult = run_experiment(&exp)?;
    let mut out = OutputDir::create(Meta::new(Command::Simulate, cfg))?;
    out.records("reps.csv", &result.rows)?;
    out.records("summary.csv", &result.aggregates)?;
    out.json("experiment.json", &result.config)?;
    let failures = result.rows.iter().filter(|r| r.failure.is_some()).count();
    Ok(Outcome {
        files: out.written,
        summary: format!("{} replicate rows, {} failed", result.rows.len(), failures),
    })
}
