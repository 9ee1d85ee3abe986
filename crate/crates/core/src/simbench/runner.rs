//! Repeated-sampling experiments over designs and sample sizes.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{metric_prediction, metric_subspace, statistic_matrix};
use super::scenario::{Scenario, ScenarioName};
use crate::asymp::{select_dimension_fit, DimensionTestReport, RankTest};
use crate::error::Result;
use crate::estim::{fit_mle, reduction_from_fit, Dims, ReductionKind};
use crate::model::{FyBasis, FySpec};
use crate::sparse::{cv_select, CvGrids};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Estimate,
    Testdim,
    Select,
}

impl std::str::FromStr for Task {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "estimate" => Ok(Task::Estimate),
            "testdim" => Ok(Task::Testdim),
            "select" => Ok(Task::Select),
            _ => Err(crate::error::Error::Invalid(format!("unknown task '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenarios: Vec<ScenarioName>,
    pub sample_sizes: Vec<usize>,
    pub reps: usize,
    pub tasks: Vec<Task>,
    pub seed: u64,
    pub alpha: f64,
    pub folds: usize,
    pub grids: CvGrids,
    /// Size of the independent sample for the prediction metric.
    pub fresh_n: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenarios: ScenarioName::ALL.to_vec(),
            sample_sizes: vec![100, 200, 300, 500, 750],
            reps: 100,
            tasks: vec![Task::Estimate, Task::Testdim, Task::Select],
            seed: 0,
            alpha: 0.05,
            folds: 10,
            grids: CvGrids::default(),
            fresh_n: 2000,
        }
    }
}

/// One replicate of one reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRow {
    pub scenario: ScenarioName,
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub reduction: ReductionKind,
    pub estimation_error: Option<f64>,
    pub prediction_error: Option<f64>,
    pub d_true: String,
    pub d_weighted: Option<String>,
    pub d_wald: Option<String>,
    pub correct_weighted: Option<bool>,
    pub correct_wald: Option<bool>,
    pub tp: Option<f64>,
    pub fn_rate: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: ScenarioName,
    pub n: usize,
    pub reduction: ReductionKind,
    pub reps: usize,
    pub failures: usize,
    pub estimation_median: Option<f64>,
    pub estimation_mean: Option<f64>,
    pub prediction_median: Option<f64>,
    pub prediction_mean: Option<f64>,
    /// Failed replicates count as incorrect.
    pub correct_weighted: Option<f64>,
    pub correct_wald: Option<f64>,
    pub tp_mean: Option<f64>,
    pub fn_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub rows: Vec<RepRow>,
    pub aggregates: Vec<AggregateRow>,
}

pub fn dims_label(d: Dims) -> String {
    match d {
        Dims::One(d) => d.to_string(),
        Dims::Two(a, b) => format!("({a}, {b})"),
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `rep` at sample size `n` of a design.
pub fn rep_seed(base: u64, scenario: ScenarioName, n: usize, rep: usize) -> u64 {
    let tag = ScenarioName::ALL
        .iter()
        .position(|&s| s == scenario)
        .unwrap_or(0) as u64;
    let mut s = splitmix(base);
    for v in [tag, n as u64, rep as u64] {
        s = splitmix(s ^ v);
    }
    s
}

fn tested_dims(report: &DimensionTestReport, test: RankTest) -> Dims {
    match report.selected {
        Dims::Two(..) => Dims::Two(
            report.branches[0].selected(test),
            report.branches.get(1).map_or(0, |b| b.selected(test)),
        ),
        Dims::One(_) => Dims::One(report.branches[0].selected(test)),
    }
}

fn selection_rates(scn: &Scenario, kept: (&[usize], &[usize])) -> (f64, f64) {
    let (rel_c, rel_b) = scn.relevant();
    let (mut tp, mut irrelevant, mut fneg, mut relevant) = (0usize, 0usize, 0usize, 0usize);
    for (count, rel, kept) in [(scn.p, &rel_c, kept.0), (scn.q, &rel_b, kept.1)] {
        for j in 0..count {
            let dropped = !kept.contains(&j);
            if rel.contains(&j) {
                relevant += 1;
                fneg += dropped as usize;
            } else {
                irrelevant += 1;
                tp += dropped as usize;
            }
        }
    }
    let rate = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (rate(tp, irrelevant), rate(fneg, relevant))
}

/// Runs every task on one replicate.
pub fn run_rep(
    scn: &Scenario,
    n: usize,
    rep: usize,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Vec<RepRow> {
    let kinds = scn.reductions();
    let mut rows: Vec<RepRow> = kinds
        .iter()
        .map(|&k| RepRow {
            scenario: scn.name,
            n,
            rep,
            seed,
            reduction: k,
            estimation_error: None,
            prediction_error: None,
            d_true: dims_label(scn.true_dims(k)),
            d_weighted: None,
            d_wald: None,
            correct_weighted: None,
            correct_wald: None,
            tp: None,
            fn_rate: None,
            failure: None,
        })
        .collect();
    let fail = |rows: &mut Vec<RepRow>, idx: Option<usize>, msg: String| {
        for (i, row) in rows.iter_mut().enumerate() {
            if idx.is_none_or(|k| k == i) {
                row.failure = Some(match row.failure.take() {
                    Some(prev) => format!("{prev}; {msg}"),
                    None => msg.clone(),
                });
            }
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = match scn.generate(n, &mut rng) {
        Ok(d) => d,
        Err(e) => {
            fail(&mut rows, None, format!("generate: {e}"));
            return rows;
        }
    };
    let has = |t: Task| cfg.tasks.contains(&t);
    let fresh = if has(Task::Estimate) {
        scn.generate(cfg.fresh_n, &mut rng).ok()
    } else {
        None
    };
    let fitted = FyBasis::categorical(&data.y).and_then(|fy| {
        let f = fy.design(&data.y)?;
        let fit = fit_mle(&data, &fy, Default::default())?;
        Ok((fy, f, fit))
    });
    let (fy, f, fit) = match fitted {
        Ok(v) => v,
        Err(e) => {
            if has(Task::Estimate) || has(Task::Testdim) {
                fail(&mut rows, None, format!("fit: {e}"));
            }
            if has(Task::Testdim) {
                rows.iter_mut().for_each(|r| {
                    r.correct_weighted = Some(false);
                    r.correct_wald = Some(false);
                });
            }
            if has(Task::Select) {
                run_select(scn, &data, cfg, seed, &mut rows, &fail);
            }
            return rows;
        }
    };
    for (i, &kind) in kinds.iter().enumerate() {
        let truth = scn.true_dims(kind);
        if has(Task::Estimate) {
            match reduction_from_fit(&data, fy.clone(), fit.clone(), kind, truth) {
                Ok(model) => {
                    let basis = scn.true_basis(kind);
                    rows[i].estimation_error = Some(metric_subspace(&model.alpha, &basis));
                    if let Some(fresh) = &fresh {
                        let stats = statistic_matrix(fresh, kind);
                        rows[i].prediction_error =
                            Some(metric_prediction(&model.alpha, &basis, &stats));
                    }
                }
                Err(e) => fail(&mut rows, Some(i), format!("estimate: {e}")),
            }
        }
        if has(Task::Testdim) {
            match select_dimension_fit(&fit, &f, kind, RankTest::Wald, cfg.alpha, seed) {
                Ok(report) => {
                    let dw = tested_dims(&report, RankTest::WeightedChiSq);
                    let dl = tested_dims(&report, RankTest::Wald);
                    rows[i].correct_weighted = Some(dw == truth);
                    rows[i].correct_wald = Some(dl == truth);
                    rows[i].d_weighted = Some(dims_label(dw));
                    rows[i].d_wald = Some(dims_label(dl));
                }
                Err(e) => {
                    rows[i].correct_weighted = Some(false);
                    rows[i].correct_wald = Some(false);
                    fail(&mut rows, Some(i), format!("testdim: {e}"));
                }
            }
        }
    }
    if has(Task::Select) {
        run_select(scn, &data, cfg, seed, &mut rows, &fail);
    }
    rows
}

fn run_select<F>(
    scn: &Scenario,
    data: &crate::data::Dataset,
    cfg: &ExperimentConfig,
    seed: u64,
    rows: &mut Vec<RepRow>,
    fail: &F,
) where
    F: Fn(&mut Vec<RepRow>, Option<usize>, String),
{
    let kind = scn.kind();
    let idx = rows
        .iter()
        .position(|r| r.reduction == kind)
        .expect("design reduction present");
    match cv_select(
        data,
        FySpec::Categorical,
        kind,
        scn.true_dims(kind),
        &cfg.grids,
        cfg.folds,
        seed,
    ) {
        Ok(path) => {
            let best = path.best();
            let (tp, fneg) = selection_rates(scn, (&best.kept_continuous, &best.kept_binary));
            rows[idx].tp = Some(tp);
            rows[idx].fn_rate = Some(fneg);
        }
        Err(e) => fail(rows, Some(idx), format!("select: {e}")),
    }
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Summaries per `(scenario, n, reduction)`, in first-appearance order.
pub fn aggregate(rows: &[RepRow], tasks: &[Task]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(usize, usize, usize), Vec<&RepRow>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in rows {
        let key = (
            ScenarioName::ALL
                .iter()
                .position(|&s| s == r.scenario)
                .unwrap_or(0),
            r.n,
            r.reduction as usize,
        );
        if !groups.contains_key(&key) {
            order.push(key);
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let collect = |f: &dyn Fn(&RepRow) -> Option<f64>| {
                g.iter().filter_map(|r| f(r)).collect::<Vec<f64>>()
            };
            let mut est = collect(&|r| r.estimation_error);
            let mut pred = collect(&|r| r.prediction_error);
            let tp = collect(&|r| r.tp);
            let fneg = collect(&|r| r.fn_rate);
            let prop = |f: &dyn Fn(&RepRow) -> Option<bool>| {
                tasks.contains(&Task::Testdim).then(|| {
                    g.iter().filter(|r| f(r) == Some(true)).count() as f64 / g.len() as f64
                })
            };
            AggregateRow {
                scenario: g[0].scenario,
                n: g[0].n,
                reduction: g[0].reduction,
                reps: g.len(),
                failures: g.iter().filter(|r| r.failure.is_some()).count(),
                estimation_mean: mean(&est),
                estimation_median: median(&mut est),
                prediction_mean: mean(&pred),
                prediction_median: median(&mut pred),
                correct_weighted: prop(&|r| r.correct_weighted),
                correct_wald: prop(&|r| r.correct_wald),
                tp_mean: mean(&tp),
                fn_mean: mean(&fneg),
            }
        })
        .collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.reps == 0
        || cfg.sample_sizes.is_empty()
        || cfg.scenarios.is_empty()
        || cfg.tasks.is_empty()
    {
        return Err(crate::error::Error::Invalid(
            "experiment needs scenarios, sizes, tasks and reps".into(),
        ));
    }
    let mut rows = Vec::new();
    for &name in &cfg.scenarios {
        let scn = Scenario::new(name);
        for &n in &cfg.sample_sizes {
            log::info!("{name} n = {n}: {} replicates", cfg.reps);
            for rep in 0..cfg.reps {
                rows.extend(run_rep(&scn, n, rep, rep_seed(cfg.seed, name, n, rep), cfg));
            }
        }
    }
    let aggregates = aggregate(&rows, &cfg.tasks);
    Ok(ExperimentResult {
        config: cfg.clone(),
        rows,
        aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(tasks: Vec<Task>) -> ExperimentConfig {
        ExperimentConfig {
            scenarios: vec![ScenarioName::MixedD1],
            sample_sizes: vec![300],
            reps: 2,
            tasks,
            grids: CvGrids {
                n_lambda: 8,
                lambda_ratio: 1e-3,
                gammas: vec![0.5],
            },
            folds: 3,
            fresh_n: 500,
            ..Default::default()
        }
    }

    #[test]
    fn aggregates_recompute_and_runs_repeat() {
        let cfg = tiny(vec![Task::Estimate, Task::Testdim, Task::Select]);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 4);
        assert_eq!(aggregate(&a.rows, &cfg.tasks), a.aggregates);
        for row in &a.rows {
            assert!(row.failure.is_none(), "{:?}", row.failure);
            assert!(row
                .estimation_error
                .is_some_and(|e| (0.0..=1.0 + 1e-12).contains(&e)));
        }
        let opt = a
            .rows
            .iter()
            .find(|r| r.reduction == ReductionKind::Optimal)
            .unwrap();
        assert!(opt.tp.is_some() && opt.fn_rate.is_some());
    }

    #[test]
    fn rates_from_kept_lists() {
        let scn = Scenario::new(ScenarioName::ContD1);
        let (tp, fneg) = selection_rates(&scn, (&(5..20).collect::<Vec<_>>(), &[]));
        assert!((tp - 0.5).abs() < 1e-15 && fneg == 0.0);
    }

    #[test]
    fn seeds_differ_across_cells() {
        let a = rep_seed(0, ScenarioName::ContD1, 100, 0);
        assert_ne!(a, rep_seed(0, ScenarioName::ContD1, 100, 1));
        assert_ne!(a, rep_seed(0, ScenarioName::ContD2, 100, 0));
        assert_ne!(a, rep_seed(1, ScenarioName::ContD1, 100, 0));
    }
}
