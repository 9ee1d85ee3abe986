use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use mixsdr::asymp::DimensionTestReport;
use mixsdr::estim::{apply_reduction, reduce_dataset, ReductionKind, ReductionModel};
use mixsdr::simbench::{Scenario, ScenarioName};
use mixsdr::Dataset;
use mixsdr_cli::config::DimsSetting;
use mixsdr_cli::output::{read_json, read_matrix, read_vector};
use mixsdr_cli::schema::default_schema;
use mixsdr_cli::{load_dataset, run, write_dataset, Command, DataSchema, ResponseType, RunConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn scenario_data(name: ScenarioName, n: usize, seed: u64) -> Dataset {
    Scenario::new(name)
        .generate(n, &mut ChaCha8Rng::seed_from_u64(seed))
        .unwrap()
}

fn write_data(dir: &Path, file: &str, data: &Dataset) -> (PathBuf, DataSchema) {
    let schema = default_schema(data.p(), data.q(), ResponseType::Categorical);
    let path = dir.join(file);
    write_dataset(fs::File::create(&path).unwrap(), data, &schema).unwrap();
    (path, schema)
}

fn config(dir: &Path, data: &Dataset, out: &str) -> RunConfig {
    let (path, schema) = write_data(dir, "data.csv", data);
    RunConfig {
        data: Some(path),
        schema: Some(schema),
        out: dir.join(out),
        ..RunConfig::default()
    }
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(String::from)
        .collect()
}

fn assert_orthonormal(alpha: &nalgebra::DMatrix<f64>) {
    let gram = alpha.transpose() * alpha;
    let eye = nalgebra::DMatrix::<f64>::identity(alpha.ncols(), alpha.ncols());
    assert!((gram - eye).amax() < 1e-10);
}

#[test]
fn fit_and_reduce_write_basis_of_expected_length() {
    let dir = TempDir::new().unwrap();
    for (name, m) in [(ScenarioName::MixedD1, 75), (ScenarioName::ContD1, 20)] {
        let data = scenario_data(name, 300, 1);
        let mut cfg = config(dir.path(), &data, name.as_str());
        cfg.d = Some(DimsSetting::One(1));
        let fit = run(Command::Fit, &cfg).unwrap();
        assert!(fit.files.iter().any(|f| f.ends_with("fit.json")));
        run(Command::Reduce, &cfg).unwrap();
        let alpha = read_matrix(&cfg.out.join("alpha.csv")).unwrap();
        assert_eq!(alpha.shape(), (m, 1));
        assert_orthonormal(&alpha);
    }
}

#[test]
fn reloaded_basis_reproduces_reduction_bit_for_bit() {
    let dir = TempDir::new().unwrap();
    let data = scenario_data(ScenarioName::MixedD2, 250, 2);
    let mut cfg = config(dir.path(), &data, "out");
    cfg.d = Some(DimsSetting::One(2));
    run(Command::Reduce, &cfg).unwrap();

    let model: ReductionModel = read_json(&cfg.out.join("reduction.json")).unwrap().result;
    let alpha = read_matrix(&cfg.out.join("alpha.csv")).unwrap();
    let center = read_vector(&cfg.out.join("center.csv")).unwrap();
    assert_eq!(alpha, model.alpha);
    assert_eq!(center, model.center);

    let direct = reduce_dataset(&model, &data).unwrap();
    for i in 0..data.n() {
        let x: Vec<f64> = data.x.row(i).iter().cloned().collect();
        let h: Vec<f64> = data.h.row(i).iter().cloned().collect();
        let one = apply_reduction(&model, &x, &h).unwrap();
        let from_files = alpha.transpose() * (model.statistic(&x, &h) - &center);
        assert_eq!(one, direct.row(i).transpose());
        assert_eq!(from_files, one);
    }
    // labels come first in reduced.csv
    let lines = data_lines(&cfg.out.join("reduced.csv"));
    assert_eq!(lines.len(), data.n() + 1);
    for (i, line) in lines[1..].iter().enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .skip(1)
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(vals, direct.row(i).iter().cloned().collect::<Vec<_>>());
    }
}

#[test]
fn outputs_record_config_and_seed() {
    let dir = TempDir::new().unwrap();
    let data = scenario_data(ScenarioName::BinD1, 200, 3);
    let mut cfg = config(dir.path(), &data, "out");
    cfg.d = Some(DimsSetting::One(1));
    cfg.seed = 77;
    run(Command::Reduce, &cfg).unwrap();
    let doc = read_json::<ReductionModel>(&cfg.out.join("reduction.json")).unwrap();
    assert_eq!(doc.meta.config, cfg);
    assert_eq!(doc.meta.seed, 77);
    assert_eq!(doc.meta.tool, "mixsdr");
    let text = fs::read_to_string(cfg.out.join("alpha.csv")).unwrap();
    assert!(text.starts_with("# mixsdr "));
    assert!(text.contains("# seed: 77"));
    assert!(text.contains("\"kind\":\"optimal\""));
}

#[test]
fn testdim_auto_lists_every_rank() {
    let dir = TempDir::new().unwrap();
    let data = scenario_data(ScenarioName::MixedD1, 400, 4);
    let mut cfg = config(dir.path(), &data, "out");
    cfg.auto = true;
    run(Command::Testdim, &cfg).unwrap();
    let report: DimensionTestReport = read_json(&cfg.out.join("testdim.json")).unwrap().result;
    assert_eq!(report.branches.len(), 1);
    let branch = &report.branches[0];
    let top = branch.rows.min(branch.cols);
    let js: Vec<usize> = branch.steps.iter().map(|s| s.j).collect();
    assert_eq!(js, (0..top).collect::<Vec<_>>());
    assert!(branch
        .steps
        .iter()
        .all(|s| s.weighted.is_some() && s.wald.is_some()));
    let table = data_lines(&cfg.out.join("testdim.csv"));
    assert_eq!(table.len(), top + 1);

    run(Command::Reduce, &cfg).unwrap();
    let model: ReductionModel = read_json(&cfg.out.join("reduction.json")).unwrap().result;
    assert_eq!(model.dims, report.selected);
}

#[test]
fn commands_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = scenario_data(ScenarioName::MixedD1, 200, 5);
    let mut cfg = config(dir.path(), &data, "a");
    cfg.d = Some(DimsSetting::One(1));
    cfg.kind = ReductionKind::Suboptimal;
    cfg.d = Some(DimsSetting::Two([1, 1]));
    cfg.grids.n_lambda = 8;
    cfg.grids.gammas = vec![0.0, 1.0];
    cfg.folds = 3;
    cfg.seed = 11;
    let mut other = cfg.clone();
    other.out = dir.path().join("b");
    for command in [Command::Select, Command::Predict] {
        run(command, &cfg).unwrap();
        run(command, &other).unwrap();
    }
    for file in ["alpha.csv", "reduced.csv", "predictions.csv"] {
        assert_eq!(
            data_lines(&cfg.out.join(file)),
            data_lines(&other.out.join(file)),
            "{file}"
        );
    }
    let a: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cfg.out.join("regpath.json")).unwrap()).unwrap();
    let b: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(other.out.join("regpath.json")).unwrap()).unwrap();
    assert_eq!(a["result"], b["result"]);
}

#[test]
fn select_rejects_mismatched_penalty() {
    let dir = TempDir::new().unwrap();
    let data = scenario_data(ScenarioName::BinD1, 100, 6);
    let mut cfg = config(dir.path(), &data, "out");
    cfg.kind = ReductionKind::BinaryOnly;
    cfg.d = Some(DimsSetting::One(1));
    cfg.penalty = Some(mixsdr::sparse::PenaltyKind::ContinuousRows);
    let err = run(Command::Select, &cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn config_file_paths_are_relative_to_the_file() {
    let dir = TempDir::new().unwrap();
    let data = scenario_data(ScenarioName::ContD1, 120, 7);
    let (_, schema) = write_data(dir.path(), "train.csv", &data);
    fs::write(
        dir.path().join("schema.toml"),
        toml::to_string(&schema).unwrap(),
    )
    .unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "data = \"train.csv\"\nschema_file = \"schema.toml\"\nkind = \"pfc\"\nd = 1\n",
    )
    .unwrap();
    let cfg = RunConfig::from_file(&dir.path().join("run.toml")).unwrap();
    let loaded = load_dataset(cfg.data_path().unwrap(), &cfg.resolve_schema().unwrap()).unwrap();
    assert_eq!(loaded, data);
}

fn binary() -> Process {
    Process::new(env!("CARGO_BIN_EXE_mixsdr"))
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let data = scenario_data(ScenarioName::MixedD1, 150, 8);
    let (path, schema) = write_data(dir.path(), "data.csv", &data);
    let schema_path = dir.path().join("schema.toml");
    fs::write(&schema_path, toml::to_string(&schema).unwrap()).unwrap();

    let ok = binary()
        .args(["reduce", "--d", "1", "--out"])
        .arg(dir.path().join("out"))
        .arg("--data")
        .arg(&path)
        .arg("--schema")
        .arg(&schema_path)
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(String::from_utf8_lossy(&ok.stdout).contains("alpha.csv"));

    // a binary column holding 2
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[3].split(',').map(String::from).collect();
    let last = cells.len() - 1;
    cells[last] = "2".into();
    lines[3] = cells.join(",");
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, lines.join("\n")).unwrap();
    let out = binary()
        .args(["fit", "--data"])
        .arg(&bad)
        .arg("--schema")
        .arg(&schema_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("row 3") && msg.contains("h10"), "{msg}");

    // a constant binary column defeats the Ising fit
    let mut flat = data.clone();
    flat.h.column_mut(0).fill(1.0);
    let (flat_path, _) = write_data(dir.path(), "flat.csv", &flat);
    let out = binary()
        .args(["reduce", "--d", "1", "--data"])
        .arg(&flat_path)
        .arg("--schema")
        .arg(&schema_path)
        .arg("--out")
        .arg(dir.path().join("flat"))
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = binary()
        .args(["testdim", "--kind", "sideways"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
