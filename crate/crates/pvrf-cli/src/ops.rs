//! Subcommand implementations.
//!
//! Each function resolves its parameters (explicit flags first, then the
//! config overlay, then defaults), runs the corresponding library
//! pipeline, and writes artifacts plus metadata sidecars.  Anything that
//! is required but missing after the merge is a usage error.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use pvrf::baselines::{fit_reference, ReferenceSpec};
use pvrf::data::{load_csv, schema_of, write_csv, Schema, SurvivalDataset};
use pvrf::effects::individual_contrasts;
use pvrf::error::Result;
use pvrf::evaluate::{cv_contrast, cv_wrss, pfi, shapley_base, shapley_mc, MetricReport};
use pvrf::km::censoring_curve;
use pvrf::pipeline::{fit_model, FitSettings, FittedModel, ModelKind, MtryPolicy};
use pvrf::predictor::RmstPredictor;
use pvrf::pseudo::pseudo_values_fast;
use pvrf::rng::{stream, stream_rng};
use pvrf::simulate::{
    aggregate_study, calibrate_scenario, default_scenarios, replicate_pair, run_study,
    write_aggregate_csv, write_study_csv, StudySettings,
};

use crate::config::Overlay;
use crate::meta::write_sidecar;
use crate::subgroup::{subgroup_summary, GroupRule};
use crate::{usage, CResult, CliError, DataArgs, FitKnobs};

fn need<T>(value: Option<T>, flag: &str) -> CResult<T> {
    value.ok_or_else(|| usage(format!("{flag} is required")))
}

fn out_path(cli: &Option<PathBuf>, overlay: &Overlay) -> CResult<PathBuf> {
    need(
        cli.clone().or(overlay.string("out")?.map(PathBuf::from)),
        "--out",
    )
}

/// A loaded dataset along with the paths it came from (for sidecar
/// hashing).
struct LoadedData {
    dataset: SurvivalDataset,
    data_path: PathBuf,
    schema_path: PathBuf,
    drop_incomplete: bool,
}

impl LoadedData {
    fn inputs(&self) -> Vec<&Path> {
        vec![&self.data_path, &self.schema_path]
    }
}

fn load_data(args: &DataArgs, overlay: &Overlay) -> CResult<LoadedData> {
    let data_path = need(
        args.data.clone().or(overlay.string("data")?.map(PathBuf::from)),
        "--data",
    )?;
    let schema_path = need(
        args.schema
            .clone()
            .or(overlay.string("schema")?.map(PathBuf::from)),
        "--schema",
    )?;
    let drop_incomplete =
        args.drop_incomplete || overlay.bool("drop-incomplete")?.unwrap_or(false);
    let schema = Schema::from_file(&schema_path)?;
    let dataset = load_csv(&data_path, &schema, drop_incomplete)?;
    Ok(LoadedData {
        dataset,
        data_path,
        schema_path,
        drop_incomplete,
    })
}

fn resolve_tau(cli: Option<f64>, overlay: &Overlay) -> CResult<f64> {
    need(cli.or(overlay.f64("tau")?), "--tau")
}

fn parse_mtry(text: &str) -> CResult<MtryPolicy> {
    if text == "auto" {
        return Ok(MtryPolicy::Default);
    }
    if text == "tune" {
        return Ok(MtryPolicy::Tune { folds: 5 });
    }
    if let Some(folds) = text.strip_prefix("tune:") {
        let folds: usize = folds
            .parse()
            .map_err(|_| usage(format!("--mtry tune:K needs an integer K, got {text:?}")))?;
        return Ok(MtryPolicy::Tune { folds });
    }
    let fixed: usize = text.parse().map_err(|_| {
        usage(format!(
            "--mtry must be \"auto\", \"tune\", \"tune:K\", or a number, got {text:?}"
        ))
    })?;
    Ok(MtryPolicy::Fixed(fixed))
}

impl FitKnobs {
    fn resolve(&self, overlay: &Overlay) -> CResult<FitSettings> {
        let defaults = FitSettings::default();
        let mtry = match self.mtry.clone().or(overlay.string("mtry")?) {
            Some(text) => parse_mtry(&text)?,
            None => defaults.mtry,
        };
        Ok(FitSettings {
            n_trees: self
                .n_trees
                .or(overlay.usize("n-trees")?)
                .unwrap_or(defaults.n_trees),
            subsample_fraction: self
                .subsample
                .or(overlay.f64("subsample")?)
                .unwrap_or(defaults.subsample_fraction),
            n_permutations: self
                .permutations
                .or(overlay.usize("permutations")?)
                .unwrap_or(defaults.n_permutations),
            mtry,
        })
    }
}

fn parse_model_kind(label: &str) -> CResult<ModelKind> {
    ModelKind::parse(label).map_err(|e| usage(e.to_string()))
}

/// Write a long-format CSV with the fixed (entity, metric, fold, value)
/// header.
fn write_long_csv(path: &Path, rows: &[[String; 4]]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["entity", "metric", "fold", "value"])?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn metric_rows(entity: &str, report: &MetricReport, rows: &mut Vec<[String; 4]>) {
    for (fold, value) in report.fold_values.iter().enumerate() {
        rows.push([
            entity.to_string(),
            report.metric.clone(),
            fold.to_string(),
            format!("{value}"),
        ]);
    }
    rows.push([
        entity.to_string(),
        report.metric.clone(),
        String::from("mean"),
        format!("{}", report.mean),
    ]);
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Serialize)]
struct SimulateParams {
    scenarios: Vec<u8>,
    censoring_percent: Vec<u8>,
    reps: u64,
    n: usize,
    calibration_n: usize,
}

fn resolve_scenarios(cli: &[u8], overlay: &Overlay, key: &str) -> CResult<Vec<u8>> {
    let mut ids: Vec<u8> = if cli.is_empty() {
        overlay
            .u64s(key)?
            .map(|v| v.iter().map(|&x| x as u8).collect())
            .unwrap_or_else(|| vec![1, 2, 3, 4])
    } else {
        cli.to_vec()
    };
    ids.sort_unstable();
    ids.dedup();
    if ids.iter().any(|&s| !(1..=4).contains(&s)) {
        return Err(usage("--scenario values must be between 1 and 4"));
    }
    Ok(ids)
}

fn resolve_censoring(cli: &[u8], overlay: &Overlay) -> CResult<Vec<u8>> {
    let mut percents: Vec<u8> = if cli.is_empty() {
        overlay
            .u64s("censoring")?
            .map(|v| v.iter().map(|&x| x as u8).collect())
            .unwrap_or_else(|| vec![25, 50, 75])
    } else {
        cli.to_vec()
    };
    percents.sort_unstable();
    percents.dedup();
    if percents.iter().any(|&p| !(1..=99).contains(&p)) {
        return Err(usage(
            "--censoring percentages must lie strictly between 0 and 100",
        ));
    }
    Ok(percents)
}

pub fn simulate(args: &super::SimulateArgs, overlay: &Overlay, seed: u64) -> CResult<()> {
    let scenarios = resolve_scenarios(&args.scenario, overlay, "scenario")?;
    let censoring = resolve_censoring(&args.censoring, overlay)?;
    let reps = args.reps.or(overlay.u64("reps")?).unwrap_or(1);
    let n = args.n.or(overlay.usize("n")?).unwrap_or(1000);
    let calibration_n = args
        .calibration_n
        .or(overlay.usize("calibration-n")?)
        .unwrap_or(100_000);
    let out = out_path(&args.out, overlay)?;
    std::fs::create_dir_all(&out).map_err(pvrf::error::Error::from)?;
    let params = SimulateParams {
        scenarios: scenarios.clone(),
        censoring_percent: censoring.clone(),
        reps,
        n,
        calibration_n,
    };

    let all = default_scenarios(seed);
    let mut arms: Vec<[String; 9]> = Vec::new();
    let mut schema_written = false;
    for &id in &scenarios {
        let base = all.iter().find(|s| s.id == id).expect("ids are 1-4");
        for &pct in &censoring {
            let spec = calibrate_scenario(base, f64::from(pct) / 100.0, calibration_n)?;
            arms.push([
                id.to_string(),
                format!("{}", spec.target_censoring),
                format!("{}", spec.censoring.lambda),
                format!("{}", spec.treatment.t0),
                format!("{}", spec.tau_grid[0]),
                format!("{}", spec.tau_grid[1]),
                format!("{}", spec.tau_grid[2]),
                format!("{}", spec.tau_grid[3]),
                format!("{}", spec.tau_grid[4]),
            ]);
            for rep in 0..reps {
                let (train, test) = replicate_pair(&spec, rep, n)?;
                if !schema_written {
                    let schema_path = out.join("schema.json");
                    let schema = schema_of(&train.data);
                    let mut text = serde_json::to_string_pretty(&schema)
                        .map_err(pvrf::error::Error::from)?;
                    text.push('\n');
                    std::fs::write(&schema_path, text).map_err(pvrf::error::Error::from)?;
                    write_sidecar(&schema_path, "simulate", seed, &params, &[])?;
                    schema_written = true;
                }
                let stem = format!("scenario{id}_cens{pct}_rep{rep}");
                for (role, sim) in [("train", &train), ("test", &test)] {
                    let path = out.join(format!("{stem}_{role}.csv"));
                    write_csv(&sim.data, &path)?;
                    write_sidecar(&path, "simulate", seed, &params, &[])?;
                }
                let truth_path = out.join(format!("{stem}_truth.csv"));
                write_truth_csv(&truth_path, &spec.tau_grid, &train, &test)?;
                write_sidecar(&truth_path, "simulate", seed, &params, &[])?;
            }
        }
    }
    let arms_path = out.join("arms.csv");
    let mut writer = csv::Writer::from_path(&arms_path).map_err(pvrf::error::Error::from)?;
    writer
        .write_record([
            "scenario",
            "censoring",
            "lambda_c",
            "t0",
            "q50",
            "q60",
            "q70",
            "q80",
            "q90",
        ])
        .map_err(pvrf::error::Error::from)?;
    for arm in &arms {
        writer.write_record(arm).map_err(pvrf::error::Error::from)?;
    }
    writer.flush().map_err(pvrf::error::Error::from)?;
    write_sidecar(&arms_path, "simulate", seed, &params, &[])?;
    Ok(())
}

fn write_truth_csv(
    path: &Path,
    tau_grid: &[f64],
    train: &pvrf::simulate::SimulatedDataset,
    test: &pvrf::simulate::SimulatedDataset,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["split", "id", "tau_label", "tau", "true_rmst", "true_contrast"])?;
    for (split, sim) in [("train", train), ("test", test)] {
        for (k, &tau) in tau_grid.iter().enumerate() {
            for i in 0..sim.data.n() {
                writer.write_record([
                    split.to_string(),
                    sim.data.ids[i].clone(),
                    format!("q{}", 50 + 10 * k),
                    format!("{tau}"),
                    format!("{}", sim.true_rmst[k][i]),
                    format!("{}", sim.true_contrast[k][i]),
                ])?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// pseudo

#[derive(Serialize)]
struct PseudoParams {
    data: String,
    schema: String,
    drop_incomplete: bool,
    tau: f64,
}

pub fn pseudo(args: &super::PseudoArgs, overlay: &Overlay, seed: u64) -> CResult<()> {
    let loaded = load_data(&args.data, overlay)?;
    let tau = resolve_tau(args.tau, overlay)?;
    let out = out_path(&args.out, overlay)?;
    let values = pseudo_values_fast(&loaded.dataset, tau)?;
    let mut writer = csv::Writer::from_path(&out).map_err(pvrf::error::Error::from)?;
    writer
        .write_record(["id", "tau", "pseudo_value"])
        .map_err(pvrf::error::Error::from)?;
    for (id, value) in loaded.dataset.ids.iter().zip(&values.values) {
        writer
            .write_record([id.clone(), format!("{tau}"), format!("{value}")])
            .map_err(pvrf::error::Error::from)?;
    }
    writer.flush().map_err(pvrf::error::Error::from)?;
    let params = PseudoParams {
        data: loaded.data_path.display().to_string(),
        schema: loaded.schema_path.display().to_string(),
        drop_incomplete: loaded.drop_incomplete,
        tau,
    };
    write_sidecar(&out, "pseudo", seed, &params, &loaded.inputs())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// fit

#[derive(Serialize)]
struct FitParams {
    data: String,
    schema: String,
    drop_incomplete: bool,
    tau: f64,
    model: String,
    settings: FitSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_spec: Option<ReferenceSpec>,
}

pub fn fit(args: &super::FitArgs, overlay: &Overlay, seed: u64) -> CResult<()> {
    let model_label = args.model.clone().or(overlay.string("model")?);
    let algorithm = args.algorithm.clone().or(overlay.string("algorithm")?);
    let label = match (model_label, algorithm) {
        (Some(m), None) => m,
        (None, Some(a)) => match a.as_str() {
            "cart" => String::from("forest-cart"),
            "conditional" => String::from("forest-cond"),
            other => {
                return Err(usage(format!(
                    "--algorithm must be \"cart\" or \"conditional\", got {other:?}"
                )))
            }
        },
        (Some(m), Some(a)) => {
            let consistent = (m == "forest-cart" && a == "cart")
                || (m == "forest-cond" && a == "conditional");
            if !consistent {
                return Err(usage(format!(
                    "--model {m:?} conflicts with --algorithm {a:?}"
                )));
            }
            m
        }
        (None, None) => return Err(usage("--model (or --algorithm) is required")),
    };
    let loaded = load_data(&args.data, overlay)?;
    let tau = resolve_tau(args.tau, overlay)?;
    let settings = args.knobs.resolve(overlay)?;
    let out = out_path(&args.out, overlay)?;

    let mut reference_spec = None;
    let mut reference_spec_path: Option<PathBuf> = None;
    let model = if label == "reference" {
        let spec_path = need(
            args.reference_spec
                .clone()
                .or(overlay.string("reference-spec")?.map(PathBuf::from)),
            "--reference-spec (with --model reference)",
        )?;
        let text = std::fs::read_to_string(&spec_path).map_err(pvrf::error::Error::from)?;
        let spec: ReferenceSpec =
            serde_json::from_str(&text).map_err(pvrf::error::Error::from)?;
        let fitted = fit_reference(&loaded.dataset, &spec)?;
        reference_spec = Some(spec);
        reference_spec_path = Some(spec_path);
        FittedModel::Reference(fitted)
    } else {
        let kind = parse_model_kind(&label)?;
        fit_model(kind, &loaded.dataset, tau, &settings, seed)?
    };
    model.save(&out)?;
    let mut inputs = loaded.inputs();
    if let Some(path) = &reference_spec_path {
        inputs.push(path);
    }
    let params = FitParams {
        data: loaded.data_path.display().to_string(),
        schema: loaded.schema_path.display().to_string(),
        drop_incomplete: loaded.drop_incomplete,
        tau,
        model: label,
        settings,
        reference_spec,
    };
    write_sidecar(&out, "fit", seed, &params, &inputs)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// predict

#[derive(Serialize)]
struct PredictParams {
    data: String,
    schema: String,
    drop_incomplete: bool,
    model_file: String,
    model: String,
    tau: f64,
}

pub fn predict(args: &super::PredictArgs, overlay: &Overlay, seed: u64) -> CResult<()> {
    let model_path = need(
        args.model
            .clone()
            .or(overlay.string("model")?.map(PathBuf::from)),
        "--model",
    )?;
    let model = FittedModel::load(&model_path)?;
    let loaded = load_data(&args.data, overlay)?;
    let tau = resolve_tau(args.tau, overlay)?;
    let out = out_path(&args.out, overlay)?;
    let predictions = model.predict_rmst(&loaded.dataset.covariates, tau)?;
    let mut writer = csv::Writer::from_path(&out).map_err(pvrf::error::Error::from)?;
    writer
        .write_record(["id", "tau", "rmst"])
        .map_err(pvrf::error::Error::from)?;
    for (id, value) in loaded.dataset.ids.iter().zip(&predictions) {
        writer
            .write_record([id.clone(), format!("{tau}"), format!("{value}")])
            .map_err(pvrf::error::Error::from)?;
    }
    writer.flush().map_err(pvrf::error::Error::from)?;
    let params = PredictParams {
        data: loaded.data_path.display().to_string(),
        schema: loaded.schema_path.display().to_string(),
        drop_incomplete: loaded.drop_incomplete,
        model_file: model_path.display().to_string(),
        model: model.label().to_string(),
        tau,
    };
    let mut inputs = loaded.inputs();
    inputs.push(&model_path);
    write_sidecar(&out, "predict", seed, &params, &inputs)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// contrast

#[derive(Serialize)]
struct ContrastParams {
    data: String,
    schema: String,
    drop_incomplete: bool,
    model_file: String,
    model: String,
    tau: f64,
    treatment: String,
    level_a: String,
    level_b: String,
}

pub fn contrast(args: &super::ContrastArgs, overlay: &Overlay, seed: u64) -> CResult<()> {
    let model_path = need(
        args.model
            .clone()
            .or(overlay.string("model")?.map(PathBuf::from)),
        "--model",
    )?;
    let model = FittedModel::load(&model_path)?;
    let loaded = load_data(&args.data, overlay)?;
    let tau = resolve_tau(args.tau, overlay)?;
    let treatment = need(
        args.treatment_col
            .clone()
            .or(overlay.string("treatment-col")?)
            .or_else(|| loaded.dataset.treatment_name().map(String::from)),
        "--treatment-col (no treatment column declared in the schema)",
    )?;
    let level_a = need(
        args.level_a.clone().or(overlay.string("level-a")?),
        "--level-a",
    )?;
    let level_b = need(
        args.level_b.clone().or(overlay.string("level-b")?),
        "--level-b",
    )?;
    let out = out_path(&args.out, overlay)?;
    let result = individual_contrasts(
        &model,
        &loaded.dataset.covariates,
        &treatment,
        &level_a,
        &level_b,
        tau,
    )?;
    let individual: Vec<serde_json::Value> = loaded
        .dataset
        .ids
        .iter()
        .zip(&result.individual)
        .map(|(id, value)| serde_json::json!({"id": id, "value": value}))
        .collect();
    let body = serde_json::json!({
        "tau": tau,
        "treatment": treatment,
        "level_a": level_a,
        "level_b": level_b,
        "n": result.individual.len(),
        "average": result.average,
        "individual": individual,
    });
    let mut text = serde_json::to_string_pretty(&body).map_err(pvrf::error::Error::from)?;
    text.push('\n');
    std::fs::write(&out, text).map_err(pvrf::error::Error::from)?;
    let params = ContrastParams {
        data: loaded.data_path.display().to_string(),
        schema: loaded.schema_path.display().to_string(),
        drop_incomplete: loaded.drop_incomplete,
        model_file: model_path.display().to_string(),
        model: model.label().to_string(),
        tau,
        treatment,
        level_a,
        level_b,
    };
    let mut inputs = loaded.inputs();
    inputs.push(&model_path);
    write_sidecar(&out, "contrast", seed, &params, &inputs)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Serialize)]
struct EvaluateParams {
    data: String,
    schema: String,
    drop_incomplete: bool,
    model: String,
    tau: f64,
    folds: usize,
    settings: FitSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    level_a: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    level_b: Option<String>,
}

pub fn evaluate(args: &super::EvaluateArgs, overlay: &Overlay, seed: u64) -> CResult<()> {
    let label = need(args.model.clone().or(overlay.string("model")?), "--model")?;
    let kind = parse_model_kind(&label)?;
    let loaded = load_data(&args.data, overlay)?;
    let tau = resolve_tau(args.tau, overlay)?;
    let folds = args.folds.or(overlay.usize("folds")?).unwrap_or(5);
    let settings = args.knobs.resolve(overlay)?;
    let level_a = args.level_a.clone().or(overlay.string("level-a")?);
    let level_b = args.level_b.clone().or(overlay.string("level-b")?);
    if level_a.is_some() != level_b.is_some() {
        return Err(usage("--level-a and --level-b must be given together"));
    }
    let out = out_path(&args.out, overlay)?;

    let mut rows = Vec::new();
    let wrss = cv_wrss(&loaded.dataset, kind, &settings, folds, tau, seed)?;
    metric_rows(&label, &wrss, &mut rows);
    if let (Some(a), Some(b)) = (&level_a, &level_b) {
        let contrast = cv_contrast(&loaded.dataset, kind, &settings, folds, tau, a, b, seed)?;
        metric_rows(&label, &contrast, &mut rows);
    }
    write_long_csv(&out, &rows)?;
    let params = EvaluateParams {
        data: loaded.data_path.display().to_string(),
        schema: loaded.schema_path.display().to_string(),
        drop_incomplete: loaded.drop_incomplete,
        model: label,
        tau,
        folds,
        settings,
        level_a,
        level_b,
    };
    write_sidecar(&out, "evaluate", seed, &params, &loaded.inputs())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// importance / shapley: a model either loaded from disk or fitted in place

enum ModelSource {
    File(PathBuf),
    Kind(String),
}

fn resolve_model_source(
    file: &Option<PathBuf>,
    kind: &Option<String>,
    overlay: &Overlay,
) -> CResult<ModelSource> {
    let file = file.clone().or(overlay.string("model")?.map(PathBuf::from));
    let kind = kind.clone().or(overlay.string("model-kind")?);
    match (file, kind) {
        (Some(f), None) => Ok(ModelSource::File(f)),
        (None, Some(k)) => Ok(ModelSource::Kind(k)),
        (Some(_), Some(_)) => Err(usage("--model and --model-kind are mutually exclusive")),
        (None, None) => Err(usage("either --model or --model-kind is required")),
    }
}

impl ModelSource {
    fn materialize(
        &self,
        data: &SurvivalDataset,
        tau: f64,
        settings: &FitSettings,
        seed: u64,
    ) -> CResult<(FittedModel, Option<PathBuf>)> {
        match self {
            ModelSource::File(path) => Ok((FittedModel::load(path)?, Some(path.clone()))),
            ModelSource::Kind(label) => {
                let kind = parse_model_kind(label)?;
                Ok((fit_model(kind, data, tau, settings, seed)?, None))
            }
        }
    }
}

#[derive(Serialize)]
struct ImportanceParams {
    data: String,
    schema: String,
    drop_incomplete: bool,
    model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_file: Option<String>,
    tau: f64,
    settings: FitSettings,
}

pub fn importance(args: &super::ImportanceArgs, overlay: &Overlay, seed: u64) -> CResult<()> {
    let source = resolve_model_source(&args.model, &args.model_kind, overlay)?;
    let loaded = load_data(&args.data, overlay)?;
    let tau = resolve_tau(args.tau, overlay)?;
    let settings = args.knobs.resolve(overlay)?;
    let out = out_path(&args.out, overlay)?;
    let (model, model_file) = source.materialize(&loaded.dataset, tau, &settings, seed)?;
    let g = censoring_curve(&loaded.dataset)?;
    let mut rng = stream_rng(seed, &[stream::IMPORTANCE]);
    let ratios = pfi(&model, &loaded.dataset, tau, &g, &mut rng)?;
    let rows: Vec<[String; 4]> = loaded
        .dataset
        .covariates
        .columns()
        .iter()
        .zip(&ratios)
        .map(|(column, ratio)| {
            [
                column.name.clone(),
                String::from("pfi"),
                String::from("-"),
                format!("{ratio}"),
            ]
        })
        .collect();
    write_long_csv(&out, &rows)?;
    let params = ImportanceParams {
        data: loaded.data_path.display().to_string(),
        schema: loaded.schema_path.display().to_string(),
        drop_incomplete: loaded.drop_incomplete,
        model: model.label().to_string(),
        model_file: model_file.as_ref().map(|p| p.display().to_string()),
        tau,
        settings,
    };
    let mut inputs = loaded.inputs();
    if let Some(path) = &model_file {
        inputs.push(path);
    }
    write_sidecar(&out, "importance", seed, &params, &inputs)?;
    Ok(())
}

#[derive(Serialize)]
struct ShapleyParams {
    data: String,
    schema: String,
    drop_incomplete: bool,
    model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_file: Option<String>,
    tau: f64,
    rows: Vec<usize>,
    background_size: usize,
    draws: usize,
    settings: FitSettings,
}

fn parse_rows(text: Option<String>, n: usize) -> CResult<Vec<usize>> {
    match text.as_deref() {
        None | Some("all") => Ok((0..n).collect()),
        Some(list) => {
            let mut rows = Vec::new();
            for part in list.split(',') {
                let row: usize = part.trim().parse().map_err(|_| {
                    usage(format!("--rows must be \"all\" or comma-separated indices, got {part:?}"))
                })?;
                if row >= n {
                    return Err(usage(format!(
                        "--rows index {row} out of range for {n} rows"
                    )));
                }
                rows.push(row);
            }
            Ok(rows)
        }
    }
}

pub fn shapley(args: &super::ShapleyArgs, overlay: &Overlay, seed: u64) -> CResult<()> {
    let source = resolve_model_source(&args.model, &args.model_kind, overlay)?;
    let loaded = load_data(&args.data, overlay)?;
    let tau = resolve_tau(args.tau, overlay)?;
    let settings = args.knobs.resolve(overlay)?;
    let background_size = args
        .background_size
        .or(overlay.usize("background-size")?)
        .unwrap_or(100);
    let draws = args.draws.or(overlay.usize("draws")?).unwrap_or(200);
    let rows = parse_rows(
        args.rows.clone().or(overlay.string("rows")?),
        loaded.dataset.n(),
    )?;
    let out = out_path(&args.out, overlay)?;
    let (model, model_file) = source.materialize(&loaded.dataset, tau, &settings, seed)?;

    // Background: the whole sample when it is small enough, otherwise a
    // seed-derived subsample (sorted, so the artifact is stable).
    let n = loaded.dataset.n();
    let background = if n <= background_size {
        loaded.dataset.covariates.clone()
    } else {
        let mut rng = stream_rng(seed, &[stream::SHAPLEY, 0]);
        let mut picked = rand::seq::index::sample(&mut rng, n, background_size).into_vec();
        picked.sort_unstable();
        loaded.dataset.covariates.select_rows(&picked)
    };
    let base = shapley_base(&model, &background, tau)?;

    let contributions: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|&row| {
            let mut rng = stream_rng(seed, &[stream::SHAPLEY, 1 + row as u64]);
            shapley_mc(
                &model,
                &loaded.dataset.covariates,
                row,
                &background,
                draws,
                tau,
                &mut rng,
            )
        })
        .collect::<Result<_>>()?;

    let mut out_rows = vec![[
        String::from("(base)"),
        String::from("shapley-base"),
        String::from("-"),
        format!("{base}"),
    ]];
    for (&row, phi) in rows.iter().zip(&contributions) {
        for (column, value) in loaded.dataset.covariates.columns().iter().zip(phi) {
            out_rows.push([
                column.name.clone(),
                String::from("shapley"),
                row.to_string(),
                format!("{value}"),
            ]);
        }
    }
    write_long_csv(&out, &out_rows)?;
    let params = ShapleyParams {
        data: loaded.data_path.display().to_string(),
        schema: loaded.schema_path.display().to_string(),
        drop_incomplete: loaded.drop_incomplete,
        model: model.label().to_string(),
        model_file: model_file.as_ref().map(|p| p.display().to_string()),
        tau,
        rows,
        background_size,
        draws,
        settings,
    };
    let mut inputs = loaded.inputs();
    if let Some(path) = &model_file {
        inputs.push(path);
    }
    write_sidecar(&out, "shapley", seed, &params, &inputs)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// subgroup

#[derive(Serialize)]
struct SubgroupParams {
    predictions: String,
    data: String,
    schema: String,
    drop_incomplete: bool,
    groups: Vec<String>,
}

pub fn subgroup_cmd(args: &super::SubgroupArgs, overlay: &Overlay, seed: u64) -> CResult<()> {
    let predictions_path = need(
        args.predictions
            .clone()
            .or(overlay.string("predictions")?.map(PathBuf::from)),
        "--predictions",
    )?;
    let loaded = load_data(&args.data, overlay)?;
    let group_texts: Vec<String> = if args.group.is_empty() {
        overlay.strings("group")?.unwrap_or_default()
    } else {
        args.group.clone()
    };
    if group_texts.is_empty() {
        return Err(usage("at least one --group rule is required"));
    }
    let rules: Vec<GroupRule> = group_texts
        .iter()
        .map(|text| GroupRule::parse(text).map_err(CliError::from))
        .collect::<CResult<_>>()?;
    let out = out_path(&args.out, overlay)?;

    let values = read_predictions(&predictions_path, &loaded.dataset)?;
    let summaries = subgroup_summary(&values, &loaded.dataset.covariates, &rules)?;
    let mut writer = csv::Writer::from_path(&out).map_err(pvrf::error::Error::from)?;
    writer
        .write_record(["group", "count", "mean", "sd"])
        .map_err(pvrf::error::Error::from)?;
    for s in &summaries {
        writer
            .write_record([
                s.label.clone(),
                s.count.to_string(),
                s.mean.map(|m| format!("{m}")).unwrap_or_default(),
                s.sd.map(|m| format!("{m}")).unwrap_or_default(),
            ])
            .map_err(pvrf::error::Error::from)?;
    }
    writer.flush().map_err(pvrf::error::Error::from)?;
    let params = SubgroupParams {
        predictions: predictions_path.display().to_string(),
        data: loaded.data_path.display().to_string(),
        schema: loaded.schema_path.display().to_string(),
        drop_incomplete: loaded.drop_incomplete,
        groups: group_texts,
    };
    let mut inputs = loaded.inputs();
    inputs.push(&predictions_path);
    write_sidecar(&out, "subgroup", seed, &params, &inputs)?;
    Ok(())
}

/// Read a `predict` output and align its values to the dataset's rows by
/// id (the file may be in any order but must cover the rows exactly).
fn read_predictions(path: &Path, dataset: &SurvivalDataset) -> CResult<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(pvrf::error::Error::from)?;
    let headers = reader.headers().map_err(pvrf::error::Error::from)?.clone();
    let id_col = headers.iter().position(|h| h == "id").ok_or_else(|| {
        CliError::Lib(pvrf::error::Error::MissingColumn {
            name: String::from("id"),
        })
    })?;
    let value_col = headers.iter().position(|h| h == "rmst").ok_or_else(|| {
        CliError::Lib(pvrf::error::Error::MissingColumn {
            name: String::from("rmst"),
        })
    })?;
    let index: std::collections::HashMap<&str, usize> = dataset
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut values = vec![f64::NAN; dataset.n()];
    let mut seen = vec![false; dataset.n()];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(pvrf::error::Error::from)?;
        let id = &record[id_col];
        let row = *index.get(id).ok_or_else(|| {
            CliError::Lib(pvrf::error::Error::InvalidRequest(format!(
                "prediction id {id:?} does not appear in the dataset"
            )))
        })?;
        if seen[row] {
            return Err(CliError::Lib(pvrf::error::Error::InvalidRequest(format!(
                "prediction id {id:?} appears more than once"
            ))));
        }
        let value: f64 = record[value_col].parse().map_err(|_| {
            CliError::Lib(pvrf::error::Error::BadValue {
                row: line + 1,
                column: String::from("rmst"),
                value: record[value_col].to_string(),
                expected: "number",
            })
        })?;
        values[row] = value;
        seen[row] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(CliError::Lib(pvrf::error::Error::InvalidRequest(format!(
            "predictions cover {} of {} rows (first missing id {:?})",
            seen.iter().filter(|&&s| s).count(),
            dataset.n(),
            dataset.ids[missing]
        ))));
    }
    Ok(values)
}

// ---------------------------------------------------------------------------
// study

#[derive(Serialize)]
struct StudyParams {
    scenarios: Vec<u8>,
    censoring_percent: Vec<u8>,
    reps: usize,
    n: usize,
    methods: Vec<String>,
    include_reference: bool,
    calibration_n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_subset: Option<Vec<usize>>,
    settings: FitSettings,
}

pub fn study(args: &super::StudyArgs, overlay: &Overlay, seed: u64) -> CResult<()> {
    let scenarios = resolve_scenarios(&args.scenario, overlay, "scenario")?;
    let censoring = resolve_censoring(&args.censoring, overlay)?;
    let reps = args.reps.or(overlay.usize("reps")?).unwrap_or(100);
    let n = args.n.or(overlay.usize("n")?).unwrap_or(1000);
    let calibration_n = args
        .calibration_n
        .or(overlay.usize("calibration-n")?)
        .unwrap_or(100_000);
    let settings_fit = args.knobs.resolve(overlay)?;
    let methods: Vec<ModelKind> = match args.methods.clone().or(overlay.string("methods")?) {
        Some(list) => list
            .split(',')
            .map(|label| parse_model_kind(label.trim()))
            .collect::<CResult<_>>()?,
        None => StudySettings::default().methods,
    };
    let include_reference =
        !(args.no_reference || overlay.bool("no-reference")?.unwrap_or(false));
    let tau_subset = match args.tau_subset.clone().or(overlay.string("tau-subset")?) {
        Some(list) => Some(
            list.split(',')
                .map(|part| {
                    part.trim().parse::<usize>().map_err(|_| {
                        usage(format!("--tau-subset expects indices 0-4, got {part:?}"))
                    })
                })
                .collect::<CResult<Vec<_>>>()?,
        ),
        None => None,
    };
    let out = out_path(&args.out, overlay)?;
    std::fs::create_dir_all(&out).map_err(pvrf::error::Error::from)?;

    let settings = StudySettings {
        reps,
        n,
        methods: methods.clone(),
        include_reference,
        fit: settings_fit.clone(),
        calibration_n,
        tau_subset: tau_subset.clone(),
    };
    let all = default_scenarios(seed);
    let bases: Vec<_> = all
        .into_iter()
        .filter(|s| scenarios.contains(&s.id))
        .collect();
    let levels: Vec<f64> = censoring.iter().map(|&p| f64::from(p) / 100.0).collect();
    let rows = run_study(&bases, &levels, &settings)?;
    let aggregates = aggregate_study(&rows);

    let params = StudyParams {
        scenarios,
        censoring_percent: censoring,
        reps,
        n,
        methods: methods.iter().map(|m| m.label().to_string()).collect(),
        include_reference,
        calibration_n,
        tau_subset,
        settings: settings_fit,
    };
    let rows_path = out.join("study_rows.csv");
    write_study_csv(&rows, &rows_path)?;
    write_sidecar(&rows_path, "study", seed, &params, &[])?;
    let summary_path = out.join("study_summary.csv");
    write_aggregate_csv(&aggregates, &summary_path)?;
    write_sidecar(&summary_path, "study", seed, &params, &[])?;
    Ok(())
}
