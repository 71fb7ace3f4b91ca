//! Subcommands of the `distindex` binary.
//!
//! Every command computes all of its outputs in memory first and writes them
//! at the end; if a write fails, files already written by the command are
//! removed again.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use distindex::data::{ingest, standardize_los, Dataset, DatasetSpec};
use distindex::dim::{fit_dim, predict_dim, Covariates, DimConfig, DimModel, IndexSource};
use distindex::eval::{evaluate, ks_uniform, EvalOptions, EvalReport};
use distindex::index::{binned_ecdfs, fit_ols_index, quantile_bins, spearman, ResponseTransform};
use distindex::sim::{rate_experiment, CovariateLaw, Family, RateOptions, SyntheticDgp};
use distindex::{Error, Result, StepDistribution};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::RankDeficient { .. }
        | Error::UndefinedCorrelation(_)
        | Error::DegenerateConditioning(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

#[derive(Debug, Parser)]
#[command(name = "distindex", version, about = "Distributional index models: fit, predict, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a bagged DIM and write model.json.
    Fit(FitArgs),
    /// Predict quantiles (and optionally full CDFs) for new rows.
    Predict(PredictArgs),
    /// Score forecasts: CRPS, PIT, reliability, baselines.
    Evaluate(EvaluateArgs),
    /// Run the consistency-rate simulation and write rate.csv.
    Simulate(SimulateArgs),
    /// Spearman correlation and binned ECDFs of the response by index.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub response: String,
    /// Precomputed index column; replaces the built-in OLS index.
    #[arg(long)]
    pub index_col: Option<String>,
    /// Admission hour column; standardizes the response as a length of stay.
    #[arg(long)]
    pub hour_col: Option<String>,
    /// Columns to leave out of the design.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    #[arg(long, default_value_t = 0.5)]
    pub xi: f64,
    #[arg(long, default_value_t = 100)]
    pub splits: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "identity")]
    pub transform: ResponseTransform,
    /// Estimate index and distributions on all rows (no sample splitting).
    #[arg(long)]
    pub no_split: bool,
    #[arg(long)]
    pub no_intercept: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Index column in the test file (defaults to the one used in training).
    #[arg(long)]
    pub index_col: Option<String>,
    /// Comma-separated quantile levels; default 0.005, 0.010, ..., 0.995.
    #[arg(long, value_delimiter = ',')]
    pub quantiles: Option<Vec<f64>>,
    /// Also write the full predictive CDFs to cdfs.json.
    #[arg(long)]
    pub cdf_json: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub response: String,
    /// Training file for the unconditional ECDF baseline.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Column of point forecasts in the test file.
    #[arg(long)]
    pub point_col: Option<String>,
    #[arg(long)]
    pub index_col: Option<String>,
    #[arg(long)]
    pub hour_col: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "1,5,9,13")]
    pub thresholds: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub pit_bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "gaussian_shift")]
    pub family: Family,
    #[arg(long, value_delimiter = ',', default_value = "1,1")]
    pub alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "500,2000,8000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 500)]
    pub n_eval: usize,
    #[arg(long, default_value_t = 0.5)]
    pub xi: f64,
    #[arg(long, default_value_t = 1)]
    pub splits: usize,
    /// Use the true index instead of the OLS estimate.
    #[arg(long)]
    pub true_index: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub response: String,
    /// Index column; without it an OLS index is fitted on all rows.
    #[arg(long)]
    pub index_col: Option<String>,
    #[arg(long)]
    pub hour_col: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    #[arg(long, default_value = "identity")]
    pub transform: ResponseTransform,
    /// Number of equal-count index bins.
    #[arg(long, default_value_t = 5)]
    pub bins: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Fit(a) => run_fit(&a),
        Command::Predict(a) => run_predict(&a),
        Command::Evaluate(a) => run_evaluate(&a),
        Command::Simulate(a) => run_simulate(&a),
        Command::Diagnose(a) => run_diagnose(&a),
    }
}

/// Writes all files or none.
fn write_outputs(dir: &Path, files: Vec<(&str, String)>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, contents) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(e.into());
        }
        written.push(path);
    }
    Ok(written)
}

/// Replaces the response by the standardized length of stay and drops rows
/// where it is not positive.
fn standardize_dataset(ds: Dataset, hour_col: Option<&str>) -> Result<Dataset> {
    let Some(col) = hour_col else { return Ok(ds) };
    let hours = ds
        .hours
        .clone()
        .ok_or_else(|| Error::Schema(format!("hour column `{col}` not loaded")))?;
    let Some(y) = ds.response.clone() else { return Ok(ds) };
    let mut keep = Vec::new();
    let mut standardized = Vec::new();
    for (i, (&yi, &h)) in y.iter().zip(&hours).enumerate() {
        let v = standardize_los(yi, h).map_err(|e| Error::Data {
            row: i + 1,
            column: col.to_string(),
            message: e.to_string(),
        })?;
        if v > 0.0 {
            keep.push(i);
            standardized.push(v);
        }
    }
    let mut out = ds.select_rows(&keep);
    out.response = Some(standardized);
    Ok(out)
}

fn load_model(path: &Path) -> Result<DimModel> {
    DimModel::from_json(&fs::read_to_string(path)?)
}

fn covariates_for<'a>(
    model: &DimModel,
    ds: &'a Dataset,
) -> Result<Covariates<'a>> {
    match model.config.index_source {
        IndexSource::BuiltinOls => Ok(Covariates::Design(&ds.design)),
        IndexSource::ExternalColumn => ds
            .index
            .as_deref()
            .map(Covariates::Index)
            .ok_or_else(|| Error::Schema("test data lacks the index column".into())),
    }
}

/// Reads a test file with the training encoding of `model`.
fn load_test(
    model: &DimModel,
    path: &Path,
    response: Option<&str>,
    index_col: Option<&str>,
    hour_col: Option<&str>,
    extra_exclude: &[String],
) -> Result<Dataset> {
    let index_col = match model.config.index_source {
        IndexSource::ExternalColumn => Some(
            index_col
                .map(str::to_string)
                .or_else(|| model.metadata.columns.first().cloned())
                .ok_or_else(|| Error::Schema("model does not name its index column".into()))?,
        ),
        IndexSource::BuiltinOls => None,
    };
    let spec = DatasetSpec {
        response: response.map(str::to_string),
        index_col,
        hour_col: hour_col.map(str::to_string),
        exclude: extra_exclude.to_vec(),
        covariates: None,
        intercept: false,
    };
    let encoding = match model.config.index_source {
        IndexSource::BuiltinOls => Some(
            model
                .metadata
                .encoding
                .clone()
                .ok_or_else(|| Error::Schema("model lacks its covariate encoding".into()))?,
        ),
        IndexSource::ExternalColumn => Some(Default::default()),
    };
    ingest(path, &spec, encoding.as_ref())
}

pub fn run_fit(a: &FitArgs) -> Result<Vec<PathBuf>> {
    let external = a.index_col.is_some();
    let spec = DatasetSpec {
        response: Some(a.response.clone()),
        index_col: a.index_col.clone(),
        hour_col: a.hour_col.clone(),
        exclude: a.exclude.clone(),
        covariates: external.then(Vec::new),
        intercept: !a.no_intercept && !external,
    };
    let ds = standardize_dataset(ingest(&a.train, &spec, None)?, a.hour_col.as_deref())?;
    let y = ds.response.clone().expect("response requested");
    let config = DimConfig {
        xi: a.xi,
        n_splits: a.splits,
        seed: a.seed,
        transform: a.transform,
        index_source: if external {
            IndexSource::ExternalColumn
        } else {
            IndexSource::BuiltinOls
        },
        no_split: a.no_split,
    };
    let covariates = match &ds.index {
        Some(u) => Covariates::Index(u),
        None => Covariates::Design(&ds.design),
    };
    let mut model = fit_dim(covariates, &y, &config)?;
    model.metadata.response = Some(a.response.clone());
    if let Some(col) = &a.index_col {
        model.metadata.columns = vec![col.clone()];
    } else {
        model.metadata.encoding = Some(ds.encoding.clone());
    }
    write_outputs(&a.out_dir, vec![("model.json", model.to_json()?)])
}

/// Default quantile grid `0.005, 0.010, ..., 0.995`.
pub fn default_quantile_levels() -> Vec<f64> {
    (1..200).map(|k| k as f64 / 200.0).collect()
}

fn quantile_table(preds: &[StepDistribution], levels: &[f64]) -> Result<String> {
    let mut s = String::from("row");
    for l in levels {
        write!(s, ",q{l}").expect("string write");
    }
    s.push('\n');
    for (i, d) in preds.iter().enumerate() {
        write!(s, "{}", i + 1).expect("string write");
        for &l in levels {
            write!(s, ",{}", d.quantile(l)?).expect("string write");
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn run_predict(a: &PredictArgs) -> Result<Vec<PathBuf>> {
    let model = load_model(&a.model)?;
    let ds = load_test(&model, &a.test, None, a.index_col.as_deref(), None, &[])?;
    let preds = predict_dim(&model, covariates_for(&model, &ds)?)?;
    let levels = a.quantiles.clone().unwrap_or_else(default_quantile_levels);
    let mut files = vec![("predictions.csv", quantile_table(&preds, &levels)?)];
    if a.cdf_json {
        files.push(("cdfs.json", serde_json::to_string(&preds)?));
    }
    write_outputs(&a.out_dir, files)
}

#[derive(Serialize)]
struct EvalSummary<'a> {
    n: usize,
    mean_crps: f64,
    pit_counts: &'a [usize],
    pit_ks: f64,
    baselines: Vec<BaselineSummary<'a>>,
    reliability: &'a [distindex::eval::ReliabilityBin],
}

#[derive(Serialize)]
struct BaselineSummary<'a> {
    id: &'a str,
    mean_score: f64,
    wilcoxon: &'a distindex::eval::WilcoxonResult,
}

fn eval_files(report: &EvalReport, y: &[f64]) -> Result<Vec<(&'static str, String)>> {
    let mut per_row = String::from("row,y,crps,pit");
    for b in &report.baselines {
        per_row.push_str(match b.id.as_str() {
            "point_mae" => ",point_abs_error",
            _ => ",ecdf_crps",
        });
    }
    per_row.push('\n');
    for (i, obs) in y.iter().enumerate().take(report.n) {
        write!(per_row, "{},{obs},{},{}", i + 1, report.crps[i], report.pit.values[i])
            .expect("string write");
        for b in &report.baselines {
            write!(per_row, ",{}", b.scores[i]).expect("string write");
        }
        per_row.push('\n');
    }

    let mut rel = String::from("threshold,lower,upper,count,mean_forecast,observed_frequency,sparse\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for b in &report.reliability {
        writeln!(
            rel,
            "{},{},{},{},{},{},{}",
            b.threshold,
            b.lower,
            b.upper,
            b.count,
            opt(b.mean_forecast),
            opt(b.observed_frequency),
            b.sparse
        )
        .expect("string write");
    }

    let k = report.pit.counts.len();
    let mut pit = String::from("bin,lower,upper,count\n");
    for (b, c) in report.pit.counts.iter().enumerate() {
        writeln!(pit, "{},{},{},{c}", b + 1, b as f64 / k as f64, (b + 1) as f64 / k as f64)
            .expect("string write");
    }

    let summary = EvalSummary {
        n: report.n,
        mean_crps: report.mean_crps,
        pit_counts: &report.pit.counts,
        pit_ks: ks_uniform(&report.pit.values),
        baselines: report
            .baselines
            .iter()
            .map(|b| BaselineSummary {
                id: &b.id,
                mean_score: b.mean,
                wilcoxon: &b.comparison,
            })
            .collect(),
        reliability: &report.reliability,
    };
    Ok(vec![
        ("eval.csv", per_row),
        ("eval.json", serde_json::to_string_pretty(&summary)?),
        ("reliability.csv", rel),
        ("pit.csv", pit),
    ])
}

pub fn run_evaluate(a: &EvaluateArgs) -> Result<Vec<PathBuf>> {
    let model = load_model(&a.model)?;
    let exclude: Vec<String> = a.point_col.iter().cloned().collect();
    let ds = load_test(
        &model,
        &a.test,
        Some(&a.response),
        a.index_col.as_deref(),
        a.hour_col.as_deref(),
        &exclude,
    )?;
    let ds = standardize_dataset(ds, a.hour_col.as_deref())?;
    let y = ds.response.clone().expect("response requested");
    let preds = predict_dim(&model, covariates_for(&model, &ds)?)?;

    let train_y = match &a.train {
        Some(path) => {
            let spec = DatasetSpec {
                response: Some(a.response.clone()),
                hour_col: a.hour_col.clone(),
                covariates: Some(Vec::new()),
                ..DatasetSpec::default()
            };
            let tr = standardize_dataset(ingest(path, &spec, None)?, a.hour_col.as_deref())?;
            tr.response
        }
        None => None,
    };
    let points = a.point_col.as_deref().map(|c| ds.numeric_column(c)).transpose()?;
    let options = EvalOptions {
        thresholds: a.thresholds.clone(),
        pit_bins: a.pit_bins,
        seed: a.seed,
        ..EvalOptions::default()
    };
    let report = evaluate(&preds, &y, train_y.as_deref(), points.as_deref(), &options)?;
    write_outputs(&a.out_dir, eval_files(&report, &y)?)
}

pub fn run_simulate(a: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let dgp = SyntheticDgp::new(a.alpha.clone(), a.family, CovariateLaw::UnitCube, a.seed)?;
    let options = RateOptions {
        xi: a.xi,
        n_splits: a.splits,
        n_eval: a.n_eval,
        true_index: a.true_index,
    };
    let result = rate_experiment(&dgp, &a.sizes, a.reps, &options)?;
    write_outputs(&a.out_dir, vec![("rate.csv", result.to_csv())])
}

#[derive(Serialize)]
struct Diagnosis {
    n: usize,
    spearman: f64,
    bins: Vec<DiagnosisBin>,
}

#[derive(Serialize)]
struct DiagnosisBin {
    lower: f64,
    upper: f64,
    count: usize,
}

pub fn run_diagnose(a: &DiagnoseArgs) -> Result<Vec<PathBuf>> {
    let external = a.index_col.is_some();
    let spec = DatasetSpec {
        response: Some(a.response.clone()),
        index_col: a.index_col.clone(),
        hour_col: a.hour_col.clone(),
        exclude: a.exclude.clone(),
        covariates: external.then(Vec::new),
        intercept: !external,
    };
    let ds = standardize_dataset(ingest(&a.train, &spec, None)?, a.hour_col.as_deref())?;
    let y = ds.response.clone().expect("response requested");
    let index = match &ds.index {
        Some(u) => u.clone(),
        None => fit_ols_index(&ds.design, &y, a.transform)?.index_values(&ds.design)?,
    };
    let rho = spearman(&index, &y)?;
    let bins = quantile_bins(&index, a.bins);
    let ecdfs = binned_ecdfs(&index, &y, &bins)?;

    let mut csv = String::from("bin,lower,upper,point,cumprob\n");
    let mut summary = Vec::new();
    for (k, (bin, d)) in ecdfs.iter().enumerate() {
        for (p, c) in d.points().iter().zip(d.cumprobs()) {
            writeln!(csv, "{},{},{},{p},{c}", k + 1, bin.lower, bin.upper).expect("string write");
        }
        summary.push(DiagnosisBin {
            lower: bin.lower,
            upper: bin.upper,
            count: index.iter().filter(|u| bin.contains(**u)).count(),
        });
    }
    let diag = Diagnosis {
        n: y.len(),
        spearman: rho,
        bins: summary,
    };
    write_outputs(
        &a.out_dir,
        vec![
            ("diagnose.json", serde_json::to_string_pretty(&diag)?),
            ("binned_ecdfs.csv", csv),
        ],
    )
}
