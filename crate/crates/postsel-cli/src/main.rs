//! Command-line driver: ingest CSV data, fit lasso-penalized likelihood
//! models, run post-selection inference, fit the graphical lasso, and run
//! simulation designs.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical/degeneracy error.

mod ingest;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use postsel::graphical_lasso::{fit_glasso_named, glasso_infer, GlassoControls, GlassoInferOptions, PrecisionFit};
use postsel::lasso_solver::{
    cross_validate_lambda, default_lambda_grid, fit_lasso, lambda_max, PenaltySpec, SolverControls,
};
use postsel::model_family::{FamilyKind, FamilySpec};
use postsel::selective_glm::{infer, CovarianceMethod, InferOptions, SelectiveReport};
use postsel::sim_harness::{parse_design, run_design};
use postsel::Error;
use serde_json::json;

use output::{fmt_num, json_num, json_rows, write_out, Table};

#[derive(Parser)]
#[command(
    name = "postsel",
    about = "Selective inference for l1-penalized likelihood models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Gaussian,
    Logistic,
    Cox,
}

impl From<FamilyArg> for FamilyKind {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Gaussian => FamilyKind::Gaussian,
            FamilyArg::Logistic => FamilyKind::Logistic,
            FamilyArg::Cox => FamilyKind::Cox,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CovArg {
    Plugin,
    Pairs,
    Sandwich,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long, env = "POSTSEL_INPUT")]
    input: String,
    /// Likelihood family.
    #[arg(long, value_enum, env = "POSTSEL_FAMILY")]
    family: FamilyArg,
    /// Response column (gaussian/logistic); Cox uses `time` and `status`.
    #[arg(long, env = "POSTSEL_RESPONSE")]
    response: Option<String>,
    /// Do not add an unpenalized intercept column.
    #[arg(long, env = "POSTSEL_NO_INTERCEPT")]
    no_intercept: bool,
}

#[derive(Args)]
struct LambdaArgs {
    /// Penalty level in the unscaled (total log-likelihood) convention.
    #[arg(long, env = "POSTSEL_LAMBDA")]
    lambda: Option<f64>,
    /// Penalty as a fraction of this dataset's lambda_max.
    #[arg(long, conflicts_with = "lambda", env = "POSTSEL_LAMBDA_FRAC")]
    lambda_frac: Option<f64>,
    /// Choose the penalty by 10-fold cross-validation.
    #[arg(long, conflicts_with_all = ["lambda", "lambda_frac"], env = "POSTSEL_USE_CV")]
    cv: bool,
    /// Interpret --lambda per observation (multiply by n before solving).
    #[arg(long, env = "POSTSEL_PER_OBS_LAMBDA")]
    per_obs_lambda: bool,
}

#[derive(Args)]
struct OutArgs {
    /// Output path; stdout when omitted.
    #[arg(long, env = "POSTSEL_OUT")]
    out: Option<String>,
    /// Output format.
    #[arg(long, value_enum, default_value = "csv", env = "POSTSEL_FORMAT")]
    format: FormatArg,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the penalized model and report coefficients and the active set.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        lambda: LambdaArgs,
        #[arg(long, default_value_t = 0, env = "POSTSEL_SEED")]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Fit, then report selective p-values and confidence intervals.
    Infer {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        lambda: LambdaArgs,
        /// Confidence level for the reported intervals.
        #[arg(long, default_value_t = 0.9, env = "POSTSEL_LEVEL")]
        level: f64,
        /// Covariance estimate behind the pivot.
        #[arg(long, value_enum, default_value = "plugin", env = "POSTSEL_COV")]
        cov: CovArg,
        /// Pairs-bootstrap replicates (with --cov pairs).
        #[arg(long, default_value_t = 500, env = "POSTSEL_BOOT_REPS")]
        boot_reps: usize,
        /// Gaussian error variance; estimated from selected-model residuals
        /// when omitted and n > p.
        #[arg(long, env = "POSTSEL_SIGMA2")]
        sigma2: Option<f64>,
        #[arg(long, default_value_t = 0, env = "POSTSEL_SEED")]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Cross-validate the penalty level and report the deviance curve.
    Cv {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 10, env = "POSTSEL_FOLDS")]
        folds: usize,
        #[arg(long, default_value_t = 50, env = "POSTSEL_GRID_SIZE")]
        grid_size: usize,
        #[arg(long, default_value_t = 0.05, env = "POSTSEL_GRID_MIN_FRAC")]
        grid_min_frac: f64,
        #[arg(long, default_value_t = 0, env = "POSTSEL_SEED")]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Graphical lasso with selective inference on selected edges.
    Glasso {
        /// Raw data CSV (rows are observations); columns are centered.
        #[arg(long, conflicts_with = "cov_input", env = "POSTSEL_INPUT")]
        input: Option<String>,
        /// Precomputed covariance CSV (requires --n-obs).
        #[arg(long, requires = "n_obs", env = "POSTSEL_COV_INPUT")]
        cov_input: Option<String>,
        /// Sample size behind --cov-input.
        #[arg(long, env = "POSTSEL_N_OBS")]
        n_obs: Option<usize>,
        /// Penalty level on off-diagonal precision entries.
        #[arg(long, env = "POSTSEL_LAMBDA")]
        lambda: Option<f64>,
        /// Penalty as a fraction of the largest off-diagonal covariance.
        #[arg(long, conflicts_with = "lambda", env = "POSTSEL_LAMBDA_FRAC")]
        lambda_frac: Option<f64>,
        #[arg(long, default_value_t = 0.9, env = "POSTSEL_LEVEL")]
        level: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run a simulation design file end to end.
    Simulate {
        /// Design config (`key = value` lines).
        #[arg(long, env = "POSTSEL_DESIGN")]
        design: String,
        /// Directory for ecdf.csv, coverage.csv and summary.json.
        #[arg(long, env = "POSTSEL_OUT_DIR")]
        out_dir: String,
    },
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidInput(_) => std::process::ExitCode::from(2),
                _ => std::process::ExitCode::from(3),
            }
        }
    }
}

fn family_spec(kind: FamilyKind, sigma2: Option<f64>) -> FamilySpec {
    match kind {
        FamilyKind::Gaussian => match sigma2 {
            Some(s2) => FamilySpec::gaussian_with_sigma2(s2),
            None => FamilySpec::gaussian(),
        },
        FamilyKind::Logistic => FamilySpec::logistic(),
        FamilyKind::Cox => FamilySpec::cox(),
    }
}

/// Resolve the penalty level from the --lambda / --lambda-frac / --cv flags.
fn resolve_lambda(
    family: &FamilySpec,
    data: &postsel::model_family::Dataset,
    args: &LambdaArgs,
    seed: u64,
) -> postsel::Result<f64> {
    let template = PenaltySpec::new(0.0, data)?;
    if let Some(l) = args.lambda {
        let scale = if args.per_obs_lambda { data.n() as f64 } else { 1.0 };
        return Ok(l * scale);
    }
    if let Some(f) = args.lambda_frac {
        return Ok(f * lambda_max(family, data, &template)?);
    }
    if args.cv {
        let lmax = lambda_max(family, data, &template)?;
        let grid = default_lambda_grid(lmax, 50, 0.05);
        return Ok(cross_validate_lambda(family, data, &grid, 10, seed)?.lambda_cv);
    }
    Err(Error::InvalidInput("choose a penalty: --lambda, --lambda-frac or --cv".into()))
}

const INFER_COLUMNS: [&str; 9] =
    ["variable", "beta_bar", "stderr", "vlo", "vhi", "naive_p", "selective_p", "ci_lo", "ci_hi"];

fn report_to_table(report: &SelectiveReport) -> Table {
    let mut table = Table::new(&INFER_COLUMNS);
    for row in &report.rows {
        table.push(vec![
            row.name.clone(),
            fmt_num(row.beta_bar),
            fmt_num(row.stderr),
            fmt_num(row.vlo),
            fmt_num(row.vhi),
            fmt_num(row.naive_pvalue),
            fmt_num(row.pvalue.unwrap_or(f64::NAN)),
            fmt_num(row.ci_lo),
            fmt_num(row.ci_hi),
        ]);
    }
    table
}

fn report_to_json(report: &SelectiveReport) -> serde_json::Value {
    let mut columns: Vec<&str> = INFER_COLUMNS.to_vec();
    columns.push("penalized");
    let rows = report
        .rows
        .iter()
        .map(|row| {
            vec![
                json!(row.name),
                json_num(row.beta_bar),
                json_num(row.stderr),
                json_num(row.vlo),
                json_num(row.vhi),
                json_num(row.naive_pvalue),
                json_num(row.pvalue.unwrap_or(f64::NAN)),
                json_num(row.ci_lo),
                json_num(row.ci_hi),
                json!(row.penalized),
            ]
        })
        .collect();
    json!({
        "family": report.family,
        "lambda": json_num(report.lambda),
        "level": json_num(report.level),
        "sigma2": json_num(report.sigma2),
        "covariance_method": report.covariance_method,
        "rows": json_rows(&columns, rows),
    })
}

fn emit(table: Table, js: serde_json::Value, out: &OutArgs) -> postsel::Result<()> {
    match out.format {
        FormatArg::Csv => {
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            write_out(out.out.as_deref(), &String::from_utf8_lossy(&buf))
        }
        FormatArg::Json => {
            let mut text = serde_json::to_string_pretty(&js).expect("serializable");
            text.push('\n');
            write_out(out.out.as_deref(), &text)
        }
    }
}

fn max_offdiag(s: &nalgebra::DMatrix<f64>) -> f64 {
    let p = s.nrows();
    let mut lmax = 0.0f64;
    for j in 0..p {
        for k in 0..p {
            if j != k {
                lmax = lmax.max(s[(j, k)].abs());
            }
        }
    }
    lmax
}

fn glasso_fit_from_args(
    input: Option<&str>,
    cov_input: Option<&str>,
    n_obs: Option<usize>,
    lambda: Option<f64>,
    lambda_frac: Option<f64>,
) -> postsel::Result<PrecisionFit> {
    let controls = GlassoControls::default();
    let (s, n, names) = match (input, cov_input) {
        (Some(path), None) => {
            let (x, names) = ingest::ingest_matrix(path)?;
            let n = x.nrows();
            if n < 2 {
                return Err(Error::InvalidInput("need at least 2 rows".into()));
            }
            let mut xc = x;
            for j in 0..xc.ncols() {
                let mean = xc.column(j).mean();
                for i in 0..n {
                    xc[(i, j)] -= mean;
                }
            }
            let s = xc.transpose() * &xc / n as f64;
            (s, n, names)
        }
        (None, Some(path)) => {
            let (s, names) = ingest::ingest_covariance(path)?;
            let n = n_obs.ok_or_else(|| Error::InvalidInput("--cov-input requires --n-obs".into()))?;
            (s, n, names)
        }
        _ => return Err(Error::InvalidInput("glasso needs exactly one of --input or --cov-input".into())),
    };
    let lam = match (lambda, lambda_frac) {
        (Some(l), None) => l,
        (None, Some(f)) => f * max_offdiag(&s),
        _ => return Err(Error::InvalidInput("glasso needs exactly one of --lambda or --lambda-frac".into())),
    };
    fit_glasso_named(&s, n, lam, &controls, Some(names))
}

fn run(cli: Cli) -> postsel::Result<()> {
    match cli.command {
        Command::Fit { data, lambda, seed, out } => {
            let kind: FamilyKind = data.family.into();
            let ingest = ingest::ingest_csv(&data.input, kind, data.response.as_deref(), data.no_intercept)?;
            if ingest.dropped_rows > 0 {
                eprintln!("note: dropped {} rows with missing values", ingest.dropped_rows);
            }
            let family = family_spec(kind, None);
            let ds = ingest.dataset;
            let lam = resolve_lambda(&family, &ds, &lambda, seed)?;
            let penalty = PenaltySpec::new(lam, &ds)?;
            let fit = fit_lasso(&family, &ds, &penalty, &SolverControls::default())?;
            eprintln!(
                "note: lambda = {}, iterations = {}, max KKT violation = {:.3e}",
                fmt_num(lam),
                fit.iterations,
                fit.max_kkt_violation
            );
            let mut table = Table::new(&["variable", "coefficient", "active", "sign"]);
            let mut rows = Vec::new();
            for j in 0..ds.p() {
                let active = fit.active_set.contains(&j);
                let sign = if active { fit.beta_hat[j].signum() } else { 0.0 };
                table.push(vec![
                    ds.names[j].clone(),
                    fmt_num(fit.beta_hat[j]),
                    (if active { "1" } else { "0" }).to_string(),
                    fmt_num(sign),
                ]);
                rows.push(vec![json!(ds.names[j]), json_num(fit.beta_hat[j]), json!(active), json_num(sign)]);
            }
            let js = json!({
                "lambda": json_num(lam),
                "iterations": fit.iterations,
                "max_kkt_violation": json_num(fit.max_kkt_violation),
                "rows": json_rows(&["variable", "coefficient", "active", "sign"], rows),
            });
            emit(table, js, &out)
        }
        Command::Infer { data, lambda, level, cov, boot_reps, sigma2, seed, out } => {
            let kind: FamilyKind = data.family.into();
            let ingest = ingest::ingest_csv(&data.input, kind, data.response.as_deref(), data.no_intercept)?;
            if ingest.dropped_rows > 0 {
                eprintln!("note: dropped {} rows with missing values", ingest.dropped_rows);
            }
            let family = family_spec(kind, sigma2);
            let ds = ingest.dataset;
            let lam = resolve_lambda(&family, &ds, &lambda, seed)?;
            let penalty = PenaltySpec::new(lam, &ds)?;
            let fit = fit_lasso(&family, &ds, &penalty, &SolverControls::default())?;
            let covariance_method = match cov {
                CovArg::Plugin => CovarianceMethod::Plugin,
                CovArg::Pairs => CovarianceMethod::PairsBootstrap { replicates: boot_reps, seed },
                CovArg::Sandwich => CovarianceMethod::Sandwich,
            };
            let options = InferOptions { level, covariance_method, ..Default::default() };
            let report = infer(&family, &ds, &fit, &options)?;
            emit(report_to_table(&report), report_to_json(&report), &out)
        }
        Command::Cv { data, folds, grid_size, grid_min_frac, seed, out } => {
            let kind: FamilyKind = data.family.into();
            let ingest = ingest::ingest_csv(&data.input, kind, data.response.as_deref(), data.no_intercept)?;
            if ingest.dropped_rows > 0 {
                eprintln!("note: dropped {} rows with missing values", ingest.dropped_rows);
            }
            let family = family_spec(kind, None);
            let ds = ingest.dataset;
            let template = PenaltySpec::new(0.0, &ds)?;
            let lmax = lambda_max(&family, &ds, &template)?;
            let grid = default_lambda_grid(lmax, grid_size, grid_min_frac);
            let result = cross_validate_lambda(&family, &ds, &grid, folds, seed)?;
            eprintln!("note: lambda_cv = {}", fmt_num(result.lambda_cv));
            let mut table = Table::new(&["lambda", "mean_deviance", "valid_folds"]);
            let mut rows = Vec::new();
            for point in &result.curve {
                table.push(vec![fmt_num(point.lambda), fmt_num(point.mean_deviance), point.valid_folds.to_string()]);
                rows.push(vec![json_num(point.lambda), json_num(point.mean_deviance), json!(point.valid_folds)]);
            }
            let js = json!({
                "lambda_cv": json_num(result.lambda_cv),
                "curve": json_rows(&["lambda", "mean_deviance", "valid_folds"], rows),
            });
            emit(table, js, &out)
        }
        Command::Glasso { input, cov_input, n_obs, lambda, lambda_frac, level, out } => {
            let fit = glasso_fit_from_args(input.as_deref(), cov_input.as_deref(), n_obs, lambda, lambda_frac)?;
            eprintln!(
                "note: lambda = {}, edges = {}, sweeps = {}, max KKT violation = {:.3e}",
                fmt_num(fit.lambda),
                fit.edge_set.len(),
                fit.sweeps,
                fit.max_kkt_violation
            );
            let report = glasso_infer(&fit, &GlassoInferOptions { level, null_value: 0.0 })?;
            let columns =
                ["edge", "theta_hat", "beta_bar", "stderr", "vlo", "vhi", "naive_p", "selective_p", "ci_lo", "ci_hi"];
            let mut table = Table::new(&columns);
            let mut rows = Vec::new();
            for (row, &(j, k)) in report.rows.iter().zip(fit.edge_set.iter()) {
                table.push(vec![
                    row.name.clone(),
                    fmt_num(fit.theta_hat[(j, k)]),
                    fmt_num(row.beta_bar),
                    fmt_num(row.stderr),
                    fmt_num(row.vlo),
                    fmt_num(row.vhi),
                    fmt_num(row.naive_pvalue),
                    fmt_num(row.pvalue.unwrap_or(f64::NAN)),
                    fmt_num(row.ci_lo),
                    fmt_num(row.ci_hi),
                ]);
                rows.push(vec![
                    json!(row.name),
                    json_num(fit.theta_hat[(j, k)]),
                    json_num(row.beta_bar),
                    json_num(row.stderr),
                    json_num(row.vlo),
                    json_num(row.vhi),
                    json_num(row.naive_pvalue),
                    json_num(row.pvalue.unwrap_or(f64::NAN)),
                    json_num(row.ci_lo),
                    json_num(row.ci_hi),
                ]);
            }
            let js = json!({
                "lambda": json_num(fit.lambda),
                "level": json_num(level),
                "rows": json_rows(&columns, rows),
            });
            emit(table, js, &out)
        }
        Command::Simulate { design, out_dir } => {
            let text = std::fs::read_to_string(&design)
                .map_err(|e| Error::InvalidInput(format!("cannot read {design}: {e}")))?;
            let design = parse_design(&text)?;
            let report = run_design(&design)?;
            std::fs::create_dir_all(&out_dir)
                .map_err(|e| Error::InvalidInput(format!("cannot create {out_dir}: {e}")))?;

            let mut ecdf = Table::new(&["group", "t", "ecdf"]);
            let groups: [(&str, &Vec<f64>); 4] = [
                ("null_selective", &report.null_pvalues),
                ("null_naive", &report.naive_null_pvalues),
                ("nonnull_selective", &report.nonnull_pvalues),
                ("nonnull_naive", &report.naive_nonnull_pvalues),
            ];
            for (label, values) in groups {
                if values.is_empty() {
                    continue;
                }
                let mut sorted = values.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for k in 0..=100 {
                    let t = k as f64 / 100.0;
                    let count = sorted.partition_point(|&u| u <= t);
                    ecdf.push(vec![label.to_string(), fmt_num(t), fmt_num(count as f64 / sorted.len() as f64)]);
                }
            }
            let mut buf = Vec::new();
            ecdf.write_csv(&mut buf)?;
            write_out(Some(&format!("{out_dir}/ecdf.csv")), &String::from_utf8_lossy(&buf))?;

            let mut coverage =
                Table::new(&["miscoverage", "median_finite_length", "infinite_length_fraction", "intervals"]);
            let pooled = report.null_pvalues.len() + report.nonnull_pvalues.len();
            coverage.push(vec![
                fmt_num(report.miscoverage),
                fmt_num(report.median_finite_length),
                fmt_num(report.infinite_length_fraction),
                pooled.to_string(),
            ]);
            let mut buf = Vec::new();
            coverage.write_csv(&mut buf)?;
            write_out(Some(&format!("{out_dir}/coverage.csv")), &String::from_utf8_lossy(&buf))?;

            let js = json!({
                "ks_statistic": json_num(report.ks_statistic),
                "naive_ks_statistic": json_num(report.naive_ks_statistic),
                "coverage": json_num(report.coverage),
                "miscoverage": json_num(report.miscoverage),
                "median_finite_length": json_num(report.median_finite_length),
                "infinite_length_fraction": json_num(report.infinite_length_fraction),
                "signal_selection_frequency": json_num(report.signal_selection_frequency),
                "counts": {
                    "attempted": report.counts.attempted,
                    "selected_nonempty": report.counts.selected_nonempty,
                    "screened": report.counts.screened,
                    "failed": report.counts.failed,
                },
                "n_null_pvalues": report.null_pvalues.len(),
                "n_nonnull_pvalues": report.nonnull_pvalues.len(),
            });
            let mut text = serde_json::to_string_pretty(&js).expect("serializable");
            text.push('\n');
            write_out(Some(&format!("{out_dir}/summary.json")), &text)
        }
    }
}
