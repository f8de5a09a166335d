//! Command-line front end of the `crstd` binary.
//!
//! Exit codes: 0 success, 2 invalid input or flags, 1 runtime failure.
//! `CRSTD_THREADS` caps the worker pool.

use crate::analysis::{self, AnalysisError, RecipeParams, RECIPES};
use crate::dataset::{self, DatasetError, DeclarationSpec, Failure, Schema, SurvivalFrame};
use crate::fpm::{self, FpmError, ModelSpec};
use crate::nonparam::{self, NonparamError};
use crate::spline::CentileRule;
use crate::standardize::{
    self, bootstrap_se, write_series_csv, AtScenario, ContrastKind, Estimand, Population,
    SeriesManifest, StandardizeError, StandardizeRequest,
};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const THREADS_ENV: &str = "CRSTD_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "crstd",
    version,
    about = "Flexible parametric competing-risks models and regression standardisation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Input {
    /// Input CSV (raw trial file or prepared data).
    #[arg(long)]
    pub data: PathBuf,
    /// Time column for generic data; with --event skips prostate preparation.
    #[arg(long, requires = "event")]
    pub time: Option<String>,
    /// Event-code column for generic data.
    #[arg(long, requires = "time")]
    pub event: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prepare the raw prostate trial file.
    Prep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Kaplan–Meier failure curves.
    Km {
        #[command(flatten)]
        input: Input,
        /// Grouping column.
        #[arg(long, default_value = "rx")]
        group: String,
        /// Event code counted as failure; all deaths when omitted.
        #[arg(long)]
        failure_code: Option<i64>,
        #[arg(long, default_value_t = 60.0)]
        exit_time: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aalen–Johansen cumulative incidence.
    Aj {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "rx")]
        group: String,
        #[arg(long, value_delimiter = ',', default_values_t = [1i64, 2])]
        causes: Vec<i64>,
        #[arg(long, default_value_t = 60.0)]
        exit_time: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a flexible parametric model and save it as JSON.
    Fit {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        failure_code: i64,
        #[arg(long, default_value_t = 60.0)]
        exit_time: f64,
        #[arg(long, value_delimiter = ',')]
        covariates: Vec<String>,
        /// Baseline spline degrees of freedom.
        #[arg(long, default_value_t = 3)]
        df: usize,
        /// Time-dependent effect as `column:df`; repeatable.
        #[arg(long)]
        tvc: Vec<String>,
        /// Use the raw (non-orthogonalised) spline basis.
        #[arg(long)]
        no_orthog: bool,
        /// Centile rule for knots: `interpolated` or `empirical`.
        #[arg(long, default_value = "interpolated")]
        centiles: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Standardised estimates from saved models.
    Standsurv(StandsurvArgs),
    /// Run a canned analysis.
    Recipe {
        /// One of the recipe names.
        name: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// `start:stop:points`
        #[arg(long, default_value = "0:60:121")]
        timevar: String,
        #[arg(long, default_value_t = 60.0)]
        t_star: f64,
        #[arg(long, default_value_t = 50)]
        nodes: usize,
        #[arg(long, default_value_t = 0.95)]
        ci_level: f64,
    },
}

#[derive(Debug, Args)]
pub struct StandsurvArgs {
    #[command(flatten)]
    pub input: Input,
    /// One or two model files, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub estimand: String,
    /// Scenario `col=v,col=~src`, optionally prefixed `label:`; repeatable.
    #[arg(long = "at", required = true)]
    pub at: Vec<String>,
    #[arg(long)]
    pub contrast: Option<String>,
    /// 1-based reference scenario.
    #[arg(long, default_value_t = 1)]
    pub reference: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lincom: Option<Vec<f64>>,
    /// `start:stop:points`
    #[arg(long, conflicts_with = "t_star")]
    pub timevar: Option<String>,
    #[arg(long)]
    pub t_star: Option<f64>,
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    #[arg(long, default_value_t = 50)]
    pub nodes: usize,
    /// 0-based row for non-marginal predictions.
    #[arg(long)]
    pub row_index: Option<usize>,
    /// Also compute bootstrap standard errors with this many replicates.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// A failure classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn dataset_is_validation(e: &DatasetError) -> bool {
    !matches!(e, DatasetError::Io(_))
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        if dataset_is_validation(&e) {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<FpmError> for CliError {
    fn from(e: FpmError) -> Self {
        match &e {
            FpmError::Dataset(d) if dataset_is_validation(d) => CliError::Validation(e.to_string()),
            FpmError::InvalidSpec(_)
            | FpmError::DimensionMismatch { .. }
            | FpmError::Corrupt(_)
            | FpmError::VersionMismatch { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<NonparamError> for CliError {
    fn from(e: NonparamError) -> Self {
        match e {
            NonparamError::Dataset(d) => d.into(),
            NonparamError::EmptyGroup(_) => CliError::Validation(e.to_string()),
            NonparamError::Csv(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<StandardizeError> for CliError {
    fn from(e: StandardizeError) -> Self {
        use StandardizeError as S;
        match e {
            S::Fpm(f) => f.into(),
            S::Dataset(d) => d.into(),
            S::ModelCount { .. }
            | S::UnknownOverride(_)
            | S::UnknownSource(_)
            | S::MissingCovariate(_)
            | S::InvalidTStar(_)
            | S::InvalidTime(_)
            | S::ScenarioMissingColumn { .. }
            | S::Parse(_)
            | S::InvalidRequest(_)
            | S::RowOutOfRange { .. }
            | S::EmptyPopulation => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Dataset(d) => d.into(),
            AnalysisError::Fpm(f) => f.into(),
            AnalysisError::Nonparam(n) => n.into(),
            AnalysisError::Standardize(s) => s.into(),
            AnalysisError::UnknownRecipe(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Applies `CRSTD_THREADS` to the global worker pool.
pub fn configure_threads() -> CliResult<Option<usize>> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        invalid(format!(
            "{THREADS_ENV} must be a positive integer, got `{v}`"
        ))
    })?;
    // A second initialisation in the same process (tests) is harmless.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(Some(n))
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!(
            "input file `{}` does not exist",
            path.display()
        )))
    }
}

fn load_input(input: &Input) -> CliResult<SurvivalFrame> {
    require_file(&input.data)?;
    let raw = dataset::load_csv(&input.data, &Schema::new())?;
    match (&input.time, &input.event) {
        (Some(t), Some(e)) => Ok(raw.with_roles(t, e)?),
        _ => Ok(dataset::prepare_prostate(&raw)?),
    }
}

/// Parses `start:stop:points`.
pub fn parse_timevar(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || invalid(format!("--timevar `{s}`: expected start:stop:points"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let points: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if points == 0 || !(stop >= start) || start < 0.0 {
        return Err(bad());
    }
    Ok(standardize::time_grid(start, stop, points))
}

fn parse_tvc(s: &str) -> CliResult<(String, usize)> {
    let (c, df) = s
        .split_once(':')
        .ok_or_else(|| invalid(format!("--tvc `{s}`: expected column:df")))?;
    let df: usize = df
        .parse()
        .map_err(|_| invalid(format!("--tvc `{s}`: df is not an integer")))?;
    Ok((c.to_string(), df))
}

fn parse_at(s: &str, index: usize) -> CliResult<AtScenario> {
    let (label, body) = match s.split_once(':') {
        Some((l, b)) if !l.contains('=') => (l.trim().to_string(), b),
        _ => (format!("at{}", index + 1), s),
    };
    Ok(AtScenario::parse(body, label)?)
}

fn manifest_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}.manifest.json"))
}

fn write_manifest(path: &Path, command: &str, mut body: serde_json::Value) -> CliResult<()> {
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    body["command"] = json!(command);
    body["software_version"] = json!(env!("CARGO_PKG_VERSION"));
    body["threads"] = json!(rayon::current_num_threads());
    body["timestamp"] = json!(ts);
    let text = serde_json::to_string_pretty(&body).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

fn create_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Prep { data, out } => {
            require_file(&data)?;
            let raw = dataset::load_csv(&data, &Schema::prostate_raw())?;
            let prepared = dataset::prepare_prostate(&raw)?;
            create_parent(&out)?;
            prepared.write_csv(fs::File::create(&out)?)?;
            write_manifest(
                &manifest_path(&out),
                "prep",
                json!({ "input": data, "output": out, "rows_in": raw.n_rows(), "rows_out": prepared.n_rows() }),
            )
        }
        Command::Km {
            input,
            group,
            failure_code,
            exit_time,
            out,
        } => {
            let frame = load_input(&input)?;
            let decl = DeclarationSpec {
                failure: failure_code.map_or(Failure::AnyEvent, Failure::Code),
                exit_time,
            };
            let curves = nonparam::kaplan_meier_failure(&frame, &decl, Some(&group), None)?;
            create_parent(&out)?;
            nonparam::write_curves_csv(&curves, fs::File::create(&out)?)?;
            write_manifest(
                &manifest_path(&out),
                "km",
                json!({ "input": input.data, "output": out, "group": group, "declaration": decl }),
            )
        }
        Command::Aj {
            input,
            group,
            causes,
            exit_time,
            out,
        } => {
            let frame = load_input(&input)?;
            let curves =
                nonparam::aalen_johansen_cif(&frame, exit_time, &causes, Some(&group), None)?;
            create_parent(&out)?;
            nonparam::write_curves_csv(&curves, fs::File::create(&out)?)?;
            write_manifest(
                &manifest_path(&out),
                "aj",
                json!({ "input": input.data, "output": out, "group": group, "causes": causes, "exit_time": exit_time }),
            )
        }
        Command::Fit {
            input,
            failure_code,
            exit_time,
            covariates,
            df,
            tvc,
            no_orthog,
            centiles,
            out,
        } => {
            let rule = match centiles.as_str() {
                "interpolated" => CentileRule::Interpolated,
                "empirical" => CentileRule::EmpiricalAverage,
                other => {
                    return Err(invalid(format!(
                        "--centiles `{other}`: expected interpolated or empirical"
                    )))
                }
            };
            let mut spec = ModelSpec::new(&covariates, df, failure_code, exit_time)
                .orthogonal(!no_orthog)
                .centile_rule(rule);
            for t in &tvc {
                let (c, d) = parse_tvc(t)?;
                spec = spec.with_tvc(&c, d);
            }
            spec.validate()?;
            let frame = load_input(&input)?;
            for c in &spec.covariates {
                if !frame.has_column(c) {
                    return Err(invalid(format!(
                        "covariate column `{c}` is not in the data"
                    )));
                }
            }
            let fit = fpm::fit(&spec, &frame)?;
            create_parent(&out)?;
            fpm::save_fit(&fit, &out)?;
            write_manifest(
                &manifest_path(&out),
                "fit",
                json!({
                    "input": input.data,
                    "output": out,
                    "loglik": fit.loglik,
                    "iterations": fit.iterations,
                    "n_obs": fit.n_obs,
                    "n_events": fit.n_events,
                    "coefficients": fit.coefficients(0.95),
                }),
            )
        }
        Command::Standsurv(a) => standsurv(a),
        Command::Recipe {
            name,
            data,
            out_dir,
            timevar,
            t_star,
            nodes,
            ci_level,
        } => {
            if !RECIPES.contains(&name.as_str()) {
                return Err(invalid(format!(
                    "unknown recipe `{name}` (known: {})",
                    RECIPES.join(", ")
                )));
            }
            let grid = parse_timevar(&timevar)?;
            let params = RecipeParams {
                grid_start: grid[0],
                grid_stop: *grid.last().expect("non-empty grid"),
                grid_points: grid.len(),
                t_star,
                nodes,
                ci_level,
            };
            if !(t_star > 0.0) {
                return Err(invalid("--t-star must be positive"));
            }
            let frame = load_input(&Input {
                data,
                time: None,
                event: None,
            })?;
            let output = analysis::run_recipe(&name, &frame, &params)?;
            output.write_to(&out_dir).map_err(CliError::from)?;
            Ok(())
        }
    }
}

fn standsurv(a: StandsurvArgs) -> CliResult<()> {
    let estimand: Estimand = a.estimand.parse()?;
    let scenarios =
        a.at.iter()
            .enumerate()
            .map(|(i, s)| parse_at(s, i))
            .collect::<CliResult<Vec<_>>>()?;
    let times = match (&a.timevar, a.t_star) {
        (Some(tv), None) => parse_timevar(tv)?,
        (None, Some(t)) => vec![t],
        (None, None) => return Err(invalid("one of --timevar or --t-star is required")),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    if a.reference == 0 || a.reference > scenarios.len() {
        return Err(invalid(format!(
            "--reference {} out of range 1..={}",
            a.reference,
            scenarios.len()
        )));
    }
    let labels: Vec<String> = a
        .models
        .iter()
        .map(|p| {
            p.file_stem()
                .map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
        })
        .collect();
    for m in &a.models {
        require_file(m)?;
    }
    let fits = a
        .models
        .iter()
        .map(fpm::load_fit)
        .collect::<Result<Vec<_>, _>>()?;
    let mut req = StandardizeRequest::new(estimand, times, scenarios)
        .reference(a.reference - 1)
        .ci_level(a.ci_level)
        .nodes(a.nodes)
        .labels(&labels);
    if let Some(c) = &a.contrast {
        req = req.contrast(c.parse::<ContrastKind>()?);
    }
    if let Some(w) = &a.lincom {
        req = req.lincom(w.clone());
    }
    if let Some(r) = a.row_index {
        req = req.population(Population::Row(r));
    }
    let frame = load_input(&a.input)?;
    let refs: Vec<_> = fits.iter().collect();
    let series = standardize::standardize(&refs, &frame, &req)?;
    create_parent(&a.out)?;
    write_series_csv(&series, fs::File::create(&a.out)?)?;
    let mut manifest = json!({
        "input": a.input.data,
        "models": a.models,
        "output": a.out,
        "run": SeriesManifest::new(&req, &series),
    });
    if let Some(reps) = a.bootstrap {
        let specs: Vec<ModelSpec> = fits.iter().map(|f| f.spec.clone()).collect();
        let boot = bootstrap_se(&specs, &frame, &req, reps, a.seed)?;
        let stem = a
            .out
            .file_stem()
            .map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
        let path = a.out.with_file_name(format!("{stem}.bootstrap.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Runtime(e.to_string()))?;
        let rec = |w: &mut csv::Writer<fs::File>, r: [String; 5]| {
            w.write_record(r)
                .map_err(|e| CliError::Runtime(e.to_string()))
        };
        rec(
            &mut w,
            ["time", "label", "cause", "estimate", "bootstrap_se"].map(String::from),
        )?;
        for (row, se) in boot.estimates.rows.iter().zip(&boot.se) {
            rec(
                &mut w,
                [
                    row.time.to_string(),
                    row.label.clone(),
                    row.cause.clone(),
                    row.estimate.to_string(),
                    se.to_string(),
                ],
            )?;
        }
        w.flush()?;
        manifest["bootstrap"] =
            json!({ "reps": reps, "seed": a.seed, "failed": boot.failed, "output": path });
    }
    write_manifest(&manifest_path(&a.out), "standsurv", manifest)
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Validation(m) => eprintln!("error: {m}"),
                CliError::Runtime(m) => eprintln!("error: {m}"),
            }
            e.exit_code()
        }
    }
}
