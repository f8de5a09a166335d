//! Canned analyses of the prepared prostate trial data.
//!
//! Every recipe is a pure function of the prepared frame and
//! [`RecipeParams`]; the CSV tables it returns are byte-identical across
//! runs.

use crate::dataset::{
    DatasetError, DeclarationSpec, Failure, SurvivalFrame, OTHER_DEATH, PROSTATE_DEATH,
};
use crate::fpm::{fit, FpmError, FpmFit, ModelSpec};
use crate::nonparam::{self, NonparamError};
use crate::spline::{centile_knots_with, CentileRule, SplineBasis, SplineError};
use crate::standardize::{
    self, separable_effects, time_grid, write_series_csv, AtScenario, ContrastKind, Estimand,
    Population, RowKind, SeparableRequest, SeriesManifest, StandardizeError, StandardizeRequest,
    StandardizedSeries,
};
use log::info;
use serde::Serialize;
use serde_json::json;
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Fpm(#[from] FpmError),
    #[error(transparent)]
    Nonparam(#[from] NonparamError),
    #[error(transparent)]
    Standardize(#[from] StandardizeError),
    #[error("unknown recipe `{0}` (known: {known})", known = RECIPES.join(", "))]
    UnknownRecipe(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

pub const RECIPES: &[&str] = &[
    "km-figure1",
    "total-cif",
    "rmft-60",
    "net-direct",
    "separable",
    "appendixB-interactions",
    "appendixB-age-splines",
    "appendixB-age-specific",
    "appendixB-ratio",
];

/// Covariates shared by both cause-specific models.
pub const BASE_COVARIATES: &[&str] = &["rx", "normalAct", "ageCat2", "ageCat3", "hx", "hgBinary"];

/// Ages of the non-marginal predictions.
pub const SPECIFIC_AGES: &[f64] = &[55.0, 65.0, 75.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecipeParams {
    pub grid_start: f64,
    pub grid_stop: f64,
    pub grid_points: usize,
    /// Administrative exit and restricted-mean horizon, months.
    pub t_star: f64,
    pub nodes: usize,
    pub ci_level: f64,
}

impl Default for RecipeParams {
    fn default() -> Self {
        RecipeParams {
            grid_start: 0.0,
            grid_stop: 60.0,
            grid_points: 121,
            t_star: 60.0,
            nodes: 50,
            ci_level: 0.95,
        }
    }
}

impl RecipeParams {
    pub fn grid(&self) -> Vec<f64> {
        time_grid(self.grid_start, self.grid_stop, self.grid_points)
    }
}

/// A named CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub csv: String,
}

#[derive(Debug, Clone)]
pub struct RecipeOutput {
    pub name: String,
    pub tables: Vec<Table>,
    pub fits: Vec<(String, FpmFit)>,
    pub series: Vec<(String, StandardizedSeries)>,
    pub manifest: serde_json::Value,
}

impl RecipeOutput {
    pub fn series(&self, name: &str) -> Option<&StandardizedSeries> {
        self.series.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn fit(&self, name: &str) -> Option<&FpmFit> {
        self.fits.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }

    /// Writes every table plus `manifest.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for t in &self.tables {
            fs::write(dir.join(&t.file), &t.csv)?;
        }
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises");
        fs::write(dir.join("manifest.json"), text)?;
        Ok(())
    }
}

/// Other-cause model: proportional hazards, baseline df 3.
pub fn other_cause_spec(t_star: f64) -> ModelSpec {
    ModelSpec::new(BASE_COVARIATES, 3, OTHER_DEATH, t_star)
}

/// Prostate model: baseline df 4, time-dependent treatment effect with df 2.
pub fn prostate_spec(t_star: f64) -> ModelSpec {
    ModelSpec::new(BASE_COVARIATES, 4, PROSTATE_DEATH, t_star).with_tvc("rx", 2)
}

/// Fits `(prostate, other)` with the main-text specifications.
pub fn fit_main_models(frame: &SurvivalFrame, t_star: f64) -> Result<(FpmFit, FpmFit)> {
    Ok((
        fit(&prostate_spec(t_star), frame)?,
        fit(&other_cause_spec(t_star), frame)?,
    ))
}

/// Treatment scenarios `rx = 0` and `rx = 1`.
pub fn treatment_scenarios() -> Vec<AtScenario> {
    vec![
        AtScenario::new("placebo").set("rx", 0.0),
        AtScenario::new("DES").set("rx", 1.0),
    ]
}

fn product(frame: &SurvivalFrame, a: &str, b: &str) -> Result<Vec<Option<f64>>> {
    let (x, y) = (frame.numeric(a)?, frame.numeric(b)?);
    Ok(x.iter().zip(y).map(|(x, y)| Some((*x)? * (*y)?)).collect())
}

/// Adds `ageCat2rx` and `ageCat3rx`.
pub fn add_age_interactions(frame: &SurvivalFrame) -> Result<SurvivalFrame> {
    let a2 = product(frame, "ageCat2", "rx")?;
    let a3 = product(frame, "ageCat3", "rx")?;
    Ok(frame
        .clone()
        .with_numeric("ageCat2rx", a2)?
        .with_numeric("ageCat3rx", a3)?)
}

/// Adds duplicated treatment columns `rx_c` and `rx_o`.
pub fn add_separable_columns(frame: &SurvivalFrame) -> Result<SurvivalFrame> {
    let rx = frame.numeric("rx")?.to_vec();
    Ok(frame
        .clone()
        .with_numeric("rx_c", rx.clone())?
        .with_numeric("rx_o", rx)?)
}

/// Orthogonalised restricted cubic spline of age with df 3 (knots at age
/// centiles), added as `agercs1..3` with treatment interactions
/// `agercs1rx..3rx`. Returns the basis for evaluation at scalar ages.
pub fn add_age_splines(frame: &SurvivalFrame) -> Result<(SurvivalFrame, SplineBasis)> {
    let age = frame.numeric("age")?;
    let present: Vec<f64> = age.iter().flatten().copied().collect();
    let mask = vec![true; present.len()];
    let knots = centile_knots_with(&present, 3, &mask, CentileRule::default())?;
    let basis = SplineBasis::orthogonalized(knots, &present)?;
    let mut cols: Vec<Vec<Option<f64>>> = (0..3).map(|_| Vec::with_capacity(age.len())).collect();
    for a in age {
        match a {
            Some(a) => {
                for (j, v) in basis.eval_scalar(*a).into_iter().enumerate() {
                    cols[j].push(Some(v));
                }
            }
            None => cols.iter_mut().for_each(|c| c.push(None)),
        }
    }
    let mut out = frame.clone();
    for (j, c) in cols.into_iter().enumerate() {
        out = out.with_numeric(format!("agercs{}", j + 1), c)?;
    }
    for j in 1..=3 {
        let p = product(&out, &format!("agercs{j}"), "rx")?;
        out = out.with_numeric(format!("agercs{j}rx"), p)?;
    }
    Ok((out, basis))
}

fn age_spline_covariates() -> Vec<&'static str> {
    vec![
        "rx",
        "normalAct",
        "agercs1",
        "agercs2",
        "agercs3",
        "hx",
        "hgBinary",
        "agercs1rx",
        "agercs2rx",
        "agercs3rx",
    ]
}

fn series_csv(series: &StandardizedSeries) -> Result<String> {
    let mut buf = Vec::new();
    write_series_csv(series, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

fn coefficient_csv(f: &FpmFit, level: f64) -> String {
    let mut s = String::from("name,estimate,se,exp_estimate,exp_se,exp_lci,exp_uci\n");
    for c in f.coefficients(level) {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.name, c.estimate, c.se, c.exp_estimate, c.exp_se, c.exp_lci, c.exp_uci
        ));
    }
    s
}

fn model_summary(f: &FpmFit) -> serde_json::Value {
    let tvc: Vec<serde_json::Value> = f
        .spec
        .tvc
        .iter()
        .zip(f.structure.tvc_bases())
        .map(|(t, b)| json!({ "covariate": t.covariate, "knots": b.knots().knots() }))
        .collect();
    json!({
        "spec": f.spec,
        "loglik": f.loglik,
        "n_obs": f.n_obs,
        "n_events": f.n_events,
        "iterations": f.iterations,
        "baseline_knots": f.structure.baseline().knots().knots(),
        "tvc_knots": tvc,
    })
}

struct Builder {
    name: String,
    params: RecipeParams,
    tables: Vec<Table>,
    fits: Vec<(String, FpmFit)>,
    series: Vec<(String, StandardizedSeries)>,
    runs: Vec<serde_json::Value>,
    extra: serde_json::Map<String, serde_json::Value>,
    n_rows: usize,
}

impl Builder {
    fn new(name: &str, params: RecipeParams, frame: &SurvivalFrame) -> Self {
        Builder {
            name: name.into(),
            params,
            tables: Vec::new(),
            fits: Vec::new(),
            series: Vec::new(),
            runs: Vec::new(),
            extra: serde_json::Map::new(),
            n_rows: frame.n_rows(),
        }
    }

    fn fit(&mut self, label: &str, f: FpmFit) {
        self.tables.push(Table {
            file: format!("coefficients_{label}.csv"),
            csv: coefficient_csv(&f, self.params.ci_level),
        });
        self.fits.push((label.into(), f));
    }

    fn series(
        &mut self,
        label: &str,
        req: &StandardizeRequest,
        s: StandardizedSeries,
    ) -> Result<()> {
        self.tables.push(Table {
            file: format!("{label}.csv"),
            csv: series_csv(&s)?,
        });
        self.runs
            .push(json!({ "table": format!("{label}.csv"), "run": SeriesManifest::new(req, &s) }));
        self.series.push((label.into(), s));
        Ok(())
    }

    fn finish(self) -> RecipeOutput {
        let models: serde_json::Map<String, serde_json::Value> = self
            .fits
            .iter()
            .map(|(n, f)| (n.clone(), model_summary(f)))
            .collect();
        let mut manifest = json!({
            "recipe": self.name,
            "software_version": env!("CARGO_PKG_VERSION"),
            "params": self.params,
            "n_rows": self.n_rows,
            "models": models,
            "standardisations": self.runs,
            "tables": self.tables.iter().map(|t| t.file.clone()).collect::<Vec<_>>(),
        });
        for (k, v) in self.extra {
            manifest[k] = v;
        }
        RecipeOutput {
            name: self.name,
            tables: self.tables,
            fits: self.fits,
            series: self.series,
            manifest,
        }
    }
}

fn cif_request(
    p: &RecipeParams,
    scenarios: Vec<AtScenario>,
    contrast: ContrastKind,
) -> StandardizeRequest {
    StandardizeRequest::new(Estimand::Cif, p.grid(), scenarios)
        .contrast(contrast)
        .ci_level(p.ci_level)
        .nodes(p.nodes)
        .labels(&["prostate", "other"])
}

fn age_spline_scenarios() -> Vec<AtScenario> {
    let mut at1 = AtScenario::new("placebo").set("rx", 0.0);
    let mut at2 = AtScenario::new("DES").set("rx", 1.0);
    for j in 1..=3 {
        at1 = at1.set(&format!("agercs{j}rx"), 0.0);
        at2 = at2.copy(&format!("agercs{j}rx"), &format!("agercs{j}"));
    }
    vec![at1, at2]
}

fn age_spline_models(
    frame: &SurvivalFrame,
    p: &RecipeParams,
) -> Result<(SurvivalFrame, SplineBasis, FpmFit, FpmFit)> {
    let (frame, basis) = add_age_splines(frame)?;
    let prostate = fit(
        &ModelSpec::new(&age_spline_covariates(), 4, PROSTATE_DEATH, p.t_star).with_tvc("rx", 2),
        &frame,
    )?;
    let other = fit(&other_cause_spec(p.t_star), &frame)?;
    Ok((frame, basis, prostate, other))
}

fn age_basis_json(basis: &SplineBasis) -> serde_json::Value {
    let r = basis.r_matrix().expect("age basis is orthogonalised");
    let rows: Vec<Vec<f64>> = (0..r.nrows())
        .map(|i| r.row(i).iter().copied().collect())
        .collect();
    json!({ "knots": basis.knots().knots(), "r_matrix": rows })
}

/// Runs the named recipe on a prepared frame.
pub fn run_recipe(name: &str, frame: &SurvivalFrame, p: &RecipeParams) -> Result<RecipeOutput> {
    info!("running recipe {name}");
    let mut b = Builder::new(name, *p, frame);
    match name {
        "km-figure1" => {
            let decl = DeclarationSpec {
                failure: Failure::AnyEvent,
                exit_time: p.t_star,
            };
            let curves = nonparam::kaplan_meier_failure(frame, &decl, Some("rx"), None)?;
            let mut buf = Vec::new();
            nonparam::write_curves_csv(&curves, &mut buf)?;
            b.tables.push(Table {
                file: "km_failure.csv".into(),
                csv: String::from_utf8(buf).expect("csv is utf-8"),
            });
        }
        "total-cif" => {
            let (pr, ot) = fit_main_models(frame, p.t_star)?;
            let req = cif_request(p, treatment_scenarios(), ContrastKind::Difference);
            let s = standardize::standardize(&[&pr, &ot], frame, &req)?;
            b.fit("prostate", pr);
            b.fit("other", ot);
            b.series("total_cif", &req, s)?;
        }
        "rmft-60" => {
            let (pr, ot) = fit_main_models(frame, p.t_star)?;
            let base =
                StandardizeRequest::new(Estimand::Rmft, vec![p.t_star], treatment_scenarios())
                    .ci_level(p.ci_level)
                    .nodes(p.nodes)
                    .labels(&["prostate", "other"]);
            let req = base.clone().contrast(ContrastKind::Difference);
            let s = standardize::standardize(&[&pr, &ot], frame, &req)?;
            b.series("rmft", &req, s)?;
            for (label, w) in [
                ("rmft_total_placebo", [1.0, 1.0, 0.0, 0.0]),
                ("rmft_total_DES", [0.0, 0.0, 1.0, 1.0]),
            ] {
                let req = base.clone().lincom(w.to_vec());
                let mut s = standardize::standardize(&[&pr, &ot], frame, &req)?;
                s.rows.retain(|r| r.kind == RowKind::Lincom);
                let tag = w
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(" ");
                for r in &mut s.rows {
                    r.label = format!("lincom({tag})");
                }
                b.series(label, &req, s)?;
            }
            b.fit("prostate", pr);
            b.fit("other", ot);
        }
        "net-direct" => {
            let pr = fit(&prostate_spec(p.t_star), frame)?;
            let req = StandardizeRequest::new(Estimand::Failure, p.grid(), treatment_scenarios())
                .contrast(ContrastKind::Difference)
                .ci_level(p.ci_level)
                .labels(&["prostate"]);
            let s = standardize::standardize(&[&pr], frame, &req)?;
            b.fit("prostate", pr);
            b.series("net_failure", &req, s)?;
        }
        "separable" => {
            let f = add_separable_columns(frame)?;
            let mut cov_c = BASE_COVARIATES.to_vec();
            cov_c[0] = "rx_c";
            let mut cov_o = BASE_COVARIATES.to_vec();
            cov_o[0] = "rx_o";
            let pr = fit(
                &ModelSpec::new(&cov_c, 4, PROSTATE_DEATH, p.t_star).with_tvc("rx_c", 2),
                &f,
            )?;
            let ot = fit(&ModelSpec::new(&cov_o, 3, OTHER_DEATH, p.t_star), &f)?;
            let mut req = SeparableRequest::new("rx_c", "rx_o", p.grid());
            req.ci_level = p.ci_level;
            req.nodes = p.nodes;
            req.model_labels = vec!["prostate".into(), "other".into()];
            let s = separable_effects(&[&pr, &ot], &f, &req)?;
            let echo = cif_request(p, req.scenarios.clone(), ContrastKind::Difference);
            b.fit("prostate", pr);
            b.fit("other", ot);
            b.series("separable", &echo, s)?;
        }
        "appendixB-interactions" => {
            let f = add_age_interactions(frame)?;
            let mut cov = BASE_COVARIATES.to_vec();
            cov.extend(["ageCat2rx", "ageCat3rx"]);
            let pr = fit(
                &ModelSpec::new(&cov, 4, PROSTATE_DEATH, p.t_star).with_tvc("rx", 2),
                &f,
            )?;
            let ot = fit(&other_cause_spec(p.t_star), &f)?;
            let sc = vec![
                AtScenario::new("placebo")
                    .set("rx", 0.0)
                    .set("ageCat2rx", 0.0)
                    .set("ageCat3rx", 0.0),
                AtScenario::new("DES")
                    .set("rx", 1.0)
                    .copy("ageCat2rx", "ageCat2")
                    .copy("ageCat3rx", "ageCat3"),
            ];
            let req = cif_request(p, sc, ContrastKind::Difference);
            let s = standardize::standardize(&[&pr, &ot], &f, &req)?;
            b.fit("prostate", pr);
            b.fit("other", ot);
            b.series("interactions_cif", &req, s)?;
        }
        "appendixB-age-splines" | "appendixB-ratio" => {
            let (f, basis, pr, ot) = age_spline_models(frame, p)?;
            let (label, kind) = if name == "appendixB-ratio" {
                ("ratio_cif", ContrastKind::Ratio)
            } else {
                ("age_splines_cif", ContrastKind::Difference)
            };
            let req = cif_request(p, age_spline_scenarios(), kind);
            let s = standardize::standardize(&[&pr, &ot], &f, &req)?;
            b.extra.insert("age_spline".into(), age_basis_json(&basis));
            b.fit("prostate", pr);
            b.fit("other", ot);
            b.series(label, &req, s)?;
        }
        "appendixB-age-specific" => {
            let (f, basis, pr, ot) = age_spline_models(frame, p)?;
            let mut runs = Vec::new();
            for &age in SPECIFIC_AGES {
                let c = basis.eval_scalar(age);
                let mut at1 = AtScenario::new("placebo").set("rx", 0.0);
                let mut at2 = AtScenario::new("DES").set("rx", 1.0);
                for (name, v) in [("normalAct", 1.0), ("hx", 0.0), ("hgBinary", 1.0)] {
                    at1 = at1.set(name, v);
                    at2 = at2.set(name, v);
                }
                for (j, cj) in c.iter().enumerate() {
                    at1 = at1
                        .set(&format!("agercs{}", j + 1), *cj)
                        .set(&format!("agercs{}rx", j + 1), 0.0);
                    at2 = at2
                        .set(&format!("agercs{}", j + 1), *cj)
                        .set(&format!("agercs{}rx", j + 1), *cj);
                }
                let req = cif_request(p, vec![at1, at2], ContrastKind::Difference)
                    .population(Population::Row(0));
                let s = standardize::standardize(&[&pr, &ot], &f, &req)?;
                runs.push(json!({ "age": age, "spline_values": c }));
                b.series(&format!("age_specific_cif_{age}"), &req, s)?;
            }
            b.extra.insert("age_spline".into(), age_basis_json(&basis));
            b.extra.insert("ages".into(), json!(runs));
            b.fit("prostate", pr);
            b.fit("other", ot);
        }
        other => return Err(AnalysisError::UnknownRecipe(other.into())),
    }
    Ok(b.finish())
}
