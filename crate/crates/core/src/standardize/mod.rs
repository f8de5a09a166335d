//! Regression standardisation over one or two cause-specific models.
//!
//! For each scenario the covariates of every population row are overridden,
//! the model predictions are averaged, and delta-method standard errors are
//! computed from central finite differences with respect to the stacked
//! parameter vector of all models. With two models the all-cause survival is
//! `S_c·S_o` and the cause-`k` incidence is `∫₀ᵗ S(u) h_k(u) du`.
//!
//! Quadrature integrals over `[0, t]` use the substitution `u = t·v³`, which
//! removes the `u^(b−1)` behaviour of spline hazards at the origin, followed
//! by a Gauss–Legendre rule in `v`.

mod bootstrap;
mod delta;
mod output;
mod quadrature;
mod scenario;

pub use bootstrap::{bootstrap_se, BootstrapSummary};
pub use delta::{block_diag, delta_method, fd_step, jacobian, quadratic_se};
pub use output::{write_series_csv, SeriesManifest};
pub use quadrature::{gauss_legendre, gauss_legendre_on, gauss_legendre_rule};
pub use scenario::{AtScenario, Override};

use crate::dataset::{DatasetError, SurvivalFrame};
use crate::fpm::{FpmError, FpmFit};
use indexmap::IndexMap;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StandardizeError {
    #[error(transparent)]
    Fpm(#[from] FpmError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("estimand `{estimand}` needs {needed} model(s), {found} supplied")]
    ModelCount {
        estimand: Estimand,
        needed: &'static str,
        found: usize,
    },
    #[error("override column `{0}` is not a covariate of any model")]
    UnknownOverride(String),
    #[error("copy source `{0}` is not a column of the data")]
    UnknownSource(String),
    #[error("covariate `{0}` is neither in the data nor set by every scenario")]
    MissingCovariate(String),
    #[error("restricted mean horizon must be positive, found {0}")]
    InvalidTStar(f64),
    #[error("evaluation time must be finite and non-negative, found {0}")]
    InvalidTime(f64),
    #[error("ratio contrast at t={time}: reference `{reference}` has estimate 0")]
    RatioReferenceZero { time: f64, reference: String },
    #[error("non-finite finite-difference gradient for parameter {parameter} (output {output})")]
    NonFiniteGradient { parameter: usize, output: usize },
    #[error("scenario `{scenario}` does not set `{column}`")]
    ScenarioMissingColumn { scenario: String, column: String },
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("population row {row} is out of range (data has {n} rows)")]
    RowOutOfRange { row: usize, n: usize },
    #[error("no population rows with complete covariates")]
    EmptyPopulation,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, StandardizeError>;

/// Two-sided standard normal quantile for confidence level `level`.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + 0.5 * level)
}

/// Evenly spaced grid of `points` values from `start` to `stop`.
pub fn time_grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..points)
            .map(|i| start + (stop - start) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    /// All-cause survival; with two models the product of both survivals.
    Survival,
    /// `1 − S` from a single model (all-cause or net probability).
    Failure,
    /// Cause-specific cumulative incidence, two models.
    Cif,
    /// Restricted mean failure time per cause, two models.
    Rmft,
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimand::Survival => "survival",
            Estimand::Failure => "failure",
            Estimand::Cif => "cif",
            Estimand::Rmft => "rmft",
        })
    }
}

impl FromStr for Estimand {
    type Err = StandardizeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "survival" => Ok(Estimand::Survival),
            "failure" => Ok(Estimand::Failure),
            "cif" => Ok(Estimand::Cif),
            "rmft" => Ok(Estimand::Rmft),
            _ => Err(StandardizeError::Parse(format!("unknown estimand `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastKind {
    Difference,
    Ratio,
}

impl FromStr for ContrastKind {
    type Err = StandardizeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "difference" => Ok(ContrastKind::Difference),
            "ratio" => Ok(ContrastKind::Ratio),
            _ => Err(StandardizeError::Parse(format!("unknown contrast `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    All,
    /// Predictions for one row only (no averaging).
    Row(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeRequest {
    pub estimand: Estimand,
    pub times: Vec<f64>,
    pub scenarios: Vec<AtScenario>,
    pub contrast: Option<ContrastKind>,
    pub reference: usize,
    pub lincom: Option<Vec<f64>>,
    pub ci_level: f64,
    pub population: Population,
    pub nodes: usize,
    /// Cause label per model.
    pub model_labels: Vec<String>,
    /// When false only point estimates are produced.
    pub delta_method: bool,
}

impl StandardizeRequest {
    pub fn new(estimand: Estimand, times: Vec<f64>, scenarios: Vec<AtScenario>) -> Self {
        StandardizeRequest {
            estimand,
            times,
            scenarios,
            contrast: None,
            reference: 0,
            lincom: None,
            ci_level: 0.95,
            population: Population::All,
            nodes: 50,
            model_labels: Vec::new(),
            delta_method: true,
        }
    }

    pub fn contrast(mut self, kind: ContrastKind) -> Self {
        self.contrast = Some(kind);
        self
    }

    pub fn reference(mut self, index: usize) -> Self {
        self.reference = index;
        self
    }

    pub fn lincom(mut self, weights: Vec<f64>) -> Self {
        self.lincom = Some(weights);
        self
    }

    pub fn ci_level(mut self, level: f64) -> Self {
        self.ci_level = level;
        self
    }

    pub fn population(mut self, population: Population) -> Self {
        self.population = population;
        self
    }

    pub fn nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes;
        self
    }

    pub fn labels<S: AsRef<str>>(mut self, labels: &[S]) -> Self {
        self.model_labels = labels.iter().map(|s| s.as_ref().to_string()).collect();
        self
    }

    pub fn without_se(mut self) -> Self {
        self.delta_method = false;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Scenario,
    Difference,
    Ratio,
    Lincom,
}

impl RowKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RowKind::Scenario => "scenario",
            RowKind::Difference => "difference",
            RowKind::Ratio => "ratio",
            RowKind::Lincom => "lincom",
        }
    }
}

/// One estimate at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRow {
    pub time: f64,
    pub label: String,
    pub kind: RowKind,
    pub cause: String,
    pub estimate: f64,
    pub se: f64,
    pub lci: f64,
    pub uci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StandardizedSeries {
    pub estimand: Estimand,
    pub rows: Vec<SeriesRow>,
    pub n_population: usize,
    pub n_dropped: usize,
    /// Distinct covariate patterns per scenario after collapsing.
    pub n_patterns: Vec<usize>,
    pub nodes: usize,
    pub ci_level: f64,
    /// Largest time covered by any model's baseline knots.
    pub support_end: f64,
    pub extrapolated_times: Vec<f64>,
}

impl StandardizedSeries {
    pub fn get(&self, time: f64, label: &str, cause: &str) -> Option<&SeriesRow> {
        self.rows
            .iter()
            .find(|r| (r.time - time).abs() < 1e-9 && r.label == label && r.cause == cause)
    }

    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.label) {
                out.push(r.label.clone());
            }
        }
        out
    }

    /// Rows with `label`/`cause` in time order.
    pub fn curve(&self, label: &str, cause: &str) -> Vec<&SeriesRow> {
        self.rows
            .iter()
            .filter(|r| r.label == label && r.cause == cause)
            .collect()
    }
}

/// Basis values (and log-time derivatives) of one model at one time point,
/// for the parameters after the covariate block and before the intercept.
struct PointBasis {
    val: Vec<f64>,
    der: Vec<f64>,
}

struct ModelView<'a> {
    fit: &'a FpmFit,
    offset: usize,
    n_cov: usize,
    /// `(start, len, covariate)` of each time-dependent block relative to the
    /// parameter vector.
    tvc: Vec<(usize, usize, usize)>,
    df0: usize,
}

impl<'a> ModelView<'a> {
    fn new(fit: &'a FpmFit, offset: usize) -> Self {
        let st = &fit.structure;
        let n_cov = st.n_covariates();
        let df0 = st.baseline().df();
        let mut start = n_cov + df0;
        let tvc = st
            .tvc_bases()
            .iter()
            .zip(st.tvc_covariates())
            .map(|(b, &c)| {
                let s = start;
                start += b.df();
                (s, b.df(), c)
            })
            .collect();
        ModelView {
            fit,
            offset,
            n_cov,
            tvc,
            df0,
        }
    }

    fn p(&self) -> usize {
        self.fit.theta.len()
    }

    fn basis_at(&self, u: f64) -> PointBasis {
        let st = &self.fit.structure;
        let lnu = u.ln();
        let mut val = st.baseline().eval_scalar(lnu);
        let mut der = st.baseline().deriv_scalar(lnu);
        for b in st.tvc_bases() {
            val.extend(b.eval_scalar(lnu));
            der.extend(b.deriv_scalar(lnu));
        }
        PointBasis { val, der }
    }

    /// Baseline and tvc contributions at one point: `(base, base slope,
    /// [tvc value, tvc slope] per term)`.
    fn parts(&self, theta: &[f64], pb: &PointBasis, out: &mut [f64]) {
        let th = &theta[self.offset..self.offset + self.p()];
        let g = &th[self.n_cov..self.n_cov + self.df0];
        out[0] = dot(&pb.val[..self.df0], g);
        out[1] = dot(&pb.der[..self.df0], g);
        let mut k = self.df0;
        for (j, &(start, len, _)) in self.tvc.iter().enumerate() {
            let d = &th[start..start + len];
            out[2 + 2 * j] = dot(&pb.val[k..k + len], d);
            out[3 + 2 * j] = dot(&pb.der[k..k + len], d);
            k += len;
        }
    }

    fn n_parts(&self) -> usize {
        2 + 2 * self.tvc.len()
    }

    /// `x·β + intercept`.
    fn lp(&self, theta: &[f64], x: &[f64]) -> f64 {
        let th = &theta[self.offset..self.offset + self.p()];
        dot(x, &th[..self.n_cov]) + th[self.p() - 1]
    }

    fn eta_slope(&self, lp: f64, x: &[f64], parts: &[f64]) -> (f64, f64) {
        let mut eta = lp + parts[0];
        let mut slope = parts[1];
        for (j, &(_, _, c)) in self.tvc.iter().enumerate() {
            eta += x[c] * parts[2 + 2 * j];
            slope += x[c] * parts[3 + 2 * j];
        }
        (eta, slope)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A collapsed covariate pattern: weight (row count) and covariates per model.
struct Pattern {
    weight: f64,
    x: Vec<Vec<f64>>,
}

/// Quadrature points of one evaluation time with their integration factors.
struct TimePoints {
    /// Per point: `u`, factor multiplying `S·exp(η_k)·∂η_k/∂ln u`.
    points: Vec<(f64, f64)>,
    /// Per model, per point.
    basis: Vec<Vec<PointBasis>>,
}

struct Engine<'a> {
    estimand: Estimand,
    models: Vec<ModelView<'a>>,
    patterns: Vec<Vec<Pattern>>,
    n_population: f64,
    n_causes: usize,
    /// Knot locations on the time scale; the spline integrand is only C² there.
    breaks: Vec<f64>,
}

fn knot_times(models: &[ModelView<'_>]) -> Vec<f64> {
    let mut out: Vec<f64> = models
        .iter()
        .flat_map(|m| {
            let st = &m.fit.structure;
            std::iter::once(st.baseline())
                .chain(st.tvc_bases())
                .flat_map(|b| b.knots().knots().iter().map(|k| k.exp()))
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    out
}

impl Engine<'_> {
    fn n_out(&self) -> usize {
        self.patterns.len() * self.n_causes
    }

    fn points(&self, t: f64, nodes: usize) -> TimePoints {
        let points: Vec<(f64, f64)> = match self.estimand {
            Estimand::Survival | Estimand::Failure => vec![(t, 1.0)],
            Estimand::Cif | Estimand::Rmft => {
                // Composite rule with panels split at the knots. The first
                // panel uses u = b·v³ to absorb the power-law behaviour at 0;
                // the others integrate in s = ln u, where h du = exp(η)·∂η/∂s ds.
                let mut edges: Vec<f64> = self
                    .breaks
                    .iter()
                    .copied()
                    .filter(|&b| b > 0.0 && b < t)
                    .collect();
                edges.push(t);
                // `nodes` is the budget for the whole integral, at least 8 per panel.
                let per_panel = nodes.div_ceil(edges.len()).max(8);
                let (v, w) = gauss_legendre_on(0.0, 1.0, per_panel);
                let mut pts = Vec::with_capacity(edges.len() * per_panel);
                let b0 = edges[0];
                for (&vi, &wi) in v.iter().zip(&w) {
                    // du = 3 b v² dv and h = exp(η)·slope/u, so h du = 3/v · exp(η)·slope dv.
                    pts.push((b0 * vi * vi * vi, 3.0 * wi / vi));
                }
                for pair in edges.windows(2) {
                    let (sa, sb) = (pair[0].ln(), pair[1].ln());
                    for (&vi, &wi) in v.iter().zip(&w) {
                        pts.push(((sa + (sb - sa) * vi).exp(), (sb - sa) * wi));
                    }
                }
                if self.estimand == Estimand::Rmft {
                    for p in &mut pts {
                        p.1 *= t - p.0;
                    }
                }
                pts
            }
        };
        let basis = self
            .models
            .iter()
            .map(|m| points.iter().map(|&(u, _)| m.basis_at(u)).collect())
            .collect();
        TimePoints { points, basis }
    }

    /// Standardised estimates at one time, indexed `scenario·K + cause`.
    fn evaluate(&self, theta: &[f64], tp: &TimePoints) -> Vec<f64> {
        let n_pts = tp.points.len();
        let parts: Vec<Vec<Vec<f64>>> = self
            .models
            .iter()
            .enumerate()
            .map(|(m, view)| {
                (0..n_pts)
                    .map(|i| {
                        let mut out = vec![0.0; view.n_parts()];
                        view.parts(theta, &tp.basis[m][i], &mut out);
                        out
                    })
                    .collect()
            })
            .collect();
        let k = self.n_causes;
        let n_models = self.models.len();
        let mut out = vec![0.0; self.n_out()];
        let mut eta = vec![0.0; n_models];
        let mut slope = vec![0.0; n_models];
        let mut lp = vec![0.0; n_models];
        for (s, pats) in self.patterns.iter().enumerate() {
            for pat in pats {
                for (m, view) in self.models.iter().enumerate() {
                    lp[m] = view.lp(theta, &pat.x[m]);
                }
                match self.estimand {
                    Estimand::Survival | Estimand::Failure => {
                        let mut cumhaz = 0.0;
                        for (m, view) in self.models.iter().enumerate() {
                            cumhaz += view.eta_slope(lp[m], &pat.x[m], &parts[m][0]).0.exp();
                        }
                        let surv = (-cumhaz).exp();
                        let v = if self.estimand == Estimand::Survival {
                            surv
                        } else {
                            -(-cumhaz).exp_m1()
                        };
                        out[s] += pat.weight * v;
                    }
                    Estimand::Cif | Estimand::Rmft => {
                        for (i, &(_, factor)) in tp.points.iter().enumerate() {
                            let mut cumhaz = 0.0;
                            for (m, view) in self.models.iter().enumerate() {
                                let (e, d) = view.eta_slope(lp[m], &pat.x[m], &parts[m][i]);
                                eta[m] = e.exp();
                                slope[m] = d;
                                cumhaz += eta[m];
                            }
                            let surv = (-cumhaz).exp();
                            for c in 0..k {
                                out[s * k + c] += pat.weight * factor * surv * eta[c] * slope[c];
                            }
                        }
                    }
                }
            }
        }
        for v in &mut out {
            *v /= self.n_population;
        }
        out
    }
}

fn check_models(estimand: Estimand, n: usize) -> Result<()> {
    let (ok, needed) = match estimand {
        Estimand::Survival => ((1..=2).contains(&n), "1 or 2"),
        Estimand::Failure => (n == 1, "1"),
        Estimand::Cif | Estimand::Rmft => (n == 2, "2"),
    };
    if ok {
        Ok(())
    } else {
        Err(StandardizeError::ModelCount {
            estimand,
            needed,
            found: n,
        })
    }
}

fn validate(models: &[&FpmFit], frame: &SurvivalFrame, req: &StandardizeRequest) -> Result<()> {
    check_models(req.estimand, models.len())?;
    if req.scenarios.is_empty() {
        return Err(StandardizeError::InvalidRequest(
            "at least one scenario is required".into(),
        ));
    }
    if req.reference >= req.scenarios.len() {
        return Err(StandardizeError::InvalidRequest(format!(
            "reference scenario {} out of range ({} scenarios)",
            req.reference,
            req.scenarios.len()
        )));
    }
    if req.contrast.is_some() && req.scenarios.len() < 2 {
        return Err(StandardizeError::InvalidRequest(
            "contrasts need at least two scenarios".into(),
        ));
    }
    if !(req.ci_level > 0.0 && req.ci_level < 1.0) {
        return Err(StandardizeError::InvalidRequest(format!(
            "ci level {} not in (0, 1)",
            req.ci_level
        )));
    }
    if req.nodes < 2 {
        return Err(StandardizeError::InvalidRequest(
            "quadrature needs at least 2 nodes".into(),
        ));
    }
    if req.times.is_empty() {
        return Err(StandardizeError::InvalidRequest(
            "no evaluation times".into(),
        ));
    }
    for &t in &req.times {
        if !(t.is_finite() && t >= 0.0) {
            return Err(StandardizeError::InvalidTime(t));
        }
        if req.estimand == Estimand::Rmft && t <= 0.0 {
            return Err(StandardizeError::InvalidTStar(t));
        }
    }
    if !req.model_labels.is_empty() && req.model_labels.len() != models.len() {
        return Err(StandardizeError::InvalidRequest(format!(
            "{} model labels for {} models",
            req.model_labels.len(),
            models.len()
        )));
    }
    let n_causes = match req.estimand {
        Estimand::Cif | Estimand::Rmft => models.len(),
        _ => 1,
    };
    if let Some(w) = &req.lincom {
        if w.len() != req.scenarios.len() * n_causes {
            return Err(StandardizeError::InvalidRequest(format!(
                "lincom needs {} weights (scenarios x causes), got {}",
                req.scenarios.len() * n_causes,
                w.len()
            )));
        }
    }
    for s in &req.scenarios {
        for (col, ov) in &s.assignments {
            if !models.iter().any(|m| m.covariates().contains(col)) {
                return Err(StandardizeError::UnknownOverride(col.clone()));
            }
            if let Override::Copy(src) = ov {
                if !frame.has_column(src) && s.get(src).is_none() {
                    return Err(StandardizeError::UnknownSource(src.clone()));
                }
            }
        }
    }
    for m in models {
        for c in m.covariates() {
            if !frame.has_column(c) && req.scenarios.iter().any(|s| s.get(c).is_none()) {
                return Err(StandardizeError::MissingCovariate(c.clone()));
            }
        }
    }
    if let Population::Row(r) = req.population {
        if r >= frame.n_rows() {
            return Err(StandardizeError::RowOutOfRange {
                row: r,
                n: frame.n_rows(),
            });
        }
    }
    Ok(())
}

/// Value of `column` in `row` under `scenario`; `None` when missing.
fn scenario_value(
    frame: &SurvivalFrame,
    scenario: &AtScenario,
    row: usize,
    column: &str,
) -> Result<Option<f64>> {
    match scenario.get(column) {
        Some(Override::Fixed(v)) => Ok(Some(*v)),
        Some(Override::Copy(src)) => match scenario.get(src) {
            Some(Override::Fixed(v)) => Ok(Some(*v)),
            _ => Ok(frame.value(row, src)?),
        },
        None => Ok(frame.value(row, column)?),
    }
}

fn build_patterns(
    models: &[&FpmFit],
    frame: &SurvivalFrame,
    req: &StandardizeRequest,
) -> Result<(Vec<Vec<Pattern>>, usize, usize)> {
    let rows: Vec<usize> = match req.population {
        Population::All => (0..frame.n_rows()).collect(),
        Population::Row(r) => vec![r],
    };
    // Covariate vectors per scenario, row, model; rows with any missing value are dropped.
    let mut per_row: Vec<Option<Vec<Vec<Vec<f64>>>>> = Vec::with_capacity(rows.len());
    for &r in &rows {
        let mut complete = true;
        let mut sc = Vec::with_capacity(req.scenarios.len());
        'scen: for s in &req.scenarios {
            let mut xs = Vec::with_capacity(models.len());
            for m in models {
                let mut x = Vec::with_capacity(m.covariates().len());
                for c in m.covariates() {
                    match scenario_value(frame, s, r, c)? {
                        Some(v) => x.push(v),
                        None => {
                            complete = false;
                            break 'scen;
                        }
                    }
                }
                xs.push(x);
            }
            sc.push(xs);
        }
        per_row.push(complete.then_some(sc));
    }
    let n_dropped = per_row.iter().filter(|r| r.is_none()).count();
    let kept: Vec<Vec<Vec<Vec<f64>>>> = per_row.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(StandardizeError::EmptyPopulation);
    }
    let mut patterns = Vec::with_capacity(req.scenarios.len());
    for s in 0..req.scenarios.len() {
        let mut index: IndexMap<Vec<u64>, usize> = IndexMap::new();
        let mut pats: Vec<Pattern> = Vec::new();
        for row in &kept {
            let key: Vec<u64> = row[s].iter().flatten().map(|v| v.to_bits()).collect();
            match index.get(&key) {
                Some(&i) => pats[i].weight += 1.0,
                None => {
                    index.insert(key, pats.len());
                    pats.push(Pattern {
                        weight: 1.0,
                        x: row[s].clone(),
                    });
                }
            }
        }
        patterns.push(pats);
    }
    Ok((patterns, kept.len(), n_dropped))
}

fn log_ci(est: f64, se: f64, z: f64) -> (f64, f64) {
    if est > 0.0 {
        (est * (-z * se / est).exp(), est * (z * se / est).exp())
    } else {
        (est, est)
    }
}

/// Standardised estimates, contrasts and linear combinations.
pub fn standardize(
    models: &[&FpmFit],
    frame: &SurvivalFrame,
    req: &StandardizeRequest,
) -> Result<StandardizedSeries> {
    validate(models, frame, req)?;
    let (patterns, n_population, n_dropped) = build_patterns(models, frame, req)?;
    let mut offset = 0;
    let views: Vec<ModelView> = models
        .iter()
        .map(|m| {
            let v = ModelView::new(m, offset);
            offset += m.theta.len();
            v
        })
        .collect();
    let theta: Vec<f64> = models
        .iter()
        .flat_map(|m| m.theta.iter().copied())
        .collect();
    let vcov = block_diag(&models.iter().map(|m| &m.vcov).collect::<Vec<_>>());
    let n_causes = match req.estimand {
        Estimand::Cif | Estimand::Rmft => models.len(),
        _ => 1,
    };
    let mut engine = Engine {
        estimand: req.estimand,
        models: views,
        patterns,
        n_population: n_population as f64,
        n_causes,
        breaks: Vec::new(),
    };
    engine.breaks = knot_times(&engine.models);
    let n_out = engine.n_out();
    let n_par = theta.len();

    // (estimates, jacobian) per time; t = 0 short-circuits.
    let per_time: Vec<(Vec<f64>, DMatrix<f64>)> = req
        .times
        .par_iter()
        .map(|&t| {
            if t == 0.0 {
                let v = if req.estimand == Estimand::Survival {
                    1.0
                } else {
                    0.0
                };
                return Ok((vec![v; n_out], DMatrix::zeros(n_out, n_par)));
            }
            let tp = engine.points(t, req.nodes);
            let est = engine.evaluate(&theta, &tp);
            let jac = if req.delta_method {
                jacobian(|th| engine.evaluate(th, &tp), &theta, n_out)?
            } else {
                DMatrix::from_element(n_out, n_par, f64::NAN)
            };
            Ok((est, jac))
        })
        .collect::<Result<_>>()?;

    let z = normal_quantile(req.ci_level);
    let labels: Vec<String> = if req.model_labels.is_empty() {
        (1..=models.len()).map(|i| format!("model{i}")).collect()
    } else {
        req.model_labels.clone()
    };
    let cause_label = |k: usize| -> String {
        if n_causes == models.len() {
            labels[k].clone()
        } else if models.len() == 1 {
            labels[0].clone()
        } else {
            "all".to_string()
        }
    };
    let se_of = |g: Vec<f64>| -> f64 {
        if req.delta_method {
            quadratic_se(&g, &vcov)
        } else {
            f64::NAN
        }
    };
    let grad = |jac: &DMatrix<f64>, r: usize| -> Vec<f64> { jac.row(r).iter().copied().collect() };

    let mut rows = Vec::new();
    for (&t, (est, jac)) in req.times.iter().zip(&per_time) {
        for (s, sc) in req.scenarios.iter().enumerate() {
            for k in 0..n_causes {
                let r = s * n_causes + k;
                let se = se_of(grad(jac, r));
                let (lci, uci) = log_ci(est[r], se, z);
                rows.push(SeriesRow {
                    time: t,
                    label: sc.label.clone(),
                    kind: RowKind::Scenario,
                    cause: cause_label(k),
                    estimate: est[r],
                    se,
                    lci,
                    uci,
                });
            }
        }
        if let Some(kind) = req.contrast {
            let reference = &req.scenarios[req.reference].label;
            for (s, sc) in req.scenarios.iter().enumerate() {
                if s == req.reference {
                    continue;
                }
                for k in 0..n_causes {
                    let a = s * n_causes + k;
                    let b = req.reference * n_causes + k;
                    let ga = grad(jac, a);
                    let gb = grad(jac, b);
                    let row = match kind {
                        ContrastKind::Difference => {
                            let d = est[a] - est[b];
                            let se = se_of(ga.iter().zip(&gb).map(|(x, y)| x - y).collect());
                            SeriesRow {
                                time: t,
                                label: format!("{} - {reference}", sc.label),
                                kind: RowKind::Difference,
                                cause: cause_label(k),
                                estimate: d,
                                se,
                                lci: d - z * se,
                                uci: d + z * se,
                            }
                        }
                        ContrastKind::Ratio => {
                            let label = format!("{} / {reference}", sc.label);
                            if est[b] == 0.0 {
                                if t > 0.0 {
                                    return Err(StandardizeError::RatioReferenceZero {
                                        time: t,
                                        reference: reference.clone(),
                                    });
                                }
                                SeriesRow {
                                    time: t,
                                    label,
                                    kind: RowKind::Ratio,
                                    cause: cause_label(k),
                                    estimate: f64::NAN,
                                    se: f64::NAN,
                                    lci: f64::NAN,
                                    uci: f64::NAN,
                                }
                            } else {
                                let ratio = est[a] / est[b];
                                let g: Vec<f64> = ga
                                    .iter()
                                    .zip(&gb)
                                    .map(|(x, y)| (x * est[b] - est[a] * y) / (est[b] * est[b]))
                                    .collect();
                                let se = se_of(g);
                                let (lci, uci) = log_ci(ratio, se, z);
                                SeriesRow {
                                    time: t,
                                    label,
                                    kind: RowKind::Ratio,
                                    cause: cause_label(k),
                                    estimate: ratio,
                                    se,
                                    lci,
                                    uci,
                                }
                            }
                        }
                    };
                    rows.push(row);
                }
            }
        }
        if let Some(w) = &req.lincom {
            let value: f64 = w.iter().zip(est).map(|(a, b)| a * b).sum();
            let g: Vec<f64> = (0..n_par)
                .map(|j| w.iter().enumerate().map(|(r, wr)| wr * jac[(r, j)]).sum())
                .collect();
            let se = se_of(g);
            rows.push(SeriesRow {
                time: t,
                label: "lincom".into(),
                kind: RowKind::Lincom,
                cause: String::new(),
                estimate: value,
                se,
                lci: value - z * se,
                uci: value + z * se,
            });
        }
    }

    let support_end = models
        .iter()
        .map(|m| m.support_end())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(StandardizedSeries {
        estimand: req.estimand,
        rows,
        n_population,
        n_dropped,
        n_patterns: engine.patterns.iter().map(Vec::len).collect(),
        nodes: req.nodes,
        ci_level: req.ci_level,
        support_end,
        extrapolated_times: req
            .times
            .iter()
            .copied()
            .filter(|&t| t > support_end)
            .collect(),
    })
}

/// Treatment-decomposition settings for separable effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableRequest {
    /// Treatment column acting on the first (event of interest) model.
    pub treatment_c: String,
    /// Treatment column acting on the competing-event model.
    pub treatment_o: String,
    pub times: Vec<f64>,
    pub scenarios: Vec<AtScenario>,
    pub ci_level: f64,
    pub nodes: usize,
    pub model_labels: Vec<String>,
}

impl SeparableRequest {
    /// Scenarios `(1,1)`, `(1,0)`, `(0,0)` for `(treatment_c, treatment_o)`.
    pub fn new(treatment_c: &str, treatment_o: &str, times: Vec<f64>) -> Self {
        let sc = |label: &str, c: f64, o: f64| {
            AtScenario::new(label)
                .set(treatment_c, c)
                .set(treatment_o, o)
        };
        SeparableRequest {
            treatment_c: treatment_c.into(),
            treatment_o: treatment_o.into(),
            times,
            scenarios: vec![
                sc("at1", 1.0, 1.0),
                sc("at2", 1.0, 0.0),
                sc("at3", 0.0, 0.0),
            ],
            ci_level: 0.95,
            nodes: 50,
            model_labels: Vec::new(),
        }
    }
}

/// Cumulative incidences under the separable-treatment scenarios, with
/// differences against the first scenario.
pub fn separable_effects(
    models: &[&FpmFit],
    frame: &SurvivalFrame,
    req: &SeparableRequest,
) -> Result<StandardizedSeries> {
    check_models(Estimand::Cif, models.len())?;
    let has = |m: &FpmFit, c: &str| m.covariates().iter().any(|x| x == c);
    if !has(models[0], &req.treatment_c) || has(models[0], &req.treatment_o) {
        return Err(StandardizeError::InvalidRequest(format!(
            "the first model must contain `{}` and not `{}`",
            req.treatment_c, req.treatment_o
        )));
    }
    if !has(models[1], &req.treatment_o) || has(models[1], &req.treatment_c) {
        return Err(StandardizeError::InvalidRequest(format!(
            "the second model must contain `{}` and not `{}`",
            req.treatment_o, req.treatment_c
        )));
    }
    for s in &req.scenarios {
        for col in [&req.treatment_c, &req.treatment_o] {
            if s.get(col).is_none() {
                return Err(StandardizeError::ScenarioMissingColumn {
                    scenario: s.label.clone(),
                    column: col.clone(),
                });
            }
        }
    }
    let mut sr = StandardizeRequest::new(Estimand::Cif, req.times.clone(), req.scenarios.clone())
        .contrast(ContrastKind::Difference)
        .ci_level(req.ci_level)
        .nodes(req.nodes);
    sr.model_labels = req.model_labels.clone();
    standardize(models, frame, &sr)
}
