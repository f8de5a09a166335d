//! Flexible parametric survival models on the log cumulative hazard scale.
//!
//! The linear predictor is
//! `η(t, x) = s₀(ln t; γ) + x·β + Σ_j x_j s_j(ln t; δ_j) + γ₀`, with
//! `H(t | x) = exp(η)`. Parameters are laid out as covariate effects, the
//! baseline spline coefficients, the time-dependent spline coefficients per
//! term, and the intercept last.

mod io;
mod likelihood;

pub use io::{load_fit, save_fit, ARTIFACT_FORMAT, ARTIFACT_VERSION};
pub use likelihood::{log_likelihood, FpmProblem, LikelihoodEval};

use crate::dataset::{DatasetError, DeclarationSpec, SurvivalFrame};
use crate::spline::{CentileRule, SplineBasis, SplineError};
use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FpmError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("parameter vector has length {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no events in the analysis sample")]
    NoEvents,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("Newton-Raphson did not converge in {iterations} iterations (max |gradient| {max_gradient:e})")]
    NonConvergence {
        iterations: usize,
        max_gradient: f64,
    },
    #[error("starting values give a non-finite log-likelihood")]
    InfeasibleStart,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model artifact: {0}")]
    Corrupt(String),
    #[error("model artifact version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
}

pub type Result<T> = std::result::Result<T, FpmError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvcTerm {
    pub covariate: String,
    pub df: usize,
}

fn default_true() -> bool {
    true
}

/// What to fit: covariates, baseline spline df, time-dependent effects and
/// the survival declaration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub covariates: Vec<String>,
    pub baseline_df: usize,
    #[serde(default)]
    pub tvc: Vec<TvcTerm>,
    pub declaration: DeclarationSpec,
    #[serde(default = "default_true")]
    pub orthogonalize: bool,
    #[serde(default)]
    pub centile_rule: CentileRule,
}

impl ModelSpec {
    pub fn new<S: AsRef<str>>(
        covariates: &[S],
        baseline_df: usize,
        failure_code: i64,
        exit_time: f64,
    ) -> Self {
        ModelSpec {
            covariates: covariates.iter().map(|c| c.as_ref().to_string()).collect(),
            baseline_df,
            tvc: Vec::new(),
            declaration: DeclarationSpec::new(failure_code, exit_time),
            orthogonalize: true,
            centile_rule: CentileRule::default(),
        }
    }

    pub fn with_tvc(mut self, covariate: &str, df: usize) -> Self {
        self.tvc.push(TvcTerm {
            covariate: covariate.to_string(),
            df,
        });
        self
    }

    pub fn orthogonal(mut self, on: bool) -> Self {
        self.orthogonalize = on;
        self
    }

    pub fn centile_rule(mut self, rule: CentileRule) -> Self {
        self.centile_rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.baseline_df == 0 {
            return Err(FpmError::InvalidSpec(
                "baseline df must be at least 1".into(),
            ));
        }
        for (i, c) in self.covariates.iter().enumerate() {
            if self.covariates[..i].contains(c) {
                return Err(FpmError::InvalidSpec(format!(
                    "covariate `{c}` listed twice"
                )));
            }
        }
        for t in &self.tvc {
            if t.df == 0 {
                return Err(FpmError::InvalidSpec(format!(
                    "tvc `{}` needs df >= 1",
                    t.covariate
                )));
            }
            if !self.covariates.contains(&t.covariate) {
                return Err(FpmError::InvalidSpec(format!(
                    "tvc covariate `{}` is not among the covariates",
                    t.covariate
                )));
            }
        }
        if !(self.declaration.exit_time > 0.0) {
            return Err(FpmError::InvalidSpec("exit time must be positive".into()));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.covariates.len() + self.baseline_df + self.tvc.iter().map(|t| t.df).sum::<usize>() + 1
    }

    /// Display names: covariates, `_rcs1..`, `_rcs_<cov>1..`, `_cons`.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = self.covariates.clone();
        names.extend((1..=self.baseline_df).map(|j| format!("_rcs{j}")));
        for t in &self.tvc {
            names.extend((1..=t.df).map(|j| format!("_rcs_{}{j}", t.covariate)));
        }
        names.push("_cons".into());
        names
    }
}

/// Spline bases and parameter layout of a model; evaluates η and ∂η/∂ln t.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelStructure {
    n_cov: usize,
    baseline: SplineBasis,
    tvc: Vec<SplineBasis>,
    /// Covariate index of each tvc term.
    tvc_cov: Vec<usize>,
}

impl ModelStructure {
    pub fn new(spec: &ModelSpec, baseline: SplineBasis, tvc: Vec<SplineBasis>) -> Result<Self> {
        if baseline.df() != spec.baseline_df || tvc.len() != spec.tvc.len() {
            return Err(FpmError::Corrupt(
                "spline bases do not match the specification".into(),
            ));
        }
        let mut tvc_cov = Vec::with_capacity(tvc.len());
        for (term, basis) in spec.tvc.iter().zip(&tvc) {
            if basis.df() != term.df {
                return Err(FpmError::Corrupt(format!(
                    "tvc basis for `{}` has df {}, spec says {}",
                    term.covariate,
                    basis.df(),
                    term.df
                )));
            }
            let idx = spec
                .covariates
                .iter()
                .position(|c| *c == term.covariate)
                .ok_or_else(|| {
                    FpmError::InvalidSpec(format!("unknown tvc `{}`", term.covariate))
                })?;
            tvc_cov.push(idx);
        }
        Ok(ModelStructure {
            n_cov: spec.covariates.len(),
            baseline,
            tvc,
            tvc_cov,
        })
    }

    pub fn n_params(&self) -> usize {
        self.n_cov + self.baseline.df() + self.tvc.iter().map(SplineBasis::df).sum::<usize>() + 1
    }

    pub fn n_covariates(&self) -> usize {
        self.n_cov
    }

    pub fn baseline(&self) -> &SplineBasis {
        &self.baseline
    }

    pub fn tvc_bases(&self) -> &[SplineBasis] {
        &self.tvc
    }

    pub fn tvc_covariates(&self) -> &[usize] {
        &self.tvc_cov
    }

    /// Rows `z` (for η) and `w` (for ∂η/∂ln t) at covariates `x` and `ln_t`.
    pub fn design_row(&self, x: &[f64], ln_t: f64, z: &mut [f64], w: &mut [f64]) {
        let nc = self.n_cov;
        z[..nc].copy_from_slice(&x[..nc]);
        w[..nc].iter_mut().for_each(|v| *v = 0.0);
        let mut off = nc;
        let df0 = self.baseline.df();
        self.baseline.eval_into(ln_t, &mut z[off..off + df0]);
        self.baseline.deriv_into(ln_t, &mut w[off..off + df0]);
        off += df0;
        for (basis, &ci) in self.tvc.iter().zip(&self.tvc_cov) {
            let df = basis.df();
            basis.eval_into(ln_t, &mut z[off..off + df]);
            basis.deriv_into(ln_t, &mut w[off..off + df]);
            for j in off..off + df {
                z[j] *= x[ci];
                w[j] *= x[ci];
            }
            off += df;
        }
        z[off] = 1.0;
        w[off] = 0.0;
    }

    /// `(η, ∂η/∂ln t)` for parameters `theta` at covariates `x`, log time `ln_t`.
    pub fn eta_slope(&self, theta: &[f64], x: &[f64], ln_t: f64) -> (f64, f64) {
        let p = self.n_params();
        let mut z = vec![0.0; p];
        let mut w = vec![0.0; p];
        self.design_row(x, ln_t, &mut z, &mut w);
        let eta = z.iter().zip(theta).map(|(a, b)| a * b).sum();
        let slope = w.iter().zip(theta).map(|(a, b)| a * b).sum();
        (eta, slope)
    }
}

/// Newton–Raphson controls.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub max_halvings: usize,
    pub gradient_tolerance: f64,
    pub loglik_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 100,
            max_halvings: 30,
            gradient_tolerance: 1e-6,
            loglik_tolerance: 1e-9,
        }
    }
}

/// A fitted model. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FpmFit {
    pub spec: ModelSpec,
    pub structure: ModelStructure,
    pub theta: Vec<f64>,
    pub vcov: DMatrix<f64>,
    pub loglik: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub n_obs: usize,
    pub n_events: usize,
}

/// One row of a coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub exp_estimate: f64,
    /// Standard error of `exp(estimate)`, `exp(b)·se(b)`.
    pub exp_se: f64,
    pub exp_lci: f64,
    pub exp_uci: f64,
}

/// Per-row, per-time predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub eta: Vec<Vec<f64>>,
    pub survival: Vec<Vec<f64>>,
    pub failure: Vec<Vec<f64>>,
    /// Undefined (NaN) at `t = 0`.
    pub hazard: Vec<Vec<f64>>,
}

impl FpmFit {
    pub fn parameter_names(&self) -> Vec<String> {
        self.spec.parameter_names()
    }

    pub fn covariates(&self) -> &[String] {
        &self.spec.covariates
    }

    pub fn se(&self) -> Vec<f64> {
        (0..self.theta.len())
            .map(|i| self.vcov[(i, i)].max(0.0).sqrt())
            .collect()
    }

    pub fn coefficients(&self, level: f64) -> Vec<Coefficient> {
        let z = crate::standardize::normal_quantile(level);
        self.parameter_names()
            .into_iter()
            .zip(self.theta.iter().zip(self.se()))
            .map(|(name, (&b, se))| Coefficient {
                name,
                estimate: b,
                se,
                exp_estimate: b.exp(),
                exp_se: b.exp() * se,
                exp_lci: (b - z * se).exp(),
                exp_uci: (b + z * se).exp(),
            })
            .collect()
    }

    /// Covariate vector of one frame row, in model order.
    pub fn covariate_row(&self, frame: &SurvivalFrame, row: usize) -> Result<Vec<f64>> {
        self.spec
            .covariates
            .iter()
            .map(|c| {
                frame.value(row, c)?.ok_or_else(|| {
                    FpmError::Dataset(DatasetError::MissingValue {
                        row: row + 1,
                        column: c.clone(),
                    })
                })
            })
            .collect()
    }

    pub fn eta_slope(&self, x: &[f64], t: f64) -> (f64, f64) {
        self.structure.eta_slope(&self.theta, x, t.ln())
    }

    pub fn survival_at(&self, x: &[f64], t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        (-self.eta_slope(x, t).0.exp()).exp()
    }

    pub fn hazard_at(&self, x: &[f64], t: f64) -> f64 {
        if t <= 0.0 {
            return f64::NAN;
        }
        let (eta, slope) = self.eta_slope(x, t);
        eta.exp() * slope / t
    }

    pub fn hazard_ratio(&self, x1: &[f64], x0: &[f64], t: f64) -> f64 {
        self.hazard_at(x1, t) / self.hazard_at(x0, t)
    }

    pub fn predict(&self, rows: &SurvivalFrame, times: &[f64]) -> Result<Prediction> {
        let n = rows.n_rows();
        let mut out = Prediction {
            eta: vec![Vec::with_capacity(times.len()); n],
            survival: vec![Vec::with_capacity(times.len()); n],
            failure: vec![Vec::with_capacity(times.len()); n],
            hazard: vec![Vec::with_capacity(times.len()); n],
        };
        for i in 0..n {
            let x = self.covariate_row(rows, i)?;
            for &t in times {
                if t <= 0.0 {
                    out.eta[i].push(f64::NEG_INFINITY);
                    out.survival[i].push(1.0);
                    out.failure[i].push(0.0);
                    out.hazard[i].push(f64::NAN);
                    continue;
                }
                let (eta, slope) = self.eta_slope(&x, t);
                let s = (-eta.exp()).exp();
                out.eta[i].push(eta);
                out.survival[i].push(s);
                out.failure[i].push(1.0 - s);
                out.hazard[i].push(eta.exp() * slope / t);
            }
        }
        Ok(out)
    }

    /// Largest time covered by the baseline knots (the last event time).
    pub fn support_end(&self) -> f64 {
        self.structure.baseline().knots().upper().exp()
    }
}

/// Exponential proportional-hazards fit `(β, log rate)` used for start values.
fn exponential_start(x: &[Vec<f64>], time: &[f64], event: &[bool]) -> (Vec<f64>, f64) {
    let n_cov = x.first().map_or(0, Vec::len);
    let p = n_cov + 1;
    let d: f64 = event.iter().filter(|&&e| e).count() as f64;
    let total: f64 = time.iter().sum();
    let mut theta = vec![0.0; p];
    theta[n_cov] = (d / total).ln();
    let value = |th: &[f64]| -> f64 {
        x.iter()
            .zip(time)
            .zip(event)
            .map(|((xi, &t), &e)| {
                let lp: f64 = xi.iter().zip(th).map(|(a, b)| a * b).sum::<f64>() + th[n_cov];
                (if e { lp } else { 0.0 }) - t * lp.exp()
            })
            .sum()
    };
    for _ in 0..50 {
        let mut g = DVector::<f64>::zeros(p);
        let mut h = DMatrix::<f64>::zeros(p, p);
        for ((xi, &t), &e) in x.iter().zip(time).zip(event) {
            let mut zi = xi.clone();
            zi.push(1.0);
            let lp: f64 = zi.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let m = t * lp.exp();
            for a in 0..p {
                g[a] += (if e { 1.0 } else { 0.0 } - m) * zi[a];
                for b in 0..p {
                    h[(a, b)] += m * zi[a] * zi[b];
                }
            }
        }
        let Some(chol) = h.cholesky() else { break };
        let step = chol.solve(&g);
        let old = value(&theta);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .map(|(a, s)| a + scale * s)
                .collect();
            let v = value(&cand);
            if v.is_finite() && v >= old {
                theta = cand;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted || step.amax() < 1e-10 {
            break;
        }
    }
    let c = theta.pop().unwrap_or(0.0);
    (theta, c)
}

/// Start values: covariate effects from an exponential fit, baseline spline
/// coefficients from least squares of the Nelson–Aalen log cumulative
/// hazard on the baseline basis at event times, time-dependent terms zero.
pub fn initial_values(problem: &FpmProblem) -> Vec<f64> {
    let st = &problem.structure;
    let n_cov = st.n_covariates();
    let df0 = st.baseline().df();
    let p = st.n_params();
    let (beta, log_rate) = exponential_start(&problem.x, &problem.time, &problem.event);

    // Nelson–Aalen at each distinct event time.
    let n = problem.n_obs();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| problem.time[a].total_cmp(&problem.time[b]));
    let mut cumhaz = vec![f64::NAN; n];
    let mut h = 0.0;
    let mut i = 0;
    while i < n {
        let t = problem.time[order[i]];
        let mut j = i;
        let mut deaths = 0usize;
        while j < n && problem.time[order[j]] == t {
            deaths += problem.event[order[j]] as usize;
            j += 1;
        }
        h += deaths as f64 / (n - i) as f64;
        for &k in &order[i..j] {
            cumhaz[k] = h;
        }
        i = j;
    }
    let rows: Vec<usize> = (0..n).filter(|&k| problem.event[k]).collect();
    let mut a = DMatrix::zeros(rows.len(), df0 + 1);
    let mut y = DVector::zeros(rows.len());
    let mut xb_mean = 0.0;
    for (r, &k) in rows.iter().enumerate() {
        let b = st.baseline().eval_scalar(problem.ln_t[k]);
        for j in 0..df0 {
            a[(r, j)] = b[j];
        }
        a[(r, df0)] = 1.0;
        y[r] = cumhaz[k].ln();
        xb_mean += problem.x[k]
            .iter()
            .zip(&beta)
            .map(|(u, v)| u * v)
            .sum::<f64>();
    }
    xb_mean /= rows.len().max(1) as f64;

    let mut theta = vec![0.0; p];
    theta[..n_cov].copy_from_slice(&beta);
    let ls = a.clone().svd(true, true).solve(&y, 1e-12).ok();
    if let Some(coef) = ls.filter(|c| c.iter().all(|v| v.is_finite())) {
        theta[n_cov..n_cov + df0].copy_from_slice(&coef.as_slice()[..df0]);
        theta[p - 1] = coef[df0] - xb_mean;
        if problem.value(&theta).is_ok_and(f64::is_finite) {
            return theta;
        }
    }
    // Exponential model: η = ln t + x·β + log rate.
    let (c, c0) = st.baseline().identity_coefficients();
    theta[n_cov..n_cov + df0].copy_from_slice(&c);
    theta[p - 1] = log_rate + c0;
    theta
}

/// Fits `spec` to `data` from the default start values.
pub fn fit(spec: &ModelSpec, data: &SurvivalFrame) -> Result<FpmFit> {
    let problem = FpmProblem::new(spec, data)?;
    let start = initial_values(&problem);
    fit_problem(spec, &problem, start, FitOptions::default())
}

/// Fits from explicit start values.
pub fn fit_from(
    spec: &ModelSpec,
    data: &SurvivalFrame,
    start: &[f64],
    options: FitOptions,
) -> Result<FpmFit> {
    let problem = FpmProblem::new(spec, data)?;
    fit_problem(spec, &problem, start.to_vec(), options)
}

pub fn fit_problem(
    spec: &ModelSpec,
    problem: &FpmProblem,
    start: Vec<f64>,
    options: FitOptions,
) -> Result<FpmFit> {
    let p = problem.n_params();
    if start.len() != p {
        return Err(FpmError::DimensionMismatch {
            expected: p,
            found: start.len(),
        });
    }
    let mut theta = start;
    let mut current = problem.evaluate(&theta)?;
    if !current.value.is_finite() {
        // Pull an infeasible start towards the default starting values.
        let anchor = initial_values(problem);
        let mut alpha = 1.0;
        for _ in 0..options.max_halvings {
            alpha *= 0.5;
            let trial: Vec<f64> = anchor
                .iter()
                .zip(&theta)
                .map(|(a, s)| a + alpha * (s - a))
                .collect();
            let eval = problem.evaluate(&trial)?;
            if eval.value.is_finite() {
                debug!("infeasible start pulled towards default values (alpha {alpha})");
                theta = trial;
                current = eval;
                break;
            }
        }
        if !current.value.is_finite() {
            return Err(FpmError::InfeasibleStart);
        }
    }
    let mut iterations = 0;
    loop {
        if iterations >= options.max_iterations {
            return Err(FpmError::NonConvergence {
                iterations,
                max_gradient: current.gradient.amax(),
            });
        }
        iterations += 1;
        let neg_h = -&current.hessian;
        let chol = neg_h.cholesky().ok_or(FpmError::RankDeficient)?;
        let l = chol.l_dirty();
        let diag: Vec<f64> = (0..p).map(|i| l[(i, i)]).collect();
        let dmax = diag.iter().cloned().fold(0.0, f64::max);
        if diag.iter().any(|&d| !(d > 1e-8 * dmax)) {
            return Err(FpmError::RankDeficient);
        }
        let step = chol.solve(&current.gradient);
        let mut scale = 1.0;
        let mut next = None;
        for _ in 0..=options.max_halvings {
            let cand: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .map(|(a, s)| a + scale * s)
                .collect();
            let v = problem.value(&cand)?;
            if v.is_finite() && v >= current.value - 1e-12 * current.value.abs() {
                next = Some(cand);
                break;
            }
            scale *= 0.5;
        }
        let Some(cand) = next else {
            // No ascent possible along the Newton direction: accept the current
            // point if it already satisfies the gradient criterion.
            if current.gradient.amax() < options.gradient_tolerance {
                break;
            }
            return Err(FpmError::NonConvergence {
                iterations,
                max_gradient: current.gradient.amax(),
            });
        };
        let evaluated = problem.evaluate(&cand)?;
        let change = (evaluated.value - current.value).abs() / evaluated.value.abs().max(1e-300);
        theta = cand;
        current = evaluated;
        debug!(
            "iteration {iterations}: loglik {:.10} max|g| {:.3e}",
            current.value,
            current.gradient.amax()
        );
        if current.gradient.amax() < options.gradient_tolerance && change < options.loglik_tolerance
        {
            break;
        }
    }
    let neg_h = -&current.hessian;
    let vcov = neg_h.cholesky().ok_or(FpmError::RankDeficient)?.inverse();
    let vcov = (&vcov + vcov.transpose()) * 0.5;
    Ok(FpmFit {
        spec: spec.clone(),
        structure: problem.structure.clone(),
        theta,
        vcov,
        loglik: current.value,
        gradient: current.gradient.iter().copied().collect(),
        iterations,
        n_obs: problem.n_obs(),
        n_events: problem.n_events(),
    })
}
