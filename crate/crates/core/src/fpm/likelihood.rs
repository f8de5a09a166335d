use super::{FpmError, ModelSpec, ModelStructure, Result};
use crate::dataset::{SurvivalDeclaration, SurvivalFrame};
use crate::spline::{centile_knots_with, SplineBasis};
use nalgebra::{DMatrix, DVector};

/// Value, gradient and hessian of the log-likelihood at one parameter vector.
#[derive(Debug, Clone)]
pub struct LikelihoodEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Design of a model on one dataset: for each row the linear predictor row
/// `z` (η = z·θ) and its derivative with respect to log time `w`
/// (∂η/∂ln t = w·θ).
#[derive(Debug, Clone)]
pub struct FpmProblem {
    pub(crate) structure: ModelStructure,
    pub(crate) z: DMatrix<f64>,
    pub(crate) w: DMatrix<f64>,
    pub(crate) x: Vec<Vec<f64>>,
    pub(crate) ln_t: Vec<f64>,
    pub(crate) event: Vec<bool>,
    pub(crate) time: Vec<f64>,
    pub(crate) n_dropped: usize,
}

impl FpmProblem {
    pub fn new(spec: &ModelSpec, frame: &SurvivalFrame) -> Result<Self> {
        spec.validate()?;
        let roles = frame
            .roles()
            .ok_or(crate::dataset::DatasetError::NoRoles)?
            .clone();
        let mut needed: Vec<&str> = spec.covariates.iter().map(String::as_str).collect();
        needed.push(&roles.time);
        needed.push(&roles.event);
        let (frame, n_dropped) = frame.complete_cases(&needed)?;
        let decl: SurvivalDeclaration = spec.declaration.declare(&frame)?;
        let n_events = decl.n_events();
        if n_events == 0 {
            return Err(FpmError::NoEvents);
        }
        let x: Vec<Vec<f64>> = (0..frame.n_rows())
            .map(|i| {
                spec.covariates
                    .iter()
                    .map(|c| Ok(frame.value(i, c)?.expect("complete case")))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let ln_t: Vec<f64> = decl.analysis_time.iter().map(|t| t.ln()).collect();

        let make_basis = |df: usize| -> Result<SplineBasis> {
            let knots = centile_knots_with(&ln_t, df, &decl.event, spec.centile_rule)?;
            Ok(if spec.orthogonalize {
                SplineBasis::orthogonalized(knots, &ln_t)?
            } else {
                SplineBasis::raw(knots)
            })
        };
        let baseline = make_basis(spec.baseline_df)?;
        let tvc = spec
            .tvc
            .iter()
            .map(|t| make_basis(t.df))
            .collect::<Result<Vec<_>>>()?;
        let structure = ModelStructure::new(spec, baseline, tvc)?;
        Self::from_parts(structure, x, decl.analysis_time, decl.event, n_dropped)
    }

    pub(crate) fn from_parts(
        structure: ModelStructure,
        x: Vec<Vec<f64>>,
        time: Vec<f64>,
        event: Vec<bool>,
        n_dropped: usize,
    ) -> Result<Self> {
        let n = time.len();
        let p = structure.n_params();
        let ln_t: Vec<f64> = time.iter().map(|t| t.ln()).collect();
        let mut z = DMatrix::zeros(n, p);
        let mut w = DMatrix::zeros(n, p);
        let mut zr = vec![0.0; p];
        let mut wr = vec![0.0; p];
        for i in 0..n {
            structure.design_row(&x[i], ln_t[i], &mut zr, &mut wr);
            for j in 0..p {
                z[(i, j)] = zr[j];
                w[(i, j)] = wr[j];
            }
        }
        Ok(FpmProblem {
            structure,
            z,
            w,
            x,
            ln_t,
            event,
            time,
            n_dropped,
        })
    }

    pub fn n_params(&self) -> usize {
        self.structure.n_params()
    }

    pub fn n_obs(&self) -> usize {
        self.time.len()
    }

    /// Rows dropped for missing covariates, time or event.
    pub fn n_dropped(&self) -> usize {
        self.n_dropped
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&d| d).count()
    }

    fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(FpmError::DimensionMismatch {
                expected: self.n_params(),
                found: theta.len(),
            });
        }
        Ok(())
    }

    /// Log-likelihood only; `-inf` when ∂η/∂ln t ≤ 0 at any event.
    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        self.check_dim(theta)?;
        let th = DVector::from_column_slice(theta);
        let eta = &self.z * &th;
        let slope = &self.w * &th;
        let mut ll = 0.0;
        for i in 0..self.n_obs() {
            if self.event[i] {
                if !(slope[i] > 0.0) {
                    return Ok(f64::NEG_INFINITY);
                }
                ll += slope[i].ln() - self.ln_t[i] + eta[i];
            }
            ll -= eta[i].exp();
        }
        Ok(if ll.is_nan() { f64::NEG_INFINITY } else { ll })
    }

    /// Value with exact gradient and hessian.
    pub fn evaluate(&self, theta: &[f64]) -> Result<LikelihoodEval> {
        self.check_dim(theta)?;
        let p = self.n_params();
        let th = DVector::from_column_slice(theta);
        let eta = &self.z * &th;
        let slope = &self.w * &th;
        let mut value = 0.0;
        let mut gradient = DVector::zeros(p);
        let mut hessian = DMatrix::zeros(p, p);
        for i in 0..self.n_obs() {
            let zi = self.z.row(i);
            let e = eta[i].exp();
            if self.event[i] {
                if !(slope[i] > 0.0) {
                    return Ok(LikelihoodEval {
                        value: f64::NEG_INFINITY,
                        gradient: DVector::from_element(p, f64::NAN),
                        hessian: DMatrix::from_element(p, p, f64::NAN),
                    });
                }
                let wi = self.w.row(i);
                let s = slope[i];
                value += s.ln() - self.ln_t[i] + eta[i];
                for a in 0..p {
                    gradient[a] += wi[a] / s + zi[a];
                }
                let inv2 = 1.0 / (s * s);
                for a in 0..p {
                    if wi[a] == 0.0 {
                        continue;
                    }
                    for b in 0..p {
                        hessian[(a, b)] -= wi[a] * wi[b] * inv2;
                    }
                }
            }
            value -= e;
            for a in 0..p {
                gradient[a] -= e * zi[a];
                if zi[a] == 0.0 {
                    continue;
                }
                for b in 0..p {
                    hessian[(a, b)] -= e * zi[a] * zi[b];
                }
            }
        }
        Ok(LikelihoodEval {
            value,
            gradient,
            hessian,
        })
    }
}

/// Log-likelihood of `theta` for `spec` on `data`, with gradient and hessian.
pub fn log_likelihood(
    theta: &[f64],
    spec: &ModelSpec,
    data: &SurvivalFrame,
) -> Result<LikelihoodEval> {
    FpmProblem::new(spec, data)?.evaluate(theta)
}
