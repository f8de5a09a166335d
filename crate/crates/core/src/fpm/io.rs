//! JSON model artifacts.

use super::{FpmError, FpmFit, ModelSpec, ModelStructure, Result};
use crate::spline::SplineBasis;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const ARTIFACT_FORMAT: &str = "crstd-fpm";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Artifact {
    format: String,
    version: u32,
    software_version: String,
    spec: ModelSpec,
    parameter_names: Vec<String>,
    theta: Vec<f64>,
    vcov: Vec<Vec<f64>>,
    loglik: f64,
    gradient: Vec<f64>,
    iterations: usize,
    n_obs: usize,
    n_events: usize,
    baseline: SplineBasis,
    tvc: Vec<SplineBasis>,
}

impl FpmFit {
    pub fn to_json(&self) -> Result<String> {
        let p = self.theta.len();
        let artifact = Artifact {
            format: ARTIFACT_FORMAT.into(),
            version: ARTIFACT_VERSION,
            software_version: env!("CARGO_PKG_VERSION").into(),
            spec: self.spec.clone(),
            parameter_names: self.parameter_names(),
            theta: self.theta.clone(),
            vcov: (0..p)
                .map(|i| (0..p).map(|j| self.vcov[(i, j)]).collect())
                .collect(),
            loglik: self.loglik,
            gradient: self.gradient.clone(),
            iterations: self.iterations,
            n_obs: self.n_obs,
            n_events: self.n_events,
            baseline: self.structure.baseline().clone(),
            tvc: self.structure.tvc_bases().to_vec(),
        };
        serde_json::to_string_pretty(&artifact).map_err(|e| FpmError::Corrupt(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<FpmFit> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| FpmError::Corrupt(e.to_string()))?;
        if value.get("format").and_then(|f| f.as_str()) != Some(ARTIFACT_FORMAT) {
            return Err(FpmError::Corrupt("not a crstd model artifact".into()));
        }
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != ARTIFACT_VERSION {
            return Err(FpmError::VersionMismatch {
                found: version,
                expected: ARTIFACT_VERSION,
            });
        }
        let a: Artifact =
            serde_json::from_value(value).map_err(|e| FpmError::Corrupt(e.to_string()))?;
        a.spec.validate()?;
        let structure = ModelStructure::new(&a.spec, a.baseline, a.tvc)?;
        let p = structure.n_params();
        if a.theta.len() != p {
            return Err(FpmError::Corrupt(format!(
                "theta has length {}, model expects {p}",
                a.theta.len()
            )));
        }
        if a.vcov.len() != p || a.vcov.iter().any(|r| r.len() != p) {
            return Err(FpmError::Corrupt(format!("vcov is not {p}x{p}")));
        }
        if a.gradient.len() != p {
            return Err(FpmError::Corrupt(format!(
                "gradient has length {}, expected {p}",
                a.gradient.len()
            )));
        }
        Ok(FpmFit {
            spec: a.spec,
            structure,
            theta: a.theta,
            vcov: DMatrix::from_fn(p, p, |i, j| a.vcov[i][j]),
            loglik: a.loglik,
            gradient: a.gradient,
            iterations: a.iterations,
            n_obs: a.n_obs,
            n_events: a.n_events,
        })
    }
}

pub fn save_fit<P: AsRef<Path>>(fit: &FpmFit, path: P) -> Result<()> {
    fs::write(path, fit.to_json()?)?;
    Ok(())
}

pub fn load_fit<P: AsRef<Path>>(path: P) -> Result<FpmFit> {
    FpmFit::from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpm::fit;
    use crate::simulate;

    fn fitted() -> FpmFit {
        let frame = simulate::weibull_single_cause(300, 0.05, 1.3, 0.5, 40.0, 3);
        fit(
            &ModelSpec::new(&["x"], 3, 1, 100.0).with_tvc("x", 1),
            &frame,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let f = fitted();
        let g = FpmFit::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(f, g);
        for t in [0.3, 5.0, 17.5, 80.0] {
            assert_eq!(f.eta_slope(&[1.0], t), g.eta_slope(&[1.0], t));
        }
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let f = fitted();
        let mut v: serde_json::Value = serde_json::from_str(&f.to_json().unwrap()).unwrap();
        v["vcov"].as_array_mut().unwrap().pop();
        assert!(matches!(
            FpmFit::from_json(&v.to_string()),
            Err(FpmError::Corrupt(_))
        ));
        let mut v: serde_json::Value = serde_json::from_str(&f.to_json().unwrap()).unwrap();
        v["theta"].as_array_mut().unwrap().push(0.0.into());
        assert!(matches!(
            FpmFit::from_json(&v.to_string()),
            Err(FpmError::Corrupt(_))
        ));
    }

    #[test]
    fn version_and_garbage() {
        let f = fitted();
        let mut v: serde_json::Value = serde_json::from_str(&f.to_json().unwrap()).unwrap();
        v["version"] = 99.into();
        assert!(matches!(
            FpmFit::from_json(&v.to_string()),
            Err(FpmError::VersionMismatch { found: 99, .. })
        ));
        assert!(matches!(
            FpmFit::from_json("{not json"),
            Err(FpmError::Corrupt(_))
        ));
    }
}
