//! Kaplan–Meier failure and Aalen–Johansen cumulative incidence estimators.
//!
//! At tied times events are processed before censorings, so a subject
//! censored at `t` is still at risk for events at `t`.

use crate::dataset::{declare_all_cause, DatasetError, DeclarationSpec, SurvivalFrame};
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NonparamError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("group {0} has no rows")]
    EmptyGroup(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, NonparamError>;

/// Right-continuous step function with jumps at `times`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFunction {
    /// Value before the first jump.
    pub initial: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub n_at_risk: Vec<usize>,
    /// Greenwood variance at each jump (Kaplan–Meier only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance: Option<Vec<f64>>,
}

impl StepFunction {
    pub fn value_at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&u| u <= t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }

    pub fn variance_at(&self, t: f64) -> Option<f64> {
        let v = self.variance.as_ref()?;
        Some(match self.times.partition_point(|&u| u <= t) {
            0 => 0.0,
            k => v[k - 1],
        })
    }
}

/// Distinct times with at-risk counts and per-cause event counts. `codes`
/// are 0 for censored, otherwise a cause label.
struct RiskTable {
    times: Vec<f64>,
    at_risk: Vec<usize>,
    /// `events[j][k]` for cause index `k` in `causes`.
    events: Vec<Vec<usize>>,
}

fn risk_table(time: &[f64], codes: &[i64], causes: &[i64]) -> RiskTable {
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[a].total_cmp(&time[b]));
    let n = order.len();
    let mut table = RiskTable {
        times: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
    };
    let mut i = 0;
    while i < n {
        let t = time[order[i]];
        let mut j = i;
        let mut counts = vec![0usize; causes.len()];
        while j < n && time[order[j]] == t {
            if let Some(k) = causes.iter().position(|&c| c == codes[order[j]]) {
                counts[k] += 1;
            }
            j += 1;
        }
        if counts.iter().any(|&c| c > 0) {
            table.times.push(t);
            table.at_risk.push(n - i);
            table.events.push(counts);
        }
        i = j;
    }
    table
}

/// Kaplan–Meier failure `1 − Π(1 − d_j/n_j)` with Greenwood variance.
pub fn km_failure(time: &[f64], event: &[bool]) -> StepFunction {
    let codes: Vec<i64> = event.iter().map(|&e| i64::from(e)).collect();
    let table = risk_table(time, &codes, &[1]);
    let mut s = 1.0;
    let mut greenwood = 0.0;
    let mut values = Vec::with_capacity(table.times.len());
    let mut variance = Vec::with_capacity(table.times.len());
    for (n, ev) in table.at_risk.iter().zip(&table.events) {
        let (n, d) = (*n as f64, ev[0] as f64);
        s *= 1.0 - d / n;
        if d < n {
            greenwood += d / (n * (n - d));
        }
        values.push(1.0 - s);
        variance.push(if s > 0.0 { s * s * greenwood } else { 0.0 });
    }
    StepFunction {
        initial: 0.0,
        times: table.times,
        values,
        n_at_risk: table.at_risk,
        variance: Some(variance),
    }
}

/// Aalen–Johansen cumulative incidence for each cause in `causes`, plus the
/// all-cause Kaplan–Meier survival. Every curve jumps at every event time.
pub fn aalen_johansen(
    time: &[f64],
    codes: &[i64],
    causes: &[i64],
) -> (Vec<StepFunction>, StepFunction) {
    let table = risk_table(time, codes, causes);
    let m = table.times.len();
    let mut s = 1.0;
    let mut f = vec![0.0; causes.len()];
    let mut cif: Vec<Vec<f64>> = vec![Vec::with_capacity(m); causes.len()];
    let mut surv = Vec::with_capacity(m);
    for (n, ev) in table.at_risk.iter().zip(&table.events) {
        let n = *n as f64;
        let d: usize = ev.iter().sum();
        for k in 0..causes.len() {
            f[k] += s * ev[k] as f64 / n;
            cif[k].push(f[k]);
        }
        s *= 1.0 - d as f64 / n;
        surv.push(s);
    }
    let curves = cif
        .into_iter()
        .map(|values| StepFunction {
            initial: 0.0,
            times: table.times.clone(),
            values,
            n_at_risk: table.at_risk.clone(),
            variance: None,
        })
        .collect();
    let survival = StepFunction {
        initial: 1.0,
        times: table.times,
        values: surv,
        n_at_risk: table.at_risk,
        variance: None,
    };
    (curves, survival)
}

/// An estimated curve for one group and cause.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub group: String,
    /// `None` for the all-cause Kaplan–Meier failure.
    pub cause: Option<i64>,
    pub curve: StepFunction,
}

fn fmt_level(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Row indices per group level. Levels default to the sorted distinct
/// non-missing values; explicitly requested levels must be non-empty.
fn group_rows(
    frame: &SurvivalFrame,
    group: Option<&str>,
    levels: Option<&[f64]>,
) -> Result<Vec<(String, Vec<usize>)>> {
    let Some(name) = group else {
        return Ok(vec![("all".to_string(), (0..frame.n_rows()).collect())]);
    };
    let values = frame.numeric(name)?;
    let levels: Vec<f64> = match levels {
        Some(l) => l.to_vec(),
        None => {
            let mut l: Vec<f64> = values.iter().flatten().copied().collect();
            l.sort_by(f64::total_cmp);
            l.dedup();
            l
        }
    };
    levels
        .into_iter()
        .map(|lv| {
            let rows: Vec<usize> = (0..frame.n_rows())
                .filter(|&i| values[i] == Some(lv))
                .collect();
            if rows.is_empty() {
                Err(NonparamError::EmptyGroup(format!(
                    "{name}={}",
                    fmt_level(lv)
                )))
            } else {
                Ok((fmt_level(lv), rows))
            }
        })
        .collect()
}

/// All-cause (or declared-cause) Kaplan–Meier failure per group.
pub fn kaplan_meier_failure(
    frame: &SurvivalFrame,
    declaration: &DeclarationSpec,
    group: Option<&str>,
    levels: Option<&[f64]>,
) -> Result<Vec<Curve>> {
    let decl = declaration.declare(frame)?;
    group_rows(frame, group, levels)?
        .into_iter()
        .map(|(label, rows)| {
            let t: Vec<f64> = rows.iter().map(|&i| decl.analysis_time[i]).collect();
            let d: Vec<bool> = rows.iter().map(|&i| decl.event[i]).collect();
            Ok(Curve {
                group: label,
                cause: None,
                curve: km_failure(&t, &d),
            })
        })
        .collect()
}

/// Aalen–Johansen cumulative incidence of each cause in `causes` per group,
/// with events after `exit_time` treated as censored.
pub fn aalen_johansen_cif(
    frame: &SurvivalFrame,
    exit_time: f64,
    causes: &[i64],
    group: Option<&str>,
    levels: Option<&[f64]>,
) -> Result<Vec<Curve>> {
    let decl = declare_all_cause(frame, exit_time)?;
    let roles = frame.roles().ok_or(DatasetError::NoRoles)?;
    let raw = frame.numeric(&roles.event)?;
    let codes: Vec<i64> = (0..frame.n_rows())
        .map(|i| {
            if decl.event[i] {
                raw[i].unwrap_or(0.0) as i64
            } else {
                0
            }
        })
        .collect();
    let mut out = Vec::new();
    for (label, rows) in group_rows(frame, group, levels)? {
        let t: Vec<f64> = rows.iter().map(|&i| decl.analysis_time[i]).collect();
        let c: Vec<i64> = rows.iter().map(|&i| codes[i]).collect();
        let (curves, _) = aalen_johansen(&t, &c, causes);
        for (&cause, curve) in causes.iter().zip(curves) {
            out.push(Curve {
                group: label.clone(),
                cause: Some(cause),
                curve,
            });
        }
    }
    Ok(out)
}

/// Long CSV: `time, estimate, n_at_risk, group, cause`, one row per jump.
pub fn write_curves_csv<W: Write>(curves: &[Curve], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time", "estimate", "n_at_risk", "group", "cause"])?;
    for c in curves {
        let cause = c.cause.map_or_else(|| "all".to_string(), |k| k.to_string());
        for j in 0..c.curve.times.len() {
            w.write_record([
                c.curve.times[j].to_string(),
                c.curve.values[j].to_string(),
                c.curve.n_at_risk[j].to_string(),
                c.group.clone(),
                cause.clone(),
            ])?;
        }
    }
    w.flush().map_err(|e| NonparamError::Dataset(e.into()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_event() {
        let f = km_failure(&[5.0], &[true]);
        assert_eq!(f.value_at(4.9), 0.0);
        assert_eq!(f.value_at(5.0), 1.0);
    }

    #[test]
    fn no_events_is_zero() {
        let f = km_failure(&[1.0, 2.0, 3.0], &[false; 3]);
        assert!(f.times.is_empty());
        assert_eq!(f.value_at(10.0), 0.0);
    }

    #[test]
    fn events_before_censorings() {
        // At t=2 one event and one censoring: both at risk, n=3.
        let f = km_failure(&[1.0, 2.0, 2.0, 4.0], &[true, true, false, true]);
        assert_eq!(f.n_at_risk, vec![4, 3, 1]);
        assert_abs_diff_eq!(f.value_at(2.0), 1.0 - 0.75 * (2.0 / 3.0), epsilon = 1e-15);
        assert_eq!(f.value_at(4.0), 1.0);
    }

    #[test]
    fn aj_sums_to_one_and_reduces_to_km() {
        let t = [1.0, 2.0, 2.0, 3.0, 5.0, 6.0, 6.0, 8.0];
        let c = [1, 2, 0, 1, 1, 0, 2, 1];
        let (cif, s) = aalen_johansen(&t, &c, &[1, 2]);
        for j in 0..s.times.len() {
            assert_abs_diff_eq!(
                cif[0].values[j] + cif[1].values[j] + s.values[j],
                1.0,
                epsilon = 1e-14
            );
        }
        let c1: Vec<i64> = c.iter().map(|&k| if k == 1 { 1 } else { 0 }).collect();
        let (only, _) = aalen_johansen(&t, &c1, &[1]);
        let km = km_failure(&t, &c1.iter().map(|&k| k == 1).collect::<Vec<_>>());
        for &u in &t {
            assert_abs_diff_eq!(only[0].value_at(u), km.value_at(u), epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_requested_group() {
        let frame = SurvivalFrame::from_numeric(vec![
            ("t", vec![1.0, 2.0]),
            ("e", vec![1.0, 0.0]),
            ("g", vec![0.0, 0.0]),
        ])
        .unwrap()
        .with_roles("t", "e")
        .unwrap();
        let err = kaplan_meier_failure(
            &frame,
            &DeclarationSpec::new(1, 10.0),
            Some("g"),
            Some(&[0.0, 1.0]),
        )
        .unwrap_err();
        assert!(matches!(err, NonparamError::EmptyGroup(_)));
    }

    #[test]
    fn csv_export() {
        let frame = SurvivalFrame::from_numeric(vec![
            ("t", vec![1.0, 2.0, 3.0]),
            ("e", vec![1.0, 2.0, 0.0]),
        ])
        .unwrap()
        .with_roles("t", "e")
        .unwrap();
        let curves = aalen_johansen_cif(&frame, 60.0, &[1, 2], None, None).unwrap();
        let mut buf = Vec::new();
        write_curves_csv(&curves, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,estimate,n_at_risk,group,cause\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 2);
    }
}
