use super::{Result, StandardizeError};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Value assigned to a covariate under a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Override {
    Fixed(f64),
    /// Take the row's value of another column.
    Copy(String),
}

/// Counterfactual covariate assignments applied to every row before
/// prediction. Columns not listed keep their observed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtScenario {
    pub label: String,
    pub assignments: Vec<(String, Override)>,
}

impl AtScenario {
    pub fn new(label: impl Into<String>) -> Self {
        AtScenario {
            label: label.into(),
            assignments: Vec::new(),
        }
    }

    pub fn set(mut self, column: &str, value: f64) -> Self {
        self.assign(column, Override::Fixed(value));
        self
    }

    pub fn copy(mut self, column: &str, source: &str) -> Self {
        self.assign(column, Override::Copy(source.to_string()));
        self
    }

    fn assign(&mut self, column: &str, value: Override) {
        match self.assignments.iter_mut().find(|(c, _)| c == column) {
            Some(slot) => slot.1 = value,
            None => self.assignments.push((column.to_string(), value)),
        }
    }

    /// Parses `col=v,col=~src` (commas or whitespace between assignments).
    pub fn parse(text: &str, label: impl Into<String>) -> Result<Self> {
        let mut s = AtScenario::new(label);
        for item in text.split([',', ' ', '\t']).filter(|p| !p.is_empty()) {
            let (col, rhs) = item.split_once('=').ok_or_else(|| {
                StandardizeError::Parse(format!("`{item}`: expected col=value or col=~column"))
            })?;
            let col = col.trim();
            let rhs = rhs.trim();
            if col.is_empty() || rhs.is_empty() {
                return Err(StandardizeError::Parse(format!(
                    "`{item}`: empty column or value"
                )));
            }
            if let Some(src) = rhs.strip_prefix('~') {
                if src.is_empty() {
                    return Err(StandardizeError::Parse(format!(
                        "`{item}`: empty source column"
                    )));
                }
                s.assign(col, Override::Copy(src.to_string()));
            } else {
                let v: f64 = rhs.parse().map_err(|_| {
                    StandardizeError::Parse(format!("`{item}`: `{rhs}` is not a number"))
                })?;
                s.assign(col, Override::Fixed(v));
            }
        }
        if s.assignments.is_empty() {
            return Err(StandardizeError::Parse(format!(
                "scenario `{text}` has no assignments"
            )));
        }
        Ok(s)
    }

    pub fn get(&self, column: &str) -> Option<&Override> {
        self.assignments
            .iter()
            .find(|(c, _)| c == column)
            .map(|(_, o)| o)
    }
}

impl fmt::Display for AtScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .assignments
            .iter()
            .map(|(c, o)| match o {
                Override::Fixed(v) => format!("{c}={v}"),
                Override::Copy(s) => format!("{c}=~{s}"),
            })
            .collect();
        write!(f, "{}", parts.join(","))
    }
}
