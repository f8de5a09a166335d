//! Rectangular survival data: CSV loading, the prostate trial preparation
//! pipeline and survival declarations.

use indexmap::IndexMap;
use log::info;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("file is empty (no header row)")]
    Empty,
    #[error("required column `{0}` is missing")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Unparseable {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("column `{0}` is not numeric")]
    NotNumeric(String),
    #[error("column `{column}` has length {found}, frame has {expected} rows")]
    LengthMismatch {
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: unknown status `{label}`")]
    UnknownStatus { row: usize, label: String },
    #[error("row {row}, column `{column}`: unknown label `{label}`")]
    UnknownLabel {
        row: usize,
        column: String,
        label: String,
    },
    #[error("row {row}: event code {code} is not one of the declared codes {allowed:?}")]
    UndeclaredEventCode {
        row: usize,
        code: f64,
        allowed: Vec<i64>,
    },
    #[error("row {row}: time must be positive and finite, found {value}")]
    InvalidTime { row: usize, value: f64 },
    #[error("row {row}: missing value in `{column}`")]
    MissingValue { row: usize, column: String },
    #[error("exit time must be positive, found {0}")]
    InvalidExitTime(f64),
    #[error("frame has no time/event roles; call `with_roles` first")]
    NoRoles,
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// A named column. Missing cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Text(Vec<Option<String>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Numeric(v) => v[row].is_none_or(|x| x.is_nan()),
            Column::Text(v) => v[row].is_none(),
        }
    }

    /// Cell rendered the way it would be written to CSV.
    pub fn cell(&self, row: usize) -> String {
        match self {
            Column::Numeric(v) => v[row].map(format_number).unwrap_or_default(),
            Column::Text(v) => v[row].clone().unwrap_or_default(),
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Column::Text(v) => Column::Text(rows.iter().map(|&i| v[i].clone()).collect()),
        }
    }
}

fn format_number(x: f64) -> String {
    if x.is_finite() && x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// Names of the columns carrying follow-up time and the event code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roles {
    pub time: String,
    pub event: String,
}

/// Immutable rectangular dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurvivalFrame {
    n_rows: usize,
    columns: IndexMap<String, Column>,
    roles: Option<Roles>,
}

impl SurvivalFrame {
    pub fn new(n_rows: usize) -> Self {
        SurvivalFrame {
            n_rows,
            columns: IndexMap::new(),
            roles: None,
        }
    }

    /// Builds a frame from numeric columns given in order.
    pub fn from_numeric<S: Into<String>>(columns: Vec<(S, Vec<f64>)>) -> Result<Self> {
        let n = columns.first().map_or(0, |(_, v)| v.len());
        let mut frame = SurvivalFrame::new(n);
        for (name, values) in columns {
            frame = frame.with_column(
                name,
                Column::Numeric(values.into_iter().map(Some).collect()),
            )?;
        }
        Ok(frame)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .get(name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    }

    pub fn numeric(&self, name: &str) -> Result<&[Option<f64>]> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Text(_) => Err(DatasetError::NotNumeric(name.to_string())),
        }
    }

    /// Numeric value at `(row, name)`; `None` when missing.
    pub fn value(&self, row: usize, name: &str) -> Result<Option<f64>> {
        Ok(self.numeric(name)?[row].filter(|x| !x.is_nan()))
    }

    pub fn roles(&self) -> Option<&Roles> {
        self.roles.as_ref()
    }

    pub fn with_roles(mut self, time: &str, event: &str) -> Result<Self> {
        self.numeric(time)?;
        self.numeric(event)?;
        self.roles = Some(Roles {
            time: time.to_string(),
            event: event.to_string(),
        });
        Ok(self)
    }

    /// Adds or replaces a column.
    pub fn with_column<S: Into<String>>(mut self, name: S, column: Column) -> Result<Self> {
        let name = name.into();
        if column.len() != self.n_rows {
            if self.columns.is_empty() {
                self.n_rows = column.len();
            } else {
                return Err(DatasetError::LengthMismatch {
                    column: name,
                    expected: self.n_rows,
                    found: column.len(),
                });
            }
        }
        self.columns.insert(name, column);
        Ok(self)
    }

    pub fn with_numeric<S: Into<String>>(self, name: S, values: Vec<Option<f64>>) -> Result<Self> {
        self.with_column(name, Column::Numeric(values))
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, names: &[&str]) -> Result<Self> {
        let mut out = SurvivalFrame::new(self.n_rows);
        for &name in names {
            out.columns
                .insert(name.to_string(), self.column(name)?.clone());
        }
        if let Some(roles) = &self.roles {
            if out.has_column(&roles.time) && out.has_column(&roles.event) {
                out.roles = Some(roles.clone());
            }
        }
        Ok(out)
    }

    /// Keeps the rows whose indices are listed, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        SurvivalFrame {
            n_rows: rows.len(),
            columns: self
                .columns
                .iter()
                .map(|(k, c)| (k.clone(), c.select(rows)))
                .collect(),
            roles: self.roles.clone(),
        }
    }

    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let rows: Vec<usize> = (0..self.n_rows).filter(|&i| keep(i)).collect();
        self.select_rows(&rows)
    }

    /// Rows with a value in every listed column, plus the number dropped.
    pub fn complete_cases(&self, names: &[&str]) -> Result<(Self, usize)> {
        let cols = names
            .iter()
            .map(|n| self.column(n))
            .collect::<Result<Vec<_>>>()?;
        let frame = self.filter(|i| cols.iter().all(|c| !c.is_missing(i)));
        let dropped = self.n_rows - frame.n_rows;
        if dropped > 0 {
            info!("dropped {dropped} rows with missing values in {names:?}");
        }
        Ok((frame, dropped))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.columns.keys())?;
        for row in 0..self.n_rows {
            w.write_record(self.columns.values().map(|c| c.cell(row)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Typing applied to a CSV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    /// Every non-empty cell must parse as a number.
    Numeric,
    Text,
    /// Numeric when every non-empty cell parses, text otherwise.
    Auto,
}

/// Required columns and their typing. Columns not listed are inferred.
#[derive(Debug, Clone, Default)]
pub struct Schema {
    pub required: Vec<(String, ColumnKind)>,
}

impl Schema {
    pub fn new() -> Self {
        Schema::default()
    }

    pub fn require(mut self, name: &str, kind: ColumnKind) -> Self {
        self.required.push((name.to_string(), kind));
        self
    }

    /// Columns needed by [`prepare_prostate`] on the raw trial file. `rx`,
    /// `status` and `pf` may be stored either as labels or numeric codes.
    pub fn prostate_raw() -> Self {
        Schema::new()
            .require("rx", ColumnKind::Auto)
            .require("status", ColumnKind::Auto)
            .require("dtime", ColumnKind::Numeric)
            .require("hg", ColumnKind::Numeric)
            .require("age", ColumnKind::Numeric)
            .require("pf", ColumnKind::Auto)
            .require("hx", ColumnKind::Numeric)
    }

    fn kind_of(&self, name: &str) -> ColumnKind {
        self.required
            .iter()
            .find(|(n, _)| n == name)
            .map_or(ColumnKind::Auto, |(_, k)| *k)
    }
}

pub fn load_csv<P: AsRef<Path>>(path: P, schema: &Schema) -> Result<SurvivalFrame> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

/// Comma separated, header row, `.` decimal mark, empty cell = missing.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<SurvivalFrame> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(DatasetError::Empty),
    };
    let names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    for (name, _) in &schema.required {
        if !names.iter().any(|n| n == name) {
            return Err(DatasetError::MissingColumn(name.clone()));
        }
    }
    let mut cells: Vec<Vec<Option<String>>> = vec![Vec::new(); names.len()];
    for (i, record) in records.enumerate() {
        let record = record?;
        if record.len() != names.len() {
            return Err(DatasetError::RaggedRow {
                row: i + 1,
                expected: names.len(),
                found: record.len(),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            cells[j].push((!cell.is_empty() && cell != "NA").then(|| cell.to_string()));
        }
    }
    let n_rows = cells.first().map_or(0, Vec::len);
    let mut frame = SurvivalFrame::new(n_rows);
    for (name, raw) in names.into_iter().zip(cells) {
        let column = match schema.kind_of(&name) {
            ColumnKind::Text => Column::Text(raw),
            ColumnKind::Numeric => Column::Numeric(parse_numeric(&name, &raw)?),
            ColumnKind::Auto => match parse_numeric(&name, &raw) {
                Ok(v) => Column::Numeric(v),
                Err(_) => Column::Text(raw),
            },
        };
        frame.columns.insert(name, column);
    }
    Ok(frame)
}

fn parse_numeric(name: &str, raw: &[Option<String>]) -> Result<Vec<Option<f64>>> {
    raw.iter()
        .enumerate()
        .map(|(i, cell)| match cell {
            None => Ok(None),
            Some(s) => s
                .parse::<f64>()
                .map(Some)
                .map_err(|_| DatasetError::Unparseable {
                    row: i + 1,
                    column: name.to_string(),
                    value: s.clone(),
                }),
        })
        .collect()
}

/// Event codes after preparation.
pub const ALIVE: i64 = 0;
pub const PROSTATE_DEATH: i64 = 1;
pub const OTHER_DEATH: i64 = 2;

/// Status labels of the public trial file and their event codes.
pub const STATUS_LABELS: &[(&str, i64)] = &[
    ("alive", ALIVE),
    ("dead - prostatic ca", PROSTATE_DEATH),
    ("dead - heart or vascular", OTHER_DEATH),
    ("dead - cerebrovascular", OTHER_DEATH),
    ("dead - pulmonary embolus", OTHER_DEATH),
    ("dead - other ca", OTHER_DEATH),
    ("dead - respiratory disease", OTHER_DEATH),
    ("dead - other specific non-ca", OTHER_DEATH),
    ("dead - unspecified non-ca", OTHER_DEATH),
    ("dead - unknown cause", OTHER_DEATH),
];

/// Treatment arm labels and their numeric codes in the trial file.
pub const RX_LABELS: &[(&str, i64)] = &[
    ("placebo", 1),
    ("0.2 mg estrogen", 2),
    ("1.0 mg estrogen", 3),
    ("5.0 mg estrogen", 4),
];

pub const PF_LABELS: &[(&str, i64)] = &[
    ("normal activity", 1),
    ("in bed < 50% daytime", 2),
    ("in bed > 50% daytime", 3),
    ("confined to bed", 4),
];

/// Highest numeric status code in the trial file (codes 3..=10 are the other
/// death categories).
const MAX_STATUS_CODE: i64 = 10;

/// Columns of a prepared frame, in output order.
pub const PREPARED_COLUMNS: &[&str] = &[
    "rx",
    "dtime",
    "eventType",
    "allcause",
    "age",
    "hg",
    "hgBinary",
    "ageCat",
    "normalAct",
    "hx",
    "ageCat1",
    "ageCat2",
    "ageCat3",
];

fn normalise_label(s: &str) -> String {
    s.trim()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Numeric codes of a column stored either as codes or as labels.
fn coded(frame: &SurvivalFrame, name: &str, table: &[(&str, i64)]) -> Result<Vec<Option<i64>>> {
    match frame.column(name)? {
        Column::Numeric(v) => Ok(v.iter().map(|x| x.map(|x| x as i64)).collect()),
        Column::Text(v) => v
            .iter()
            .enumerate()
            .map(|(i, cell)| match cell {
                None => Ok(None),
                Some(label) => {
                    let key = normalise_label(label);
                    if let Ok(code) = key.parse::<i64>() {
                        return Ok(Some(code));
                    }
                    table
                        .iter()
                        .find(|(l, _)| *l == key)
                        .map(|(_, c)| Some(*c))
                        .ok_or_else(|| DatasetError::UnknownLabel {
                            row: i + 1,
                            column: name.to_string(),
                            label: label.clone(),
                        })
                }
            })
            .collect(),
    }
}

fn event_type_of(frame: &SurvivalFrame) -> Result<Vec<Option<f64>>> {
    match frame.column("status")? {
        Column::Numeric(v) => v
            .iter()
            .enumerate()
            .map(|(i, x)| match x {
                None => Ok(None),
                Some(x) => match *x as i64 {
                    1 => Ok(Some(ALIVE as f64)),
                    2 => Ok(Some(PROSTATE_DEATH as f64)),
                    c if (3..=MAX_STATUS_CODE).contains(&c) && x.fract() == 0.0 => {
                        Ok(Some(OTHER_DEATH as f64))
                    }
                    _ => Err(DatasetError::UnknownStatus {
                        row: i + 1,
                        label: format_number(*x),
                    }),
                },
            })
            .collect(),
        Column::Text(v) => v
            .iter()
            .enumerate()
            .map(|(i, cell)| match cell {
                None => Ok(None),
                Some(label) => {
                    let key = normalise_label(label);
                    STATUS_LABELS
                        .iter()
                        .find(|(l, _)| *l == key)
                        .map(|(_, c)| Some(*c as f64))
                        .ok_or_else(|| DatasetError::UnknownStatus {
                            row: i + 1,
                            label: label.clone(),
                        })
                }
            })
            .collect(),
    }
}

/// Age group by the cut points 0, 60, 75, 100: 0 for [0,60), 1 for
/// [60,75), 2 for [75,100); missing outside.
pub fn age_category(age: f64) -> Option<f64> {
    match age {
        a if (0.0..60.0).contains(&a) => Some(0.0),
        a if (60.0..75.0).contains(&a) => Some(1.0),
        a if (75.0..100.0).contains(&a) => Some(2.0),
        _ => None,
    }
}

fn dummies(cat: &[Option<f64>], level: f64) -> Vec<Option<f64>> {
    cat.iter()
        .map(|c| c.map(|c| if c == level { 1.0 } else { 0.0 }))
        .collect()
}

/// Two-arm preparation of the trial file: placebo and high-dose estrogen
/// arms only, treatment recoded 0 = placebo / 1 = DES, zero follow-up
/// replaced by half a month, cause of death coded 0 alive / 1 prostate /
/// 2 other, and the categorical covariates with age dummies.
///
/// Frames that are already prepared (an `eventType` column and no `status`)
/// are validated and returned unchanged.
pub fn prepare_prostate(frame: &SurvivalFrame) -> Result<SurvivalFrame> {
    if frame.has_column("eventType") && !frame.has_column("status") {
        return validate_prepared(frame);
    }
    for (name, _) in &Schema::prostate_raw().required {
        frame.column(name)?;
    }
    let rx = coded(frame, "rx", RX_LABELS)?;
    let two_arm = frame.filter(|i| matches!(rx[i], Some(1) | Some(4)));
    let rx: Vec<Option<f64>> = coded(&two_arm, "rx", RX_LABELS)?
        .into_iter()
        .map(|c| c.map(|c| if c == 1 { 0.0 } else { 1.0 }))
        .collect();

    let dtime: Vec<Option<f64>> = two_arm
        .numeric("dtime")?
        .iter()
        .map(|t| t.map(|t| if t == 0.0 { 0.5 } else { t }))
        .collect();
    let event_type = event_type_of(&two_arm)?;
    let allcause: Vec<Option<f64>> = event_type
        .iter()
        .map(|e| e.map(|e| if e != ALIVE as f64 { 1.0 } else { 0.0 }))
        .collect();
    let age = two_arm.numeric("age")?.to_vec();
    let hg = two_arm.numeric("hg")?.to_vec();
    let hg_binary: Vec<Option<f64>> = hg
        .iter()
        .map(|h| h.map(|h| if h < 12.0 { 1.0 } else { 0.0 }))
        .collect();
    let age_cat: Vec<Option<f64>> = age.iter().map(|a| a.and_then(age_category)).collect();
    let normal_act: Vec<Option<f64>> = coded(&two_arm, "pf", PF_LABELS)?
        .into_iter()
        .map(|c| c.map(|c| if c == 1 { 1.0 } else { 0.0 }))
        .collect();
    let hx = two_arm.numeric("hx")?.to_vec();

    let out = SurvivalFrame::new(two_arm.n_rows())
        .with_numeric("rx", rx)?
        .with_numeric("dtime", dtime)?
        .with_numeric("eventType", event_type)?
        .with_numeric("allcause", allcause)?
        .with_numeric("age", age)?
        .with_numeric("hg", hg)?
        .with_numeric("hgBinary", hg_binary)?
        .with_numeric("ageCat", age_cat.clone())?
        .with_numeric("normalAct", normal_act)?
        .with_numeric("hx", hx)?
        .with_numeric("ageCat1", dummies(&age_cat, 0.0))?
        .with_numeric("ageCat2", dummies(&age_cat, 1.0))?
        .with_numeric("ageCat3", dummies(&age_cat, 2.0))?
        .with_roles("dtime", "eventType")?;
    Ok(out)
}

fn validate_prepared(frame: &SurvivalFrame) -> Result<SurvivalFrame> {
    let events = frame.numeric("eventType")?;
    for (i, e) in events.iter().enumerate() {
        if let Some(e) = e {
            if ![ALIVE, PROSTATE_DEATH, OTHER_DEATH].contains(&(*e as i64)) || e.fract() != 0.0 {
                return Err(DatasetError::UndeclaredEventCode {
                    row: i + 1,
                    code: *e,
                    allowed: vec![ALIVE, PROSTATE_DEATH, OTHER_DEATH],
                });
            }
        }
    }
    for (i, t) in frame.numeric("dtime")?.iter().enumerate() {
        if let Some(t) = t {
            if !(*t > 0.0 && t.is_finite()) {
                return Err(DatasetError::InvalidTime {
                    row: i + 1,
                    value: *t,
                });
            }
        }
    }
    let out = frame.clone();
    if out.roles.is_some() {
        Ok(out)
    } else {
        out.with_roles("dtime", "eventType")
    }
}

/// Which event codes count as the failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    Code(i64),
    /// Any non-zero event code (all-cause).
    AnyEvent,
}

impl Failure {
    pub fn matches(&self, code: i64) -> bool {
        match self {
            Failure::Code(c) => code == *c,
            Failure::AnyEvent => code != ALIVE,
        }
    }
}

/// Parameters of a survival declaration, kept with fitted models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeclarationSpec {
    pub failure: Failure,
    pub exit_time: f64,
}

impl DeclarationSpec {
    pub fn new(failure_code: i64, exit_time: f64) -> Self {
        DeclarationSpec {
            failure: Failure::Code(failure_code),
            exit_time,
        }
    }

    pub fn declare(&self, frame: &SurvivalFrame) -> Result<SurvivalDeclaration> {
        declare_with(frame, self.failure.clone(), self.exit_time)
    }
}

/// Per-row analysis time `min(time, exit)` and event indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDeclaration {
    pub spec: DeclarationSpec,
    pub analysis_time: Vec<f64>,
    pub event: Vec<bool>,
}

impl SurvivalDeclaration {
    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&d| d).count()
    }
}

pub fn declare_survival(
    frame: &SurvivalFrame,
    failure_code: i64,
    exit_time: f64,
) -> Result<SurvivalDeclaration> {
    declare_with(frame, Failure::Code(failure_code), exit_time)
}

/// Declaration where any death counts as the failure.
pub fn declare_all_cause(frame: &SurvivalFrame, exit_time: f64) -> Result<SurvivalDeclaration> {
    declare_with(frame, Failure::AnyEvent, exit_time)
}

fn declare_with(
    frame: &SurvivalFrame,
    failure: Failure,
    exit_time: f64,
) -> Result<SurvivalDeclaration> {
    if !(exit_time > 0.0) {
        return Err(DatasetError::InvalidExitTime(exit_time));
    }
    let roles = frame.roles().ok_or(DatasetError::NoRoles)?;
    let times = frame.numeric(&roles.time)?;
    let codes = frame.numeric(&roles.event)?;
    let mut analysis_time = Vec::with_capacity(frame.n_rows());
    let mut event = Vec::with_capacity(frame.n_rows());
    for i in 0..frame.n_rows() {
        let t = times[i].ok_or_else(|| DatasetError::MissingValue {
            row: i + 1,
            column: roles.time.clone(),
        })?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(DatasetError::InvalidTime {
                row: i + 1,
                value: t,
            });
        }
        let code = codes[i].ok_or_else(|| DatasetError::MissingValue {
            row: i + 1,
            column: roles.event.clone(),
        })?;
        analysis_time.push(t.min(exit_time));
        event.push(failure.matches(code as i64) && t <= exit_time);
    }
    Ok(SurvivalDeclaration {
        spec: DeclarationSpec { failure, exit_time },
        analysis_time,
        event,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_csv() -> &'static str {
        "patno,rx,dtime,status,age,hg,pf,hx\n\
         1,placebo,0,dead - prostatic ca,60,11.5,normal activity,0\n\
         2,5.0 mg estrogen,30,dead - heart or vascular,75,13,in bed < 50% daytime,1\n\
         3,0.2 mg estrogen,12,alive,70,14,normal activity,0\n\
         4,5.0 mg estrogen,70,alive,59,12,normal activity,1\n\
         5,placebo,44,dead - unknown cause,80,9.8,confined to bed,0\n"
    }

    fn raw() -> SurvivalFrame {
        read_csv(raw_csv().as_bytes(), &Schema::prostate_raw()).unwrap()
    }

    #[test]
    fn header_only_gives_zero_rows() {
        let f = read_csv("a,b\n".as_bytes(), &Schema::new()).unwrap();
        assert_eq!(f.n_rows(), 0);
        assert!(f.has_column("b"));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(
            read_csv("".as_bytes(), &Schema::new()),
            Err(DatasetError::Empty)
        ));
    }

    #[test]
    fn non_numeric_time_names_row_and_column() {
        let err = read_csv(
            "rx,dtime\n1,3\n1,abc\n".as_bytes(),
            &Schema::new().require("dtime", ColumnKind::Numeric),
        )
        .unwrap_err();
        match err {
            DatasetError::Unparseable { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "dtime");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_required_column() {
        let err = read_csv("rx\n1\n".as_bytes(), &Schema::prostate_raw()).unwrap_err();
        assert!(matches!(err, DatasetError::MissingColumn(_)));
    }

    #[test]
    fn empty_cells_are_missing() {
        let f = read_csv("a,b\n1,\n,x\n".as_bytes(), &Schema::new()).unwrap();
        assert_eq!(f.numeric("a").unwrap(), &[Some(1.0), None]);
        assert!(matches!(f.column("b").unwrap(), Column::Text(_)));
    }

    #[test]
    fn prepare_keeps_two_arms_and_recodes() {
        let p = prepare_prostate(&raw()).unwrap();
        assert_eq!(p.n_rows(), 4);
        let col = |n: &str| {
            p.numeric(n)
                .unwrap()
                .iter()
                .map(|x| x.unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(col("rx"), vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(col("dtime"), vec![0.5, 30.0, 70.0, 44.0]);
        assert_eq!(col("eventType"), vec![1.0, 2.0, 0.0, 2.0]);
        assert_eq!(col("ageCat"), vec![1.0, 2.0, 0.0, 2.0]);
        assert_eq!(col("hgBinary"), vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(col("normalAct"), vec![1.0, 0.0, 1.0, 0.0]);
        for i in 0..p.n_rows() {
            let s: f64 = ["ageCat1", "ageCat2", "ageCat3"]
                .iter()
                .map(|c| p.value(i, c).unwrap().unwrap())
                .sum();
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn prepare_accepts_numeric_codes() {
        let csv =
            "rx,dtime,status,age,hg,pf,hx\n1,5,2,50,10,1,0\n4,6,7,61,13,2,1\n2,6,1,61,13,2,1\n";
        let p =
            prepare_prostate(&read_csv(csv.as_bytes(), &Schema::prostate_raw()).unwrap()).unwrap();
        assert_eq!(p.n_rows(), 2);
        assert_eq!(p.numeric("eventType").unwrap(), &[Some(1.0), Some(2.0)]);
        assert_eq!(p.numeric("normalAct").unwrap(), &[Some(1.0), Some(0.0)]);
    }

    #[test]
    fn unknown_status_is_rejected() {
        let csv = "rx,dtime,status,age,hg,pf,hx\nplacebo,5,dead - eaten by bear,50,10,normal activity,0\n";
        let err = prepare_prostate(&read_csv(csv.as_bytes(), &Schema::prostate_raw()).unwrap());
        assert!(matches!(
            err,
            Err(DatasetError::UnknownStatus { row: 1, .. })
        ));
        let csv = "rx,dtime,status,age,hg,pf,hx\n1,5,11,50,10,1,0\n";
        let err = prepare_prostate(&read_csv(csv.as_bytes(), &Schema::prostate_raw()).unwrap());
        assert!(matches!(err, Err(DatasetError::UnknownStatus { .. })));
    }

    #[test]
    fn age_cut_points() {
        assert_eq!(age_category(59.9), Some(0.0));
        assert_eq!(age_category(60.0), Some(1.0));
        assert_eq!(age_category(75.0), Some(2.0));
        assert_eq!(age_category(100.0), None);
    }

    #[test]
    fn prepare_is_idempotent() {
        let once = prepare_prostate(&raw()).unwrap();
        let twice = prepare_prostate(&once).unwrap();
        assert_eq!(once, twice);
        let reread = read_csv(once.to_csv_string().unwrap().as_bytes(), &Schema::new()).unwrap();
        let thrice = prepare_prostate(&reread).unwrap();
        assert_eq!(once, thrice);
    }

    #[test]
    fn declaration_rules() {
        let f = SurvivalFrame::from_numeric(vec![
            ("t", vec![30.0, 30.0, 70.0, 60.0]),
            ("e", vec![2.0, 1.0, 2.0, 2.0]),
        ])
        .unwrap()
        .with_roles("t", "e")
        .unwrap();
        let d = declare_survival(&f, 2, 60.0).unwrap();
        assert_eq!(d.event, vec![true, false, false, true]);
        assert_eq!(d.analysis_time, vec![30.0, 30.0, 60.0, 60.0]);
        assert!(matches!(
            declare_survival(&f, 2, 0.0),
            Err(DatasetError::InvalidExitTime(_))
        ));
        let all = declare_all_cause(&f, 60.0).unwrap();
        let c1 = declare_survival(&f, 1, 60.0).unwrap().n_events();
        let c2 = declare_survival(&f, 2, 60.0).unwrap().n_events();
        assert_eq!(c1 + c2, all.n_events());
    }

    #[test]
    fn complete_cases_drop_missing() {
        let f = SurvivalFrame::new(3)
            .with_numeric("a", vec![Some(1.0), None, Some(3.0)])
            .unwrap();
        let (g, dropped) = f.complete_cases(&["a"]).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(g.n_rows(), 2);
    }
}
