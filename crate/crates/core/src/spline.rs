//! Restricted cubic splines.
//!
//! Column 1 of the basis is `x` itself; column `j + 1` is
//! `(x - k_{j+1})^3_+ - λ_j (x - k_1)^3_+ - (1 - λ_j)(x - k_K)^3_+` with
//! `λ_j = (k_K - k_{j+1}) / (k_K - k_1)`, so the basis is linear beyond the
//! boundary knots. An orthogonalised basis stores the matrix `R` with
//! `[raw, 1] = [orthogonal, 1] · R` so that new points map onto the
//! coordinates used during construction.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SplineError {
    #[error("a knot vector needs at least two knots, got {0}")]
    TooFewKnots(usize),
    #[error("knots must be finite and strictly increasing")]
    NotIncreasing,
    #[error("degrees of freedom must be at least 1")]
    ZeroDf,
    #[error("{needed} distinct values are needed to place {needed} knots, found {found}")]
    TooFewDistinct { needed: usize, found: usize },
    #[error("value and mask lengths differ ({values} vs {mask})")]
    MaskLength { values: usize, mask: usize },
    #[error("basis matrix is rank deficient at column {0}")]
    RankDeficient(usize),
    #[error("orthogonalisation matrix has shape {rows}x{cols}, expected {expected}x{expected}")]
    BadTransform {
        rows: usize,
        cols: usize,
        expected: usize,
    },
}

pub type Result<T> = std::result::Result<T, SplineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotSource {
    Centiles,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    knots: Vec<f64>,
    source: KnotSource,
}

impl KnotVector {
    pub fn new(knots: Vec<f64>, source: KnotSource) -> Result<Self> {
        if knots.len() < 2 {
            return Err(SplineError::TooFewKnots(knots.len()));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SplineError::NotIncreasing);
        }
        Ok(KnotVector { knots, source })
    }

    pub fn user(knots: Vec<f64>) -> Result<Self> {
        KnotVector::new(knots, KnotSource::User)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn source(&self) -> KnotSource {
        self.source
    }

    pub fn df(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn lower(&self) -> f64 {
        self.knots[0]
    }

    pub fn upper(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }
}

/// How a centile is read off sorted data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentileRule {
    /// Rank `(n + 1) p / 100` with linear interpolation between order
    /// statistics, clamped to the sample range.
    #[default]
    Interpolated,
    /// Empirical distribution with averaging at discontinuities: with
    /// `P = n p / 100`, `(x_P + x_{P+1}) / 2` when `P` is an integer, else
    /// `x_{ceil P}`.
    EmpiricalAverage,
}

/// `p`-th centile (0..=100) of already sorted data.
pub fn centile(sorted: &[f64], p: f64, rule: CentileRule) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "centile of empty data");
    match rule {
        CentileRule::Interpolated => {
            let r = (n as f64 + 1.0) * p / 100.0;
            if r <= 1.0 {
                sorted[0]
            } else if r >= n as f64 {
                sorted[n - 1]
            } else {
                let lo = r.floor();
                let frac = r - lo;
                let i = lo as usize - 1;
                sorted[i] + frac * (sorted[i + 1] - sorted[i])
            }
        }
        CentileRule::EmpiricalAverage => {
            let pos = n as f64 * p / 100.0;
            if pos <= 0.0 {
                return sorted[0];
            }
            if pos >= n as f64 {
                return sorted[n - 1];
            }
            let fl = pos.floor();
            if (pos - fl).abs() < 1e-9 {
                let i = fl as usize;
                0.5 * (sorted[i - 1] + sorted[i])
            } else {
                sorted[pos.ceil() as usize - 1]
            }
        }
    }
}

/// Internal knot centiles for `df` degrees of freedom: `df - 1` equally
/// spaced centiles strictly between 0 and 100.
pub fn internal_centiles(df: usize) -> Vec<f64> {
    (1..df).map(|i| 100.0 * i as f64 / df as f64).collect()
}

/// Knots at the min/max of the masked values plus equally spaced internal
/// centiles, using the default [`CentileRule`].
pub fn centile_knots(values: &[f64], df: usize, mask: &[bool]) -> Result<KnotVector> {
    centile_knots_with(values, df, mask, CentileRule::default())
}

pub fn centile_knots_with(
    values: &[f64],
    df: usize,
    mask: &[bool],
    rule: CentileRule,
) -> Result<KnotVector> {
    if df == 0 {
        return Err(SplineError::ZeroDf);
    }
    if values.len() != mask.len() {
        return Err(SplineError::MaskLength {
            values: values.len(),
            mask: mask.len(),
        });
    }
    let mut selected: Vec<f64> = values
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .collect();
    selected.sort_by(f64::total_cmp);
    let mut distinct = selected.clone();
    distinct.dedup();
    if distinct.len() < df + 1 {
        return Err(SplineError::TooFewDistinct {
            needed: df + 1,
            found: distinct.len(),
        });
    }
    let mut knots = Vec::with_capacity(df + 1);
    knots.push(selected[0]);
    for p in internal_centiles(df) {
        knots.push(centile(&selected, p, rule));
    }
    knots.push(selected[selected.len() - 1]);
    KnotVector::new(knots, KnotSource::Centiles).map_err(|_| SplineError::TooFewDistinct {
        needed: df + 1,
        found: distinct.len(),
    })
}

fn cube_plus(x: f64) -> f64 {
    if x > 0.0 {
        x * x * x
    } else {
        0.0
    }
}

fn square_plus(x: f64) -> f64 {
    if x > 0.0 {
        x * x
    } else {
        0.0
    }
}

/// Raw basis values at `x` written into `out` (length `df`).
pub fn raw_basis(knots: &KnotVector, x: f64, out: &mut [f64]) {
    let k = knots.knots();
    let (k1, kk) = (k[0], k[k.len() - 1]);
    out[0] = x;
    for j in 1..k.len() - 1 {
        let lambda = (kk - k[j]) / (kk - k1);
        out[j] =
            cube_plus(x - k[j]) - lambda * cube_plus(x - k1) - (1.0 - lambda) * cube_plus(x - kk);
    }
}

/// First derivatives of [`raw_basis`].
pub fn raw_basis_deriv(knots: &KnotVector, x: f64, out: &mut [f64]) {
    let k = knots.knots();
    let (k1, kk) = (k[0], k[k.len() - 1]);
    out[0] = 1.0;
    for j in 1..k.len() - 1 {
        let lambda = (kk - k[j]) / (kk - k1);
        out[j] = 3.0
            * (square_plus(x - k[j])
                - lambda * square_plus(x - k1)
                - (1.0 - lambda) * square_plus(x - kk));
    }
}

/// Stored orthogonalisation: `r` satisfies `[raw, 1] = [orthogonal, 1] · r`.
/// The spline block of `r` is upper triangular; its last row holds the
/// column means.
#[derive(Debug, Clone, PartialEq)]
pub struct Orthogonalization {
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
}

impl Orthogonalization {
    pub fn from_r(r: DMatrix<f64>) -> Result<Self> {
        let p1 = r.nrows();
        if r.ncols() != p1 || p1 < 2 {
            return Err(SplineError::BadTransform {
                rows: r.nrows(),
                cols: r.ncols(),
                expected: p1.max(2),
            });
        }
        let r_inv = invert_transform(&r).ok_or(SplineError::RankDeficient(0))?;
        Ok(Orthogonalization { r, r_inv })
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Maps raw values (without the constant) to orthogonal coordinates.
    fn apply(&self, raw: &[f64], out: &mut [f64]) {
        let p = raw.len();
        for (j, o) in out.iter_mut().enumerate().take(p) {
            let mut acc = self.r_inv[(p, j)];
            for (i, &v) in raw.iter().enumerate() {
                acc += v * self.r_inv[(i, j)];
            }
            *o = acc;
        }
    }

    /// Maps raw derivatives; the constant column differentiates to zero.
    fn apply_deriv(&self, raw: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate().take(raw.len()) {
            *o = raw
                .iter()
                .enumerate()
                .map(|(i, &v)| v * self.r_inv[(i, j)])
                .sum();
        }
    }
}

/// Inverse of a transform with upper-triangular spline block and a final
/// row of means, by back substitution on the block.
fn invert_transform(r: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let p = r.nrows() - 1;
    if (r[(p, p)] - 1.0).abs() > 1e-12 || (0..p).any(|i| r[(i, p)] != 0.0) {
        return r.clone().try_inverse();
    }
    let mut inv = DMatrix::zeros(p + 1, p + 1);
    // Upper-triangular block inverse.
    for j in 0..p {
        if r[(j, j)] == 0.0 {
            return None;
        }
        inv[(j, j)] = 1.0 / r[(j, j)];
        for i in (0..j).rev() {
            let mut s = 0.0;
            for k in i + 1..=j {
                s += r[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -s / r[(i, i)];
        }
    }
    // Last row: -means · U^{-1}.
    for j in 0..p {
        let mut s = 0.0;
        for k in 0..=j {
            s += r[(p, k)] * inv[(k, j)];
        }
        inv[(p, j)] = -s;
    }
    inv[(p, p)] = 1.0;
    Some(inv)
}

/// Gram–Schmidt orthogonalisation of the columns of `raw` against the
/// constant and the preceding columns, scaled to unit sample variance.
/// Returns the orthogonal columns and `R`.
pub fn orthogonalize(raw: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, p) = raw.shape();
    if n < p + 2 {
        return Err(SplineError::RankDeficient(0));
    }
    let denom = (n - 1) as f64;
    let mut q = DMatrix::<f64>::zeros(n, p);
    let mut r = DMatrix::<f64>::zeros(p + 1, p + 1);
    r[(p, p)] = 1.0;
    for j in 0..p {
        let col = raw.column(j);
        let mean = col.mean();
        let scale = col.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
        let mut v: Vec<f64> = col.iter().map(|x| x - mean).collect();
        r[(p, j)] = mean;
        for i in 0..j {
            let c = v
                .iter()
                .zip(q.column(i).iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / denom;
            for (vk, qk) in v.iter_mut().zip(q.column(i).iter()) {
                *vk -= c * qk;
            }
            r[(i, j)] = c;
        }
        let sd = (v.iter().map(|x| x * x).sum::<f64>() / denom).sqrt();
        if !(sd > 1e-10 * scale) {
            return Err(SplineError::RankDeficient(j));
        }
        r[(j, j)] = sd;
        for (k, vk) in v.into_iter().enumerate() {
            q[(k, j)] = vk / sd;
        }
    }
    Ok((q, r))
}

/// A restricted cubic spline basis, optionally orthogonalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SplineBasisRepr", into = "SplineBasisRepr")]
pub struct SplineBasis {
    knots: KnotVector,
    orthogonal: Option<Orthogonalization>,
}

#[derive(Serialize, Deserialize)]
struct SplineBasisRepr {
    knots: Vec<f64>,
    knot_source: KnotSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r_matrix: Option<Vec<Vec<f64>>>,
}

impl From<SplineBasis> for SplineBasisRepr {
    fn from(b: SplineBasis) -> Self {
        SplineBasisRepr {
            knots: b.knots.knots.clone(),
            knot_source: b.knots.source,
            r_matrix: b.orthogonal.map(|o| {
                (0..o.r.nrows())
                    .map(|i| o.r.row(i).iter().copied().collect())
                    .collect()
            }),
        }
    }
}

impl TryFrom<SplineBasisRepr> for SplineBasis {
    type Error = SplineError;

    fn try_from(repr: SplineBasisRepr) -> Result<Self> {
        let knots = KnotVector::new(repr.knots, repr.knot_source)?;
        let basis = SplineBasis::raw(knots);
        match repr.r_matrix {
            None => Ok(basis),
            Some(rows) => {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(SplineError::BadTransform {
                        rows: n,
                        cols: rows.first().map_or(0, Vec::len),
                        expected: basis.df() + 1,
                    });
                }
                let r = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                basis.with_r(r)
            }
        }
    }
}

impl SplineBasis {
    pub fn raw(knots: KnotVector) -> Self {
        SplineBasis {
            knots,
            orthogonal: None,
        }
    }

    /// Orthogonalised basis whose `R` is computed on `construction`.
    pub fn orthogonalized(knots: KnotVector, construction: &[f64]) -> Result<Self> {
        let raw = SplineBasis::raw(knots);
        let (_, r) = orthogonalize(&raw.eval(construction))?;
        raw.with_r(r)
    }

    /// Attaches a stored `R` matrix (e.g. read back from a saved model).
    pub fn with_r(mut self, r: DMatrix<f64>) -> Result<Self> {
        let expected = self.df() + 1;
        if r.nrows() != expected || r.ncols() != expected {
            return Err(SplineError::BadTransform {
                rows: r.nrows(),
                cols: r.ncols(),
                expected,
            });
        }
        self.orthogonal = Some(Orthogonalization::from_r(r)?);
        Ok(self)
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn df(&self) -> usize {
        self.knots.df()
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonal.is_some()
    }

    pub fn r_matrix(&self) -> Option<&DMatrix<f64>> {
        self.orthogonal.as_ref().map(|o| o.r())
    }

    /// Basis values at a single point.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        match &self.orthogonal {
            None => raw_basis(&self.knots, x, out),
            Some(o) => {
                let mut raw = vec![0.0; self.df()];
                raw_basis(&self.knots, x, &mut raw);
                o.apply(&raw, out);
            }
        }
    }

    pub fn deriv_into(&self, x: f64, out: &mut [f64]) {
        match &self.orthogonal {
            None => raw_basis_deriv(&self.knots, x, out),
            Some(o) => {
                let mut raw = vec![0.0; self.df()];
                raw_basis_deriv(&self.knots, x, &mut raw);
                o.apply_deriv(&raw, out);
            }
        }
    }

    pub fn eval_scalar(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.df()];
        self.eval_into(x, &mut out);
        out
    }

    pub fn deriv_scalar(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.df()];
        self.deriv_into(x, &mut out);
        out
    }

    /// Basis matrix, one row per element of `x`.
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(x.len(), self.df());
        let mut row = vec![0.0; self.df()];
        for (i, &xi) in x.iter().enumerate() {
            self.eval_into(xi, &mut row);
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn deriv(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(x.len(), self.df());
        let mut row = vec![0.0; self.df()];
        for (i, &xi) in x.iter().enumerate() {
            self.deriv_into(xi, &mut row);
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    /// Coefficients `(c, c0)` with `c · basis(x) + c0 = x` for every `x`.
    pub fn identity_coefficients(&self) -> (Vec<f64>, f64) {
        let mut c = vec![0.0; self.df()];
        match &self.orthogonal {
            None => {
                c[0] = 1.0;
                (c, 0.0)
            }
            Some(o) => {
                let p = self.df();
                c[0] = o.r[(0, 0)];
                (c, o.r[(p, 0)])
            }
        }
    }
}
