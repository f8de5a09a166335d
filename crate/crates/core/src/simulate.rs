//! Seeded data generators used by examples and tests.

use crate::dataset::{Column, SurvivalFrame, PF_LABELS, RX_LABELS, STATUS_LABELS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Single-cause Weibull data with one binary covariate `x`:
/// `h(t|x) = λ·γ·t^(γ−1)·exp(βx)`, uniform censoring on `(0, censor_max)`.
/// Columns `t`, `e` (0/1), `x`; roles set.
pub fn weibull_single_cause(
    n: usize,
    lambda: f64,
    shape: f64,
    beta: f64,
    censor_max: f64,
    seed: u64,
) -> SurvivalFrame {
    let mut r = rng(seed);
    let (mut t, mut e, mut x) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for _ in 0..n {
        let xi = if r.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
        let u: f64 = Exp1.sample(&mut r);
        let ti = (u / (lambda * (beta * xi).exp())).powf(1.0 / shape);
        let ci = r.random::<f64>() * censor_max;
        t.push(ti.min(ci).max(1e-6));
        e.push(if ti <= ci { 1.0 } else { 0.0 });
        x.push(xi);
    }
    SurvivalFrame::from_numeric(vec![("t", t), ("e", e), ("x", x)])
        .and_then(|f| f.with_roles("t", "e"))
        .expect("generated columns are consistent")
}

/// Parameters of [`competing_constant`].
#[derive(Debug, Clone, Copy)]
pub struct ConstantHazards {
    /// Rate of cause 1 when `z = 0`.
    pub rate_c: f64,
    /// Rate of cause 2 when `z = 0`.
    pub rate_o: f64,
    /// Log hazard ratios of `z` for causes 1 and 2.
    pub beta_c: f64,
    pub beta_o: f64,
    /// Probability that `z = 1`.
    pub p_z: f64,
    /// Random censoring is uniform on `(0, censor_max)`; infinity disables it.
    pub censor_max: f64,
}

/// Competing-risks data with constant cause-specific hazards. Columns `time`,
/// `cause` (0 censored, 1, 2) and binary `z`; roles set.
pub fn competing_constant(n: usize, h: ConstantHazards, seed: u64) -> SurvivalFrame {
    let mut r = rng(seed);
    let (mut time, mut cause, mut z) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for _ in 0..n {
        let zi = if r.random::<f64>() < h.p_z { 1.0 } else { 0.0 };
        let lc = h.rate_c * (h.beta_c * zi).exp();
        let lo = h.rate_o * (h.beta_o * zi).exp();
        let u: f64 = Exp1.sample(&mut r);
        let ti = u / (lc + lo);
        let k = if r.random::<f64>() < lc / (lc + lo) {
            1.0
        } else {
            2.0
        };
        let ci = if h.censor_max.is_finite() {
            r.random::<f64>() * h.censor_max
        } else {
            f64::INFINITY
        };
        if ti <= ci {
            time.push(ti.max(1e-6));
            cause.push(k);
        } else {
            time.push(ci.max(1e-6));
            cause.push(0.0);
        }
        z.push(zi);
    }
    SurvivalFrame::from_numeric(vec![("time", time), ("cause", cause), ("z", z)])
        .and_then(|f| f.with_roles("time", "cause"))
        .expect("generated columns are consistent")
}

/// A raw trial-format file resembling the public prostate data: four arms
/// with text labels, integer follow-up months including zeros, and causes of
/// death from two Weibull cause-specific hazards with a shared shape.
pub fn synthetic_prostate_raw(n: usize, seed: u64) -> SurvivalFrame {
    let mut r = rng(seed);
    let age_dist = Normal::<f64>::new(70.0, 7.5).expect("valid normal");
    let hg_dist = Normal::<f64>::new(13.4, 1.9).expect("valid normal");
    let shape = 1.15;
    let other_labels: Vec<&str> = STATUS_LABELS
        .iter()
        .filter(|(_, c)| *c == 2)
        .map(|(l, _)| *l)
        .collect();
    let mut cols: [Vec<Option<String>>; 3] = Default::default();
    let mut num: [Vec<Option<f64>>; 5] = Default::default();
    for i in 0..n {
        let arm = i % 4;
        let des = arm == 3;
        let age = age_dist.sample(&mut r).clamp(48.0, 89.0).round();
        let hg = (hg_dist.sample(&mut r) * 10.0).round() / 10.0;
        let hx = if r.random::<f64>() < 0.42 { 1.0 } else { 0.0 };
        let pf = if r.random::<f64>() < 0.9 {
            1
        } else {
            2 + (r.random::<f64>() * 3.0) as usize
        };
        let normal = if pf == 1 { 1.0 } else { 0.0 };
        let old = if age >= 75.0 { 1.0 } else { 0.0 };
        let mid = if (60.0..75.0).contains(&age) {
            1.0
        } else {
            0.0
        };
        let anemic = if hg < 12.0 { 1.0 } else { 0.0 };
        let lp_c = -4.6 - 0.35 * f64::from(des) - 1.0 * normal - 0.4 * mid - 0.1 * old - 0.5 * hx
            + 0.5 * anemic;
        let lp_o = -6.6 + 0.27 * f64::from(des) - 0.07 * normal
            + 1.0 * mid
            + 1.3 * old
            + 0.8 * hx
            + 0.6 * anemic;
        let (lc, lo) = (lp_c.exp(), lp_o.exp());
        let u: f64 = Exp1.sample(&mut r);
        let t = (u / (lc + lo)).powf(1.0 / shape);
        let follow = 25.0 + r.random::<f64>() * 51.0;
        let (dtime, status) = if t <= follow {
            let label = if r.random::<f64>() < lc / (lc + lo) {
                STATUS_LABELS[1].0
            } else {
                other_labels[(r.random::<f64>() * other_labels.len() as f64) as usize]
            };
            (t.floor(), label)
        } else {
            (follow.floor(), STATUS_LABELS[0].0)
        };
        cols[0].push(Some(RX_LABELS[arm].0.to_string()));
        cols[1].push(Some(status.to_string()));
        cols[2].push(Some(PF_LABELS[pf - 1].0.to_string()));
        num[0].push(Some((i + 1) as f64));
        num[1].push(Some(dtime));
        num[2].push(Some(age));
        num[3].push(Some(hg));
        num[4].push(Some(hx));
    }
    let [rx, status, pf] = cols;
    let [patno, dtime, age, hg, hx] = num;
    SurvivalFrame::new(n)
        .with_numeric("patno", patno)
        .and_then(|f| f.with_column("rx", Column::Text(rx)))
        .and_then(|f| f.with_numeric("dtime", dtime))
        .and_then(|f| f.with_column("status", Column::Text(status)))
        .and_then(|f| f.with_numeric("age", age))
        .and_then(|f| f.with_column("pf", Column::Text(pf)))
        .and_then(|f| f.with_numeric("hx", hx))
        .and_then(|f| f.with_numeric("hg", hg))
        .expect("generated columns are consistent")
}

/// Nonparametric bootstrap resample of row indices.
pub fn bootstrap_indices<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::prepare_prostate;

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(
            weibull_single_cause(50, 0.1, 1.0, 0.0, 10.0, 1),
            weibull_single_cause(50, 0.1, 1.0, 0.0, 10.0, 1)
        );
        assert_eq!(synthetic_prostate_raw(40, 9), synthetic_prostate_raw(40, 9));
    }

    #[test]
    fn synthetic_raw_prepares() {
        let raw = synthetic_prostate_raw(502, 2024);
        let prepared = prepare_prostate(&raw).unwrap();
        assert!(prepared.n_rows() > 200 && prepared.n_rows() < 300);
        let ev = prepared.numeric("eventType").unwrap();
        for code in [0.0, 1.0, 2.0] {
            assert!(ev.contains(&Some(code)));
        }
    }
}
