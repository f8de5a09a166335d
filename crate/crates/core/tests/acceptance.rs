//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 1-7 need the public prostate trial file, read from
//! `CRSTD_PROSTATE_CSV` or `data/prostate.csv` at the repository root.
//! Criterion 8 runs on seeded simulated data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use crstd::analysis::{fit_main_models, run_recipe, RecipeOutput, RecipeParams};
use crstd::dataset::{load_csv, prepare_prostate, Schema, SurvivalFrame};
use crstd::fpm::{fit, FpmProblem, ModelSpec};
use crstd::nonparam::aalen_johansen_cif;
use crstd::simulate::{
    competing_constant, synthetic_prostate_raw, weibull_single_cause, ConstantHazards,
};
use crstd::standardize::{
    bootstrap_se, gauss_legendre_on, standardize, time_grid, AtScenario, ContrastKind, Estimand,
    RowKind, StandardizeRequest, StandardizedSeries,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

/// Collects failed comparisons for one criterion.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    n: usize,
}

impl Checks {
    fn close(&mut self, what: &str, got: f64, want: f64, tol: f64) {
        self.n += 1;
        if !((got - want).abs() <= tol) {
            self.failures
                .push(format!("{what}: got {got:.6}, want {want} ± {tol}"));
        }
    }

    fn rel(&mut self, what: &str, got: f64, want: f64, tol: f64) {
        self.n += 1;
        if !((got - want).abs() <= tol * want.abs()) {
            self.failures.push(format!(
                "{what}: got {got:.6}, want {want} ± {:.1}%",
                tol * 100.0
            ));
        }
    }

    fn holds(&mut self, what: &str, ok: bool, detail: String) {
        self.n += 1;
        if !ok {
            self.failures.push(format!("{what}: {detail}"));
        }
    }

    fn fail(&mut self, what: String) {
        self.n += 1;
        self.failures.push(what);
    }
}

type Outcome = Result<Checks, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn data_path() -> PathBuf {
    std::env::var_os("CRSTD_PROSTATE_CSV")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/prostate.csv")
        })
}

fn prostate_data() -> Result<(SurvivalFrame, SurvivalFrame), String> {
    let path = data_path();
    if !path.is_file() {
        return Err(format!(
            "prostate data not found at {} (set CRSTD_PROSTATE_CSV)",
            path.display()
        ));
    }
    let raw = load_csv(&path, &Schema::new()).map_err(|e| e.to_string())?;
    let prepared = prepare_prostate(&raw).map_err(|e| e.to_string())?;
    Ok((raw, prepared))
}

fn recipe(name: &str, frame: &SurvivalFrame) -> Result<RecipeOutput, String> {
    run_recipe(name, frame, &RecipeParams::default()).map_err(|e| format!("recipe {name}: {e}"))
}

/// Compares estimate and interval of one series row.
#[allow(clippy::too_many_arguments)]
fn row_check(
    c: &mut Checks,
    s: &StandardizedSeries,
    t: f64,
    label: &str,
    cause: &str,
    want: (f64, f64, f64),
    tol_est: f64,
    tol_ci: f64,
) {
    match s.get(t, label, cause) {
        Some(r) => {
            let what = format!("{label} [{cause}] t={t}");
            c.close(&format!("{what} estimate"), r.estimate, want.0, tol_est);
            c.close(&format!("{what} lci"), r.lci, want.1, tol_ci);
            c.close(&format!("{what} uci"), r.uci, want.2, tol_ci);
        }
        None => c.fail(format!("row {label} [{cause}] at t={t} missing")),
    }
}

// Frozen counts of the public file under the prostate-death / other-death
// recoding: rows, arms, and alive vs dead.
const N_ROWS: usize = 252;
const N_PLACEBO: usize = 127;
const N_DES: usize = 125;
const N_ALIVE: usize = 64;
const N_DEAD: usize = 188;

fn criterion_1() -> Outcome {
    let (_, f) = prostate_data()?;
    let mut c = Checks::default();
    c.holds("rows", f.n_rows() == N_ROWS, format!("{} rows", f.n_rows()));
    let count = |col: &str, v: f64| -> Result<usize, String> {
        Ok(f.numeric(col)
            .map_err(|e| e.to_string())?
            .iter()
            .filter(|x| **x == Some(v))
            .count())
    };
    let (placebo, des) = (count("rx", 0.0)?, count("rx", 1.0)?);
    c.holds(
        "arms",
        placebo == N_PLACEBO && des == N_DES,
        format!("placebo {placebo}, DES {des}"),
    );
    let (alive, pc, oc) = (
        count("eventType", 0.0)?,
        count("eventType", 1.0)?,
        count("eventType", 2.0)?,
    );
    c.holds("alive", alive == N_ALIVE, format!("{alive}"));
    c.holds(
        "deaths",
        pc + oc == N_DEAD,
        format!("prostate {pc} + other {oc}"),
    );
    Ok(c)
}

fn criterion_2() -> Outcome {
    let (_, f) = prostate_data()?;
    let (prostate, other) = fit_main_models(&f, 60.0).map_err(|e| e.to_string())?;
    let mut c = Checks::default();
    c.close("other loglik", other.loglik, -297.4793, 0.5);
    let other_hr = [1.313613, 0.9325932, 2.695251, 3.573784, 2.241948, 1.858763];
    for (i, want) in other_hr.iter().enumerate() {
        c.rel(
            &format!("other HR {}", other.spec.covariates[i]),
            other.theta[i].exp(),
            *want,
            0.02,
        );
    }
    c.close("prostate loglik", prostate.loglik, -175.95468, 0.5);
    let prostate_hr = [
        0.781722, 0.3363049, 0.5847662, 0.8689135, 0.5876147, 1.615195,
    ];
    for (i, want) in prostate_hr.iter().enumerate() {
        c.rel(
            &format!("prostate HR {}", prostate.spec.covariates[i]),
            prostate.theta[i].exp(),
            *want,
            0.02,
        );
    }
    Ok(c)
}

fn criterion_3() -> Outcome {
    let (_, f) = prostate_data()?;
    let (prostate, _) = fit_main_models(&f, 60.0).map_err(|e| e.to_string())?;
    let mut des = prostate.covariate_row(&f, 0).map_err(|e| e.to_string())?;
    let mut placebo = des.clone();
    des[0] = 1.0;
    placebo[0] = 0.0;
    let mut c = Checks::default();
    for (t, want) in [(12.0, 0.52), (36.0, 0.9), (60.0, 1.5)] {
        c.close(
            &format!("HR at {t}"),
            prostate.hazard_ratio(&des, &placebo, t),
            want,
            0.05,
        );
    }
    Ok(c)
}

fn criterion_4() -> Outcome {
    let (_, f) = prostate_data()?;
    let out = recipe("total-cif", &f)?;
    let s = out.series("total_cif").ok_or("total_cif series missing")?;
    let mut c = Checks::default();
    row_check(
        &mut c,
        s,
        60.0,
        "DES",
        "prostate",
        (0.213, 0.153, 0.295),
        0.005,
        0.01,
    );
    row_check(
        &mut c,
        s,
        60.0,
        "placebo",
        "prostate",
        (0.277, 0.212, 0.362),
        0.005,
        0.01,
    );
    row_check(
        &mut c,
        s,
        60.0,
        "DES",
        "other",
        (0.535, 0.459, 0.622),
        0.005,
        0.01,
    );
    row_check(
        &mut c,
        s,
        60.0,
        "placebo",
        "other",
        (0.431, 0.359, 0.517),
        0.005,
        0.01,
    );
    Ok(c)
}

fn criterion_5() -> Outcome {
    let (_, f) = prostate_data()?;
    let out = recipe("rmft-60", &f)?;
    let s = out.series("rmft").ok_or("rmft series missing")?;
    let mut c = Checks::default();
    let rows = [
        ("placebo", "prostate", (10.112996, 7.5136987, 13.611498)),
        ("DES", "prostate", (6.9136108, 4.7205369, 10.125546)),
        (
            "DES - placebo",
            "prostate",
            (-3.1993855, -7.2043426, 0.80557166),
        ),
        ("placebo", "other", (15.637513, 12.644666, 19.338733)),
        ("DES", "other", (19.813057, 16.498763, 23.793132)),
        (
            "DES - placebo",
            "other",
            (4.1755443, -0.54768438, 8.8987729),
        ),
    ];
    for (label, cause, want) in rows {
        row_check(&mut c, s, 60.0, label, cause, want, 0.05, 0.15);
    }
    for (name, label, want) in [
        (
            "rmft_total_placebo",
            "lincom(1 1 0 0)",
            (25.750509, 22.255255, 29.245764),
        ),
        (
            "rmft_total_DES",
            "lincom(0 0 1 1)",
            (26.726668, 23.223267, 30.23007),
        ),
    ] {
        let s = out.series(name).ok_or(format!("{name} series missing"))?;
        row_check(&mut c, s, 60.0, label, "", want, 0.05, 0.15);
    }
    Ok(c)
}

fn criterion_6() -> Outcome {
    let (_, f) = prostate_data()?;
    let out = recipe("net-direct", &f)?;
    let s = out
        .series("net_failure")
        .ok_or("net_failure series missing")?;
    let mut c = Checks::default();
    row_check(
        &mut c,
        s,
        60.0,
        "DES",
        "prostate",
        (0.34, 0.246, 0.47),
        0.005,
        0.015,
    );
    row_check(
        &mut c,
        s,
        60.0,
        "placebo",
        "prostate",
        (0.38, 0.292, 0.492),
        0.005,
        0.015,
    );
    row_check(
        &mut c,
        s,
        60.0,
        "DES - placebo",
        "prostate",
        (-0.04, -0.186, 0.107),
        0.005,
        0.015,
    );
    Ok(c)
}

fn criterion_7() -> Outcome {
    let (_, f) = prostate_data()?;
    let out = recipe("separable", &f)?;
    let s = out.series("separable").ok_or("separable series missing")?;
    let mut c = Checks::default();
    for (label, want) in [("at1", 0.145), ("at2", 0.156), ("at3", 0.217)] {
        match s.get(36.0, label, "prostate") {
            Some(r) => c.close(&format!("{label} CIF at 36"), r.estimate, want, 0.005),
            None => c.fail(format!("{label} row missing")),
        }
    }
    row_check(
        &mut c,
        s,
        36.0,
        "at2 - at1",
        "prostate",
        (0.011, -0.004, 0.025),
        0.005,
        0.01,
    );
    row_check(
        &mut c,
        s,
        36.0,
        "at3 - at1",
        "prostate",
        (0.072, -0.014, 0.158),
        0.005,
        0.01,
    );
    Ok(c)
}

fn synthetic() -> SurvivalFrame {
    prepare_prostate(&synthetic_prostate_raw(502, 2024)).expect("synthetic data prepares")
}

fn gradient_check(c: &mut Checks, frame: &SurvivalFrame) -> Result<(), String> {
    let spec = ModelSpec::new(&["rx", "normalAct", "hx"], 4, 1, 60.0).with_tvc("rx", 2);
    let fitted = fit(&spec, frame).map_err(|e| e.to_string())?;
    let problem = FpmProblem::new(&spec, frame).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 0.05).expect("valid normal");
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let theta: Vec<f64> = fitted
            .theta
            .iter()
            .map(|v| v + noise.sample(&mut rng))
            .collect();
        let eval = problem.evaluate(&theta).map_err(|e| e.to_string())?;
        if !eval.value.is_finite() {
            continue;
        }
        for j in 0..theta.len() {
            let h = 1e-5 * theta[j].abs().max(1.0);
            let (mut up, mut dn) = (theta.clone(), theta.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (problem.value(&up).map_err(|e| e.to_string())?
                - problem.value(&dn).map_err(|e| e.to_string())?)
                / (2.0 * h);
            let g = eval.gradient[j];
            worst = worst.max((g - fd).abs() / g.abs().max(1.0));
        }
    }
    c.holds(
        "gradient vs finite differences",
        worst <= 1e-5,
        format!("worst relative error {worst:.2e}"),
    );
    println!("    gradient: worst relative error {worst:.2e}");
    Ok(())
}

fn span_check(c: &mut Checks, frame: &SurvivalFrame) -> Result<(), String> {
    let spec = ModelSpec::new(&["rx", "normalAct", "hx"], 4, 1, 60.0).with_tvc("rx", 2);
    let a = fit(&spec, frame).map_err(|e| e.to_string())?;
    let b = fit(&spec.clone().orthogonal(false), frame).map_err(|e| e.to_string())?;
    let diff = (a.loglik - b.loglik).abs();
    c.close("loglik orthogonal vs raw basis", diff, 0.0, 1e-6);
    println!("    span invariance: |Δloglik| = {diff:.2e}");
    Ok(())
}

fn cif_checks(c: &mut Checks, frame: &SurvivalFrame) -> Result<(), String> {
    let (pr, ot) = fit_main_models(frame, 60.0).map_err(|e| e.to_string())?;
    let scenarios = vec![
        AtScenario::new("placebo").set("rx", 0.0),
        AtScenario::new("DES").set("rx", 1.0),
    ];
    let grid = time_grid(0.0, 60.0, 61);
    let cif_req = |nodes: usize| {
        StandardizeRequest::new(Estimand::Cif, grid.clone(), scenarios.clone())
            .nodes(nodes)
            .labels(&["prostate", "other"])
            .without_se()
    };
    let cif = standardize(&[&pr, &ot], frame, &cif_req(50)).map_err(|e| e.to_string())?;
    let surv_req = StandardizeRequest::new(Estimand::Survival, grid.clone(), scenarios.clone())
        .labels(&["prostate", "other"])
        .without_se();
    let surv = standardize(&[&pr, &ot], frame, &surv_req).map_err(|e| e.to_string())?;

    let (mut worst_sum, mut worst_drop) = (0.0f64, 0.0f64);
    for sc in ["placebo", "DES"] {
        for cause in ["prostate", "other"] {
            for w in cif.curve(sc, cause).windows(2) {
                worst_drop = worst_drop.max(w[0].estimate - w[1].estimate);
            }
        }
        for &t in &grid {
            let fc = cif
                .get(t, sc, "prostate")
                .map(|r| r.estimate)
                .unwrap_or(f64::NAN);
            let fo = cif
                .get(t, sc, "other")
                .map(|r| r.estimate)
                .unwrap_or(f64::NAN);
            let s = surv
                .get(t, sc, "all")
                .map(|r| r.estimate)
                .unwrap_or(f64::NAN);
            let err = (fc + fo + s - 1.0).abs();
            worst_sum = if err.is_nan() {
                f64::NAN
            } else {
                worst_sum.max(err)
            };
        }
    }
    c.holds(
        "CIF monotone",
        worst_drop <= 1e-6,
        format!("largest decrease {worst_drop:.2e}"),
    );
    c.close("CIF_c + CIF_o + S - 1", worst_sum, 0.0, 1e-6);
    println!("    cif: largest decrease {worst_drop:.2e}, |sum - 1| max {worst_sum:.2e}");

    let doubled = standardize(&[&pr, &ot], frame, &cif_req(100)).map_err(|e| e.to_string())?;
    let worst_nodes = cif
        .rows
        .iter()
        .zip(&doubled.rows)
        .map(|(a, b)| (a.estimate - b.estimate).abs())
        .fold(0.0f64, f64::max);
    c.close("node doubling", worst_nodes, 0.0, 1e-6);
    println!("    node doubling: max change {worst_nodes:.2e}");

    // Restricted mean by integrating the standardised CIF curve over [0, t*].
    let t_star = 60.0;
    let rmft_req = StandardizeRequest::new(Estimand::Rmft, vec![t_star], scenarios.clone())
        .nodes(100)
        .labels(&["prostate", "other"])
        .without_se();
    let rmft = standardize(&[&pr, &ot], frame, &rmft_req).map_err(|e| e.to_string())?;
    let panels = 12;
    let mut outer_t = Vec::new();
    let mut outer_w = Vec::new();
    for p in 0..panels {
        let a = t_star * p as f64 / panels as f64;
        let b = t_star * (p + 1) as f64 / panels as f64;
        let (x, w) = gauss_legendre_on(a, b, 30);
        outer_t.extend(x);
        outer_w.extend(w);
    }
    let nested_req = StandardizeRequest::new(Estimand::Cif, outer_t.clone(), scenarios.clone())
        .nodes(100)
        .labels(&["prostate", "other"])
        .without_se();
    let nested = standardize(&[&pr, &ot], frame, &nested_req).map_err(|e| e.to_string())?;
    let mut worst_rmft = 0.0f64;
    for sc in ["placebo", "DES"] {
        for cause in ["prostate", "other"] {
            let integral: f64 = nested
                .curve(sc, cause)
                .iter()
                .zip(&outer_w)
                .map(|(r, w)| r.estimate * w)
                .sum();
            let direct = rmft
                .get(t_star, sc, cause)
                .map(|r| r.estimate)
                .unwrap_or(f64::NAN);
            let err = (integral - direct).abs();
            worst_rmft = if err.is_nan() {
                f64::NAN
            } else {
                worst_rmft.max(err)
            };
        }
    }
    c.close("nested vs swapped RMFT", worst_rmft, 0.0, 1e-6);
    println!("    rmft: nested vs swapped max difference {worst_rmft:.2e}");
    Ok(())
}

fn aalen_johansen_check(c: &mut Checks) -> Result<(), String> {
    let (rc, ro, n) = (0.02, 0.03, 4000usize);
    let h = ConstantHazards {
        rate_c: rc,
        rate_o: ro,
        beta_c: 0.0,
        beta_o: 0.0,
        p_z: 0.5,
        censor_max: f64::INFINITY,
    };
    let frame = competing_constant(n, h, 5);
    let curves = aalen_johansen_cif(&frame, 1e9, &[1, 2], None, None).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for curve in &curves {
        let rate = if curve.cause == Some(1) { rc } else { ro };
        for t in [5.0, 10.0, 20.0, 40.0] {
            let truth = rate / (rc + ro) * (1.0 - (-(rc + ro) * t).exp());
            // Without censoring the estimator is a sample proportion.
            let sigma = (truth * (1.0 - truth) / n as f64).sqrt();
            let z = (curve.curve.value_at(t) - truth).abs() / sigma;
            worst = worst.max(z);
        }
    }
    c.holds(
        "Aalen-Johansen vs closed form",
        worst <= 3.0,
        format!("worst |z| {worst:.2}"),
    );
    println!("    aalen-johansen: worst |z| {worst:.2}");
    Ok(())
}

fn bootstrap_check(c: &mut Checks, frame: &SurvivalFrame) -> Result<(), String> {
    let specs = [
        crstd::analysis::prostate_spec(60.0),
        crstd::analysis::other_cause_spec(60.0),
    ];
    let (pr, ot) = fit_main_models(frame, 60.0).map_err(|e| e.to_string())?;
    let req = StandardizeRequest::new(
        Estimand::Cif,
        vec![60.0],
        crstd::analysis::treatment_scenarios(),
    )
    .contrast(ContrastKind::Difference)
    .labels(&["prostate", "other"]);
    let delta = standardize(&[&pr, &ot], frame, &req).map_err(|e| e.to_string())?;
    let boot = bootstrap_se(&specs, frame, &req, 200, 20240).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (row, se) in boot.estimates.rows.iter().zip(&boot.se) {
        if row.kind != RowKind::Scenario && row.kind != RowKind::Difference {
            continue;
        }
        let d = delta
            .get(row.time, &row.label, &row.cause)
            .map(|r| r.se)
            .unwrap_or(f64::NAN);
        let rel = (d - se).abs() / se;
        println!(
            "    bootstrap: {} [{}] delta {d:.4} bootstrap {se:.4} ({:+.1}%)",
            row.label,
            row.cause,
            (d - se) / se * 100.0
        );
        worst = if rel.is_nan() {
            f64::NAN
        } else {
            worst.max(rel)
        };
    }
    c.holds(
        "delta vs bootstrap SE",
        worst <= 0.15,
        format!(
            "worst relative gap {:.1}% ({} failed replicates)",
            worst * 100.0,
            boot.failed
        ),
    );
    Ok(())
}

fn recovery_check(c: &mut Checks) -> Result<(), String> {
    let (beta, reps) = (0.5, 40);
    let mut est = Vec::with_capacity(reps);
    for r in 0..reps {
        let frame = weibull_single_cause(400, 0.03, 1.0, beta, 40.0, 1000 + r as u64);
        let f = fit(&ModelSpec::new(&["x"], 3, 1, 1e6), &frame)
            .map_err(|e| format!("replicate {r}: {e}"))?;
        est.push(f.theta[0]);
    }
    let m = reps as f64;
    let mean = est.iter().sum::<f64>() / m;
    let sd = (est.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    let mc_se = sd / m.sqrt();
    let z = (mean - beta).abs() / mc_se;
    c.holds(
        "coefficient recovery",
        z <= 3.0,
        format!("mean {mean:.4} vs {beta}, |z| {z:.2}"),
    );
    println!("    recovery: mean beta {mean:.4} (MC SE {mc_se:.4}), |z| {z:.2}");
    Ok(())
}

fn criterion_8() -> Outcome {
    let frame = synthetic();
    let mut c = Checks::default();
    gradient_check(&mut c, &frame)?;
    span_check(&mut c, &frame)?;
    cif_checks(&mut c, &frame)?;
    aalen_johansen_check(&mut c)?;
    bootstrap_check(&mut c, &frame)?;
    recovery_check(&mut c)?;
    Ok(c)
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("data preparation", criterion_1),
        ("model fits", criterion_2),
        ("time-dependent hazard ratio", criterion_3),
        ("total effects", criterion_4),
        ("restricted mean failure time", criterion_5),
        ("direct effects", criterion_6),
        ("separable effects", criterion_7),
        ("property suite", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(c) if c.failures.is_empty() => {
                println!(
                    "PASS criterion {} ({name}): {} checks [{secs:.1}s]",
                    i + 1,
                    c.n
                );
            }
            Ok(c) => {
                failed += 1;
                println!(
                    "FAIL criterion {} ({name}): {} of {} checks failed [{secs:.1}s]",
                    i + 1,
                    c.failures.len(),
                    c.n
                );
                for f in &c.failures {
                    println!("    {f}");
                }
            }
            Err(e) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {e}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
