use crstd::analysis::{fit_main_models, run_recipe, treatment_scenarios, RecipeParams};
use crstd::dataset::{declare_all_cause, declare_survival, prepare_prostate, SurvivalFrame};
use crstd::fpm::{fit, fit_from, FitOptions, FpmProblem, ModelSpec};
use crstd::nonparam::{aalen_johansen, aalen_johansen_cif, km_failure};
use crstd::simulate::{synthetic_prostate_raw, weibull_single_cause};
use crstd::spline::{KnotVector, SplineBasis};
use crstd::standardize::{
    standardize, time_grid, AtScenario, ContrastKind, Estimand, RowKind, StandardizeRequest,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::sync::OnceLock;

fn prepared(seed: u64) -> SurvivalFrame {
    prepare_prostate(&synthetic_prostate_raw(502, seed)).unwrap()
}

fn shared() -> &'static SurvivalFrame {
    static F: OnceLock<SurvivalFrame> = OnceLock::new();
    F.get_or_init(|| prepared(2024))
}

fn column(f: &SurvivalFrame, name: &str) -> Vec<f64> {
    f.numeric(name)
        .unwrap()
        .iter()
        .map(|v| v.unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cause_declarations_partition_deaths(seed in 0u64..1000, exit in 1.0f64..80.0) {
        let f = prepared(seed);
        let a = declare_survival(&f, 1, exit).unwrap().n_events();
        let b = declare_survival(&f, 2, exit).unwrap().n_events();
        let all = declare_all_cause(&f, exit).unwrap().n_events();
        let deaths = column(&f, "allcause")
            .iter()
            .zip(column(&f, "dtime"))
            .filter(|(d, t)| **d == 1.0 && *t <= exit)
            .count();
        prop_assert_eq!(a + b, deaths);
        prop_assert_eq!(all, deaths);
    }

    #[test]
    fn preparation_is_idempotent(seed in 0u64..1000) {
        let f = prepared(seed);
        prop_assert_eq!(prepare_prostate(&f).unwrap(), f.clone());
        let sum: Vec<f64> = (0..f.n_rows())
            .map(|i| ["ageCat1", "ageCat2", "ageCat3"].iter().map(|c| f.value(i, c).unwrap().unwrap()).sum())
            .collect();
        prop_assert!(sum.iter().all(|s| *s == 1.0));
    }

    #[test]
    fn basis_is_linear_beyond_boundary_knots(
        mut inner in prop::collection::vec(0.05f64..0.95, 1..5),
        x in prop_oneof![-3.0f64..-0.01, 1.01f64..4.0],
    ) {
        inner.sort_by(f64::total_cmp);
        inner.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let mut knots = vec![0.0];
        knots.extend(inner);
        knots.push(1.0);
        let basis = SplineBasis::raw(KnotVector::user(knots).unwrap());
        let h = 1e-3;
        let (lo, mid, hi) = (basis.eval_scalar(x - h), basis.eval_scalar(x), basis.eval_scalar(x + h));
        let (x_lo, x_hi) = if x < 0.0 { (x - h, (x + h).min(0.0)) } else { ((x - h).max(1.0), x + h) };
        if x_lo == x - h && x_hi == x + h {
            for j in 0..mid.len() {
                prop_assert!((lo[j] - 2.0 * mid[j] + hi[j]).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn basis_derivative_matches_differences(x in -1.0f64..2.0) {
        let basis = SplineBasis::raw(KnotVector::user(vec![0.0, 0.3, 0.55, 1.0]).unwrap());
        let h = 1e-6;
        let d = basis.deriv_scalar(x);
        let (up, dn) = (basis.eval_scalar(x + h), basis.eval_scalar(x - h));
        for j in 0..d.len() {
            prop_assert!((d[j] - (up[j] - dn[j]) / (2.0 * h)).abs() <= 1e-6);
        }
    }

    #[test]
    fn nonparametric_estimators_ignore_row_order(seed in 0u64..1000) {
        let f = shared();
        let mut idx: Vec<usize> = (0..f.n_rows()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let g = f.select_rows(&idx);
        let a = aalen_johansen_cif(f, 60.0, &[1, 2], Some("rx"), None).unwrap();
        let b = aalen_johansen_cif(&g, 60.0, &[1, 2], Some("rx"), None).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for t in [3.0, 12.0, 30.0, 59.0] {
                prop_assert!((x.curve.value_at(t) - y.curve.value_at(t)).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn aalen_johansen_sums_to_one(seed in 0u64..1000) {
        let f = prepared(seed);
        let time = column(&f, "dtime");
        let codes: Vec<i64> = column(&f, "eventType").iter().map(|c| *c as i64).collect();
        let (cifs, surv) = aalen_johansen(&time, &codes, &[1, 2]);
        for &t in surv.times.iter().chain([0.0, 100.0].iter()) {
            let total = cifs.iter().map(|c| c.value_at(t)).sum::<f64>() + surv.value_at(t);
            prop_assert!((total - 1.0).abs() < 1e-12, "t={} total={}", t, total);
        }
        for c in &cifs {
            prop_assert!(c.values.windows(2).all(|w| w[1] >= w[0]));
        }
        // With a single cause present the incidence is the Kaplan–Meier failure.
        let events: Vec<bool> = codes.iter().map(|c| *c == 1).collect();
        let only: Vec<i64> = codes.iter().map(|c| if *c == 1 { 1 } else { 0 }).collect();
        let (single, _) = aalen_johansen(&time, &only, &[1]);
        let km = km_failure(&time, &events);
        for t in [1.0, 10.0, 40.0, 70.0] {
            prop_assert!((single[0].value_at(t) - km.value_at(t)).abs() <= 1e-12);
        }
    }

    #[test]
    fn likelihood_derivatives_match_differences(seed in 0u64..1000) {
        let f = shared();
        let spec = ModelSpec::new(&["rx", "hx"], 3, 2, 60.0).with_tvc("rx", 1);
        let problem = FpmProblem::new(&spec, f).unwrap();
        let fitted = fit(&spec, f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let theta: Vec<f64> = fitted.theta.iter().map(|v| v + noise.sample(&mut rng)).collect();
        let eval = problem.evaluate(&theta).unwrap();
        prop_assume!(eval.value.is_finite());
        for j in 0..theta.len() {
            let h = 1e-5 * theta[j].abs().max(1.0);
            let (mut up, mut dn) = (theta.clone(), theta.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (problem.value(&up).unwrap() - problem.value(&dn).unwrap()) / (2.0 * h);
            prop_assert!((eval.gradient[j] - fd).abs() <= 1e-5 * eval.gradient[j].abs().max(1.0));
            let gu = problem.evaluate(&up).unwrap().gradient;
            let gd = problem.evaluate(&dn).unwrap().gradient;
            for i in 0..theta.len() {
                let fd = (gu[i] - gd[i]) / (2.0 * h);
                prop_assert!((eval.hessian[(i, j)] - fd).abs() <= 1e-3 * eval.hessian[(i, j)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn perturbed_start_reaches_same_optimum(seed in 0u64..1000) {
        let f = shared();
        let spec = ModelSpec::new(&["rx", "normalAct", "hx"], 3, 2, 60.0);
        let base = fit(&spec, f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let start: Vec<f64> = base.theta.iter().map(|v| v + noise.sample(&mut rng)).collect();
        let again = fit_from(&spec, f, &start, FitOptions::default()).unwrap();
        prop_assert!((again.loglik - base.loglik).abs() <= 1e-6);
    }
}

#[test]
fn proportional_hazards_ratio_is_constant() {
    let f = weibull_single_cause(600, 0.05, 1.3, 0.7, 30.0, 3);
    let m = fit(&ModelSpec::new(&["x"], 4, 1, 1e6), &f).unwrap();
    let ratios: Vec<f64> = time_grid(0.5, 30.0, 60)
        .iter()
        .map(|&t| m.hazard_ratio(&[1.0], &[0.0], t))
        .collect();
    for r in &ratios {
        assert!((r - ratios[0]).abs() <= 1e-10);
    }
}

#[test]
fn orthogonalisation_leaves_predictions_unchanged() {
    let f = shared();
    let spec = ModelSpec::new(&["rx", "hx"], 4, 1, 60.0).with_tvc("rx", 2);
    let a = fit(&spec, f).unwrap();
    let b = fit(&spec.clone().orthogonal(false), f).unwrap();
    assert!((a.loglik - b.loglik).abs() <= 1e-6 * a.loglik.abs());
    let rows = f.select_rows(&[0, 5, 17]);
    let (pa, pb) = (
        a.predict(&rows, &[6.0, 30.0, 60.0]).unwrap(),
        b.predict(&rows, &[6.0, 30.0, 60.0]).unwrap(),
    );
    for (x, y) in pa
        .survival
        .iter()
        .flatten()
        .zip(pb.survival.iter().flatten())
    {
        assert!((x - y).abs() <= 1e-6 * x.abs());
    }
}

#[test]
fn standardised_curves_are_monotone_and_normalised() {
    let f = shared();
    let (pr, ot) = fit_main_models(f, 60.0).unwrap();
    let grid = time_grid(0.0, 60.0, 31);
    let req = |e| {
        StandardizeRequest::new(e, grid.clone(), treatment_scenarios())
            .labels(&["prostate", "other"])
            .without_se()
    };
    let cif = standardize(&[&pr, &ot], f, &req(Estimand::Cif)).unwrap();
    let surv = standardize(&[&pr, &ot], f, &req(Estimand::Survival)).unwrap();
    let net = standardize(&[&pr], f, &req(Estimand::Failure).labels(&["prostate"])).unwrap();
    for sc in ["placebo", "DES"] {
        for (s, cause) in [(&cif, "prostate"), (&cif, "other"), (&net, "prostate")] {
            assert!(s
                .curve(sc, cause)
                .windows(2)
                .all(|w| w[1].estimate >= w[0].estimate));
        }
        for &t in &grid {
            let total = cif.get(t, sc, "prostate").unwrap().estimate
                + cif.get(t, sc, "other").unwrap().estimate
                + surv.get(t, sc, "all").unwrap().estimate;
            assert!((total - 1.0).abs() <= 1e-6);
        }
    }
}

#[test]
fn treatment_only_models_track_aalen_johansen() {
    // A larger trial keeps the nonparametric noise below the tolerance.
    let f = &prepare_prostate(&synthetic_prostate_raw(4000, 7)).unwrap();
    let pr = fit(&ModelSpec::new(&["rx"], 3, 1, 60.0), f).unwrap();
    let ot = fit(&ModelSpec::new(&["rx"], 3, 2, 60.0), f).unwrap();
    let grid = time_grid(0.0, 60.0, 31);
    let req = StandardizeRequest::new(Estimand::Cif, grid.clone(), treatment_scenarios())
        .labels(&["prostate", "other"])
        .without_se();
    let s = standardize(&[&pr, &ot], f, &req).unwrap();
    let aj = aalen_johansen_cif(f, 60.0, &[1, 2], Some("rx"), None).unwrap();
    for c in &aj {
        let label = if c.group == "0" { "placebo" } else { "DES" };
        let cause = if c.cause == Some(1) {
            "prostate"
        } else {
            "other"
        };
        for &t in &grid {
            let model = s.get(t, label, cause).unwrap().estimate;
            assert!(
                (model - c.curve.value_at(t)).abs() <= 0.02,
                "{label} {cause} t={t}"
            );
        }
    }
}

#[test]
fn contrasts_do_not_depend_on_scenario_order() {
    let f = shared();
    let (pr, ot) = fit_main_models(f, 60.0).unwrap();
    let a = AtScenario::new("placebo").set("rx", 0.0);
    let b = AtScenario::new("DES").set("rx", 1.0);
    let c = AtScenario::new("old")
        .set("rx", 1.0)
        .set("ageCat2", 0.0)
        .set("ageCat3", 1.0);
    let times = vec![12.0, 48.0];
    let run = |sc: Vec<AtScenario>, r: usize, k: ContrastKind| {
        let req = StandardizeRequest::new(Estimand::Cif, times.clone(), sc)
            .contrast(k)
            .reference(r)
            .labels(&["prostate", "other"]);
        standardize(&[&pr, &ot], f, &req).unwrap()
    };
    for kind in [ContrastKind::Difference, ContrastKind::Ratio] {
        let x = run(vec![a.clone(), b.clone(), c.clone()], 0, kind);
        let y = run(vec![c.clone(), b.clone(), a.clone()], 2, kind);
        let contrasts: Vec<_> = x
            .rows
            .iter()
            .filter(|r| r.kind != RowKind::Scenario)
            .collect();
        assert_eq!(contrasts.len(), 8);
        for r in contrasts {
            let other = y.get(r.time, &r.label, &r.cause).unwrap();
            assert!((r.estimate - other.estimate).abs() <= 1e-12);
            assert!((r.se - other.se).abs() <= 1e-9);
        }
    }
}

#[test]
fn recipes_are_pure() {
    let f = shared();
    for name in ["km-figure1", "net-direct", "rmft-60"] {
        let a = run_recipe(name, f, &RecipeParams::default()).unwrap();
        let b = run_recipe(name, f, &RecipeParams::default()).unwrap();
        assert_eq!(a.tables, b.tables, "{name}");
    }
}

#[test]
fn hazard_integrates_to_cumulative_hazard() {
    let f = shared();
    let (pr, _) = fit_main_models(f, 60.0).unwrap();
    let x = pr.covariate_row(f, 0).unwrap();
    for t in [3.0, 24.0, 60.0] {
        // Split at 1 month to keep the integrand smooth near the origin.
        let head = crstd::standardize::gauss_legendre(|u| pr.hazard_at(&x, u), 1e-9, 1.0, 200);
        let tail = crstd::standardize::gauss_legendre(|u| pr.hazard_at(&x, u), 1.0, t, 200);
        let direct = -pr.survival_at(&x, t).ln();
        assert!(
            (head + tail - direct).abs() <= 1e-4,
            "t={t}: {} vs {direct}",
            head + tail
        );
    }
    assert!((pr.survival_at(&x, 1e-8) - 1.0).abs() < 1e-6);
}
