//! Fit both cause-specific models, print hazard-ratio tables, and save/reload
//! the prostate model.
//!
//! cargo run --example fit_models -- [prostate.csv]

use crstd::analysis::fit_main_models;
use crstd::dataset::{load_csv, prepare_prostate, Schema, SurvivalFrame};
use crstd::fpm::{load_fit, save_fit, FpmFit};
use crstd::simulate::synthetic_prostate_raw;
use std::error::Error;

fn data() -> Result<SurvivalFrame, Box<dyn Error>> {
    let raw = match std::env::args().nth(1) {
        Some(path) => load_csv(path, &Schema::new())?,
        None => synthetic_prostate_raw(502, 2024),
    };
    Ok(prepare_prostate(&raw)?)
}

fn table(name: &str, fit: &FpmFit) {
    println!(
        "{name}: log likelihood = {:.4}, events = {}",
        fit.loglik, fit.n_events
    );
    for c in fit.coefficients(0.95) {
        println!(
            "  {:>10} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
            c.name, c.exp_estimate, c.exp_se, c.exp_lci, c.exp_uci
        );
    }
}

fn main() -> Result<(), Box<dyn Error>> {
    let frame = data()?;
    let (prostate, other) = fit_main_models(&frame, 60.0)?;
    table("other", &other);
    table("prostate", &prostate);

    // rx is time-dependent in the prostate model.
    let mut des = prostate.covariate_row(&frame, 0)?;
    let mut placebo = des.clone();
    des[0] = 1.0;
    placebo[0] = 0.0;
    for t in [12.0, 36.0, 60.0] {
        println!(
            "HR(DES vs placebo) at {t}: {:.3}",
            prostate.hazard_ratio(&des, &placebo, t)
        );
    }

    let dir = std::env::temp_dir().join("crstd-fit-models");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("prostate.json");
    save_fit(&prostate, &path)?;
    let back = load_fit(&path)?;
    assert_eq!(back, prostate);
    println!("saved and reloaded {}", path.display());
    Ok(())
}
