//! Standardised cause-specific CIFs under placebo and DES, and their difference.
//!
//! cargo run --release --example total_effects -- [prostate.csv]

use crstd::analysis::{fit_main_models, treatment_scenarios};
use crstd::dataset::{load_csv, prepare_prostate, Schema, SurvivalFrame};
use crstd::simulate::synthetic_prostate_raw;
use crstd::standardize::{standardize, time_grid, ContrastKind, Estimand, StandardizeRequest};
use std::error::Error;

fn data() -> Result<SurvivalFrame, Box<dyn Error>> {
    let raw = match std::env::args().nth(1) {
        Some(path) => load_csv(path, &Schema::new())?,
        None => synthetic_prostate_raw(502, 2024),
    };
    Ok(prepare_prostate(&raw)?)
}

fn main() -> Result<(), Box<dyn Error>> {
    let frame = data()?;
    let (prostate, other) = fit_main_models(&frame, 60.0)?;
    let req = StandardizeRequest::new(
        Estimand::Cif,
        time_grid(0.0, 60.0, 13),
        treatment_scenarios(),
    )
    .contrast(ContrastKind::Difference)
    .labels(&["prostate", "other"]);
    let series = standardize(&[&prostate, &other], &frame, &req)?;
    for r in series.rows.iter().filter(|r| r.time == 60.0) {
        println!(
            "{:>16} {:>8}  {:.4} ({:.4} to {:.4})",
            r.label, r.cause, r.estimate, r.lci, r.uci
        );
    }
    Ok(())
}
