//! Months lost before 60 by cause and arm, and totals via a linear combination.
//!
//! cargo run --release --example restricted_mean -- [prostate.csv]

use crstd::analysis::{fit_main_models, treatment_scenarios};
use crstd::dataset::{load_csv, prepare_prostate, Schema, SurvivalFrame};
use crstd::simulate::synthetic_prostate_raw;
use crstd::standardize::{standardize, ContrastKind, Estimand, RowKind, StandardizeRequest};
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
    let base = StandardizeRequest::new(Estimand::Rmft, vec![60.0], treatment_scenarios())
        .labels(&["prostate", "other"]);
    let by_cause = standardize(
        &[&prostate, &other],
        &frame,
        &base.clone().contrast(ContrastKind::Difference),
    )?;
    for r in &by_cause.rows {
        println!(
            "{:>16} {:>8}  {:.3} ({:.3} to {:.3})",
            r.label, r.cause, r.estimate, r.lci, r.uci
        );
    }
    for (arm, w) in [
        ("placebo", [1.0, 1.0, 0.0, 0.0]),
        ("DES", [0.0, 0.0, 1.0, 1.0]),
    ] {
        let s = standardize(
            &[&prostate, &other],
            &frame,
            &base.clone().lincom(w.to_vec()),
        )?;
        let total = s
            .rows
            .iter()
            .find(|r| r.kind == RowKind::Lincom)
            .expect("lincom row");
        println!(
            "total months lost, {arm}: {:.3} ({:.3} to {:.3})",
            total.estimate, total.lci, total.uci
        );
    }
    Ok(())
}
