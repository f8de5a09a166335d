//! Net probability of prostate-cancer death (competing deaths removed), by arm.
//!
//! cargo run --release --example net_probability -- [prostate.csv]

use crstd::analysis::{prostate_spec, treatment_scenarios};
use crstd::dataset::{load_csv, prepare_prostate, Schema, SurvivalFrame};
use crstd::fpm::fit;
use crstd::simulate::synthetic_prostate_raw;
use crstd::standardize::{standardize, ContrastKind, Estimand, StandardizeRequest};
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
    let prostate = fit(&prostate_spec(60.0), &frame)?;
    let req = StandardizeRequest::new(
        Estimand::Failure,
        vec![12.0, 36.0, 60.0],
        treatment_scenarios(),
    )
    .contrast(ContrastKind::Difference)
    .labels(&["prostate"]);
    for r in &standardize(&[&prostate], &frame, &req)?.rows {
        println!(
            "t={:>4} {:>16}  {:.4} ({:.4} to {:.4})",
            r.time, r.label, r.estimate, r.lci, r.uci
        );
    }
    Ok(())
}
