//! All-cause Kaplan–Meier failure by arm and Aalen–Johansen incidence by cause.
//!
//! cargo run --example kaplan_meier -- [prostate.csv]

use crstd::dataset::{load_csv, prepare_prostate, DeclarationSpec, Failure, Schema, SurvivalFrame};
use crstd::nonparam::{aalen_johansen_cif, kaplan_meier_failure};
use crstd::simulate::synthetic_prostate_raw;
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
    let decl = DeclarationSpec {
        failure: Failure::AnyEvent,
        exit_time: 60.0,
    };
    let km = kaplan_meier_failure(&frame, &decl, Some("rx"), None)?;
    let aj = aalen_johansen_cif(&frame, 60.0, &[1, 2], Some("rx"), None)?;
    println!("{:>6} {:>10} {:>10}", "month", "placebo", "DES");
    for t in [6.0, 12.0, 20.0, 36.0, 60.0] {
        println!(
            "{t:>6} {:>10.4} {:>10.4}",
            km[0].curve.value_at(t),
            km[1].curve.value_at(t)
        );
    }
    for c in &aj {
        println!(
            "rx={} cause={:?}: F(60) = {:.4}",
            c.group,
            c.cause,
            c.curve.value_at(60.0)
        );
    }
    Ok(())
}
