//! Non-marginal prediction for one patient: CIFs at ages 55, 65 and 75 with an
//! age-by-treatment spline interaction.
//!
//! cargo run --release --example age_specific -- [prostate.csv]

use crstd::analysis::{run_recipe, RecipeParams, SPECIFIC_AGES};
use crstd::dataset::{load_csv, prepare_prostate, Schema, SurvivalFrame};
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
    let out = run_recipe("appendixB-age-specific", &frame, &RecipeParams::default())?;
    for age in SPECIFIC_AGES {
        let s = out
            .series(&format!("age_specific_cif_{age}"))
            .expect("series per age");
        for r in s.rows.iter().filter(|r| r.time == 60.0) {
            println!(
                "age {age}: {:>16} {:>8}  {:.4}",
                r.label, r.cause, r.estimate
            );
        }
    }
    Ok(())
}
