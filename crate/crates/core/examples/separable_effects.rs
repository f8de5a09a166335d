//! Separable direct and indirect effects of treatment on prostate-cancer death.
//!
//! cargo run --release --example separable_effects -- [prostate.csv]

use crstd::analysis::{run_recipe, RecipeParams};
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
    let out = run_recipe("separable", &frame, &RecipeParams::default())?;
    let s = out.series("separable").expect("separable series");
    // at1: both components DES, at2: only the cancer component, at3: placebo.
    for r in s
        .rows
        .iter()
        .filter(|r| r.time == 36.0 && r.cause == "prostate")
    {
        println!(
            "{:>12}  {:.4} ({:.4} to {:.4})",
            r.label, r.estimate, r.lci, r.uci
        );
    }
    Ok(())
}
