//! Run every canned analysis and write its tables under a temporary directory.
//!
//! cargo run --release --example recipes -- [prostate.csv]

use crstd::analysis::{run_recipe, RecipeParams, RECIPES};
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
    let root = std::env::temp_dir().join("crstd-recipes");
    for name in RECIPES {
        let out = run_recipe(name, &frame, &RecipeParams::default())?;
        let dir = root.join(name);
        out.write_to(&dir)?;
        println!("{name}: {} tables -> {}", out.tables.len(), dir.display());
    }
    Ok(())
}
