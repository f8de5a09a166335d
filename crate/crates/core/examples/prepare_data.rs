//! Prepare the raw trial file (or a synthetic stand-in) and print event counts.
//!
//! cargo run --example prepare_data -- [prostate.csv]

use crstd::dataset::{load_csv, prepare_prostate, Schema};
use crstd::simulate::synthetic_prostate_raw;
use std::error::Error;

fn main() -> Result<(), Box<dyn Error>> {
    let raw = match std::env::args().nth(1) {
        Some(path) => load_csv(path, &Schema::prostate_raw())?,
        None => synthetic_prostate_raw(502, 2024),
    };
    let prepared = prepare_prostate(&raw)?;
    println!(
        "raw rows: {}, prepared rows: {}",
        raw.n_rows(),
        prepared.n_rows()
    );
    let ev = prepared.numeric("eventType")?;
    for (code, name) in [(0.0, "alive"), (1.0, "prostate"), (2.0, "other")] {
        let n = ev.iter().filter(|e| **e == Some(code)).count();
        println!("{name:>9}: {n}");
    }
    print!("{}", prepared.select_rows(&[0, 1, 2]).to_csv_string()?);
    Ok(())
}
