use super::{Result, StandardizeRequest, StandardizedSeries};
use serde::Serialize;
use std::io::Write;

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// Long CSV: `time, label, kind, cause, estimate, se, lci, uci`. Undefined
/// values are empty cells.
pub fn write_series_csv<W: Write>(series: &StandardizedSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "time", "label", "kind", "cause", "estimate", "se", "lci", "uci",
    ])?;
    for r in &series.rows {
        w.write_record([
            num(r.time),
            r.label.clone(),
            r.kind.as_str().to_string(),
            r.cause.clone(),
            num(r.estimate),
            num(r.se),
            num(r.lci),
            num(r.uci),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Metadata written next to a standardised series.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesManifest<'a> {
    pub request: &'a StandardizeRequest,
    pub n_population: usize,
    pub n_dropped: usize,
    pub n_patterns: &'a [usize],
    pub nodes: usize,
    pub support_end: f64,
    pub extrapolated_times: &'a [f64],
    pub software_version: &'static str,
}

impl<'a> SeriesManifest<'a> {
    pub fn new(request: &'a StandardizeRequest, series: &'a StandardizedSeries) -> Self {
        SeriesManifest {
            request,
            n_population: series.n_population,
            n_dropped: series.n_dropped,
            n_patterns: &series.n_patterns,
            nodes: series.nodes,
            support_end: series.support_end,
            extrapolated_times: &series.extrapolated_times,
            software_version: env!("CARGO_PKG_VERSION"),
        }
    }
}
