//! Phase-randomization audit: samples the inter-pair interference slot at a
//! fixed operating point and compares the intensity distribution with the
//! arcsine law a uniformly random phase produces.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::{export, HarnessError};
use crate::detection::{self, Histogram};

/// KS distance above which the source does not count as phase randomized.
pub const KS_THRESHOLD: f64 = 0.02;
/// Below this sample budget the KS verdict is reported but not enforced,
/// since the statistical resolution of the test itself is too coarse.
pub const KS_MIN_SAMPLES: u64 = 10_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramResult {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub histogram: Histogram,
    pub ks_distance: f64,
    pub ks_threshold: f64,
    /// True when the sample budget is large enough for the verdict to be
    /// enforced by `--check`.
    pub ks_enforced: bool,
    pub passed: bool,
}

/// Samples the slot intensities at `base_params` and bins them.
pub fn run_histogram(config: &ExperimentConfig) -> Result<HistogramResult, HarnessError> {
    config.validate()?;
    let params = &config.base_params;
    let seed = config.campaign_seed;
    // Both calls consume the identical pulse stream, so the KS verdict is
    // computed on exactly the binned samples.
    let histogram = detection::intensity_histogram(
        params,
        &config.plant,
        config.histogram.samples,
        config.histogram.bins,
        seed,
    );
    let values =
        detection::sample_intensities(params, &config.plant, config.histogram.samples, seed);
    let ks_distance = detection::arcsine_ks_distance(&values, histogram.i0);
    Ok(HistogramResult {
        schema_version: 1,
        config: config.clone(),
        ks_distance,
        ks_threshold: KS_THRESHOLD,
        ks_enforced: histogram.samples >= KS_MIN_SAMPLES,
        passed: ks_distance <= KS_THRESHOLD,
        histogram,
    })
}

/// `--check` gate: an enforced KS verdict must pass.
pub fn check_histogram(result: &HistogramResult) -> Result<(), HarnessError> {
    if result.ks_enforced && !result.passed {
        return Err(HarnessError::CheckFailed(format!(
            "KS distance {:.4} exceeds {:.4}",
            result.ks_distance, result.ks_threshold
        )));
    }
    Ok(())
}

pub(crate) const HISTOGRAM_HEADER: &str = "bin_left,bin_right,count,density";

/// Writes `histogram.csv` and `histogram_summary.json`, returning the paths.
pub fn write_histogram_outputs(result: &HistogramResult) -> Result<Vec<PathBuf>, HarnessError> {
    let config_json = serde_json::to_string(&result.config)?;
    let dir = &result.config.output_dir;
    let hist = &result.histogram;
    let total = hist.samples.max(1) as f64;
    let rows: Vec<String> = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, &count)| {
            let left = hist.edges[i];
            let right = hist.edges[i + 1];
            let width = (right - left).max(f64::MIN_POSITIVE);
            format!(
                "{},{},{},{}",
                export::fmt_float(left),
                export::fmt_float(right),
                count,
                export::fmt_float(count as f64 / (total * width)),
            )
        })
        .collect();
    let csv_path = dir.join("histogram.csv");
    export::write_csv(&csv_path, &config_json, HISTOGRAM_HEADER, &rows)?;
    let json_path = dir.join("histogram_summary.json");
    export::write_json(&json_path, result)?;
    Ok(vec![csv_path, json_path])
}
