//! QBER landscape sweep over the (frequency detuning, injection ratio)
//! plane, with the remaining controls held at the configured base point.
//!
//! Each cell back-solves the controls that realize its coordinates and
//! evaluates the analytic expected QBER there; the map is a noise-free
//! picture of the landscape the tuning campaigns search. Cells whose
//! coordinates no control setting can reach are reported as NaN.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::{export, HarnessError};
use crate::detection;
use crate::exec;

/// One evaluated grid: `qber[i][j]` belongs to
/// `(detunings_ghz[i], ratios_db[j])`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepGrid {
    pub detunings_ghz: Vec<f64>,
    pub ratios_db: Vec<f64>,
    pub qber: Vec<Vec<f64>>,
}

impl SweepGrid {
    /// Coordinates and value of the lowest finite cell.
    pub fn min_cell(&self) -> Option<(f64, f64, f64)> {
        let mut best: Option<(f64, f64, f64)> = None;
        for (i, row) in self.qber.iter().enumerate() {
            for (j, &q) in row.iter().enumerate() {
                if q.is_finite() && best.map_or(true, |(_, _, b)| q < b) {
                    best = Some((self.detunings_ghz[i], self.ratios_db[j], q));
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub main: SweepGrid,
    pub zoom: SweepGrid,
}

fn axis(min: f64, max: f64, steps: usize) -> Vec<f64> {
    let span = max - min;
    (0..steps)
        .map(|k| min + span * k as f64 / (steps - 1) as f64)
        .collect()
}

fn evaluate_grid(
    config: &ExperimentConfig,
    detunings_ghz: Vec<f64>,
    ratios_db: Vec<f64>,
) -> SweepGrid {
    let qber = exec::run_indexed(detunings_ghz.len(), |i| {
        let detuning = detunings_ghz[i];
        ratios_db
            .iter()
            .map(|&ratio| {
                match config
                    .plant
                    .params_for_point(detuning, ratio, &config.base_params)
                {
                    Some(params) => {
                        detection::qber_expected(&params, &config.plant, &config.channel)
                    }
                    None => f64::NAN,
                }
            })
            .collect()
    });
    SweepGrid {
        detunings_ghz,
        ratios_db,
        qber,
    }
}

/// Evaluates the main grid and the zoomed sub-grid.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult, HarnessError> {
    config.validate()?;
    let s = &config.sweep;
    let main = evaluate_grid(
        config,
        axis(s.detuning_min_ghz, s.detuning_max_ghz, s.detuning_steps),
        axis(s.ratio_min_db, s.ratio_max_db, s.ratio_steps),
    );
    let zoom = evaluate_grid(
        config,
        axis(s.zoom_detuning_min_ghz, s.zoom_detuning_max_ghz, s.zoom_steps),
        axis(s.zoom_ratio_min_db, s.zoom_ratio_max_db, s.zoom_steps),
    );
    Ok(SweepResult {
        schema_version: 1,
        config: config.clone(),
        main,
        zoom,
    })
}

pub(crate) const SWEEP_HEADER: &str = "detuning_ghz,injection_ratio_db,qber";

fn grid_rows(grid: &SweepGrid) -> Vec<String> {
    let mut rows = Vec::with_capacity(grid.detunings_ghz.len() * grid.ratios_db.len());
    for (i, &detuning) in grid.detunings_ghz.iter().enumerate() {
        for (j, &ratio) in grid.ratios_db.iter().enumerate() {
            rows.push(format!(
                "{},{},{}",
                export::fmt_float(detuning),
                export::fmt_float(ratio),
                export::fmt_float(grid.qber[i][j]),
            ));
        }
    }
    rows
}

/// Writes `sweep.csv` and `sweep_zoom.csv`, returning the paths.
pub fn write_sweep_outputs(result: &SweepResult) -> Result<Vec<PathBuf>, HarnessError> {
    let config_json = serde_json::to_string(&result.config)?;
    let dir = &result.config.output_dir;
    let main_path = dir.join("sweep.csv");
    let zoom_path = dir.join("sweep_zoom.csv");
    export::write_csv(&main_path, &config_json, SWEEP_HEADER, &grid_rows(&result.main))?;
    export::write_csv(&zoom_path, &config_json, SWEEP_HEADER, &grid_rows(&result.zoom))?;
    Ok(vec![main_path, zoom_path])
}
