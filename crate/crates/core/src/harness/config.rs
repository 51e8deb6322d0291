//! Experiment configuration: built-in defaults per experiment, file
//! loading (including configs embedded in previous outputs), and genome
//! plumbing between the GA and the plant controls.

use super::HarnessError;
use crate::calibrate::{self, FixtureOptimum};
use crate::detection::ChannelConfig;
use crate::ga::{GaConfig, GeneSpec, Genome};
use crate::plant::{ControlParams, PlantConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

/// The calibrated plant optimum every experiment shares.
pub fn fixture() -> &'static FixtureOptimum {
    static FIXTURE: OnceLock<FixtureOptimum> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        calibrate::load_fixture().expect("committed plant_optimum.json fixture parses")
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    TuneCoherence,
    TuneQber,
    Sweep,
    Histogram,
    Keyrate,
}

impl ExperimentKind {
    pub fn is_campaign(self) -> bool {
        matches!(self, ExperimentKind::TuneCoherence | ExperimentKind::TuneQber)
    }
}

/// Axis ranges and resolution of the landscape sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    pub detuning_min_ghz: f64,
    pub detuning_max_ghz: f64,
    pub detuning_steps: usize,
    pub ratio_min_db: f64,
    pub ratio_max_db: f64,
    pub ratio_steps: usize,
    /// Zoomed sub-grid around the optimum, written alongside the main grid.
    pub zoom_detuning_min_ghz: f64,
    pub zoom_detuning_max_ghz: f64,
    pub zoom_ratio_min_db: f64,
    pub zoom_ratio_max_db: f64,
    pub zoom_steps: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            detuning_min_ghz: -55.0,
            detuning_max_ghz: 40.0,
            detuning_steps: 100,
            ratio_min_db: -16.0,
            ratio_max_db: 0.0,
            ratio_steps: 100,
            zoom_detuning_min_ghz: -25.0,
            zoom_detuning_max_ghz: -5.0,
            zoom_ratio_min_db: -4.0,
            zoom_ratio_max_db: 0.0,
            zoom_steps: 50,
        }
    }
}

/// Sample budget of the histogram experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HistogramSettings {
    pub samples: u64,
    pub bins: usize,
}

impl Default for HistogramSettings {
    fn default() -> Self {
        HistogramSettings { samples: 100_000, bins: 64 }
    }
}

/// One experiment, fully resolved. Serialized into every output file so any
/// run can be reproduced from its own artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub ga: GaConfig,
    pub plant: PlantConfig,
    pub channel: ChannelConfig,
    pub gene_specs: Vec<GeneSpec>,
    /// Values for controls not covered by `gene_specs`.
    pub base_params: ControlParams,
    pub trials: usize,
    pub output_dir: PathBuf,
    /// Trial k runs with GA seed `campaign_seed + k`.
    pub campaign_seed: u64,
    /// Use the analytic (noise-free) objectives instead of simulated
    /// measurements.
    pub noiseless: bool,
    /// Acquisition length of the post-campaign verification measurement.
    pub verification_cycles: u64,
    pub sweep: SweepSettings,
    pub histogram: HistogramSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::default_for(ExperimentKind::TuneCoherence)
    }
}

/// Default search windows handed to the optimizer, one per control.
///
/// These are the operating ranges a bench operator would dial in before
/// handing the transmitter over: well inside the hard safety limits, wide
/// enough that the optimum is not obvious, and in the delay's case limited
/// to a single pulse slot.
const SEARCH_RANGES: [(&str, f64, f64); 6] = [
    ("slave_temp", 24.0, 29.0),
    ("master_bias", 36.0, 50.0),
    ("slave_bias", 10.0, 20.0),
    ("injection_atten", 0.0, 10.0),
    ("temporal_delay", 0.0, 500.0),
    ("mod_amplitude", 0.0, 500.0),
];

fn spec_for(name: &str) -> GeneSpec {
    let &(found, low, high) = SEARCH_RANGES
        .iter()
        .find(|(n, _, _)| *n == name)
        .expect("known control name");
    GeneSpec::new(found, low, high).expect("valid built-in range")
}

impl ExperimentConfig {
    /// Built-in defaults for one experiment kind.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let mut ga = GaConfig::default();
        let mut channel = ChannelConfig::default();
        let mut gene_specs = Vec::new();
        let mut base_params = ControlParams::default();
        let mut verification_cycles = 1_000_000;
        match kind {
            ExperimentKind::TuneCoherence => {
                // Five controls; the phase modulator stays off while the
                // interference fringes are tuned.
                gene_specs = [
                    "slave_temp",
                    "master_bias",
                    "slave_bias",
                    "injection_atten",
                    "temporal_delay",
                ]
                .iter()
                .map(|n| spec_for(n))
                .collect();
                base_params.mod_amplitude = 0.0;
            }
            ExperimentKind::TuneQber => {
                ga.population_schedule = vec![(0, 60)];
                gene_specs = SEARCH_RANGES.iter().map(|&(n, _, _)| spec_for(n)).collect();
                // Error ratios need far more events per estimate than fringe
                // visibilities do: a quarter of one percent resolution takes
                // thousands of sifted detections.
                channel.acquisition_cycles = 500_000;
                verification_cycles = 10_000_000;
            }
            ExperimentKind::Sweep | ExperimentKind::Histogram => {
                base_params = fixture().params.clone();
            }
            ExperimentKind::Keyrate => {
                base_params = fixture().params.clone();
                // The decoy and vacuum classes see only 1/16 of the pulses
                // each; a rate estimate needs a longer acquisition than the
                // tuning objective does.
                channel.acquisition_cycles = 4_000_000;
            }
        }
        ExperimentConfig {
            schema_version: 1,
            experiment: kind,
            ga,
            plant: PlantConfig::default(),
            channel,
            gene_specs,
            base_params,
            trials: 5,
            output_dir: PathBuf::from("out"),
            campaign_seed: 7,
            noiseless: false,
            verification_cycles,
            sweep: SweepSettings::default(),
            histogram: HistogramSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.ga.validate()?;
        self.plant
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.channel
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if self.experiment.is_campaign() {
            if self.gene_specs.is_empty() {
                return Err(HarnessError::Config(
                    "campaigns need at least one gene spec".into(),
                ));
            }
            for spec in &self.gene_specs {
                let known = ControlParams::SAFE_RANGES
                    .iter()
                    .find(|(n, _, _)| *n == spec.name);
                let Some(&(_, low, high)) = known else {
                    return Err(HarnessError::Config(format!(
                        "gene '{}' does not name a control",
                        spec.name
                    )));
                };
                if spec.low < low || spec.high > high {
                    return Err(HarnessError::Config(format!(
                        "gene '{}' range [{}, {}] exceeds the safe range [{low}, {high}]",
                        spec.name, spec.low, spec.high
                    )));
                }
            }
        }
        if self.verification_cycles < 1_000 {
            return Err(HarnessError::Config(
                "verification_cycles must be at least 1000".into(),
            ));
        }
        if self.sweep.detuning_steps < 2
            || self.sweep.ratio_steps < 2
            || self.sweep.zoom_steps < 2
        {
            return Err(HarnessError::Config("sweep axes need at least 2 steps".into()));
        }
        if self.histogram.bins == 0 || self.histogram.samples == 0 {
            return Err(HarnessError::Config(
                "histogram needs nonzero samples and bins".into(),
            ));
        }
        Ok(())
    }

    /// Realizes a genome as a full control vector over `base_params`.
    pub fn params_for(&self, genome: &Genome) -> Result<ControlParams, HarnessError> {
        apply_genome(&self.base_params, &self.gene_specs, genome)
    }
}

/// Maps named genes onto the control struct, leaving other controls at the
/// base values.
pub fn apply_genome(
    base: &ControlParams,
    specs: &[GeneSpec],
    genome: &Genome,
) -> Result<ControlParams, HarnessError> {
    if specs.len() != genome.genes.len() {
        return Err(HarnessError::Config(format!(
            "genome has {} genes but {} specs are configured",
            genome.genes.len(),
            specs.len()
        )));
    }
    let mut values = base.to_vec();
    for (spec, &gene) in specs.iter().zip(genome.genes.iter()) {
        let index = ControlParams::SAFE_RANGES
            .iter()
            .position(|(n, _, _)| *n == spec.name)
            .ok_or_else(|| {
                HarnessError::Config(format!("gene '{}' does not name a control", spec.name))
            })?;
        values[index] = gene;
    }
    Ok(ControlParams::from_slice(&values).expect("six control values"))
}

/// Reads a config from a JSON file, a previous `result.json` (config under
/// its `config` key), or a CSV output (config on a leading comment line).
pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub(crate) fn parse_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('#') || !trimmed.starts_with('{') {
        for line in text.lines() {
            if let Some(json) = line.strip_prefix(super::export::CONFIG_COMMENT_PREFIX) {
                return parse_config_value(serde_json::from_str(json)?);
            }
        }
        return Err(HarnessError::Config(
            "file contains no embedded config line".into(),
        ));
    }
    parse_config_value(serde_json::from_str(trimmed)?)
}

fn parse_config_value(value: serde_json::Value) -> Result<ExperimentConfig, HarnessError> {
    let config_value = match value.get("config") {
        // A result document embeds the config it ran with.
        Some(embedded) if value.get("experiment").is_none() => embedded.clone(),
        _ => value,
    };
    let config: ExperimentConfig = serde_json::from_value(config_value)?;
    config.validate()?;
    Ok(config)
}
