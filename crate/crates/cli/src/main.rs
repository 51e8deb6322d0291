//! Command line front end for the transmitter tuning harness.
//!
//! Exit codes: 0 success, 2 configuration problems (including usage
//! errors), 3 I/O or serialization failures, 4 a requested `--check` that
//! did not pass.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oil_tune_core::calibrate;
use oil_tune_core::detection::{acquire_counts, ChannelConfig};
use oil_tune_core::harness::{
    check_campaign, check_histogram, config::load_config, export, run_campaign, run_histogram,
    run_sweep, write_campaign_outputs, write_histogram_outputs, write_sweep_outputs,
    ExperimentConfig, ExperimentKind, HarnessError,
};
use oil_tune_core::plant::PlantConfig;
use oil_tune_core::qkd::{key_rate, DecoyInputs, KeyRateResult};

#[derive(Parser)]
#[command(
    name = "oil-tune",
    version,
    about = "Self-tuning harness for a simulated injection-locked QKD transmitter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the experiment subcommands. Campaign-only flags are
/// ignored by `sweep` and `histogram`.
#[derive(Args, Debug, Clone, Default)]
struct RunArgs {
    /// Config file: plain JSON, a previous result.json, or a CSV output
    /// carrying its config comment line.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Campaign seed; trial k runs with seed + k.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of independent GA trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Replace simulated measurements with their analytic expectations.
    #[arg(long)]
    noiseless: bool,
    /// Enforce the acceptance thresholds; failing them exits with code 4.
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// GA campaign on the interference objective (visibility up, residual
    /// inter-pulse coherence down).
    TuneCoherence(RunArgs),
    /// GA campaign on the full BB84 objective (QBER down, randomization
    /// cost down).
    TuneQber(RunArgs),
    /// Map the expected QBER over the (detuning, injection ratio) plane.
    Sweep(RunArgs),
    /// Audit phase randomization against the arcsine intensity law.
    Histogram(RunArgs),
    /// Two-decoy secure key rate from measured gains and error rates.
    Keyrate {
        /// JSON file of decoy measurements; without it a fresh simulated
        /// acquisition at the calibrated operating point supplies them.
        #[arg(long)]
        inputs: Option<PathBuf>,
        /// Output directory for keyrate.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed of the simulated acquisition.
        #[arg(long)]
        seed: Option<u64>,
        /// Acquisition length of the simulated measurement, in cycles.
        #[arg(long)]
        cycles: Option<u64>,
    },
    /// Re-derive the calibrated operating point and write it as JSON.
    Calibrate {
        /// Output directory for plant_optimum.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn resolve_config(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, HarnessError> {
    let mut config = match &args.config {
        Some(path) => {
            let loaded = load_config(path)?;
            if loaded.experiment != kind {
                return Err(HarnessError::Config(format!(
                    "config in {} belongs to a different experiment",
                    path.display()
                )));
            }
            loaded
        }
        None => ExperimentConfig::default_for(kind),
    };
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.campaign_seed = seed;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if args.noiseless {
        config.noiseless = true;
    }
    Ok(config)
}

fn run(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::TuneCoherence(args) => tune(ExperimentKind::TuneCoherence, &args),
        Command::TuneQber(args) => tune(ExperimentKind::TuneQber, &args),
        Command::Sweep(args) => sweep(&args),
        Command::Histogram(args) => histogram(&args),
        Command::Keyrate {
            inputs,
            out,
            seed,
            cycles,
        } => keyrate(inputs.as_deref(), out, seed, cycles),
        Command::Calibrate { out } => calibrate_cmd(&out),
    }
}

fn tune(kind: ExperimentKind, args: &RunArgs) -> Result<(), HarnessError> {
    let config = resolve_config(kind, args)?;
    let result = run_campaign(&config)?;
    let paths = write_campaign_outputs(&result)?;
    for (trial, row) in result.trials.iter().zip(result.summary.iter()) {
        let last = trial
            .generations
            .last()
            .map(|g| g.best_fitness)
            .unwrap_or(0.0);
        let verified = match kind {
            ExperimentKind::TuneQber => format!(
                "qber {} l_pr {}{}",
                export::fmt_opt(row.qber),
                export::fmt_opt(row.l_pr),
                row.secure_key_rate
                    .map(|r| format!(" key_rate {r:.3e}"))
                    .unwrap_or_default()
            ),
            _ => format!(
                "v_coherent {} v_random {}",
                export::fmt_opt(row.v_coherent),
                export::fmt_opt(row.v_random)
            ),
        };
        println!(
            "trial {} seed {}: campaign best {:.3}, verified {} ({} candidates at {} cycles)",
            trial.trial,
            trial.seed,
            last,
            verified,
            trial.best.candidates_considered,
            trial.best.verification_cycles,
        );
    }
    for path in &paths {
        println!("wrote {}", path.display());
    }
    if args.check {
        check_campaign(&result)?;
        let passed = result.summary.iter().filter(|s| s.passed_check).count();
        println!("check passed: {passed}/{} trials within thresholds", result.summary.len());
    }
    Ok(())
}

fn sweep(args: &RunArgs) -> Result<(), HarnessError> {
    let config = resolve_config(ExperimentKind::Sweep, args)?;
    let result = run_sweep(&config)?;
    let paths = write_sweep_outputs(&result)?;
    if let Some((detuning, ratio, qber)) = result.main.min_cell() {
        println!("minimum expected QBER {qber:.4} at detuning {detuning:.2} GHz, ratio {ratio:.2} dB");
    }
    for path in &paths {
        println!("wrote {}", path.display());
    }
    if args.check {
        // A healthy landscape contains a locked region somewhere.
        match result.main.min_cell() {
            Some((_, _, qber)) if qber <= 0.05 => {
                println!("check passed: locked region present");
            }
            Some((_, _, qber)) => {
                return Err(HarnessError::CheckFailed(format!(
                    "lowest expected QBER on the grid is {qber:.4}, above 0.05"
                )))
            }
            None => {
                return Err(HarnessError::CheckFailed(
                    "no reachable cells on the sweep grid".into(),
                ))
            }
        }
    }
    Ok(())
}

fn histogram(args: &RunArgs) -> Result<(), HarnessError> {
    let config = resolve_config(ExperimentKind::Histogram, args)?;
    let result = run_histogram(&config)?;
    let paths = write_histogram_outputs(&result)?;
    println!(
        "KS distance {:.4} over {} samples (threshold {:.4}{})",
        result.ks_distance,
        result.histogram.samples,
        result.ks_threshold,
        if result.ks_enforced { "" } else { ", not enforced at this sample size" },
    );
    for path in &paths {
        println!("wrote {}", path.display());
    }
    if args.check {
        check_histogram(&result)?;
        println!("check passed: intensity distribution is arcsine-compatible");
    }
    Ok(())
}

/// What `keyrate` writes: the inputs used and the resulting bound.
#[derive(serde::Serialize)]
struct KeyrateDocument {
    schema_version: u32,
    inputs: DecoyInputs,
    result: KeyRateResult,
}

fn keyrate(
    inputs: Option<&std::path::Path>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    cycles: Option<u64>,
) -> Result<(), HarnessError> {
    let mut config = ExperimentConfig::default_for(ExperimentKind::Keyrate);
    if let Some(out) = out {
        config.output_dir = out;
    }
    let inputs = match inputs {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => {
            let mut channel = config.channel.clone();
            if let Some(cycles) = cycles {
                channel.acquisition_cycles = cycles;
            }
            let counts = acquire_counts(
                &config.base_params,
                &config.plant,
                &channel,
                seed.unwrap_or(config.campaign_seed),
            )
            .map_err(|e| HarnessError::Config(e.to_string()))?;
            println!(
                "simulated acquisition at the calibrated point: {} cycles, Q_mu {:.5}, E_mu {:.4}",
                channel.acquisition_cycles, counts.q_mu, counts.e_mu
            );
            DecoyInputs {
                mu: channel.mu_signal,
                nu: channel.mu_decoy,
                vac: channel.mu_vacuum,
                q_mu: counts.q_mu,
                q_nu: counts.q_nu,
                q_vac: counts.q_vac,
                e_mu: counts.e_mu,
                e_nu: counts.e_nu,
                ..DecoyInputs::default()
            }
        }
    };
    let result = key_rate(&inputs).map_err(|e| HarnessError::Config(e.to_string()))?;
    println!(
        "Y1 >= {:.6}, e1 <= {:.6}, Q1 >= {:.6}",
        result.y1_lower, result.e1_upper, result.q1_lower
    );
    if result.bound_collapsed {
        println!("yield bound collapsed; no rate claimed");
    }
    println!("secure key rate: {:.6e} bits per cycle", result.rate);
    let path = config.output_dir.join("keyrate.json");
    export::write_json(
        &path,
        &KeyrateDocument {
            schema_version: 1,
            inputs,
            result,
        },
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn calibrate_cmd(out: &std::path::Path) -> Result<(), HarnessError> {
    let fixture = calibrate::build_fixture(&PlantConfig::default(), &ChannelConfig::default())
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    println!(
        "optimum: slave_temp {:.4} C, master_bias {:.4} mA, slave_bias {:.4} mA, atten {:.4} dB, delay {:.2} ps, amplitude {:.2} mV",
        fixture.params.slave_temp,
        fixture.params.master_bias,
        fixture.params.slave_bias,
        fixture.params.injection_atten,
        fixture.params.temporal_delay,
        fixture.params.mod_amplitude,
    );
    println!(
        "expected: V_coherent {:.4}, V_random {:.2e}, QBER {:.4}",
        fixture.expected.v_coherent, fixture.expected.v_random, fixture.expected.qber
    );
    println!(
        "measured: V_coherent {:.4}, QBER {:.4} ({} cycles, seed {})",
        fixture.measured.v_coherent,
        fixture.measured.qber,
        fixture.measured.acquisition_cycles,
        fixture.measured.seed,
    );
    let path = out.join("plant_optimum.json");
    export::write_json(&path, &fixture)?;
    println!("wrote {}", path.display());
    Ok(())
}
