//! Receiver-side measurements: AMZI interference, single-photon click
//! statistics, visibility estimation, and intensity histograms.
//!
//! Two kinds of measurement coexist. Visibility is estimated on classical
//! intensities (a photodiode upstream of the attenuator), so its noise is
//! phase jitter only. Count acquisition attenuates to the single-photon level
//! and draws Poissonian clicks per detector gate, which is what the QBER and
//! the phase-randomization monitor see.

use crate::exec;
use crate::plant::{Basis, ControlParams, EmissionMode, OpticalState, PlantConfig, PulseStream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

/// Smallest visibility the fringe fit will report; fitted amplitudes below
/// this are indistinguishable from estimator noise at the default acquisition
/// length.
pub const RESOLUTION_FLOOR: f64 = 0.01;

/// Arm-phase steps used by the visibility scan.
const ARM_STEPS: usize = 32;

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("invalid channel config: {0}")]
    InvalidChannel(String),
    #[error("zero total intensity: the plant is not lasing")]
    ZeroIntensity,
    #[error("acquisition produced no sifted events")]
    NoSiftedEvents,
}

/// Attenuation chain and acquisition settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub channel_loss_db: f64,
    pub detector_efficiency: f64,
    /// Dark-count probability per detector gate.
    pub dark_count_prob: f64,
    /// Per-pulse mean photon numbers for the three intensity classes.
    pub mu_signal: f64,
    pub mu_decoy: f64,
    pub mu_vacuum: f64,
    /// Emission probabilities of the three classes.
    pub p_signal: f64,
    pub p_decoy: f64,
    pub p_vacuum: f64,
    /// Probability of choosing the X basis (same for both parties).
    pub p_basis_x: f64,
    /// Cycles per statistical acquisition.
    pub acquisition_cycles: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            channel_loss_db: 16.0,
            detector_efficiency: 0.2,
            dark_count_prob: 1e-6,
            mu_signal: 0.4,
            mu_decoy: 0.1,
            mu_vacuum: 0.001,
            p_signal: 14.0 / 16.0,
            p_decoy: 1.0 / 16.0,
            p_vacuum: 1.0 / 16.0,
            p_basis_x: 15.0 / 16.0,
            acquisition_cycles: 200_000,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), DetectionError> {
        if !(self.channel_loss_db >= 0.0) {
            return Err(DetectionError::InvalidChannel(format!(
                "channel_loss_db must be >= 0, got {}",
                self.channel_loss_db
            )));
        }
        for (name, p) in [
            ("detector_efficiency", self.detector_efficiency),
            ("dark_count_prob", self.dark_count_prob),
            ("p_signal", self.p_signal),
            ("p_decoy", self.p_decoy),
            ("p_vacuum", self.p_vacuum),
            ("p_basis_x", self.p_basis_x),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DetectionError::InvalidChannel(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        for (name, mu) in [
            ("mu_signal", self.mu_signal),
            ("mu_decoy", self.mu_decoy),
            ("mu_vacuum", self.mu_vacuum),
        ] {
            if !(mu >= 0.0) {
                return Err(DetectionError::InvalidChannel(format!(
                    "{name} must be >= 0, got {mu}"
                )));
            }
        }
        let class_sum = self.p_signal + self.p_decoy + self.p_vacuum;
        if (class_sum - 1.0).abs() > 1e-9 {
            return Err(DetectionError::InvalidChannel(format!(
                "class probabilities must sum to 1, got {class_sum}"
            )));
        }
        if self.acquisition_cycles < 1_000 {
            return Err(DetectionError::InvalidChannel(format!(
                "acquisition_cycles must be >= 1000 for statistical operations, got {}",
                self.acquisition_cycles
            )));
        }
        Ok(())
    }

    /// End-to-end transmission: channel loss times detector efficiency.
    pub fn transmission(&self) -> f64 {
        10f64.powf(-self.channel_loss_db / 10.0) * self.detector_efficiency
    }
}

/// Which interference slot a visibility measurement probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FringeProbe {
    /// Early vs late pulse of one pair (phase-coherent slot).
    CoherentPair,
    /// Late pulse of one pair vs early pulse of the next (randomized slot).
    RandomPair,
}

fn port_probabilities(v_eff: f64, phase: f64, arm_phase: f64) -> (f64, f64) {
    let p0 = 0.5 * (1.0 + v_eff * (phase + arm_phase).cos());
    (p0, 1.0 - p0)
}

/// AMZI output-port probabilities for one pulse pair.
pub fn interfere(state: &OpticalState, arm_phase: f64) -> (f64, f64) {
    port_probabilities(state.v_eff, state.phi_rel, arm_phase)
}

/// Fringe visibility from a 32-step arm-phase scan on classical intensities.
///
/// Fits the first harmonic of the scanned fringe and subtracts the
/// statistical bias the per-step averaging noise adds to the squared
/// amplitude, so a fully collapsed fringe reads ~0 instead of the noise
/// level. Values below [`RESOLUTION_FLOOR`] are reported as the floor.
pub fn measure_visibility(
    params: &ControlParams,
    plant: &PlantConfig,
    channel: &ChannelConfig,
    probe: FringeProbe,
    seed: u64,
) -> Result<f64, DetectionError> {
    channel.validate()?;
    let per_step = (channel.acquisition_cycles as usize / ARM_STEPS).max(1);
    let mut stream = PulseStream::new(params, plant, seed);
    let mode = match probe {
        FringeProbe::CoherentPair => EmissionMode::CoherentPair,
        FringeProbe::RandomPair => EmissionMode::RandomPair,
    };

    let mut dc = 0.0;
    let mut first_cos = 0.0;
    let mut first_sin = 0.0;
    let mut bias = 0.0;
    for k in 0..ARM_STEPS {
        let arm = TAU * k as f64 / ARM_STEPS as f64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..per_step {
            let state = stream.next_cycle(mode);
            let phase = match probe {
                FringeProbe::CoherentPair => state.phi_rel,
                FringeProbe::RandomPair => state.side_phase,
            };
            let (p0, _) = port_probabilities(state.v_eff, phase, arm);
            let intensity = state.amplitude * state.amplitude * p0;
            sum += intensity;
            sum_sq += intensity * intensity;
        }
        let n = per_step as f64;
        let mean = sum / n;
        let var = if per_step > 1 {
            (sum_sq - sum * sum / n).max(0.0) / (n - 1.0)
        } else {
            0.0
        };
        dc += mean;
        first_cos += mean * arm.cos();
        first_sin += mean * arm.sin();
        // Variance of the step mean propagates into A^2 + B^2.
        bias += var / n;
    }
    let steps = ARM_STEPS as f64;
    let dc = dc / steps;
    if !(dc > 0.0) {
        return Err(DetectionError::ZeroIntensity);
    }
    let a = 2.0 / steps * first_cos;
    let b = 2.0 / steps * first_sin;
    let amp_sq = (a * a + b * b - 4.0 / (steps * steps) * bias).max(0.0);
    let visibility = (amp_sq.sqrt() / dc).clamp(0.0, 1.0);
    Ok(visibility.max(RESOLUTION_FLOOR))
}

/// Noise-free counterpart of [`measure_visibility`]: the analytic fringe
/// amplitude at the operating point, with the same reporting floor.
pub fn expected_visibility(
    params: &ControlParams,
    plant: &PlantConfig,
    probe: FringeProbe,
) -> Result<f64, DetectionError> {
    let d = plant.derive(params);
    if !(d.lase_amp > 0.0) {
        return Err(DetectionError::ZeroIntensity);
    }
    let v = match probe {
        FringeProbe::CoherentPair => d.expected_coherent_visibility(),
        FringeProbe::RandomPair => d.expected_random_visibility(),
    };
    Ok(v.clamp(0.0, 1.0).max(RESOLUTION_FLOOR))
}

/// Count statistics from one BB84 acquisition.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct DetectionCounts {
    /// Click events in the signal (intra-pair) slot, both ports summed.
    pub c_signal: u64,
    /// Click events in the side (inter-pair) slot at the monitor port.
    pub c_side: u64,
    /// Wrong-bit events among sifted detections, all classes.
    pub errors: u64,
    /// Matched-basis detections, all classes.
    pub sifted_total: u64,
    /// Per-class gains: detections per emitted pulse of that class.
    pub q_mu: f64,
    pub q_nu: f64,
    pub q_vac: f64,
    /// Per-class error rates among sifted detections.
    pub e_mu: f64,
    pub e_nu: f64,
    /// Mean detected optical flux per cycle in the signal slot (both ports;
    /// interference moves photons between ports, not away).
    pub signal_flux_mean: f64,
    /// Mean detected optical flux per cycle in the side slot (monitor port).
    pub side_flux_mean: f64,
    pub cycles: u64,
}

/// Raw per-class tallies, merged across shards before rates are computed.
#[derive(Debug, Clone, Copy, Default)]
struct RawCounts {
    c_signal: u64,
    c_side: u64,
    errors: u64,
    sifted_total: u64,
    emitted: [u64; 3],
    clicked: [u64; 3],
    sifted: [u64; 3],
    class_errors: [u64; 3],
    signal_flux: f64,
    side_flux: f64,
    cycles: u64,
}

impl RawCounts {
    fn merge(mut self, other: &RawCounts) -> RawCounts {
        self.c_signal += other.c_signal;
        self.c_side += other.c_side;
        self.errors += other.errors;
        self.sifted_total += other.sifted_total;
        for i in 0..3 {
            self.emitted[i] += other.emitted[i];
            self.clicked[i] += other.clicked[i];
            self.sifted[i] += other.sifted[i];
            self.class_errors[i] += other.class_errors[i];
        }
        self.signal_flux += other.signal_flux;
        self.side_flux += other.side_flux;
        self.cycles += other.cycles;
        self
    }

    fn finalize(self) -> Result<DetectionCounts, DetectionError> {
        if self.sifted_total == 0 || self.sifted[0] == 0 {
            return Err(DetectionError::NoSiftedEvents);
        }
        let gain = |i: usize| {
            if self.emitted[i] == 0 {
                0.0
            } else {
                self.clicked[i] as f64 / self.emitted[i] as f64
            }
        };
        let error_rate = |i: usize| {
            if self.sifted[i] == 0 {
                0.0
            } else {
                self.class_errors[i] as f64 / self.sifted[i] as f64
            }
        };
        Ok(DetectionCounts {
            c_signal: self.c_signal,
            c_side: self.c_side,
            errors: self.errors,
            sifted_total: self.sifted_total,
            q_mu: gain(0),
            q_nu: gain(1),
            q_vac: gain(2),
            e_mu: error_rate(0),
            e_nu: error_rate(1),
            signal_flux_mean: self.signal_flux / self.cycles as f64,
            side_flux_mean: self.side_flux / self.cycles as f64,
            cycles: self.cycles,
        })
    }
}

fn run_acquisition(
    params: &ControlParams,
    plant: &PlantConfig,
    channel: &ChannelConfig,
    cycles: u64,
    seed: u64,
) -> RawCounts {
    let mut stream = PulseStream::new(params, plant, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let transmission = channel.transmission();
    let dark = channel.dark_count_prob;
    let mut raw = RawCounts {
        cycles,
        ..RawCounts::default()
    };

    for _ in 0..cycles {
        let class_draw: f64 = rng.gen();
        let (class, mu) = if class_draw < channel.p_signal {
            (0, channel.mu_signal)
        } else if class_draw < channel.p_signal + channel.p_decoy {
            (1, channel.mu_decoy)
        } else {
            (2, channel.mu_vacuum)
        };
        let alice_basis = if rng.gen_bool(channel.p_basis_x) {
            Basis::X
        } else {
            Basis::Y
        };
        let bit: bool = rng.gen();
        let state = stream.next_cycle(EmissionMode::Encoded {
            bit: bit as u8,
            basis: alice_basis,
        });
        let bob_basis = if rng.gen_bool(channel.p_basis_x) {
            Basis::X
        } else {
            Basis::Y
        };

        // Alice's output attenuator normalizes each class to its mean photon
        // number, so the detected flux does not track the slave's amplitude;
        // a slave below threshold emits nothing at all.
        let flux = if state.amplitude > 0.0 {
            mu * transmission
        } else {
            0.0
        };

        let (p0, p1) = port_probabilities(state.v_eff, state.phi_rel, -bob_basis.offset_rad());
        let click = |rng: &mut ChaCha8Rng, mean_photons: f64| {
            let p = 1.0 - (1.0 - dark) * (-mean_photons).exp();
            rng.gen_bool(p.clamp(0.0, 1.0))
        };
        let click0 = click(&mut rng, flux * p0);
        let click1 = click(&mut rng, flux * p1);

        // Side slot: previous pair's late pulse against this pair's early
        // pulse at the monitor port.
        let (side_p0, _) = port_probabilities(state.v_eff, state.side_phase, 0.0);
        let side_click = click(&mut rng, flux * side_p0);

        raw.emitted[class] += 1;
        raw.c_signal += u64::from(click0) + u64::from(click1);
        raw.c_side += u64::from(side_click);
        raw.signal_flux += flux;
        raw.side_flux += flux * side_p0;

        if click0 || click1 {
            raw.clicked[class] += 1;
            if alice_basis == bob_basis {
                raw.sifted_total += 1;
                raw.sifted[class] += 1;
                let bob_bit = if click0 && click1 {
                    rng.gen::<bool>()
                } else {
                    click1
                };
                if bob_bit != bit {
                    raw.errors += 1;
                    raw.class_errors[class] += 1;
                }
            }
        }
    }
    raw
}

/// One BB84 acquisition with Poissonian click statistics.
pub fn acquire_counts(
    params: &ControlParams,
    plant: &PlantConfig,
    channel: &ChannelConfig,
    seed: u64,
) -> Result<DetectionCounts, DetectionError> {
    channel.validate()?;
    run_acquisition(params, plant, channel, channel.acquisition_cycles, seed).finalize()
}

/// Sharded acquisition: splits the cycle budget over independent seed
/// streams and sums the tallies. Counts are integers, so the result does not
/// depend on execution order; shard boundaries are derived from the seed, so
/// the outcome is reproducible (though it differs from the single-stream
/// acquisition with the same seed).
pub fn acquire_counts_sharded(
    params: &ControlParams,
    plant: &PlantConfig,
    channel: &ChannelConfig,
    seed: u64,
    shards: u64,
) -> Result<DetectionCounts, DetectionError> {
    channel.validate()?;
    let shards = shards.max(1);
    let base = channel.acquisition_cycles / shards;
    let remainder = channel.acquisition_cycles % shards;
    let tallies = exec::run_indexed(shards as usize, |i| {
        let cycles = base + u64::from((i as u64) < remainder);
        run_acquisition(
            params,
            plant,
            channel,
            cycles,
            seed.wrapping_add(1).wrapping_mul(0x100_0000_01b3).wrapping_add(i as u64),
        )
    });
    tallies
        .iter()
        .fold(RawCounts::default(), |acc, t| acc.merge(t))
        .finalize()
}

/// Expected gain of one intensity class: any-click probability per cycle.
pub fn expected_gain(mu: f64, channel: &ChannelConfig) -> f64 {
    let flux = mu * channel.transmission();
    let dark = channel.dark_count_prob;
    // Two gates, each 1 - (1-d) e^{-flux * p_port}; independent ports.
    let no0 = (1.0 - dark) * (-flux * 0.5).exp();
    // The exact per-port split depends on phase; the total click probability
    // only depends on p0 + p1 = 1 to first order, and exactly when averaged
    // over a symmetric fringe, so the half/half split is used.
    1.0 - no0 * no0
}

/// Noise-free expected signal-class QBER at an operating point, including
/// dark counts and double-click randomization, matching what
/// [`acquire_counts`] converges to.
pub fn qber_expected(
    params: &ControlParams,
    plant: &PlantConfig,
    channel: &ChannelConfig,
) -> f64 {
    let d = plant.derive(params);
    let flux = if d.lase_amp > 0.0 {
        channel.mu_signal * channel.transmission()
    } else {
        0.0
    };
    let dark = channel.dark_count_prob;

    let mut err_weighted = 0.0;
    let mut sift_weighted = 0.0;
    for (basis, basis_weight) in [
        (Basis::X, channel.p_basis_x * channel.p_basis_x),
        (
            Basis::Y,
            (1.0 - channel.p_basis_x) * (1.0 - channel.p_basis_x),
        ),
    ] {
        for bit in [0u8, 1u8] {
            let target = basis.offset_rad() + f64::from(bit) * std::f64::consts::PI;
            let shrink = d.encoding_shrinkage(target, plant);
            let mean_phase = d.phi_sys + target * d.encoding_scale;
            // Fringe after averaging over phase jitter, interfered at Bob's
            // matched-basis arm. For bit 1 the correct port flips along with
            // the fringe sign, so the correct-port probability is the same
            // expression for both bits.
            let p_right = (0.5 * (1.0 + d.v_eff * shrink * (mean_phase - target).cos()))
                .clamp(0.0, 1.0);
            let p_wrong = 1.0 - p_right;
            let c_right = 1.0 - (1.0 - dark) * (-flux * p_right).exp();
            let c_wrong = 1.0 - (1.0 - dark) * (-flux * p_wrong).exp();
            let p_error = c_wrong * (1.0 - c_right) + 0.5 * c_right * c_wrong;
            let p_sift = 1.0 - (1.0 - c_right) * (1.0 - c_wrong);
            err_weighted += basis_weight * 0.5 * p_error;
            sift_weighted += basis_weight * 0.5 * p_sift;
        }
    }
    if sift_weighted > 0.0 {
        err_weighted / sift_weighted
    } else {
        0.5
    }
}

/// Binned intensity distribution of the randomized interference slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    /// Bin edges, length = counts.len() + 1, spanning [0, i0].
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub sample_mean: f64,
    pub samples: u64,
    /// Full-scale intensity (channel attenuation removed).
    pub i0: f64,
}

/// Intensities of the inter-pair slot with channel attenuation removed:
/// I = i0 * (1 + v_eff cos(theta)) / 2 per cycle.
pub fn sample_intensities(
    params: &ControlParams,
    plant: &PlantConfig,
    samples: u64,
    seed: u64,
) -> Vec<f64> {
    let mut stream = PulseStream::new(params, plant, seed);
    (0..samples)
        .map(|_| {
            let state = stream.next_cycle(EmissionMode::RandomPair);
            let i0 = state.amplitude * state.amplitude;
            let (p0, _) = port_probabilities(state.v_eff, state.side_phase, 0.0);
            i0 * p0
        })
        .collect()
}

/// Kolmogorov-Smirnov distance between sampled slot intensities and the
/// arcsine law `F(x) = 2/pi asin(sqrt(x / i0))` that a fully
/// phase-randomized interfering pair follows.
///
/// Returns 1.0 for empty input or a non-positive scale.
pub fn arcsine_ks_distance(values: &[f64], i0: f64) -> f64 {
    if values.is_empty() || !(i0 > 0.0) {
        return 1.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("intensities are finite"));
    let n = sorted.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = 2.0 / std::f64::consts::PI * (x.clamp(0.0, i0) / i0).sqrt().asin();
        ks = ks
            .max((f - i as f64 / n).abs())
            .max((f - (i as f64 + 1.0) / n).abs());
    }
    ks
}

/// Histogram of [`sample_intensities`] over `bins` equal-width bins on
/// [0, i0].
pub fn intensity_histogram(
    params: &ControlParams,
    plant: &PlantConfig,
    samples: u64,
    bins: usize,
    seed: u64,
) -> Histogram {
    let d = plant.derive(params);
    let i0 = (d.lase_amp * d.lase_amp).max(f64::MIN_POSITIVE);
    let bins = bins.max(1);
    let values = sample_intensities(params, plant, samples, seed);
    let mut counts = vec![0u64; bins];
    let mut sum = 0.0;
    for &v in &values {
        sum += v;
        let idx = ((v / i0) * bins as f64).floor() as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    let edges = (0..=bins).map(|i| i0 * i as f64 / bins as f64).collect();
    Histogram {
        edges,
        counts,
        sample_mean: if values.is_empty() {
            0.0
        } else {
            sum / values.len() as f64
        },
        samples,
        i0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::PlantConfig;

    fn plant() -> PlantConfig {
        PlantConfig::default()
    }

    fn channel() -> ChannelConfig {
        ChannelConfig::default()
    }

    fn optimum() -> ControlParams {
        ControlParams {
            slave_temp: 26.5,
            master_bias: 40.0,
            slave_bias: 12.0,
            injection_atten: 0.9,
            temporal_delay: 165.0,
            mod_amplitude: 300.0,
        }
    }

    fn state_with(v_eff: f64, phi_rel: f64) -> OpticalState {
        OpticalState {
            amplitude: 1.0,
            theta: 0.0,
            phi_rel,
            v_eff,
            side_phase: 0.0,
        }
    }

    #[test]
    fn interfere_handles_the_textbook_cases() {
        let (p0, p1) = interfere(&state_with(1.0, 0.0), 0.0);
        assert_eq!(p0, 1.0);
        assert_eq!(p1, 0.0);

        let (p0, p1) = interfere(&state_with(0.0, 1.234), 0.777);
        assert_eq!(p0, 0.5);
        assert_eq!(p1, 0.5);

        let (p0, p1) = interfere(&state_with(1.0, std::f64::consts::FRAC_PI_2), 0.0);
        assert!((p0 - 0.5).abs() < 1e-12);
        assert!((p1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn port_probabilities_always_sum_to_one_exactly() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let v: f64 = rng.gen_range(0.0..=1.0);
            let phi: f64 = rng.gen_range(-10.0..10.0);
            let arm: f64 = rng.gen_range(-10.0..10.0);
            let (p0, p1) = port_probabilities(v, phi, arm);
            assert_eq!(p0 + p1, 1.0);
            assert!((0.0..=1.0).contains(&p0));
        }
    }

    #[test]
    fn coherent_visibility_at_the_optimum_hits_the_calibration_target() {
        let v = measure_visibility(&optimum(), &plant(), &channel(), FringeProbe::CoherentPair, 5)
            .unwrap();
        assert!(v >= 0.96, "coherent visibility {v}");
        assert!((v - 0.975).abs() < 0.01, "coherent visibility {v}");
    }

    #[test]
    fn random_pair_visibility_at_the_optimum_collapses() {
        let v = measure_visibility(&optimum(), &plant(), &channel(), FringeProbe::RandomPair, 6)
            .unwrap();
        assert!(v <= 0.02, "random-pair visibility {v}");
    }

    #[test]
    fn misaligned_delay_floors_both_visibilities() {
        let misaligned = ControlParams {
            temporal_delay: 665.0,
            ..optimum()
        };
        for probe in [FringeProbe::CoherentPair, FringeProbe::RandomPair] {
            let v = measure_visibility(&misaligned, &plant(), &channel(), probe, 7).unwrap();
            assert!(v <= RESOLUTION_FLOOR + 1e-12, "visibility {v}");
        }
    }

    #[test]
    fn dead_plant_is_a_measurement_error() {
        let dead = ControlParams {
            slave_bias: 5.0,
            ..optimum()
        };
        let err = measure_visibility(&dead, &plant(), &channel(), FringeProbe::CoherentPair, 8);
        assert!(matches!(err, Err(DetectionError::ZeroIntensity)));
        let err = expected_visibility(&dead, &plant(), FringeProbe::CoherentPair);
        assert!(matches!(err, Err(DetectionError::ZeroIntensity)));
    }

    #[test]
    fn expected_visibility_matches_the_measured_fringe() {
        let cases = [
            optimum(),
            ControlParams {
                slave_temp: 27.2,
                ..optimum()
            },
            ControlParams {
                injection_atten: 4.0,
                ..optimum()
            },
        ];
        for (i, params) in cases.iter().enumerate() {
            let analytic =
                expected_visibility(params, &plant(), FringeProbe::CoherentPair).unwrap();
            let measured = measure_visibility(
                params,
                &plant(),
                &channel(),
                FringeProbe::CoherentPair,
                100 + i as u64,
            )
            .unwrap();
            assert!(
                (analytic - measured).abs() < 0.01,
                "case {i}: analytic {analytic} vs measured {measured}"
            );
        }
    }

    #[test]
    fn qber_at_the_optimum_matches_the_fixture_window() {
        let mut wide = channel();
        wide.acquisition_cycles = 1_000_000;
        let counts = acquire_counts(&optimum(), &plant(), &wide, 11).unwrap();
        assert!(
            (counts.e_mu - 0.025).abs() <= 0.003,
            "measured QBER {}",
            counts.e_mu
        );
        let analytic = qber_expected(&optimum(), &plant(), &wide);
        assert!(
            (counts.e_mu - analytic).abs() < 0.005,
            "measured {} vs analytic {analytic}",
            counts.e_mu
        );
    }

    #[test]
    fn side_flux_is_half_the_signal_flux_at_the_optimum() {
        let mut wide = channel();
        wide.acquisition_cycles = 1_000_000;
        let counts = acquire_counts(&optimum(), &plant(), &wide, 13).unwrap();
        let ratio = counts.side_flux_mean / counts.signal_flux_mean;
        assert!((ratio - 0.5).abs() < 0.005, "flux ratio {ratio}");
        // Click counts obey the same identity, only with Poisson noise.
        let click_ratio = counts.c_side as f64 / counts.c_signal as f64;
        assert!((click_ratio - 0.5).abs() < 0.05, "click ratio {click_ratio}");
    }

    #[test]
    fn dark_counts_only_give_symmetric_errors() {
        let mut dark_only = channel();
        dark_only.mu_signal = 0.0;
        dark_only.mu_decoy = 0.0;
        dark_only.mu_vacuum = 0.0;
        dark_only.dark_count_prob = 0.05;
        dark_only.acquisition_cycles = 200_000;
        let counts = acquire_counts(&optimum(), &plant(), &dark_only, 17).unwrap();
        let qber = counts.errors as f64 / counts.sifted_total as f64;
        assert!((qber - 0.5).abs() < 0.01, "dark-only QBER {qber}");
    }

    #[test]
    fn doubling_the_acquisition_roughly_halves_the_qber_variance() {
        let reps = 200;
        let variance_at = |cycles: u64, seed_base: u64| {
            let mut cfg = channel();
            cfg.acquisition_cycles = cycles;
            let estimates: Vec<f64> = (0..reps)
                .map(|i| {
                    acquire_counts(&optimum(), &plant(), &cfg, seed_base + i)
                        .unwrap()
                        .e_mu
                })
                .collect();
            let mean = estimates.iter().sum::<f64>() / reps as f64;
            estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (reps - 1) as f64
        };
        let var_short = variance_at(20_000, 1000);
        let var_long = variance_at(40_000, 5000);
        let ratio = var_short / var_long;
        assert!(
            (1.6..=2.4).contains(&ratio),
            "variance ratio {ratio} (short {var_short}, long {var_long})"
        );
    }

    #[test]
    fn added_loss_strictly_reduces_every_gain() {
        // Analytic gains are strictly monotone for every class.
        for mu in [0.4, 0.1, 0.001] {
            let mut prev = f64::INFINITY;
            for loss in [10.0, 13.0, 16.0, 19.0, 22.0] {
                let mut cfg = channel();
                cfg.channel_loss_db = loss;
                let q = expected_gain(mu, &cfg);
                assert!(q < prev, "gain not decreasing at mu {mu}, loss {loss}");
                prev = q;
            }
        }
        // The Monte-Carlo signal and decoy gains agree at sampling noise.
        let measure = |loss: f64, seed: u64| {
            let mut cfg = channel();
            cfg.channel_loss_db = loss;
            acquire_counts(&optimum(), &plant(), &cfg, seed).unwrap()
        };
        let at16 = measure(16.0, 19);
        let at19 = measure(19.0, 23);
        assert!(at19.q_mu < at16.q_mu);
        assert!(at19.q_nu < at16.q_nu);
    }

    #[test]
    fn sharded_acquisition_is_order_independent_and_close_to_serial() {
        let mut cfg = channel();
        cfg.acquisition_cycles = 100_000;
        let sharded = acquire_counts_sharded(&optimum(), &plant(), &cfg, 29, 8).unwrap();
        let again = acquire_counts_sharded(&optimum(), &plant(), &cfg, 29, 8).unwrap();
        assert_eq!(sharded.c_signal, again.c_signal);
        assert_eq!(sharded.c_side, again.c_side);
        assert_eq!(sharded.errors, again.errors);
        assert_eq!(sharded.sifted_total, again.sifted_total);

        let serial = acquire_counts(&optimum(), &plant(), &cfg, 29).unwrap();
        assert!((sharded.e_mu - serial.e_mu).abs() < 0.01);
        assert_eq!(sharded.cycles, serial.cycles);
    }

    #[test]
    fn histogram_matches_the_arcsine_law_at_full_visibility() {
        let samples = sample_intensities(&optimum(), &plant(), 100_000, 31);
        let ks = arcsine_ks_distance(&samples, 1.0);
        assert!(ks < 0.02, "KS distance {ks}");
        assert_eq!(arcsine_ks_distance(&[], 1.0), 1.0);
    }

    #[test]
    fn histogram_degenerates_to_a_spike_without_interference() {
        let misaligned = ControlParams {
            temporal_delay: 665.0,
            ..optimum()
        };
        let hist = intensity_histogram(&misaligned, &plant(), 20_000, 64, 37);
        let total: u64 = hist.counts.iter().sum();
        let spike = hist.counts.iter().max().copied().unwrap_or(0);
        assert_eq!(total, 20_000);
        assert_eq!(spike, total, "all mass in one bin, got max {spike}");
        assert!((hist.sample_mean - 0.5 * hist.i0).abs() < 0.01 * hist.i0);
    }

    #[test]
    fn histogram_mean_is_half_scale_for_any_visibility() {
        // v_eff = 1, ~0.5, and 0 via delay detuning.
        let cases = [
            optimum(),
            ControlParams {
                temporal_delay: 380.0,
                ..optimum()
            },
            ControlParams {
                temporal_delay: 665.0,
                ..optimum()
            },
        ];
        for (i, params) in cases.iter().enumerate() {
            let hist = intensity_histogram(params, &plant(), 100_000, 64, 41 + i as u64);
            assert!(
                (hist.sample_mean - 0.5 * hist.i0).abs() < 0.01 * hist.i0,
                "case {i}: mean {} vs i0 {}",
                hist.sample_mean,
                hist.i0
            );
        }
    }

    #[test]
    fn invalid_channels_are_rejected() {
        let mut bad = channel();
        bad.acquisition_cycles = 10;
        assert!(bad.validate().is_err());
        let mut bad = channel();
        bad.detector_efficiency = 1.5;
        assert!(bad.validate().is_err());
        let mut bad = channel();
        bad.p_signal = 0.5;
        assert!(bad.validate().is_err());
    }
}
