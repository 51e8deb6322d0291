//! Phenomenological transmitter surrogate.
//!
//! Models a gain-switched master laser injecting a slave laser through a
//! variable attenuator. Six electrical controls map to an optical operating
//! point; the surrogate then emits pulse pairs whose phase statistics depend
//! on how well the slave is injection locked and how well the master pulse
//! straddles both slave pulses of a pair.
//!
//! Everything downstream (interference, counting, fitness) consumes
//! [`OpticalState`] records produced here, so this module is the single
//! source of truth for the physics caricature.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("invalid plant config: {0}")]
    InvalidConfig(String),
}

/// The six electrical controls the optimizer is allowed to touch.
///
/// Units: degrees C, mA, mA, dB, ps, mV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    pub slave_temp: f64,
    pub master_bias: f64,
    pub slave_bias: f64,
    pub injection_atten: f64,
    pub temporal_delay: f64,
    pub mod_amplitude: f64,
}

impl Default for ControlParams {
    /// Reference operating point: zero detuning, 0 dB injection ratio,
    /// modulator off.
    fn default() -> Self {
        Self {
            slave_temp: 25.0,
            master_bias: 40.0,
            slave_bias: 15.0,
            injection_atten: 0.0,
            temporal_delay: 165.0,
            mod_amplitude: 0.0,
        }
    }
}

impl ControlParams {
    /// Safe operating box for each control, in canonical order.
    pub const SAFE_RANGES: [(&'static str, f64, f64); 6] = [
        ("slave_temp", 20.0, 30.0),
        ("master_bias", 20.0, 60.0),
        ("slave_bias", 5.0, 25.0),
        ("injection_atten", 0.0, 20.0),
        ("temporal_delay", 0.0, 1000.0),
        ("mod_amplitude", 0.0, 500.0),
    ];

    /// Canonical gene order used by every genome <-> params conversion.
    pub fn from_slice(genes: &[f64]) -> Option<Self> {
        if genes.len() != 6 {
            return None;
        }
        Some(Self {
            slave_temp: genes[0],
            master_bias: genes[1],
            slave_bias: genes[2],
            injection_atten: genes[3],
            temporal_delay: genes[4],
            mod_amplitude: genes[5],
        })
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![
            self.slave_temp,
            self.master_bias,
            self.slave_bias,
            self.injection_atten,
            self.temporal_delay,
            self.mod_amplitude,
        ]
    }
}

/// Fixed physical constants of the surrogate. All tunable in one place so the
/// plant can be reshaped without touching code, but the defaults are the
/// calibrated set every test pins against.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    /// Detuning slope vs slave temperature, GHz per degree C.
    pub detuning_per_degc: f64,
    /// Detuning slope vs master bias, GHz per mA.
    pub detuning_per_master_ma: f64,
    /// Detuning slope vs slave bias, GHz per mA.
    pub detuning_per_slave_ma: f64,
    pub ref_slave_temp: f64,
    pub ref_master_bias: f64,
    pub ref_slave_bias: f64,
    /// Injection ratio slope vs master bias, dB per mA.
    pub ratio_per_master_ma: f64,
    /// Injection ratio slope vs slave bias, dB per mA (free-running power).
    pub ratio_per_slave_ma: f64,
    /// Half-width of the locking cone at 0 dB injection ratio, GHz.
    pub lock_range_0db_ghz: f64,
    /// Asymmetry of the cone: the negative-detuning side is this much wider.
    pub cone_asymmetry: f64,
    /// Best normalized detuning inside the cone (slightly red of center).
    pub u_opt: f64,
    /// Super-Gaussian width of the quality factor along normalized detuning.
    pub u_width: f64,
    /// Super-Gaussian width of the quality factor along injection ratio, dB.
    pub ratio_width_db: f64,
    /// Exponential decay rate of quality outside the cone, per unit |u|.
    pub edge_decay: f64,
    /// Amplitude of the residual phase fringe, rad.
    pub fringe_amp_rad: f64,
    /// Period of the residual phase fringe along detuning, GHz.
    pub fringe_period_ghz: f64,
    /// Intra-pair phase jitter at quality 1, rad. sqrt(-2 ln 0.975).
    pub sigma_phase_0: f64,
    /// Cap on intra-pair phase jitter as quality falls, rad.
    pub sigma_phase_cap: f64,
    /// Extra phase jitter from a full-pi encoding shift, rad.
    /// sqrt(-2 ln 0.931 + 2 ln 0.975): a pi shift interferes at 93.1 percent
    /// of the unmodulated ceiling.
    pub sigma_encoding: f64,
    /// Master bias above which gain switching no longer fully erases phase.
    pub master_bias_crit: f64,
    /// Slope of master pulse-to-pulse coherence above the critical bias.
    pub memory_per_ma: f64,
    /// Interference ceiling for fully locked pulses.
    pub v_max: f64,
    /// Slave bias at threshold, mA.
    pub lase_threshold_ma: f64,
    /// Bias span over which slave output ramps to full power, mA.
    pub lase_width_ma: f64,
    /// Master pulse width at the reference bias, ps.
    pub t_master_base_ps: f64,
    /// Master pulse width slope, ps per mA.
    pub t_master_per_ma: f64,
    /// Master repetition period, ps.
    pub master_period_ps: f64,
    /// Slave repetition period, ps (two slave pulses per master pulse).
    pub slave_period_ps: f64,
    /// Start of the master pulse within its period, ps.
    pub master_pulse_start_ps: f64,
    /// Slave pulse width, ps.
    pub slave_pulse_width_ps: f64,
    /// Phase modulator transfer, rad per mV. pi/300.
    pub eta_rad_per_mv: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            detuning_per_degc: -12.0,
            detuning_per_master_ma: 0.5,
            detuning_per_slave_ma: -1.0,
            ref_slave_temp: 25.0,
            ref_master_bias: 40.0,
            ref_slave_bias: 15.0,
            ratio_per_master_ma: 0.25,
            ratio_per_slave_ma: 0.3,
            lock_range_0db_ghz: 40.0,
            cone_asymmetry: 1.5,
            u_opt: -0.25,
            u_width: 0.80,
            ratio_width_db: 5.0,
            edge_decay: 2.0,
            fringe_amp_rad: 1.5,
            fringe_period_ghz: 6.0,
            sigma_phase_0: 0.225_023_589_804_668_7,
            sigma_phase_cap: 1.5,
            sigma_encoding: 0.303_901_937_212_581_85,
            master_bias_crit: 42.0,
            memory_per_ma: 0.15,
            v_max: 1.0,
            lase_threshold_ma: 5.0,
            lase_width_ma: 4.0,
            t_master_base_ps: 700.0,
            t_master_per_ma: 8.0,
            master_period_ps: 1000.0,
            slave_period_ps: 500.0,
            master_pulse_start_ps: 100.0,
            slave_pulse_width_ps: 70.0,
            eta_rad_per_mv: PI / 300.0,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("lock_range_0db_ghz", self.lock_range_0db_ghz),
            ("u_width", self.u_width),
            ("ratio_width_db", self.ratio_width_db),
            ("fringe_period_ghz", self.fringe_period_ghz),
            ("sigma_phase_0", self.sigma_phase_0),
            ("sigma_phase_cap", self.sigma_phase_cap),
            ("master_period_ps", self.master_period_ps),
            ("slave_period_ps", self.slave_period_ps),
            ("slave_pulse_width_ps", self.slave_pulse_width_ps),
            ("lase_width_ma", self.lase_width_ma),
            ("eta_rad_per_mv", self.eta_rad_per_mv),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(PlantError::InvalidConfig(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if !(self.v_max > 0.9 && self.v_max <= 1.0) {
            return Err(PlantError::InvalidConfig(format!(
                "v_max must lie in (0.9, 1.0], got {}",
                self.v_max
            )));
        }
        if !(self.sigma_encoding >= 0.0 && self.sigma_encoding.is_finite()) {
            return Err(PlantError::InvalidConfig(format!(
                "sigma_encoding must be finite and nonnegative, got {}",
                self.sigma_encoding
            )));
        }
        if !(self.cone_asymmetry >= 1.0) {
            return Err(PlantError::InvalidConfig(format!(
                "cone_asymmetry must be >= 1, got {}",
                self.cone_asymmetry
            )));
        }
        Ok(())
    }

    /// Frequency offset of the free-running slave from the master, GHz.
    pub fn detuning_ghz(&self, p: &ControlParams) -> f64 {
        self.detuning_per_degc * (p.slave_temp - self.ref_slave_temp)
            + self.detuning_per_master_ma * (p.master_bias - self.ref_master_bias)
            + self.detuning_per_slave_ma * (p.slave_bias - self.ref_slave_bias)
    }

    /// Injected-over-free-running power ratio at the slave facet, dB.
    pub fn injection_ratio_db(&self, p: &ControlParams) -> f64 {
        self.ratio_per_master_ma * (p.master_bias - self.ref_master_bias)
            - p.injection_atten
            - self.ratio_per_slave_ma * (p.slave_bias - self.ref_slave_bias)
    }

    /// Half-width of the locking cone on the positive-detuning side, GHz.
    pub fn lock_range_ghz(&self, ratio_db: f64) -> f64 {
        self.lock_range_0db_ghz * 10f64.powf(ratio_db / 20.0)
    }

    /// Normalized detuning: 1.0 sits on the cone edge on either side.
    pub fn normalized_detuning(&self, detuning_ghz: f64, ratio_db: f64) -> f64 {
        let half_width = self.lock_range_ghz(ratio_db);
        if detuning_ghz >= 0.0 {
            detuning_ghz / half_width
        } else {
            detuning_ghz / (self.cone_asymmetry * half_width)
        }
    }

    /// Injection locking quality in [0, 1].
    ///
    /// A product of two flat-topped (fourth-order super-Gaussian) bells: one
    /// along normalized detuning (peaked slightly red of cone center), one
    /// along injection ratio (too strong injection drags the slave, too weak
    /// fails to seed it). Locking is robust over the interior of the tongue
    /// and degrades steeply toward its borders; outside the cone the quality
    /// falls off exponentially from its edge value.
    pub fn locking_quality(&self, detuning_ghz: f64, ratio_db: f64) -> f64 {
        let u = self.normalized_detuning(detuning_ghz, ratio_db);
        let q_ratio = (-0.5 * (ratio_db / self.ratio_width_db).powi(4)).exp();
        let bell = |u: f64| (-0.5 * ((u - self.u_opt) / self.u_width).powi(4)).exp();
        let q = if u.abs() <= 1.0 {
            bell(u) * q_ratio
        } else {
            let edge = bell(1.0f64.copysign(u));
            edge * q_ratio * (-(u.abs() - 1.0) * self.edge_decay).exp()
        };
        q.clamp(0.0, 1.0)
    }

    /// Master pulse duration, ps.
    pub fn master_width_ps(&self, p: &ControlParams) -> f64 {
        self.t_master_base_ps + self.t_master_per_ma * (p.master_bias - self.ref_master_bias)
    }

    /// Fraction of each pulse pair straddled by a single master pulse, in
    /// [0, 1], as a function of the electrical delay.
    ///
    /// The master pulse must cover two slave pulses one slave period apart;
    /// a pulse shorter than the slave period can never seed both, and the
    /// usable delay window shrinks as the pulse shortens.
    pub fn pair_overlap(&self, p: &ControlParams) -> f64 {
        let t_master = self.master_width_ps(p);
        let peak = ((t_master - self.slave_period_ps) / self.slave_pulse_width_ps)
            .clamp(0.0, 1.0);
        if peak == 0.0 {
            return 0.0;
        }
        let half_plateau = ((t_master - self.slave_period_ps - self.slave_pulse_width_ps) / 2.0)
            .max(0.0);
        let center = self.master_pulse_start_ps + half_plateau;
        let raw = (p.temporal_delay - center).rem_euclid(self.master_period_ps);
        let dist = raw.min(self.master_period_ps - raw).min(self.slave_period_ps);
        let profile = if dist <= half_plateau {
            1.0
        } else {
            ((self.slave_period_ps - dist) / (self.slave_period_ps - half_plateau)).max(0.0)
        };
        peak * profile
    }

    /// Slave output amplitude factor in [0, 1] (soft lasing threshold).
    pub fn lase_amplitude(&self, p: &ControlParams) -> f64 {
        ((p.slave_bias - self.lase_threshold_ma) / self.lase_width_ma).clamp(0.0, 1.0)
    }

    /// Master pulse-to-pulse field correlation in [0, 1]; zero below the
    /// critical bias where gain switching fully erases the field.
    pub fn master_memory(&self, p: &ControlParams) -> f64 {
        (self.memory_per_ma * (p.master_bias - self.master_bias_crit)).clamp(0.0, 1.0)
    }

    /// Everything the pulse stream needs, computed once per operating point.
    pub fn derive(&self, p: &ControlParams) -> DerivedPoint {
        let detuning_ghz = self.detuning_ghz(p);
        let injection_db = self.injection_ratio_db(p);
        let quality = self.locking_quality(detuning_ghz, injection_db);
        let overlap = self.pair_overlap(p);
        let lase_amp = self.lase_amplitude(p);
        let sigma_intra = if quality > 0.0 {
            (self.sigma_phase_0 / quality.sqrt()).min(self.sigma_phase_cap)
        } else {
            self.sigma_phase_cap
        };
        let phi_sys = self.fringe_amp_rad
            * (TAU * detuning_ghz / self.fringe_period_ghz).sin()
            * (1.0 - quality);
        DerivedPoint {
            detuning_ghz,
            injection_db,
            lock_range_ghz: self.lock_range_ghz(injection_db),
            normalized_detuning: self.normalized_detuning(detuning_ghz, injection_db),
            quality,
            overlap,
            master_memory: self.master_memory(p),
            lase_amp,
            sigma_intra,
            phi_sys,
            t_master_ps: self.master_width_ps(p),
            v_eff: self.v_max * quality * overlap,
            encoding_scale: self.eta_rad_per_mv * p.mod_amplitude / PI,
        }
    }

    /// Invert the detuning and injection-ratio maps at fixed biases: find the
    /// slave temperature and attenuation that realize the requested operating
    /// point. Returns `None` when the solution leaves the safe box.
    pub fn params_for_point(
        &self,
        detuning_ghz: f64,
        ratio_db: f64,
        base: &ControlParams,
    ) -> Option<ControlParams> {
        let from_bias = self.detuning_per_master_ma * (base.master_bias - self.ref_master_bias)
            + self.detuning_per_slave_ma * (base.slave_bias - self.ref_slave_bias);
        let slave_temp =
            self.ref_slave_temp + (detuning_ghz - from_bias) / self.detuning_per_degc;
        let injection_atten = self.ratio_per_master_ma * (base.master_bias - self.ref_master_bias)
            - self.ratio_per_slave_ma * (base.slave_bias - self.ref_slave_bias)
            - ratio_db;
        let candidate = ControlParams {
            slave_temp,
            injection_atten,
            ..*base
        };
        let in_range = |value: f64, (_, low, high): (&str, f64, f64)| {
            value >= low - 1e-9 && value <= high + 1e-9
        };
        if in_range(slave_temp, ControlParams::SAFE_RANGES[0])
            && in_range(injection_atten, ControlParams::SAFE_RANGES[3])
        {
            Some(candidate)
        } else {
            None
        }
    }
}

/// Static description of an operating point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DerivedPoint {
    pub detuning_ghz: f64,
    pub injection_db: f64,
    pub lock_range_ghz: f64,
    pub normalized_detuning: f64,
    pub quality: f64,
    pub overlap: f64,
    /// Master pulse-to-pulse field correlation (phase randomization defect).
    pub master_memory: f64,
    pub lase_amp: f64,
    /// Intra-pair phase jitter, rad.
    pub sigma_intra: f64,
    /// Systematic intra-pair phase offset, rad.
    pub phi_sys: f64,
    pub t_master_ps: f64,
    /// Interference ceiling v_max * quality * overlap.
    pub v_eff: f64,
    /// Fraction of the commanded encoding phase actually applied
    /// (eta * mod_amplitude / pi; exactly 1 for error-free encoding).
    pub encoding_scale: f64,
}

impl DerivedPoint {
    /// Phasor shrinkage of an encoded symbol whose nominal phase target is
    /// `target` rad: intra-pair jitter plus modulation jitter that grows with
    /// the commanded swing.
    pub fn encoding_shrinkage(&self, target: f64, cfg: &PlantConfig) -> f64 {
        let enc_sd = cfg.sigma_encoding * target.abs() / PI;
        (-(self.sigma_intra * self.sigma_intra + enc_sd * enc_sd) / 2.0).exp()
    }

    /// Expected intra-pair fringe visibility (coherent-pair probing): the
    /// ceiling shrunk by phase jitter. The systematic fringe offset shifts
    /// the fringe without shrinking it.
    pub fn expected_coherent_visibility(&self) -> f64 {
        self.v_eff * (-(self.sigma_intra * self.sigma_intra) / 2.0).exp()
    }

    /// Expected fringe visibility between neighbouring pairs (the phase
    /// randomization probe). Zero when gain switching erases the master
    /// field between cycles; proportional to the residual memory otherwise.
    pub fn expected_random_visibility(&self) -> f64 {
        self.v_eff
            * self.master_memory
            * (-(self.sigma_intra * self.sigma_intra) / 2.0).exp()
    }
}

/// What the transmitter does with a given pulse pair. Coherent-pair and
/// random-pair emission are physically identical at the source; the mode
/// names track which interference slot the receiver will probe. Encoded mode
/// adds the commanded phase shift to the late pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmissionMode {
    CoherentPair,
    RandomPair,
    Encoded { bit: u8, basis: Basis },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    X,
    Y,
}

impl Basis {
    pub fn offset_rad(self) -> f64 {
        match self {
            Basis::X => 0.0,
            Basis::Y => PI / 2.0,
        }
    }
}

/// One emitted pulse pair, as seen at the transmitter output.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OpticalState {
    /// Field amplitude of both pulses (relative units; intensity goes as the
    /// square).
    pub amplitude: f64,
    /// Inter-qubit global phase (phase of the early pulse), in [0, 2pi).
    pub theta: f64,
    /// Late-minus-early phase, wrapped to [-pi, pi). Includes encoding.
    pub phi_rel: f64,
    /// Interference ceiling v_max * quality * overlap.
    pub v_eff: f64,
    /// Phase between this pair's early pulse and the previous pair's late
    /// pulse, wrapped to [-pi, pi): what the inter-qubit slot interferes.
    pub side_phase: f64,
}

fn wrap_tau(x: f64) -> f64 {
    x.rem_euclid(TAU)
}

fn wrap_pi(x: f64) -> f64 {
    (x + PI).rem_euclid(TAU) - PI
}

/// Stateful pulse-pair generator for one operating point.
///
/// Keeps the global-phase chain between cycles so neighbouring-pair
/// statistics (the phase randomization probe) come out right.
pub struct PulseStream {
    cfg: PlantConfig,
    derived: DerivedPoint,
    rng: ChaCha8Rng,
    theta: f64,
    last_late_phase: f64,
}

impl PulseStream {
    pub fn new(params: &ControlParams, cfg: &PlantConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = rng.gen_range(0.0..TAU);
        let last_late_phase = rng.gen_range(0.0..TAU);
        Self {
            cfg: cfg.clone(),
            derived: cfg.derive(params),
            rng,
            theta,
            last_late_phase,
        }
    }

    pub fn derived(&self) -> &DerivedPoint {
        &self.derived
    }

    /// Advance the inter-qubit global phase: fully refreshed every cycle when
    /// the master is gain switched hard enough, a bounded random walk when
    /// residual field survives between pulses.
    fn advance_theta(&mut self) {
        let r = self.derived.master_memory;
        if r <= 0.0 {
            self.theta = self.rng.gen_range(0.0..TAU);
        } else if r < 1.0 {
            let sigma = (-2.0 * r.ln()).sqrt();
            let step = Normal::new(0.0, sigma).expect("sigma is finite and positive");
            self.theta = wrap_tau(self.theta + step.sample(&mut self.rng));
        }
        // r == 1.0: the master field never resets, theta carries over as is.
    }

    /// Emit the next pulse pair.
    pub fn next_cycle(&mut self, mode: EmissionMode) -> OpticalState {
        let d = self.derived;
        self.advance_theta();

        let mut phi_rel = d.phi_sys;
        if d.sigma_intra > 0.0 {
            let jitter = Normal::new(0.0, d.sigma_intra).expect("positive sigma");
            phi_rel += jitter.sample(&mut self.rng);
        }
        if let EmissionMode::Encoded { bit, basis } = mode {
            let target = basis.offset_rad() + f64::from(bit & 1) * PI;
            phi_rel += target * d.encoding_scale;
            let jitter_sd = self.cfg.sigma_encoding * target / PI;
            if jitter_sd > 0.0 {
                let enc_noise = Normal::new(0.0, jitter_sd).expect("positive sigma");
                phi_rel += enc_noise.sample(&mut self.rng);
            }
        }

        let side_phase = wrap_pi(self.theta - self.last_late_phase);
        self.last_late_phase = wrap_tau(self.theta + phi_rel);

        OpticalState {
            amplitude: d.lase_amp,
            theta: self.theta,
            phi_rel: wrap_pi(phi_rel),
            v_eff: d.v_eff,
            side_phase,
        }
    }
}

/// One-shot convenience wrapper: build a stream and emit a single pair.
pub fn emit_cycle(
    params: &ControlParams,
    cfg: &PlantConfig,
    mode: EmissionMode,
    seed: u64,
) -> OpticalState {
    PulseStream::new(params, cfg, seed).next_cycle(mode)
}
