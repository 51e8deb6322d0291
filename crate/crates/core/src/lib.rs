//! Simulation core for a self-tuning optical-injection-locked QKD transmitter.
//!
//! The crate bundles a real-parameter genetic algorithm (`ga`), a
//! phenomenological transmitter surrogate (`plant`), interferometric and
//! photon-counting measurements (`detection`), a two-decoy BB84 key rate
//! bound (`qkd`), the objective functions tying them together (`fitness`),
//! and the experiment orchestration layer (`harness`).
//!
//! With the default `parallel` feature, fitness evaluations inside one GA
//! generation and independent campaign trials run on a rayon pool. Disable
//! the feature for a fully sequential build; results are identical either
//! way because every evaluation derives its randomness from a pre-assigned
//! per-individual seed.

pub mod calibrate;
pub mod detection;
pub mod exec;
pub mod fitness;
pub mod ga;
pub mod harness;
pub mod plant;
pub mod qkd;

pub use ga::{GaConfig, GaDiagnostics, GaError, GeneSpec, GenerationRecord, Genome, Individual};
