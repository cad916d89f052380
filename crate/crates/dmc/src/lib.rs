//! Channel modeling and receiver simulation for DNA-based molecular
//! communication with microarray-style reception.
//!
//! A transmitter releases single-stranded DNA that diffuses through a
//! bounded domain and hybridizes reversibly with surface probes; the
//! receiver observes the instantaneous number of bound strands. This crate
//! builds the block-structured Markov state-space model of that channel and
//! everything downstream of it:
//!
//! * [`markov`] — geometries, one-step probabilities, column-stochastic
//!   transition matrices, state evolution, stationary distributions, and
//!   spectral relaxation (SLEM, time constant, settling time).
//! * [`microarray`] — the 1D chain specialization: impulse response,
//!   closed-form equilibrium gain, settling characterization, and rate
//!   calibration to target memory regimes.
//! * [`symbol`] — symbol-rate coarse-graining: ISI taps, differential taps,
//!   return probabilities, and the analytic mean/variance/covariance of the
//!   colored counting noise.
//! * [`sim`] — exact-in-law Monte Carlo of the bound-count observation with
//!   per-molecule and aggregate-count backends, plus empirical noise
//!   statistics.
//! * [`detect`] — differential-threshold and decision-feedback detection
//!   with BER evaluation.
//! * [`config`] / [`experiments`] — the reproducible experiment harness
//!   behind the `dmc` binary.
//!
//! The `examples/` directory has one runnable program per capability; the
//! acceptance suite in `tests/acceptance.rs` checks the end-to-end numbers.

pub mod config;
pub mod detect;
pub mod error;
pub mod experiments;
pub mod export;
pub mod markov;
pub mod microarray;
pub mod sim;
pub mod symbol;

pub use error::{Error, Result};
pub use markov::{
    assemble_transition_matrix, build_geometry_1d, build_geometry_grid2d,
    derive_step_probabilities, evolve, observe, spectral_summary, stationary_distribution,
    verify_convergence_rate, ChannelParams, Edge, Geometry, SpectralSummary, StateDistribution,
    StepProbs, TransitionMatrix,
};
pub use microarray::{
    build_microarray_channel, calibrate_koff, characterize, cir_fine, equilibrium_closed_form,
    Characterization, Cir, MicroarrayChannel,
};
pub use symbol::noise::{
    covariance, decay_envelope_check, lag_correlation, mean_sequence, noise_stats,
    time_averaged_rho, variance_sequence, NoiseStats, TxSequence,
};
pub use symbol::{
    coarse_matrix, return_probabilities, symbol_alignment, symbol_taps, SymbolChannel, SymbolTaps,
};

pub use detect::{
    differential, dfe_detect, evaluate_ber, threshold_detect, BerResult, DetectorConfig,
    DetectorKind,
};
pub use sim::{
    estimate::estimate_noise_stats, simulate_aggregate, simulate_per_molecule, simulate_trials,
    Backend, CountVector, SimTrace, TrialBits,
};
