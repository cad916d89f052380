//! General block-structured Markov channel machinery: geometries, one-step
//! probabilities, transition-matrix assembly, state evolution, observation,
//! and spectral relaxation analysis.
//!
//! Everything here is geometry-agnostic; the microarray chain is one
//! specialization built on top of it. All values are immutable after
//! construction and operations are pure, so channels can be shared freely
//! across threads.

pub mod analysis;
pub mod geometry;
pub mod matrix;
pub mod params;

pub use analysis::{
    spectral_summary, stationary_distribution, stationary_distribution_with,
    verify_convergence_rate, RateReport, SpectralSummary,
};
pub use geometry::{build_geometry_1d, build_geometry_grid2d, Edge, Geometry};
pub use matrix::{
    assemble_transition_matrix, evolve, observe, StateDistribution, TransitionMatrix,
};
pub use params::{derive_step_probabilities, ChannelParams, StepProbs};
