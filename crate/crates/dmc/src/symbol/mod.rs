//! Symbol-rate coarse-graining of the fine-grid channel.
//!
//! A symbol interval spans `N_s` sampling steps, so the symbol-rate kernel is
//! `M = P^(N_s)`. The ISI taps are the symbol-spaced CIR samples
//! `h_l = e_N^T M^l e_1`, the differential taps are `dh_l = h_{l+1} - h_l`,
//! and the `l`-symbol return probability `pi[l] = (M^l)_{N,N}` carries the
//! noise-domain memory: it is the probability that a bound molecule is bound
//! again `l` symbol intervals later.

pub mod noise;

use crate::error::{Error, Result};
use crate::markov::matrix::{StateDistribution, TransitionMatrix};
use crate::microarray::MicroarrayChannel;

/// Default absolute tap-truncation tolerance.
pub const DEFAULT_EPS_TAP: f64 = 1e-6;
/// Default truncation-search cap.
pub const DEFAULT_L_MAX: usize = 4096;
/// Consecutive settled taps required before declaring truncation.
const SETTLED_RUN: usize = 3;

/// Result of aligning a symbol interval to the sampling grid.
#[derive(Debug, Clone, Copy)]
pub struct SymbolAlignment {
    /// Steps per symbol, `round(T_b/dt)`, at least 1.
    pub n_s: u64,
    /// Effective symbol interval `N_s*dt` (s).
    pub t_b_eff: f64,
    /// Relative mismatch `|T_b_eff - T_b| / T_b`.
    pub rel_mismatch: f64,
}

/// Aligns `T_b` to the sampling grid by rounding to the nearest whole number
/// of steps. All downstream results are labeled with `t_b_eff`, never the
/// nominal interval.
pub fn symbol_alignment(t_b: f64, dt: f64) -> Result<SymbolAlignment> {
    if !(t_b >= dt) {
        return Err(Error::Range(format!(
            "symbol interval {t_b} s shorter than the sampling step {dt} s"
        )));
    }
    let n_s = (t_b / dt).round().max(1.0) as u64;
    let t_b_eff = n_s as f64 * dt;
    Ok(SymbolAlignment {
        n_s,
        t_b_eff,
        rel_mismatch: ((t_b_eff - t_b) / t_b).abs(),
    })
}

/// `M = P^(N_s)` by binary exponentiation; fails if column sums drift beyond
/// 1e-9.
pub fn coarse_matrix(p: &TransitionMatrix, n_s: u64) -> Result<TransitionMatrix> {
    if n_s < 1 {
        return Err(Error::Range("steps per symbol must be at least 1".into()));
    }
    p.power(n_s, crate::markov::matrix::POWER_DRIFT_TOL)
}

/// Truncated symbol-spaced ISI taps.
#[derive(Debug, Clone)]
pub struct SymbolTaps {
    /// `h_l` for `l = 0..=l_trunc`; beyond that the tail is `h_eq` exactly.
    pub h: Vec<f64>,
    /// Differential taps `dh_l = h_{l+1} - h_l` for `l = 0..l_trunc`.
    pub delta: Vec<f64>,
    /// Smallest `L` with `|h_l - h_eq| < eps_tap` for all computed `l >= L`
    /// (capped at the search limit).
    pub l_trunc: usize,
    /// Truncation tolerance used.
    pub eps_tap: f64,
    /// Equilibrium gain used for the tail.
    pub h_eq: f64,
    /// False when the cap was reached before the tolerance was met.
    pub tail_converged: bool,
}

impl SymbolTaps {
    /// Tap value with the equilibrium tail: `h_l` for `l <= l_trunc`, else
    /// `h_eq`.
    pub fn tap(&self, l: usize) -> f64 {
        if l < self.h.len() {
            self.h[l]
        } else {
            self.h_eq
        }
    }

    /// Differential tap with zero tail.
    pub fn delta_tap(&self, l: usize) -> f64 {
        self.delta.get(l).copied().unwrap_or(0.0)
    }

    /// Binomial per-tap variance factor `h_l (1 - h_l)` with equilibrium tail.
    pub fn var_factor(&self, l: usize) -> f64 {
        let h = self.tap(l);
        h * (1.0 - h)
    }
}

/// Computes symbol-spaced taps `h_l = e_N^T M^l e_1` by iterated
/// matrix-vector products and truncates where the taps settle to `h_eq`
/// within `eps_tap`.
///
/// When `l_max` is reached before settling, the taps are truncated at the
/// cap with `tail_converged = false`.
pub fn symbol_taps(
    m: &TransitionMatrix,
    tx_state: usize,
    obs_state: usize,
    h_eq: f64,
    l_max: usize,
    eps_tap: f64,
) -> Result<SymbolTaps> {
    if l_max < 1 {
        return Err(Error::Range("l_max must be at least 1".into()));
    }
    let n = m.n_states();
    let mut x = StateDistribution::point_mass(tx_state, n)?.probs().to_vec();
    let mut h = Vec::with_capacity(64);
    let mut settled_start: Option<usize> = None;
    let mut run = 0usize;

    for l in 0..=l_max {
        let hl = x[obs_state];
        h.push(hl);
        if (hl - h_eq).abs() < eps_tap {
            if run == 0 {
                settled_start = Some(l);
            }
            run += 1;
            if run >= SETTLED_RUN {
                break;
            }
        } else {
            run = 0;
            settled_start = None;
        }
        if l < l_max {
            x = m.apply(&x)?;
        }
    }

    let (l_trunc, tail_converged) = match settled_start {
        Some(start) if run >= SETTLED_RUN => (start, true),
        _ => (l_max, false),
    };
    h.truncate(l_trunc + 1);
    let delta: Vec<f64> = (0..l_trunc).map(|l| h[l + 1] - h[l]).collect();
    Ok(SymbolTaps {
        h,
        delta,
        l_trunc,
        eps_tap,
        h_eq,
        tail_converged,
    })
}

/// Return probabilities `pi[l] = (M^l)_{N,N}` for `l = 1..=l_max`, computed
/// by evolving the bound-state point mass under `M` and reading the bound
/// component.
pub fn return_probabilities(
    m: &TransitionMatrix,
    obs_state: usize,
    l_max: usize,
) -> Result<Vec<f64>> {
    if l_max < 1 {
        return Err(Error::Range("l_max must be at least 1".into()));
    }
    let n = m.n_states();
    let mut y = StateDistribution::point_mass(obs_state, n)?.probs().to_vec();
    let mut pi = Vec::with_capacity(l_max);
    for _ in 1..=l_max {
        y = m.apply(&y)?;
        pi.push(y[obs_state]);
    }
    Ok(pi)
}

/// Symbol-rate view of a microarray channel: coarse kernel, ISI taps, and
/// return probabilities.
#[derive(Debug, Clone)]
pub struct SymbolChannel {
    m: TransitionMatrix,
    n_s: u64,
    t_b_eff: f64,
    taps: SymbolTaps,
    pi: Vec<f64>,
    tx_state: usize,
    obs_state: usize,
}

impl SymbolChannel {
    /// Coarse-grains `ch` to the symbol interval `t_b`.
    pub fn build(ch: &MicroarrayChannel, t_b: f64, l_max: usize, eps_tap: f64) -> Result<Self> {
        let align = symbol_alignment(t_b, ch.params().dt)?;
        let m = coarse_matrix(ch.matrix(), align.n_s)?;
        let h_eq = ch.h_eq_closed_form();
        let taps = symbol_taps(
            &m,
            ch.tx_state(),
            ch.obs_state(),
            h_eq,
            l_max,
            eps_tap,
        )?;
        let pi = return_probabilities(&m, ch.obs_state(), taps.l_trunc.max(1))?;
        Ok(SymbolChannel {
            m,
            n_s: align.n_s,
            t_b_eff: align.t_b_eff,
            taps,
            pi,
            tx_state: ch.tx_state(),
            obs_state: ch.obs_state(),
        })
    }

    /// Coarse-grains with default truncation settings.
    pub fn build_default(ch: &MicroarrayChannel, t_b: f64) -> Result<Self> {
        Self::build(ch, t_b, DEFAULT_L_MAX, DEFAULT_EPS_TAP)
    }

    pub fn matrix(&self) -> &TransitionMatrix {
        &self.m
    }

    pub fn n_s(&self) -> u64 {
        self.n_s
    }

    pub fn t_b_eff(&self) -> f64 {
        self.t_b_eff
    }

    pub fn taps(&self) -> &SymbolTaps {
        &self.taps
    }

    pub fn h_eq(&self) -> f64 {
        self.taps.h_eq
    }

    pub fn l_trunc(&self) -> usize {
        self.taps.l_trunc
    }

    pub fn tx_state(&self) -> usize {
        self.tx_state
    }

    pub fn obs_state(&self) -> usize {
        self.obs_state
    }

    /// Return probability at lag `l >= 1`, with the equilibrium tail beyond
    /// the stored range.
    pub fn pi(&self, l: usize) -> f64 {
        if l == 0 {
            return 1.0;
        }
        self.pi.get(l - 1).copied().unwrap_or(self.taps.h_eq)
    }

    /// Stored return probabilities `pi[0] = pi(1), ...`.
    pub fn pi_slice(&self) -> &[f64] {
        &self.pi
    }
}
