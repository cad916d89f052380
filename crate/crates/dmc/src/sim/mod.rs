//! Exact-in-law stochastic simulation of the symbol-rate bound-count
//! observation under on-off keying.
//!
//! Two backends produce identically distributed traces:
//!
//! * `PerMolecule` walks every released molecule independently through the
//!   coarse kernel `M` — the ground-truth reference, intended for short
//!   runs.
//! * `Aggregate` keeps one molecule-count vector over the states and splits
//!   each state's count multinomially over its `M` column per symbol, which
//!   is exact by molecule exchangeability and makes long runs tractable.
//!
//! A release for symbol `k` is injected at the boundary `k*N_s` before any
//! transition; since injected molecules start free, the boundary count
//! `z_k` is unaffected, matching `h_0 = 0`. Traces cover boundaries
//! `0..=B`, so every one of the `B` bits has a differential observation.

pub mod estimate;
pub mod sampler;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::symbol::noise::TxSequence;
use crate::symbol::SymbolChannel;
use sampler::{multinomial_split, trial_rng, CategoricalCdf};

/// Default per-call work budget (draw-equivalents).
pub const DEFAULT_SIM_BUDGET: u64 = 40_000_000_000;

/// Counts below this split per-molecule rather than via chained binomials.
const SMALL_COUNT_DIRECT: u64 = 16;

/// Simulation backend selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    PerMolecule,
    Aggregate,
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::PerMolecule => "per_molecule",
            Backend::Aggregate => "aggregate",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_molecule" => Ok(Backend::PerMolecule),
            "aggregate" => Ok(Backend::Aggregate),
            other => Err(Error::Config(format!("unknown backend `{other}`"))),
        }
    }
}

/// Per-state molecule counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountVector {
    counts: Vec<u64>,
}

impl CountVector {
    pub fn zeros(n: usize) -> Self {
        CountVector {
            counts: vec![0; n],
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Symbol-rate bound-count trace with seed and backend provenance.
#[derive(Debug, Clone)]
pub struct SimTrace {
    /// Bound counts at boundaries `0..=B`.
    pub z: Vec<u64>,
    /// Master seed the trial substream was derived from.
    pub master_seed: u64,
    /// Trial index within the master seed.
    pub trial: u64,
    pub backend: Backend,
    /// Transmit sequence that produced the trace.
    pub tx: TxSequence,
    /// Effective symbol interval (s).
    pub t_b_eff: f64,
}

impl SimTrace {
    /// Boundary count as `f64` (exact below 2^53).
    pub fn z_f64(&self) -> Vec<f64> {
        self.z.iter().map(|&z| z as f64).collect()
    }
}

/// Bits supplied per trial.
#[derive(Debug, Clone, Copy)]
pub enum TrialBits<'a> {
    /// Every trial replays the same transmit sequence.
    Shared(&'a TxSequence),
    /// Each trial draws fresh independent equiprobable bits.
    Random { n_bits: usize, q: u64 },
}

/// Projected draw count for the per-molecule backend (one draw per alive
/// molecule per symbol transition).
fn per_molecule_work(tx: &TxSequence) -> u64 {
    let mut ones = 0u64;
    let mut work = 0u64;
    for &b in tx.bits() {
        ones += b as u64;
        work = work.saturating_add(ones.saturating_mul(tx.q()));
    }
    work
}

fn aggregate_work(tx: &TxSequence, n_states: usize) -> u64 {
    (tx.len() as u64 + 1).saturating_mul((n_states * n_states) as u64)
}

/// Estimated work for one trial (draw-equivalents), used for budget checks.
pub fn projected_work(sym: &SymbolChannel, tx: &TxSequence, backend: Backend) -> u64 {
    match backend {
        Backend::PerMolecule => per_molecule_work(tx),
        Backend::Aggregate => aggregate_work(tx, sym.matrix().n_states()),
    }
}

/// Simulates one trace with the trial substream of `(master_seed, trial)`.
pub fn simulate(
    sym: &SymbolChannel,
    tx: &TxSequence,
    backend: Backend,
    master_seed: u64,
    trial: u64,
    budget: u64,
) -> Result<SimTrace> {
    let projected = projected_work(sym, tx, backend);
    if projected > budget {
        return Err(Error::Budget { projected, budget });
    }
    let mut rng = trial_rng(master_seed, trial);
    let z = match backend {
        Backend::PerMolecule => run_per_molecule(sym, tx, &mut rng)?,
        Backend::Aggregate => run_aggregate(sym, tx, &mut rng)?,
    };
    Ok(SimTrace {
        z,
        master_seed,
        trial,
        backend,
        tx: tx.clone(),
        t_b_eff: sym.t_b_eff(),
    })
}

/// Per-molecule reference backend: each released molecule is an independent
/// chain sampled at symbol boundaries from the columns of `M`.
pub fn simulate_per_molecule(
    sym: &SymbolChannel,
    tx: &TxSequence,
    master_seed: u64,
    trial: u64,
    budget: u64,
) -> Result<SimTrace> {
    simulate(sym, tx, Backend::PerMolecule, master_seed, trial, budget)
}

/// Aggregate-count backend: multinomial splits of per-state counts.
pub fn simulate_aggregate(
    sym: &SymbolChannel,
    tx: &TxSequence,
    master_seed: u64,
    trial: u64,
    budget: u64,
) -> Result<SimTrace> {
    simulate(sym, tx, Backend::Aggregate, master_seed, trial, budget)
}

fn column_cdfs(sym: &SymbolChannel) -> Vec<CategoricalCdf> {
    let m = sym.matrix();
    let n = m.n_states();
    (0..n)
        .map(|j| CategoricalCdf::new((0..n).map(|i| m.get(i, j))))
        .collect()
}

fn run_per_molecule<R: rand::Rng>(
    sym: &SymbolChannel,
    tx: &TxSequence,
    rng: &mut R,
) -> Result<Vec<u64>> {
    let b = tx.len();
    let obs = sym.obs_state() as u32;
    let cdfs = column_cdfs(sym);
    let mut states: Vec<u32> = Vec::new();
    let mut z = Vec::with_capacity(b + 1);
    for k in 0..=b {
        if k < b && tx.bits()[k] == 1 {
            states.extend(std::iter::repeat(sym.tx_state() as u32).take(tx.q() as usize));
        }
        z.push(states.iter().filter(|&&s| s == obs).count() as u64);
        if k < b {
            for s in &mut states {
                *s = cdfs[*s as usize].sample(rng) as u32;
            }
        }
    }
    Ok(z)
}

fn run_aggregate<R: rand::Rng>(
    sym: &SymbolChannel,
    tx: &TxSequence,
    rng: &mut R,
) -> Result<Vec<u64>> {
    let b = tx.len();
    let m = sym.matrix();
    let n = m.n_states();
    let obs = sym.obs_state();
    let cdfs = column_cdfs(sym);
    // per-column probabilities and descending-probability visit order
    let columns: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| m.get(i, j)).collect())
        .collect();
    let orders: Vec<Vec<u32>> = columns
        .iter()
        .map(|col| {
            let mut order: Vec<u32> = (0..n as u32).collect();
            order.sort_by(|&a, &b| {
                col[b as usize]
                    .partial_cmp(&col[a as usize])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            order
        })
        .collect();

    let mut counts = CountVector::zeros(n);
    let mut next = vec![0u64; n];
    let mut z = Vec::with_capacity(b + 1);
    let mut expected_total: u64 = 0;
    for k in 0..=b {
        if k < b && tx.bits()[k] == 1 {
            counts.counts[sym.tx_state()] = counts.counts[sym.tx_state()]
                .checked_add(tx.q())
                .ok_or_else(|| Error::Overflow("state count exceeds u64".into()))?;
            expected_total = expected_total
                .checked_add(tx.q())
                .ok_or_else(|| Error::Overflow("total count exceeds u64".into()))?;
        }
        // multinomial splits conserve molecules exactly
        assert_eq!(counts.total(), expected_total, "molecule conservation");
        z.push(counts.counts[obs]);
        if k < b {
            next.iter_mut().for_each(|c| *c = 0);
            for j in 0..n {
                let n_j = counts.counts[j];
                if n_j == 0 {
                    continue;
                }
                if n_j <= SMALL_COUNT_DIRECT {
                    for _ in 0..n_j {
                        next[cdfs[j].sample(rng)] += 1;
                    }
                } else {
                    multinomial_split(rng, n_j, &columns[j], &orders[j], &mut next);
                }
            }
            std::mem::swap(&mut counts.counts, &mut next);
        }
    }
    Ok(z)
}

/// Simulates one trial whose bits are drawn fresh from the trial substream
/// (the dynamics then continue on the same stream, so bits and noise share
/// no randomness).
pub fn simulate_random_bits(
    sym: &SymbolChannel,
    n_bits: usize,
    q: u64,
    backend: Backend,
    master_seed: u64,
    trial: u64,
    budget: u64,
) -> Result<SimTrace> {
    let mut rng = trial_rng(master_seed, trial);
    let tx = TxSequence::random(n_bits, q, &mut rng);
    let projected = projected_work(sym, &tx, backend);
    if projected > budget {
        return Err(Error::Budget { projected, budget });
    }
    let z = match backend {
        Backend::PerMolecule => run_per_molecule(sym, &tx, &mut rng)?,
        Backend::Aggregate => run_aggregate(sym, &tx, &mut rng)?,
    };
    Ok(SimTrace {
        z,
        master_seed,
        trial,
        backend,
        tx,
        t_b_eff: sym.t_b_eff(),
    })
}

/// Runs independent trials with deterministic per-trial substreams; the
/// result order is by trial index regardless of scheduling.
pub fn simulate_trials(
    sym: &SymbolChannel,
    bits: TrialBits<'_>,
    backend: Backend,
    master_seed: u64,
    trials: u64,
    budget: u64,
) -> Result<Vec<SimTrace>> {
    (0..trials)
        .into_par_iter()
        .map(|trial| match bits {
            TrialBits::Shared(tx) => simulate(sym, tx, backend, master_seed, trial, budget),
            TrialBits::Random { n_bits, q } => {
                simulate_random_bits(sym, n_bits, q, backend, master_seed, trial, budget)
            }
        })
        .collect()
}
