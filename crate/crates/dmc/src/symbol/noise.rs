//! Analytic symbol-rate statistics of the counting noise.
//!
//! Conditioned on the transmit bits, the bound count at a symbol boundary is
//! a sum of independent per-batch binomials, so the mean and variance are
//! tap convolutions and the lag-`l` covariance is
//!
//! ```text
//! Cov(w_k, w_{k-l}) = Q * sum_r a_r h_{k-l-r} (pi(l) - h_{k-r})
//! ```
//!
//! Contributions at lags beyond the truncation length use the equilibrium
//! gain exactly, which keeps every sum O(l_trunc) regardless of sequence
//! length. Sums are compensated (Kahan) so long windows stay at full
//! precision.

use crate::error::{Error, Result};
use crate::symbol::{SymbolChannel, SymbolTaps};

/// Compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

/// On-off-keyed transmit sequence: bit `a_k = 1` releases `q` molecules at
/// the start of symbol `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxSequence {
    bits: Vec<u8>,
    q: u64,
}

impl TxSequence {
    pub fn new(bits: Vec<u8>, q: u64) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Degenerate("bits must be 0 or 1".into()));
        }
        Ok(TxSequence { bits, q })
    }

    /// Independent equiprobable bits.
    pub fn random<R: rand::Rng>(n_bits: usize, q: u64, rng: &mut R) -> Self {
        let bits = (0..n_bits).map(|_| rng.gen_range(0..=1u8)).collect();
        TxSequence { bits, q }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Bit value with zero past/future padding.
    pub fn bit(&self, k: isize) -> f64 {
        if k < 0 || k as usize >= self.bits.len() {
            0.0
        } else {
            self.bits[k as usize] as f64
        }
    }

    /// Cumulative 1-bit counts; `prefix[j]` is the number of ones among the
    /// first `j` bits.
    fn prefix_ones(&self) -> Vec<u64> {
        let mut prefix = Vec::with_capacity(self.bits.len() + 1);
        prefix.push(0);
        let mut acc = 0u64;
        for &b in &self.bits {
            acc += b as u64;
            prefix.push(acc);
        }
        prefix
    }
}

/// Ones among `a_0..=a_j` given a prefix table; `j` may be negative or past
/// the end.
fn ones_through(prefix: &[u64], j: isize) -> u64 {
    if j < 0 || prefix.len() == 1 {
        return 0;
    }
    let j = (j as usize).min(prefix.len() - 2);
    prefix[j + 1]
}

/// Conditional mean `z_bar_k = Q sum_l a_{k-l} h_l` for boundaries
/// `k = 0..=bits.len()`.
pub fn mean_sequence(tx: &TxSequence, taps: &SymbolTaps) -> Vec<f64> {
    let b = tx.len();
    let q = tx.q() as f64;
    let prefix = tx.prefix_ones();
    let lt = taps.l_trunc;
    (0..=b)
        .map(|k| {
            let mut head = KahanSum::default();
            for l in 0..lt.min(k + 1) {
                let a = tx.bit(k as isize - l as isize);
                if a != 0.0 {
                    head.add(taps.h[l]);
                }
            }
            // releases older than the truncation lag sit at equilibrium
            let tail_ones = ones_through(&prefix, k as isize - lt as isize);
            q * (head.value() + tail_ones as f64 * taps.h_eq)
        })
        .collect()
}

/// Conditional variance `sigma_k^2 = Q sum_l a_{k-l} h_l (1 - h_l)` for
/// boundaries `k = 0..=bits.len()`.
pub fn variance_sequence(tx: &TxSequence, taps: &SymbolTaps) -> Vec<f64> {
    let b = tx.len();
    let q = tx.q() as f64;
    let g_eq = taps.h_eq * (1.0 - taps.h_eq);
    let lt = taps.l_trunc;
    let prefix = tx.prefix_ones();
    (0..=b)
        .map(|k| {
            let mut head = KahanSum::default();
            for l in 0..lt.min(k + 1) {
                let a = tx.bit(k as isize - l as isize);
                if a != 0.0 {
                    head.add(taps.h[l] * (1.0 - taps.h[l]));
                }
            }
            let tail_ones = ones_through(&prefix, k as isize - lt as isize);
            q * (head.value() + tail_ones as f64 * g_eq)
        })
        .collect()
}

/// Lag-`l` counting-noise covariance
/// `Cov(w_k, w_{k-l}) = Q sum_{r=0}^{k-l} a_r h_{k-l-r} (pi(l) - h_{k-r})`
/// with equilibrium tails.
pub fn covariance(tx: &TxSequence, k: usize, l: usize, sym: &SymbolChannel) -> Result<f64> {
    if l < 1 || k < l {
        return Err(Error::Range(format!(
            "covariance needs k >= l >= 1 (got k = {k}, l = {l})"
        )));
    }
    let taps = sym.taps();
    let pi_l = sym.pi(l);
    let q = tx.q() as f64;
    let lt = taps.l_trunc;

    // young releases: lag at the earlier boundary below the truncation length
    let mut head = KahanSum::default();
    let r_min_head = (k - l).saturating_sub(lt.saturating_sub(1));
    for r in r_min_head..=(k - l) {
        let a = tx.bit(r as isize);
        if a != 0.0 {
            let j1 = k - l - r;
            head.add(taps.tap(j1) * (pi_l - taps.tap(j1 + l)));
        }
    }
    // old releases: both boundaries see the equilibrium gain
    let prefix = tx.prefix_ones();
    let tail_ones = ones_through(&prefix, k as isize - l as isize - lt as isize);
    let tail = tail_ones as f64 * taps.h_eq * (pi_l - taps.h_eq);
    Ok(q * (head.value() + tail))
}

/// Lag-`l` correlation coefficient `rho_k[l] = Cov/(sigma_k sigma_{k-l})`.
pub fn lag_correlation(tx: &TxSequence, k: usize, l: usize, sym: &SymbolChannel) -> Result<f64> {
    let cov = covariance(tx, k, l, sym)?;
    let var = variance_sequence(tx, sym.taps());
    let denom = (var[k] * var[k - l]).sqrt();
    if denom == 0.0 {
        return Err(Error::Degenerate(
            "zero variance; correlation undefined".into(),
        ));
    }
    Ok(cov / denom)
}

/// Bundle of analytic statistics for requested `(k, l)` pairs.
#[derive(Debug, Clone)]
pub struct NoiseStats {
    /// Conditional means per boundary.
    pub mean: Vec<f64>,
    /// Conditional variances per boundary.
    pub var: Vec<f64>,
    /// `((k, l), Cov(w_k, w_{k-l}))` for the requested pairs.
    pub cov: Vec<((usize, usize), f64)>,
    /// `((k, l), rho_k[l])` for the requested pairs.
    pub rho: Vec<((usize, usize), f64)>,
}

/// Evaluates mean, variance, covariance, and correlation for a transmit
/// sequence at the requested `(k, l)` pairs.
pub fn noise_stats(
    tx: &TxSequence,
    sym: &SymbolChannel,
    pairs: &[(usize, usize)],
) -> Result<NoiseStats> {
    let mean = mean_sequence(tx, sym.taps());
    let var = variance_sequence(tx, sym.taps());
    let mut cov = Vec::with_capacity(pairs.len());
    let mut rho = Vec::with_capacity(pairs.len());
    for &(k, l) in pairs {
        let c = covariance(tx, k, l, sym)?;
        let denom = (var[k] * var[k - l]).sqrt();
        if denom == 0.0 {
            return Err(Error::Degenerate(format!(
                "zero variance at pair ({k},{l})"
            )));
        }
        cov.push(((k, l), c));
        rho.push(((k, l), c / denom));
    }
    Ok(NoiseStats {
        mean,
        var,
        cov,
        rho,
    })
}

/// Expected-statistics second moments under independent equiprobable bits:
/// every `a_r` is replaced by its mean 1/2.
#[derive(Debug, Clone)]
pub struct ExpectedMoments {
    /// `E[sigma_k^2]` for `k = 0..=k_max` (per released molecule, times Q/2).
    var: Vec<f64>,
    /// `pi(l)` cache for `l = 1..=l_max`.
    pi: Vec<f64>,
    taps_h: Vec<f64>,
    h_eq: f64,
    l_trunc: usize,
    q_half: f64,
}

impl ExpectedMoments {
    /// Precomputes expected variances up to `k_max` and caches `pi` up to
    /// `l_max`.
    pub fn new(sym: &SymbolChannel, q: u64, k_max: usize, l_max: usize) -> Self {
        let taps = sym.taps();
        let q_half = q as f64 / 2.0;
        let g_eq = taps.h_eq * (1.0 - taps.h_eq);
        let mut var = Vec::with_capacity(k_max + 1);
        let mut head = KahanSum::default();
        for k in 0..=k_max {
            if k < taps.l_trunc {
                head.add(taps.h[k] * (1.0 - taps.h[k]));
                var.push(q_half * head.value());
            } else {
                var.push(q_half * (head.value() + (k - taps.l_trunc + 1) as f64 * g_eq));
            }
        }
        let pi = (1..=l_max).map(|l| sym.pi(l)).collect();
        ExpectedMoments {
            var,
            pi,
            taps_h: taps.h.clone(),
            h_eq: taps.h_eq,
            l_trunc: taps.l_trunc,
            q_half,
        }
    }

    fn tap(&self, l: usize) -> f64 {
        if l < self.taps_h.len() {
            self.taps_h[l]
        } else {
            self.h_eq
        }
    }

    /// Expected variance at boundary `k`.
    pub fn var(&self, k: usize) -> f64 {
        self.var[k]
    }

    /// Expected covariance at `(k, l)`.
    pub fn cov(&self, k: usize, l: usize) -> f64 {
        let pi_l = self.pi[l - 1];
        let mut head = KahanSum::default();
        let span = (k - l).min(self.l_trunc.saturating_sub(1));
        for j1 in 0..=span {
            head.add(self.tap(j1) * (pi_l - self.tap(j1 + l)));
        }
        let tail_terms = (k - l).saturating_sub(self.l_trunc.saturating_sub(1)) as f64;
        let tail = tail_terms * self.h_eq * (pi_l - self.h_eq);
        self.q_half * (head.value() + tail)
    }
}

/// Time-averaged lag correlation under independent equiprobable signaling:
/// `rho_k[l]` with expected statistics, averaged over `k` in the window.
///
/// The window must start at or after the truncation length (the channel
/// memory) and at or after `l_max`.
pub fn time_averaged_rho(
    sym: &SymbolChannel,
    window: std::ops::Range<usize>,
    l_max: usize,
) -> Result<Vec<f64>> {
    check_window(sym, &window, l_max)?;
    let moments = ExpectedMoments::new(sym, 2, window.end - 1, l_max);
    let mut rho = Vec::with_capacity(l_max);
    for l in 1..=l_max {
        let mut acc = KahanSum::default();
        let mut count = 0usize;
        for k in window.clone() {
            let denom = (moments.var(k) * moments.var(k - l)).sqrt();
            acc.add(moments.cov(k, l) / denom);
            count += 1;
        }
        rho.push(acc.value() / count as f64);
    }
    Ok(rho)
}

/// Pooled-window counterpart of [`time_averaged_rho`], matched to the pooled
/// Monte Carlo estimator: sums of covariances over the window divided by the
/// geometric mean of summed variances.
pub fn pooled_rho_theory(
    sym: &SymbolChannel,
    window: std::ops::Range<usize>,
    l_max: usize,
) -> Result<Vec<f64>> {
    check_window(sym, &window, l_max)?;
    let moments = ExpectedMoments::new(sym, 2, window.end - 1, l_max);
    let mut rho = Vec::with_capacity(l_max);
    for l in 1..=l_max {
        let mut num = KahanSum::default();
        let mut var_k = KahanSum::default();
        let mut var_kl = KahanSum::default();
        for k in window.clone() {
            num.add(moments.cov(k, l));
            var_k.add(moments.var(k));
            var_kl.add(moments.var(k - l));
        }
        rho.push(num.value() / (var_k.value() * var_kl.value()).sqrt());
    }
    Ok(rho)
}

fn check_window(
    sym: &SymbolChannel,
    window: &std::ops::Range<usize>,
    l_max: usize,
) -> Result<()> {
    if window.is_empty() {
        return Err(Error::Window("empty averaging window".into()));
    }
    if window.start < sym.l_trunc() {
        return Err(Error::Window(format!(
            "window starts at {} but the channel memory spans {} symbols",
            window.start,
            sym.l_trunc()
        )));
    }
    if window.start < l_max {
        return Err(Error::Window(format!(
            "window start {} must cover the largest lag {l_max}",
            window.start
        )));
    }
    Ok(())
}

/// Result of the lag-decay envelope check.
#[derive(Debug, Clone)]
pub struct EnvelopeReport {
    /// Upper bound `exp(-T_b_eff/tau) * 1.1` on consecutive ratios.
    pub bound: f64,
    /// `(l, |cov(l+1)|/|cov(l)|)` for lags above the numerical floor.
    pub ratios: Vec<(usize, f64)>,
    /// Whether every checked ratio satisfies the bound.
    pub passes: bool,
}

/// Checks the exponential lag decay of a covariance sequence
/// (`covs[i]` holding lag `i+1`): consecutive tail ratios must not exceed
/// `exp(-t_b_eff/tau) * 1.1`. Lags whose normalized magnitude is below 1e-10
/// are excluded. Report-only; never fails.
pub fn decay_envelope_check(covs: &[f64], tau: f64, t_b_eff: f64) -> EnvelopeReport {
    const FLOOR: f64 = 1e-10;
    let bound = (-t_b_eff / tau).exp() * 1.1;
    let scale = covs.first().map(|c| c.abs()).unwrap_or(0.0);
    let mut ratios = Vec::new();
    let mut passes = true;
    if scale > 0.0 {
        for i in 0..covs.len().saturating_sub(1) {
            let a = covs[i].abs();
            let b = covs[i + 1].abs();
            if a / scale > FLOOR && b / scale > FLOOR {
                let ratio = b / a;
                if ratio > bound {
                    passes = false;
                }
                ratios.push((i + 1, ratio));
            }
        }
    }
    EnvelopeReport {
        bound,
        ratios,
        passes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::params::ChannelParams;
    use crate::microarray::build_microarray_channel;
    use crate::symbol::SymbolChannel;
    use approx::assert_relative_eq;

    fn two_state_symbol() -> SymbolChannel {
        let ch = build_microarray_channel(&ChannelParams {
            d: 0.0,
            dx: 1.0,
            dt: 1.0,
            n_free: 1,
            k_on: 0.3,
            k_off: 0.2,
            c_p: 1.0,
        })
        .unwrap();
        SymbolChannel::build(&ch, 1.0, 256, 1e-12).unwrap()
    }

    #[test]
    fn mean_of_single_release() {
        let sym = two_state_symbol();
        let tx = TxSequence::new(vec![1, 0, 0], 1000).unwrap();
        let mean = mean_sequence(&tx, sym.taps());
        assert_eq!(mean[0], 0.0);
        assert_relative_eq!(mean[1], 300.0, max_relative = 1e-12);
        assert_relative_eq!(mean[2], 450.0, max_relative = 1e-12);
    }

    #[test]
    fn mean_superposes_releases() {
        let sym = two_state_symbol();
        let tx = TxSequence::new(vec![1, 1], 1000).unwrap();
        let mean = mean_sequence(&tx, sym.taps());
        assert_relative_eq!(mean[1], 300.0, max_relative = 1e-12);
        assert_relative_eq!(mean[2], 750.0, max_relative = 1e-12);
    }

    #[test]
    fn all_zero_bits_mean_zero() {
        let sym = two_state_symbol();
        let tx = TxSequence::new(vec![0; 16], 1000).unwrap();
        assert!(mean_sequence(&tx, sym.taps()).iter().all(|&m| m == 0.0));
        assert!(variance_sequence(&tx, sym.taps()).iter().all(|&v| v == 0.0));
        assert_eq!(covariance(&tx, 8, 2, &sym).unwrap(), 0.0);
    }

    #[test]
    fn variance_of_single_release() {
        let sym = two_state_symbol();
        let tx = TxSequence::new(vec![1], 1000).unwrap();
        let var = variance_sequence(&tx, sym.taps());
        assert_eq!(var[0], 0.0); // h_0 = 0
        assert_relative_eq!(var[1], 210.0, max_relative = 1e-12);
        // boundary beyond the last bit still sees the release
        let tx3 = TxSequence::new(vec![1, 0, 0], 1000).unwrap();
        let var3 = variance_sequence(&tx3, sym.taps());
        assert_relative_eq!(var3[2], 247.5, max_relative = 1e-12);
    }

    #[test]
    fn variance_superposes() {
        let sym = two_state_symbol();
        let tx = TxSequence::new(vec![1, 1, 0], 1000).unwrap();
        let var = variance_sequence(&tx, sym.taps());
        assert_relative_eq!(var[2], 457.5, max_relative = 1e-12);
    }

    #[test]
    fn single_batch_covariance_matches_hand_value() {
        let sym = two_state_symbol();
        let tx = TxSequence::new(vec![1, 0, 0], 1000).unwrap();
        let cov = covariance(&tx, 2, 1, &sym).unwrap();
        assert_relative_eq!(cov, 105.0, max_relative = 1e-12);
        let rho = lag_correlation(&tx, 2, 1, &sym).unwrap();
        assert_relative_eq!(rho, 105.0 / (247.5f64 * 210.0).sqrt(), max_relative = 1e-12);
        assert!((rho - 0.4606).abs() < 1e-4);
    }

    #[test]
    fn covariance_index_guards() {
        let sym = two_state_symbol();
        let tx = TxSequence::new(vec![1, 0, 0], 1000).unwrap();
        assert!(covariance(&tx, 1, 2, &sym).is_err());
        assert!(covariance(&tx, 3, 0, &sym).is_err());
    }

    #[test]
    fn time_averaged_rho_decreases_and_vanishes() {
        let sym = two_state_symbol();
        let lt = sym.l_trunc();
        let rho = time_averaged_rho(&sym, lt.max(8)..lt.max(8) + 64, 8).unwrap();
        for pair in rho.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
        assert!(rho[7] < 0.02);
        assert!(rho.iter().all(|r| r.abs() <= 1.0));
    }

    #[test]
    fn window_before_memory_is_rejected() {
        let sym = two_state_symbol();
        assert!(matches!(
            time_averaged_rho(&sym, 2..40, 2),
            Err(Error::Window(_))
        ));
    }

    #[test]
    fn envelope_ratio_of_geometric_sequence() {
        // two-state pi(l) - h_eq decays exactly by lambda_1 = 0.5 per lag
        let sym = two_state_symbol();
        let h_eq = sym.h_eq();
        let covs: Vec<f64> = (1..=10)
            .map(|l| h_eq * (sym.pi(l) - h_eq))
            .collect();
        for pair in covs.windows(2) {
            assert_relative_eq!(pair[1] / pair[0], 0.5, max_relative = 1e-9);
        }
        // tau = dt/(1-0.5) = 2, T_b_eff = 1: bound = exp(-0.5)*1.1 = 0.667
        let report = decay_envelope_check(&covs, 2.0, 1.0);
        assert!(report.passes);
        assert!(report.ratios.iter().all(|&(_, r)| (r - 0.5).abs() < 1e-9));
    }

    #[test]
    fn envelope_vacuous_on_empty_input() {
        let report = decay_envelope_check(&[], 1.0, 1.0);
        assert!(report.passes);
        assert!(report.ratios.is_empty());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        // batch independence: statistics of a bit vector equal the sum of
        // single-release statistics
        #[test]
        fn superposition_over_batches(bits in proptest::collection::vec(0u8..=1, 1..12)) {
            let sym = two_state_symbol();
            let q = 1000u64;
            let tx = TxSequence::new(bits.clone(), q).unwrap();
            let mean = mean_sequence(&tx, sym.taps());
            let var = variance_sequence(&tx, sym.taps());
            let b = bits.len();

            let mut mean_sum = vec![0.0; b + 1];
            let mut var_sum = vec![0.0; b + 1];
            let mut cov_sum = 0.0;
            let (k, l) = (b, 1.min(b));
            for r in 0..b {
                if bits[r] == 0 {
                    continue;
                }
                let mut single = vec![0u8; b];
                single[r] = 1;
                let tx_r = TxSequence::new(single, q).unwrap();
                let m_r = mean_sequence(&tx_r, sym.taps());
                let v_r = variance_sequence(&tx_r, sym.taps());
                for i in 0..=b {
                    mean_sum[i] += m_r[i];
                    var_sum[i] += v_r[i];
                }
                if k >= l && l >= 1 {
                    cov_sum += covariance(&tx_r, k, l, &sym).unwrap();
                }
            }
            for i in 0..=b {
                proptest::prop_assert!((mean[i] - mean_sum[i]).abs() <= 1e-9 * mean[i].abs().max(1.0));
                proptest::prop_assert!((var[i] - var_sum[i]).abs() <= 1e-9 * var[i].abs().max(1.0));
            }
            if k >= l && l >= 1 {
                let cov = covariance(&tx, k, l, &sym).unwrap();
                proptest::prop_assert!((cov - cov_sum).abs() <= 1e-9 * cov.abs().max(1.0));
            }
        }

        // correlation coefficients are bounded by 1 in magnitude
        #[test]
        fn rho_is_bounded(bits in proptest::collection::vec(0u8..=1, 4..16), l in 1usize..4) {
            let sym = two_state_symbol();
            let tx = TxSequence::new(bits.clone(), 500).unwrap();
            let k = bits.len();
            if bits.iter().any(|&b| b == 1) && k >= l {
                let var = variance_sequence(&tx, sym.taps());
                if var[k] > 0.0 && var[k - l] > 0.0 {
                    let rho = lag_correlation(&tx, k, l, &sym).unwrap();
                    proptest::prop_assert!(rho.abs() <= 1.0 + 1e-12);
                }
            }
        }
    }
}
