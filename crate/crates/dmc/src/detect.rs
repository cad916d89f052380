//! Differential readout and symbol decisions.
//!
//! The bound-count sequence carries a slowly varying baseline under
//! reversible binding, so detection works on the first-order difference
//! `dz_k = z_{k+1} - z_k`, whose desired term is `Q a_k dh_0` with
//! `dh_0 = h_1`. Two receivers are provided: a memory-less threshold
//! (`a_k = 1` iff `dz_k > eta`) and a finite-memory decision-feedback
//! equalizer that cancels post-cursor differential ISI using its own past
//! decisions.

use crate::error::{Error, Result};
use crate::symbol::SymbolTaps;

/// Detector selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    Threshold,
    Dfe,
}

impl DetectorKind {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::Threshold => "threshold",
            DetectorKind::Dfe => "dfe",
        }
    }
}

/// Detector configuration.
#[derive(Debug, Clone, Copy)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    /// Feedback taps (DFE only).
    pub l: usize,
    /// Decision threshold (molecule count).
    pub eta: f64,
    /// Release budget the threshold was derived from.
    pub q: u64,
}

impl DetectorConfig {
    /// Midpoint threshold `eta = Q*dh_0/2` (with `dh_0 = h_1`); the DFE uses
    /// the same threshold so any gain comes from ISI cancellation alone.
    pub fn auto(kind: DetectorKind, l: usize, q: u64, taps: &SymbolTaps) -> Self {
        DetectorConfig {
            kind,
            l,
            eta: q as f64 * taps.delta_tap(0) / 2.0,
            q,
        }
    }
}

/// First-order difference `dz_k = z_{k+1} - z_k`; one entry shorter than the
/// trace, and `dz_k` is the decision statistic for bit `a_k`.
pub fn differential(z: &[f64]) -> Result<Vec<f64>> {
    if z.len() < 2 {
        return Err(Error::InsufficientData(
            "differential readout needs at least 2 boundary samples".into(),
        ));
    }
    Ok(z.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Memory-less differential threshold: `a_k = 1` iff `dz_k > eta`
/// (ties decide 0).
pub fn threshold_detect(dz: &[f64], cfg: &DetectorConfig) -> Vec<u8> {
    dz.iter().map(|&d| (d > cfg.eta) as u8).collect()
}

/// Decision-feedback equalizer with `cfg.l` feedback taps: subtracts the
/// ISI estimate `Q sum_{l=1}^{L} a_hat_{k-l} dh_l` rebuilt from past
/// decisions, then thresholds. Decisions before the start are taken as 0.
pub fn dfe_detect(dz: &[f64], taps: &SymbolTaps, cfg: &DetectorConfig) -> Vec<u8> {
    let q = cfg.q as f64;
    let mut decisions = Vec::with_capacity(dz.len());
    for (k, &d) in dz.iter().enumerate() {
        let mut isi = 0.0;
        for l in 1..=cfg.l.min(k) {
            if decisions[k - l] == 1 {
                isi += q * taps.delta_tap(l);
            }
        }
        let residual = d - isi;
        decisions.push((residual > cfg.eta) as u8);
    }
    decisions
}

/// Error counts and Wilson interval for a detection run.
#[derive(Debug, Clone, Copy)]
pub struct BerResult {
    pub n_symbols: u64,
    pub n_errors: u64,
    /// Point estimate `n_errors / n_symbols`.
    pub ber: f64,
    /// Half-width of the Wilson 95% interval.
    pub ci95: f64,
}

impl BerResult {
    /// True when the two estimates differ by more than the sum of their
    /// interval half-widths.
    pub fn separated_from(&self, other: &BerResult) -> bool {
        (self.ber - other.ber).abs() > self.ci95 + other.ci95
    }
}

/// Hamming error fraction over `k >= skip`, with a Wilson 95% interval.
pub fn evaluate_ber(truth: &[u8], decisions: &[u8], skip: usize) -> Result<BerResult> {
    if truth.len() != decisions.len() {
        return Err(Error::Dimension(format!(
            "truth length {} != decisions length {}",
            truth.len(),
            decisions.len()
        )));
    }
    if skip >= truth.len() {
        return Err(Error::InsufficientData(format!(
            "burn-in {skip} leaves no symbols out of {}",
            truth.len()
        )));
    }
    let n_symbols = (truth.len() - skip) as u64;
    let n_errors = truth[skip..]
        .iter()
        .zip(&decisions[skip..])
        .filter(|(a, b)| a != b)
        .count() as u64;
    let ber = n_errors as f64 / n_symbols as f64;
    Ok(BerResult {
        n_symbols,
        n_errors,
        ber,
        ci95: wilson_half_width(n_errors, n_symbols, 1.959_963_984_540_054),
    })
}

fn wilson_half_width(successes: u64, n: u64, z: f64) -> f64 {
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::params::ChannelParams;
    use crate::microarray::build_microarray_channel;
    use crate::symbol::noise::{mean_sequence, TxSequence};
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
    fn differential_of_toy_mean_trace() {
        let dz = differential(&[0.0, 300.0, 450.0]).unwrap();
        assert_eq!(dz, vec![300.0, 150.0]);
        // telescoping
        assert_relative_eq!(dz.iter().sum::<f64>(), 450.0, max_relative = 1e-15);
        let constant = differential(&[5.0; 6]).unwrap();
        assert!(constant.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn threshold_decides_mean_paths() {
        let sym = two_state_symbol();
        let cfg = DetectorConfig::auto(DetectorKind::Threshold, 0, 1000, sym.taps());
        assert_relative_eq!(cfg.eta, 150.0, max_relative = 1e-12);
        // noiseless one: dz_0 = 300 > 150
        assert_eq!(threshold_detect(&[300.0], &cfg), vec![1]);
        // noiseless zero: dz = 0
        assert_eq!(threshold_detect(&[0.0], &cfg), vec![0]);
        // tie decides 0 (strict inequality)
        assert_eq!(threshold_detect(&[150.0], &cfg), vec![0]);
    }

    #[test]
    fn dfe_with_no_feedback_equals_threshold() {
        let sym = two_state_symbol();
        let cfg = DetectorConfig::auto(DetectorKind::Dfe, 0, 1000, sym.taps());
        let dz = [300.0, 450.0, -20.0, 151.0, 149.0, 0.0];
        assert_eq!(
            dfe_detect(&dz, sym.taps(), &cfg),
            threshold_detect(&dz, &cfg)
        );
    }

    #[test]
    fn dfe_cancels_known_isi() {
        let sym = two_state_symbol();
        let cfg = DetectorConfig::auto(DetectorKind::Dfe, 5, 1000, sym.taps());
        // bits (1,1) noiseless: dz1 = 450, isi = 1000*0.15 = 150, r = 300 > 150
        let decisions = dfe_detect(&[300.0, 450.0], sym.taps(), &cfg);
        assert_eq!(decisions, vec![1, 1]);
    }

    #[test]
    fn dfe_recovers_any_pattern_on_noiseless_mean_paths() {
        let sym = two_state_symbol();
        let taps = sym.taps();
        let l = taps.l_trunc.saturating_sub(1);
        let cfg = DetectorConfig::auto(DetectorKind::Dfe, l, 1000, taps);
        let patterns: [&[u8]; 4] = [
            &[1, 0, 1, 1, 0, 0, 1, 0],
            &[1, 1, 1, 1, 1, 1, 1, 1],
            &[0, 0, 0, 1, 0, 0, 0, 0],
            &[0, 1, 0, 1, 0, 1, 0, 1],
        ];
        for bits in patterns {
            let tx = TxSequence::new(bits.to_vec(), 1000).unwrap();
            let z = mean_sequence(&tx, taps);
            let dz = differential(&z).unwrap();
            let decisions = dfe_detect(&dz, taps, &cfg);
            assert_eq!(&decisions, bits, "pattern {bits:?}");
        }
    }

    #[test]
    fn all_zero_input_gives_all_zero_decisions() {
        let sym = two_state_symbol();
        for l in [0usize, 3, 10] {
            let cfg = DetectorConfig::auto(DetectorKind::Dfe, l, 1000, sym.taps());
            let decisions = dfe_detect(&[0.0; 12], sym.taps(), &cfg);
            assert!(decisions.iter().all(|&d| d == 0));
        }
    }

    #[test]
    fn ber_exact_extremes() {
        let truth = vec![1, 0, 1, 1, 0];
        let same = evaluate_ber(&truth, &truth, 0).unwrap();
        assert_eq!(same.n_errors, 0);
        assert_eq!(same.ber, 0.0);
        let flipped: Vec<u8> = truth.iter().map(|b| 1 - b).collect();
        let all = evaluate_ber(&truth, &flipped, 0).unwrap();
        assert_eq!(all.ber, 1.0);
    }

    #[test]
    fn ber_skip_and_mismatch() {
        let truth = vec![1, 0, 1];
        let dec = vec![0, 0, 1];
        let r = evaluate_ber(&truth, &dec, 1).unwrap();
        assert_eq!(r.n_symbols, 2);
        assert_eq!(r.n_errors, 0);
        assert!(evaluate_ber(&truth, &dec[..2], 0).is_err());
        assert!(evaluate_ber(&truth, &dec, 3).is_err());
    }

    #[test]
    fn random_decisions_hit_half() {
        use rand::Rng;
        let mut rng = crate::sim::sampler::trial_rng(5, 0);
        let n = 100_000;
        let truth: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1u8)).collect();
        let dec: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1u8)).collect();
        let r = evaluate_ber(&truth, &dec, 0).unwrap();
        assert!((r.ber - 0.5).abs() < 3.0 * r.ci95 / 1.96 * 1.96 + 0.005);
        assert!(r.ci95 < 0.004);
    }

    #[test]
    fn threshold_scale_equivariance() {
        let sym = two_state_symbol();
        let base = DetectorConfig::auto(DetectorKind::Threshold, 0, 1000, sym.taps());
        let scaled = DetectorConfig::auto(DetectorKind::Threshold, 0, 3000, sym.taps());
        let dz = [10.0, 200.0, 149.9, 150.1, -75.0];
        let dz3: Vec<f64> = dz.iter().map(|d| d * 3.0).collect();
        assert_eq!(threshold_detect(&dz, &base), threshold_detect(&dz3, &scaled));
    }
}
