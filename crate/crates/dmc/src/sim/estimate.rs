//! Empirical counting-noise statistics from simulated traces, and the
//! two-sample Kolmogorov-Smirnov test used for backend-equivalence checks.
//!
//! Noise samples are centered at the analytic conditional mean of each
//! trace's own bit sequence, so moment estimators are unbiased without any
//! degrees-of-freedom correction and work with random per-trial bits. The
//! lag correlation is reported two ways (the estimator convention is
//! otherwise underdetermined): pooled over the window across all trials
//! (Pearson ratio of pooled sums, jackknifed over trials), and as the
//! across-trial mean of per-trial ratios.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::symbol::noise::{mean_sequence, KahanSum};
use crate::symbol::SymbolChannel;

use super::SimTrace;

/// Empirical counterpart of the analytic noise statistics.
#[derive(Debug, Clone)]
pub struct EmpiricalNoiseStats {
    /// Averaging window over boundary indices.
    pub window: Range<usize>,
    /// Across-trial mean of `z_k` for `k` in the window.
    pub mean: Vec<f64>,
    /// Standard error of `mean`.
    pub mean_se: Vec<f64>,
    /// Across-trial mean of `w_k^2` (noise variance) per window index.
    pub var: Vec<f64>,
    /// Standard error of `var`.
    pub var_se: Vec<f64>,
    /// `cov[l-1][i]`: across-trial mean of `w_k w_{k-l}` at window index `i`.
    pub cov: Vec<Vec<f64>>,
    /// Standard error of `cov`, same shape.
    pub cov_se: Vec<Vec<f64>>,
    /// Pooled lag correlation per lag `1..=l_max`.
    pub rho_pooled: Vec<f64>,
    /// Jackknife (leave-one-trial-out) standard error of `rho_pooled`.
    pub rho_pooled_se: Vec<f64>,
    /// Across-trial mean of per-trial lag correlations.
    pub rho_trial_mean: Vec<f64>,
    /// Standard error of `rho_trial_mean`.
    pub rho_trial_se: Vec<f64>,
    pub n_trials: usize,
    /// Set when the window carries no noise power (correlations undefined).
    pub degenerate: bool,
}

/// Estimates noise statistics over `window` from at least two traces.
///
/// All traces must share the channel configuration; bits may differ per
/// trial (each trace is centered with its own analytic mean).
pub fn estimate_noise_stats(
    traces: &[SimTrace],
    sym: &SymbolChannel,
    window: Range<usize>,
    l_max: usize,
) -> Result<EmpiricalNoiseStats> {
    if traces.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 traces, got {}",
            traces.len()
        )));
    }
    if l_max < 1 {
        return Err(Error::InsufficientData("l_max must be at least 1".into()));
    }
    let min_len = traces.iter().map(|t| t.z.len()).min().unwrap();
    if window.end > min_len || window.is_empty() {
        return Err(Error::Window(format!(
            "window {window:?} outside trace length {min_len}"
        )));
    }
    if window.start < l_max {
        return Err(Error::Window(format!(
            "window start {} must cover the largest lag {l_max}",
            window.start
        )));
    }

    let t = traces.len();
    let w = window.len();
    // first pass: per-trial noise vectors over [window.start - l_max, window.end)
    let lo = window.start - l_max;
    let mut noise: Vec<Vec<f64>> = Vec::with_capacity(t);
    for trace in traces {
        let mean = mean_sequence(&trace.tx, sym.taps());
        noise.push(
            (lo..window.end)
                .map(|k| trace.z[k] as f64 - mean[k])
                .collect(),
        );
    }
    let at = |trial: usize, k: usize| noise[trial][k - lo];

    // across-trial first and second moments per window index
    let mut mean = vec![0.0; w];
    let mut mean_se = vec![0.0; w];
    let mut var = vec![0.0; w];
    let mut var_se = vec![0.0; w];
    for (i, k) in window.clone().enumerate() {
        let zs: Vec<f64> = traces.iter().map(|tr| tr.z[k] as f64).collect();
        let (m, se) = mean_and_se(&zs);
        mean[i] = m;
        mean_se[i] = se;
        let w2: Vec<f64> = (0..t).map(|tr| at(tr, k) * at(tr, k)).collect();
        let (v, vse) = mean_and_se(&w2);
        var[i] = v;
        var_se[i] = vse;
    }

    let mut cov = vec![vec![0.0; w]; l_max];
    let mut cov_se = vec![vec![0.0; w]; l_max];
    for l in 1..=l_max {
        for (i, k) in window.clone().enumerate() {
            let prods: Vec<f64> = (0..t).map(|tr| at(tr, k) * at(tr, k - l)).collect();
            let (c, se) = mean_and_se(&prods);
            cov[l - 1][i] = c;
            cov_se[l - 1][i] = se;
        }
    }

    // pooled Pearson correlation with jackknife over trials
    let mut rho_pooled = vec![f64::NAN; l_max];
    let mut rho_pooled_se = vec![f64::NAN; l_max];
    let mut rho_trial_mean = vec![f64::NAN; l_max];
    let mut rho_trial_se = vec![f64::NAN; l_max];
    let mut degenerate = false;
    for l in 1..=l_max {
        // per-trial partial sums
        let mut num = vec![0.0; t];
        let mut va = vec![0.0; t];
        let mut vb = vec![0.0; t];
        for tr in 0..t {
            let mut sn = KahanSum::default();
            let mut sa = KahanSum::default();
            let mut sb = KahanSum::default();
            for k in window.clone() {
                sn.add(at(tr, k) * at(tr, k - l));
                sa.add(at(tr, k) * at(tr, k));
                sb.add(at(tr, k - l) * at(tr, k - l));
            }
            num[tr] = sn.value();
            va[tr] = sa.value();
            vb[tr] = sb.value();
        }
        let tot_num: f64 = num.iter().sum();
        let tot_va: f64 = va.iter().sum();
        let tot_vb: f64 = vb.iter().sum();
        if tot_va <= 0.0 || tot_vb <= 0.0 {
            degenerate = true;
            continue;
        }
        rho_pooled[l - 1] = tot_num / (tot_va * tot_vb).sqrt();

        let jack: Vec<f64> = (0..t)
            .map(|tr| {
                let n = tot_num - num[tr];
                let a = tot_va - va[tr];
                let b = tot_vb - vb[tr];
                n / (a * b).sqrt()
            })
            .collect();
        let jack_mean = jack.iter().sum::<f64>() / t as f64;
        let ss: f64 = jack.iter().map(|j| (j - jack_mean).powi(2)).sum();
        rho_pooled_se[l - 1] = ((t - 1) as f64 / t as f64 * ss).sqrt();

        let per_trial: Vec<f64> = (0..t)
            .filter(|&tr| va[tr] > 0.0 && vb[tr] > 0.0)
            .map(|tr| num[tr] / (va[tr] * vb[tr]).sqrt())
            .collect();
        if per_trial.len() >= 2 {
            let (m, se) = mean_and_se(&per_trial);
            rho_trial_mean[l - 1] = m;
            rho_trial_se[l - 1] = se;
        }
    }

    Ok(EmpiricalNoiseStats {
        window,
        mean,
        mean_se,
        var,
        var_se,
        cov,
        cov_se,
        rho_pooled,
        rho_pooled_se,
        rho_trial_mean,
        rho_trial_se,
        n_trials: t,
        degenerate,
    })
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mut acc = KahanSum::default();
    for &x in xs {
        acc.add(x);
    }
    let mean = acc.value() / n;
    let mut ss = KahanSum::default();
    for &x in xs {
        ss.add((x - mean) * (x - mean));
    }
    let var = ss.value() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Two-sample Kolmogorov-Smirnov test.
///
/// Returns `(d, p)` where `d` is the sup distance between empirical CDFs and
/// `p` the asymptotic significance level (Kolmogorov distribution with the
/// finite-sample correction `sqrt(ne) + 0.12 + 0.11/sqrt(ne)`). With
/// integer-valued data the test is conservative, which only strengthens an
/// equivalence check.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("empty KS sample".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = xs[i].min(ys[j]);
        while i < n && xs[i] <= x {
            i += 1;
        }
        while j < m && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Ok((d, kolmogorov_sf(lambda)))
}

/// Kolmogorov survival function `Q(x) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 x^2)`.
fn kolmogorov_sf(x: f64) -> f64 {
    if x < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * x * x).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
