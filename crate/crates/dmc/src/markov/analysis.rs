//! Stationary distributions, spectral relaxation summaries, and convergence
//! diagnostics for ergodic channels.
//!
//! The slowest transient of an ergodic chain is set by the second-largest
//! eigenvalue modulus (SLEM) `|lambda_1|` of the transition matrix. The
//! characteristic time constant is `tau = dt/(1 - |lambda_1|)` and the
//! settling time `t_eq = 5*tau` is the practical effective-memory measure.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::markov::matrix::{StateDistribution, TransitionMatrix, POWER_DRIFT_TOL};

/// Residual target for stationary solves.
pub const STATIONARY_TOL: f64 = 1e-10;
/// Iteration cap for stationary solves, in plain-step equivalents.
pub const STATIONARY_MAX_STEPS: u64 = 10_000_000;

/// Spectral relaxation summary of an ergodic transition matrix.
#[derive(Debug, Clone)]
pub struct SpectralSummary {
    /// Secondth-largest eigenvalue modulus, in [0,1).
    pub slem: f64,
    /// Characteristic time constant `dt/(1 - slem)` (s).
    pub tau: f64,
    /// Settling time `5*tau` (s).
    pub t_eq: f64,
    /// Stationary distribution with residual `||P x - x||_inf <= 1e-10`.
    pub x_eq: StateDistribution,
}

/// Stationary distribution by damped power iteration with doubling
/// acceleration.
///
/// The iterate is propelled by successive squarings of the lazy chain
/// `(P + I)/2` (same fixed point, guaranteed aperiodic); the residual is
/// always measured against the original `P`. Fails if the residual target is
/// not met within `STATIONARY_MAX_STEPS` plain-step equivalents.
pub fn stationary_distribution(p: &TransitionMatrix) -> Result<StateDistribution> {
    stationary_distribution_with(p, STATIONARY_TOL, STATIONARY_MAX_STEPS)
}

/// As [`stationary_distribution`] with explicit residual tolerance and step
/// budget.
pub fn stationary_distribution_with(
    p: &TransitionMatrix,
    tol: f64,
    max_steps: u64,
) -> Result<StateDistribution> {
    // Iterating past `tol` down to the floating-point floor is nearly free
    // under doubling and shrinks the true error to residual/(1 - slem).
    const RESIDUAL_FLOOR: f64 = 1e-14;

    let n = p.n_states();
    let half = 0.5 * p.matrix() + 0.5 * DMatrix::<f64>::identity(n, n);
    let mut accel = half;
    let mut stride: u64 = 1;
    let mut steps: u64 = 0;
    let mut x = vec![1.0 / n as f64; n];
    let mut best: Option<(Vec<f64>, f64)> = None;

    loop {
        let mut next = &accel * DMatrix::from_column_slice(n, 1, &x);
        let mass: f64 = next.iter().sum();
        next /= mass;
        x.copy_from_slice(next.as_slice());
        steps = steps.saturating_add(stride);

        let px = p.apply(&x)?;
        let residual = px
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let stalled = best
            .as_ref()
            .map(|(_, r)| residual > 0.5 * r)
            .unwrap_or(false);
        if best.as_ref().map(|(_, r)| residual < *r).unwrap_or(true) {
            best = Some((x.clone(), residual));
        }
        let best_residual = best.as_ref().map(|(_, r)| *r).unwrap();
        if best_residual <= RESIDUAL_FLOOR || (stalled && best_residual <= tol) {
            return finalize_distribution(best.unwrap().0);
        }
        if steps >= max_steps {
            return if best_residual <= tol {
                finalize_distribution(best.unwrap().0)
            } else {
                Err(Error::Convergence(format!(
                    "stationary residual {best_residual:.3e} above {tol:.1e} after {steps} step-equivalents"
                )))
            };
        }
        accel = &accel * &accel;
        // keep the internal accelerator column-stochastic: squaring compounds
        // column-sum rounding exponentially, which would floor the residual
        // near 1e-9 for slowly mixing chains
        for mut col in accel.column_iter_mut() {
            let sum = col.iter().sum::<f64>();
            col /= sum;
        }
        stride = stride.saturating_mul(2);
    }
}

fn finalize_distribution(mut x: Vec<f64>) -> Result<StateDistribution> {
    for v in &mut x {
        if *v < 0.0 {
            if *v < -1e-12 {
                return Err(Error::Convergence(format!(
                    "stationary iterate has negative component {v:.3e}"
                )));
            }
            *v = 0.0;
        }
    }
    let mass: f64 = x.iter().sum();
    for v in &mut x {
        *v /= mass;
    }
    StateDistribution::new(x)
}

/// Spectral summary: SLEM, `tau`, `t_eq`, and the stationary distribution.
///
/// Matrices up to 2000 states use a full (real Schur) eigendecomposition;
/// larger ones fall back to power iteration on the matrix deflated by its
/// stationary eigenvector. Complex eigenvalues enter through their moduli.
pub fn spectral_summary(p: &TransitionMatrix, dt: f64) -> Result<SpectralSummary> {
    let x_eq = stationary_distribution(p)?;
    let slem = if p.n_states() <= 2000 {
        slem_by_eigendecomposition(p)?
    } else {
        slem_by_deflated_power_iteration(p, &x_eq, 1e-8)?
    };
    if !(0.0..1.0).contains(&slem) {
        return Err(Error::Degenerate(format!(
            "SLEM {slem} outside [0,1); chain is not ergodic"
        )));
    }
    let tau = dt / (1.0 - slem);
    Ok(SpectralSummary {
        slem,
        tau,
        t_eq: 5.0 * tau,
        x_eq,
    })
}

/// Second-largest eigenvalue modulus alone, without solving for the
/// stationary distribution. Restricted to the eigendecomposition path, so
/// it stays cheap inside calibration loops.
pub fn slem(p: &TransitionMatrix) -> Result<f64> {
    if p.n_states() > 2000 {
        return Err(Error::Dimension(
            "direct SLEM is limited to 2000 states; use spectral_summary".into(),
        ));
    }
    slem_by_eigendecomposition(p)
}

fn slem_by_eigendecomposition(p: &TransitionMatrix) -> Result<f64> {
    let schur = nalgebra::linalg::Schur::try_new(p.matrix().clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Convergence("Schur eigenvalue iteration failed".into()))?;
    let eigs = schur.complex_eigenvalues();
    // Drop the single Perron eigenvalue (closest to 1); the SLEM is the
    // largest modulus among the rest.
    let mut perron = 0usize;
    let mut best = f64::INFINITY;
    for (i, ev) in eigs.iter().enumerate() {
        let d = (ev - nalgebra::Complex::new(1.0, 0.0)).norm();
        if d < best {
            best = d;
            perron = i;
        }
    }
    if best > 1e-8 {
        return Err(Error::Degenerate(format!(
            "no eigenvalue near 1 (closest at distance {best:.3e}); matrix is not stochastic"
        )));
    }
    Ok(eigs
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != perron)
        .map(|(_, ev)| ev.norm())
        .fold(0.0, f64::max))
}

/// Power iteration on `P' = P - x_eq 1^T`, which removes the unit eigenvalue
/// while leaving every other eigenpair intact. The modulus estimate is a
/// geometric mean of growth factors, which also converges for complex
/// dominant pairs.
fn slem_by_deflated_power_iteration(
    p: &TransitionMatrix,
    x_eq: &StateDistribution,
    rel_tol: f64,
) -> Result<f64> {
    let n = p.n_states();
    let mut v: Vec<f64> = (0..n)
        .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    let shift: f64 = v.iter().sum::<f64>() / n as f64;
    for x in &mut v {
        *x -= shift;
    }
    normalize_l2(&mut v)?;

    const BLOCK: usize = 64;
    let mut prev_estimate = f64::NAN;
    for _round in 0..4096 {
        let mut log_growth = 0.0;
        for _ in 0..BLOCK {
            let mut w = p.apply(&v)?;
            let vsum: f64 = v.iter().sum();
            for (wi, xi) in w.iter_mut().zip(x_eq.probs()) {
                *wi -= vsum * xi;
            }
            let norm = l2_norm(&w);
            if norm == 0.0 {
                return Ok(0.0);
            }
            log_growth += norm.ln();
            for x in &mut w {
                *x /= norm;
            }
            v = w;
        }
        let estimate = (log_growth / BLOCK as f64).exp();
        if prev_estimate.is_finite()
            && (estimate - prev_estimate).abs() <= rel_tol * estimate.abs()
        {
            return Ok(estimate);
        }
        prev_estimate = estimate;
    }
    Err(Error::Convergence(
        "deflated power iteration did not converge".into(),
    ))
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize_l2(v: &mut [f64]) -> Result<()> {
    let norm = l2_norm(v);
    if norm == 0.0 {
        return Err(Error::Degenerate("zero start vector".into()));
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Ok(())
}

/// Convergence-rate report from [`verify_convergence_rate`].
#[derive(Debug, Clone)]
pub struct RateReport {
    /// `(n, ||P^n x0 - x_eq||_inf)` samples on a geometric step grid.
    pub samples: Vec<(u64, f64)>,
    /// Least-squares decay rate of the tail, per unit time (1/s).
    pub fitted_rate: f64,
    /// Characteristic time constant used for the contract check (s).
    pub tau: f64,
    /// Whether `fitted_rate >= 0.9 / tau`.
    pub passes: bool,
}

/// Measures `e(n) = ||P^n x0 - x_eq||_inf` on a geometric grid up to
/// `horizon` and fits the tail decay rate.
///
/// The contract asserts the fitted rate is at least 90% of `1/tau`. Fails
/// with a degenerate error when the error floor is reached before a tail
/// window exists (e.g. `x0 = x_eq`).
pub fn verify_convergence_rate(
    p: &TransitionMatrix,
    dt: f64,
    x0: &StateDistribution,
    horizon: u64,
) -> Result<RateReport> {
    if horizon < 4 {
        return Err(Error::Degenerate("horizon too short for a tail fit".into()));
    }
    let summary = spectral_summary(p, dt)?;
    let x_eq = &summary.x_eq;

    // geometric grid of distinct step counts
    let points = 48usize;
    let mut grid: Vec<u64> = (0..points)
        .map(|i| {
            let f = (horizon as f64).powf(i as f64 / (points - 1) as f64);
            f.round() as u64
        })
        .collect();
    grid.sort_unstable();
    grid.dedup();

    // squarings P^(2^k); evaluation walks each grid point's binary digits
    let max_bit = 64 - horizon.leading_zeros() as usize;
    let mut squarings = Vec::with_capacity(max_bit + 1);
    squarings.push(p.clone());
    for k in 0..max_bit {
        let next = squarings[k].power(2, POWER_DRIFT_TOL)?;
        squarings.push(next);
    }

    // above the stationary-solve noise, so samples are genuine decay
    const FLOOR: f64 = 1e-12;
    let mut samples = Vec::with_capacity(grid.len());
    for &n in &grid {
        let mut x = x0.clone();
        let mut bits = n;
        let mut k = 0usize;
        while bits > 0 {
            if bits & 1 == 1 {
                x = StateDistribution::from_raw_unchecked(squarings[k].apply(x.probs())?);
            }
            bits >>= 1;
            k += 1;
        }
        samples.push((n, x.linf_distance(x_eq)));
    }

    let valid: Vec<(u64, f64)> = samples
        .iter()
        .copied()
        .filter(|&(_, e)| e > FLOOR)
        .collect();
    if valid.len() < 4 {
        return Err(Error::Degenerate(format!(
            "only {} samples above the numerical floor; no tail window",
            valid.len()
        )));
    }
    // tail = last three octaves of usable samples
    let n_last = valid.last().unwrap().0;
    let tail: Vec<(f64, f64)> = valid
        .iter()
        .filter(|&&(n, _)| n * 8 >= n_last && n > 0)
        .map(|&(n, e)| (n as f64 * dt, e.ln()))
        .collect();
    if tail.len() < 4 {
        return Err(Error::Degenerate(
            "fewer than 4 tail samples above the numerical floor".into(),
        ));
    }
    let fitted_rate = -least_squares_slope(&tail);
    let passes = fitted_rate >= 0.9 / summary.tau;
    Ok(RateReport {
        samples,
        fitted_rate,
        tau: summary.tau,
        passes,
    })
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    sxy / sxx
}
