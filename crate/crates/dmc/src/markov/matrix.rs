//! Block-structured column-stochastic transition matrices and state
//! distributions.
//!
//! With states ordered free-then-bound, the one-step matrix has the block
//! form `[[Q, U], [B, R]]`: `Q` transports among free voxels, `B` binds from
//! receiver-adjacent voxels, `U` unbinds back into them, and `R` retains
//! bound molecules. State vectors are column distributions and evolve by
//! left-multiplication, `x[k+1] = P x[k]`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::markov::geometry::Geometry;
use crate::markov::params::StepProbs;

/// Column-sum drift tolerated in assembled matrices.
const ASSEMBLY_TOL: f64 = 1e-12;
/// Column-sum drift tolerated in matrix powers.
pub const POWER_DRIFT_TOL: f64 = 1e-9;

/// Dense column-stochastic transition matrix with block metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n_free: usize,
    n_bound: usize,
    entries: DMatrix<f64>,
}

impl TransitionMatrix {
    /// Wraps a raw matrix after checking shape, entry range, and column sums.
    pub fn from_matrix(entries: DMatrix<f64>, n_free: usize, n_bound: usize) -> Result<Self> {
        let n = n_free + n_bound;
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::Dimension(format!(
                "expected {n}x{n} matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        for j in 0..n {
            let mut sum = 0.0;
            for i in 0..n {
                let p = entries[(i, j)];
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Stability(format!(
                        "entry ({i},{j}) = {p} outside [0,1]"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ASSEMBLY_TOL {
                return Err(Error::Stability(format!(
                    "column {j} sums to {sum}, not 1"
                )));
            }
        }
        Ok(TransitionMatrix {
            n_free,
            n_bound,
            entries,
        })
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn n_bound(&self) -> usize {
        self.n_bound
    }

    /// Total state count `N = N_f + N_b`.
    pub fn n_states(&self) -> usize {
        self.n_free + self.n_bound
    }

    /// Entry `P[i,j] = Pr{next = i | current = j}` (0-based).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// One evolution step `P x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_states();
        if x.len() != n {
            return Err(Error::Dimension(format!(
                "vector length {} does not match {n} states",
                x.len()
            )));
        }
        let mut out = vec![0.0; n];
        // column-major accumulation: out += x[j] * P[:, j]
        for j in 0..n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let col = self.entries.column(j);
            for i in 0..n {
                out[i] += xj * col[i];
            }
        }
        Ok(out)
    }

    /// Maximum absolute column-sum deviation from 1.
    pub fn column_sum_drift(&self) -> f64 {
        let n = self.n_states();
        (0..n)
            .map(|j| (self.entries.column(j).sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `P^n` by binary exponentiation (at most `2*log2(n)` multiplications).
    ///
    /// Stochasticity drift is asserted, not corrected: the result is rejected
    /// if any column sum deviates from 1 by more than `tol`.
    pub fn power(&self, n: u64, tol: f64) -> Result<TransitionMatrix> {
        let dim = self.n_states();
        let mut result = DMatrix::<f64>::identity(dim, dim);
        let mut base = self.entries.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                result = &base * &result;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        let powered = TransitionMatrix {
            n_free: self.n_free,
            n_bound: self.n_bound,
            entries: result,
        };
        let drift = powered.column_sum_drift();
        if drift > tol {
            return Err(Error::Drift {
                drift,
                tol,
                context: format!("P^{n}"),
            });
        }
        Ok(powered)
    }

    /// Writes the matrix row-major, one row per line, entries in scientific
    /// notation with 17 significant digits.
    pub fn dump_plain_text<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        let n = self.n_states();
        for i in 0..n {
            let row: Vec<String> = (0..n)
                .map(|j| format!("{:.16e}", self.entries[(i, j)]))
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Probability distribution over the channel states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution {
    probs: Vec<f64>,
}

impl StateDistribution {
    /// Validates nonnegativity and unit mass (1e-12 absolute).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Degenerate(
                "distribution entries must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Degenerate(format!(
                "distribution mass {sum} differs from 1"
            )));
        }
        Ok(StateDistribution { probs })
    }

    /// Point mass on state `i`.
    pub fn point_mass(i: usize, n: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::Dimension(format!("state {i} out of range {n}")));
        }
        let mut probs = vec![0.0; n];
        probs[i] = 1.0;
        Ok(StateDistribution { probs })
    }

    /// Uniform distribution over `n` states.
    pub fn uniform(n: usize) -> Self {
        StateDistribution {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub(crate) fn from_raw_unchecked(probs: Vec<f64>) -> Self {
        StateDistribution { probs }
    }

    /// L1 mass of the vector.
    pub fn mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Max-norm distance to another distribution.
    pub fn linf_distance(&self, other: &StateDistribution) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Assembles the column-stochastic transition matrix for a geometry and
/// one-step probabilities.
///
/// Free column `j` carries `p_diff` to each neighbor and keeps
/// `1 - |N(j)|*p_diff` (minus `p_bind` when receiver-adjacent) on the
/// diagonal; binding/unbinding flux is split by the geometry's `alpha`/`beta`
/// coefficients; bound columns retain `1 - p_unbind`.
pub fn assemble_transition_matrix(geom: &Geometry, sp: &StepProbs) -> Result<TransitionMatrix> {
    geom.validate()?;
    let n_free = geom.n_free();
    let n = geom.n_states();
    if sp.p_unbind > 1.0 {
        return Err(Error::Stability(format!(
            "p_unbind = {} exceeds 1",
            sp.p_unbind
        )));
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    let rx_pos: std::collections::HashMap<usize, usize> = geom
        .rx_adjacent
        .iter()
        .enumerate()
        .map(|(pos, &s)| (s, pos))
        .collect();

    for j in 0..n_free {
        let degree = geom.neighbors[j].len();
        let mut diag = 1.0 - degree as f64 * sp.p_diff;
        if let Some(&pos) = rx_pos.get(&j) {
            diag -= sp.p_bind;
            for b in 0..geom.n_bound {
                m[(n_free + b, j)] = sp.p_bind * geom.alpha[b][pos];
            }
        }
        if diag < 0.0 {
            return Err(Error::Stability(format!(
                "column {j}: diagonal 1 - {degree}*p_diff{} = {diag} is negative; shrink dt",
                if rx_pos.contains_key(&j) { " - p_bind" } else { "" }
            )));
        }
        m[(j, j)] = diag;
        for &i in &geom.neighbors[j] {
            m[(i, j)] = sp.p_diff;
        }
    }
    for b in 0..geom.n_bound {
        let col = n_free + b;
        m[(col, col)] = 1.0 - sp.p_unbind;
        for (pos, &i) in geom.rx_adjacent.iter().enumerate() {
            m[(i, col)] = sp.p_unbind * geom.beta[pos][b];
        }
    }
    TransitionMatrix::from_matrix(m, n_free, geom.n_bound)
}

/// Evolves a distribution `steps` times: returns `P^steps x0` with mass
/// conserved within 1e-10.
///
/// Short horizons iterate matrix-vector products; long horizons go through
/// binary exponentiation of the matrix.
pub fn evolve(
    x0: &StateDistribution,
    p: &TransitionMatrix,
    steps: u64,
) -> Result<StateDistribution> {
    if x0.len() != p.n_states() {
        return Err(Error::Dimension(format!(
            "distribution length {} does not match {} states",
            x0.len(),
            p.n_states()
        )));
    }
    // crossover where n matvecs (N^2 each) outgrow 2 log2(n) matmuls (N^3 each)
    let crossover = 4 * (p.n_states() as u64) * 64;
    let out = if steps <= crossover.min(100_000) {
        let mut x = x0.probs().to_vec();
        for _ in 0..steps {
            x = p.apply(&x)?;
        }
        x
    } else {
        let pk = p.power(steps, POWER_DRIFT_TOL)?;
        pk.apply(x0.probs())?
    };
    let mass: f64 = out.iter().sum();
    if (mass - 1.0).abs() > 1e-10 {
        return Err(Error::Drift {
            drift: (mass - 1.0).abs(),
            tol: 1e-10,
            context: format!("mass after {steps} steps"),
        });
    }
    Ok(StateDistribution::from_raw_unchecked(out))
}

/// Observation probability `o^T x` for a 0/1 indicator mask.
pub fn observe(x: &StateDistribution, obs_mask: &[u8]) -> Result<f64> {
    if obs_mask.len() != x.len() {
        return Err(Error::Dimension(format!(
            "mask length {} does not match {} states",
            obs_mask.len(),
            x.len()
        )));
    }
    if obs_mask.iter().any(|&m| m > 1) {
        return Err(Error::Degenerate("mask entries must be 0 or 1".into()));
    }
    Ok(x.probs()
        .iter()
        .zip(obs_mask)
        .filter(|(_, &m)| m == 1)
        .map(|(p, _)| p)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::geometry::build_geometry_1d;
    use crate::markov::params::{derive_step_probabilities, ChannelParams};
    use approx::assert_relative_eq;

    pub(crate) fn two_state(p_bind: f64, p_unbind: f64) -> TransitionMatrix {
        let geom = build_geometry_1d(1).unwrap();
        let sp = StepProbs::new(0.0, p_bind, p_unbind).unwrap();
        assemble_transition_matrix(&geom, &sp).unwrap()
    }

    #[test]
    fn default_chain_assembly() {
        let params = ChannelParams::default_microarray();
        let sp = derive_step_probabilities(&params).unwrap();
        let geom = build_geometry_1d(params.n_free).unwrap();
        let p = assemble_transition_matrix(&geom, &sp).unwrap();
        assert_eq!(p.n_states(), 101);
        for j in 0..101 {
            let sum: f64 = (0..101).map(|i| p.get(i, j)).sum();
            assert!((sum - 1.0).abs() <= 1e-15, "column {j} sum {sum}");
        }
        assert_relative_eq!(p.get(100, 100), 1.0 - 2.475e-5, max_relative = 1e-14);
        assert_relative_eq!(p.get(100, 99), 4.95e-3, max_relative = 1e-14);
        assert_relative_eq!(p.get(99, 100), 2.475e-5, max_relative = 1e-14);
    }

    #[test]
    fn zero_probabilities_give_identity() {
        let geom = build_geometry_1d(4).unwrap();
        let sp = StepProbs::new(0.0, 0.0, 0.0).unwrap();
        let p = assemble_transition_matrix(&geom, &sp).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(p.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn two_state_block_form() {
        let p = two_state(0.3, 0.2);
        assert_eq!(p.get(0, 0), 0.7);
        assert_eq!(p.get(1, 0), 0.3);
        assert_eq!(p.get(0, 1), 0.2);
        assert_eq!(p.get(1, 1), 0.8);
    }

    #[test]
    fn unstable_column_is_cited() {
        let geom = build_geometry_1d(3).unwrap();
        let sp = StepProbs::new(0.6, 0.0, 0.0).unwrap();
        let err = assemble_transition_matrix(&geom, &sp).unwrap_err();
        match err {
            Error::Stability(msg) => assert!(msg.contains("column 1"), "{msg}"),
            other => panic!("expected stability error, got {other:?}"),
        }
    }

    #[test]
    fn evolve_zero_steps_is_identity() {
        let p = two_state(0.3, 0.2);
        let x0 = StateDistribution::point_mass(0, 2).unwrap();
        let x = evolve(&x0, &p, 0).unwrap();
        assert_eq!(x.probs(), x0.probs());
    }

    #[test]
    fn evolve_single_step_two_state() {
        let p = two_state(0.3, 0.2);
        let x0 = StateDistribution::point_mass(0, 2).unwrap();
        let x = evolve(&x0, &p, 1).unwrap();
        assert_relative_eq!(x.probs()[0], 0.7, max_relative = 1e-15);
        assert_relative_eq!(x.probs()[1], 0.3, max_relative = 1e-15);
    }

    #[test]
    fn stationary_point_is_fixed() {
        let p = two_state(0.3, 0.2);
        let xeq = StateDistribution::new(vec![0.4, 0.6]).unwrap();
        for steps in [1, 7, 1000] {
            let x = evolve(&xeq, &p, steps).unwrap();
            assert!(x.linf_distance(&xeq) < 1e-12);
        }
    }

    #[test]
    fn observe_masks() {
        let x = StateDistribution::new(vec![0.4, 0.6]).unwrap();
        assert_relative_eq!(observe(&x, &[1, 1]).unwrap(), 1.0, max_relative = 1e-15);
        assert_eq!(observe(&x, &[0, 1]).unwrap(), 0.6);
        let e1 = StateDistribution::point_mass(0, 2).unwrap();
        assert_eq!(observe(&e1, &[0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn power_matches_repeated_multiplication() {
        let p = two_state(0.3, 0.2);
        let p2 = p.power(2, 1e-12).unwrap();
        assert_relative_eq!(p2.get(0, 0), 0.55, max_relative = 1e-14);
        assert_relative_eq!(p2.get(1, 0), 0.45, max_relative = 1e-14);
        assert_relative_eq!(p2.get(0, 1), 0.30, max_relative = 1e-14);
        assert_relative_eq!(p2.get(1, 1), 0.70, max_relative = 1e-14);
    }

    #[test]
    fn dump_has_17_significant_digits() {
        let p = two_state(0.3, 0.2);
        let mut buf = Vec::new();
        p.dump_plain_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().count() == 2);
        assert!(text.contains("6.9999999999999996e-1") || text.contains("7.0000000000000000e-1"));
    }

    #[test]
    fn grid_diagonals_follow_degree_rule_exactly() {
        use crate::markov::geometry::{build_geometry_grid2d, Edge};
        let geom = build_geometry_grid2d(4, 3, Edge::Right).unwrap();
        let sp = StepProbs::new(0.125, 0.05, 0.01).unwrap();
        let p = assemble_transition_matrix(&geom, &sp).unwrap();
        for j in 0..geom.n_free() {
            let degree = geom.neighbors[j].len() as f64;
            let mut expected = 1.0 - degree * sp.p_diff;
            if geom.rx_adjacent.contains(&j) {
                expected -= sp.p_bind;
            }
            assert_eq!(p.get(j, j), expected, "column {j}");
        }
    }

    #[test]
    fn repeated_squaring_drift_stays_below_1e9th() {
        let params = ChannelParams::default_microarray();
        let sp = derive_step_probabilities(&params).unwrap();
        let geom = build_geometry_1d(params.n_free).unwrap();
        let mut p = assemble_transition_matrix(&geom, &sp).unwrap();
        // climb to P^(2^20), asserting drift at every level
        for level in 1..=20u32 {
            p = p.power(2, 1e-9).unwrap();
            assert!(
                p.column_sum_drift() <= 1e-9,
                "drift {} at 2^{level}",
                p.column_sum_drift()
            );
        }
    }

    #[test]
    fn mass_conserved_across_horizons() {
        let params = ChannelParams::default_microarray();
        let sp = derive_step_probabilities(&params).unwrap();
        let geom = build_geometry_1d(params.n_free).unwrap();
        let p = assemble_transition_matrix(&geom, &sp).unwrap();
        let x0 = StateDistribution::point_mass(0, 101).unwrap();
        for steps in [1u64, 17, 1000, 250_000] {
            let x = evolve(&x0, &p, steps).unwrap();
            assert!((x.mass() - 1.0).abs() <= 1e-10, "steps {steps}");
        }
    }

    #[test]
    fn stationary_point_survives_a_million_steps() {
        let params = ChannelParams::default_microarray();
        let sp = derive_step_probabilities(&params).unwrap();
        let geom = build_geometry_1d(params.n_free).unwrap();
        let p = assemble_transition_matrix(&geom, &sp).unwrap();
        let x_eq = crate::markov::analysis::stationary_distribution(&p).unwrap();
        let x = evolve(&x_eq, &p, 1_000_000).unwrap();
        assert!(x.linf_distance(&x_eq) <= 1e-9);
    }
}
