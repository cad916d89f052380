//! Voxel geometries: adjacency, receiver-adjacent sets, and bind/unbind
//! splitting coefficients.
//!
//! Geometry is an explicit adjacency structure rather than implicit grid
//! indexing, so chains, lattices, and irregular reflecting boundaries all
//! share one transition-matrix assembly path. Reflecting boundaries simply
//! shrink a voxel's neighbor list.

use crate::error::{Error, Result};

/// Edge of a 2D lattice hosting the reactive boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Left,
    Right,
    Top,
    Bottom,
}

impl std::str::FromStr for Edge {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Edge::Left),
            "right" => Ok(Edge::Right),
            "top" => Ok(Edge::Top),
            "bottom" => Ok(Edge::Bottom),
            other => Err(Error::Config(format!("invalid edge id `{other}`"))),
        }
    }
}

/// Discrete channel geometry: free-state adjacency plus the coupling of
/// receiver-adjacent voxels to bound states.
///
/// Free states are indexed `0..n_free`; bound state `b` occupies matrix
/// index `n_free + b`. `alpha[b][j]` splits binding flux from the `j`-th
/// receiver-adjacent voxel among bound states (column sums over `b` equal 1);
/// `beta[j][b]` splits unbinding flux from bound state `b` over
/// receiver-adjacent voxels (sums over `j` equal 1).
#[derive(Debug, Clone)]
pub struct Geometry {
    /// Neighbor list per free state; the relation is symmetric.
    pub neighbors: Vec<Vec<usize>>,
    /// Receiver-adjacent free states (sorted, deduplicated).
    pub rx_adjacent: Vec<usize>,
    /// Number of bound states.
    pub n_bound: usize,
    /// Binding splitting coefficients, `alpha[b][j]` for bound state `b` and
    /// the `j`-th entry of `rx_adjacent`.
    pub alpha: Vec<Vec<f64>>,
    /// Unbinding splitting coefficients, `beta[j][b]`.
    pub beta: Vec<Vec<f64>>,
}

impl Geometry {
    pub fn n_free(&self) -> usize {
        self.neighbors.len()
    }

    pub fn n_states(&self) -> usize {
        self.n_free() + self.n_bound
    }

    /// Validates symmetry of the neighbor relation and normalization of the
    /// splitting coefficients.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_free();
        for (j, nbrs) in self.neighbors.iter().enumerate() {
            for &i in nbrs {
                if i >= n {
                    return Err(Error::Dimension(format!(
                        "neighbor {i} of state {j} out of range"
                    )));
                }
                if !self.neighbors[i].contains(&j) {
                    return Err(Error::Dimension(format!(
                        "neighbor relation not symmetric between {i} and {j}"
                    )));
                }
            }
        }
        for &j in &self.rx_adjacent {
            if j >= n {
                return Err(Error::Dimension(format!(
                    "rx-adjacent state {j} out of range"
                )));
            }
        }
        let n_rx = self.rx_adjacent.len();
        if self.alpha.len() != self.n_bound || self.beta.len() != n_rx {
            return Err(Error::Dimension(
                "splitting coefficient shapes do not match geometry".into(),
            ));
        }
        for j in 0..n_rx {
            let col: f64 = (0..self.n_bound).map(|b| self.alpha[b][j]).sum();
            if (col - 1.0).abs() > 1e-12 || self.alpha.iter().any(|row| row[j] < 0.0) {
                return Err(Error::Stability(format!(
                    "alpha column {j} must be nonnegative and sum to 1 (got {col})"
                )));
            }
        }
        for b in 0..self.n_bound {
            let row: f64 = (0..n_rx).map(|j| self.beta[j][b]).sum();
            if (row - 1.0).abs() > 1e-12 || self.beta.iter().any(|r| r[b] < 0.0) {
                return Err(Error::Stability(format!(
                    "beta coefficients for bound state {b} must be nonnegative and sum to 1 (got {row})"
                )));
            }
        }
        Ok(())
    }

    fn uniform_splitting(rx_adjacent: &[usize], n_bound: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n_rx = rx_adjacent.len();
        let alpha = vec![vec![1.0 / n_bound as f64; n_rx]; n_bound];
        let beta = vec![vec![1.0 / n_rx as f64; n_bound]; n_rx];
        (alpha, beta)
    }
}

/// Nearest-neighbor chain of `n_free` voxels with the receiver at the far
/// end: the last free state is receiver-adjacent and couples to a single
/// bound state.
pub fn build_geometry_1d(n_free: usize) -> Result<Geometry> {
    if n_free < 1 {
        return Err(Error::Dimension("chain needs at least one free state".into()));
    }
    let neighbors: Vec<Vec<usize>> = (0..n_free)
        .map(|j| {
            let mut nbrs = Vec::with_capacity(2);
            if j > 0 {
                nbrs.push(j - 1);
            }
            if j + 1 < n_free {
                nbrs.push(j + 1);
            }
            nbrs
        })
        .collect();
    let rx_adjacent = vec![n_free - 1];
    let (alpha, beta) = Geometry::uniform_splitting(&rx_adjacent, 1);
    let geom = Geometry {
        neighbors,
        rx_adjacent,
        n_bound: 1,
        alpha,
        beta,
    };
    geom.validate()?;
    Ok(geom)
}

/// 4-neighbor `nx` x `ny` lattice with reflecting boundaries; voxels along
/// `rx_edge` are receiver-adjacent and couple to a single bound state with
/// uniform splitting. Voxel `(ix, iy)` maps to state `iy*nx + ix`.
pub fn build_geometry_grid2d(nx: usize, ny: usize, rx_edge: Edge) -> Result<Geometry> {
    if nx < 1 || ny < 1 {
        return Err(Error::Dimension("grid needs at least one voxel per axis".into()));
    }
    let idx = |ix: usize, iy: usize| iy * nx + ix;
    let mut neighbors = vec![Vec::with_capacity(4); nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let mut nbrs = Vec::with_capacity(4);
            if ix > 0 {
                nbrs.push(idx(ix - 1, iy));
            }
            if ix + 1 < nx {
                nbrs.push(idx(ix + 1, iy));
            }
            if iy > 0 {
                nbrs.push(idx(ix, iy - 1));
            }
            if iy + 1 < ny {
                nbrs.push(idx(ix, iy + 1));
            }
            neighbors[idx(ix, iy)] = nbrs;
        }
    }
    let rx_adjacent: Vec<usize> = match rx_edge {
        Edge::Left => (0..ny).map(|iy| idx(0, iy)).collect(),
        Edge::Right => (0..ny).map(|iy| idx(nx - 1, iy)).collect(),
        Edge::Top => (0..nx).map(|ix| idx(ix, 0)).collect(),
        Edge::Bottom => (0..nx).map(|ix| idx(ix, ny - 1)).collect(),
    };
    let mut rx_adjacent = rx_adjacent;
    rx_adjacent.sort_unstable();
    rx_adjacent.dedup();
    let (alpha, beta) = Geometry::uniform_splitting(&rx_adjacent, 1);
    let geom = Geometry {
        neighbors,
        rx_adjacent,
        n_bound: 1,
        alpha,
        beta,
    };
    geom.validate()?;
    Ok(geom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_adjacency() {
        let g = build_geometry_1d(3).unwrap();
        assert_eq!(g.neighbors[0], vec![1]);
        assert_eq!(g.neighbors[1], vec![0, 2]);
        assert_eq!(g.neighbors[2], vec![1]);
        assert_eq!(g.rx_adjacent, vec![2]);
        assert_eq!(g.n_bound, 1);
        assert_eq!(g.alpha, vec![vec![1.0]]);
        assert_eq!(g.beta, vec![vec![1.0]]);
    }

    #[test]
    fn degenerate_single_voxel_chain() {
        let g = build_geometry_1d(1).unwrap();
        assert!(g.neighbors[0].is_empty());
        assert_eq!(g.rx_adjacent, vec![0]);
    }

    #[test]
    fn long_chain_degrees() {
        let g = build_geometry_1d(100).unwrap();
        assert_eq!(g.neighbors[0].len(), 1);
        assert_eq!(g.neighbors[99].len(), 1);
        assert!(g.neighbors[1..99].iter().all(|n| n.len() == 2));
    }

    #[test]
    fn grid_3x3_degrees() {
        let g = build_geometry_grid2d(3, 3, Edge::Right).unwrap();
        // center
        assert_eq!(g.neighbors[4].len(), 4);
        // corners
        for c in [0, 2, 6, 8] {
            assert_eq!(g.neighbors[c].len(), 2);
        }
        // edge midpoints
        for e in [1, 3, 5, 7] {
            assert_eq!(g.neighbors[e].len(), 3);
        }
    }

    #[test]
    fn row_grid_collapses_to_chain() {
        let chain = build_geometry_1d(5).unwrap();
        let grid = build_geometry_grid2d(5, 1, Edge::Right).unwrap();
        assert_eq!(chain.neighbors, grid.neighbors);
        assert_eq!(chain.rx_adjacent, grid.rx_adjacent);
    }

    #[test]
    fn grid_2x2_right_edge() {
        let g = build_geometry_grid2d(2, 2, Edge::Right).unwrap();
        assert_eq!(g.rx_adjacent, vec![1, 3]);
        assert_eq!(g.neighbors[1].len(), 2);
        assert_eq!(g.neighbors[3].len(), 2);
        // uniform unbinding split over the two rx voxels
        assert_eq!(g.beta, vec![vec![0.5], vec![0.5]]);
    }

    #[test]
    fn symmetry_is_checked() {
        let mut g = build_geometry_1d(3).unwrap();
        g.neighbors[0].push(2); // break symmetry
        assert!(g.validate().is_err());
    }
}
