use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary, symmetric lattice adjacency with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyMatrix {
    n_sites: usize,
    entries: Vec<u8>,
    allow_isolated: bool,
}

impl AdjacencyMatrix {
    /// Validates a dense 0/1 matrix. Isolated sites are rejected unless
    /// `allow_isolated` is set.
    pub fn from_dense(m: &DMatrix<f64>, allow_isolated: bool) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::InvalidAdjacency(format!("matrix must be square and non-empty, got {}x{}", m.nrows(), m.ncols())));
        }
        let mut entries = vec![0u8; n * n];
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::InvalidAdjacency(format!("entry ({i},{j}) = {v} is not binary")));
                }
                if i == j && v != 0.0 {
                    return Err(Error::InvalidAdjacency(format!("non-zero diagonal at site {i}")));
                }
                if m[(j, i)] != v {
                    return Err(Error::InvalidAdjacency(format!("asymmetric entry ({i},{j})")));
                }
                entries[i * n + j] = v as u8;
            }
        }
        let adj = AdjacencyMatrix { n_sites: n, entries, allow_isolated };
        adj.check_isolated()?;
        Ok(adj)
    }

    /// Builds from an undirected edge list over `n` sites. Duplicate and
    /// reversed edges collapse to one.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], allow_isolated: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidAdjacency("no sites".into()));
        }
        let mut entries = vec![0u8; n * n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidAdjacency(format!("edge ({a},{b}) out of range for {n} sites")));
            }
            if a == b {
                return Err(Error::InvalidAdjacency(format!("self-loop at site {a}")));
            }
            entries[a * n + b] = 1;
            entries[b * n + a] = 1;
        }
        let adj = AdjacencyMatrix { n_sites: n, entries, allow_isolated };
        adj.check_isolated()?;
        Ok(adj)
    }

    /// Rook-contiguity adjacency of a `rows x cols` grid, sites numbered
    /// row-major.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    edges.push((i, i + 1));
                }
                if r + 1 < rows {
                    edges.push((i, i + cols));
                }
            }
        }
        Self::from_edges(rows * cols, &edges, rows * cols == 1)
    }

    fn check_isolated(&self) -> Result<()> {
        if self.allow_isolated {
            return Ok(());
        }
        for i in 0..self.n_sites {
            if self.degree(i) == 0 {
                return Err(Error::InvalidAdjacency(format!("site {i} has no neighbours")));
            }
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn allows_isolated(&self) -> bool {
        self.allow_isolated
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.entries[i * self.n_sites + j] == 1
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.n_sites).filter(|&j| self.get(i, j)).count()
    }

    pub fn neighbours(&self, i: usize) -> Vec<usize> {
        (0..self.n_sites).filter(|&j| self.get(i, j)).collect()
    }

    /// Edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n_sites;
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.get(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n_sites;
        DMatrix::from_fn(n, n, |i, j| if self.get(i, j) { 1.0 } else { 0.0 })
    }

    /// Strictly upper-triangular part `W^U`.
    pub fn upper(&self) -> DMatrix<f64> {
        let n = self.n_sites;
        DMatrix::from_fn(n, n, |i, j| if j > i && self.get(i, j) { 1.0 } else { 0.0 })
    }

    /// Strictly lower-triangular part `W^L`.
    pub fn lower(&self) -> DMatrix<f64> {
        self.upper().transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_are_deduplicated() {
        let adj = AdjacencyMatrix::from_edges(3, &[(0, 1), (1, 0), (1, 2), (0, 1)], false).unwrap();
        assert_eq!(adj.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(adj.degree(1), 2);
    }

    #[test]
    fn rejects_asymmetry_and_diagonal() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(AdjacencyMatrix::from_dense(&asym, true).is_err());
        let diag = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        assert!(AdjacencyMatrix::from_dense(&diag, true).is_err());
    }

    #[test]
    fn isolated_site_needs_flag() {
        assert!(AdjacencyMatrix::from_edges(3, &[(0, 1)], false).is_err());
        assert!(AdjacencyMatrix::from_edges(3, &[(0, 1)], true).is_ok());
    }

    #[test]
    fn grid_3x3_has_12_edges() {
        let adj = AdjacencyMatrix::grid(3, 3).unwrap();
        assert_eq!(adj.edges().len(), 12);
        assert_eq!(adj.degree(4), 4);
        assert_eq!(adj.upper() + adj.lower(), adj.to_dense());
    }
}
