//! Random k-regular interaction graphs.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Restarts of the pairing model before giving up.
pub const MAX_RESTARTS: usize = 10_000;

/// Simple undirected graph in which every vertex has the same degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegularGraph {
    n: usize,
    k: usize,
    adjacency: Vec<u8>,
}

impl RegularGraph {
    /// Builds a graph from an edge list, checking regularity and simplicity.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![0u8; n * n];
        for &(l, m) in edges {
            if l >= n || m >= n {
                return Err(Error::param("edges", format!("vertex out of range in ({l}, {m})")));
            }
            if l == m {
                return Err(Error::param("edges", format!("self-loop at {l}")));
            }
            if adjacency[l * n + m] != 0 {
                return Err(Error::param("edges", format!("duplicate edge ({l}, {m})")));
            }
            adjacency[l * n + m] = 1;
            adjacency[m * n + l] = 1;
        }
        let k = if n == 0 { 0 } else { adjacency[..n].iter().map(|&a| a as usize).sum() };
        for l in 0..n {
            let d: usize = adjacency[l * n..(l + 1) * n].iter().map(|&a| a as usize).sum();
            if d != k {
                return Err(Error::param("edges", format!("vertex {l} has degree {d}, expected {k}")));
            }
        }
        Ok(Self { n, k, adjacency })
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn adjacent(&self, l: usize, m: usize) -> bool {
        self.adjacency[l * self.n + m] != 0
    }

    /// Row-major adjacency matrix with entries in {0, 1}.
    pub fn adjacency(&self) -> Vec<Vec<u8>> {
        self.adjacency.chunks(self.n).map(<[u8]>::to_vec).collect()
    }

    /// Undirected edges as `(l, m)` with `l < m`, in lexicographic order.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.n * self.k / 2);
        for l in 0..self.n {
            for m in (l + 1)..self.n {
                if self.adjacent(l, m) {
                    edges.push((l, m));
                }
            }
        }
        edges
    }

    /// Text dump: a comment header then one `l m` pair per line.
    pub fn to_edge_dump(&self, seed: u64) -> String {
        let mut out = format!("# n={} k={} seed={}\n", self.n, self.k, seed);
        for (l, m) in self.edge_list() {
            let _ = writeln!(out, "{l} {m}");
        }
        out
    }
}

/// Samples a simple k-regular graph on `n` vertices with the pairing
/// (configuration) model, restarting the whole pairing whenever it produces a
/// self-loop or a repeated edge.
pub fn sample_regular_graph(n: usize, k: usize, seed: u64) -> Result<RegularGraph> {
    if k == 0 || k >= n {
        return Err(Error::param("k", format!("need 0 < k < n, got n={n}, k={k}")));
    }
    if !(n * k).is_multiple_of(2) {
        return Err(Error::param("k", format!("n*k must be even, got n={n}, k={k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, k)).collect();
    let mut adjacency = vec![0u8; n * n];

    'restart: for _ in 0..MAX_RESTARTS {
        stubs.shuffle(&mut rng);
        adjacency.iter_mut().for_each(|a| *a = 0);
        for pair in stubs.chunks_exact(2) {
            let (l, m) = (pair[0], pair[1]);
            if l == m || adjacency[l * n + m] != 0 {
                continue 'restart;
            }
            adjacency[l * n + m] = 1;
            adjacency[m * n + l] = 1;
        }
        return Ok(RegularGraph { n, k, adjacency });
    }
    Err(Error::GraphSampling { n, k, attempts: MAX_RESTARTS })
}
