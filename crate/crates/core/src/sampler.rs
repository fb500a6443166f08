//! Bernoulli sampling of the token graph from scaled edge probabilities.
//!
//! The uniform stream is counter-based: the draw for the unordered pair
//! `(i, j)`, `i < j`, of an `l`-node graph is the 64-bit output of ChaCha8
//! (`rand_chacha` 0.9, key from `ChaCha8Rng::seed_from_u64(seed)`, stream 0)
//! at word position `2k`, where `k = i·l − i(i+1)/2 + (j − i − 1)` is the
//! row-major index of the pair in the strict upper triangle. The word pair is
//! mapped to `[0, 1)` as `(x >> 11) · 2^-53`. Every draw is therefore a pure
//! function of `(seed, l, i, j)`, independent of thread scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::patterns::ProbabilityMatrix;

/// Row-major index of the pair `(i, j)`, `i < j`, in the strict upper triangle.
pub fn pair_index(l: usize, i: usize, j: usize) -> u64 {
    debug_assert!(i < j && j < l);
    let (l, i, j) = (l as u64, i as u64, j as u64);
    i * l - i * (i + 1) / 2 + (j - i - 1)
}

#[inline]
fn to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Seekable uniform stream over pair indices.
#[derive(Clone)]
pub struct PairStream {
    rng: ChaCha8Rng,
}

impl PairStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seek(&mut self, index: u64) {
        self.rng.set_word_pos(u128::from(index) * 2);
    }

    pub fn next_uniform(&mut self) -> f64 {
        to_unit(self.rng.next_u64())
    }

    /// Uniform draw for a single pair index.
    pub fn at(&mut self, index: u64) -> f64 {
        self.seek(index);
        self.next_uniform()
    }
}

/// Undirected simple graph over token positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseGraph {
    pub num_nodes: usize,
    /// Canonical `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    pub seed: u64,
}

impl SparseGraph {
    /// Canonicalizes, sorts and deduplicates; self-loops are dropped.
    pub fn from_edges(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        seed: u64,
    ) -> Self {
        let mut edges: Vec<(usize, usize)> = edges
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        Self {
            num_nodes,
            edges,
            seed,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.binary_search(&key).is_ok()
    }
}

/// One uniform draw per unordered pair; the edge is kept iff `u < P[i][j]`.
pub fn sample_adjacency(p_scaled: &ProbabilityMatrix, seed: u64) -> SparseGraph {
    let l = p_scaled.size();
    let base = PairStream::new(seed);
    let rows: Vec<Vec<(usize, usize)>> = (0..l.saturating_sub(1))
        .into_par_iter()
        .map(|i| {
            let mut stream = base.clone();
            stream.seek(pair_index(l, i, i + 1));
            let row = p_scaled.row(i);
            (i + 1..l)
                .filter_map(|j| (stream.next_uniform() < row[j]).then_some((i, j)))
                .collect()
        })
        .collect();
    SparseGraph {
        num_nodes: l,
        edges: rows.into_iter().flatten().collect(),
        seed,
    }
}

pub fn degrees(g: &SparseGraph) -> Vec<usize> {
    let mut deg = vec![0; g.num_nodes];
    for &(a, b) in &g.edges {
        deg[a] += 1;
        deg[b] += 1;
    }
    deg
}

/// Fraction of absent unordered pairs, `1 − |E| / (l(l−1)/2)`.
pub fn graph_sparsity(g: &SparseGraph) -> f64 {
    let pairs = g.num_nodes * g.num_nodes.saturating_sub(1) / 2;
    if pairs == 0 {
        return 1.0;
    }
    1.0 - g.edges.len() as f64 / pairs as f64
}

/// Row of the graph statistics CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphStats {
    pub seed: u64,
    pub sparsity: f64,
    pub num_edges: usize,
    pub max_degree: usize,
    pub mean_degree: f64,
}

pub fn graph_stats(g: &SparseGraph) -> GraphStats {
    let deg = degrees(g);
    GraphStats {
        seed: g.seed,
        sparsity: graph_sparsity(g),
        num_edges: g.num_edges(),
        max_degree: deg.iter().copied().max().unwrap_or(0),
        mean_degree: if deg.is_empty() {
            0.0
        } else {
            deg.iter().sum::<usize>() as f64 / deg.len() as f64
        },
    }
}
