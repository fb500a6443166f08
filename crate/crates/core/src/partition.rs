//! Greedy friend-circle extraction: repeatedly take the highest-degree node
//! and its neighbours as a subgraph, then delete either the member nodes
//! (node level) or the induced edges among members (edge level).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patterns::ProbabilityMatrix;
use crate::sampler::SparseGraph;

pub const DEFAULT_MAX_SUBGRAPHS: usize = 16;
pub const DEFAULT_CAP: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    NodeLevel,
    EdgeLevel,
}

impl fmt::Display for PartitionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartitionMode::NodeLevel => "node",
            PartitionMode::EdgeLevel => "edge",
        })
    }
}

impl FromStr for PartitionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node" | "node_level" => Ok(PartitionMode::NodeLevel),
            "edge" | "edge_level" => Ok(PartitionMode::EdgeLevel),
            other => Err(Error::InvalidConfig(format!(
                "unknown partition mode `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgraph {
    /// 1-based extraction order.
    pub rank: usize,
    #[serde(rename = "center")]
    pub central_node: usize,
    /// Central node first.
    pub members: Vec<usize>,
    /// Degree of the center in the working graph when it was chosen.
    #[serde(skip)]
    pub center_degree: usize,
    /// Edges deleted from the working graph by this extraction.
    #[serde(skip)]
    pub consumed_edges: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub mode: PartitionMode,
    pub k: usize,
    pub cap: usize,
    pub subgraphs: Vec<Subgraph>,
}

impl Partition {
    pub fn empty(mode: PartitionMode, k: usize, cap: usize) -> Self {
        Self {
            mode,
            k,
            cap,
            subgraphs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.subgraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgraphs.is_empty()
    }
}

/// Extracts up to `k` subgraphs of at most `cap` members. When a center has
/// more than `cap − 1` neighbours, the ones with the highest `weights[center]`
/// entries are kept (all ties, including the no-weights case, go to the
/// smaller id).
pub fn partition(
    g: &SparseGraph,
    weights: Option<&ProbabilityMatrix>,
    mode: PartitionMode,
    k: usize,
    cap: usize,
) -> Result<Partition> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if cap == 0 {
        return Err(Error::InvalidConfig("cap must be at least 1".into()));
    }
    if let Some(w) = weights {
        if w.size() != g.num_nodes {
            return Err(Error::DimensionMismatch {
                expected: g.num_nodes,
                actual: w.size(),
            });
        }
    }

    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); g.num_nodes];
    for &(a, b) in &g.edges {
        adj[a].insert(b);
        adj[b].insert(a);
    }

    let mut out = Partition::empty(mode, k, cap);
    for rank in 1..=k {
        // max_by_key keeps the last maximum, so scan in reverse for the smallest id
        let Some((center, degree)) = adj
            .iter()
            .enumerate()
            .rev()
            .map(|(i, n)| (i, n.len()))
            .max_by_key(|&(_, d)| d)
        else {
            break;
        };
        if degree == 0 {
            break;
        }

        let mut neighbours: Vec<usize> = adj[center].iter().copied().collect();
        if neighbours.len() > cap - 1 {
            if let Some(w) = weights {
                let row = w.row(center);
                neighbours.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            }
            neighbours.truncate(cap - 1);
        }
        let mut members = Vec::with_capacity(neighbours.len() + 1);
        members.push(center);
        members.extend(neighbours);

        let mut consumed = Vec::new();
        match mode {
            PartitionMode::NodeLevel => {
                for &m in &members {
                    for n in std::mem::take(&mut adj[m]) {
                        adj[n].remove(&m);
                        consumed.push(if m < n { (m, n) } else { (n, m) });
                    }
                }
            }
            PartitionMode::EdgeLevel if members.len() == 1 => {
                // cap = 1 induces no edges; drop the center's edges so extraction progresses
                for n in std::mem::take(&mut adj[center]) {
                    adj[n].remove(&center);
                    consumed.push(if center < n { (center, n) } else { (n, center) });
                }
            }
            PartitionMode::EdgeLevel => {
                let set: BTreeSet<usize> = members.iter().copied().collect();
                for &m in &members {
                    let inside: Vec<usize> = adj[m].intersection(&set).copied().collect();
                    for n in inside {
                        adj[m].remove(&n);
                        adj[n].remove(&m);
                        consumed.push(if m < n { (m, n) } else { (n, m) });
                    }
                }
            }
        }
        consumed.sort_unstable();
        consumed.dedup();

        out.subgraphs.push(Subgraph {
            rank,
            central_node: center,
            members,
            center_degree: degree,
            consumed_edges: consumed,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartitionStats {
    pub nodes_per_subgraph: Vec<usize>,
    pub covered_nodes: usize,
    pub covered_edges: usize,
}

pub fn partition_stats(partition: &Partition, g: &SparseGraph) -> PartitionStats {
    let nodes_per_subgraph = partition
        .subgraphs
        .iter()
        .map(|s| s.members.len())
        .collect();
    let mut covered = vec![false; g.num_nodes];
    // subgraph indices that contain each node
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); g.num_nodes];
    for (idx, s) in partition.subgraphs.iter().enumerate() {
        for &m in &s.members {
            covered[m] = true;
            owners[m].push(idx);
        }
    }
    let covered_edges = g
        .edges
        .iter()
        .filter(|&&(a, b)| owners[a].iter().any(|x| owners[b].contains(x)))
        .count();
    PartitionStats {
        nodes_per_subgraph,
        covered_nodes: covered.iter().filter(|&&c| c).count(),
        covered_edges,
    }
}
