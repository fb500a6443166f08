//! File formats for matrices, graphs, partitions and run statistics.
//!
//! Every text format starts with a `# seed=N` comment; readers skip `#`
//! lines and blank lines.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::partition::{Partition, PartitionMode, Subgraph};
use crate::patterns::ProbabilityMatrix;
use crate::sampler::{GraphStats, SparseGraph};

fn content_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        out.push((idx + 1, line));
    }
    Ok(out)
}

/// One row per line, comma separated, six decimals.
pub fn write_matrix_csv(out: &mut impl Write, p: &ProbabilityMatrix, seed: u64) -> Result<()> {
    writeln!(out, "# seed={seed}")?;
    for i in 0..p.size() {
        let row: Vec<String> = p.row(i).iter().map(|v| format!("{v:.6}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<ProbabilityMatrix> {
    let mut values = Vec::new();
    let mut width = None;
    for (line_no, line) in content_lines(path)? {
        let row = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, line_no, format!("invalid number `{v}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(Error::parse(path, line_no, "ragged row"));
        }
        values.extend(row);
    }
    let size = width.unwrap_or(0);
    ProbabilityMatrix::from_values(size, values)
}

fn write_pgm(out: &mut impl Write, size: usize, pixels: &[u8], seed: u64) -> Result<()> {
    write!(out, "P5\n# seed={seed}\n{size} {size}\n255\n")?;
    out.write_all(pixels)?;
    Ok(())
}

/// Binary 8-bit heatmap with pixel `round(255 · P_ij)`.
pub fn write_matrix_pgm(out: &mut impl Write, p: &ProbabilityMatrix, seed: u64) -> Result<()> {
    let pixels: Vec<u8> = p
        .values()
        .iter()
        .map(|v| (255.0 * v.clamp(0.0, 1.0)).round() as u8)
        .collect();
    write_pgm(out, p.size(), &pixels, seed)
}

/// Binary heatmap of the adjacency matrix, 255 for an edge.
pub fn write_adjacency_pgm(out: &mut impl Write, g: &SparseGraph) -> Result<()> {
    let l = g.num_nodes;
    let mut pixels = vec![0u8; l * l];
    for &(i, j) in &g.edges {
        pixels[i * l + j] = 255;
        pixels[j * l + i] = 255;
    }
    write_pgm(out, l, &pixels, g.seed)
}

/// `i j` per edge with `i < j`, sorted; the header records node count and
/// seed.
pub fn write_edge_list(out: &mut impl Write, g: &SparseGraph) -> Result<()> {
    writeln!(out, "# seed={}", g.seed)?;
    writeln!(out, "# nodes={}", g.num_nodes)?;
    let mut edges = g.edges.clone();
    edges.sort_unstable();
    for (i, j) in edges {
        writeln!(out, "{i} {j}")?;
    }
    Ok(())
}

fn header_value(path: &Path, key: &str) -> Result<Option<u64>> {
    let reader = BufReader::new(File::open(path)?);
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let Some(rest) = line.strip_prefix('#') else {
            continue;
        };
        if let Some(v) = rest.trim().strip_prefix(&format!("{key}=")) {
            return v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| Error::parse(path, idx + 1, format!("invalid {key} `{v}`")));
        }
    }
    Ok(None)
}

pub fn read_edge_list(path: &Path) -> Result<SparseGraph> {
    let nodes = header_value(path, "nodes")?
        .ok_or_else(|| Error::parse(path, 1, "missing `# nodes=N` header"))?
        as usize;
    let seed = header_value(path, "seed")?.unwrap_or(0);
    let mut edges = Vec::new();
    for (line_no, line) in content_lines(path)? {
        let f: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(path, line_no, format!("invalid node `{s}`")))
        };
        if f.len() != 2 {
            return Err(Error::parse(path, line_no, "expected `i j`"));
        }
        let (i, j) = (parse(f[0])?, parse(f[1])?);
        if i == j || i >= nodes || j >= nodes {
            return Err(Error::parse(
                path,
                line_no,
                format!("edge ({i}, {j}) outside {nodes} nodes"),
            ));
        }
        edges.push((i, j));
    }
    Ok(SparseGraph::from_edges(nodes, edges, seed))
}

pub const GRAPH_STATS_HEADER: &str = "seed,sparsity,num_edges,max_degree,mean_degree";

pub fn write_graph_stats(out: &mut impl Write, stats: &[GraphStats], seed: u64) -> Result<()> {
    writeln!(out, "# seed={seed}")?;
    writeln!(out, "{GRAPH_STATS_HEADER}")?;
    for s in stats {
        writeln!(
            out,
            "{},{:.6},{},{},{:.6}",
            s.seed, s.sparsity, s.num_edges, s.max_degree, s.mean_degree
        )?;
    }
    Ok(())
}

/// One `{"rank","center","members"}` object per subgraph.
pub fn write_partition_jsonl(out: &mut impl Write, partition: &Partition, seed: u64) -> Result<()> {
    writeln!(out, "# seed={seed}")?;
    for s in &partition.subgraphs {
        writeln!(
            out,
            "{}",
            serde_json::to_string(s).map_err(std::io::Error::from)?
        )?;
    }
    Ok(())
}

pub fn read_partition_jsonl(path: &Path) -> Result<Vec<Subgraph>> {
    content_lines(path)?
        .into_iter()
        .map(|(line_no, line)| {
            serde_json::from_str(&line).map_err(|e| Error::parse(path, line_no, e.to_string()))
        })
        .collect()
}

pub const PARTITION_STATS_HEADER: &str = "sparsity,mode,rank,num_nodes";

/// Row of the sparsity sweep table.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub sparsity: f64,
    pub mode: PartitionMode,
    pub rank: usize,
    pub num_nodes: f64,
}

impl SweepRow {
    /// One row per subgraph of a single partition.
    pub fn from_partition(sparsity: f64, partition: &Partition) -> Vec<SweepRow> {
        partition
            .subgraphs
            .iter()
            .map(|s| SweepRow {
                sparsity,
                mode: partition.mode,
                rank: s.rank,
                num_nodes: s.members.len() as f64,
            })
            .collect()
    }
}

/// `sparsity,mode,rank,num_nodes` table; node counts may be seed averages.
pub fn write_sweep(out: &mut impl Write, rows: &[SweepRow], seed: u64) -> Result<()> {
    writeln!(out, "# seed={seed}")?;
    writeln!(out, "{PARTITION_STATS_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{:.6},{},{},{:.4}",
            r.sparsity, r.mode, r.rank, r.num_nodes
        )?;
    }
    Ok(())
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (line_no, line) in content_lines(path)? {
        if line == PARTITION_STATS_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| Error::parse(path, line_no, format!("invalid {what}"));
        if f.len() != 4 {
            return Err(bad("row"));
        }
        rows.push(SweepRow {
            sparsity: f[0].parse().map_err(|_| bad("sparsity"))?,
            mode: f[1].parse().map_err(|_| bad("mode"))?,
            rank: f[2].parse().map_err(|_| bad("rank"))?,
            num_nodes: f[3].parse().map_err(|_| bad("num_nodes"))?,
        });
    }
    Ok(rows)
}

pub fn write_losses(out: &mut impl Write, losses: &[(usize, f64)], seed: u64) -> Result<()> {
    writeln!(out, "# seed={seed}")?;
    writeln!(out, "step,loss")?;
    for (step, loss) in losses {
        writeln!(out, "{step},{loss:.6}")?;
    }
    Ok(())
}

/// `(metric, k, value)` rows.
pub fn write_metrics(
    out: &mut impl Write,
    metrics: &[(&str, usize, f64)],
    seed: u64,
) -> Result<()> {
    writeln!(out, "# seed={seed}")?;
    writeln!(out, "metric,k,value")?;
    for (name, k, value) in metrics {
        writeln!(out, "{name},{k},{value:.6}")?;
    }
    Ok(())
}
