//! Document → probability matrices → sampled graph → partition → circles.

use crate::error::{Error, Result};
use crate::export::SweepRow;
use crate::model::{build_circles, DocumentInput, ModelConfig};
use crate::partition::{partition, Partition, PartitionMode};
use crate::patterns::{
    combine, dynamic_centrality_matrix, dynamic_distance_matrix, dynamic_distance_weights,
    solve_mu, static_centrality_matrix, static_distance_matrix, PatternConfig, ProbabilityMatrix,
};
use crate::sampler::{sample_adjacency, SparseGraph};
use crate::text::{
    dynamic_centrality_weights, match_positions, tfidf_weights, IdentityRefiner, TermWeightRefiner,
    TokenizedDocument, Vocabulary,
};

/// The four pattern matrices of one (document, query) pair.
#[derive(Clone, Debug)]
pub struct PatternSet {
    pub static_distance: ProbabilityMatrix,
    pub static_centrality: ProbabilityMatrix,
    pub dynamic_distance: ProbabilityMatrix,
    pub dynamic_centrality: ProbabilityMatrix,
}

impl PatternSet {
    pub fn as_array(&self) -> [&ProbabilityMatrix; 4] {
        [
            &self.static_distance,
            &self.static_centrality,
            &self.dynamic_distance,
            &self.dynamic_centrality,
        ]
    }
}

pub fn pattern_set(
    doc: &TokenizedDocument,
    query: &TokenizedDocument,
    vocab: &Vocabulary,
    config: &PatternConfig,
    refiner: &dyn TermWeightRefiner,
) -> Result<PatternSet> {
    let l = doc.len();
    let static_distance = static_distance_matrix(l, config.p)?;
    let static_centrality = static_centrality_matrix(&tfidf_weights(doc, vocab)?)?;
    let positions = match_positions(doc, query);
    let dynamic_distance =
        dynamic_distance_matrix(&dynamic_distance_weights(&positions, l, config.p))?;
    let dynamic_centrality =
        dynamic_centrality_matrix(&dynamic_centrality_weights(doc, query, refiner))?;
    Ok(PatternSet {
        static_distance,
        static_centrality,
        dynamic_distance,
        dynamic_centrality,
    })
}

/// Combined and scaled probabilities plus the sampled graph.
#[derive(Clone, Debug)]
pub struct GraphArtifacts {
    pub combined: ProbabilityMatrix,
    pub mu: f64,
    pub scaled: ProbabilityMatrix,
    pub budget_unreachable: bool,
    pub graph: SparseGraph,
}

pub fn sample_graph(
    patterns: &PatternSet,
    config: &PatternConfig,
    seed: u64,
) -> Result<GraphArtifacts> {
    config.validate()?;
    let combined = combine(patterns.as_array(), config.lambdas)?;
    let scaled = solve_mu(&combined, config.sparsity)?;
    let graph = sample_adjacency(&scaled.scaled, seed);
    Ok(GraphArtifacts {
        combined,
        mu: scaled.mu,
        scaled: scaled.scaled,
        budget_unreachable: scaled.budget_unreachable,
        graph,
    })
}

/// Everything needed to score one (document, query) pair.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub patterns: PatternConfig,
    pub mode: PartitionMode,
    pub max_subgraphs: usize,
    pub cap: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            patterns: PatternConfig::default(),
            mode: PartitionMode::EdgeLevel,
            max_subgraphs: crate::partition::DEFAULT_MAX_SUBGRAPHS,
            cap: crate::partition::DEFAULT_CAP,
        }
    }
}

/// Graph seed for a (document, query) pair: stable across runs and
/// independent of iteration order.
pub fn pair_seed(base: u64, query_id: &str, doc_id: &str) -> u64 {
    let key = format!("{query_id}\u{1f}{doc_id}");
    crate::text::token_id(&key) ^ base.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

pub fn partition_document(
    doc: &TokenizedDocument,
    query: &TokenizedDocument,
    vocab: &Vocabulary,
    config: &PipelineConfig,
    seed: u64,
) -> Result<(GraphArtifacts, Partition)> {
    let patterns = pattern_set(doc, query, vocab, &config.patterns, &IdentityRefiner)?;
    let artifacts = sample_graph(&patterns, &config.patterns, seed)?;
    let part = partition(
        &artifacts.graph,
        Some(&artifacts.scaled),
        config.mode,
        config.max_subgraphs,
        config.cap,
    )?;
    Ok((artifacts, part))
}

/// Full preprocessing of one (document, query) pair into model input.
pub fn document_input(
    doc: &TokenizedDocument,
    query: &TokenizedDocument,
    vocab: &Vocabulary,
    config: &PipelineConfig,
    model: &ModelConfig,
    seed: u64,
) -> Result<DocumentInput> {
    let (_, part) = partition_document(doc, query, vocab, config, seed)?;
    Ok(build_circles(
        doc,
        query,
        &part,
        model.window_size,
        model.vocab_hash_size,
    ))
}

/// Mean subgraph sizes per (sparsity, mode, rank) over `seeds` graph
/// samples. The same sampled graph is partitioned in every mode; ranks
/// missing from a sample count as zero nodes.
pub fn sparsity_sweep(
    doc: &TokenizedDocument,
    query: &TokenizedDocument,
    vocab: &Vocabulary,
    config: &PipelineConfig,
    levels: &[f64],
    modes: &[PartitionMode],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one seed".into()));
    }
    let patterns = pattern_set(doc, query, vocab, &config.patterns, &IdentityRefiner)?;
    let k = config.max_subgraphs;
    let mut rows = Vec::new();
    for &level in levels {
        let cfg = PatternConfig {
            sparsity: level,
            ..config.patterns.clone()
        };
        let mut totals = vec![vec![0.0; k]; modes.len()];
        for &seed in seeds {
            let art = sample_graph(&patterns, &cfg, seed)?;
            for (m, &mode) in modes.iter().enumerate() {
                let part = partition(&art.graph, Some(&art.scaled), mode, k, config.cap)?;
                for s in &part.subgraphs {
                    totals[m][s.rank - 1] += s.members.len() as f64;
                }
            }
        }
        for (m, &mode) in modes.iter().enumerate() {
            rows.extend((0..k).map(|r| SweepRow {
                sparsity: level,
                mode,
                rank: r + 1,
                num_nodes: totals[m][r] / seeds.len() as f64,
            }));
        }
    }
    Ok(rows)
}
