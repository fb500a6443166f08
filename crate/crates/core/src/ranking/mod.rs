//! Candidate re-ranking: training groups, listwise training, metrics and
//! run files.

mod fixtures;
mod groups;
mod metrics;
mod runfile;
mod train;

pub use fixtures::{generate, synthetic_document, FixtureConfig, Fixtures};
pub use groups::{
    build_groups, candidates_from_qrels, Candidates, TrainingGroup, DEFAULT_NEG_RATIO,
};
pub use metrics::{mrr_at_k, ndcg_at_k, rank_scores, RunEntry, RunFile};
pub use runfile::{read_run, write_run};
pub use train::{
    rerank, rerank_all, train, AdamW, AdamWConfig, Collection, TrainConfig, TrainOutcome,
};
