use std::collections::BTreeMap;

use log::warn;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::text::{token_id, Qrels};

pub const DEFAULT_NEG_RATIO: usize = 7;

/// One positive and its sampled negatives for a query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingGroup {
    pub query_id: String,
    pub positive: String,
    pub negatives: Vec<String>,
}

impl TrainingGroup {
    /// Positive first, then negatives.
    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.positive.as_str()).chain(self.negatives.iter().map(String::as_str))
    }

    pub fn len(&self) -> usize {
        1 + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Candidate documents per query.
pub type Candidates = BTreeMap<String, Vec<String>>;

/// Judged documents of every query as its candidate list.
pub fn candidates_from_qrels(qrels: &Qrels) -> Candidates {
    qrels
        .iter()
        .map(|(q, docs)| (q.clone(), docs.keys().cloned().collect()))
        .collect()
}

/// One group per (query, relevant candidate). Negatives are drawn without
/// replacement from the remaining non-relevant candidates; when fewer than
/// `neg_ratio` exist, all of them are used. Queries without a relevant
/// candidate are skipped.
pub fn build_groups(
    qrels: &Qrels,
    candidates: &Candidates,
    neg_ratio: usize,
    seed: u64,
) -> Vec<TrainingGroup> {
    let mut groups = Vec::new();
    for (qid, docs) in candidates {
        let judgments = qrels.get(qid);
        let is_relevant = |d: &String| judgments.and_then(|j| j.get(d)).is_some_and(|&g| g >= 1);
        let positives: Vec<&String> = docs.iter().filter(|d| is_relevant(d)).collect();
        if positives.is_empty() {
            warn!("query {qid} has no relevant candidate; skipped");
            continue;
        }
        let pool: Vec<&String> = docs.iter().filter(|d| !is_relevant(d)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ token_id(qid));
        for pos in positives {
            let negatives = pool
                .choose_multiple(&mut rng, neg_ratio.min(pool.len()))
                .map(|d| (*d).clone())
                .collect();
            groups.push(TrainingGroup {
                query_id: qid.clone(),
                positive: pos.clone(),
                negatives,
            });
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(n: usize) -> (Qrels, Candidates) {
        let docs: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        let qrels = Qrels::from([("q".to_string(), BTreeMap::from([("d3".to_string(), 1)]))]);
        (qrels, Candidates::from([("q".to_string(), docs)]))
    }

    #[test]
    fn group_size_follows_ratio() {
        let (qrels, cands) = fixture(10);
        let groups = build_groups(&qrels, &cands, 7, 1);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].len(), 8);
        assert_eq!(groups[0].positive, "d3");
        assert!(!groups[0].negatives.contains(&"d3".to_string()));
        let mut uniq = groups[0].negatives.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 7);
    }

    #[test]
    fn few_candidates_use_all_negatives() {
        let (qrels, cands) = fixture(5);
        let g = &build_groups(&qrels, &cands, 7, 1)[0];
        assert_eq!(g.negatives.len(), 4);
    }

    #[test]
    fn deterministic_under_seed() {
        let (qrels, cands) = fixture(30);
        assert_eq!(
            build_groups(&qrels, &cands, 7, 5),
            build_groups(&qrels, &cands, 7, 5)
        );
        assert_ne!(
            build_groups(&qrels, &cands, 7, 5),
            build_groups(&qrels, &cands, 7, 6)
        );
    }

    #[test]
    fn queries_without_positive_are_skipped() {
        let (_, cands) = fixture(5);
        assert!(build_groups(&Qrels::new(), &cands, 7, 1).is_empty());
    }
}
