//! Rank-based effectiveness metrics over TREC-style runs.

use std::collections::BTreeMap;

use crate::text::Qrels;

/// One ranked result.
#[derive(Clone, Debug, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Per-query ranked lists, ordered by rank.
pub type RunFile = BTreeMap<String, Vec<RunEntry>>;

/// Sorts by score descending with doc-id-ascending ties and assigns ranks
/// `1..=n`.
pub fn rank_scores(scored: Vec<(String, f64)>) -> Vec<RunEntry> {
    let mut scored = scored;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (doc_id, score))| RunEntry {
            doc_id,
            score,
            rank: i + 1,
        })
        .collect()
}

fn judged<'a>(
    run: &'a RunFile,
    qrels: &'a Qrels,
) -> impl Iterator<Item = (&'a [RunEntry], &'a BTreeMap<String, i32>)> {
    run.iter()
        .filter_map(move |(qid, entries)| qrels.get(qid).map(|j| (entries.as_slice(), j)))
}

/// Mean reciprocal rank of the first document with grade ≥ 1 in the top `k`,
/// over queries present in both the run and the judgments.
pub fn mrr_at_k(run: &RunFile, qrels: &Qrels, k: usize) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (entries, judgments) in judged(run, qrels) {
        count += 1;
        if let Some(pos) = entries
            .iter()
            .take(k)
            .position(|e| judgments.get(&e.doc_id).is_some_and(|&g| g >= 1))
        {
            total += 1.0 / (pos + 1) as f64;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

fn gain(grade: i32) -> f64 {
    if grade <= 0 {
        0.0
    } else {
        2f64.powi(grade) - 1.0
    }
}

fn dcg(grades: impl Iterator<Item = i32>) -> f64 {
    grades
        .enumerate()
        .map(|(i, g)| gain(g) / ((i + 2) as f64).log2())
        .sum()
}

/// nDCG with gain `2^grade − 1` and discount `1 / log2(rank + 1)`. Queries
/// whose ideal DCG is zero are left out of the mean.
pub fn ndcg_at_k(run: &RunFile, qrels: &Qrels, k: usize) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (entries, judgments) in judged(run, qrels) {
        let mut ideal: Vec<i32> = judgments.values().copied().collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg = dcg(ideal.into_iter().take(k));
        if idcg <= 0.0 {
            continue;
        }
        let actual = dcg(entries
            .iter()
            .take(k)
            .map(|e| judgments.get(&e.doc_id).copied().unwrap_or(0)));
        total += actual / idcg;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_of(qid: &str, docs: &[&str]) -> RunFile {
        let entries = docs
            .iter()
            .enumerate()
            .map(|(i, d)| RunEntry {
                doc_id: d.to_string(),
                score: -(i as f64),
                rank: i + 1,
            })
            .collect();
        RunFile::from([(qid.to_string(), entries)])
    }

    fn qrels_of(qid: &str, grades: &[(&str, i32)]) -> Qrels {
        Qrels::from([(
            qid.to_string(),
            grades.iter().map(|(d, g)| (d.to_string(), *g)).collect(),
        )])
    }

    #[test]
    fn mrr_examples() {
        let run = run_of("q", &["a", "b", "c", "d"]);
        assert!((mrr_at_k(&run, &qrels_of("q", &[("c", 1)]), 10) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(mrr_at_k(&run, &qrels_of("q", &[("d", 1)]), 3), 0.0);
        let mut run = run_of("q1", &["a", "b"]);
        run.extend(run_of("q2", &["a", "b"]));
        let mut qrels = qrels_of("q1", &[("a", 1)]);
        qrels.extend(qrels_of("q2", &[("b", 2)]));
        assert!((mrr_at_k(&run, &qrels, 10) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn ndcg_examples() {
        let run = run_of("q", &["a", "b", "c"]);
        assert!((ndcg_at_k(&run, &qrels_of("q", &[("a", 3), ("b", 2)]), 2) - 1.0).abs() < 1e-15);
        let v = ndcg_at_k(&run, &qrels_of("q", &[("b", 1)]), 10);
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert!((v - 0.63093).abs() < 1e-5);
        // queries without relevant documents are excluded
        let mut qrels = qrels_of("q", &[("a", 1)]);
        qrels.extend(qrels_of("z", &[("a", 0)]));
        let mut run2 = run.clone();
        run2.extend(run_of("z", &["a"]));
        assert_eq!(ndcg_at_k(&run2, &qrels, 10), 1.0);
    }

    #[test]
    fn rank_scores_breaks_ties_by_doc_id() {
        let ranked = rank_scores(vec![
            ("b".into(), 1.0),
            ("a".into(), 1.0),
            ("c".into(), 2.0),
        ]);
        let ids: Vec<&str> = ranked.iter().map(|e| e.doc_id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
        assert_eq!(ranked.iter().map(|e| e.rank).collect::<Vec<_>>(), [1, 2, 3]);
    }
}
