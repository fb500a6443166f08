//! Seeded synthetic ranking collections with planted lexical relevance.
//!
//! Documents are sequences of filler words. The single relevant document of
//! each query carries every query term several times, clustered around a
//! random anchor. Half of the non-relevant documents carry terms of other
//! queries in the same way, so term presence alone does not identify the
//! relevant document.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::text::{tokenize, Qrels, TokenizedDocument};

use super::groups::Candidates;
use super::metrics::{RunEntry, RunFile};
use super::runfile::write_run;

#[derive(Clone, Debug)]
pub struct FixtureConfig {
    pub num_queries: usize,
    pub candidates_per_query: usize,
    pub doc_len: (usize, usize),
    pub query_len: usize,
    /// Inclusive range of copies planted per term.
    pub plants_per_term: (usize, usize),
    /// Maximum distance of a planted copy from its anchor.
    pub plant_spread: usize,
    /// Fraction of non-relevant documents that carry other queries' terms.
    pub distractor_fraction: f64,
    pub filler_vocab: usize,
    pub topic_vocab: usize,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            num_queries: 100,
            candidates_per_query: 20,
            doc_len: (200, 400),
            query_len: 3,
            plants_per_term: (3, 6),
            plant_spread: 40,
            distractor_fraction: 0.5,
            filler_vocab: 600,
            topic_vocab: 300,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fixtures {
    pub corpus: Vec<(String, String)>,
    pub queries: Vec<(String, String)>,
    pub qrels: Qrels,
    pub candidates: Candidates,
}

const CONSONANTS: &[char] = &[
    'b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z', 'h',
];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];

fn syllable(i: usize) -> String {
    let c = CONSONANTS[i / VOWELS.len() % CONSONANTS.len()];
    let v = VOWELS[i % VOWELS.len()];
    format!("{c}{v}")
}

/// Distinct pseudo-words: filler words have two syllables, topic words three.
fn word_lists(config: &FixtureConfig, rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<String>) {
    let n = CONSONANTS.len() * VOWELS.len();
    let mut filler: Vec<String> = (0..n * n)
        .map(|i| syllable(i / n) + &syllable(i % n))
        .collect();
    filler.shuffle(rng);
    filler.truncate(config.filler_vocab);
    let mut topic: Vec<String> = (0..n * n * n)
        .step_by(7)
        .map(|i| syllable(i / (n * n)) + &syllable(i / n % n) + &syllable(i % n))
        .collect();
    topic.shuffle(rng);
    topic.truncate(config.topic_vocab);
    (filler, topic)
}

fn plant(words: &mut [String], terms: &[&String], config: &FixtureConfig, rng: &mut ChaCha8Rng) {
    let len = words.len();
    let anchor = rng.random_range(0..len);
    let spread = config.plant_spread.min(len.saturating_sub(1)).max(1);
    for term in terms {
        let copies = rng.random_range(config.plants_per_term.0..=config.plants_per_term.1);
        for _ in 0..copies {
            let offset = rng.random_range(0..=2 * spread) as isize - spread as isize;
            let pos = (anchor as isize + offset).clamp(0, len as isize - 1) as usize;
            words[pos] = (*term).clone();
        }
    }
}

fn filler_text(filler: &[String], len: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    (0..len)
        .map(|_| filler.choose(rng).expect("filler").clone())
        .collect()
}

pub fn generate(config: &FixtureConfig) -> Fixtures {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (filler, topic) = word_lists(config, &mut rng);
    let mut fixtures = Fixtures {
        corpus: Vec::new(),
        queries: Vec::new(),
        qrels: Qrels::new(),
        candidates: Candidates::new(),
    };
    for q in 0..config.num_queries {
        let qid = format!("q{q:03}");
        let terms: Vec<&String> = topic.choose_multiple(&mut rng, config.query_len).collect();
        fixtures.queries.push((
            qid.clone(),
            terms
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(" "),
        ));
        let relevant = rng.random_range(0..config.candidates_per_query);
        let mut judged = BTreeMap::new();
        let mut cands = Vec::new();
        for c in 0..config.candidates_per_query {
            let doc_id = format!("D{q:03}{c:02}");
            let len = rng.random_range(config.doc_len.0..=config.doc_len.1);
            let mut words = filler_text(&filler, len, &mut rng);
            if c == relevant {
                plant(&mut words, &terms, config, &mut rng);
            } else if rng.random_bool(config.distractor_fraction) {
                let others: Vec<&String> = topic
                    .iter()
                    .filter(|t| !terms.contains(t))
                    .collect::<Vec<_>>()
                    .choose_multiple(&mut rng, config.query_len)
                    .copied()
                    .collect();
                plant(&mut words, &others, config, &mut rng);
            }
            judged.insert(doc_id.clone(), i32::from(c == relevant));
            cands.push(doc_id.clone());
            fixtures.corpus.push((doc_id, words.join(" ")));
        }
        fixtures.qrels.insert(qid.clone(), judged);
        fixtures.candidates.insert(qid, cands);
    }
    fixtures
}

impl Fixtures {
    pub fn tokenized(
        &self,
        max_doc_len: usize,
    ) -> Result<(Vec<TokenizedDocument>, Vec<TokenizedDocument>)> {
        let corpus = self
            .corpus
            .iter()
            .map(|(id, text)| tokenize(id.clone(), text, max_doc_len))
            .collect::<Result<_>>()?;
        let queries = self
            .queries
            .iter()
            .map(|(id, text)| tokenize(id.clone(), text, max_doc_len))
            .collect::<Result<_>>()?;
        Ok((corpus, queries))
    }

    /// Writes `corpus.jsonl`, `queries.tsv`, `qrels.txt` and `candidates.run`
    /// into `dir`, each starting with a `# seed=N` comment.
    pub fn write(&self, dir: &Path, seed: u64) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let header = format!("# seed={seed}");

        let mut w = BufWriter::new(File::create(dir.join("corpus.jsonl"))?);
        writeln!(w, "{header}")?;
        for (doc_id, text) in &self.corpus {
            let line = serde_json::json!({ "doc_id": doc_id, "text": text });
            writeln!(w, "{line}")?;
        }
        w.flush()?;

        let mut w = BufWriter::new(File::create(dir.join("queries.tsv"))?);
        writeln!(w, "{header}")?;
        for (qid, text) in &self.queries {
            writeln!(w, "{qid}\t{text}")?;
        }
        w.flush()?;

        let mut w = BufWriter::new(File::create(dir.join("qrels.txt"))?);
        writeln!(w, "{header}")?;
        for (qid, docs) in &self.qrels {
            for (doc_id, grade) in docs {
                writeln!(w, "{qid} 0 {doc_id} {grade}")?;
            }
        }
        w.flush()?;

        let run: RunFile = self
            .candidates
            .iter()
            .map(|(qid, docs)| {
                let entries = docs
                    .iter()
                    .enumerate()
                    .map(|(i, d)| RunEntry {
                        doc_id: d.clone(),
                        score: 0.0,
                        rank: i + 1,
                    })
                    .collect();
                (qid.clone(), entries)
            })
            .collect();
        let mut w = BufWriter::new(File::create(dir.join("candidates.run"))?);
        write_run(&mut w, &run, "candidates", &[format!("seed={seed}")])?;
        w.flush()?;
        Ok(())
    }
}

/// A single filler document of `len` tokens with the given query terms
/// planted, for graph-level experiments.
pub fn synthetic_document(
    len: usize,
    query_terms: &[&str],
    seed: u64,
) -> Result<(TokenizedDocument, TokenizedDocument)> {
    let config = FixtureConfig {
        seed,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (filler, _) = word_lists(&config, &mut rng);
    let mut words = filler_text(&filler, len, &mut rng);
    let terms: Vec<String> = query_terms.iter().map(|s| s.to_string()).collect();
    let refs: Vec<&String> = terms.iter().collect();
    // several clusters so the planted terms are spread over a long document
    for _ in 0..(len / 250).max(1) {
        plant(&mut words, &refs, &config, &mut rng);
    }
    let doc = tokenize("synthetic", &words.join(" "), len)?;
    let query = tokenize("synthetic-query", &query_terms.join(" "), len)?;
    Ok((doc, query))
}
