//! Corpus ingestion, tokenization and the per-token weights that feed the
//! attention patterns.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_DOC_LEN: usize = 2048;

/// Added to every TF-IDF weight so that no token has weight exactly zero.
pub const IDF_EPSILON: f64 = 1e-6;

/// Size of the candidate set handed to a [`TermWeightRefiner`].
pub const REFINE_CANDIDATES: usize = 512;

/// A lowercased, truncated token sequence. Queries use the same type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenizedDocument {
    pub doc_id: String,
    /// Stable 64-bit FNV-1a hash of each surface form.
    pub tokens: Vec<u64>,
    pub surface_forms: Vec<String>,
}

impl TokenizedDocument {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn from_terms(doc_id: String, surface_forms: Vec<String>) -> Self {
        let tokens = surface_forms.iter().map(|s| token_id(s)).collect();
        Self {
            doc_id,
            tokens,
            surface_forms,
        }
    }
}

/// FNV-1a over the UTF-8 bytes of a term.
pub fn token_id(term: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in term.bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Lowercases and splits on every non-alphanumeric character, keeping at
/// most `max_doc_len` leading tokens.
pub fn tokenize(
    doc_id: impl Into<String>,
    text: &str,
    max_doc_len: usize,
) -> Result<TokenizedDocument> {
    let terms: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .take(max_doc_len)
        .map(str::to_lowercase)
        .collect();
    if terms.is_empty() {
        return Err(Error::EmptyDocument);
    }
    Ok(TokenizedDocument::from_terms(doc_id.into(), terms))
}

/// Document frequencies over a fixed corpus.
#[derive(Clone, Debug, Default)]
pub struct Vocabulary {
    ids: HashMap<String, usize>,
    df: Vec<u32>,
    n_docs: usize,
}

impl Vocabulary {
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn len(&self) -> usize {
        self.df.len()
    }

    pub fn is_empty(&self) -> bool {
        self.df.is_empty()
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.ids.get(term).copied()
    }

    pub fn df(&self, term: &str) -> Option<u32> {
        self.id(term).map(|id| self.df[id])
    }

    /// Smoothed inverse document frequency `ln((1 + N) / (1 + df))`.
    pub fn idf(&self, term: &str) -> Result<f64> {
        let df = self
            .df(term)
            .ok_or_else(|| Error::UnknownTerm(term.to_owned()))?;
        Ok(((1.0 + self.n_docs as f64) / (1.0 + f64::from(df))).ln())
    }
}

pub fn build_vocab<'a, I>(corpus: I) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a TokenizedDocument>,
{
    let mut vocab = Vocabulary::default();
    for doc in corpus {
        vocab.n_docs += 1;
        let unique: HashSet<&str> = doc.surface_forms.iter().map(String::as_str).collect();
        for term in unique {
            match vocab.ids.get(term) {
                Some(&id) => vocab.df[id] += 1,
                None => {
                    vocab.ids.insert(term.to_owned(), vocab.df.len());
                    vocab.df.push(1);
                }
            }
        }
    }
    if vocab.n_docs == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(vocab)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightKind {
    StaticCentrality,
    DynamicDistance,
    DynamicCentrality,
}

/// Non-negative, finite per-token weights aligned with a document.
#[derive(Clone, Debug, PartialEq)]
pub struct TermWeights {
    pub kind: WeightKind,
    pub values: Vec<f64>,
}

impl TermWeights {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Length-normalized TF times smoothed IDF, plus [`IDF_EPSILON`].
pub fn tfidf_weights(doc: &TokenizedDocument, vocab: &Vocabulary) -> Result<TermWeights> {
    let l = doc.len() as f64;
    let mut tf: HashMap<&str, usize> = HashMap::new();
    for term in &doc.surface_forms {
        *tf.entry(term.as_str()).or_default() += 1;
    }
    let mut idf_cache: HashMap<&str, f64> = HashMap::with_capacity(tf.len());
    for &term in tf.keys() {
        idf_cache.insert(term, vocab.idf(term)?);
    }
    let values = doc
        .surface_forms
        .iter()
        .map(|term| {
            let t = term.as_str();
            tf[t] as f64 / l * idf_cache[t] + IDF_EPSILON
        })
        .collect();
    Ok(TermWeights {
        kind: WeightKind::StaticCentrality,
        values,
    })
}

/// Sorted positions of document tokens that exactly equal some query token.
pub fn match_positions(doc: &TokenizedDocument, query: &TokenizedDocument) -> Vec<usize> {
    let terms: HashSet<&str> = query.surface_forms.iter().map(String::as_str).collect();
    doc.surface_forms
        .iter()
        .enumerate()
        .filter(|(_, s)| terms.contains(s.as_str()))
        .map(|(i, _)| i)
        .collect()
}

/// Character trigrams; terms shorter than three characters are their own
/// single gram.
pub fn char_trigrams(term: &str) -> HashSet<String> {
    let chars: Vec<char> = term.chars().collect();
    if chars.len() < 3 {
        return std::iter::once(term.to_owned()).collect();
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

pub fn trigram_jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Second-stage rewrite of relevance weights for a candidate subset of tokens.
pub trait TermWeightRefiner: Send + Sync {
    /// `candidates` are token positions sorted by descending stage-one weight.
    fn refine(
        &self,
        doc: &TokenizedDocument,
        query: &TokenizedDocument,
        candidates: &[usize],
        weights: &mut [f64],
    );
}

/// Leaves the stage-one weights untouched.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityRefiner;

impl TermWeightRefiner for IdentityRefiner {
    fn refine(&self, _: &TokenizedDocument, _: &TokenizedDocument, _: &[usize], _: &mut [f64]) {}
}

/// Stage-one relevance of each token to the query: 1.0 on exact match,
/// otherwise the best trigram Jaccard similarity against any query term.
pub fn stage1_relevance(doc: &TokenizedDocument, query: &TokenizedDocument) -> TermWeights {
    let query_terms: HashSet<&str> = query.surface_forms.iter().map(String::as_str).collect();
    let query_grams: Vec<HashSet<String>> = query_terms.iter().map(|t| char_trigrams(t)).collect();
    let mut cache: HashMap<&str, f64> = HashMap::new();
    let values = doc
        .surface_forms
        .iter()
        .map(|term| {
            *cache.entry(term.as_str()).or_insert_with(|| {
                if query_terms.contains(term.as_str()) {
                    return 1.0;
                }
                let grams = char_trigrams(term);
                query_grams
                    .iter()
                    .map(|q| trigram_jaccard(&grams, q))
                    .fold(0.0, f64::max)
            })
        })
        .collect();
    TermWeights {
        kind: WeightKind::DynamicCentrality,
        values,
    }
}

/// Top `min(512, l)` positions by stage-one weight, ties by position.
pub fn refine_candidates(weights: &TermWeights) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        weights.values[b]
            .total_cmp(&weights.values[a])
            .then(a.cmp(&b))
    });
    order.truncate(REFINE_CANDIDATES.min(weights.len()));
    order
}

/// Dynamic centrality weights: stage-one relevance followed by the refiner.
pub fn dynamic_centrality_weights(
    doc: &TokenizedDocument,
    query: &TokenizedDocument,
    refiner: &dyn TermWeightRefiner,
) -> TermWeights {
    let mut weights = stage1_relevance(doc, query);
    let candidates = refine_candidates(&weights);
    refiner.refine(doc, query, &candidates, &mut weights.values);
    weights
}

/// Relevance judgments: query id → doc id → grade.
pub type Qrels = BTreeMap<String, BTreeMap<String, i32>>;

#[derive(Deserialize)]
struct CorpusLine {
    doc_id: String,
    text: String,
}

fn content_lines(path: &Path) -> Result<impl Iterator<Item = Result<(usize, String)>>> {
    let reader = BufReader::new(File::open(path)?);
    Ok(reader
        .lines()
        .enumerate()
        .map(|(i, line)| line.map(|l| (i + 1, l)).map_err(Error::from))
        .filter(|r| match r {
            Ok((_, l)) => !l.trim().is_empty() && !l.starts_with('#'),
            Err(_) => true,
        }))
}

/// JSONL corpus with `doc_id` and `text` fields. Blank lines and lines
/// starting with `#` are skipped.
pub fn load_corpus(path: &Path, max_doc_len: usize) -> Result<Vec<TokenizedDocument>> {
    let mut docs = Vec::new();
    for entry in content_lines(path)? {
        let (line_no, line) = entry?;
        let parsed: CorpusLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        let doc = tokenize(parsed.doc_id, &parsed.text, max_doc_len)
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        docs.push(doc);
    }
    Ok(docs)
}

/// TSV queries `qid<TAB>text`.
pub fn load_queries(path: &Path, max_doc_len: usize) -> Result<Vec<TokenizedDocument>> {
    let mut queries = Vec::new();
    for entry in content_lines(path)? {
        let (line_no, line) = entry?;
        let (qid, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, line_no, "expected `qid<TAB>text`"))?;
        let query = tokenize(qid.trim(), text, max_doc_len)
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        queries.push(query);
    }
    Ok(queries)
}

/// TREC qrels `qid 0 docid grade`.
pub fn load_qrels(path: &Path) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for entry in content_lines(path)? {
        let (line_no, line) = entry?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 4 fields, got {}", fields.len()),
            ));
        }
        let grade: i32 = fields[3]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("invalid grade `{}`", fields[3])))?;
        qrels
            .entry(fields[0].to_owned())
            .or_default()
            .insert(fields[2].to_owned(), grade);
    }
    Ok(qrels)
}
