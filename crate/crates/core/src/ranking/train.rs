//! Listwise training with AdamW, and re-ranking with a trained model.

use std::collections::{BTreeMap, HashMap};

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{forward_document, group_loss_and_grad, DocumentInput, ModelParams};
use crate::pipeline::{document_input, pair_seed, PipelineConfig};
use crate::text::{build_vocab, Qrels, TokenizedDocument, Vocabulary};

use super::groups::{build_groups, Candidates, DEFAULT_NEG_RATIO};
use super::metrics::{rank_scores, RunEntry, RunFile};

/// Documents, queries and the vocabulary built over the documents.
#[derive(Clone, Debug)]
pub struct Collection {
    pub docs: BTreeMap<String, TokenizedDocument>,
    pub queries: BTreeMap<String, TokenizedDocument>,
    pub vocab: Vocabulary,
}

impl Collection {
    pub fn new(corpus: Vec<TokenizedDocument>, queries: Vec<TokenizedDocument>) -> Result<Self> {
        let vocab = build_vocab(&corpus)?;
        Ok(Self {
            docs: corpus.into_iter().map(|d| (d.doc_id.clone(), d)).collect(),
            queries: queries.into_iter().map(|q| (q.doc_id.clone(), q)).collect(),
            vocab,
        })
    }

    pub fn doc(&self, id: &str) -> Result<&TokenizedDocument> {
        self.docs.get(id).ok_or_else(|| Error::UnknownId {
            kind: "document",
            id: id.to_owned(),
        })
    }

    pub fn query(&self, id: &str) -> Result<&TokenizedDocument> {
        self.queries.get(id).ok_or_else(|| Error::UnknownId {
            kind: "query",
            id: id.to_owned(),
        })
    }

    /// Model input for a (query, document) pair; the graph seed is derived
    /// from `graph_seed` and both ids.
    pub fn input(
        &self,
        query_id: &str,
        doc_id: &str,
        pipeline: &PipelineConfig,
        params: &ModelParams,
        graph_seed: u64,
    ) -> Result<DocumentInput> {
        document_input(
            self.doc(doc_id)?,
            self.query(query_id)?,
            &self.vocab,
            pipeline,
            &params.config,
            pair_seed(graph_seed, query_id, doc_id),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay.
pub struct AdamW {
    config: AdamWConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl AdamW {
    pub fn new(config: AdamWConfig, num_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        params
            .par_iter_mut()
            .zip(self.m.par_iter_mut())
            .zip(self.v.par_iter_mut())
            .zip(grad.par_iter())
            .for_each(|(((p, m), v), &g)| {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let update = (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
                *p -= c.learning_rate * (update + c.weight_decay * *p);
            });
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub pipeline: PipelineConfig,
    pub optimizer: AdamWConfig,
    pub epochs: usize,
    pub neg_ratio: usize,
    /// Seeds group sampling, shuffling and graph sampling.
    pub seed: u64,
    /// Stop after this many optimizer steps.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            optimizer: AdamWConfig::default(),
            epochs: 1,
            neg_ratio: DEFAULT_NEG_RATIO,
            seed: 0,
            max_steps: None,
        }
    }
}

pub struct TrainOutcome {
    pub params: ModelParams,
    /// `(step, loss)` for every optimizer step, 1-based.
    pub losses: Vec<(usize, f64)>,
}

/// One optimizer step per training group (one positive plus its negatives).
pub fn train(
    collection: &Collection,
    qrels: &Qrels,
    candidates: &Candidates,
    initial: ModelParams,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut params = initial;
    let mut optimizer = AdamW::new(config.optimizer.clone(), params.len());
    let mut groups = build_groups(qrels, candidates, config.neg_ratio, config.seed);
    let mut cache: HashMap<(String, String), DocumentInput> = HashMap::new();
    let mut losses = Vec::new();
    let max_steps = config.max_steps.unwrap_or(usize::MAX);
    'epochs: for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64));
        groups.shuffle(&mut rng);
        for group in &groups {
            if losses.len() >= max_steps {
                break 'epochs;
            }
            let missing: Vec<&str> = group
                .doc_ids()
                .filter(|d| !cache.contains_key(&(group.query_id.clone(), d.to_string())))
                .collect();
            let built = missing
                .par_iter()
                .map(|d| {
                    collection.input(&group.query_id, d, &config.pipeline, &params, config.seed)
                })
                .collect::<Result<Vec<_>>>()?;
            for (d, input) in missing.into_iter().zip(built) {
                cache.insert((group.query_id.clone(), d.to_owned()), input);
            }
            let inputs: Vec<DocumentInput> = group
                .doc_ids()
                .map(|d| cache[&(group.query_id.clone(), d.to_owned())].clone())
                .collect();
            let (loss, grad) = group_loss_and_grad(&params, &inputs, 0)?;
            let step = losses.len() + 1;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { step, loss });
            }
            optimizer.step(&mut params.data, &grad);
            losses.push((step, loss));
            if step % 25 == 0 {
                info!("epoch {epoch} step {step} loss {loss:.5}");
            }
        }
    }
    Ok(TrainOutcome { params, losses })
}

/// Scores every candidate through the full pipeline and ranks them.
pub fn rerank(
    params: &ModelParams,
    collection: &Collection,
    query_id: &str,
    candidates: &[String],
    pipeline: &PipelineConfig,
    graph_seed: u64,
) -> Result<Vec<RunEntry>> {
    let scored = candidates
        .par_iter()
        .map(|d| {
            let input = collection.input(query_id, d, pipeline, params, graph_seed)?;
            Ok((d.clone(), forward_document(&input, params)?.score))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_scores(scored))
}

pub fn rerank_all(
    params: &ModelParams,
    collection: &Collection,
    candidates: &Candidates,
    pipeline: &PipelineConfig,
    graph_seed: u64,
) -> Result<RunFile> {
    candidates
        .iter()
        .map(|(qid, docs)| {
            Ok((
                qid.clone(),
                rerank(params, collection, qid, docs, pipeline, graph_seed)?,
            ))
        })
        .collect()
}
