//! Flat `key = value` run configuration. `#` starts a comment line, unknown
//! keys are rejected and missing keys keep their defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use socialformer::model::ModelConfig;
use socialformer::partition::PartitionMode;
use socialformer::patterns::PatternConfig;
use socialformer::pipeline::PipelineConfig;
use socialformer::ranking::{AdamWConfig, FixtureConfig, TrainConfig};
use socialformer::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub patterns: PatternConfig,
    pub mode: PartitionMode,
    pub max_subgraphs: usize,
    pub cap: usize,
    pub model: ModelConfig,
    pub optimizer: AdamWConfig,
    pub epochs: usize,
    pub neg_ratio: usize,
    pub max_steps: Option<usize>,
    pub sweep_levels: Vec<f64>,
    pub sweep_seeds: usize,
    pub sweep_doc_len: usize,
    pub num_queries: usize,
    pub candidates_per_query: usize,
    pub mrr_k: usize,
    pub ndcg_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pipeline = PipelineConfig::default();
        let train = TrainConfig::default();
        let fixtures = FixtureConfig::default();
        Self {
            seed: 0,
            corpus: None,
            queries: None,
            qrels: None,
            candidates: None,
            checkpoint: None,
            patterns: pipeline.patterns,
            mode: pipeline.mode,
            max_subgraphs: pipeline.max_subgraphs,
            cap: pipeline.cap,
            model: ModelConfig::default(),
            optimizer: train.optimizer,
            epochs: train.epochs,
            neg_ratio: train.neg_ratio,
            max_steps: None,
            sweep_levels: vec![0.99, 0.97, 0.95, 0.93],
            sweep_seeds: 20,
            sweep_doc_len: 2000,
            num_queries: fixtures.num_queries,
            candidates_per_query: fixtures.candidates_per_query,
            mrr_k: 10,
            ndcg_k: 10,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse_value(key, v.trim()))
        .collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    idx + 1
                ))
            })?;
            config.set(key.trim(), value.trim()).map_err(|e| {
                let msg = match e {
                    Error::InvalidConfig(m) => m,
                    other => other.to_string(),
                };
                Error::InvalidConfig(format!("{}:{}: {msg}", path.display(), idx + 1))
            })?;
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || Some(PathBuf::from(value));
        match key {
            "seed" => self.seed = parse_value(key, value)?,
            "corpus" => self.corpus = path(),
            "queries" => self.queries = path(),
            "qrels" => self.qrels = path(),
            "candidates" => self.candidates = path(),
            "checkpoint" => self.checkpoint = path(),
            "p" => self.patterns.p = parse_value(key, value)?,
            "lambda_sd" => self.patterns.lambdas[0] = parse_value(key, value)?,
            "lambda_sc" => self.patterns.lambdas[1] = parse_value(key, value)?,
            "lambda_dd" => self.patterns.lambdas[2] = parse_value(key, value)?,
            "lambda_dc" => self.patterns.lambdas[3] = parse_value(key, value)?,
            "sparsity" => self.patterns.sparsity = parse_value(key, value)?,
            "max_doc_len" => self.patterns.max_doc_len = parse_value(key, value)?,
            "mode" => self.mode = value.parse()?,
            "max_subgraphs" => self.max_subgraphs = parse_value(key, value)?,
            "cap" => self.cap = parse_value(key, value)?,
            "embed_dim" => self.model.embed_dim = parse_value(key, value)?,
            "num_heads" => self.model.num_heads = parse_value(key, value)?,
            "num_blocks" => self.model.num_blocks = parse_value(key, value)?,
            "ffn_dim" => self.model.ffn_dim = parse_value(key, value)?,
            "window_size" => self.model.window_size = parse_value(key, value)?,
            "vocab_hash_size" => self.model.vocab_hash_size = parse_value(key, value)?,
            "init_seed" => self.model.init_seed = parse_value(key, value)?,
            "learning_rate" => self.optimizer.learning_rate = parse_value(key, value)?,
            "beta1" => self.optimizer.beta1 = parse_value(key, value)?,
            "beta2" => self.optimizer.beta2 = parse_value(key, value)?,
            "adam_eps" => self.optimizer.eps = parse_value(key, value)?,
            "weight_decay" => self.optimizer.weight_decay = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "neg_ratio" => self.neg_ratio = parse_value(key, value)?,
            "max_steps" => self.max_steps = Some(parse_value(key, value)?),
            "sweep_levels" => self.sweep_levels = parse_list(key, value)?,
            "sweep_seeds" => self.sweep_seeds = parse_value(key, value)?,
            "sweep_doc_len" => self.sweep_doc_len = parse_value(key, value)?,
            "num_queries" => self.num_queries = parse_value(key, value)?,
            "candidates_per_query" => self.candidates_per_query = parse_value(key, value)?,
            "mrr_k" => self.mrr_k = parse_value(key, value)?,
            "ndcg_k" => self.ndcg_k = parse_value(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.patterns.validate()?;
        self.model.validate()?;
        if self.cap == 0 {
            return Err(Error::InvalidConfig("cap must be positive".into()));
        }
        if self.mrr_k == 0 || self.ndcg_k == 0 {
            return Err(Error::InvalidConfig(
                "metric cutoffs must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            patterns: self.patterns.clone(),
            mode: self.mode,
            max_subgraphs: self.max_subgraphs,
            cap: self.cap,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            pipeline: self.pipeline(),
            optimizer: self.optimizer.clone(),
            epochs: self.epochs,
            neg_ratio: self.neg_ratio,
            seed: self.seed,
            max_steps: self.max_steps,
        }
    }

    pub fn fixtures(&self) -> FixtureConfig {
        FixtureConfig {
            num_queries: self.num_queries,
            candidates_per_query: self.candidates_per_query,
            seed: self.seed,
            ..Default::default()
        }
    }

    /// The resolved configuration in the same format `load` reads.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("seed", self.seed.to_string());
        for (k, v) in [
            ("corpus", &self.corpus),
            ("queries", &self.queries),
            ("qrels", &self.qrels),
            ("candidates", &self.candidates),
            ("checkpoint", &self.checkpoint),
        ] {
            if let Some(p) = v {
                put(k, p.display().to_string());
            }
        }
        put("p", self.patterns.p.to_string());
        for (k, v) in ["lambda_sd", "lambda_sc", "lambda_dd", "lambda_dc"]
            .iter()
            .zip(self.patterns.lambdas)
        {
            put(k, v.to_string());
        }
        put("sparsity", self.patterns.sparsity.to_string());
        put("max_doc_len", self.patterns.max_doc_len.to_string());
        put("mode", self.mode.to_string());
        put("max_subgraphs", self.max_subgraphs.to_string());
        put("cap", self.cap.to_string());
        let m = &self.model;
        put("embed_dim", m.embed_dim.to_string());
        put("num_heads", m.num_heads.to_string());
        put("num_blocks", m.num_blocks.to_string());
        put("ffn_dim", m.ffn_dim.to_string());
        put("window_size", m.window_size.to_string());
        put("vocab_hash_size", m.vocab_hash_size.to_string());
        put("init_seed", m.init_seed.to_string());
        let o = &self.optimizer;
        put("learning_rate", o.learning_rate.to_string());
        put("beta1", o.beta1.to_string());
        put("beta2", o.beta2.to_string());
        put("adam_eps", o.eps.to_string());
        put("weight_decay", o.weight_decay.to_string());
        put("epochs", self.epochs.to_string());
        put("neg_ratio", self.neg_ratio.to_string());
        if let Some(s) = self.max_steps {
            put("max_steps", s.to_string());
        }
        let levels: Vec<String> = self.sweep_levels.iter().map(f64::to_string).collect();
        put("sweep_levels", levels.join(","));
        put("sweep_seeds", self.sweep_seeds.to_string());
        put("sweep_doc_len", self.sweep_doc_len.to_string());
        put("num_queries", self.num_queries.to_string());
        put(
            "candidates_per_query",
            self.candidates_per_query.to_string(),
        );
        put("mrr_k", self.mrr_k.to_string());
        put("ndcg_k", self.ndcg_k.to_string());
        out
    }
}
