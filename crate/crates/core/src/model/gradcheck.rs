//! Analytic gradients against central finite differences on a small random
//! instance.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::partition::PartitionMode;
use crate::patterns::PatternConfig;
use crate::pipeline::{document_input, PipelineConfig};
use crate::text::{build_vocab, tokenize};

use super::loss::{group_loss, group_loss_and_grad};
use super::params::{ModelConfig, ModelParams};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub model: ModelConfig,
    pub doc_len: usize,
    pub group_size: usize,
    pub step: f64,
    /// Lower bound on the relative-error denominator; guards parameters
    /// whose true gradient is near zero.
    pub denominator_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                embed_dim: 16,
                num_heads: 2,
                num_blocks: 2,
                ffn_dim: 32,
                window_size: 6,
                max_subgraphs: 4,
                vocab_hash_size: 31,
                init_seed: 0,
            },
            doc_len: 12,
            group_size: 3,
            step: 1e-4,
            denominator_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub seed: u64,
    pub num_params: usize,
    pub max_circles: usize,
    pub loss: f64,
    pub max_rel_error: f64,
    pub worst_param: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Relative error `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn grad_check(config: &GradCheckConfig, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (0..20).map(|i| format!("t{i}")).collect();
    let query_text = format!("{} {}", words[0], words[1]);
    let query = tokenize("q", &query_text, 16)?;
    let docs = (0..config.group_size)
        .map(|d| {
            let text: Vec<&str> = (0..config.doc_len)
                .map(|_| words.choose(&mut rng).expect("non-empty").as_str())
                .collect();
            tokenize(format!("d{d}"), &text.join(" "), config.doc_len)
        })
        .collect::<Result<Vec<_>>>()?;
    let vocab = build_vocab(&docs)?;
    let pipeline = PipelineConfig {
        patterns: PatternConfig {
            sparsity: 0.7,
            ..Default::default()
        },
        mode: PartitionMode::EdgeLevel,
        max_subgraphs: config.model.max_subgraphs,
        cap: 5,
    };
    let model = ModelConfig {
        init_seed: seed,
        ..config.model.clone()
    };
    let group = docs
        .iter()
        .map(|d| document_input(d, &query, &vocab, &pipeline, &model, rng.random()))
        .collect::<Result<Vec<_>>>()?;
    let positive = rng.random_range(0..group.len());
    let params = ModelParams::init(&model)?;

    let (loss, grad) = group_loss_and_grad(&params, &group, positive)?;
    let h = config.step;
    let numeric: Vec<f64> = (0..params.len())
        .into_par_iter()
        .map_init(
            || params.clone(),
            |p, idx| {
                let orig = p.data[idx];
                p.data[idx] = orig + h;
                let plus = group_loss(p, &group, positive);
                p.data[idx] = orig - h;
                let minus = group_loss(p, &group, positive);
                p.data[idx] = orig;
                Ok((plus? - minus?) / (2.0 * h))
            },
        )
        .collect::<Result<_>>()?;

    let (worst_param, max_rel_error) = grad
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n, config.denominator_floor))
        .enumerate()
        .fold(
            (0, 0.0),
            |best, (i, e)| if e > best.1 { (i, e) } else { best },
        );
    Ok(GradCheckReport {
        seed,
        num_params: params.len(),
        max_circles: group.iter().map(|g| g.circles.len()).max().unwrap_or(0),
        loss,
        max_rel_error,
        worst_param,
        analytic: grad[worst_param],
        numeric: numeric[worst_param],
    })
}
