//! The four social-aware attention patterns, their weighted combination and
//! the sparsity scaling that turns the combined matrix into Bernoulli edge
//! probabilities.

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::text::{TermWeights, WeightKind};

/// Dense symmetric `l × l` matrix with entries in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMatrix {
    size: usize,
    values: Vec<f64>,
}

impl ProbabilityMatrix {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            values: vec![0.0; size * size],
        }
    }

    /// Builds a matrix from row-major values without validating them.
    pub fn from_values(size: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != size * size {
            return Err(Error::DimensionMismatch {
                expected: size * size,
                actual: values.len(),
            });
        }
        Ok(Self { size, values })
    }

    fn from_fn(size: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let mut values = vec![0.0; size * size];
        if size > 0 {
            values
                .par_chunks_mut(size)
                .enumerate()
                .for_each(|(i, row)| {
                    for (j, cell) in row.iter_mut().enumerate() {
                        *cell = f(i, j);
                    }
                });
        }
        Self { size, values }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.size..(i + 1) * self.size]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.size).all(|i| (i + 1..self.size).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn is_probability(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.is_finite() && (0.0..=1.0).contains(v))
    }

    /// Sum over cells with `i != j`.
    pub fn off_diagonal_sum(&self) -> f64 {
        let diag: f64 = (0..self.size).map(|i| self.get(i, i)).sum();
        self.values.iter().sum::<f64>() - diag
    }
}

/// Hyperparameters of graph construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternConfig {
    /// Distance scale in tokens.
    pub p: f64,
    /// Weights of static distance, static centrality, dynamic distance and
    /// dynamic centrality, in that order.
    pub lambdas: [f64; 4],
    pub sparsity: f64,
    pub max_doc_len: usize,
}

impl Default for PatternConfig {
    fn default() -> Self {
        Self {
            p: 50.0,
            lambdas: [0.25; 4],
            sparsity: 0.93,
            max_doc_len: crate::text::DEFAULT_MAX_DOC_LEN,
        }
    }
}

impl PatternConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "p must be positive, got {}",
                self.p
            )));
        }
        if self.lambdas.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidConfig(
                "lambda weights must be non-negative".into(),
            ));
        }
        let total: f64 = self.lambdas.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "lambda weights must sum to 1, got {total}"
            )));
        }
        if !(self.sparsity > 0.0 && self.sparsity < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sparsity must lie in (0, 1), got {}",
                self.sparsity
            )));
        }
        if self.max_doc_len == 0 {
            return Err(Error::InvalidConfig(
                "max_doc_len must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Inverse-square decay with token distance: `1 / (1 + |i - j| / p)^2`.
pub fn static_distance_matrix(l: usize, p: f64) -> Result<ProbabilityMatrix> {
    if l == 0 {
        return Err(Error::EmptySequence);
    }
    if p.is_nan() || p <= 0.0 {
        return Err(Error::InvalidConfig(format!("p must be positive, got {p}")));
    }
    Ok(ProbabilityMatrix::from_fn(l, |i, j| {
        let d = i.abs_diff(j) as f64 / p;
        1.0 / ((1.0 + d) * (1.0 + d))
    }))
}

/// Square-root smoothing followed by min-max normalization. A constant
/// input maps to the all-zero matrix.
pub fn normalize_f(size: usize, products: &[f64]) -> Result<ProbabilityMatrix> {
    if products.len() != size * size {
        return Err(Error::DimensionMismatch {
            expected: size * size,
            actual: products.len(),
        });
    }
    if let Some(idx) = products.iter().position(|&v| v < 0.0 || v.is_nan()) {
        return Err(Error::NegativeWeight {
            row: idx / size.max(1),
            col: idx % size.max(1),
            value: products[idx],
        });
    }
    let smoothed: Vec<f64> = products.par_iter().map(|v| v.sqrt()).collect();
    let (lo, hi) = smoothed
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if smoothed.is_empty() || hi <= lo {
        return Ok(ProbabilityMatrix::zeros(size));
    }
    let span = hi - lo;
    let values = smoothed
        .into_par_iter()
        .map(|s| ((s - lo) / span).clamp(0.0, 1.0))
        .collect();
    Ok(ProbabilityMatrix { size, values })
}

fn outer_normalized(weights: &TermWeights) -> Result<ProbabilityMatrix> {
    let l = weights.len();
    if let Some(i) = weights
        .values
        .iter()
        .position(|&w| w < 0.0 || !w.is_finite())
    {
        return Err(Error::NegativeWeight {
            row: i,
            col: i,
            value: weights.values[i],
        });
    }
    let w = &weights.values;
    let mut products = vec![0.0; l * l];
    if l > 0 {
        products.par_chunks_mut(l).enumerate().for_each(|(i, row)| {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = w[i] * w[j];
            }
        });
    }
    normalize_f(l, &products)
}

pub fn static_centrality_matrix(weights: &TermWeights) -> Result<ProbabilityMatrix> {
    outer_normalized(weights)
}

/// Mean inverse distance to the exact query matches; all zeros when the
/// query does not occur in the document.
pub fn dynamic_distance_weights(match_pos: &[usize], l: usize, p: f64) -> TermWeights {
    let n = match_pos.len();
    let values = if n == 0 {
        vec![0.0; l]
    } else {
        (0..l)
            .map(|i| {
                match_pos
                    .iter()
                    .map(|&m| 1.0 / (1.0 + i.abs_diff(m) as f64 / p))
                    .sum::<f64>()
                    / n as f64
            })
            .collect()
    };
    TermWeights {
        kind: WeightKind::DynamicDistance,
        values,
    }
}

pub fn dynamic_distance_matrix(weights: &TermWeights) -> Result<ProbabilityMatrix> {
    outer_normalized(weights)
}

pub fn dynamic_centrality_matrix(weights: &TermWeights) -> Result<ProbabilityMatrix> {
    outer_normalized(weights)
}

/// `λ1·P_sd + λ2·P_sc + λ3·P_dd + λ4·P_dc`.
pub fn combine(patterns: [&ProbabilityMatrix; 4], lambdas: [f64; 4]) -> Result<ProbabilityMatrix> {
    let size = patterns[0].size;
    for p in &patterns[1..] {
        if p.size != size {
            return Err(Error::DimensionMismatch {
                expected: size,
                actual: p.size,
            });
        }
    }
    let values = (0..size * size)
        .into_par_iter()
        .map(|idx| {
            let v: f64 = patterns
                .iter()
                .zip(lambdas)
                .map(|(p, l)| l * p.values[idx])
                .sum();
            v.clamp(0.0, 1.0)
        })
        .collect();
    Ok(ProbabilityMatrix { size, values })
}

/// Result of scaling a probability matrix to an expected edge budget.
#[derive(Clone, Debug)]
pub struct ScaledProbabilities {
    pub mu: f64,
    pub scaled: ProbabilityMatrix,
    /// Set when the budget exceeds what clamping at 1 can deliver.
    pub budget_unreachable: bool,
}

/// Expected count of off-diagonal cells `l(l-1)(1 - sparsity)`, so that the
/// expected fraction of absent unordered pairs equals `sparsity`.
pub fn sparsity_budget(l: usize, sparsity: f64) -> f64 {
    (l * l.saturating_sub(1)) as f64 * (1.0 - sparsity)
}

/// Relative tolerance on the clamped sum reached by [`solve_scale`].
pub const MU_TOLERANCE: f64 = 1e-9;

fn clamped_sum(values: &[f64], mu: f64) -> f64 {
    values.par_iter().map(|&v| (v / mu).min(1.0)).sum()
}

/// Finds `mu` such that `Σ min(v / mu, 1) = budget` by bisection. Returns
/// the saturating `mu` and `true` when the budget cannot be reached.
pub fn solve_scale(values: &[f64], budget: f64) -> (f64, bool) {
    let positive = values.iter().filter(|&&v| v > 0.0).count();
    if positive == 0 || budget.is_nan() || budget <= 0.0 {
        return (1.0, budget > 0.0);
    }
    let min_pos = values
        .iter()
        .copied()
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if budget >= positive as f64 {
        // every positive cell saturates at mu = min_pos
        return (min_pos, budget > positive as f64);
    }
    let total: f64 = values.iter().sum();
    // g(lo) = positive > budget and g(hi) <= total / hi = budget
    let (mut lo, mut hi) = (min_pos, total / budget);
    let mut mu = hi;
    for _ in 0..200 {
        mu = 0.5 * (lo + hi);
        let g = clamped_sum(values, mu);
        if (g - budget).abs() <= MU_TOLERANCE * budget {
            break;
        }
        if g > budget {
            lo = mu;
        } else {
            hi = mu;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    (mu, false)
}

/// Scales `p` so that the expected number of off-diagonal ones after
/// clamping equals `budget`. The diagonal of the result is zero.
pub fn solve_mu_for_budget(p: &ProbabilityMatrix, budget: f64) -> ScaledProbabilities {
    let l = p.size;
    let off_diag: Vec<f64> = (0..l)
        .flat_map(|i| (0..l).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| p.get(i, j))
        .collect();
    let (mu, budget_unreachable) = solve_scale(&off_diag, budget);
    if budget_unreachable {
        warn!("sparsity budget {budget:.3} unreachable for l = {l}; returning saturated probabilities");
    }
    let scaled = ProbabilityMatrix::from_fn(l, |i, j| {
        if i == j {
            0.0
        } else {
            (p.get(i, j) / mu).min(1.0)
        }
    });
    ScaledProbabilities {
        mu,
        scaled,
        budget_unreachable,
    }
}

pub fn solve_mu(p: &ProbabilityMatrix, sparsity: f64) -> Result<ScaledProbabilities> {
    if !(sparsity > 0.0 && sparsity < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "sparsity must lie in (0, 1), got {sparsity}"
        )));
    }
    Ok(solve_mu_for_budget(p, sparsity_budget(p.size, sparsity)))
}
