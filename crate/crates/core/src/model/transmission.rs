//! Iterative intra-/inter-circle information transmission, max pooling over
//! central nodes and linear scoring.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::circle::{embed, DocumentInput, TokenSlot};
use super::layers::{encoder_backward, encoder_forward, EncoderCache};
use super::params::ModelParams;

/// Intra-circle encoder of block `block_index` over one circle's rows
/// (members then query). Returns all row outputs and the central output.
pub fn intra_circle_forward(
    rows: &Array2<f64>,
    params: &ModelParams,
    block_index: usize,
) -> (Array2<f64>, Array1<f64>) {
    let slots = &params.layout.blocks[block_index].intra;
    let (out, _) = encoder_forward(rows, slots, &params.data, params.config.num_heads);
    let central = out.row(0).to_owned();
    (out, central)
}

/// Inter-circle encoder of block `block_index` over the stacked central
/// vectors, one per row.
pub fn inter_circle_forward(
    central: &Array2<f64>,
    params: &ModelParams,
    block_index: usize,
) -> Array2<f64> {
    let slots = &params.layout.blocks[block_index].inter;
    encoder_forward(central, slots, &params.data, params.config.num_heads).0
}

/// `[c_low, c_high] · W^C` with `W^C` of shape `2E × E`.
pub fn fuse_central(
    low: ArrayView1<f64>,
    high: ArrayView1<f64>,
    fusion: ArrayView2<f64>,
) -> Result<Array1<f64>> {
    let e = fusion.ncols();
    if fusion.nrows() != 2 * e {
        return Err(Error::DimensionMismatch {
            expected: 2 * e,
            actual: fusion.nrows(),
        });
    }
    for len in [low.len(), high.len()] {
        if len != e {
            return Err(Error::DimensionMismatch {
                expected: e,
                actual: len,
            });
        }
    }
    Ok(low.dot(&fusion.slice(s![..e, ..])) + high.dot(&fusion.slice(s![e.., ..])))
}

/// Coordinate-wise maximum over rows; ties resolve to the lowest row.
pub fn max_pool(rows: &Array2<f64>) -> (Array1<f64>, Vec<usize>) {
    let mut best = rows.row(0).to_owned();
    let mut argmax = vec![0; rows.ncols()];
    for (r, row) in rows.rows().into_iter().enumerate().skip(1) {
        for (j, &v) in row.iter().enumerate() {
            if v > best[j] {
                best[j] = v;
                argmax[j] = r;
            }
        }
    }
    (best, argmax)
}

struct BlockCache {
    intra: Vec<EncoderCache>,
    low: Array2<f64>,
    inter: EncoderCache,
    high: Array2<f64>,
}

/// Everything the backward pass needs from one document forward.
pub struct ForwardCache {
    blocks: Vec<BlockCache>,
    argmax: Vec<usize>,
}

pub struct DocumentOutput {
    pub embedding: Array1<f64>,
    pub score: f64,
    /// Final inter-circle outputs, one row per circle.
    pub central: Array2<f64>,
    pub cache: Option<ForwardCache>,
}

fn run(input: &DocumentInput, params: &ModelParams, record: bool) -> Result<DocumentOutput> {
    if input.circles.is_empty() {
        return Err(Error::EmptyCircle);
    }
    let heads = params.config.num_heads;
    let data = &params.data;
    let e = params.config.embed_dim;
    let mut rows: Vec<Array2<f64>> = input
        .circles
        .iter()
        .map(|c| embed(c, params))
        .collect::<Result<_>>()?;
    let fusion = params.layout.fusion.mat(data);
    let num_blocks = params.layout.blocks.len();
    let mut caches = Vec::with_capacity(if record { num_blocks } else { 0 });
    let mut high = Array2::zeros((0, e));
    for (b, block) in params.layout.blocks.iter().enumerate() {
        let intra: Vec<(Array2<f64>, EncoderCache)> = rows
            .par_iter()
            .map(|x| encoder_forward(x, &block.intra, data, heads))
            .collect();
        let low = Array2::from_shape_fn((intra.len(), e), |(i, j)| intra[i].0[[0, j]]);
        let (h, inter_cache) = encoder_forward(&low, &block.inter, data, heads);
        high = h;
        let (outs, intra_caches): (Vec<_>, Vec<_>) = intra.into_iter().unzip();
        rows = outs;
        if b + 1 < num_blocks {
            for (i, r) in rows.iter_mut().enumerate() {
                let fused = fuse_central(low.row(i), high.row(i), fusion)?;
                r.row_mut(0).assign(&fused);
            }
        }
        if record {
            caches.push(BlockCache {
                intra: intra_caches,
                low,
                inter: inter_cache,
                high: high.clone(),
            });
        }
    }
    let (embedding, argmax) = max_pool(&high);
    let score = params.layout.score.vec(data).dot(&embedding);
    Ok(DocumentOutput {
        embedding,
        score,
        central: high,
        cache: record.then_some(ForwardCache {
            blocks: caches,
            argmax,
        }),
    })
}

/// Runs all blocks and returns the pooled document embedding and its score.
pub fn forward_document(input: &DocumentInput, params: &ModelParams) -> Result<DocumentOutput> {
    run(input, params, false)
}

/// As [`forward_document`], keeping activations for [`backward_document`].
pub fn forward_document_recorded(
    input: &DocumentInput,
    params: &ModelParams,
) -> Result<DocumentOutput> {
    run(input, params, true)
}

/// Accumulates `d_score · ∂score/∂θ` into `grad`.
pub fn backward_document(
    input: &DocumentInput,
    output: &DocumentOutput,
    d_score: f64,
    params: &ModelParams,
    grad: &mut [f64],
) {
    let cache = output
        .cache
        .as_ref()
        .expect("forward pass was not recorded");
    let data = &params.data;
    let layout = &params.layout;
    let heads = params.config.num_heads;
    let e = params.config.embed_dim;
    let n = input.circles.len();

    let score = layout.score.vec(data);
    for (g, d) in grad[layout.score.range()]
        .iter_mut()
        .zip(output.embedding.iter())
    {
        *g += d_score * d;
    }
    let mut d_high = Array2::zeros((n, e));
    for (j, &r) in cache.argmax.iter().enumerate() {
        d_high[[r, j]] = d_score * score[j];
    }

    let fusion = layout.fusion.mat(data);
    let mut d_rows: Vec<Array2<f64>> = Vec::new();
    let mut d_fusion = Array2::<f64>::zeros((2 * e, e));
    for (b, block_cache) in cache.blocks.iter().enumerate().rev() {
        let block = &layout.blocks[b];
        let mut d_out: Vec<Array2<f64>> = block_cache
            .intra
            .iter()
            .zip(&input.circles)
            .map(|(_, c)| Array2::zeros((c.num_rows(), e)))
            .collect();
        if b + 1 < cache.blocks.len() {
            // rows of the next block's input: pass-through except the fused central row
            let mut d_fused = Array2::zeros((n, e));
            for (i, (dst, src)) in d_out.iter_mut().zip(&d_rows).enumerate() {
                dst.assign(src);
                dst.row_mut(0).fill(0.0);
                d_fused.row_mut(i).assign(&src.row(0));
            }
            let stacked = concatenate(Axis(1), &[block_cache.low.view(), block_cache.high.view()])
                .expect("same rows");
            d_fusion += &stacked.t().dot(&d_fused);
            let d_stacked = d_fused.dot(&fusion.t());
            d_high += &d_stacked.slice(s![.., e..]);
            let d_low_fusion = d_stacked.slice(s![.., ..e]).to_owned();
            for (i, dst) in d_out.iter_mut().enumerate() {
                let mut row = dst.row_mut(0);
                row += &d_low_fusion.row(i);
            }
        }
        let d_low = encoder_backward(&d_high, &block_cache.inter, &block.inter, data, grad, heads);
        for (i, dst) in d_out.iter_mut().enumerate() {
            let mut row = dst.row_mut(0);
            row += &d_low.row(i);
        }
        let results: Vec<(Array2<f64>, Vec<f64>)> = d_out
            .par_iter()
            .zip(&block_cache.intra)
            .map(|(d, c)| {
                let mut local = vec![0.0; block_slot_span(block)];
                let offset = block.intra.wq.offset;
                let shifted = shift_slots(&block.intra, offset);
                let dx = encoder_backward(d, c, &shifted, &data[offset..], &mut local, heads);
                (dx, local)
            })
            .collect();
        let offset = block.intra.wq.offset;
        d_rows = Vec::with_capacity(n);
        for (dx, local) in results {
            for (g, l) in grad[offset..offset + local.len()].iter_mut().zip(&local) {
                *g += l;
            }
            d_rows.push(dx);
        }
        d_high = Array2::zeros((n, e));
    }
    for (g, d) in grad[layout.fusion.range()].iter_mut().zip(d_fusion.iter()) {
        *g += d;
    }

    // embedding layer
    let table = layout.token_embed;
    for (circle, d) in input.circles.iter().zip(&d_rows) {
        for (slot, drow) in circle
            .slots
            .iter()
            .copied()
            .chain(circle.query.iter().map(|&b| TokenSlot::Bucket(b)))
            .zip(d.rows())
        {
            let start = match slot {
                TokenSlot::Cls => layout.cls.offset,
                TokenSlot::Bucket(b) => table.offset + b * e,
            };
            for (g, v) in grad[start..start + e].iter_mut().zip(drow.iter()) {
                *g += v;
            }
        }
    }
}

fn block_slot_span(block: &super::params::BlockSlots) -> usize {
    let s = &block.intra;
    s.ln2_beta.offset + s.ln2_beta.len() - s.wq.offset
}

fn shift_slots(slots: &super::params::EncoderSlots, offset: usize) -> super::params::EncoderSlots {
    let mut out = *slots;
    for slot in [
        &mut out.wq,
        &mut out.bq,
        &mut out.wk,
        &mut out.bk,
        &mut out.wv,
        &mut out.bv,
        &mut out.wo,
        &mut out.bo,
        &mut out.ln1_gamma,
        &mut out.ln1_beta,
        &mut out.w1,
        &mut out.b1,
        &mut out.w2,
        &mut out.b2,
        &mut out.ln2_gamma,
        &mut out.ln2_beta,
    ] {
        slot.offset -= offset;
    }
    out
}
