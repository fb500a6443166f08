//! Post-norm transformer encoder layer with a hand-written backward pass.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::params::EncoderSlots;

pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

pub struct LayerNormCache {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
}

pub fn layer_norm(
    x: &Array2<f64>,
    gamma: ArrayView2<f64>,
    beta: ArrayView2<f64>,
) -> (Array2<f64>, LayerNormCache) {
    let e = x.ncols() as f64;
    let mut normalized = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in normalized.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / e;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / e;
        *s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row *= *s;
    }
    let out = &normalized * &gamma + beta;
    (
        out,
        LayerNormCache {
            normalized,
            inv_std,
        },
    )
}

/// Returns the input gradient and accumulates gain and bias gradients.
fn layer_norm_backward(
    dout: &Array2<f64>,
    cache: &LayerNormCache,
    gamma: ArrayView2<f64>,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Array2<f64> {
    let e = dout.ncols() as f64;
    for (j, (dg, db)) in dgamma.iter_mut().zip(dbeta.iter_mut()).enumerate() {
        let col = dout.column(j);
        *dg += col.dot(&cache.normalized.column(j));
        *db += col.sum();
    }
    let dnorm = dout * &gamma;
    let mut dx = Array2::zeros(dout.raw_dim());
    for r in 0..dout.nrows() {
        let dn = dnorm.row(r);
        let xn = cache.normalized.row(r);
        let mean_dn = dn.sum() / e;
        let mean_dn_xn = dn.dot(&xn) / e;
        let s = cache.inv_std[r];
        for j in 0..dout.ncols() {
            dx[[r, j]] = s * (dn[j] - mean_dn - xn[j] * mean_dn_xn);
        }
    }
    dx
}

fn add_row_sums(dst: &mut [f64], m: &Array2<f64>) {
    for (d, s) in dst.iter_mut().zip(m.sum_axis(Axis(0))) {
        *d += s;
    }
}

fn add_into(dst: &mut [f64], m: &Array2<f64>) {
    for (d, s) in dst.iter_mut().zip(m.iter()) {
        *d += s;
    }
}

/// Activations recorded by [`encoder_forward`] for the backward pass.
pub struct EncoderCache {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    heads: Array2<f64>,
    hidden: Array2<f64>,
    ln1: LayerNormCache,
    pre_act: Array2<f64>,
    act: Array2<f64>,
    ln2: LayerNormCache,
}

fn affine(x: &Array2<f64>, w: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    x.dot(&w) + b
}

/// Full self-attention over all rows of `x`, followed by a GELU feed-forward
/// network; residual connections with layer norm after each sublayer.
pub fn encoder_forward(
    x: &Array2<f64>,
    p: &EncoderSlots,
    data: &[f64],
    num_heads: usize,
) -> (Array2<f64>, EncoderCache) {
    let e = x.ncols();
    let dh = e / num_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = affine(x, p.wq.mat(data), p.bq.mat(data));
    let k = affine(x, p.wk.mat(data), p.bk.mat(data));
    let v = affine(x, p.wv.mat(data), p.bv.mat(data));
    let mut heads = Array2::zeros((x.nrows(), e));
    let mut attn = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        softmax_rows(&mut scores);
        heads.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        attn.push(scores);
    }
    let projected = affine(&heads, p.wo.mat(data), p.bo.mat(data));
    let (hidden, ln1) = layer_norm(
        &(x + &projected),
        p.ln1_gamma.mat(data),
        p.ln1_beta.mat(data),
    );
    let pre_act = affine(&hidden, p.w1.mat(data), p.b1.mat(data));
    let act = pre_act.mapv(gelu);
    let ff = affine(&act, p.w2.mat(data), p.b2.mat(data));
    let (out, ln2) = layer_norm(
        &(&hidden + &ff),
        p.ln2_gamma.mat(data),
        p.ln2_beta.mat(data),
    );
    let cache = EncoderCache {
        input: x.clone(),
        q,
        k,
        v,
        attn,
        heads,
        hidden,
        ln1,
        pre_act,
        act,
        ln2,
    };
    (out, cache)
}

/// Accumulates parameter gradients into `grad` and returns the gradient with
/// respect to the layer input.
pub fn encoder_backward(
    dout: &Array2<f64>,
    cache: &EncoderCache,
    p: &EncoderSlots,
    data: &[f64],
    grad: &mut [f64],
    num_heads: usize,
) -> Array2<f64> {
    let e = dout.ncols();
    let dh = e / num_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let (g2, b2) = split_pair(grad, p.ln2_gamma, p.ln2_beta);
    let dres2 = layer_norm_backward(dout, &cache.ln2, p.ln2_gamma.mat(data), g2, b2);

    add_into(&mut grad[p.w2.range()], &cache.act.t().dot(&dres2));
    add_row_sums(&mut grad[p.b2.range()], &dres2);
    let mut dpre = dres2.dot(&p.w2.mat(data).t());
    dpre.zip_mut_with(&cache.pre_act, |d, &u| *d *= gelu_grad(u));
    add_into(&mut grad[p.w1.range()], &cache.hidden.t().dot(&dpre));
    add_row_sums(&mut grad[p.b1.range()], &dpre);
    let dhidden = dres2 + dpre.dot(&p.w1.mat(data).t());

    let (g1, b1) = split_pair(grad, p.ln1_gamma, p.ln1_beta);
    let dres1 = layer_norm_backward(&dhidden, &cache.ln1, p.ln1_gamma.mat(data), g1, b1);

    add_into(&mut grad[p.wo.range()], &cache.heads.t().dot(&dres1));
    add_row_sums(&mut grad[p.bo.range()], &dres1);
    let dheads = dres1.dot(&p.wo.mat(data).t());

    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dk = Array2::zeros(cache.k.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for (h, a) in cache.attn.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let dhead = dheads.slice(cols);
        let da = dhead.dot(&cache.v.slice(cols).t());
        dv.slice_mut(cols).assign(&a.t().dot(&dhead));
        let mut ds = da;
        for (mut row, arow) in ds.rows_mut().into_iter().zip(a.rows()) {
            let inner = row.dot(&arow);
            row.zip_mut_with(&arow, |d, &p| *d = p * (*d - inner));
        }
        ds *= scale;
        dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
    }

    let mut dx = dres1;
    for (d, w, b) in [(&dq, p.wq, p.bq), (&dk, p.wk, p.bk), (&dv, p.wv, p.bv)] {
        add_into(&mut grad[w.range()], &cache.input.t().dot(d));
        add_row_sums(&mut grad[b.range()], d);
        dx += &d.dot(&w.mat(data).t());
    }
    dx
}

fn split_pair(
    grad: &mut [f64],
    a: super::params::Slot,
    b: super::params::Slot,
) -> (&mut [f64], &mut [f64]) {
    debug_assert_eq!(a.offset + a.len(), b.offset);
    let (head, tail) = grad[a.offset..b.offset + b.len()].split_at_mut(a.len());
    (head, tail)
}
