use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Shapes of the circle transformer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub num_heads: usize,
    pub num_blocks: usize,
    pub ffn_dim: usize,
    /// Passage length in document tokens (the CLS token is extra).
    pub window_size: usize,
    pub max_subgraphs: usize,
    pub vocab_hash_size: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            num_heads: 2,
            num_blocks: 2,
            ffn_dim: 128,
            window_size: 128,
            max_subgraphs: 16,
            vocab_hash_size: 65_536,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.embed_dim == 0
            || self.num_heads == 0
            || !self.embed_dim.is_multiple_of(self.num_heads)
        {
            return bad("embed_dim must be a positive multiple of num_heads");
        }
        if self.num_blocks == 0 {
            return bad("num_blocks must be at least 1");
        }
        if self.ffn_dim == 0 {
            return bad("ffn_dim must be at least 1");
        }
        if self.window_size < 2 {
            return bad("window_size must be at least 2");
        }
        if self.max_subgraphs == 0 {
            return bad("max_subgraphs must be at least 1");
        }
        if self.vocab_hash_size == 0 {
            return bad("vocab_hash_size must be at least 1");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }
}

/// A rectangular block of the flat parameter buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn mat<'a>(&self, data: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &data[self.range()]).expect("slot shape")
    }

    pub fn mat_mut<'a>(&self, data: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
        ArrayViewMut2::from_shape((self.rows, self.cols), &mut data[self.range()])
            .expect("slot shape")
    }

    pub fn vec<'a>(&self, data: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&data[self.range()])
    }

    pub fn vec_mut<'a>(&self, data: &'a mut [f64]) -> ArrayViewMut1<'a, f64> {
        ArrayViewMut1::from(&mut data[self.range()])
    }
}

/// Slots of one post-norm transformer encoder layer. Projection matrices are
/// stored input-major (`in × out`) so a row vector is multiplied on the left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderSlots {
    pub wq: Slot,
    pub bq: Slot,
    pub wk: Slot,
    pub bk: Slot,
    pub wv: Slot,
    pub bv: Slot,
    pub wo: Slot,
    pub bo: Slot,
    pub ln1_gamma: Slot,
    pub ln1_beta: Slot,
    pub w1: Slot,
    pub b1: Slot,
    pub w2: Slot,
    pub b2: Slot,
    pub ln2_gamma: Slot,
    pub ln2_beta: Slot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockSlots {
    pub intra: EncoderSlots,
    pub inter: EncoderSlots,
}

/// Parameter order of the flat buffer, which is also the checkpoint order:
/// token embeddings, CLS embedding, per block (intra encoder, inter encoder),
/// fusion matrix, score vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub token_embed: Slot,
    pub cls: Slot,
    pub blocks: Vec<BlockSlots>,
    pub fusion: Slot,
    pub score: Slot,
    pub total: usize,
}

struct Cursor(usize);

impl Cursor {
    fn take(&mut self, rows: usize, cols: usize) -> Slot {
        let slot = Slot {
            offset: self.0,
            rows,
            cols,
        };
        self.0 += rows * cols;
        slot
    }

    fn encoder(&mut self, e: usize, f: usize) -> EncoderSlots {
        EncoderSlots {
            wq: self.take(e, e),
            bq: self.take(1, e),
            wk: self.take(e, e),
            bk: self.take(1, e),
            wv: self.take(e, e),
            bv: self.take(1, e),
            wo: self.take(e, e),
            bo: self.take(1, e),
            ln1_gamma: self.take(1, e),
            ln1_beta: self.take(1, e),
            w1: self.take(e, f),
            b1: self.take(1, f),
            w2: self.take(f, e),
            b2: self.take(1, e),
            ln2_gamma: self.take(1, e),
            ln2_beta: self.take(1, e),
        }
    }
}

impl Layout {
    pub fn new(config: &ModelConfig) -> Self {
        let (e, f) = (config.embed_dim, config.ffn_dim);
        let mut c = Cursor(0);
        let token_embed = c.take(config.vocab_hash_size, e);
        let cls = c.take(1, e);
        let blocks = (0..config.num_blocks)
            .map(|_| BlockSlots {
                intra: c.encoder(e, f),
                inter: c.encoder(e, f),
            })
            .collect();
        let fusion = c.take(2 * e, e);
        let score = c.take(1, e);
        Self {
            token_embed,
            cls,
            blocks,
            fusion,
            score,
            total: c.0,
        }
    }
}

/// All trainable parameters in one contiguous buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub layout: Layout,
    pub data: Vec<f64>,
}

impl ModelParams {
    /// Seeded initialization: token and CLS embeddings `N(0, 1)`, projection
    /// matrices `N(0, 1/fan_in)`, zero biases, unit layer-norm gains, fusion
    /// `[½I; ½I]` plus `N(0, 0.02²)` noise, score vector `N(0, 1/E)`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        let mut data = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut fill = |data: &mut [f64], slot: Slot, std: f64| {
            let normal = Normal::new(0.0, std).expect("std is positive");
            for x in &mut data[slot.range()] {
                *x = normal.sample(&mut rng);
            }
        };
        let e = config.embed_dim as f64;
        let f = config.ffn_dim as f64;
        fill(&mut data, layout.token_embed, 1.0);
        fill(&mut data, layout.cls, 1.0);
        for block in &layout.blocks {
            for enc in [block.intra, block.inter] {
                for w in [enc.wq, enc.wk, enc.wv, enc.wo, enc.w1] {
                    fill(&mut data, w, 1.0 / e.sqrt());
                }
                fill(&mut data, enc.w2, 1.0 / f.sqrt());
                for g in [enc.ln1_gamma, enc.ln2_gamma] {
                    data[g.range()].fill(1.0);
                }
            }
        }
        fill(&mut data, layout.fusion, 0.02);
        {
            let mut wc = layout.fusion.mat_mut(&mut data);
            for i in 0..config.embed_dim {
                wc[[i, i]] += 0.5;
                wc[[config.embed_dim + i, i]] += 0.5;
            }
        }
        fill(&mut data, layout.score, 1.0 / e.sqrt());
        Ok(Self {
            config: config.clone(),
            layout,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
