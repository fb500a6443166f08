//! Circle inputs: friend-circle subgraphs and fixed-size passages, each with
//! the query appended, and their embedding.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::text::TokenizedDocument;

use super::params::ModelParams;

/// Query tokens are placed at `QUERY_POSITION_OFFSET + j` so their positional
/// encodings never coincide with a document position.
pub const QUERY_POSITION_OFFSET: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CircleKind {
    Subgraph,
    Passage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenSlot {
    Cls,
    Bucket(usize),
}

/// Members (central node first) with their absolute document positions, and
/// the hashed query tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleInput {
    pub kind: CircleKind,
    pub slots: Vec<TokenSlot>,
    pub positions: Vec<usize>,
    pub query: Vec<usize>,
}

impl CircleInput {
    pub fn num_members(&self) -> usize {
        self.slots.len()
    }

    pub fn num_rows(&self) -> usize {
        self.slots.len() + self.query.len()
    }
}

/// Circles of one (document, query) pair: subgraphs first, then passages.
#[derive(Clone, Debug, PartialEq)]
pub struct DocumentInput {
    pub circles: Vec<CircleInput>,
}

pub fn bucket(token: u64, vocab_hash_size: usize) -> usize {
    (token % vocab_hash_size as u64) as usize
}

pub fn build_circles(
    doc: &TokenizedDocument,
    query: &TokenizedDocument,
    partition: &Partition,
    window_size: usize,
    vocab_hash_size: usize,
) -> DocumentInput {
    let query_buckets: Vec<usize> = query
        .tokens
        .iter()
        .map(|&t| bucket(t, vocab_hash_size))
        .collect();
    let mut circles = Vec::new();
    for s in &partition.subgraphs {
        circles.push(CircleInput {
            kind: CircleKind::Subgraph,
            slots: s
                .members
                .iter()
                .map(|&m| TokenSlot::Bucket(bucket(doc.tokens[m], vocab_hash_size)))
                .collect(),
            positions: s.members.clone(),
            query: query_buckets.clone(),
        });
    }
    for start in (0..doc.len()).step_by(window_size) {
        let end = (start + window_size).min(doc.len());
        let mut slots = vec![TokenSlot::Cls];
        let mut positions = vec![start];
        for i in start..end {
            slots.push(TokenSlot::Bucket(bucket(doc.tokens[i], vocab_hash_size)));
            positions.push(i);
        }
        circles.push(CircleInput {
            kind: CircleKind::Passage,
            slots,
            positions,
            query: query_buckets.clone(),
        });
    }
    DocumentInput { circles }
}

/// Sinusoidal encoding: `sin(pos / 10000^(2i/E))` at even and the matching
/// cosine at odd coordinates.
pub fn positional_encoding(position: usize, dim: usize) -> Array1<f64> {
    Array1::from_shape_fn(dim, |j| {
        let freq = 10_000f64.powf(-((j / 2 * 2) as f64) / dim as f64);
        let angle = position as f64 * freq;
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Token (or CLS) embedding plus positional encoding for every member row,
/// followed by the query rows.
pub fn embed(circle: &CircleInput, params: &ModelParams) -> Result<Array2<f64>> {
    if circle.slots.is_empty() {
        return Err(Error::EmptyCircle);
    }
    let e = params.config.embed_dim;
    let table = params.layout.token_embed.mat(&params.data);
    let cls = params.layout.cls.vec(&params.data);
    let mut rows = Array2::zeros((circle.num_rows(), e));
    let members = circle.slots.iter().zip(&circle.positions);
    let query = circle
        .query
        .iter()
        .enumerate()
        .map(|(j, &b)| (TokenSlot::Bucket(b), QUERY_POSITION_OFFSET + j));
    for (mut row, (slot, pos)) in rows
        .rows_mut()
        .into_iter()
        .zip(members.map(|(s, &p)| (*s, p)).chain(query))
    {
        match slot {
            TokenSlot::Cls => row.assign(&cls),
            TokenSlot::Bucket(b) => row.assign(&table.row(b)),
        }
        row += &positional_encoding(pos, e);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelConfig;
    use crate::partition::{PartitionMode, Subgraph};
    use crate::text::tokenize;

    fn params() -> ModelParams {
        ModelParams::init(&ModelConfig {
            embed_dim: 8,
            num_heads: 2,
            num_blocks: 1,
            ffn_dim: 8,
            window_size: 4,
            max_subgraphs: 2,
            vocab_hash_size: 50,
            init_seed: 1,
        })
        .unwrap()
    }

    fn circle(slots: Vec<TokenSlot>, positions: Vec<usize>) -> CircleInput {
        CircleInput {
            kind: CircleKind::Subgraph,
            slots,
            positions,
            query: vec![],
        }
    }

    #[test]
    fn same_token_same_position_same_vector() {
        let p = params();
        let a = embed(
            &circle(vec![TokenSlot::Bucket(3), TokenSlot::Bucket(7)], vec![5, 9]),
            &p,
        )
        .unwrap();
        let b = embed(
            &circle(vec![TokenSlot::Bucket(1), TokenSlot::Bucket(3)], vec![2, 5]),
            &p,
        )
        .unwrap();
        assert_eq!(a.row(0), b.row(1));
    }

    #[test]
    fn positions_shift_by_encoding_only() {
        let p = params();
        let a = embed(&circle(vec![TokenSlot::Bucket(3)], vec![5]), &p).unwrap();
        let b = embed(&circle(vec![TokenSlot::Bucket(3)], vec![40]), &p).unwrap();
        let diff = &a.row(0) - &b.row(0);
        let expected = positional_encoding(5, 8) - positional_encoding(40, 8);
        for (x, y) in diff.iter().zip(expected.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_circle_is_an_error() {
        assert!(matches!(
            embed(&circle(vec![], vec![]), &params()),
            Err(Error::EmptyCircle)
        ));
    }

    #[test]
    fn builds_subgraphs_then_passages() {
        let doc = tokenize("d", "a b c d e f g h i j", 100).unwrap();
        let query = tokenize("q", "c x", 100).unwrap();
        let partition = Partition {
            mode: PartitionMode::NodeLevel,
            k: 2,
            cap: 128,
            subgraphs: vec![Subgraph {
                rank: 1,
                central_node: 4,
                members: vec![4, 1, 8],
                center_degree: 2,
                consumed_edges: vec![],
            }],
        };
        let input = build_circles(&doc, &query, &partition, 4, 50);
        assert_eq!(input.circles.len(), 1 + 3);
        assert_eq!(input.circles[0].positions, [4, 1, 8]);
        let last = &input.circles[3];
        assert_eq!(last.kind, CircleKind::Passage);
        assert_eq!(last.slots[0], TokenSlot::Cls);
        assert_eq!(last.positions, [8, 8, 9]);
        assert!(input.circles.iter().all(|c| c.query.len() == 2));
    }
}
