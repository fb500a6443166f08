//! Binary checkpoint: 8-byte magic, `u32` version, nine `u64` header fields
//! (embed_dim, num_heads, num_blocks, ffn_dim, window_size, max_subgraphs,
//! vocab_hash_size, init_seed, parameter count), then every parameter as a
//! little-endian `f64` in [`Layout`](super::Layout) order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::params::{Layout, ModelConfig, ModelParams};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"SOCFMR\0\x01";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub version: u32,
    pub config: ModelConfig,
    pub num_params: u64,
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_usize(r: &mut impl Read) -> Result<usize> {
    usize::try_from(read_u64(r)?)
        .map_err(|_| Error::Checkpoint("header field overflows usize".into()))
}

fn parse_header(r: &mut impl Read) -> Result<CheckpointHeader> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let config = ModelConfig {
        embed_dim: read_usize(r)?,
        num_heads: read_usize(r)?,
        num_blocks: read_usize(r)?,
        ffn_dim: read_usize(r)?,
        window_size: read_usize(r)?,
        max_subgraphs: read_usize(r)?,
        vocab_hash_size: read_usize(r)?,
        init_seed: read_u64(r)?,
    };
    let num_params = read_u64(r)?;
    Ok(CheckpointHeader {
        version,
        config,
        num_params,
    })
}

pub fn read_header(path: &Path) -> Result<CheckpointHeader> {
    parse_header(&mut BufReader::new(File::open(path)?))
}

pub fn write_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let c = &params.config;
    for field in [
        c.embed_dim,
        c.num_heads,
        c.num_blocks,
        c.ffn_dim,
        c.window_size,
        c.max_subgraphs,
        c.vocab_hash_size,
    ] {
        w.write_all(&(field as u64).to_le_bytes())?;
    }
    w.write_all(&c.init_seed.to_le_bytes())?;
    w.write_all(&(params.data.len() as u64).to_le_bytes())?;
    for x in &params.data {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams> {
    let mut r = BufReader::new(File::open(path)?);
    let header = parse_header(&mut r)?;
    header.config.validate()?;
    let layout = Layout::new(&header.config);
    if layout.total as u64 != header.num_params {
        return Err(Error::Checkpoint(format!(
            "header declares {} parameters, configuration implies {}",
            header.num_params, layout.total
        )));
    }
    let mut bytes = vec![0u8; layout.total * 8];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Checkpoint("truncated parameter section".into()))?;
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Checkpoint("trailing bytes after parameters".into()));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(ModelParams {
        config: header.config,
        layout,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelParams {
        ModelParams::init(&ModelConfig {
            embed_dim: 4,
            num_heads: 1,
            num_blocks: 1,
            ffn_dim: 4,
            window_size: 8,
            max_subgraphs: 2,
            vocab_hash_size: 5,
            init_seed: 42,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let p = small();
        write_checkpoint(&path, &p).unwrap();
        let q = read_checkpoint(&path).unwrap();
        assert_eq!(p, q);
        let header = read_header(&path).unwrap();
        assert_eq!(header.config, p.config);
        assert_eq!(header.num_params, p.len() as u64);
        let size = std::fs::metadata(&path).unwrap().len();
        assert_eq!(size, 8 + 4 + 9 * 8 + 8 * p.len() as u64);
    }

    #[test]
    fn rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        write_checkpoint(&path, &small()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Checkpoint(_))));
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_header(&path), Err(Error::Checkpoint(_))));
    }
}
