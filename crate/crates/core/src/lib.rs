//! Social-network-inspired sparse token graphs, friend-circle partitioning and
//! a two-stage circle transformer for long document ranking.

pub mod error;
pub mod export;
pub mod model;
pub mod partition;
pub mod patterns;
pub mod pipeline;
pub mod ranking;
pub mod sampler;
pub mod text;

pub use error::{Error, Result};
