//! Topical node embeddings from random walks.
//!
//! Walks over a graph become a text corpus. A skip-gram model embeds the
//! nodes, a topic or community model assigns each walk token a topic, and the
//! final representation of a node is its own vector concatenated with the
//! posterior-weighted mix of topic vectors.

pub mod community;
pub mod composer;
pub mod embedder;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod pipeline;
pub mod random;
pub mod topics;
pub mod walker;

pub use error::{Error, Result};
