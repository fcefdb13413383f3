//! Topical node embeddings: a node's own vector concatenated with the
//! posterior-weighted average of the topic vectors.

use serde::{Deserialize, Serialize};

use crate::embedder::Embedding;
use crate::error::{Error, Result};
use crate::topics::{Backend, TopicPosterior};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend: Backend,
    pub node_dim: usize,
    pub topic_dim: usize,
    pub topics: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicalEmbedding {
    pub vectors: Embedding,
    pub provenance: Provenance,
}

/// Row `v` is `node[v] ⊕ Σ_k Pr(k|v) · topic[k]`.
pub fn compose(
    node: &Embedding,
    topic: &Embedding,
    posterior: &TopicPosterior,
) -> Result<TopicalEmbedding> {
    if posterior.topic_count() != topic.rows() {
        return Err(Error::Dimension {
            axis: "topics (posterior columns vs topic embedding rows)",
            expected: topic.rows(),
            found: posterior.topic_count(),
        });
    }
    if posterior.node_count() != node.rows() {
        return Err(Error::Dimension {
            axis: "nodes (posterior rows vs node embedding rows)",
            expected: node.rows(),
            found: posterior.node_count(),
        });
    }
    let (dn, dt) = (node.dim(), topic.dim());
    let mut data = Vec::with_capacity(node.rows() * (dn + dt));
    let mut mix = vec![0.0; dt];
    for (v, probs) in posterior.rows().enumerate() {
        data.extend_from_slice(node.row(v));
        mix.iter_mut().for_each(|x| *x = 0.0);
        for (k, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (m, t) in mix.iter_mut().zip(topic.row(k)) {
                *m += p * t;
            }
        }
        data.extend_from_slice(&mix);
    }
    Ok(TopicalEmbedding {
        vectors: Embedding::from_vec(data, node.rows(), dn + dt)?,
        provenance: Provenance {
            backend: posterior.backend(),
            node_dim: dn,
            topic_dim: dt,
            topics: topic.rows(),
        },
    })
}
