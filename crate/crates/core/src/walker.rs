//! Second-order biased random walks and the corpus they produce.

use std::io::{BufRead, Write};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, NodeNames};
use crate::random;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Walks started from every node.
    pub walks_per_node: usize,
    /// Nodes per walk.
    pub walk_length: usize,
    /// Return parameter; returning to the previous node has weight `1/p`.
    pub return_bias: f64,
    /// In-out parameter; moving away from the previous node has weight `1/q`.
    pub inout_bias: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            walks_per_node: 80,
            walk_length: 10,
            return_bias: 1.0,
            inout_bias: 1.0,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walks_per_node < 1 {
            return Err(Error::Config("walks_per_node must be >= 1".into()));
        }
        if self.walk_length < 2 {
            return Err(Error::Config("walk_length must be >= 2".into()));
        }
        if !(self.return_bias > 0.0 && self.inout_bias > 0.0) {
            return Err(Error::Config("walk biases p and q must be > 0".into()));
        }
        Ok(())
    }

    fn is_uniform(&self) -> bool {
        self.return_bias == 1.0 && self.inout_bias == 1.0
    }
}

/// Ordered walks stored back to back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkCorpus {
    tokens: Vec<NodeId>,
    /// `offsets[i]..offsets[i + 1]` delimits walk `i`.
    offsets: Vec<usize>,
}

impl Default for WalkCorpus {
    fn default() -> Self {
        WalkCorpus::new()
    }
}

impl WalkCorpus {
    pub fn new() -> Self {
        WalkCorpus {
            tokens: Vec::new(),
            offsets: vec![0],
        }
    }

    pub fn from_walks<I, W>(walks: I) -> Self
    where
        I: IntoIterator<Item = W>,
        W: AsRef<[NodeId]>,
    {
        let mut corpus = WalkCorpus::new();
        for w in walks {
            corpus.push(w.as_ref());
        }
        corpus
    }

    pub fn push(&mut self, walk: &[NodeId]) {
        self.tokens.extend_from_slice(walk);
        self.offsets.push(self.tokens.len());
    }

    pub fn walk_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walk_count() == 0
    }

    #[inline]
    pub fn walk(&self, i: usize) -> &[NodeId] {
        &self.tokens[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Position of the first token of walk `i` in [`tokens`](Self::tokens).
    #[inline]
    pub fn walk_start(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn walks(&self) -> impl ExactSizeIterator<Item = &[NodeId]> + '_ {
        (0..self.walk_count()).map(move |i| self.walk(i))
    }

    /// All tokens in corpus order.
    pub fn tokens(&self) -> &[NodeId] {
        &self.tokens
    }

    /// Largest node id plus one, or 0 for an empty corpus.
    pub fn max_node_bound(&self) -> usize {
        self.tokens.iter().max().map_or(0, |&m| m as usize + 1)
    }
}

/// Draws the corpus.
///
/// Walks are emitted round by round: round `r` holds one walk from every node
/// in ascending id order. A node without neighbors contributes a single
/// one-token walk in round 0. Each walk uses its own random stream keyed by
/// `(seed, start node, round)`, so the corpus is independent of thread count.
pub fn generate_walks(graph: &Graph, cfg: &WalkConfig) -> Result<WalkCorpus> {
    cfg.validate()?;
    if graph.node_count() == 0 {
        return Err(Error::Data("cannot walk an empty graph".into()));
    }
    let n = graph.node_count();
    let rounds: Vec<Vec<Vec<NodeId>>> = (0..cfg.walks_per_node)
        .into_par_iter()
        .map(|round| {
            (0..n as NodeId)
                .filter_map(|start| {
                    if graph.degree(start) == 0 {
                        return (round == 0).then(|| vec![start]);
                    }
                    let mut rng = random::stream(cfg.seed, start as u64, round as u64);
                    Some(walk_from(graph, cfg, start, &mut rng))
                })
                .collect()
        })
        .collect();
    let mut corpus = WalkCorpus::new();
    corpus.tokens.reserve(n * cfg.walks_per_node * cfg.walk_length);
    for round in rounds {
        for w in round {
            corpus.push(&w);
        }
    }
    Ok(corpus)
}

fn walk_from(graph: &Graph, cfg: &WalkConfig, start: NodeId, rng: &mut random::Rng) -> Vec<NodeId> {
    let mut walk = Vec::with_capacity(cfg.walk_length);
    walk.push(start);
    let first = graph.neighbors(start);
    walk.push(first[rng.gen_range(0..first.len())]);
    let uniform = cfg.is_uniform();
    let mut weights = Vec::new();
    while walk.len() < cfg.walk_length {
        let prev = walk[walk.len() - 2];
        let cur = walk[walk.len() - 1];
        let adj = graph.neighbors(cur);
        let next = if uniform {
            adj[rng.gen_range(0..adj.len())]
        } else {
            transition_weights(graph, cfg, prev, cur, &mut weights);
            let total: f64 = weights.iter().sum();
            let mut r = rng.gen::<f64>() * total;
            let mut pick = adj.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if r < *w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            adj[pick]
        };
        walk.push(next);
    }
    walk
}

/// Unnormalized second-order weights for stepping from `cur` (reached from
/// `prev`) to each neighbor of `cur`, in adjacency order.
pub fn transition_weights(
    graph: &Graph,
    cfg: &WalkConfig,
    prev: NodeId,
    cur: NodeId,
    out: &mut Vec<f64>,
) {
    out.clear();
    out.extend(graph.neighbors(cur).iter().map(|&x| {
        if x == prev {
            1.0 / cfg.return_bias
        } else if graph.has_edge(prev, x) {
            1.0
        } else {
            1.0 / cfg.inout_bias
        }
    }));
}

/// Fraction of corpus tokens equal to each node in `0..node_count`.
pub fn empirical_node_frequency(corpus: &WalkCorpus, node_count: usize) -> Result<Vec<f64>> {
    if corpus.token_count() == 0 {
        return Err(Error::Data("empty corpus has no node frequencies".into()));
    }
    let counts = node_counts(corpus, node_count);
    let total = corpus.token_count() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

pub fn node_counts(corpus: &WalkCorpus, node_count: usize) -> Vec<u64> {
    let mut counts = vec![0u64; node_count];
    for &v in corpus.tokens() {
        counts[v as usize] += 1;
    }
    counts
}

/// One walk per line, tokens separated by single spaces.
pub fn save_corpus<W: Write>(corpus: &WalkCorpus, names: &NodeNames, mut out: W) -> Result<()> {
    for walk in corpus.walks() {
        let mut first = true;
        for &v in walk {
            if !first {
                out.write_all(b" ")?;
            }
            out.write_all(names.token(v).as_bytes())?;
            first = false;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_corpus<R: BufRead>(reader: R, names: &NodeNames) -> Result<WalkCorpus> {
    let mut corpus = WalkCorpus::new();
    let mut walk = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        walk.clear();
        for token in line.split_whitespace() {
            let id = names
                .id(token)
                .ok_or_else(|| Error::parse(i + 1, format!("unknown node token {token:?}")))?;
            walk.push(id);
        }
        if walk.is_empty() {
            continue;
        }
        corpus.push(&walk);
    }
    Ok(corpus)
}
