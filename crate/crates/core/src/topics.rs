//! Walk-based topic models.
//!
//! Both models treat every walk as a document over the node vocabulary:
//!
//! * GLDA is latent Dirichlet allocation fitted by collapsed Gibbs sampling.
//!   Each walk has its own topic mixture.
//! * GHMM is a finite Bayesian hidden Markov model whose initial, transition
//!   and emission distributions are shared by all walks. It is fitted by
//!   blocked Gibbs sampling: parameters are drawn from their Dirichlet full
//!   conditionals, then each walk's state path is redrawn exactly by
//!   forward-filtering backward-sampling.
//!
//! Either way the result is one topic label per corpus token, which
//! [`posterior_from_assignment`] turns into per-node topic distributions.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::graph::{NodeId, NodeNames};
use crate::random::{self, Rng};
use crate::walker::WalkCorpus;

/// One topic label per corpus token, aligned with [`WalkCorpus::tokens`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicAssignment {
    topics: Vec<u32>,
    k: usize,
}

impl TopicAssignment {
    pub fn new(topics: Vec<u32>, k: usize) -> Result<Self> {
        if let Some(&bad) = topics.iter().find(|&&t| t as usize >= k) {
            return Err(Error::Data(format!("topic {bad} out of range for K={k}")));
        }
        Ok(TopicAssignment { topics, k })
    }

    pub fn topics(&self) -> &[u32] {
        &self.topics
    }

    pub fn topic_count(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn check_aligned(&self, corpus: &WalkCorpus) -> Result<()> {
        if self.topics.len() != corpus.token_count() {
            return Err(Error::Dimension {
                axis: "assignment length",
                expected: corpus.token_count(),
                found: self.topics.len(),
            });
        }
        Ok(())
    }
}

fn random_assignment(tokens: usize, k: usize, rng: &mut Rng) -> Vec<u32> {
    (0..tokens).map(|_| rng.gen_range(0..k as u32)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GldaConfig {
    pub topics: usize,
    /// Symmetric Dirichlet prior on each walk's topic mixture.
    pub doc_prior: f64,
    /// Symmetric Dirichlet prior on each topic's node distribution.
    pub node_prior: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl GldaConfig {
    /// Defaults for `k` topics: doc prior `50/k`, node prior 0.01.
    pub fn with_topics(k: usize) -> Self {
        GldaConfig {
            topics: k,
            doc_prior: 50.0 / k.max(1) as f64,
            node_prior: 0.01,
            iterations: 100,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.topics < 1 {
            return Err(Error::Config("GLDA needs K >= 1".into()));
        }
        if !(self.doc_prior > 0.0 && self.node_prior > 0.0) {
            return Err(Error::Config("GLDA priors must be > 0".into()));
        }
        if self.iterations < 1 {
            return Err(Error::Config("GLDA needs at least one iteration".into()));
        }
        Ok(())
    }
}

impl Default for GldaConfig {
    fn default() -> Self {
        GldaConfig::with_topics(100)
    }
}

/// Sufficient statistics of collapsed LDA.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaState {
    k: usize,
    vocab: usize,
    doc_prior: f64,
    node_prior: f64,
    /// walks x K
    doc_topic: Vec<u32>,
    /// K x vocab
    topic_node: Vec<u32>,
    topic_total: Vec<u32>,
}

impl LdaState {
    pub fn from_assignment(
        corpus: &WalkCorpus,
        assignment: &TopicAssignment,
        vocab: usize,
        doc_prior: f64,
        node_prior: f64,
    ) -> Result<Self> {
        assignment.check_aligned(corpus)?;
        let k = assignment.topic_count();
        let mut state = LdaState {
            k,
            vocab,
            doc_prior,
            node_prior,
            doc_topic: vec![0; corpus.walk_count() * k],
            topic_node: vec![0; k * vocab],
            topic_total: vec![0; k],
        };
        for (d, walk) in corpus.walks().enumerate() {
            let start = corpus.walk_start(d);
            for (i, &v) in walk.iter().enumerate() {
                if v as usize >= vocab {
                    return Err(Error::Data(format!(
                        "node {v} outside vocabulary of size {vocab}"
                    )));
                }
                let z = assignment.topics()[start + i] as usize;
                state.doc_topic[d * k + z] += 1;
                state.topic_node[z * vocab + v as usize] += 1;
                state.topic_total[z] += 1;
            }
        }
        Ok(state)
    }

    pub fn doc_topic(&self, doc: usize, topic: usize) -> u32 {
        self.doc_topic[doc * self.k + topic]
    }

    pub fn topic_node(&self, topic: usize, node: NodeId) -> u32 {
        self.topic_node[topic * self.vocab + node as usize]
    }

    pub fn topic_total(&self, topic: usize) -> u32 {
        self.topic_total[topic]
    }

    /// `log p(walks, z | a0, b0)` with the walk and topic distributions
    /// integrated out.
    pub fn log_joint(&self) -> f64 {
        let (k, a0, b0) = (self.k, self.doc_prior, self.node_prior);
        let v = self.vocab as f64;
        let mut total = 0.0;
        for doc in self.doc_topic.chunks(k) {
            let len: u32 = doc.iter().sum();
            if len == 0 {
                continue;
            }
            total += ln_gamma(k as f64 * a0) - ln_gamma(k as f64 * a0 + len as f64);
            for &n in doc {
                if n > 0 {
                    total += ln_gamma(n as f64 + a0) - ln_gamma(a0);
                }
            }
        }
        for t in 0..k {
            let m = self.topic_total[t];
            if m == 0 {
                continue;
            }
            total += ln_gamma(v * b0) - ln_gamma(v * b0 + m as f64);
            for &c in &self.topic_node[t * self.vocab..(t + 1) * self.vocab] {
                if c > 0 {
                    total += ln_gamma(c as f64 + b0) - ln_gamma(b0);
                }
            }
        }
        total
    }
}

/// Collapsed Gibbs sampler for GLDA.
pub struct GldaSampler<'a> {
    corpus: &'a WalkCorpus,
    state: LdaState,
    topics: Vec<u32>,
    rng: Rng,
    weights: Vec<f64>,
}

impl<'a> GldaSampler<'a> {
    /// Starts a chain from a uniformly random assignment.
    pub fn new(corpus: &'a WalkCorpus, vocab: usize, cfg: &GldaConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = random::rng(cfg.seed);
        let topics = random_assignment(corpus.token_count(), cfg.topics, &mut rng);
        let assignment = TopicAssignment::new(topics, cfg.topics)?;
        let state =
            LdaState::from_assignment(corpus, &assignment, vocab, cfg.doc_prior, cfg.node_prior)?;
        Ok(GldaSampler {
            corpus,
            state,
            topics: assignment.topics,
            rng,
            weights: vec![0.0; cfg.topics],
        })
    }

    /// Resamples every token once, in corpus order.
    pub fn sweep(&mut self) {
        let LdaState {
            k,
            vocab,
            doc_prior,
            node_prior,
            ..
        } = self.state;
        let vb = vocab as f64 * node_prior;
        for d in 0..self.corpus.walk_count() {
            let start = self.corpus.walk_start(d);
            let walk = self.corpus.walk(d);
            let doc = &mut self.state.doc_topic[d * k..(d + 1) * k];
            for (i, &v) in walk.iter().enumerate() {
                let v = v as usize;
                let old = self.topics[start + i] as usize;
                doc[old] -= 1;
                self.state.topic_node[old * vocab + v] -= 1;
                self.state.topic_total[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    let w = (doc[t] as f64 + doc_prior)
                        * (self.state.topic_node[t * vocab + v] as f64 + node_prior)
                        / (self.state.topic_total[t] as f64 + vb);
                    total += w;
                    self.weights[t] = total;
                }
                let r = self.rng.gen::<f64>() * total;
                let new = self.weights.partition_point(|&c| c <= r).min(k - 1);

                doc[new] += 1;
                self.state.topic_node[new * vocab + v] += 1;
                self.state.topic_total[new] += 1;
                self.topics[start + i] = new as u32;
            }
        }
    }

    pub fn topics(&self) -> &[u32] {
        &self.topics
    }

    pub fn state(&self) -> &LdaState {
        &self.state
    }

    pub fn assignment(&self) -> TopicAssignment {
        TopicAssignment {
            topics: self.topics.clone(),
            k: self.state.k,
        }
    }
}

/// Runs `cfg.iterations` sweeps and returns the final sweep's labels.
pub fn glda_fit(corpus: &WalkCorpus, vocab: usize, cfg: &GldaConfig) -> Result<TopicAssignment> {
    cfg.validate()?;
    if cfg.topics > corpus.token_count() {
        return Err(Error::Config(format!(
            "K={} exceeds the {} corpus tokens",
            cfg.topics,
            corpus.token_count()
        )));
    }
    let mut sampler = GldaSampler::new(corpus, vocab, cfg)?;
    for it in 0..cfg.iterations {
        sampler.sweep();
        if log::log_enabled!(log::Level::Debug) && (it + 1) % 10 == 0 {
            log::debug!("glda sweep {}: log joint {:.3}", it + 1, sampler.state.log_joint());
        }
    }
    Ok(sampler.assignment())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhmmConfig {
    pub states: usize,
    /// Dirichlet prior on each transition row.
    pub transition_prior: f64,
    /// Dirichlet prior on each emission row.
    pub emission_prior: f64,
    /// Dirichlet prior on the initial-state distribution.
    pub initial_prior: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for GhmmConfig {
    fn default() -> Self {
        GhmmConfig {
            states: 20,
            transition_prior: 1.0,
            emission_prior: 0.01,
            initial_prior: 1.0,
            iterations: 50,
            seed: 0,
        }
    }
}

impl GhmmConfig {
    fn validate(&self) -> Result<()> {
        if self.states < 1 {
            return Err(Error::Config("GHMM needs K >= 1".into()));
        }
        if !(self.transition_prior > 0.0 && self.emission_prior > 0.0 && self.initial_prior > 0.0)
        {
            return Err(Error::Config("GHMM priors must be > 0".into()));
        }
        if self.iterations < 1 {
            return Err(Error::Config("GHMM needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// Parameters of a discrete HMM over a node vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams {
    k: usize,
    vocab: usize,
    initial: Vec<f64>,
    /// K x K, row = current state
    transition: Vec<f64>,
    /// vocab x K, so that one token's emission column is contiguous
    emission_by_node: Vec<f64>,
}

impl HmmParams {
    /// Builds parameters from row-major `transition` (K x K) and `emission`
    /// (K x vocab) matrices.
    pub fn new(initial: Vec<f64>, transition: Vec<f64>, emission: Vec<f64>) -> Result<Self> {
        let k = initial.len();
        if k == 0 || transition.len() != k * k || emission.len() % k != 0 {
            return Err(Error::Data("inconsistent HMM parameter shapes".into()));
        }
        let vocab = emission.len() / k;
        let mut emission_by_node = vec![0.0; vocab * k];
        for s in 0..k {
            for v in 0..vocab {
                emission_by_node[v * k + s] = emission[s * vocab + v];
            }
        }
        Ok(HmmParams {
            k,
            vocab,
            initial,
            transition,
            emission_by_node,
        })
    }

    pub fn state_count(&self) -> usize {
        self.k
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition_row(&self, from: usize) -> &[f64] {
        &self.transition[from * self.k..(from + 1) * self.k]
    }

    pub fn emission(&self, state: usize, node: NodeId) -> f64 {
        self.emission_by_node[node as usize * self.k + state]
    }

    pub fn emission_row(&self, state: usize) -> Vec<f64> {
        (0..self.vocab)
            .map(|v| self.emission_by_node[v * self.k + state])
            .collect()
    }

    /// Fraction of transition mass off the diagonal, averaged over rows.
    pub fn off_diagonal_mass(&self) -> f64 {
        let diag: f64 = (0..self.k).map(|s| self.transition[s * self.k + s]).sum();
        1.0 - diag / self.k as f64
    }
}

/// Scratch space for [`ffbs`].
#[derive(Debug, Default)]
pub struct FfbsScratch {
    alpha: Vec<f64>,
    weights: Vec<f64>,
}

/// Forward-filtering backward-sampling: draws a state path from
/// `p(z | walk, params)` exactly and writes it into `out`.
pub fn ffbs(
    params: &HmmParams,
    walk: &[NodeId],
    rng: &mut Rng,
    scratch: &mut FfbsScratch,
    out: &mut [u32],
) {
    let k = params.k;
    let len = walk.len();
    debug_assert_eq!(out.len(), len);
    if len == 0 {
        return;
    }
    scratch.alpha.clear();
    scratch.alpha.resize(len * k, 0.0);
    scratch.weights.resize(k, 0.0);
    let alpha = &mut scratch.alpha;

    for t in 0..len {
        let emit = &params.emission_by_node[walk[t] as usize * k..(walk[t] as usize + 1) * k];
        let mut norm = 0.0;
        if t == 0 {
            for s in 0..k {
                let a = params.initial[s] * emit[s];
                alpha[s] = a;
                norm += a;
            }
        } else {
            let (head, tail) = alpha.split_at_mut(t * k);
            let prev = &head[(t - 1) * k..];
            let cur = &mut tail[..k];
            cur.iter_mut().for_each(|x| *x = 0.0);
            for (from, &p) in prev.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let row = &params.transition[from * k..(from + 1) * k];
                for s in 0..k {
                    cur[s] += p * row[s];
                }
            }
            for s in 0..k {
                cur[s] *= emit[s];
                norm += cur[s];
            }
        }
        let cur = &mut alpha[t * k..(t + 1) * k];
        if norm > 0.0 && norm.is_finite() {
            cur.iter_mut().for_each(|x| *x /= norm);
        } else {
            cur.iter_mut().for_each(|x| *x = 1.0 / k as f64);
        }
    }

    let pick = |weights: &[f64], rng: &mut Rng| -> u32 {
        let total: f64 = weights.iter().sum();
        let mut r = rng.gen::<f64>() * total;
        for (s, &w) in weights.iter().enumerate() {
            if r < w {
                return s as u32;
            }
            r -= w;
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(k - 1) as u32
    };

    out[len - 1] = pick(&alpha[(len - 1) * k..len * k], rng);
    for t in (0..len - 1).rev() {
        let next = out[t + 1] as usize;
        for s in 0..k {
            scratch.weights[s] = alpha[t * k + s] * params.transition[s * k + next];
        }
        out[t] = pick(&scratch.weights, rng);
    }
}

fn sample_dirichlet(counts: &[f64], prior: f64, rng: &mut Rng, out: &mut [f64]) {
    let mut total = 0.0;
    for (o, &c) in out.iter_mut().zip(counts) {
        let g = Gamma::new(c + prior, 1.0).expect("positive gamma shape");
        *o = g.sample(rng);
        total += *o;
    }
    if total > 0.0 && total.is_finite() {
        out.iter_mut().for_each(|x| *x /= total);
    } else {
        // every draw underflowed: fall back to the posterior mean
        let denom: f64 = counts.iter().map(|c| c + prior).sum();
        for (o, &c) in out.iter_mut().zip(counts) {
            *o = (c + prior) / denom;
        }
    }
}

/// Blocked Gibbs sampler for GHMM.
pub struct GhmmSampler<'a> {
    corpus: &'a WalkCorpus,
    cfg: GhmmConfig,
    vocab: usize,
    topics: Vec<u32>,
    params: HmmParams,
    rng: Rng,
    scratch: FfbsScratch,
}

impl<'a> GhmmSampler<'a> {
    pub fn new(corpus: &'a WalkCorpus, vocab: usize, cfg: &GhmmConfig) -> Result<Self> {
        cfg.validate()?;
        if corpus.max_node_bound() > vocab {
            return Err(Error::Data(format!(
                "corpus mentions node {} outside vocabulary of size {vocab}",
                corpus.max_node_bound() - 1
            )));
        }
        let k = cfg.states;
        let mut rng = random::rng(cfg.seed);
        let topics = random_assignment(corpus.token_count(), k, &mut rng);
        let uniform = 1.0 / k as f64;
        let params = HmmParams {
            k,
            vocab,
            initial: vec![uniform; k],
            transition: vec![uniform; k * k],
            emission_by_node: vec![1.0 / vocab.max(1) as f64; vocab * k],
        };
        Ok(GhmmSampler {
            corpus,
            cfg: cfg.clone(),
            vocab,
            topics,
            params,
            rng,
            scratch: FfbsScratch::default(),
        })
    }

    /// Draws initial, transition and emission distributions given the
    /// current state paths.
    pub fn sample_params(&mut self) {
        let k = self.cfg.states;
        let vocab = self.vocab;
        let mut init_counts = vec![0.0; k];
        let mut trans_counts = vec![0.0; k * k];
        let mut emit_counts = vec![0.0; k * vocab];
        for (d, walk) in self.corpus.walks().enumerate() {
            let start = self.corpus.walk_start(d);
            let z = &self.topics[start..start + walk.len()];
            if let Some(&first) = z.first() {
                init_counts[first as usize] += 1.0;
            }
            for pair in z.windows(2) {
                trans_counts[pair[0] as usize * k + pair[1] as usize] += 1.0;
            }
            for (&s, &v) in z.iter().zip(walk) {
                emit_counts[s as usize * vocab + v as usize] += 1.0;
            }
        }

        let rng = &mut self.rng;
        sample_dirichlet(&init_counts, self.cfg.initial_prior, rng, &mut self.params.initial);
        for s in 0..k {
            let row = s * k..(s + 1) * k;
            sample_dirichlet(
                &trans_counts[row.clone()],
                self.cfg.transition_prior,
                rng,
                &mut self.params.transition[row],
            );
        }
        let mut row = vec![0.0; vocab];
        for s in 0..k {
            sample_dirichlet(
                &emit_counts[s * vocab..(s + 1) * vocab],
                self.cfg.emission_prior,
                rng,
                &mut row,
            );
            for (v, &p) in row.iter().enumerate() {
                self.params.emission_by_node[v * k + s] = p;
            }
        }
    }

    /// Redraws every walk's state path given the current parameters.
    pub fn resample_paths(&mut self) {
        for d in 0..self.corpus.walk_count() {
            let start = self.corpus.walk_start(d);
            let walk = self.corpus.walk(d);
            ffbs(
                &self.params,
                walk,
                &mut self.rng,
                &mut self.scratch,
                &mut self.topics[start..start + walk.len()],
            );
        }
    }

    pub fn sweep(&mut self) {
        self.sample_params();
        self.resample_paths();
    }

    pub fn params(&self) -> &HmmParams {
        &self.params
    }

    pub fn topics(&self) -> &[u32] {
        &self.topics
    }

    pub fn assignment(&self) -> TopicAssignment {
        TopicAssignment {
            topics: self.topics.clone(),
            k: self.cfg.states,
        }
    }
}

pub fn ghmm_fit(corpus: &WalkCorpus, vocab: usize, cfg: &GhmmConfig) -> Result<TopicAssignment> {
    let mut sampler = GhmmSampler::new(corpus, vocab, cfg)?;
    for _ in 0..cfg.iterations {
        sampler.sweep();
    }
    Ok(sampler.assignment())
}

/// Source of a topic posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Glda,
    Ghmm,
    Louvain,
    BigClam,
}

impl Backend {
    pub const ALL: [Backend; 4] = [Backend::Glda, Backend::Ghmm, Backend::Louvain, Backend::BigClam];

    pub fn name(self) -> &'static str {
        match self {
            Backend::Glda => "glda",
            Backend::Ghmm => "ghmm",
            Backend::Louvain => "louvain",
            Backend::BigClam => "bigclam",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Backend::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown topic backend {s:?}")))
    }
}

/// Row-stochastic `|V| x K` matrix of `Pr(k | v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicPosterior {
    probs: Vec<f64>,
    k: usize,
    backend: Backend,
}

impl TopicPosterior {
    /// Wraps a row-major matrix, checking that every row is a distribution.
    pub fn new(probs: Vec<f64>, k: usize, backend: Backend) -> Result<Self> {
        if k == 0 || probs.len() % k != 0 {
            return Err(Error::Data(format!(
                "{} entries do not form rows of length {k}",
                probs.len()
            )));
        }
        for (v, row) in probs.chunks(k).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Data(format!("posterior row {v} is not a distribution")));
            }
        }
        Ok(TopicPosterior { probs, k, backend })
    }

    pub fn topic_count(&self) -> usize {
        self.k
    }

    pub fn node_count(&self) -> usize {
        self.probs.len() / self.k
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn row(&self, v: NodeId) -> &[f64] {
        &self.probs[v as usize * self.k..(v as usize + 1) * self.k]
    }

    pub fn rows(&self) -> std::slice::Chunks<'_, f64> {
        self.probs.chunks(self.k)
    }

    /// Most probable topic of each node, lowest id on ties.
    pub fn argmax(&self) -> Vec<u32> {
        self.rows()
            .map(|row| {
                let mut best = 0;
                for (t, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = t;
                    }
                }
                best as u32
            })
            .collect()
    }
}

/// `Pr(k | v) = (c_vk + s) / (c_v + K s)` where `c_vk` counts tokens of node
/// `v` labeled `k`. Nodes absent from the corpus get the uniform row.
pub fn posterior_from_assignment(
    corpus: &WalkCorpus,
    assignment: &TopicAssignment,
    node_count: usize,
    smoothing: f64,
    backend: Backend,
) -> Result<TopicPosterior> {
    assignment.check_aligned(corpus)?;
    if !(smoothing >= 0.0) {
        return Err(Error::Config("posterior smoothing must be >= 0".into()));
    }
    let k = assignment.topic_count();
    let mut counts = vec![0u64; node_count * k];
    let mut totals = vec![0u64; node_count];
    for (&v, &z) in corpus.tokens().iter().zip(assignment.topics()) {
        counts[v as usize * k + z as usize] += 1;
        totals[v as usize] += 1;
    }
    let mut probs = vec![0.0; node_count * k];
    for v in 0..node_count {
        let row = &mut probs[v * k..(v + 1) * k];
        let denom = totals[v] as f64 + k as f64 * smoothing;
        if denom == 0.0 {
            row.iter_mut().for_each(|p| *p = 1.0 / k as f64);
            continue;
        }
        for t in 0..k {
            row[t] = (counts[v * k + t] as f64 + smoothing) / denom;
        }
    }
    TopicPosterior::new(probs, k, backend)
}

/// Labels every corpus token with a topic drawn from its node's posterior
/// row. One-hot rows therefore relabel deterministically.
pub fn assignment_from_posterior(
    corpus: &WalkCorpus,
    posterior: &TopicPosterior,
    seed: u64,
) -> Result<TopicAssignment> {
    if corpus.max_node_bound() > posterior.node_count() {
        return Err(Error::Dimension {
            axis: "posterior rows",
            expected: corpus.max_node_bound(),
            found: posterior.node_count(),
        });
    }
    let mut rng = random::rng(seed);
    let topics = corpus
        .tokens()
        .iter()
        .map(|&v| {
            let row = posterior.row(v);
            if let Some(t) = row.iter().position(|&p| p == 1.0) {
                return t as u32;
            }
            let mut r = rng.gen::<f64>();
            for (t, &p) in row.iter().enumerate() {
                if r < p {
                    return t as u32;
                }
                r -= p;
            }
            row.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u32
        })
        .collect();
    TopicAssignment::new(topics, posterior.topic_count())
}

/// Writes topic ids with the same line structure as the corpus file.
pub fn save_assignment<W: Write>(
    corpus: &WalkCorpus,
    assignment: &TopicAssignment,
    mut out: W,
) -> Result<()> {
    assignment.check_aligned(corpus)?;
    for d in 0..corpus.walk_count() {
        let start = corpus.walk_start(d);
        let z = &assignment.topics()[start..start + corpus.walk(d).len()];
        let line: Vec<String> = z.iter().map(|t| t.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn load_assignment<R: BufRead>(
    reader: R,
    corpus: &WalkCorpus,
    k: usize,
) -> Result<TopicAssignment> {
    let mut topics = Vec::with_capacity(corpus.token_count());
    let mut walk = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = topics.len();
        for tok in line.split_whitespace() {
            let t: u32 = tok
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("bad topic id {tok:?}")))?;
            if t as usize >= k {
                return Err(Error::parse(i + 1, format!("topic {t} out of range for K={k}")));
            }
            topics.push(t);
        }
        if walk >= corpus.walk_count() || topics.len() - before != corpus.walk(walk).len() {
            return Err(Error::parse(i + 1, "assignment line does not match its walk"));
        }
        walk += 1;
    }
    let assignment = TopicAssignment::new(topics, k)?;
    assignment.check_aligned(corpus)?;
    Ok(assignment)
}

/// One line per node: token, then K tab-separated probabilities.
pub fn save_posterior<W: Write>(
    posterior: &TopicPosterior,
    names: &NodeNames,
    mut out: W,
) -> Result<()> {
    for (v, row) in posterior.rows().enumerate() {
        write!(out, "{}", names.token(v as NodeId))?;
        for p in row {
            write!(out, "\t{p:.17e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn load_posterior<R: BufRead>(
    reader: R,
    names: &NodeNames,
    backend: Backend,
) -> Result<TopicPosterior> {
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; names.len()];
    let mut k = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let token = fields.next().unwrap_or_default();
        let id = names
            .id(token)
            .ok_or_else(|| Error::parse(i + 1, format!("unknown node token {token:?}")))?;
        let row = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(i + 1, format!("bad probability {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if *k.get_or_insert(row.len()) != row.len() {
            return Err(Error::parse(i + 1, "rows have differing topic counts"));
        }
        rows[id as usize] = Some(row);
    }
    let k = k.ok_or_else(|| Error::Data("empty posterior file".into()))?;
    let mut probs = Vec::with_capacity(names.len() * k);
    for row in rows {
        match row {
            Some(r) => probs.extend(r),
            None => probs.extend(std::iter::repeat(1.0 / k as f64).take(k)),
        }
    }
    TopicPosterior::new(probs, k, backend)
}
