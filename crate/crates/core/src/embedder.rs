//! Skip-Gram with negative sampling.
//!
//! The same trainer serves both objectives. For node embeddings the center
//! of every (center, context) pair is the walk token itself; for topic
//! embeddings the center is the token's topic label while the context stays a
//! node. Only the center matrix is used downstream.

use std::io::{BufRead, Write};
use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, WeightedAliasIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random::{self, Rng};
use crate::topics::TopicAssignment;
use crate::walker::WalkCorpus;

/// Dense row-major matrix of embedding vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    data: Vec<f64>,
    rows: usize,
    dim: usize,
}

impl Embedding {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Embedding {
            data: vec![0.0; rows * dim],
            rows,
            dim,
        }
    }

    pub fn from_vec(data: Vec<f64>, rows: usize, dim: usize) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::Dimension {
                axis: "embedding entries",
                expected: rows * dim,
                found: data.len(),
            });
        }
        Ok(Embedding { data, rows, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::Dimension {
                    axis: "embedding row length",
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Embedding {
            data,
            rows: rows.len(),
            dim,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Writes `<rows> <dim>` followed by one `token v_1 ... v_dim` line per row,
/// each value with 17 significant digits.
pub fn save_embeddings<W: Write, S: AsRef<str>>(
    emb: &Embedding,
    tokens: &[S],
    mut out: W,
) -> Result<()> {
    if tokens.len() != emb.rows() {
        return Err(Error::Dimension {
            axis: "embedding tokens",
            expected: emb.rows(),
            found: tokens.len(),
        });
    }
    writeln!(out, "{} {}", emb.rows(), emb.dim())?;
    for (token, row) in tokens.iter().zip(0..emb.rows()) {
        out.write_all(token.as_ref().as_bytes())?;
        for x in emb.row(row) {
            write!(out, " {x:.16e}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_embeddings<R: BufRead>(reader: R) -> Result<(Vec<String>, Embedding)> {
    let mut lines = reader.lines().enumerate();
    let (rows, dim) = loop {
        let Some((i, line)) = lines.next() else {
            return Err(Error::parse(1, "missing `<rows> <dim>` header"));
        };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parsed = match fields.as_slice() {
            [r, d] => r.parse::<usize>().ok().zip(d.parse::<usize>().ok()),
            _ => None,
        };
        break parsed.ok_or_else(|| Error::parse(i + 1, "header must be `<rows> <dim>`"))?;
    };
    let mut tokens = Vec::with_capacity(rows);
    let mut data = Vec::with_capacity(rows * dim);
    let mut last_line = 1;
    for (i, line) in lines {
        let line = line?;
        last_line = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if tokens.len() == rows {
            return Err(Error::parse(i + 1, format!("more than the {rows} declared rows")));
        }
        let mut fields = line.split_whitespace();
        tokens.push(fields.next().unwrap_or_default().to_owned());
        let before = data.len();
        for f in fields {
            data.push(
                f.parse::<f64>()
                    .map_err(|_| Error::parse(i + 1, format!("bad value {f:?}")))?,
            );
        }
        if data.len() - before != dim {
            return Err(Error::parse(
                i + 1,
                format!("expected {dim} values, found {}", data.len() - before),
            ));
        }
    }
    if tokens.len() != rows {
        return Err(Error::parse(
            last_line,
            format!("header declares {rows} rows, found {}", tokens.len()),
        ));
    }
    Ok((tokens, Embedding { data, rows, dim }))
}

/// Stream of (center, context) training pairs, grouped into units that can
/// be processed independently (walks, for a corpus).
pub trait PairSource: Sync {
    fn pair_count(&self) -> usize;
    fn unit_count(&self) -> usize;
    fn visit_unit<F: FnMut(u32, u32)>(&self, unit: usize, f: &mut F);
}

impl PairSource for [(u32, u32)] {
    fn pair_count(&self) -> usize {
        self.len()
    }

    fn unit_count(&self) -> usize {
        self.len()
    }

    fn visit_unit<F: FnMut(u32, u32)>(&self, unit: usize, f: &mut F) {
        let (c, u) = self[unit];
        f(c, u)
    }
}

impl PairSource for Vec<(u32, u32)> {
    fn pair_count(&self) -> usize {
        self.len()
    }

    fn unit_count(&self) -> usize {
        self.len()
    }

    fn visit_unit<F: FnMut(u32, u32)>(&self, unit: usize, f: &mut F) {
        let (c, u) = self[unit];
        f(c, u)
    }
}

/// Window pairs of a corpus, optionally with centers replaced by topic labels.
#[derive(Clone, Copy)]
pub struct WindowPairs<'a> {
    corpus: &'a WalkCorpus,
    window: usize,
    relabel: Option<&'a TopicAssignment>,
}

/// For every position `i` and offset `j` in `[-window, window] \ {0}` that
/// stays inside the walk, pairs the center (node `v_i`, or label `z_i` when
/// relabeling) with context node `v_{i+j}`. Order: walks, then positions,
/// then ascending offset.
pub fn extract_pairs<'a>(
    corpus: &'a WalkCorpus,
    window: usize,
    relabel: Option<&'a TopicAssignment>,
) -> Result<WindowPairs<'a>> {
    if window < 1 {
        return Err(Error::Config("window must be >= 1".into()));
    }
    if let Some(z) = relabel {
        z.check_aligned(corpus)?;
    }
    Ok(WindowPairs {
        corpus,
        window,
        relabel,
    })
}

impl<'a> WindowPairs<'a> {
    fn range(&self, i: usize, len: usize) -> Range<usize> {
        i.saturating_sub(self.window)..(i + self.window + 1).min(len)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.corpus.walk_count()).flat_map(move |w| {
            let mut pairs = Vec::new();
            self.visit_unit(w, &mut |c, u| pairs.push((c, u)));
            pairs
        })
    }
}

impl PairSource for WindowPairs<'_> {
    fn pair_count(&self) -> usize {
        self.corpus
            .walks()
            .map(|w| {
                let len = w.len();
                (0..len).map(|i| self.range(i, len).len() - 1).sum::<usize>()
            })
            .sum()
    }

    fn unit_count(&self) -> usize {
        self.corpus.walk_count()
    }

    #[inline]
    fn visit_unit<F: FnMut(u32, u32)>(&self, unit: usize, f: &mut F) {
        let walk = self.corpus.walk(unit);
        let start = self.corpus.walk_start(unit);
        for i in 0..walk.len() {
            let center = match self.relabel {
                Some(z) => z.topics()[start + i],
                None => walk[i],
            };
            for j in self.range(i, walk.len()) {
                if j != i {
                    f(center, walk[j]);
                }
            }
        }
    }
}

/// Negative-sampling distribution over nodes, `Pr(n) ∝ count(n)^0.75`.
#[derive(Debug, Clone)]
pub struct NoiseTable {
    probs: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
}

impl NoiseTable {
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Data("noise distribution needs a nonempty corpus".into()));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| Error::Data(format!("noise table: {e}")))?;
        Ok(NoiseTable { probs, alias })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn sample(&self, rng: &mut Rng) -> u32 {
        self.alias.sample(rng) as u32
    }

    /// Draws a node different from `positive`, or `None` when the support has
    /// nothing else.
    #[inline]
    fn sample_excluding(&self, positive: u32, rng: &mut Rng) -> Option<u32> {
        for _ in 0..32 {
            let n = self.sample(rng);
            if n != positive {
                return Some(n);
            }
        }
        None
    }
}

pub fn noise_distribution(corpus: &WalkCorpus, node_count: usize) -> Result<NoiseTable> {
    NoiseTable::from_counts(&crate::walker::node_counts(corpus, node_count))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub lr_init: f64,
    pub lr_min: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Visit walks in a seeded random order each epoch.
    pub shuffle: bool,
    /// More than one worker trains lock-free and is not reproducible.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 128,
            window: 10,
            negatives: 5,
            lr_init: 0.0025,
            lr_min: 1e-5,
            epochs: 1,
            seed: 0,
            shuffle: false,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 || self.window < 1 || self.epochs < 1 || self.workers < 1 {
            return Err(Error::Config(
                "dim, window, epochs and workers must all be >= 1".into(),
            ));
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_init) {
            return Err(Error::Config(format!(
                "need 0 < lr_min <= lr_init, got {} and {}",
                self.lr_min, self.lr_init
            )));
        }
        Ok(())
    }
}

/// Center (exported) and context matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair {
    pub center: Embedding,
    pub context: Embedding,
}

impl EmbeddingPair {
    /// Center rows uniform in `(-0.5/D, 0.5/D)`, context rows zero.
    pub fn init(center_vocab: usize, node_vocab: usize, dim: usize, seed: u64) -> Self {
        let mut rng = random::stream(seed, 0, 0);
        let half = 0.5 / dim as f64;
        let data = (0..center_vocab * dim)
            .map(|_| rng.gen_range(-half..half))
            .collect();
        EmbeddingPair {
            center: Embedding {
                data,
                rows: center_vocab,
                dim,
            },
            context: Embedding::zeros(node_vocab, dim),
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `log σ(x)` without overflow.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Negative-sampling loss of one pair:
/// `-log σ(c·u) - Σ_n log σ(-c·n)`.
pub fn pair_loss(center: &[f64], positive: &[f64], negatives: &[&[f64]]) -> f64 {
    -log_sigmoid(dot(center, positive))
        - negatives
            .iter()
            .map(|n| log_sigmoid(-dot(center, n)))
            .sum::<f64>()
}

/// Gradients of [`pair_loss`] with respect to the center, positive and each
/// negative vector.
pub fn pair_gradient(
    center: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let d = center.len();
    let mut g_center = vec![0.0; d];
    let s = sigmoid(dot(center, positive)) - 1.0;
    for t in 0..d {
        g_center[t] += s * positive[t];
    }
    let g_pos = center.iter().map(|c| s * c).collect();
    let mut g_negs = Vec::with_capacity(negatives.len());
    for n in negatives {
        let s = sigmoid(dot(center, n));
        for t in 0..d {
            g_center[t] += s * n[t];
        }
        g_negs.push(center.iter().map(|c| s * c).collect());
    }
    (g_center, g_pos, g_negs)
}

/// One SGD step on a pair. Context rows are updated from the pre-step center
/// vector and the center moves by the accumulated gradient, so the update is
/// exactly `-lr` times [`pair_gradient`] when the targets are distinct.
/// Returns the pre-step loss, or `None` if a score is not finite.
///
/// # Safety
/// `context` must be valid for `rows * dim` reads and writes; concurrent
/// writers may race (lock-free training).
#[inline]
unsafe fn sgd_step(
    center: &mut [f64],
    context: *mut f64,
    dim: usize,
    targets: &[(u32, f64)],
    lr: f64,
    accum: &mut [f64],
) -> Option<f64> {
    accum.iter_mut().for_each(|x| *x = 0.0);
    let mut loss = 0.0;
    for &(target, label) in targets {
        let row = std::slice::from_raw_parts_mut(context.add(target as usize * dim), dim);
        let f = dot(center, row);
        if !f.is_finite() {
            return None;
        }
        loss -= if label > 0.0 { log_sigmoid(f) } else { log_sigmoid(-f) };
        let g = (label - sigmoid(f)) * lr;
        for t in 0..dim {
            accum[t] += g * row[t];
        }
        for t in 0..dim {
            row[t] += g * center[t];
        }
    }
    for t in 0..dim {
        center[t] += accum[t];
    }
    Some(loss)
}

/// Applies one SGD step for the pair `(center_row, positive)` with the given
/// negatives and returns the pre-step loss.
pub fn sgd_pair_step(
    emb: &mut EmbeddingPair,
    center_row: usize,
    positive: u32,
    negatives: &[u32],
    lr: f64,
) -> Result<f64> {
    let dim = emb.center.dim;
    let mut targets = vec![(positive, 1.0)];
    targets.extend(negatives.iter().map(|&n| (n, 0.0)));
    for &(t, _) in &targets {
        if t as usize >= emb.context.rows {
            return Err(Error::Data(format!("context row {t} out of range")));
        }
    }
    let mut accum = vec![0.0; dim];
    let center = emb.center.row_mut(center_row);
    // SAFETY: every target row was bounds-checked above; no other thread
    // holds the matrix.
    unsafe { sgd_step(center, emb.context.data.as_mut_ptr(), dim, &targets, lr, &mut accum) }
        .ok_or_else(|| Error::Numeric("non-finite score".into()))
}

#[derive(Clone, Copy)]
struct SharedMut(*mut f64);
// SAFETY: used only for lock-free SGD where racing updates are tolerated.
unsafe impl Send for SharedMut {}
unsafe impl Sync for SharedMut {}

/// Trains center/context embeddings on `pairs`.
///
/// Learning rate decays linearly in the number of processed pairs from
/// `lr_init`, floored at `lr_min`. With one worker the result is a pure
/// function of the inputs.
pub fn sgns_train<P: PairSource + ?Sized>(
    pairs: &P,
    center_vocab: usize,
    node_vocab: usize,
    cfg: &TrainConfig,
    noise: &NoiseTable,
) -> Result<EmbeddingPair> {
    cfg.validate()?;
    if center_vocab < 1 || node_vocab < 1 {
        return Err(Error::Config("vocabulary sizes must be >= 1".into()));
    }
    if noise.len() > node_vocab {
        return Err(Error::Dimension {
            axis: "noise table",
            expected: node_vocab,
            found: noise.len(),
        });
    }
    let mut emb = EmbeddingPair::init(center_vocab, node_vocab, cfg.dim, cfg.seed);
    let total = (pairs.pair_count() * cfg.epochs).max(1);
    let processed = AtomicUsize::new(0);
    let center_ptr = SharedMut(emb.center.data.as_mut_ptr());
    let context_ptr = SharedMut(emb.context.data.as_mut_ptr());

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..pairs.unit_count()).collect();
        if cfg.shuffle {
            order.shuffle(&mut random::stream(cfg.seed, 2, epoch as u64));
        }
        let workers = cfg.workers.min(order.len().max(1));
        let chunk = order.len().div_ceil(workers).max(1);
        let run = |worker: usize, units: &[usize]| -> Result<()> {
            let mut rng = random::stream(cfg.seed, 1 + epoch as u64, worker as u64);
            let mut accum = vec![0.0; cfg.dim];
            let mut targets = Vec::with_capacity(cfg.negatives + 1);
            let mut failure = None;
            let (center_ptr, context_ptr) = (center_ptr, context_ptr);
            for &unit in units {
                pairs.visit_unit(unit, &mut |c, u| {
                    if failure.is_some() {
                        return;
                    }
                    let done = processed.fetch_add(1, Ordering::Relaxed);
                    let lr = (cfg.lr_init * (1.0 - done as f64 / total as f64)).max(cfg.lr_min);
                    targets.clear();
                    targets.push((u, 1.0));
                    for _ in 0..cfg.negatives {
                        if let Some(n) = noise.sample_excluding(u, &mut rng) {
                            targets.push((n, 0.0));
                        }
                    }
                    // SAFETY: rows are in range (center < center_vocab, targets
                    // < node_vocab); races between workers are accepted.
                    let ok = unsafe {
                        let center = std::slice::from_raw_parts_mut(
                            center_ptr.0.add(c as usize * cfg.dim),
                            cfg.dim,
                        );
                        sgd_step(center, context_ptr.0, cfg.dim, &targets, lr, &mut accum)
                    };
                    if ok.is_none() {
                        failure = Some(done);
                    }
                });
                if let Some(idx) = failure {
                    return Err(Error::Numeric(format!(
                        "non-finite gradient at pair {idx}"
                    )));
                }
            }
            Ok(())
        };

        check_ranges(pairs, center_vocab, node_vocab)?;
        if workers == 1 {
            run(0, &order)?;
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = order
                    .chunks(chunk)
                    .enumerate()
                    .map(|(w, units)| s.spawn(move || run(w, units)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("training worker panicked"))
                    .collect::<Result<Vec<()>>>()
            })?;
        }
    }
    if !emb.center.is_finite() || !emb.context.is_finite() {
        return Err(Error::Numeric("training produced non-finite embeddings".into()));
    }
    Ok(emb)
}

fn check_ranges<P: PairSource + ?Sized>(pairs: &P, center_vocab: usize, node_vocab: usize) -> Result<()> {
    let mut bad = None;
    for unit in 0..pairs.unit_count() {
        pairs.visit_unit(unit, &mut |c, u| {
            if bad.is_none() && (c as usize >= center_vocab || u as usize >= node_vocab) {
                bad = Some((c, u));
            }
        });
        if let Some((c, u)) = bad {
            return Err(Error::Data(format!(
                "pair ({c}, {u}) outside vocabularies ({center_vocab}, {node_vocab})"
            )));
        }
    }
    Ok(())
}

/// Average [`pair_loss`] over the stream, with `negatives` noise draws per pair
/// from a generator keyed by `seed`.
pub fn mean_pair_loss<P: PairSource + ?Sized>(
    pairs: &P,
    emb: &EmbeddingPair,
    noise: &NoiseTable,
    negatives: usize,
    seed: u64,
) -> f64 {
    let mut rng = random::stream(seed, 99, 0);
    let mut total = 0.0;
    let mut count = 0usize;
    let mut negs: Vec<&[f64]> = Vec::with_capacity(negatives);
    for unit in 0..pairs.unit_count() {
        pairs.visit_unit(unit, &mut |c, u| {
            negs.clear();
            for _ in 0..negatives {
                if let Some(n) = noise.sample_excluding(u, &mut rng) {
                    negs.push(emb.context.row(n as usize));
                }
            }
            total += pair_loss(emb.center.row(c as usize), emb.context.row(u as usize), &negs);
            count += 1;
        });
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
