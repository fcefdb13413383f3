//! Downstream evaluation: node classification with one-vs-rest logistic
//! regression and link prediction with Hadamard edge features.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedder::Embedding;
use crate::error::{Error, Result};
use crate::graph::{connected_components, Graph, NodeId, NodeLabels};
use crate::random;

/// L2 strength on the weights; the bias is never penalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    /// `lambda` applied to the mean log-loss as given.
    Fixed(f64),
    /// Inverse strength `C` on the summed log-loss, i.e.
    /// `lambda = 1 / (C * n)` for `n` training examples.
    InverseC(f64),
}

impl Penalty {
    pub fn lambda(self, examples: usize) -> f64 {
        match self {
            Penalty::Fixed(l) => l,
            Penalty::InverseC(c) => 1.0 / (c * examples.max(1) as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub penalty: Penalty,
    pub max_iters: usize,
    /// Converged once the gradient's largest entry falls below this.
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            penalty: Penalty::InverseC(1.0),
            max_iters: 1000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
}

impl LinearModel {
    #[inline]
    pub fn score(&self, x: &[f64]) -> f64 {
        self.bias + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        1.0 / (1.0 + (-self.score(x)).exp())
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.score(x) > 0.0
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Mean log-loss plus `lambda/2 * |w|^2`.
pub fn logistic_objective(
    features: &Embedding,
    labels: &[bool],
    weights: &[f64],
    bias: f64,
    lambda: f64,
) -> f64 {
    let n = features.rows() as f64;
    let loss: f64 = features
        .iter_rows()
        .zip(labels)
        .map(|(x, &y)| {
            let s = bias + x.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>();
            if y {
                softplus(-s)
            } else {
                softplus(s)
            }
        })
        .sum();
    loss / n + 0.5 * lambda * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Gradient of [`logistic_objective`] as `(d/dw, d/db)`.
pub fn logistic_gradient(
    features: &Embedding,
    labels: &[bool],
    weights: &[f64],
    bias: f64,
    lambda: f64,
) -> (Vec<f64>, f64) {
    let n = features.rows() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (x, &y) in features.iter_rows().zip(labels) {
        let s = bias + x.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>();
        let r = 1.0 / (1.0 + (-s).exp()) - if y { 1.0 } else { 0.0 };
        gb += r;
        for (g, a) in gw.iter_mut().zip(x) {
            *g += r * a;
        }
    }
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + lambda * w;
    }
    (gw, gb / n)
}

/// Full-batch gradient descent with Armijo backtracking, from zero weights.
pub fn logistic_fit(
    features: &Embedding,
    labels: &[bool],
    cfg: &LogisticConfig,
) -> Result<LinearModel> {
    logistic_fit_traced(features, labels, cfg, |_| {})
}

/// [`logistic_fit`] that reports the objective after every accepted step.
pub fn logistic_fit_traced<F: FnMut(f64)>(
    features: &Embedding,
    labels: &[bool],
    cfg: &LogisticConfig,
    mut on_step: F,
) -> Result<LinearModel> {
    if features.rows() != labels.len() {
        return Err(Error::Dimension {
            axis: "labels",
            expected: features.rows(),
            found: labels.len(),
        });
    }
    if features.rows() == 0 {
        return Err(Error::Data("logistic regression needs at least one example".into()));
    }
    if !features.is_finite() {
        return Err(Error::Data("non-finite feature values".into()));
    }
    let d = features.dim();
    let lambda = cfg.penalty.lambda(features.rows());
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("invalid L2 strength {lambda}")));
    }
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut value = logistic_objective(features, labels, &w, b, lambda);
    let mut step = 1.0;
    let mut trial = vec![0.0; d];
    for _ in 0..cfg.max_iters {
        let (gw, gb) = logistic_gradient(features, labels, &w, b, lambda);
        let gmax = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if gmax < cfg.tol {
            break;
        }
        let gnorm2 = gb * gb + gw.iter().map(|g| g * g).sum::<f64>();
        step *= 2.0;
        let mut accepted = false;
        for _ in 0..60 {
            for t in 0..d {
                trial[t] = w[t] - step * gw[t];
            }
            let tb = b - step * gb;
            let next = logistic_objective(features, labels, &trial, tb, lambda);
            if next <= value - 0.5 * step * gnorm2 {
                w.copy_from_slice(&trial);
                b = tb;
                value = next;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        on_step(value);
    }
    Ok(LinearModel {
        weights: w,
        bias: b,
        lambda,
    })
}

/// One binary model per class; two-class problems use a single model.
#[derive(Debug, Clone)]
pub struct OneVsRest {
    models: Vec<LinearModel>,
    class_count: usize,
}

impl OneVsRest {
    /// Per-class scores.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        if self.class_count == 2 {
            let s = self.models[0].score(x);
            return vec![-s, s];
        }
        self.models.iter().map(|m| m.score(x)).collect()
    }

    /// Highest-scoring class; ties go to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> u32 {
        let scores = self.scores(x);
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        best as u32
    }

    pub fn predict_all(&self, features: &Embedding) -> Vec<u32> {
        features.iter_rows().map(|x| self.predict(x)).collect()
    }

    pub fn models(&self) -> &[LinearModel] {
        &self.models
    }
}

pub fn one_vs_rest(
    features: &Embedding,
    labels: &[u32],
    class_count: usize,
    cfg: &LogisticConfig,
) -> Result<OneVsRest> {
    if class_count < 2 {
        return Err(Error::Config("classification needs at least two classes".into()));
    }
    let fit_class = |c: u32| {
        let binary: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        logistic_fit(features, &binary, cfg)
    };
    let models = if class_count == 2 {
        vec![fit_class(1)?]
    } else {
        (0..class_count as u32).map(fit_class).collect::<Result<_>>()?
    };
    Ok(OneVsRest {
        models,
        class_count,
    })
}

/// Global-count F1, which for single-label multiclass equals accuracy.
pub fn micro_f1(predictions: &[u32], truth: &[u32]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let correct = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    // tp = correct, fp = fn = wrong; F1 = 2tp / (2tp + fp + fn)
    let wrong = truth.len() - correct;
    2.0 * correct as f64 / (2.0 * correct as f64 + 2.0 * wrong as f64)
}

/// Unweighted mean of per-class F1 over `0..class_count`. A class absent from
/// both predictions and truth scores 0.
pub fn macro_f1(predictions: &[u32], truth: &[u32], class_count: usize) -> f64 {
    if class_count == 0 {
        return 0.0;
    }
    let mut tp = vec![0usize; class_count];
    let mut fp = vec![0usize; class_count];
    let mut fn_ = vec![0usize; class_count];
    for (&p, &t) in predictions.iter().zip(truth) {
        if p == t {
            tp[t as usize] += 1;
        } else {
            fp[p as usize] += 1;
            fn_[t as usize] += 1;
        }
    }
    let total: f64 = (0..class_count)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    total / class_count as f64
}

/// Mann-Whitney AUC: fraction of (positive, negative) pairs ranked correctly,
/// ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            axis: "labels",
            expected: scores.len(),
            found: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let positives = labels.iter().filter(|&&l| l).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Data("AUC needs both positive and negative examples".into()));
    }
    // twice the number of correctly ordered pairs, so ties stay integral
    let mut twice_correct: u64 = 0;
    let mut negatives_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let (mut pos, mut neg) = (0u64, 0u64);
        for &idx in &order[i..j] {
            if labels[idx] {
                pos += 1;
            } else {
                neg += 1;
            }
        }
        twice_correct += pos * (2 * negatives_below + neg);
        negatives_below += neg;
        i = j;
    }
    Ok(twice_correct as f64 / (2 * positives * negatives) as f64)
}

/// Normalized mutual information (arithmetic-mean normalization).
pub fn normalized_mutual_information(a: &[u32], b: &[u32]) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let ka = a.iter().max().map_or(0, |&m| m as usize + 1);
    let kb = b.iter().max().map_or(0, |&m| m as usize + 1);
    let mut joint = vec![0.0; ka * kb];
    let mut pa = vec![0.0; ka];
    let mut pb = vec![0.0; kb];
    for (&x, &y) in a.iter().zip(b) {
        joint[x as usize * kb + y as usize] += 1.0;
        pa[x as usize] += 1.0;
        pb[y as usize] += 1.0;
    }
    let entropy = |p: &[f64]| -> f64 {
        p.iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| -(c / n) * (c / n).ln())
            .sum()
    };
    let (ha, hb) = (entropy(&pa), entropy(&pb));
    let mut mi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let c = joint[x * kb + y];
            if c > 0.0 {
                mi += (c / n) * ((c * n) / (pa[x] * pb[y])).ln();
            }
        }
    }
    if ha + hb == 0.0 {
        return 1.0;
    }
    (2.0 * mi / (ha + hb)).clamp(0.0, 1.0)
}

/// One evaluated split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// Training ratio for classification, removal fraction for link
    /// prediction.
    pub setting: f64,
    pub repeat: usize,
    /// Experiment seed; a classification split is replayed from the seed,
    /// the ratio's position and the repeat index.
    pub seed: u64,
    pub micro_f1: Option<f64>,
    pub macro_f1: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub setting: f64,
    pub repeats: usize,
    pub micro_f1: Option<f64>,
    pub macro_f1: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<MetricRow>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl ExperimentReport {
    /// Mean metrics per setting, in order of first appearance.
    pub fn summaries(&self) -> Vec<Summary> {
        let mut settings: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !settings.contains(&r.setting) {
                settings.push(r.setting);
            }
        }
        settings
            .into_iter()
            .map(|s| {
                let rows: Vec<&MetricRow> = self.rows.iter().filter(|r| r.setting == s).collect();
                Summary {
                    setting: s,
                    repeats: rows.len(),
                    micro_f1: mean(rows.iter().map(|r| r.micro_f1)),
                    macro_f1: mean(rows.iter().map(|r| r.macro_f1)),
                    auc: mean(rows.iter().map(|r| r.auc)),
                }
            })
            .collect()
    }

    pub fn summary_for(&self, setting: f64) -> Option<Summary> {
        self.summaries()
            .into_iter()
            .find(|s| (s.setting - setting).abs() < 1e-12)
    }

    /// Per-repeat rows followed by one `mean` row per setting.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        let cell = |x: Option<f64>| x.map_or_else(|| "-".to_owned(), |v| format!("{v:.6}"));
        writeln!(out, "setting\trepeat\tseed\tmicro_f1\tmacro_f1\tauc")?;
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.setting,
                r.repeat,
                r.seed,
                cell(r.micro_f1),
                cell(r.macro_f1),
                cell(r.auc)
            )?;
        }
        for s in self.summaries() {
            writeln!(
                out,
                "{}\tmean\t-\t{}\t{}\t{}",
                s.setting,
                cell(s.micro_f1),
                cell(s.macro_f1),
                cell(s.auc)
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for ExperimentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |x: Option<f64>| x.map_or_else(|| "     -".to_owned(), |v| format!("{v:.4}"));
        writeln!(f, "{:>8} {:>7} {:>8} {:>8} {:>8}", "setting", "repeats", "micro", "macro", "auc")?;
        for s in self.summaries() {
            writeln!(
                f,
                "{:>8.2} {:>7} {:>8} {:>8} {:>8}",
                s.setting,
                s.repeats,
                cell(s.micro_f1),
                cell(s.macro_f1),
                cell(s.auc)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationConfig {
    pub ratios: Vec<f64>,
    pub repeats: usize,
    pub logistic: LogisticConfig,
    pub seed: u64,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        ClassificationConfig {
            ratios: (1..=9).map(|i| i as f64 / 10.0).collect(),
            repeats: 50,
            logistic: LogisticConfig::default(),
            seed: 0,
        }
    }
}

fn select_rows(features: &Embedding, rows: &[usize]) -> Embedding {
    let mut data = Vec::with_capacity(rows.len() * features.dim());
    for &r in rows {
        data.extend_from_slice(features.row(r));
    }
    Embedding::from_vec(data, rows.len(), features.dim()).expect("consistent shape")
}

/// Repeated random train/test splits at each ratio; every repeat fits a
/// one-vs-rest model on the training nodes and scores the rest.
pub fn classification_experiment(
    features: &Embedding,
    labels: &NodeLabels,
    cfg: &ClassificationConfig,
) -> Result<ExperimentReport> {
    if features.rows() != labels.len() {
        return Err(Error::Dimension {
            axis: "labeled nodes",
            expected: features.rows(),
            found: labels.len(),
        });
    }
    let n = labels.len();
    let k = labels.class_count();
    let jobs: Vec<(usize, f64, usize)> = cfg
        .ratios
        .iter()
        .enumerate()
        .flat_map(|(ri, &r)| (0..cfg.repeats).map(move |rep| (ri, r, rep)))
        .collect();
    for &(_, r, _) in &jobs {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Config(format!("training ratio {r} must lie in (0, 1)")));
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(ri, ratio, repeat)| {
            let mut rng = random::stream(cfg.seed, ri as u64, repeat as u64);
            let train_len = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
            let mut order: Vec<usize> = (0..n).collect();
            let mut attempt = 0;
            loop {
                order.shuffle(&mut rng);
                let mut seen = vec![false; k];
                for &i in &order[..train_len] {
                    seen[labels.labels()[i] as usize] = true;
                }
                if seen.iter().all(|&s| s) {
                    break;
                }
                attempt += 1;
                if attempt > 1 {
                    return Err(Error::Data(format!(
                        "training split at ratio {ratio} lacks a class after resampling"
                    )));
                }
            }
            let (train, test) = order.split_at(train_len);
            let train_y: Vec<u32> = train.iter().map(|&i| labels.labels()[i]).collect();
            let test_y: Vec<u32> = test.iter().map(|&i| labels.labels()[i]).collect();
            let model = one_vs_rest(&select_rows(features, train), &train_y, k, &cfg.logistic)?;
            let pred = model.predict_all(&select_rows(features, test));
            Ok(MetricRow {
                setting: ratio,
                repeat,
                seed: cfg.seed,
                micro_f1: Some(micro_f1(&pred, &test_y)),
                macro_f1: Some(macro_f1(&pred, &test_y, k)),
                auc: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport { rows })
}

/// Held-out edges and sampled non-edges for link prediction.
#[derive(Debug, Clone)]
pub struct LinkSplit {
    pub residual: Graph,
    pub test_positives: Vec<(NodeId, NodeId)>,
    pub train_negatives: Vec<(NodeId, NodeId)>,
    pub test_negatives: Vec<(NodeId, NodeId)>,
    /// Removed edges over original edges.
    pub achieved_fraction: f64,
    pub seed: u64,
}

impl LinkSplit {
    pub fn residual_edges(&self) -> Vec<(NodeId, NodeId)> {
        self.residual.edges().collect()
    }
}

/// Removes up to `floor(fraction * |E|)` edges in seeded random order,
/// skipping any edge whose removal would disconnect the graph, and samples
/// disjoint sets of non-edges for training and testing.
pub fn make_link_split(graph: &Graph, fraction: f64, seed: u64) -> Result<LinkSplit> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!("removal fraction {fraction} must lie in [0, 1)")));
    }
    if graph.node_count() == 0 || connected_components(graph).count != 1 {
        return Err(Error::Data(
            "link split needs a connected graph; extract the largest component first".into(),
        ));
    }
    let mut rng = random::stream(seed, 7, 0);
    let mut edges: Vec<(NodeId, NodeId)> = graph.edges().collect();
    edges.shuffle(&mut rng);
    let target = (fraction * graph.edge_count() as f64).floor() as usize;

    let mut adj: Vec<Vec<NodeId>> = graph.nodes().map(|v| graph.neighbors(v).to_vec()).collect();
    let mut removed = Vec::new();
    let mut mark = vec![0u32; graph.node_count()];
    let mut stamp = 0u32;
    let mut stack = Vec::new();
    for &(u, v) in &edges {
        if removed.len() >= target {
            break;
        }
        detach(&mut adj, u, v);
        stamp += 1;
        if reachable(&adj, u, v, &mut mark, stamp, &mut stack) {
            removed.push((u, v));
        } else {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
    }
    if removed.is_empty() {
        return Err(Error::Data(
            "no edge can be removed without disconnecting the graph".into(),
        ));
    }
    let residual = Graph::from_edges(
        graph.node_count(),
        adj.iter()
            .enumerate()
            .flat_map(|(u, ns)| ns.iter().map(move |&v| (u as NodeId, v)))
            .collect::<Vec<_>>(),
    );

    let n = graph.node_count() as u64;
    let non_edges = n * (n - 1) / 2 - graph.edge_count() as u64;
    let needed = (residual.edge_count() + removed.len()) as u64;
    if non_edges < needed {
        return Err(Error::Data(format!(
            "negatives unavailable: {needed} non-edges needed, graph has {non_edges}"
        )));
    }
    let mut taken = HashSet::new();
    let mut draw = |count: usize, rng: &mut random::Rng| {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let a = rng.gen_range(0..graph.node_count() as NodeId);
            let b = rng.gen_range(0..graph.node_count() as NodeId);
            if a == b || graph.has_edge(a, b) {
                continue;
            }
            let pair = (a.min(b), a.max(b));
            if taken.insert(pair) {
                out.push(pair);
            }
        }
        out
    };
    let train_negatives = draw(residual.edge_count(), &mut rng);
    let test_negatives = draw(removed.len(), &mut rng);
    Ok(LinkSplit {
        achieved_fraction: removed.len() as f64 / graph.edge_count() as f64,
        residual,
        test_positives: removed,
        train_negatives,
        test_negatives,
        seed,
    })
}

fn detach(adj: &mut [Vec<NodeId>], u: NodeId, v: NodeId) {
    for (a, b) in [(u, v), (v, u)] {
        let list = &mut adj[a as usize];
        if let Some(pos) = list.iter().position(|&x| x == b) {
            list.swap_remove(pos);
        }
    }
}

fn reachable(
    adj: &[Vec<NodeId>],
    from: NodeId,
    to: NodeId,
    mark: &mut [u32],
    stamp: u32,
    stack: &mut Vec<NodeId>,
) -> bool {
    stack.clear();
    stack.push(from);
    mark[from as usize] = stamp;
    while let Some(x) = stack.pop() {
        if x == to {
            return true;
        }
        for &y in &adj[x as usize] {
            if mark[y as usize] != stamp {
                mark[y as usize] = stamp;
                stack.push(y);
            }
        }
    }
    false
}

/// Elementwise product of the endpoint vectors of every pair.
pub fn hadamard_features(emb: &Embedding, pairs: &[(NodeId, NodeId)]) -> Embedding {
    let d = emb.dim();
    let mut data = Vec::with_capacity(pairs.len() * d);
    for &(u, v) in pairs {
        data.extend(
            emb.row(u as usize)
                .iter()
                .zip(emb.row(v as usize))
                .map(|(a, b)| a * b),
        );
    }
    Embedding::from_vec(data, pairs.len(), d).expect("consistent shape")
}

/// Trains on residual edges against training negatives and returns the AUC
/// on the held-out positives and negatives.
pub fn link_prediction_auc(
    split: &LinkSplit,
    embedding: &Embedding,
    cfg: &LogisticConfig,
) -> Result<f64> {
    if embedding.rows() != split.residual.node_count() {
        return Err(Error::Dimension {
            axis: "embedded nodes",
            expected: split.residual.node_count(),
            found: embedding.rows(),
        });
    }
    let mut train_pairs = split.residual_edges();
    let positives = train_pairs.len();
    train_pairs.extend_from_slice(&split.train_negatives);
    let train_y: Vec<bool> = (0..train_pairs.len()).map(|i| i < positives).collect();
    let model = logistic_fit(&hadamard_features(embedding, &train_pairs), &train_y, cfg)?;

    let mut test_pairs = split.test_positives.clone();
    test_pairs.extend_from_slice(&split.test_negatives);
    let test_y: Vec<bool> = (0..test_pairs.len())
        .map(|i| i < split.test_positives.len())
        .collect();
    let feats = hadamard_features(embedding, &test_pairs);
    let scores: Vec<f64> = feats.iter_rows().map(|x| model.score(x)).collect();
    auc(&scores, &test_y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: &[&[f64]]) -> Embedding {
        Embedding::from_rows(rows).unwrap()
    }

    #[test]
    fn separable_one_dimensional_data() {
        let x = matrix(&[&[-1.0], &[1.0]]);
        let cfg = LogisticConfig {
            penalty: Penalty::Fixed(0.1),
            ..LogisticConfig::default()
        };
        let m = logistic_fit(&x, &[false, true], &cfg).unwrap();
        assert!(m.predict(&[0.5]) && m.predict(&[3.0]));
        assert!(!m.predict(&[-0.5]) && !m.predict(&[-3.0]));
    }

    #[test]
    fn inverse_penalty_scales_with_examples() {
        assert_eq!(Penalty::InverseC(1.0).lambda(4), 0.25);
        assert_eq!(Penalty::InverseC(2.0).lambda(50), 0.01);
        assert_eq!(Penalty::Fixed(0.3).lambda(1000), 0.3);
        let x = matrix(&[&[1.0], &[-1.0]]);
        let m = logistic_fit(&x, &[true, false], &LogisticConfig::default()).unwrap();
        assert_eq!(m.lambda, 0.5);
    }

    #[test]
    fn identical_labels_give_an_intercept_model() {
        let x = matrix(&[&[0.3, -1.0], &[2.0, 0.5], &[-1.0, 1.0]]);
        let cfg = LogisticConfig {
            max_iters: 200,
            ..LogisticConfig::default()
        };
        let m = logistic_fit(&x, &[true, true, true], &cfg).unwrap();
        assert!(m.bias > 0.0);
        for p in [[0.0, 0.0], [5.0, 5.0], [-5.0, 2.0]] {
            assert!(m.predict(&p));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = random::rng(3);
        let x = Embedding::from_vec((0..40).map(|_| rng.gen_range(-2.0..2.0)).collect(), 8, 5).unwrap();
        let y: Vec<bool> = (0..8).map(|_| rng.gen()).collect();
        let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = 0.3;
        let lambda = 0.7;
        let (gw, gb) = logistic_gradient(&x, &y, &w, b, lambda);
        let h = 1e-5;
        for t in 0..5 {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[t] += h;
            wm[t] -= h;
            let fd = (logistic_objective(&x, &y, &wp, b, lambda)
                - logistic_objective(&x, &y, &wm, b, lambda))
                / (2.0 * h);
            assert!((fd - gw[t]).abs() <= 1e-5 * fd.abs().max(gw[t].abs()).max(1e-8));
        }
        let fd = (logistic_objective(&x, &y, &w, b + h, lambda)
            - logistic_objective(&x, &y, &w, b - h, lambda))
            / (2.0 * h);
        assert!((fd - gb).abs() <= 1e-5 * fd.abs().max(1e-8));
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = random::rng(8);
        let x = Embedding::from_vec((0..300).map(|_| rng.gen_range(-1.0..1.0)).collect(), 60, 5).unwrap();
        let y: Vec<bool> = x.iter_rows().map(|r| r[0] + 0.3 * r[1] > 0.1).collect();
        let mut values = Vec::new();
        let cfg = LogisticConfig {
            penalty: Penalty::Fixed(0.01),
            ..LogisticConfig::default()
        };
        logistic_fit_traced(&x, &y, &cfg, |v| values.push(v)).unwrap();
        assert!(!values.is_empty());
        assert!(values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn non_finite_features_are_rejected() {
        let x = matrix(&[&[f64::NAN], &[1.0]]);
        assert!(logistic_fit(&x, &[true, false], &LogisticConfig::default()).is_err());
    }

    #[test]
    fn two_class_ovr_matches_binary_model() {
        let mut rng = random::rng(1);
        let x = Embedding::from_vec((0..60).map(|_| rng.gen_range(-1.0..1.0)).collect(), 30, 2).unwrap();
        let y: Vec<u32> = x.iter_rows().map(|r| (r[0] > r[1]) as u32).collect();
        let cfg = LogisticConfig::default();
        let ovr = one_vs_rest(&x, &y, 2, &cfg).unwrap();
        let bin = logistic_fit(&x, &y.iter().map(|&c| c == 1).collect::<Vec<_>>(), &cfg).unwrap();
        for r in x.iter_rows() {
            assert_eq!(ovr.predict(r), bin.predict(r) as u32);
        }
    }

    #[test]
    fn separated_blobs_are_learned() {
        let mut rng = random::rng(4);
        let centers = [[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]];
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..30 {
                let noise: [f64; 2] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                rows.push([center[0] + noise[0], center[1] + noise[1]]);
                y.push(c as u32);
            }
        }
        let x = Embedding::from_rows(&rows).unwrap();
        let cfg = LogisticConfig {
            penalty: Penalty::Fixed(0.01),
            ..LogisticConfig::default()
        };
        let model = one_vs_rest(&x, &y, 3, &cfg).unwrap();
        let acc = micro_f1(&model.predict_all(&x), &y);
        assert!(acc >= 0.95, "{acc}");
    }

    #[test]
    fn one_point_per_class() {
        let x = matrix(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let y = [0, 1, 2];
        let model = one_vs_rest(&x, &y, 3, &LogisticConfig::default()).unwrap();
        assert_eq!(model.predict_all(&x), vec![0, 1, 2]);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(micro_f1(&[0, 1, 2], &[0, 1, 2]), 1.0);
        assert_eq!(macro_f1(&[0, 1, 2], &[0, 1, 2], 3), 1.0);

        let truth = [0, 0, 1, 1];
        let pred = [0, 1, 1, 1];
        assert_eq!(micro_f1(&pred, &truth), 0.75);
        assert!((macro_f1(&pred, &truth, 2) - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);

        assert_eq!(micro_f1(&[1, 0], &[0, 1]), 0.0);
        assert_eq!(macro_f1(&[1, 0], &[0, 1], 2), 0.0);
        // class 2 appears nowhere and contributes zero
        assert_eq!(macro_f1(&[0, 1], &[0, 1], 3), 2.0 / 3.0);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.3], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.8, 0.4, 0.6, 0.2], &[true, true, false, false]).unwrap(), 0.75);
        assert_eq!(auc(&[0.5; 6], &[true, false, true, false, true, false]).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn nmi_examples() {
        assert!((normalized_mutual_information(&[0, 0, 1, 1], &[1, 1, 0, 0]) - 1.0).abs() < 1e-12);
        assert!(normalized_mutual_information(&[0, 1, 0, 1], &[0, 0, 1, 1]).abs() < 1e-12);
    }

    fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut twice = 0u64;
        let (mut p, mut n) = (0u64, 0u64);
        for (i, &li) in labels.iter().enumerate() {
            if li {
                p += 1;
            } else {
                n += 1;
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                if scores[i] > scores[j] {
                    twice += 2;
                } else if scores[i] == scores[j] {
                    twice += 1;
                }
            }
        }
        twice as f64 / (2 * p * n) as f64
    }

    proptest! {
        #[test]
        fn auc_equals_brute_force(
            data in prop::collection::vec((0u8..20, any::<bool>()), 2..200)
        ) {
            let scores: Vec<f64> = data.iter().map(|&(s, _)| s as f64 / 4.0).collect();
            let labels: Vec<bool> = data.iter().map(|&(_, l)| l).collect();
            if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
                prop_assert_eq!(auc(&scores, &labels).unwrap(), brute_auc(&scores, &labels));
            }
        }

        #[test]
        fn micro_f1_is_accuracy(pairs in prop::collection::vec((0u32..4, 0u32..4), 1..100)) {
            let pred: Vec<u32> = pairs.iter().map(|p| p.0).collect();
            let truth: Vec<u32> = pairs.iter().map(|p| p.1).collect();
            let acc = pairs.iter().filter(|p| p.0 == p.1).count() as f64 / pairs.len() as f64;
            prop_assert!((micro_f1(&pred, &truth) - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn one_hot_features_classify_perfectly() {
        let labels = NodeLabels::new((0..60).map(|i| (i % 3) as u32).collect());
        let rows: Vec<Vec<f64>> = labels
            .labels()
            .iter()
            .map(|&l| (0..3).map(|c| if c == l { 1.0 } else { 0.0 }).collect())
            .collect();
        let x = Embedding::from_rows(&rows).unwrap();
        let cfg = ClassificationConfig {
            repeats: 5,
            logistic: LogisticConfig {
                penalty: Penalty::Fixed(1e-3),
                ..LogisticConfig::default()
            },
            ..ClassificationConfig::default()
        };
        let report = classification_experiment(&x, &labels, &cfg).unwrap();
        assert_eq!(report.rows.len(), 45);
        for s in report.summaries() {
            assert_eq!(s.micro_f1, Some(1.0), "ratio {}", s.setting);
        }
    }

    #[test]
    fn noise_features_score_at_chance() {
        let mut rng = random::rng(12);
        let n = 400;
        let labels = NodeLabels::new((0..n).map(|i| (i % 2) as u32).collect());
        let x = Embedding::from_vec((0..n * 8).map(|_| rng.gen_range(-1.0..1.0)).collect(), n, 8).unwrap();
        let cfg = ClassificationConfig {
            ratios: vec![0.5],
            repeats: 10,
            ..ClassificationConfig::default()
        };
        let report = classification_experiment(&x, &labels, &cfg).unwrap();
        let micro = report.summary_for(0.5).unwrap().micro_f1.unwrap();
        assert!((micro - 0.5).abs() <= 0.05, "{micro}");
    }

    #[test]
    fn missing_training_class_is_an_error() {
        // one node of class 1 out of 50: a 10% split almost never sees it
        let labels = NodeLabels::new((0..50).map(|i| (i == 0) as u32).collect());
        let x = Embedding::zeros(50, 2);
        let cfg = ClassificationConfig {
            ratios: vec![0.02],
            repeats: 20,
            ..ClassificationConfig::default()
        };
        assert!(classification_experiment(&x, &labels, &cfg).is_err());
    }

    #[test]
    fn report_tsv_layout() {
        let report = ExperimentReport {
            rows: vec![MetricRow {
                setting: 0.5,
                repeat: 0,
                seed: 3,
                micro_f1: Some(0.75),
                macro_f1: Some(0.5),
                auc: None,
            }],
        };
        let mut buf = Vec::new();
        report.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "setting\trepeat\tseed\tmicro_f1\tmacro_f1\tauc");
        assert_eq!(lines[1], "0.5\t0\t3\t0.750000\t0.500000\t-");
        assert_eq!(lines[2], "0.5\tmean\t-\t0.750000\t0.500000\t-");
    }

    fn cycle(n: u32) -> Graph {
        Graph::from_edges(n as usize, (0..n).map(|i| (i, (i + 1) % n)))
    }

    #[test]
    fn tree_has_no_removable_edges() {
        let tree = Graph::from_edges(5, [(0, 1), (0, 2), (1, 3), (1, 4)]);
        assert!(matches!(make_link_split(&tree, 0.5, 1), Err(Error::Data(_))));
    }

    #[test]
    fn cycle_stops_after_one_removal() {
        let split = make_link_split(&cycle(6), 0.5, 3).unwrap();
        assert_eq!(split.test_positives.len(), 1);
        assert!((split.achieved_fraction - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(connected_components(&split.residual).count, 1);
        assert_eq!(split.train_negatives.len(), 5);
        assert_eq!(split.test_negatives.len(), 1);
    }

    #[test]
    fn complete_graph_has_no_negatives() {
        let k5 = Graph::from_edges(5, (0..5u32).flat_map(|u| (u + 1..5).map(move |v| (u, v))));
        let err = make_link_split(&k5, 0.5, 0).unwrap_err();
        assert!(err.to_string().contains("negatives unavailable"), "{err}");
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let g = Graph::from_edges(4, [(0, 1), (2, 3)]);
        let err = make_link_split(&g, 0.5, 0).unwrap_err();
        assert!(err.to_string().contains("largest component"));
    }

    #[test]
    fn split_invariants_hold() {
        let g = crate::graph::generate_erdos_renyi(80, 0.1, 2).unwrap();
        let (g, _) = crate::graph::largest_component(&g);
        let split = make_link_split(&g, 0.5, 9).unwrap();
        assert_eq!(connected_components(&split.residual).count, 1);
        let mut all: Vec<_> = split.residual_edges();
        all.extend(split.test_positives.iter().map(|&(u, v)| (u.min(v), u.max(v))));
        all.sort_unstable();
        let original: Vec<_> = g.edges().collect();
        assert_eq!(all, original);
        for &(u, v) in split.train_negatives.iter().chain(&split.test_negatives) {
            assert!(u != v && !g.has_edge(u, v));
        }
        let train: HashSet<_> = split.train_negatives.iter().collect();
        assert!(split.test_negatives.iter().all(|p| !train.contains(p)));
        assert_eq!(split.train_negatives.len(), split.residual.edge_count());
        assert_eq!(split.test_negatives.len(), split.test_positives.len());
        assert_eq!(split.test_positives.len(), g.edge_count() / 2);
    }

    #[test]
    fn planted_one_hot_features_predict_links() {
        let cfg = crate::graph::SbmConfig {
            cluster_sizes: vec![60, 60],
            p: 0.2,
            q: 0.01,
            c: 1.0,
            seed: 5,
        };
        let (g, labels) = crate::graph::generate_sbm(&cfg).unwrap();
        let (g, nodes) = crate::graph::largest_component(&g);
        let labels = labels.select(&nodes);
        let split = make_link_split(&g, 0.5, 1).unwrap();
        let rows: Vec<Vec<f64>> = labels
            .labels()
            .iter()
            .map(|&l| (0..2).map(|c| if c == l { 1.0 } else { 0.0 }).collect())
            .collect();
        let emb = Embedding::from_rows(&rows).unwrap();
        let a = link_prediction_auc(&split, &emb, &LogisticConfig::default()).unwrap();
        // the best any scorer can do here ranks same-block pairs above the rest
        let same = |&(u, v): &(NodeId, NodeId)| (labels.labels()[u as usize] == labels.labels()[v as usize]) as u8 as f64;
        let mut oracle_scores: Vec<f64> = split.test_positives.iter().map(same).collect();
        oracle_scores.extend(split.test_negatives.iter().map(same));
        let oracle_y: Vec<bool> = (0..oracle_scores.len()).map(|i| i < split.test_positives.len()).collect();
        let best = auc(&oracle_scores, &oracle_y).unwrap();
        assert!((a - best).abs() <= 0.03, "{a} vs {best}");

        let mut rng = random::rng(2);
        let noise = Embedding::from_vec(
            (0..g.node_count() * 16).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            g.node_count(),
            16,
        )
        .unwrap();
        let a = link_prediction_auc(&split, &noise, &LogisticConfig::default()).unwrap();
        assert!((a - 0.5).abs() <= 0.05, "{a}");
    }
}
