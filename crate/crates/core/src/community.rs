//! Structure-based topic backends: Louvain modularity maximization and the
//! BigClam affiliation model.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, NodeNames};
use crate::random;
use crate::topics::{Backend, TopicPosterior};

/// Hard assignment of nodes to communities with dense ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    community: Vec<u32>,
    count: usize,
}

impl Partition {
    /// Renumbers arbitrary labels densely in order of first appearance.
    pub fn from_labels<T: Copy + Eq + std::hash::Hash>(labels: &[T]) -> Self {
        let mut ids = std::collections::HashMap::new();
        let community = labels
            .iter()
            .map(|l| {
                let next = ids.len() as u32;
                *ids.entry(*l).or_insert(next)
            })
            .collect();
        Partition {
            community,
            count: ids.len(),
        }
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            community: (0..n as u32).collect(),
            count: n,
        }
    }

    pub fn community_of(&self, v: NodeId) -> u32 {
        self.community[v as usize]
    }

    pub fn communities(&self) -> &[u32] {
        &self.community
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.community.len()
    }

    pub fn is_empty(&self) -> bool {
        self.community.is_empty()
    }
}

/// Newman modularity `Q = sum_c [e_c/|E| - (d_c / 2|E|)^2]`.
pub fn modularity(graph: &Graph, part: &Partition) -> Result<f64> {
    if graph.edge_count() == 0 {
        return Err(Error::Data("modularity undefined without edges".into()));
    }
    if part.len() != graph.node_count() {
        return Err(Error::Dimension {
            axis: "partition length",
            expected: graph.node_count(),
            found: part.len(),
        });
    }
    let m = graph.edge_count() as f64;
    let mut internal = vec![0.0; part.count()];
    let mut degree = vec![0.0; part.count()];
    for u in graph.nodes() {
        let cu = part.community_of(u) as usize;
        degree[cu] += graph.degree(u) as f64;
        for &v in graph.neighbors(u) {
            if u < v && part.community_of(v) as usize == cu {
                internal[cu] += 1.0;
            }
        }
    }
    Ok(internal
        .iter()
        .zip(&degree)
        .map(|(e, d)| e / m - (d / (2.0 * m)).powi(2))
        .sum())
}

/// Weighted graph of one Louvain level.
struct LevelGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    degree: Vec<f64>,
    total_weight: f64,
}

impl LevelGraph {
    fn from_graph(g: &Graph) -> Self {
        let adj: Vec<Vec<(usize, f64)>> = g
            .nodes()
            .map(|u| g.neighbors(u).iter().map(|&v| (v as usize, 1.0)).collect())
            .collect();
        let degree = g.nodes().map(|u| g.degree(u) as f64).collect();
        LevelGraph {
            adj,
            self_loops: vec![0.0; g.node_count()],
            degree,
            total_weight: g.edge_count() as f64,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    /// Collapses every community into one node; internal weight becomes a
    /// self-loop.
    fn aggregate(&self, comm: &[usize], count: usize) -> LevelGraph {
        let mut self_loops = vec![0.0; count];
        let mut degree = vec![0.0; count];
        let mut maps: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); count];
        for u in 0..self.len() {
            let cu = comm[u];
            self_loops[cu] += self.self_loops[u];
            degree[cu] += self.degree[u];
            for &(v, w) in &self.adj[u] {
                let cv = comm[v];
                if cu == cv {
                    // each internal edge is seen from both ends
                    self_loops[cu] += w / 2.0;
                } else {
                    *maps[cu].entry(cv).or_insert(0.0) += w;
                }
            }
        }
        LevelGraph {
            adj: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_loops,
            degree,
            total_weight: self.total_weight,
        }
    }
}

/// An accepted Louvain move, reported to the observer of
/// [`louvain_traced`]. Partitions are over the original nodes.
pub struct LouvainMove<'a> {
    pub level: usize,
    pub delta_q: f64,
    pub before: &'a Partition,
    pub after: &'a Partition,
}

#[derive(Debug, Clone)]
pub struct LouvainOutcome {
    pub partition: Partition,
    /// Modularity of the flattened partition after each level.
    pub level_modularity: Vec<f64>,
}

pub fn louvain(graph: &Graph, seed: u64) -> Result<Partition> {
    Ok(louvain_traced(graph, seed, None::<fn(LouvainMove<'_>)>)?.partition)
}

/// Louvain with an optional observer that sees every accepted local move.
pub fn louvain_traced<F>(graph: &Graph, seed: u64, mut observer: Option<F>) -> Result<LouvainOutcome>
where
    F: FnMut(LouvainMove<'_>),
{
    if graph.edge_count() == 0 {
        return Err(Error::Data("Louvain needs at least one edge".into()));
    }
    let n = graph.node_count();
    let mut level_graph = LevelGraph::from_graph(graph);
    // original node -> node of the current level graph
    let mut membership: Vec<usize> = (0..n).collect();
    let mut level_modularity = Vec::new();
    let m = level_graph.total_weight;

    for level in 0.. {
        let size = level_graph.len();
        let mut comm: Vec<usize> = (0..size).collect();
        let mut tot: Vec<f64> = level_graph.degree.clone();
        let mut order: Vec<usize> = (0..size).collect();
        order.shuffle(&mut random::stream(seed, level as u64, 0));

        let mut neigh_weight = vec![0.0; size];
        let mut neigh_comms: Vec<usize> = Vec::new();
        let mut moved_any = false;
        loop {
            let mut moved = false;
            for &i in &order {
                let ki = level_graph.degree[i];
                let old = comm[i];
                for &(j, w) in &level_graph.adj[i] {
                    let c = comm[j];
                    if neigh_weight[c] == 0.0 {
                        neigh_comms.push(c);
                    }
                    neigh_weight[c] += w;
                }
                tot[old] -= ki;
                let gain = |c: usize, w_ic: f64| w_ic / m - ki * tot[c] / (2.0 * m * m);
                let stay = gain(old, neigh_weight[old]);
                neigh_comms.sort_unstable();
                let mut best = old;
                let mut best_gain = stay;
                for &c in &neigh_comms {
                    let g = gain(c, neigh_weight[c]);
                    if g > best_gain {
                        best = c;
                        best_gain = g;
                    }
                }
                let delta = best_gain - stay;
                if best != old && delta <= 1e-12 {
                    best = old;
                }
                tot[best] += ki;
                for &c in &neigh_comms {
                    neigh_weight[c] = 0.0;
                }
                neigh_comms.clear();
                if best != old {
                    if let Some(obs) = observer.as_mut() {
                        let before = flatten(&membership, &comm);
                        comm[i] = best;
                        let after = flatten(&membership, &comm);
                        obs(LouvainMove {
                            level,
                            delta_q: delta,
                            before: &before,
                            after: &after,
                        });
                    } else {
                        comm[i] = best;
                    }
                    moved = true;
                    moved_any = true;
                }
            }
            if !moved {
                break;
            }
        }

        // renumber surviving communities densely
        let mut dense = vec![usize::MAX; size];
        let mut count = 0;
        for c in comm.iter_mut() {
            if dense[*c] == usize::MAX {
                dense[*c] = count;
                count += 1;
            }
            *c = dense[*c];
        }
        for node in membership.iter_mut() {
            *node = comm[*node];
        }
        level_modularity.push(modularity(graph, &flatten_identity(&membership))?);
        if !moved_any || count == size {
            break;
        }
        level_graph = level_graph.aggregate(&comm, count);
    }

    Ok(LouvainOutcome {
        partition: flatten_identity(&membership),
        level_modularity,
    })
}

fn flatten(membership: &[usize], comm: &[usize]) -> Partition {
    let labels: Vec<usize> = membership.iter().map(|&x| comm[x]).collect();
    Partition::from_labels(&labels)
}

fn flatten_identity(membership: &[usize]) -> Partition {
    Partition::from_labels(membership)
}

pub fn partition_to_posterior(part: &Partition) -> Result<TopicPosterior> {
    let k = part.count().max(1);
    let mut probs = vec![0.0; part.len() * k];
    for (v, &c) in part.communities().iter().enumerate() {
        probs[v * k + c as usize] = 1.0;
    }
    TopicPosterior::new(probs, k, Backend::Louvain)
}

/// Nonnegative node-by-community strengths.
#[derive(Debug, Clone, PartialEq)]
pub struct AffiliationMatrix {
    data: Vec<f64>,
    k: usize,
}

impl AffiliationMatrix {
    pub fn new(data: Vec<f64>, k: usize) -> Result<Self> {
        if k == 0 || data.len() % k != 0 {
            return Err(Error::Data("affiliation matrix shape mismatch".into()));
        }
        if data.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::Data("affiliation strengths must be finite and >= 0".into()));
        }
        Ok(AffiliationMatrix { data, k })
    }

    pub fn community_count(&self) -> usize {
        self.k
    }

    pub fn node_count(&self) -> usize {
        self.data.len() / self.k
    }

    pub fn row(&self, v: NodeId) -> &[f64] {
        &self.data[v as usize * self.k..(v as usize + 1) * self.k]
    }

    /// Log-likelihood of `graph` under edge probability
    /// `1 - exp(-F_u . F_v)`, summed over unordered pairs.
    pub fn log_likelihood(&self, graph: &Graph) -> f64 {
        let k = self.k;
        let mut sum = vec![0.0; k];
        let mut self_dot = 0.0;
        for row in self.data.chunks(k) {
            for t in 0..k {
                sum[t] += row[t];
            }
            self_dot += dot(row, row);
        }
        let all_pairs = 0.5 * (dot(&sum, &sum) - self_dot);
        let mut edge_term = 0.0;
        let mut edge_dot = 0.0;
        for (u, v) in graph.edges() {
            let x = dot(self.row(u), self.row(v));
            edge_term += log_link(x);
            edge_dot += x;
        }
        edge_term - (all_pairs - edge_dot)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(1 - exp(-x))`, which is `-inf` at `x = 0`.
#[inline]
fn log_link(x: f64) -> f64 {
    (-(-x).exp_m1()).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BigClamConfig {
    pub communities: usize,
    pub max_iterations: usize,
    /// Converged once a sweep changes no entry by more than this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for BigClamConfig {
    fn default() -> Self {
        BigClamConfig {
            communities: 10,
            max_iterations: 200,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

const INIT_SCALE: f64 = 0.1;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 30;

/// Row-wise projected gradient ascent on the BigClam likelihood.
pub struct BigClam<'g> {
    graph: &'g Graph,
    f: Vec<f64>,
    sum: Vec<f64>,
    k: usize,
    candidate: Vec<f64>,
    grad: Vec<f64>,
    neigh_sum: Vec<f64>,
}

impl<'g> BigClam<'g> {
    pub fn new(graph: &'g Graph, cfg: &BigClamConfig) -> Result<Self> {
        if cfg.communities < 1 {
            return Err(Error::Config("BigClam needs K >= 1".into()));
        }
        let k = cfg.communities;
        let mut rng = random::rng(cfg.seed);
        let f: Vec<f64> = (0..graph.node_count() * k)
            .map(|_| rng.gen::<f64>() * INIT_SCALE)
            .collect();
        let mut sum = vec![0.0; k];
        for row in f.chunks(k) {
            for t in 0..k {
                sum[t] += row[t];
            }
        }
        Ok(BigClam {
            graph,
            f,
            sum,
            k,
            candidate: vec![0.0; k],
            grad: vec![0.0; k],
            neigh_sum: vec![0.0; k],
        })
    }

    fn row(&self, v: usize) -> &[f64] {
        &self.f[v * self.k..(v + 1) * self.k]
    }

    /// Terms of the likelihood that involve node `u` when its row is `x`.
    fn row_objective(&self, u: usize, x: &[f64]) -> f64 {
        let mut edge_term = 0.0;
        for &v in self.graph.neighbors(u as NodeId) {
            edge_term += log_link(dot(x, self.row(v as usize)));
        }
        let mut rest = 0.0;
        let own = self.row(u);
        for t in 0..self.k {
            rest += x[t] * (self.sum[t] - own[t] - self.neigh_sum[t]);
        }
        edge_term - rest
    }

    /// One projected line-search step on row `u`. Returns the largest entry
    /// change (0 when no step was accepted).
    pub fn update_row(&mut self, u: usize) -> f64 {
        let k = self.k;
        self.neigh_sum.iter_mut().for_each(|x| *x = 0.0);
        self.grad.iter_mut().for_each(|x| *x = 0.0);
        for &v in self.graph.neighbors(u as NodeId) {
            let fv = &self.f[v as usize * k..(v as usize + 1) * k];
            let d = dot(&self.f[u * k..(u + 1) * k], fv);
            let weight = 1.0 / d.exp_m1();
            for t in 0..k {
                self.neigh_sum[t] += fv[t];
                self.grad[t] += fv[t] * weight;
            }
        }
        for t in 0..k {
            self.grad[t] -= self.sum[t] - self.f[u * k + t] - self.neigh_sum[t];
        }
        if self.grad.iter().any(|g| !g.is_finite()) {
            return 0.0;
        }

        let current = self.row(u).to_vec();
        let base = self.row_objective(u, &current);
        let mut step = 1.0;
        for _ in 0..MAX_HALVINGS {
            let mut ascent = 0.0;
            for t in 0..k {
                self.candidate[t] = (current[t] + step * self.grad[t]).max(0.0);
                ascent += self.grad[t] * (self.candidate[t] - current[t]);
            }
            let cand = std::mem::take(&mut self.candidate);
            let value = self.row_objective(u, &cand);
            self.candidate = cand;
            if value.is_finite() && value >= base + ARMIJO * ascent && value > base {
                let mut change: f64 = 0.0;
                for t in 0..k {
                    let new = self.candidate[t];
                    change = change.max((new - current[t]).abs());
                    self.sum[t] += new - current[t];
                    self.f[u * k + t] = new;
                }
                return change;
            }
            step *= 0.5;
        }
        0.0
    }

    /// Updates every row once in node order; returns the largest change.
    pub fn sweep(&mut self) -> f64 {
        let mut change: f64 = 0.0;
        for u in 0..self.graph.node_count() {
            change = change.max(self.update_row(u));
        }
        change
    }

    pub fn affiliation(&self) -> AffiliationMatrix {
        AffiliationMatrix {
            data: self.f.clone(),
            k: self.k,
        }
    }

    pub fn log_likelihood(&self) -> f64 {
        self.affiliation().log_likelihood(self.graph)
    }
}

pub fn bigclam(graph: &Graph, cfg: &BigClamConfig) -> Result<AffiliationMatrix> {
    let mut model = BigClam::new(graph, cfg)?;
    for it in 0..cfg.max_iterations {
        let change = model.sweep();
        if change < cfg.tolerance {
            log::debug!("bigclam converged after {} sweeps", it + 1);
            break;
        }
    }
    Ok(model.affiliation())
}

/// Row-normalized affiliations; all-zero rows become uniform.
pub fn affiliation_to_posterior(f: &AffiliationMatrix) -> Result<TopicPosterior> {
    let k = f.community_count();
    let mut probs = Vec::with_capacity(f.data.len());
    for row in f.data.chunks(k) {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            probs.extend(row.iter().map(|x| x / total));
        } else {
            probs.extend(std::iter::repeat(1.0 / k as f64).take(k));
        }
    }
    TopicPosterior::new(probs, k, Backend::BigClam)
}

pub fn save_partition<W: Write>(part: &Partition, names: &NodeNames, mut out: W) -> Result<()> {
    for (v, c) in part.communities().iter().enumerate() {
        writeln!(out, "{} {}", names.token(v as NodeId), c)?;
    }
    Ok(())
}

pub fn save_affiliation<W: Write>(
    f: &AffiliationMatrix,
    names: &NodeNames,
    mut out: W,
) -> Result<()> {
    for v in 0..f.node_count() {
        write!(out, "{}", names.token(v as NodeId))?;
        for x in f.row(v as NodeId) {
            write!(out, " {x:.17e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
