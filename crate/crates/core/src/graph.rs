//! Undirected simple graphs in compressed adjacency form, edge-list I/O and
//! the synthetic generators used by the controlled experiments.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random;

pub type NodeId = u32;

/// Immutable undirected simple graph.
///
/// Neighbors of node `v` are `targets[offsets[v]..offsets[v + 1]]`, sorted
/// strictly ascending. Every undirected edge is stored in both directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    edge_count: usize,
}

impl Graph {
    /// Builds a graph on `node_count` nodes. Self-loops are dropped and
    /// duplicate or reversed edges collapse into one undirected edge.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Self
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut pairs: Vec<(NodeId, NodeId)> = Vec::new();
        for (u, v) in edges {
            assert!(
                (u as usize) < node_count && (v as usize) < node_count,
                "edge ({u}, {v}) out of range for {node_count} nodes"
            );
            if u != v {
                pairs.push((u, v));
                pairs.push((v, u));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut offsets = vec![0usize; node_count + 1];
        for &(u, _) in &pairs {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..node_count {
            offsets[i + 1] += offsets[i];
        }
        let targets: Vec<NodeId> = pairs.iter().map(|&(_, v)| v).collect();
        let edge_count = targets.len() / 2;
        Graph {
            offsets,
            targets,
            edge_count,
        }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    #[inline]
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: NodeId) -> usize {
        let v = v as usize;
        self.offsets[v + 1] - self.offsets[v]
    }

    #[inline]
    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        0..self.node_count() as NodeId
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes().flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    pub fn average_degree(&self) -> f64 {
        if self.node_count() == 0 {
            return 0.0;
        }
        2.0 * self.edge_count as f64 / self.node_count() as f64
    }

    /// Subgraph induced by `nodes` (given in the order that defines the new
    /// ids).
    pub fn induced_subgraph(&self, nodes: &[NodeId]) -> Graph {
        let mut remap = vec![NodeId::MAX; self.node_count()];
        for (new, &old) in nodes.iter().enumerate() {
            remap[old as usize] = new as NodeId;
        }
        let edges = nodes.iter().flat_map(|&u| {
            let remap = &remap;
            self.neighbors(u)
                .iter()
                .filter(move |&&v| remap[v as usize] != NodeId::MAX)
                .map(move |&v| (remap[u as usize], remap[v as usize]))
        });
        Graph::from_edges(nodes.len(), edges.collect::<Vec<_>>())
    }
}

/// Bidirectional mapping between external node tokens and dense ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeNames {
    tokens: Vec<String>,
    index: HashMap<String, NodeId>,
}

impl NodeNames {
    /// Names `0..n` rendered as decimal strings.
    pub fn numeric(n: usize) -> Self {
        let mut names = NodeNames::default();
        for i in 0..n {
            names.intern(&i.to_string());
        }
        names
    }

    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut names = NodeNames::default();
        for t in tokens {
            names.intern(t.as_ref());
        }
        names
    }

    fn intern(&mut self, token: &str) -> NodeId {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as NodeId;
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<NodeId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: NodeId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Names restricted to `nodes`, in that order.
    pub fn select(&self, nodes: &[NodeId]) -> NodeNames {
        NodeNames::from_tokens(nodes.iter().map(|&v| self.token(v)))
    }
}

/// Reads a whitespace-separated edge list. Lines that are blank or start with
/// `#` are skipped. Node ids are assigned in order of first appearance.
pub fn load_edge_list<R: BufRead>(reader: R) -> Result<(Graph, NodeNames)> {
    let mut names = NodeNames::default();
    let mut edges = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let (a, b) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(Error::parse(
                    i + 1,
                    format!("expected two node tokens, found {trimmed:?}"),
                ))
            }
        };
        let u = names.intern(a);
        let v = names.intern(b);
        edges.push((u, v));
    }
    Ok((Graph::from_edges(names.len(), edges), names))
}

pub fn write_edge_list<W: Write>(graph: &Graph, names: &NodeNames, mut out: W) -> Result<()> {
    for (u, v) in graph.edges() {
        writeln!(out, "{} {}", names.token(u), names.token(v))?;
    }
    Ok(())
}

/// One class label per node, dense in `[0, class_count)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeLabels {
    labels: Vec<u32>,
    class_count: usize,
}

impl NodeLabels {
    /// Labels from raw class values; values are renumbered densely in
    /// ascending order.
    pub fn new(raw: Vec<u32>) -> Self {
        let mut distinct = raw.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let labels = raw
            .iter()
            .map(|x| distinct.binary_search(x).unwrap() as u32)
            .collect();
        NodeLabels {
            labels,
            class_count: distinct.len(),
        }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, nodes: &[NodeId]) -> NodeLabels {
        NodeLabels::new(nodes.iter().map(|&v| self.labels[v as usize]).collect())
    }
}

/// Reads `<node-token> <label-int>` lines. Every node in `names` must receive
/// exactly one label.
pub fn load_labels<R: BufRead>(reader: R, names: &NodeNames) -> Result<NodeLabels> {
    let mut raw: Vec<Option<u32>> = vec![None; names.len()];
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let (token, label) = match (fields.next(), fields.next(), fields.next()) {
            (Some(t), Some(l), None) => (t, l),
            _ => {
                return Err(Error::parse(
                    i + 1,
                    format!("expected `<node> <label>`, found {trimmed:?}"),
                ))
            }
        };
        let label: u32 = label
            .parse()
            .map_err(|_| Error::parse(i + 1, format!("label {label:?} is not an integer")))?;
        let Some(id) = names.id(token) else {
            // labels for nodes outside the graph are ignored
            continue;
        };
        if raw[id as usize].replace(label).is_some() {
            return Err(Error::parse(i + 1, format!("node {token:?} labeled twice")));
        }
    }
    let labels = raw
        .into_iter()
        .enumerate()
        .map(|(v, l)| {
            l.ok_or_else(|| {
                Error::Data(format!("node {:?} has no label", names.token(v as NodeId)))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NodeLabels::new(labels))
}

pub fn write_labels<W: Write>(labels: &NodeLabels, names: &NodeNames, mut out: W) -> Result<()> {
    for (v, l) in labels.labels().iter().enumerate() {
        writeln!(out, "{} {}", names.token(v as NodeId), l)?;
    }
    Ok(())
}

/// Connected components, numbered by increasing smallest member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub component_of: Vec<u32>,
    pub count: usize,
}

impl Components {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &c in &self.component_of {
            sizes[c as usize] += 1;
        }
        sizes
    }

    pub fn members(&self, component: u32) -> Vec<NodeId> {
        self.component_of
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == component)
            .map(|(v, _)| v as NodeId)
            .collect()
    }
}

pub fn connected_components(graph: &Graph) -> Components {
    let n = graph.node_count();
    let mut component_of = vec![u32::MAX; n];
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    for start in graph.nodes() {
        if component_of[start as usize] != u32::MAX {
            continue;
        }
        component_of[start as usize] = count;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &v in graph.neighbors(u) {
                if component_of[v as usize] == u32::MAX {
                    component_of[v as usize] = count;
                    queue.push_back(v);
                }
            }
        }
        count += 1;
    }
    Components {
        component_of,
        count: count as usize,
    }
}

/// Largest connected component (ties go to the lowest component id), with
/// the original ids of its nodes in ascending order.
pub fn largest_component(graph: &Graph) -> (Graph, Vec<NodeId>) {
    let comps = connected_components(graph);
    let sizes = comps.sizes();
    let best = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(c, _)| c as u32)
        .unwrap_or(0);
    let nodes = comps.members(best);
    (graph.induced_subgraph(&nodes), nodes)
}

/// Stationary distribution of the simple random walk, `d_v / 2|E|`.
pub fn stationary_distribution(graph: &Graph) -> Result<Vec<f64>> {
    if graph.edge_count() == 0 {
        return Err(Error::Data(
            "stationary distribution undefined on a graph without edges".into(),
        ));
    }
    let total = 2.0 * graph.edge_count() as f64;
    Ok(graph.nodes().map(|v| graph.degree(v) as f64 / total).collect())
}

/// Three-block stochastic block model.
///
/// Blocks 0, 1 and 2 play the roles of clusters A, B and C. Pairs inside a
/// block link with probability `p`; A-B pairs with `q`; A-C pairs with `c*q`;
/// B-C pairs with `q/c`. Any further blocks link to every other block with
/// probability `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub cluster_sizes: Vec<usize>,
    pub p: f64,
    pub q: f64,
    pub c: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        SbmConfig {
            cluster_sizes: vec![1000, 1000, 1000],
            p: 0.07,
            q: 0.003,
            c: 1.667,
            seed: 0,
        }
    }
}

impl SbmConfig {
    /// Probability of linking a node in block `a` to a node in block `b`.
    pub fn block_probability(&self, a: usize, b: usize) -> f64 {
        let (a, b) = (a.min(b), a.max(b));
        match (a, b) {
            _ if a == b => self.p,
            (0, 1) => self.q,
            (0, 2) => self.c * self.q,
            (1, 2) => self.q / self.c,
            _ => self.q,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cluster_sizes.is_empty() {
            return Err(Error::Config("SBM needs at least one cluster".into()));
        }
        if !(self.c >= 1.0) {
            return Err(Error::Config(format!("asymmetry c={} must be >= 1", self.c)));
        }
        if !(0.0 <= self.q && self.q <= self.p && self.p <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 <= q <= p <= 1, got p={} q={}",
                self.p, self.q
            )));
        }
        let k = self.cluster_sizes.len();
        for a in 0..k {
            for b in a..k {
                let prob = self.block_probability(a, b);
                if !(0.0..=1.0).contains(&prob) {
                    return Err(Error::Config(format!(
                        "edge probability {prob} between blocks {a} and {b} is outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Samples an SBM graph and its planted block labels.
pub fn generate_sbm(cfg: &SbmConfig) -> Result<(Graph, NodeLabels)> {
    cfg.validate()?;
    let mut block = Vec::new();
    for (b, &size) in cfg.cluster_sizes.iter().enumerate() {
        block.extend(std::iter::repeat(b).take(size));
    }
    let n = block.len();
    let mut rng = random::rng(cfg.seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let prob = cfg.block_probability(block[u], block[v]);
            if rng.gen::<f64>() < prob {
                edges.push((u as NodeId, v as NodeId));
            }
        }
    }
    let labels = NodeLabels::new(block.iter().map(|&b| b as u32).collect());
    Ok((Graph::from_edges(n, edges), labels))
}

/// G(n, p) random graph.
pub fn generate_erdos_renyi(n: usize, edge_prob: f64, seed: u64) -> Result<Graph> {
    if n == 0 {
        return Err(Error::Config("Erdős-Rényi graph needs n >= 1".into()));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::Config(format!(
            "edge probability {edge_prob} is outside [0, 1]"
        )));
    }
    let mut rng = random::rng(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < edge_prob {
                edges.push((u as NodeId, v as NodeId));
            }
        }
    }
    Ok(Graph::from_edges(n, edges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> (Graph, NodeNames) {
        load_edge_list(text.as_bytes()).unwrap()
    }

    pub(crate) fn triangle_pendant() -> Graph {
        Graph::from_edges(4, [(0, 1), (1, 2), (2, 0), (0, 3)])
    }

    #[test]
    fn orientation_collapses() {
        let (g, names) = parse("a b\nb a\n");
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(names.token(0), "a");
    }

    #[test]
    fn duplicates_and_self_loops_dropped() {
        let (g, names) = parse("a b\na b\na a\n");
        assert_eq!(g.edge_count(), 1);
        assert_eq!(names.len(), 2);
    }

    #[test]
    fn comments_and_blank_lines_skipped() {
        let (g, _) = parse("# header\n\n  x y\n# c d\ny z\n");
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = load_edge_list("a b\nlonely\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
        assert!(load_edge_list("a b c\n".as_bytes()).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let (g, names) = parse("x y\ny z\nz x\nw x\n");
        let mut buf = Vec::new();
        write_edge_list(&g, &names, &mut buf).unwrap();
        let (g2, names2) = load_edge_list(buf.as_slice()).unwrap();
        assert_eq!(g2.edge_count(), g.edge_count());
        for (u, v) in g.edges() {
            let u2 = names2.id(names.token(u)).unwrap();
            let v2 = names2.id(names.token(v)).unwrap();
            assert!(g2.has_edge(u2, v2));
        }
    }

    #[test]
    fn components() {
        let (g, _) = parse("a b\n");
        assert_eq!(connected_components(&g).count, 1);

        let g = Graph::from_edges(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]);
        let comps = connected_components(&g);
        assert_eq!(comps.count, 2);
        assert_eq!(comps.component_of, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn component_ids_follow_smallest_member() {
        let g = Graph::from_edges(5, [(4, 1), (0, 3)]);
        let comps = connected_components(&g);
        assert_eq!(comps.component_of, vec![0, 1, 2, 0, 1]);
        let (lcc, nodes) = largest_component(&g);
        assert_eq!(nodes, vec![0, 3]);
        assert_eq!(lcc.edge_count(), 1);
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary_distribution(&triangle_pendant()).unwrap();
        assert_eq!(pi, vec![3.0 / 8.0, 2.0 / 8.0, 2.0 / 8.0, 1.0 / 8.0]);

        let cycle = Graph::from_edges(7, (0..7).map(|i| (i, (i + 1) % 7)));
        for x in stationary_distribution(&cycle).unwrap() {
            assert!((x - 1.0 / 7.0).abs() < 1e-15);
        }

        let star = Graph::from_edges(6, (1..6).map(|i| (0, i)));
        let pi = stationary_distribution(&star).unwrap();
        assert_eq!(pi[0], 0.5);
        assert!(pi[1..].iter().all(|&x| (x - 0.1).abs() < 1e-15));

        assert!(stationary_distribution(&Graph::from_edges(3, [])).is_err());
    }

    #[test]
    fn erdos_renyi_extremes() {
        let k4 = generate_erdos_renyi(4, 1.0, 1).unwrap();
        assert_eq!(k4.edge_count(), 6);
        assert_eq!(generate_erdos_renyi(3, 0.0, 1).unwrap().edge_count(), 0);
        assert!(generate_erdos_renyi(0, 0.5, 1).is_err());
    }

    #[test]
    fn erdos_renyi_edge_count_within_three_sigma() {
        let n = 256usize;
        let pairs = (n * (n - 1) / 2) as f64;
        let (mean, sd) = (pairs * 0.05, (pairs * 0.05 * 0.95).sqrt());
        for seed in 0..5 {
            let g = generate_erdos_renyi(n, 0.05, seed).unwrap();
            assert!((g.edge_count() as f64 - mean).abs() <= 3.0 * sd);
        }
    }

    #[test]
    fn sbm_extremes() {
        let cfg = SbmConfig {
            cluster_sizes: vec![4, 5, 6],
            p: 1.0,
            q: 0.0,
            c: 1.0,
            seed: 3,
        };
        let (g, labels) = generate_sbm(&cfg).unwrap();
        assert_eq!(g.edge_count(), 6 + 10 + 15);
        assert_eq!(connected_components(&g).count, 3);
        assert_eq!(labels.class_count(), 3);
        for (u, v) in g.edges() {
            assert_eq!(labels.labels()[u as usize], labels.labels()[v as usize]);
        }

        let empty = SbmConfig {
            p: 0.0,
            ..cfg
        };
        assert_eq!(generate_sbm(&empty).unwrap().0.edge_count(), 0);
    }

    #[test]
    fn sbm_rejects_bad_probabilities() {
        let bad = SbmConfig {
            p: 0.9,
            q: 0.8,
            c: 2.0,
            ..SbmConfig::default()
        };
        assert!(matches!(generate_sbm(&bad), Err(Error::Config(_))));
        let bad_c = SbmConfig {
            c: 0.5,
            ..SbmConfig::default()
        };
        assert!(generate_sbm(&bad_c).is_err());
        let q_above_p = SbmConfig {
            p: 0.01,
            q: 0.02,
            ..SbmConfig::default()
        };
        assert!(generate_sbm(&q_above_p).is_err());
    }

    #[test]
    fn sbm_block_probabilities() {
        let cfg = SbmConfig::default();
        assert_eq!(cfg.block_probability(1, 0), 0.003);
        assert!((cfg.block_probability(2, 0) - 1.667 * 0.003).abs() < 1e-15);
        assert!((cfg.block_probability(1, 2) - 0.003 / 1.667).abs() < 1e-15);
        let geo = (cfg.block_probability(0, 2) * cfg.block_probability(1, 2)).sqrt();
        assert!((geo - cfg.q).abs() < 1e-15);
    }

    #[test]
    fn labels_renumbered_densely() {
        let labels = NodeLabels::new(vec![7, 3, 7, 10]);
        assert_eq!(labels.labels(), &[1, 0, 1, 2]);
        assert_eq!(labels.class_count(), 3);
    }

    #[test]
    fn label_file_parsing() {
        let (_, names) = parse("a b\nb c\n");
        let labels = load_labels("a 5\nb 6\nc 5\nzz 9\n".as_bytes(), &names).unwrap();
        assert_eq!(labels.labels(), &[0, 1, 0]);
        assert!(load_labels("a 5\nb 6\n".as_bytes(), &names).is_err());
        assert!(load_labels("a x\n".as_bytes(), &names).is_err());
        assert!(load_labels("a 1\na 2\nb 1\nc 1\n".as_bytes(), &names).is_err());
    }

    fn arb_edges() -> impl Strategy<Value = (usize, Vec<(u32, u32)>)> {
        (1usize..30).prop_flat_map(|n| {
            let e = prop::collection::vec((0..n as u32, 0..n as u32), 0..80);
            (Just(n), e)
        })
    }

    proptest! {
        #[test]
        fn structural_invariants((n, edges) in arb_edges()) {
            let g = Graph::from_edges(n, edges);
            let degree_sum: usize = g.nodes().map(|v| g.degree(v)).sum();
            prop_assert_eq!(degree_sum, 2 * g.edge_count());
            for u in g.nodes() {
                let adj = g.neighbors(u);
                prop_assert!(adj.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(!adj.contains(&u));
                for &v in adj {
                    prop_assert!(g.has_edge(v, u));
                }
            }
        }

        #[test]
        fn generators_are_seed_deterministic(seed in 0u64..1000) {
            let a = generate_erdos_renyi(40, 0.1, seed).unwrap();
            let b = generate_erdos_renyi(40, 0.1, seed).unwrap();
            prop_assert_eq!(a, b);
            let cfg = SbmConfig { cluster_sizes: vec![10, 10, 10], p: 0.3, q: 0.05, c: 1.5, seed };
            prop_assert_eq!(generate_sbm(&cfg).unwrap(), generate_sbm(&cfg).unwrap());
        }
    }
}
