//! End-to-end driver: walks, node embeddings, a topic backend, topic
//! embeddings and composition, plus the link-prediction and runtime
//! benchmark protocols built on top of it.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::community::{
    affiliation_to_posterior, bigclam, louvain, partition_to_posterior, AffiliationMatrix,
    BigClamConfig, Partition,
};
use crate::composer::{compose, TopicalEmbedding};
use crate::embedder::{extract_pairs, noise_distribution, sgns_train, Embedding, EmbeddingPair, TrainConfig};
use crate::error::{Error, Result};
use crate::evaluation::{link_prediction_auc, make_link_split, ExperimentReport, LogisticConfig, MetricRow};
use crate::graph::{generate_erdos_renyi, Graph};
use crate::topics::{
    assignment_from_posterior, ghmm_fit, glda_fit, posterior_from_assignment, Backend, GhmmConfig,
    GldaConfig, TopicAssignment, TopicPosterior,
};
use crate::walker::{generate_walks, WalkConfig, WalkCorpus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub backend: Backend,
    pub walk: WalkConfig,
    /// Shared SGNS settings; `dim` and `seed` are overridden per stage.
    pub train: TrainConfig,
    pub node_dim: usize,
    pub topic_dim: usize,
    pub glda: GldaConfig,
    pub ghmm: GhmmConfig,
    pub bigclam: BigClamConfig,
    pub louvain_seed: u64,
    /// Seed for drawing per-token labels from structural posteriors.
    pub relabel_seed: u64,
    pub node_train_seed: u64,
    pub topic_train_seed: u64,
    pub posterior_smoothing: f64,
}

impl PipelineConfig {
    /// Default settings with every stage seed derived from `seed`.
    pub fn new(backend: Backend, seed: u64) -> Self {
        let s = |i: u64| seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i);
        PipelineConfig {
            backend,
            walk: WalkConfig {
                seed: s(1),
                ..WalkConfig::default()
            },
            train: TrainConfig::default(),
            node_dim: 96,
            topic_dim: 32,
            glda: GldaConfig {
                seed: s(2),
                ..GldaConfig::default()
            },
            ghmm: GhmmConfig {
                seed: s(3),
                ..GhmmConfig::default()
            },
            bigclam: BigClamConfig {
                seed: s(4),
                ..BigClamConfig::default()
            },
            louvain_seed: s(5),
            relabel_seed: s(6),
            node_train_seed: s(7),
            topic_train_seed: s(8),
            posterior_smoothing: 0.0,
        }
    }

    pub fn total_dim(&self) -> usize {
        self.node_dim + self.topic_dim
    }

    pub fn validate(&self) -> Result<()> {
        self.walk.validate()?;
        self.train.validate()?;
        if self.node_dim < 1 || self.topic_dim < 1 {
            return Err(Error::Config("node and topic dimensions must be >= 1".into()));
        }
        Ok(())
    }

    fn train_config(&self, dim: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            dim,
            seed,
            ..self.train.clone()
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::new(Backend::Louvain, 0)
    }
}

/// Wall-clock seconds per stage, in execution order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub stages: Vec<(String, f64)>,
}

impl StageTimings {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| stage_error(name, e))?;
        let secs = start.elapsed().as_secs_f64();
        log::info!("stage {name}: {secs:.3}s");
        self.stages.push((name.to_owned(), secs));
        Ok(out)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.stages.iter().find(|(n, _)| n == name).map(|s| s.1)
    }

    pub fn total(&self) -> f64 {
        self.stages.iter().map(|s| s.1).sum()
    }
}

fn stage_error(stage: &str, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{stage}: {m}")),
        Error::Data(m) => Error::Data(format!("{stage}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("{stage}: {m}")),
        other => other,
    }
}

/// Backend-specific artifacts besides the posterior.
#[derive(Debug, Clone)]
pub enum BackendArtifact {
    Walk,
    Partition(Partition),
    Affiliation(AffiliationMatrix),
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub corpus: WalkCorpus,
    pub node: EmbeddingPair,
    pub assignment: TopicAssignment,
    pub posterior: TopicPosterior,
    pub artifact: BackendArtifact,
    pub topic: EmbeddingPair,
    pub topical: TopicalEmbedding,
    pub timings: StageTimings,
}

pub const STAGES: [&str; 5] = ["walk", "node_embed", "backend", "topic_embed", "compose"];

pub fn run_pipeline(graph: &Graph, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let n = graph.node_count();
    let mut timings = StageTimings::default();
    let corpus = timings.time("walk", || generate_walks(graph, &cfg.walk))?;
    let node = timings.time("node_embed", || train_nodes(&corpus, n, cfg.node_dim, cfg))?;
    let (assignment, posterior, artifact) =
        timings.time("backend", || run_backend(graph, &corpus, cfg))?;
    let topic = timings.time("topic_embed", || {
        let pairs = extract_pairs(&corpus, cfg.train.window, Some(&assignment))?;
        let noise = noise_distribution(&corpus, n)?;
        sgns_train(
            &pairs,
            assignment.topic_count(),
            n,
            &cfg.train_config(cfg.topic_dim, cfg.topic_train_seed),
            &noise,
        )
    })?;
    let topical = timings.time("compose", || compose(&node.center, &topic.center, &posterior))?;
    Ok(PipelineOutput {
        corpus,
        node,
        assignment,
        posterior,
        artifact,
        topic,
        topical,
        timings,
    })
}

fn train_nodes(corpus: &WalkCorpus, n: usize, dim: usize, cfg: &PipelineConfig) -> Result<EmbeddingPair> {
    let pairs = extract_pairs(corpus, cfg.train.window, None)?;
    let noise = noise_distribution(corpus, n)?;
    sgns_train(&pairs, n, n, &cfg.train_config(dim, cfg.node_train_seed), &noise)
}

/// Runs the configured backend and returns per-token labels, the node
/// posterior and any structural artifact.
pub fn run_backend(
    graph: &Graph,
    corpus: &WalkCorpus,
    cfg: &PipelineConfig,
) -> Result<(TopicAssignment, TopicPosterior, BackendArtifact)> {
    let n = graph.node_count();
    match cfg.backend {
        Backend::Glda | Backend::Ghmm => {
            let z = if cfg.backend == Backend::Glda {
                glda_fit(corpus, n, &cfg.glda)?
            } else {
                ghmm_fit(corpus, n, &cfg.ghmm)?
            };
            let post = posterior_from_assignment(corpus, &z, n, cfg.posterior_smoothing, cfg.backend)?;
            Ok((z, post, BackendArtifact::Walk))
        }
        Backend::Louvain => {
            let part = louvain(graph, cfg.louvain_seed)?;
            let post = partition_to_posterior(&part)?;
            let z = assignment_from_posterior(corpus, &post, cfg.relabel_seed)?;
            Ok((z, post, BackendArtifact::Partition(part)))
        }
        Backend::BigClam => {
            let f = bigclam(graph, &cfg.bigclam)?;
            let post = affiliation_to_posterior(&f)?;
            let z = assignment_from_posterior(corpus, &post, cfg.relabel_seed)?;
            Ok((z, post, BackendArtifact::Affiliation(f)))
        }
    }
}

/// Plain skip-gram node vectors of the full `node_dim + topic_dim` size, the
/// topic-free baseline.
pub fn node_only_embedding(graph: &Graph, cfg: &PipelineConfig) -> Result<Embedding> {
    cfg.validate()?;
    let corpus = generate_walks(graph, &cfg.walk)?;
    Ok(train_nodes(&corpus, graph.node_count(), cfg.total_dim(), cfg)?.center)
}

/// Which representation a link-prediction run scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    NodeOnly,
    Topical,
}

/// Splits a connected graph, embeds the residual graph and reports the AUC
/// of Hadamard edge features.
pub fn link_prediction_experiment(
    graph: &Graph,
    cfg: &PipelineConfig,
    representation: Representation,
    fraction: f64,
    split_seed: u64,
    logistic: &LogisticConfig,
) -> Result<ExperimentReport> {
    let split = make_link_split(graph, fraction, split_seed)?;
    log::info!(
        "link split: removed {} of {} edges ({:.4})",
        split.test_positives.len(),
        graph.edge_count(),
        split.achieved_fraction
    );
    let features = match representation {
        Representation::NodeOnly => node_only_embedding(&split.residual, cfg)?,
        Representation::Topical => run_pipeline(&split.residual, cfg)?.topical.vectors,
    };
    let auc = link_prediction_auc(&split, &features, logistic)?;
    Ok(ExperimentReport {
        rows: vec![MetricRow {
            setting: split.achieved_fraction,
            repeat: 0,
            seed: split_seed,
            micro_f1: None,
            macro_f1: None,
            auc: Some(auc),
        }],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub nodes: usize,
    pub edges: usize,
    pub backend: Backend,
    pub timings: StageTimings,
}

/// Edge probability giving expected mean degree 10.
pub fn bench_edge_probability(n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        (10.0 / (n - 1) as f64).min(1.0)
    }
}

/// Times every backend's pipeline on an Erdős–Rényi graph of each size.
pub fn bench(
    sizes: &[usize],
    backends: &[Backend],
    cfg: &PipelineConfig,
    graph_seed: u64,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &n in sizes {
        let g = generate_erdos_renyi(n, bench_edge_probability(n), graph_seed)?;
        for &backend in backends {
            let mut c = cfg.clone();
            c.backend = backend;
            // K may not exceed the token count on tiny graphs
            let tokens = g.node_count() * c.walk.walks_per_node * c.walk.walk_length;
            c.glda.topics = c.glda.topics.min(tokens.max(1));
            let out = run_pipeline(&g, &c)?;
            log::info!("bench n={n} {backend}: {:.3}s", out.timings.total());
            rows.push(BenchRow {
                nodes: n,
                edges: g.edge_count(),
                backend,
                timings: out.timings,
            });
        }
    }
    Ok(rows)
}

pub fn write_bench_tsv<W: Write>(rows: &[BenchRow], mut out: W) -> Result<()> {
    write!(out, "nodes\tedges\tbackend")?;
    for s in STAGES {
        write!(out, "\t{s}")?;
    }
    writeln!(out, "\ttotal")?;
    for r in rows {
        write!(out, "{}\t{}\t{}", r.nodes, r.edges, r.backend)?;
        for s in STAGES {
            write!(out, "\t{:.6}", r.timings.get(s).unwrap_or(0.0))?;
        }
        writeln!(out, "\t{:.6}", r.timings.total())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle_pendant() -> Graph {
        Graph::from_edges(4, [(0, 1), (0, 2), (1, 2), (0, 3)])
    }

    fn small(backend: Backend) -> PipelineConfig {
        let mut cfg = PipelineConfig::new(backend, 3);
        cfg.walk.walks_per_node = 10;
        cfg.node_dim = 4;
        cfg.topic_dim = 2;
        cfg.glda.topics = 2;
        cfg.ghmm.states = 2;
        cfg.bigclam.communities = 2;
        cfg
    }

    #[test]
    fn every_backend_gives_the_dimension_contract() {
        for backend in Backend::ALL {
            let out = run_pipeline(&triangle_pendant(), &small(backend)).unwrap();
            assert_eq!(out.topical.vectors.rows(), 4, "{backend}");
            assert_eq!(out.topical.vectors.dim(), 6, "{backend}");
            assert!(out.topical.vectors.is_finite());
            assert_eq!(out.timings.stages.len(), STAGES.len());
        }
    }

    #[test]
    fn single_topic_gives_identical_topic_blocks() {
        let mut cfg = small(Backend::Glda);
        cfg.glda.topics = 1;
        let out = run_pipeline(&triangle_pendant(), &cfg).unwrap();
        let first = &out.topical.vectors.row(0)[4..];
        for v in 1..4 {
            assert_eq!(&out.topical.vectors.row(v)[4..], first);
        }
    }

    #[test]
    fn deterministic_with_one_worker() {
        let g = triangle_pendant();
        for backend in Backend::ALL {
            let a = run_pipeline(&g, &small(backend)).unwrap();
            let b = run_pipeline(&g, &small(backend)).unwrap();
            assert_eq!(a.topical.vectors, b.topical.vectors);
        }
    }

    #[test]
    fn louvain_labels_match_partition() {
        let g = Graph::from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]);
        let out = run_pipeline(&g, &small(Backend::Louvain)).unwrap();
        let BackendArtifact::Partition(part) = &out.artifact else {
            panic!("louvain returns a partition");
        };
        for (&v, &z) in out.corpus.tokens().iter().zip(out.assignment.topics()) {
            assert_eq!(part.community_of(v), z);
        }
    }

    #[test]
    fn bench_rows_and_tsv() {
        let mut cfg = small(Backend::Louvain);
        cfg.walk.walks_per_node = 2;
        let rows = bench(&[256, 512], &[Backend::Louvain], &cfg, 1).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert!(r.timings.stages.iter().all(|s| s.1 >= 0.0));
        }
        let mut buf = Vec::new();
        write_bench_tsv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("nodes\tedges\tbackend\twalk"));

        let mut buf = Vec::new();
        write_bench_tsv(&bench(&[], &Backend::ALL, &cfg, 1).unwrap(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn link_experiment_reports_auc() {
        let cfg_sbm = crate::graph::SbmConfig {
            cluster_sizes: vec![40, 40],
            p: 0.3,
            q: 0.02,
            c: 1.0,
            seed: 2,
        };
        let (g, _) = crate::graph::generate_sbm(&cfg_sbm).unwrap();
        let (g, _) = crate::graph::largest_component(&g);
        let mut cfg = small(Backend::Louvain);
        cfg.walk.walks_per_node = 20;
        let report = link_prediction_experiment(
            &g,
            &cfg,
            Representation::Topical,
            0.5,
            4,
            &LogisticConfig::default(),
        )
        .unwrap();
        let auc = report.rows[0].auc.unwrap();
        assert!((0.0..=1.0).contains(&auc));
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let mut cfg = small(Backend::Glda);
        cfg.glda.topics = 10_000;
        let err = run_pipeline(&triangle_pendant(), &cfg).unwrap_err();
        assert!(err.to_string().contains("backend"), "{err}");
    }
}
