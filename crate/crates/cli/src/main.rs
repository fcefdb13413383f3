use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use topicwalk::community::{save_affiliation, save_partition, BigClamConfig};
use topicwalk::composer::compose;
use topicwalk::embedder::{
    extract_pairs, load_embeddings, noise_distribution, save_embeddings, sgns_train, Embedding,
    TrainConfig,
};
use topicwalk::evaluation::{classification_experiment, ClassificationConfig, LogisticConfig, Penalty};
use topicwalk::graph::{
    generate_erdos_renyi, generate_sbm, largest_component, load_edge_list, load_labels,
    write_edge_list, write_labels, Graph, NodeNames, SbmConfig,
};
use topicwalk::pipeline::{
    bench, bench_edge_probability, link_prediction_experiment, run_pipeline, write_bench_tsv,
    BackendArtifact, PipelineConfig, Representation,
};
use topicwalk::topics::{
    load_assignment, load_posterior, save_assignment, save_posterior, Backend, GhmmConfig,
    GldaConfig, TopicAssignment, TopicPosterior,
};
use topicwalk::walker::{generate_walks, load_corpus, save_corpus, WalkConfig, WalkCorpus};

/// Topic-aware node embeddings from random walks.
#[derive(Parser)]
#[command(name = "topicwalk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic graph.
    Generate(GenerateArgs),
    /// Sample random walks from a graph.
    Walk(WalkCmd),
    /// Fit a topic backend and write per-token labels and node posteriors.
    Topics(TopicsCmd),
    /// Train node embeddings, or topic embeddings when given an assignment.
    Embed(EmbedCmd),
    /// Concatenate node vectors with posterior-weighted topic vectors.
    Compose(ComposeCmd),
    /// Run every stage and persist all intermediate artifacts.
    Pipeline(PipelineCmd),
    /// Node classification or link prediction.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Time every backend on Erdős–Rényi graphs of increasing size.
    Bench(BenchCmd),
}

#[derive(Args)]
struct GenerateArgs {
    #[command(subcommand)]
    kind: GenerateKind,
}

#[derive(Subcommand)]
enum GenerateKind {
    /// Stochastic block model with planted labels.
    Sbm {
        #[arg(long, value_delimiter = ',', default_value = "1000,1000,1000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0.07)]
        p: f64,
        #[arg(long, default_value_t = 0.003)]
        q: f64,
        #[arg(long, default_value_t = 1.667)]
        c: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Erdős–Rényi graph; the default edge probability gives mean degree 10.
    Er {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        edge_prob: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone, Serialize)]
struct WalkArgs {
    /// Walks started from every node.
    #[arg(long, default_value_t = 80)]
    walks_per_node: usize,
    #[arg(long, default_value_t = 10)]
    walk_length: usize,
    /// Return parameter p.
    #[arg(long, default_value_t = 1.0)]
    return_bias: f64,
    /// In-out parameter q.
    #[arg(long, default_value_t = 1.0)]
    inout_bias: f64,
}

#[derive(Args, Clone, Serialize)]
struct TrainArgs {
    #[arg(long, default_value_t = 10)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 0.0025)]
    lr_init: f64,
    #[arg(long, default_value_t = 1e-5)]
    lr_min: f64,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long)]
    shuffle: bool,
    /// Training threads; 1 keeps results reproducible.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

impl TrainArgs {
    fn config(&self, dim: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            dim,
            window: self.window,
            negatives: self.negatives,
            lr_init: self.lr_init,
            lr_min: self.lr_min,
            epochs: self.epochs,
            seed,
            shuffle: self.shuffle,
            workers: self.workers,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum BackendArg {
    Glda,
    Ghmm,
    Louvain,
    Bigclam,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Glda => Backend::Glda,
            BackendArg::Ghmm => Backend::Ghmm,
            BackendArg::Louvain => Backend::Louvain,
            BackendArg::Bigclam => Backend::BigClam,
        }
    }
}

#[derive(Args, Clone, Serialize)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "louvain")]
    backend: BackendArg,
    /// Topics for GLDA (default 100), states for GHMM (default 20),
    /// communities for BigClam (default 10). Ignored by Louvain.
    #[arg(long)]
    topics: Option<usize>,
    /// Dirichlet prior on walk topic mixtures (GLDA, default 50/K) or on
    /// transition rows (GHMM, default 1).
    #[arg(long)]
    a0: Option<f64>,
    /// Dirichlet prior on topic-node distributions (default 0.01).
    #[arg(long)]
    b0: Option<f64>,
    /// Dirichlet prior on the GHMM initial state.
    #[arg(long, default_value_t = 1.0)]
    p0: f64,
    /// Gibbs sweeps (GLDA default 100, GHMM default 50) or BigClam sweeps
    /// (default 200).
    #[arg(long)]
    iterations: Option<usize>,
    /// Pseudo-count added to posterior counts for GLDA and GHMM.
    #[arg(long, default_value_t = 0.0)]
    smoothing: f64,
}

#[derive(Args, Clone, Serialize)]
struct PipelineArgs {
    #[command(flatten)]
    walk: WalkArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value_t = 96)]
    node_dim: usize,
    #[arg(long, default_value_t = 32)]
    topic_dim: usize,
    /// Master seed; every stage seed is derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl PipelineArgs {
    fn config(&self) -> PipelineConfig {
        let b = &self.backend;
        let mut cfg = PipelineConfig::new(b.backend.into(), self.seed);
        cfg.walk = WalkConfig {
            walks_per_node: self.walk.walks_per_node,
            walk_length: self.walk.walk_length,
            return_bias: self.walk.return_bias,
            inout_bias: self.walk.inout_bias,
            seed: cfg.walk.seed,
        };
        cfg.train = self.train.config(cfg.train.dim, cfg.train.seed);
        cfg.node_dim = self.node_dim;
        cfg.topic_dim = self.topic_dim;
        if let Some(k) = b.topics {
            let seed = cfg.glda.seed;
            cfg.glda = GldaConfig {
                seed,
                ..GldaConfig::with_topics(k)
            };
            cfg.ghmm.states = k;
            cfg.bigclam.communities = k;
        }
        if let Some(a0) = b.a0 {
            cfg.glda.doc_prior = a0;
            cfg.ghmm.transition_prior = a0;
        }
        if let Some(b0) = b.b0 {
            cfg.glda.node_prior = b0;
            cfg.ghmm.emission_prior = b0;
        }
        cfg.ghmm.initial_prior = b.p0;
        if let Some(i) = b.iterations {
            cfg.glda.iterations = i;
            cfg.ghmm.iterations = i;
            cfg.bigclam.max_iterations = i;
        }
        cfg.posterior_smoothing = b.smoothing;
        cfg
    }
}

#[derive(Args)]
struct WalkCmd {
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    walk: WalkArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Walk file, one walk per line.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TopicsCmd {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    walks: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedCmd {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    walks: PathBuf,
    /// Per-token topic labels; switches to topic embeddings.
    #[arg(long, requires = "topics")]
    assignment: Option<PathBuf>,
    /// Number of topics in the assignment.
    #[arg(long)]
    topics: Option<usize>,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ComposeCmd {
    /// Node embedding file; its tokens fix the node order.
    #[arg(long)]
    node: PathBuf,
    #[arg(long)]
    topic: PathBuf,
    #[arg(long)]
    posterior: PathBuf,
    #[arg(long, value_enum, default_value = "louvain")]
    backend: BackendArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineCmd {
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Repeated one-vs-rest logistic regression over training ratios.
    Classify {
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        repeats: usize,
        #[command(flatten)]
        penalty: PenaltyArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report TSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Hold out edges, embed the residual graph and score the held-out edges.
    Linkpred {
        #[arg(long)]
        graph: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Score plain node vectors instead of topical embeddings.
        #[arg(long)]
        node_only: bool,
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[command(flatten)]
        penalty: PenaltyArgs,
        /// Restrict to the largest connected component first.
        #[arg(long)]
        largest_component: bool,
        /// Report TSV.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PenaltyArgs {
    /// Inverse L2 strength on the summed log-loss.
    #[arg(long, default_value_t = 1.0, conflicts_with = "lambda")]
    c: f64,
    /// L2 strength on the mean log-loss; overrides --c.
    #[arg(long)]
    lambda: Option<f64>,
    /// Gradient-descent iteration cap per binary model.
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
}

impl PenaltyArgs {
    fn config(&self) -> LogisticConfig {
        LogisticConfig {
            penalty: self.lambda.map_or(Penalty::InverseC(self.c), Penalty::Fixed),
            max_iters: self.max_iters,
            ..LogisticConfig::default()
        }
    }
}

#[derive(Args)]
struct BenchCmd {
    /// Node counts; an empty list gives a header-only table.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "glda,ghmm,louvain,bigclam")]
    backends: Vec<BackendArg>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, default_value_t = 0)]
    graph_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<topicwalk::Error>() {
            return match err {
                topicwalk::Error::Config(_) => 2,
                topicwalk::Error::Numeric(_) => 4,
                _ => 3,
            };
        }
    }
    3
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(args) => cmd_generate(args.kind),
        Command::Walk(c) => cmd_walk(c),
        Command::Topics(c) => cmd_topics(c),
        Command::Embed(c) => cmd_embed(c),
        Command::Compose(c) => cmd_compose(c),
        Command::Pipeline(c) => cmd_pipeline(c),
        Command::Eval(c) => cmd_eval(c),
        Command::Bench(c) => cmd_bench(c),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> topicwalk::Result<()>,
{
    let mut out = create(path)?;
    f(&mut out).with_context(|| format!("writing {}", path.display()))?;
    out.flush()?;
    Ok(())
}

fn read_graph(path: &Path) -> Result<(Graph, NodeNames)> {
    load_edge_list(open(path)?).with_context(|| format!("reading graph {}", path.display()))
}

fn read_corpus(path: &Path, names: &NodeNames) -> Result<WalkCorpus> {
    load_corpus(open(path)?, names).with_context(|| format!("reading walks {}", path.display()))
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    config: C,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

fn write_manifest<C: Serialize>(
    path: &Path,
    command: &str,
    config: C,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<()> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, &manifest)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn cmd_generate(kind: GenerateKind) -> Result<()> {
    match kind {
        GenerateKind::Sbm {
            sizes,
            p,
            q,
            c,
            seed,
            out,
        } => {
            let cfg = SbmConfig {
                cluster_sizes: sizes,
                p,
                q,
                c,
                seed,
            };
            let (g, labels) = generate_sbm(&cfg)?;
            let names = NodeNames::numeric(g.node_count());
            let (edges, label_path) = (out.join("graph.edges"), out.join("labels.txt"));
            write_with(&edges, |w| write_edge_list(&g, &names, w))?;
            write_with(&label_path, |w| write_labels(&labels, &names, w))?;
            write_manifest(&out.join("manifest.json"), "generate sbm", &cfg, &[], &[&edges, &label_path])?;
            log::info!("sbm: {} nodes, {} edges", g.node_count(), g.edge_count());
        }
        GenerateKind::Er {
            nodes,
            edge_prob,
            seed,
            out,
        } => {
            let p = edge_prob.unwrap_or_else(|| bench_edge_probability(nodes));
            let g = generate_erdos_renyi(nodes, p, seed)?;
            let names = NodeNames::numeric(nodes);
            let edges = out.join("graph.edges");
            write_with(&edges, |w| write_edge_list(&g, &names, w))?;
            #[derive(Serialize)]
            struct Er {
                nodes: usize,
                edge_prob: f64,
                seed: u64,
            }
            let cfg = Er {
                nodes,
                edge_prob: p,
                seed,
            };
            write_manifest(&out.join("manifest.json"), "generate er", cfg, &[], &[&edges])?;
            log::info!("er: {} nodes, {} edges", g.node_count(), g.edge_count());
        }
    }
    Ok(())
}

fn cmd_walk(c: WalkCmd) -> Result<()> {
    let (g, names) = read_graph(&c.graph)?;
    let cfg = WalkConfig {
        walks_per_node: c.walk.walks_per_node,
        walk_length: c.walk.walk_length,
        return_bias: c.walk.return_bias,
        inout_bias: c.walk.inout_bias,
        seed: c.seed,
    };
    let corpus = generate_walks(&g, &cfg)?;
    write_with(&c.out, |w| save_corpus(&corpus, &names, w))?;
    write_manifest(&sidecar(&c.out), "walk", &cfg, &[&c.graph], &[&c.out])?;
    log::info!("{} walks, {} tokens", corpus.walk_count(), corpus.token_count());
    Ok(())
}

fn cmd_topics(c: TopicsCmd) -> Result<()> {
    let (g, names) = read_graph(&c.graph)?;
    let corpus = read_corpus(&c.walks, &names)?;
    let pipeline = PipelineArgs {
        walk: WalkArgs {
            walks_per_node: 0,
            walk_length: 0,
            return_bias: 1.0,
            inout_bias: 1.0,
        },
        train: default_train_args(),
        backend: c.backend.clone(),
        node_dim: 1,
        topic_dim: 1,
        seed: c.seed,
    }
    .config();
    let (z, post, artifact) = topicwalk::pipeline::run_backend(&g, &corpus, &pipeline)?;
    let outputs = write_topic_artifacts(&c.out, &corpus, &names, &z, &post, &artifact)?;
    let outputs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    #[derive(Serialize)]
    struct TopicsManifest<'a> {
        backend: &'a BackendArgs,
        glda: &'a GldaConfig,
        ghmm: &'a GhmmConfig,
        bigclam: &'a BigClamConfig,
        louvain_seed: u64,
        relabel_seed: u64,
    }
    write_manifest(
        &c.out.join("manifest.json"),
        "topics",
        TopicsManifest {
            backend: &c.backend,
            glda: &pipeline.glda,
            ghmm: &pipeline.ghmm,
            bigclam: &pipeline.bigclam,
            louvain_seed: pipeline.louvain_seed,
            relabel_seed: pipeline.relabel_seed,
        },
        &[&c.graph, &c.walks],
        &outputs,
    )?;
    log::info!("{} topics", post.topic_count());
    Ok(())
}

fn default_train_args() -> TrainArgs {
    let t = TrainConfig::default();
    TrainArgs {
        window: t.window,
        negatives: t.negatives,
        lr_init: t.lr_init,
        lr_min: t.lr_min,
        epochs: t.epochs,
        shuffle: t.shuffle,
        workers: t.workers,
    }
}

fn write_topic_artifacts(
    dir: &Path,
    corpus: &WalkCorpus,
    names: &NodeNames,
    z: &TopicAssignment,
    post: &TopicPosterior,
    artifact: &BackendArtifact,
) -> Result<Vec<PathBuf>> {
    let assignment = dir.join("assignment.txt");
    let posterior = dir.join("posterior.tsv");
    write_with(&assignment, |w| save_assignment(corpus, z, w))?;
    write_with(&posterior, |w| save_posterior(post, names, w))?;
    let mut outputs = vec![assignment, posterior];
    match artifact {
        BackendArtifact::Walk => {}
        BackendArtifact::Partition(p) => {
            let path = dir.join("partition.txt");
            write_with(&path, |w| save_partition(p, names, w))?;
            outputs.push(path);
        }
        BackendArtifact::Affiliation(f) => {
            let path = dir.join("affiliation.tsv");
            write_with(&path, |w| save_affiliation(f, names, w))?;
            outputs.push(path);
        }
    }
    Ok(outputs)
}

fn topic_tokens(k: usize) -> Vec<String> {
    (0..k).map(|t| t.to_string()).collect()
}

fn cmd_embed(c: EmbedCmd) -> Result<()> {
    let (g, names) = read_graph(&c.graph)?;
    let corpus = read_corpus(&c.walks, &names)?;
    let n = g.node_count();
    let cfg = c.train.config(c.dim, c.seed);
    let noise = noise_distribution(&corpus, n)?;
    let mut inputs = vec![c.graph.as_path(), c.walks.as_path()];
    match (&c.assignment, c.topics) {
        (Some(path), Some(k)) => {
            let z = load_assignment(open(path)?, &corpus, k)
                .with_context(|| format!("reading assignment {}", path.display()))?;
            let pairs = extract_pairs(&corpus, cfg.window, Some(&z))?;
            let emb = sgns_train(&pairs, k, n, &cfg, &noise)?;
            write_with(&c.out, |w| save_embeddings(&emb.center, &topic_tokens(k), w))?;
            inputs.push(path);
        }
        _ => {
            let pairs = extract_pairs(&corpus, cfg.window, None)?;
            let emb = sgns_train(&pairs, n, n, &cfg, &noise)?;
            write_with(&c.out, |w| save_embeddings(&emb.center, names.tokens(), w))?;
        }
    }
    write_manifest(&sidecar(&c.out), "embed", &cfg, &inputs, &[&c.out])?;
    Ok(())
}

fn read_embeddings(path: &Path) -> Result<(Vec<String>, Embedding)> {
    load_embeddings(open(path)?).with_context(|| format!("reading embeddings {}", path.display()))
}

fn cmd_compose(c: ComposeCmd) -> Result<()> {
    let (tokens, node) = read_embeddings(&c.node)?;
    let (_, topic) = read_embeddings(&c.topic)?;
    let names = NodeNames::from_tokens(tokens.iter().map(String::as_str));
    let post = load_posterior(open(&c.posterior)?, &names, c.backend.into())
        .with_context(|| format!("reading posterior {}", c.posterior.display()))?;
    let out = compose(&node, &topic, &post)?;
    write_with(&c.out, |w| save_embeddings(&out.vectors, &tokens, w))?;
    write_manifest(
        &sidecar(&c.out),
        "compose",
        &out.provenance,
        &[&c.node, &c.topic, &c.posterior],
        &[&c.out],
    )?;
    Ok(())
}

fn cmd_pipeline(c: PipelineCmd) -> Result<()> {
    let (g, names) = read_graph(&c.graph)?;
    let cfg = c.pipeline.config();
    let out = run_pipeline(&g, &cfg)?;
    let dir = &c.out;
    let walks = dir.join("walks.txt");
    let node = dir.join("node_embeddings.txt");
    let topic = dir.join("topic_embeddings.txt");
    let topical = dir.join("embeddings.txt");
    let timings = dir.join("timings.tsv");
    write_with(&walks, |w| save_corpus(&out.corpus, &names, w))?;
    write_with(&node, |w| save_embeddings(&out.node.center, names.tokens(), w))?;
    let mut outputs = write_topic_artifacts(dir, &out.corpus, &names, &out.assignment, &out.posterior, &out.artifact)?;
    let k = out.posterior.topic_count();
    write_with(&topic, |w| save_embeddings(&out.topic.center, &topic_tokens(k), w))?;
    write_with(&topical, |w| save_embeddings(&out.topical.vectors, names.tokens(), w))?;
    write_with(&timings, |w| {
        writeln!(w, "stage\tseconds")?;
        for (stage, secs) in &out.timings.stages {
            writeln!(w, "{stage}\t{secs:.6}")?;
        }
        Ok(())
    })?;
    outputs.extend([walks, node, topic, topical.clone(), timings]);
    let outputs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&dir.join("manifest.json"), "pipeline", &cfg, &[&c.graph], &outputs)?;
    for (stage, secs) in &out.timings.stages {
        println!("{stage:>12} {secs:>10.3}s");
    }
    println!(
        "{} nodes, {} topics, {} dimensions -> {}",
        g.node_count(),
        k,
        out.topical.vectors.dim(),
        topical.display()
    );
    Ok(())
}

fn cmd_eval(c: EvalCmd) -> Result<()> {
    match c {
        EvalCmd::Classify {
            embedding,
            labels,
            ratios,
            repeats,
            penalty,
            seed,
            out,
        } => {
            let (tokens, features) = read_embeddings(&embedding)?;
            let names = NodeNames::from_tokens(tokens.iter().map(String::as_str));
            let labels_v = load_labels(open(&labels)?, &names)
                .with_context(|| format!("reading labels {}", labels.display()))?;
            let cfg = ClassificationConfig {
                ratios,
                repeats,
                logistic: penalty.config(),
                seed,
            };
            let report = classification_experiment(&features, &labels_v, &cfg)?;
            write_with(&out, |w| report.write_tsv(w))?;
            write_manifest(&sidecar(&out), "eval classify", &cfg, &[&embedding, &labels], &[&out])?;
            print!("{report}");
        }
        EvalCmd::Linkpred {
            graph,
            pipeline,
            node_only,
            fraction,
            split_seed,
            penalty,
            largest_component: lcc,
            out,
        } => {
            let (mut g, _) = read_graph(&graph)?;
            if lcc {
                let before = g.node_count();
                g = largest_component(&g).0;
                log::info!("largest component: {} of {before} nodes", g.node_count());
            }
            let cfg = pipeline.config();
            let logistic = penalty.config();
            let repr = if node_only {
                Representation::NodeOnly
            } else {
                Representation::Topical
            };
            let report = link_prediction_experiment(&g, &cfg, repr, fraction, split_seed, &logistic)?;
            write_with(&out, |w| report.write_tsv(w))?;
            #[derive(Serialize)]
            struct Linkpred<'a> {
                pipeline: &'a PipelineConfig,
                node_only: bool,
                fraction: f64,
                split_seed: u64,
                logistic: &'a LogisticConfig,
                largest_component: bool,
            }
            write_manifest(
                &sidecar(&out),
                "eval linkpred",
                Linkpred {
                    pipeline: &cfg,
                    node_only,
                    fraction,
                    split_seed,
                    logistic: &logistic,
                    largest_component: lcc,
                },
                &[&graph],
                &[&out],
            )?;
            print!("{report}");
        }
    }
    Ok(())
}

fn cmd_bench(c: BenchCmd) -> Result<()> {
    let cfg = c.pipeline.config();
    let backends: Vec<Backend> = c.backends.iter().map(|&b| b.into()).collect();
    let rows = bench(&c.sizes, &backends, &cfg, c.graph_seed)?;
    write_with(&c.out, |w| write_bench_tsv(&rows, w))?;
    #[derive(Serialize)]
    struct Bench<'a> {
        sizes: &'a [usize],
        backends: &'a [Backend],
        pipeline: &'a PipelineConfig,
        graph_seed: u64,
    }
    write_manifest(
        &sidecar(&c.out),
        "bench",
        Bench {
            sizes: &c.sizes,
            backends: &backends,
            pipeline: &cfg,
            graph_seed: c.graph_seed,
        },
        &[],
        &[&c.out],
    )?;
    write_bench_tsv(&rows, std::io::stdout().lock())?;
    Ok(())
}
