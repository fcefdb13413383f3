use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn topicwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topicwalk"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = topicwalk(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_triangle_pendant(dir: &Path) -> PathBuf {
    let path = dir.join("tp.edges");
    fs::write(&path, "a b\na c\nb c\na d\n").unwrap();
    path
}

fn embedding_rows(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_owned();
    let rows = lines
        .map(|l| l.split_whitespace().skip(1).map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn sbm_generation_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(&["generate", "sbm", "--sizes", "30,30,30", "--p", "0.3", "--q", "0.02", "--seed", "4", "--out", s(dir)]);
    }
    for file in ["graph.edges", "labels.txt"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let labels = fs::read_to_string(a.join("labels.txt")).unwrap();
    assert_eq!(labels.lines().count(), 90);
}

#[test]
fn er_graph_parses_back() {
    let tmp = TempDir::new().unwrap();
    ok(&["generate", "er", "--nodes", "256", "--seed", "1", "--out", s(tmp.path())]);
    let text = fs::read_to_string(tmp.path().join("graph.edges")).unwrap();
    let (g, _) = topicwalk::graph::load_edge_list(text.as_bytes()).unwrap();
    assert!(g.node_count() <= 256 && g.edge_count() > 0);
}

#[test]
fn pipeline_writes_every_artifact_with_the_dimension_contract() {
    let tmp = TempDir::new().unwrap();
    let graph = write_triangle_pendant(tmp.path());
    let out = tmp.path().join("run");
    let args = [
        "pipeline", "--graph", s(&graph), "--backend", "louvain", "--node-dim", "4", "--topic-dim", "2",
        "--walks-per-node", "10", "--out", s(&out),
    ];
    ok(&args);
    for file in [
        "walks.txt", "node_embeddings.txt", "assignment.txt", "posterior.tsv", "partition.txt",
        "topic_embeddings.txt", "embeddings.txt", "timings.tsv", "manifest.json",
    ] {
        assert!(out.join(file).exists(), "{file} missing");
    }
    let (header, rows) = embedding_rows(&out.join("embeddings.txt"));
    assert_eq!(header, "4 6");
    assert!(rows.iter().all(|r| r.len() == 6));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "pipeline");
    assert_eq!(manifest["config"]["node_dim"], 4);
    assert!(manifest["config"]["walk"]["seed"].is_u64());

    // rerun: everything but wall-clock timings is byte-identical
    let again = tmp.path().join("again");
    let mut args2 = args.to_vec();
    let last = args2.len() - 1;
    args2[last] = s(&again);
    ok(&args2);
    for entry in fs::read_dir(&out).unwrap() {
        let name = entry.unwrap().file_name();
        if name == "timings.tsv" || name == "manifest.json" {
            continue;
        }
        assert_eq!(
            fs::read(out.join(&name)).unwrap(),
            fs::read(again.join(&name)).unwrap(),
            "{name:?} differs"
        );
    }
}

#[test]
fn single_topic_glda_gives_a_shared_topic_block() {
    let tmp = TempDir::new().unwrap();
    let graph = write_triangle_pendant(tmp.path());
    let out = tmp.path().join("run");
    ok(&[
        "pipeline", "--graph", s(&graph), "--backend", "glda", "--topics", "1", "--node-dim", "4",
        "--topic-dim", "2", "--walks-per-node", "5", "--out", s(&out),
    ]);
    let (_, rows) = embedding_rows(&out.join("embeddings.txt"));
    for r in &rows {
        assert_eq!(&r[4..], &rows[0][4..]);
    }
}

#[test]
fn stage_commands_chain_into_a_composed_embedding() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let graph = write_triangle_pendant(d);
    let walks = d.join("walks.txt");
    ok(&["walk", "--graph", s(&graph), "--walks-per-node", "10", "--out", s(&walks)]);
    ok(&["topics", "--graph", s(&graph), "--walks", s(&walks), "--backend", "glda", "--topics", "2", "--out", s(&d.join("topics"))]);
    ok(&["embed", "--graph", s(&graph), "--walks", s(&walks), "--dim", "3", "--out", s(&d.join("node.txt"))]);
    ok(&[
        "embed", "--graph", s(&graph), "--walks", s(&walks), "--assignment", s(&d.join("topics/assignment.txt")),
        "--topics", "2", "--dim", "2", "--out", s(&d.join("topic.txt")),
    ]);
    ok(&[
        "compose", "--node", s(&d.join("node.txt")), "--topic", s(&d.join("topic.txt")),
        "--posterior", s(&d.join("topics/posterior.tsv")), "--backend", "glda", "--out", s(&d.join("out.txt")),
    ]);
    let (header, _) = embedding_rows(&d.join("out.txt"));
    assert_eq!(header, "4 5");
    assert!(d.join("out.txt.manifest.json").exists());
    assert!(d.join("walks.txt.manifest.json").exists());
}

#[test]
fn classification_report_is_written() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["generate", "sbm", "--sizes", "40,40", "--p", "0.3", "--q", "0.01", "--seed", "2", "--out", s(d)]);
    let run = d.join("run");
    ok(&[
        "pipeline", "--graph", s(&d.join("graph.edges")), "--node-dim", "8", "--topic-dim", "4",
        "--walks-per-node", "10", "--out", s(&run),
    ]);
    let report = d.join("report.tsv");
    let out = ok(&[
        "eval", "classify", "--embedding", s(&run.join("embeddings.txt")), "--labels", s(&d.join("labels.txt")),
        "--ratios", "0.5", "--repeats", "3", "--out", s(&report),
    ]);
    let text = fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 + 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("0.50"));
}

#[test]
fn link_prediction_report_has_an_auc() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(&["generate", "sbm", "--sizes", "40,40", "--p", "0.3", "--q", "0.02", "--seed", "3", "--out", s(d)]);
    let report = d.join("link.tsv");
    ok(&[
        "eval", "linkpred", "--graph", s(&d.join("graph.edges")), "--largest-component", "--node-dim", "8",
        "--topic-dim", "4", "--walks-per-node", "10", "--out", s(&report),
    ]);
    let text = fs::read_to_string(&report).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split('\t').collect();
    let auc: f64 = row[5].parse().unwrap();
    assert!((0.0..=1.0).contains(&auc));
}

#[test]
fn bench_table_shapes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("bench.tsv");
    ok(&[
        "bench", "--sizes", "256,512", "--backends", "louvain", "--walks-per-node", "2", "--node-dim", "8",
        "--topic-dim", "4", "--out", s(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    for line in &lines[1..] {
        let times: Vec<f64> = line.split('\t').skip(3).map(|x| x.parse().unwrap()).collect();
        assert!(times.iter().all(|&t| t >= 0.0));
    }

    let empty = tmp.path().join("empty.tsv");
    ok(&["bench", "--out", s(&empty)]);
    assert_eq!(fs::read_to_string(&empty).unwrap().lines().count(), 1);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let graph = write_triangle_pendant(d);

    let missing = topicwalk(&["walk", "--graph", s(&d.join("nope.edges")), "--out", s(&d.join("w.txt"))]);
    assert_eq!(missing.status.code(), Some(3));

    let bad = d.join("bad.edges");
    fs::write(&bad, "a b\nc\n").unwrap();
    let parse = topicwalk(&["walk", "--graph", s(&bad), "--out", s(&d.join("w.txt"))]);
    assert_eq!(parse.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&parse.stderr).contains("line 2"));

    let config = topicwalk(&["pipeline", "--graph", s(&graph), "--window", "0", "--out", s(&d.join("r"))]);
    assert_eq!(config.status.code(), Some(2));

    let walks = d.join("walks.txt");
    ok(&["walk", "--graph", s(&graph), "--out", s(&walks)]);
    let numeric = topicwalk(&[
        "embed", "--graph", s(&graph), "--walks", s(&walks), "--lr-init", "1e300", "--dim", "4", "--out",
        s(&d.join("e.txt")),
    ]);
    assert_eq!(numeric.status.code(), Some(4), "{}", String::from_utf8_lossy(&numeric.stderr));

    let stage = topicwalk(&[
        "pipeline", "--graph", s(&graph), "--backend", "glda", "--topics", "100000", "--walks-per-node", "1",
        "--out", s(&d.join("r"))
    ]);
    assert_eq!(stage.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&stage.stderr).contains("backend"));
}
