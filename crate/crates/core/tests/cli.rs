mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixture;

fn contraground(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contraground"))
        .args(args)
        .env_remove("CONTRAGROUND_ENDPOINT")
        .env_remove("CONTRAGROUND_TIMEOUT_MS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn index_prints_doc_count_and_refuses_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("fixture.idx");
    let corpus = fixture("corpus.jsonl");
    let o = contraground(&["index", "--corpus", p(&corpus), "--out", p(&snap)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l.starts_with("docs=12 ")));

    let before = std::fs::read(&snap).unwrap();
    let o = contraground(&["index", "--corpus", p(&corpus), "--out", p(&snap)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--force"));
    let o = contraground(&["index", "--corpus", p(&corpus), "--out", p(&snap), "--force"]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&snap).unwrap(), before);
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = contraground(&[
        "index",
        "--corpus",
        "/no/such/corpus.jsonl",
        "--out",
        p(&dir.path().join("x.idx")),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/no/such/corpus.jsonl"));
}

#[test]
fn ground_then_eval_on_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("v5.tsv");
    let ranking = dir.path().join("v5_full.tsv");
    let o = contraground(&[
        "ground",
        "--topics",
        p(&fixture("grounding_topics.jsonl")),
        "--corpus",
        p(&fixture("corpus.jsonl")),
        "--variant",
        "v5",
        "--backend",
        "mock",
        "--out",
        p(&run),
        "--ranking-out",
        p(&ranking),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("variant=v5 topics=5"));
    assert!(stdout(&o).contains("# variant = v5 (cli)"));

    let o = contraground(&[
        "eval",
        "mrr",
        "--run",
        p(&ranking),
        "--gold",
        p(&fixture("grounding_gold.jsonl")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("# mode = rank-list"));
}

#[test]
fn all_variants_run_from_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    for v in ["v1", "v2", "v3", "v4", "v5"] {
        let out = dir.path().join(format!("{v}.tsv"));
        let o = contraground(&[
            "--jobs",
            "3",
            "ground",
            "--topics",
            p(&fixture("grounding_topics.jsonl")),
            "--corpus",
            p(&fixture("corpus.jsonl")),
            "--variant",
            v,
            "--out",
            p(&out),
        ]);
        assert!(o.status.success(), "{v}: {}", stderr(&o));
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.lines().all(|l| l.ends_with(&format!("\t{v}"))));
    }
    let o = contraground(&["ground", "--variant", "v7", "--topics", "a", "--corpus", "b", "--out", "c"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown variant"));
}

#[test]
fn eval_reports_weighted_mrr_for_the_synthetic_table() {
    let o = contraground(&[
        "eval",
        "mrr",
        "--run",
        p(&fixture("weighted_mrr/v5_synthetic.tsv")),
        "--gold",
        p(&fixture("weighted_mrr/gold.jsonl")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let row = stdout(&o)
        .lines()
        .find(|l| l.starts_with("v5_synthetic "))
        .unwrap()
        .to_string();
    let cols: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(cols[1..], ["0.810", "0.750", "0.790", "1"]);
}

#[test]
fn eval_rejects_unknown_topics() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("bad.tsv");
    std::fs::write(&run, "zz\tsupport\t1\td01\t1.000000\tv5\n").unwrap();
    let o = contraground(&["eval", "mrr", "--run", p(&run), "--gold", p(&fixture("grounding_gold.jsonl"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("zz"));
}

#[test]
fn attribute_replay_has_full_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let answers = dir.path().join("answers.jsonl");
    let o = contraground(&[
        "attribute",
        "--topics",
        p(&fixture("attribution_topics.jsonl")),
        "--corpus",
        p(&fixture("corpus.jsonl")),
        "--mode",
        "replay",
        "--replay",
        p(&fixture("replay_answers.jsonl")),
        "--out",
        p(&answers),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("coverage            100.0%"));

    let o = contraground(&["validate", "--answers", p(&answers), "--strict"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let o = contraground(&["eval", "citations", "--answers", p(&answers)]);
    assert!(stdout(&o).contains("avg citations/sent  1.44"));
}

#[test]
fn validate_strict_fails_on_violations() {
    let dir = tempfile::tempdir().unwrap();
    let answers = dir.path().join("answers.jsonl");
    let record = serde_json::json!({
        "topic_id": "a9",
        "sentences": [{ "text": "Uncited claim.", "citations": [], "indices": [] }],
        "word_count": 2,
        "report": { "sentence_count": 1, "coverage": 1.0, "avg_citations_per_sentence": 0.0, "violations": [] },
        "evidence": ["d01"],
    });
    std::fs::write(&answers, format!("{record}\n")).unwrap();
    let o = contraground(&["validate", "--answers", p(&answers), "--strict"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("a9\tuncited-sentence@1"));
}

#[test]
fn replay_without_entry_fails() {
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("replay.jsonl");
    std::fs::write(&replay, "{\"topic_id\":\"a1\",\"text\":\"x [1].\"}\n").unwrap();
    let o = contraground(&[
        "attribute",
        "--topics",
        p(&fixture("attribution_topics.jsonl")),
        "--corpus",
        p(&fixture("corpus.jsonl")),
        "--replay",
        p(&replay),
        "--out",
        p(&dir.path().join("a.jsonl")),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no replay entry for topic `a2`"));
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "variant = \"v1\"\nk1 = 1.2\ncorpus = \"{}\"\ntopics = \"{}\"\n",
            fixture("corpus.jsonl").display(),
            fixture("grounding_topics.jsonl").display()
        ),
    )
    .unwrap();
    let out = dir.path().join("run.tsv");
    let o = contraground(&["--config", p(&cfg), "ground", "--variant", "v5", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("# variant = v5 (cli)"));
    assert!(s.contains("# k1 = 1.2 (config)"));
    assert!(s.contains("# b = 0.4 (default)"));
    assert!(s.contains("(config)") && s.contains("corpus.jsonl"));
}

#[test]
fn remote_backend_unreachable_is_reported() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let endpoint = format!("http://127.0.0.1:{port}");
    let dir = tempfile::tempdir().unwrap();
    let o = contraground(&[
        "ground",
        "--topics",
        p(&fixture("grounding_topics.jsonl")),
        "--corpus",
        p(&fixture("corpus.jsonl")),
        "--backend",
        "remote",
        "--endpoint",
        &endpoint,
        "--timeout-ms",
        "2000",
        "--out",
        p(&dir.path().join("r.tsv")),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains(&endpoint), "{}", stderr(&o));
}

#[test]
fn env_overrides_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_contraground"))
        .args([
            "ground",
            "--topics",
            p(&fixture("grounding_topics.jsonl")),
            "--corpus",
            p(&fixture("corpus.jsonl")),
            "--backend",
            "remote",
            "--out",
            p(&dir.path().join("r.tsv")),
        ])
        .env("CONTRAGROUND_ENDPOINT", "http://127.0.0.1:9")
        .env("CONTRAGROUND_TIMEOUT_MS", "500")
        .output()
        .unwrap();
    let s = stdout(&o) + &stderr(&o);
    assert!(s.contains("127.0.0.1:9"), "{s}");
    assert!(!o.status.success());
}

#[test]
fn help_lists_every_command() {
    let o = contraground(&["--help"]);
    let s = stdout(&o);
    for cmd in ["index", "ground", "attribute", "validate", "eval"] {
        assert!(s.contains(cmd), "{cmd}");
    }
    let o = contraground(&["eval", "--help"]);
    assert!(stdout(&o).contains("mrr") && stdout(&o).contains("citations"));
}
