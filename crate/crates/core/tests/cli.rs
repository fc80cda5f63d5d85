use std::path::Path;
use std::process::{Command, Output};

fn moin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moin"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn moin")
}

fn ok(args: &[&str]) -> String {
    let out = moin(args);
    assert!(
        out.status.success(),
        "moin {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn tiny_chain_produces_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let w = s(dir.path());
    let f = |name: &str| dir.path().join(name);

    ok(&["ingest", "--work", w, "--topics", "3", "--docs-per-topic", "12", "--val-docs-per-topic", "2", "--mc-items", "6"]);
    ok(&["cluster", "--work", w, "--k", "3", "--min-docs", "2"]);
    ok(&[
        "train", "--work", w, "--pretrain-steps", "2", "--d-model", "16", "--n-heads", "2",
        "--context-len", "32", "--rank", "2", "--micro-batch", "4", "--workers", "2",
    ]);
    let stdout = ok(&[
        "route", "--topic-model", s(&f("topics.tpc")), "--mode", "always", "--queries", s(&f("val.jsonl")),
        "--embedder", s(&f("embedder.json")),
    ]);
    let lines: Vec<serde_json::Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 6);
    assert!(lines.iter().all(|d| d["mode"] == "always" && d["fallback"] == false));

    ok(&[
        "route", "--topic-model", s(&f("topics.tpc")), "--mode", "fallback", "--queries", s(&f("val.jsonl")),
        "--embedder", s(&f("embedder.json")), "--out", s(&f("decisions.jsonl")),
    ]);
    ok(&["eval", "--work", w]);
    let json = ok(&[
        "serve-sim", "--nodes", "2", "--cache", "1", "--policy", "rr", "--trace", s(&f("decisions.jsonl")),
        "--topic-model", s(&f("topics.tpc")), "--json", "--out", s(&f("serving.json")),
    ]);
    let metrics: serde_json::Value = serde_json::from_str(&json).unwrap();
    for key in [
        "requests", "hits", "misses", "hit_rate", "total_cost", "evictions", "unique_adapters_used",
        "fallback_count", "per_node",
    ] {
        assert!(metrics.get(key).is_some(), "serving report lacks {key}");
    }
    assert_eq!(metrics["requests"], 6);
    let text = ok(&["report", "--work", w]);
    assert!(text.contains("Table 1") && text.contains("Figure 3"));
    for name in ["report.json", "report.txt", "experts/manifest.jsonl", "training.json", "heldout.jsonl"] {
        assert!(f(name).exists(), "{name} missing");
    }
}

#[test]
fn bad_arguments_fail_cleanly() {
    let out = moin(&["route", "--topic-model", "x.tpc", "--mode", "sometimes", "--queries", "q.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sometimes"));

    let out = moin(&["serve-sim", "--nodes", "2", "--cache", "1", "--policy", "random", "--trace", "t", "--topic-model", "m"]);
    assert!(!out.status.success());

    let out = moin(&["route", "--topic-model", "/nonexistent.tpc", "--queries", "q.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent.tpc"));

    let out = moin(&["report", "--work", "/nonexistent-work"]);
    assert!(!out.status.success());
}

#[test]
fn help_lists_every_subcommand() {
    let help = ok(&["--help"]);
    for cmd in ["ingest", "cluster", "train", "route", "eval", "serve-sim", "report"] {
        assert!(help.contains(cmd), "help lacks {cmd}");
    }
}
