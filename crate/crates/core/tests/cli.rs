use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdr"))
        .args(args)
        .output()
        .expect("spawn qdr")
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pizza_steak.jsonl")
}

fn built(dir: &Path) -> String {
    let out = dir.join("fixture.qdr");
    let o = qdr(&[
        "build",
        "--data",
        fixture().to_str().unwrap(),
        "--prenormalized",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    out.to_str().unwrap().to_string()
}

#[test]
fn query_ranks_fixture_and_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let index = built(dir.path());
    let o = qdr(&[
        "query",
        "--index",
        &index,
        "--at",
        "2000,0",
        "--keywords",
        "pizza,steak",
        "--json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let ids: Vec<&str> = v["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, ["o1", "o8", "o6"]);
}

#[test]
fn usage_and_input_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let index = built(dir.path());
    assert_eq!(
        qdr(&["query", "--index", &index, "--at", "nope", "--keywords", "pizza"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        qdr(&[
            "query",
            "--index",
            &index,
            "--at",
            "1,1",
            "--keywords",
            "pizza",
            "--weights",
            "0.9,0.9,0.9"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        qdr(&[
            "query",
            "--index",
            &index,
            "--at",
            "1,1",
            "--keywords",
            "pizza",
            "--weights",
            "1"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(qdr(&["frobnicate"]).status.code(), Some(2));

    let missing = qdr(&[
        "query",
        "--index",
        "/definitely/missing.qdr",
        "--at",
        "1,1",
        "--keywords",
        "pizza",
    ]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/definitely/missing.qdr"));

    let garbage = dir.path().join("garbage.qdr");
    std::fs::write(&garbage, b"not an index").unwrap();
    assert_eq!(
        qdr(&[
            "query",
            "--index",
            garbage.to_str().unwrap(),
            "--at",
            "1,1",
            "--keywords",
            "pizza"
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn zero_kappa_is_an_empty_success() {
    let dir = tempfile::tempdir().unwrap();
    let index = built(dir.path());
    let o = qdr(&[
        "query",
        "--index",
        &index,
        "--at",
        "1,1",
        "--keywords",
        "pizza",
        "--kappa",
        "0",
        "--json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["results"].as_array().unwrap().is_empty());
}

#[test]
fn synth_then_bench_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("s.jsonl");
    let vecs = dir.path().join("s.vec");
    let o = qdr(&[
        "synth",
        "--objects",
        "300",
        "--seed",
        "3",
        "--out",
        data.to_str().unwrap(),
        "--embeddings-out",
        vecs.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let config = dir.path().join("bench.toml");
    std::fs::write(
        &config,
        format!(
            "engines = [\"qdr\", \"linear\", \"per-keyword\", \"keyword-only\"]\nqueries = 10\n\n\
             [dataset.file]\npath = {:?}\nembeddings = {:?}\n\n[sweep]\nkappa = [5, 10]\n",
            data.to_str().unwrap(),
            vecs.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = dir.path().join("bench.tsv");
    let o = qdr(&[
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let tsv = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<&str>> = tsv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows[0][5], "engine");
    assert_eq!(rows.len(), 1 + 2 * 4);
    for r in &rows[1..] {
        assert_eq!((r[10], r[11]), ("10", "0"), "{r:?}");
    }
    assert!(dir.path().join("bench.tsv.json").exists());
}
