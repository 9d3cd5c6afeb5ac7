use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use qdr_core::baselines::{KeywordOnlyIndex, PerKeywordIndex};
use qdr_core::bench::{run_bench, BenchConfig};
use qdr_core::config::Settings;
use qdr_core::dataset::{load_objects, save_objects};
use qdr_core::persist::{load_index, save_index};
use qdr_core::synth::{generate_synthetic, SynthParams};
use qdr_core::{EmbeddingStore, Point, QdrError, QdrIndex, Query};

#[derive(Parser)]
#[command(name = "qdr", version, about = "Attribute-aware top-k spatial keyword search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index from an object file.
    Build(BuildArgs),
    /// Run one query against a saved index.
    Query(QueryArgs),
    /// Run a benchmark sweep described by a TOML file.
    Bench(BenchArgs),
    /// Generate a synthetic dataset and its embeddings.
    Synth(SynthArgs),
    /// Describe a saved index.
    Stats(StatsArgs),
}

/// Flags mirroring the settings file keys.
#[derive(Args, Default)]
struct SettingFlags {
    /// Settings file (TOML); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    tau_cluster: Option<f64>,
    #[arg(long)]
    tau_dup: Option<f64>,
    #[arg(long)]
    kernel_sigma: Option<f64>,
    #[arg(long)]
    cluster_seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    max_entries: Option<usize>,
    #[arg(long)]
    tau_merge: Option<f64>,
    #[arg(long)]
    kappa: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau_relax: Option<f64>,
    #[arg(long)]
    d_max: Option<f64>,
    /// Zero-based attribute dimensions where larger raw values are better.
    #[arg(long, value_delimiter = ',')]
    higher_better: Option<Vec<usize>>,
    /// Attributes in the object file are already in [0, 1], smaller better.
    #[arg(long)]
    prenormalized: bool,
}

impl SettingFlags {
    fn resolve(&self) -> Result<Settings, CliError> {
        let file = match &self.config {
            Some(p) => Settings::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
            None => Settings::default(),
        };
        let flags = Settings {
            delta: self.delta,
            tau_cluster: self.tau_cluster,
            tau_dup: self.tau_dup,
            kernel_sigma: self.kernel_sigma,
            cluster_seed: self.cluster_seed,
            max_iters: self.max_iters,
            max_entries: self.max_entries,
            tau_merge: self.tau_merge,
            kappa: self.kappa,
            alpha: self.alpha,
            beta: self.beta,
            tau_relax: self.tau_relax,
            d_max: self.d_max,
            higher_better: self.higher_better.clone(),
            prenormalized: self.prenormalized.then_some(true),
        };
        Ok(file.overlay(&flags))
    }
}

#[derive(Args)]
struct BuildArgs {
    /// Object file, one JSON record per line.
    #[arg(long)]
    data: PathBuf,
    /// Word vectors (`word v1 … vd` per line). Without it every keyword gets
    /// a deterministic pseudo-vector.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also build the two baseline indexes and report their size.
    #[arg(long)]
    baselines: bool,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    settings: SettingFlags,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    /// Query location as `x,y`.
    #[arg(long, allow_hyphen_values = true)]
    at: String,
    /// Query keywords, separated by spaces or commas.
    #[arg(long, num_args = 1..)]
    keywords: Vec<String>,
    /// Attribute weights summing to 1; uniform when omitted.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    settings: SettingFlags,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Tab-separated report; the JSON summary goes next to it with a
    /// `.json` suffix.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's thread count.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator parameters (TOML); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    objects: Option<usize>,
    #[arg(long)]
    attributes: Option<usize>,
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long)]
    keywords_per_topic: Option<usize>,
    /// Fraction of a topic's keywords each object carries.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    embeddings_out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    json: bool,
}

enum CliError {
    Usage(String),
    Failure(String),
}

impl From<QdrError> for CliError {
    fn from(e: QdrError) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let outcome = match cli.command {
        Command::Build(a) => build(a),
        Command::Query(a) => query(a),
        Command::Bench(a) => bench(a),
        Command::Synth(a) => synth(a),
        Command::Stats(a) => stats(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("qdr: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Failure(m)) => {
            eprintln!("qdr: {m}");
            ExitCode::from(1)
        }
    }
}

fn print_json(v: &serde_json::Value) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v).map_err(|e| CliError::Failure(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn build(a: BuildArgs) -> Result<(), CliError> {
    let settings = a.settings.resolve()?;
    let params = settings.index_params().map_err(|e| CliError::Usage(e.to_string()))?;
    let (objects, manifest) = load_objects(&a.data, &settings.load_options())?;
    let store = match &a.embeddings {
        Some(p) => EmbeddingStore::load(p)?,
        None => EmbeddingStore::default(),
    };

    let started = Instant::now();
    let index = QdrIndex::build(objects.clone(), store, params)?;
    let build_ms = started.elapsed().as_secs_f64() * 1e3;
    let bytes = save_index(&index, &a.out)?;
    let summary = index.summary();

    let mut report = json!({
        "build_ms": build_ms,
        "index_bytes": bytes,
        "leaf_count": summary.leaf_count,
        "duplication_ratio": summary.duplication_ratio,
        "manifest": manifest,
        "summary": summary,
        "params": params,
    });
    if a.baselines {
        let started = Instant::now();
        let pk = PerKeywordIndex::build(objects.clone(), params.dr)?;
        let pk_ms = started.elapsed().as_secs_f64() * 1e3;
        let started = Instant::now();
        let ko = KeywordOnlyIndex::build(objects, params.dr)?;
        let ko_ms = started.elapsed().as_secs_f64() * 1e3;
        report["baselines"] = json!({
            "per_keyword": { "build_ms": pk_ms, "trees": pk.tree_count(), "nodes": pk.node_count() },
            "keyword_only": { "build_ms": ko_ms, "nodes": ko.node_count() },
        });
    }

    if a.json {
        return print_json(&report);
    }
    let mut out = io::stdout().lock();
    writeln!(out, "index: {}", a.out.display())?;
    writeln!(out, "build_ms: {build_ms:.1}")?;
    writeln!(out, "index_bytes: {bytes}")?;
    writeln!(out, "objects: {}", summary.objects)?;
    writeln!(out, "universe_size: {}", summary.universe_size)?;
    writeln!(out, "leaf_count: {}", summary.leaf_count)?;
    writeln!(out, "duplication_ratio: {:.4}", summary.duplication_ratio)?;
    writeln!(out, "dr_nodes: {}", summary.dr_nodes)?;
    if let Some(b) = report.get("baselines") {
        writeln!(out, "per_keyword_nodes: {}", b["per_keyword"]["nodes"])?;
        writeln!(out, "keyword_only_nodes: {}", b["keyword_only"]["nodes"])?;
    }
    Ok(())
}

fn parse_point(s: &str) -> Result<Point, CliError> {
    let bad = || CliError::Usage(format!("--at expects `x,y`, got {s:?}"));
    let (x, y) = s.split_once(',').ok_or_else(bad)?;
    let x: f64 = x.trim().parse().map_err(|_| bad())?;
    let y: f64 = y.trim().parse().map_err(|_| bad())?;
    Ok(Point::new(x, y))
}

fn query(a: QueryArgs) -> Result<(), CliError> {
    let settings = a.settings.resolve()?;
    let location = parse_point(&a.at)?;
    let keywords: Vec<&str> = a
        .keywords
        .iter()
        .flat_map(|k| k.split([' ', ',']))
        .filter(|k| !k.is_empty())
        .collect();
    let index = load_index(&a.index)?;
    let dim = index.attribute_dimension();
    let weights = a.weights.clone().unwrap_or_else(|| vec![1.0 / dim as f64; dim]);

    let mut q = Query::new(
        location,
        keywords,
        weights,
        qdr_core::model::DEFAULT_KAPPA,
        index.default_d_max(),
    );
    settings.apply_to_query(&mut q);
    let (results, stats) = index.search(&q).map_err(|e| match e {
        QdrError::InvalidQuery(_) | QdrError::InvalidParameter(_) | QdrError::DimensionMismatch { .. } => {
            CliError::Usage(e.to_string())
        }
        other => other.into(),
    })?;

    if a.json {
        return print_json(&json!({ "query": q, "results": results, "stats": stats }));
    }
    let mut out = io::stdout().lock();
    writeln!(out, "rank\tid\tscore\tdistance\tphi\tattribute_term")?;
    for (i, r) in results.iter().enumerate() {
        writeln!(
            out,
            "{}\t{}\t{:.9}\t{:.3}\t{}\t{:.6}",
            i + 1,
            r.id,
            r.score,
            r.distance,
            r.phi,
            r.attribute_term
        )?;
    }
    writeln!(out, "results: {}", results.len())?;
    writeln!(out, "node_accesses: {}", stats.node_accesses)?;
    writeln!(out, "objects_scored: {}", stats.objects_scored)?;
    writeln!(out, "leaves_searched: {}", stats.leaves_searched)?;
    writeln!(out, "elapsed_us: {}", stats.elapsed.as_micros())?;
    Ok(())
}

fn sibling_with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn bench(a: BenchArgs) -> Result<(), CliError> {
    let mut cfg = BenchConfig::load(&a.config).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(t) = a.threads {
        cfg.threads = t;
    }
    let report = run_bench(&cfg).map_err(|e| match e {
        QdrError::Config(_) | QdrError::InvalidParameter(_) => CliError::Usage(e.to_string()),
        other => other.into(),
    })?;

    let mut w = BufWriter::new(File::create(&a.out).map_err(QdrError::file(&a.out))?);
    report.write_tsv(&mut w)?;
    w.flush()?;
    let summary_path = sibling_with_suffix(&a.out, ".json");
    std::fs::write(&summary_path, report.summary_json()).map_err(QdrError::file(&summary_path))?;

    let mut out = io::stdout().lock();
    writeln!(out, "report: {}", a.out.display())?;
    writeln!(out, "summary: {}", summary_path.display())?;
    writeln!(out, "index_builds: {}", report.builds.len())?;
    writeln!(out, "checks: {}", report.checks)?;
    writeln!(out, "failed_checks: {}", report.failed_checks)?;
    if report.passed() {
        writeln!(out, "agreement: PASS")?;
        return Ok(());
    }
    writeln!(out, "agreement: FAIL")?;
    for f in &report.failures {
        let q = serde_json::to_string(&f.query).map_err(|e| CliError::Failure(e.to_string()))?;
        writeln!(
            out,
            "disagreement engine={} kappa={} query={q}",
            f.engine.name(),
            f.point.kappa
        )?;
    }
    Err(CliError::Failure(format!(
        "{} answer(s) disagreed with the linear scan",
        report.failed_checks
    )))
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let mut p = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(QdrError::file(path))?;
            toml::from_str::<SynthParams>(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => SynthParams::default(),
    };
    if let Some(v) = a.objects {
        p.object_count = v;
    }
    if let Some(v) = a.attributes {
        p.attribute_dimension = v;
    }
    if let Some(v) = a.topics {
        p.topics = v;
    }
    if let Some(v) = a.keywords_per_topic {
        p.keywords_per_topic = v;
    }
    if let Some(v) = a.r {
        p.r = v;
    }
    if let Some(v) = a.seed {
        p.seed = v;
    }
    p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let data = generate_synthetic(&p)?;
    save_objects(&data.objects, &a.out)?;
    let mut w = BufWriter::new(File::create(&a.embeddings_out).map_err(QdrError::file(&a.embeddings_out))?);
    data.embeddings.write_text(&mut w)?;
    w.flush()?;
    println!("objects: {} -> {}", data.objects.len(), a.out.display());
    println!("keywords: {} -> {}", data.embeddings.len(), a.embeddings_out.display());
    Ok(())
}

fn stats(a: StatsArgs) -> Result<(), CliError> {
    let index = load_index(&a.index)?;
    let summary = index.summary();
    let tree = index.tree();
    let leaves: Vec<_> = tree
        .leaf_ids()
        .iter()
        .map(|&id| {
            let node = tree.node(id);
            let leaf = tree.leaf(id);
            json!({
                "node": id,
                "center": node.center,
                "kind": leaf.kind,
                "core": leaf.core.len(),
                "duplicates": leaf.duplicates.len(),
                "diameter": leaf.diameter,
                "entries": leaf.tree.len(),
                "dr_nodes": leaf.tree.node_count(),
                "height": leaf.tree.height(),
            })
        })
        .collect();
    if a.json {
        return print_json(&json!({ "summary": summary, "params": index.params(), "leaves": leaves }));
    }
    let mut out = io::stdout().lock();
    let s = serde_json::to_value(&summary).map_err(|e| CliError::Failure(e.to_string()))?;
    for (k, v) in s.as_object().unwrap() {
        if k != "bounds" {
            writeln!(out, "{k}: {v}")?;
        }
    }
    writeln!(out)?;
    writeln!(
        out,
        "node\tcenter\tkind\tcore\tduplicates\tdiameter\tentries\tdr_nodes\theight"
    )?;
    for l in &leaves {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.4}\t{}\t{}\t{}",
            l["node"],
            l["center"].as_str().unwrap(),
            l["kind"].as_str().unwrap(),
            l["core"],
            l["duplicates"],
            l["diameter"].as_f64().unwrap(),
            l["entries"],
            l["dr_nodes"],
            l["height"]
        )?;
    }
    Ok(())
}
