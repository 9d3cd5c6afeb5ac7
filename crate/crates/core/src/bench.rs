//! Benchmark sweeps. Each grid point builds (or reuses) a dataset and its
//! indexes, runs one query batch on every engine and checks every answer
//! against the linear scan.
//!
//! ```toml
//! engines = ["qdr", "per-keyword", "keyword-only", "linear"]
//! queries = 100
//! seed = 1
//!
//! [dataset.synthetic]
//! object_count = 10000
//!
//! [sweep]
//! kappa = [10, 20, 30, 40, 50]
//! ```
//!
//! Agreement rules: qdr must match the scan restricted to the leaves it
//! searches; the baselines and the scan itself must match the global scan.

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::baselines::{linear_scan, scoped_linear_scan, KeywordOnlyIndex, PerKeywordIndex};
use crate::config::Settings;
use crate::dataset::load_objects;
use crate::error::{QdrError, Result};
use crate::index::QdrIndex;
use crate::metric::EmbeddingStore;
use crate::model::{GeoObject, Query, ScoredResult};
use crate::persist::index_to_bytes;
use crate::search::SearchStats;
use crate::synth::{generate_synthetic, QueryGenerator, SynthParams};

/// Score tolerance for agreement checks.
pub const SCORE_TOLERANCE: f64 = 1e-9;
const KEPT_FAILURES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Qdr,
    Linear,
    PerKeyword,
    KeywordOnly,
}

impl Engine {
    pub const ALL: [Engine; 4] = [Engine::Qdr, Engine::Linear, Engine::PerKeyword, Engine::KeywordOnly];

    pub fn name(self) -> &'static str {
        match self {
            Engine::Qdr => "qdr",
            Engine::Linear => "linear",
            Engine::PerKeyword => "per-keyword",
            Engine::KeywordOnly => "keyword-only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSource {
    Synthetic(SynthParams),
    File {
        path: PathBuf,
        embeddings: Option<PathBuf>,
        #[serde(default)]
        higher_better: Vec<usize>,
        #[serde(default)]
        prenormalized: bool,
    },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SynthParams::default())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    pub kappa: Vec<usize>,
    /// Synthetic datasets only.
    pub objects: Vec<usize>,
    /// Synthetic datasets only.
    pub attributes: Vec<usize>,
    pub tau_cluster: Vec<f64>,
    pub tau_dup: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub engines: Vec<Engine>,
    pub dataset: DatasetSource,
    /// Index and query parameters shared by every grid point.
    pub params: Settings,
    pub sweep: Sweep,
    pub queries: usize,
    /// Seed of the query generator.
    pub seed: u64,
    /// Worker threads for query batches; 0 picks the machine's parallelism.
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            engines: Engine::ALL.to_vec(),
            dataset: DatasetSource::default(),
            params: Settings::default(),
            sweep: Sweep::default(),
            queries: 100,
            seed: 1,
            threads: 0,
        }
    }
}

impl BenchConfig {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(QdrError::file(path))?;
        toml::from_str(&text).map_err(|e| QdrError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("bench config serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.engines.is_empty() {
            return Err(QdrError::Config("no engines selected".into()));
        }
        if self.queries == 0 {
            return Err(QdrError::Config("queries must be positive".into()));
        }
        if matches!(self.dataset, DatasetSource::File { .. })
            && (!self.sweep.objects.is_empty() || !self.sweep.attributes.is_empty())
        {
            return Err(QdrError::Config(
                "objects/attributes sweeps need a synthetic dataset".into(),
            ));
        }
        self.params.index_params()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub objects: usize,
    pub attributes: usize,
    pub tau_cluster: f64,
    pub tau_dup: f64,
    pub kappa: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineRow {
    pub point: GridPoint,
    pub engine: Engine,
    pub queries: usize,
    pub median_node_accesses: f64,
    pub median_objects_scored: f64,
    pub median_time_us: f64,
    pub agreements: usize,
    pub disagreements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildRow {
    pub objects: usize,
    pub attributes: usize,
    pub tau_cluster: f64,
    pub tau_dup: f64,
    pub build_ms: f64,
    pub index_bytes: u64,
    pub leaf_count: usize,
    pub duplication_ratio: f64,
    pub qdr_nodes: usize,
    pub per_keyword_nodes: Option<usize>,
    pub keyword_only_nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub point: GridPoint,
    pub engine: Engine,
    pub query: Query,
    pub expected: Vec<ScoredResult>,
    pub actual: Vec<ScoredResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub dataset_seed: Option<u64>,
    pub builds: Vec<BuildRow>,
    pub rows: Vec<EngineRow>,
    pub checks: usize,
    pub failed_checks: usize,
    /// The first few disagreements, each with its query verbatim.
    pub failures: Vec<Disagreement>,
}

impl BenchReport {
    pub fn passed(&self) -> bool {
        self.failed_checks == 0
    }

    pub fn row(&self, engine: Engine, pred: impl Fn(&GridPoint) -> bool) -> Option<&EngineRow> {
        self.rows.iter().find(|r| r.engine == engine && pred(&r.point))
    }

    /// Tab-separated rows preceded by the run's config as `#` comments.
    pub fn write_tsv(&self, mut w: impl Write) -> Result<()> {
        for line in self.config.to_toml().lines() {
            writeln!(w, "# {line}")?;
        }
        writeln!(
            w,
            "objects\tattributes\ttau_cluster\ttau_dup\tkappa\tengine\tqueries\tmedian_node_accesses\tmedian_objects_scored\tmedian_time_us\tagree\tdisagree"
        )?;
        for r in &self.rows {
            let p = r.point;
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.1}\t{}\t{}",
                p.objects,
                p.attributes,
                p.tau_cluster,
                p.tau_dup,
                p.kappa,
                r.engine.name(),
                r.queries,
                r.median_node_accesses,
                r.median_objects_scored,
                r.median_time_us,
                r.agreements,
                r.disagreements
            )?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Same ids in the same order, scores within [`SCORE_TOLERANCE`].
pub fn results_agree(expected: &[ScoredResult], actual: &[ScoredResult]) -> bool {
    expected.len() == actual.len()
        && expected
            .iter()
            .zip(actual)
            .all(|(e, a)| e.id == a.id && (e.score - a.score).abs() <= SCORE_TOLERANCE)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

struct Engines<'a> {
    qdr: QdrIndex,
    per_keyword: Option<&'a PerKeywordIndex>,
    keyword_only: Option<&'a KeywordOnlyIndex>,
}

struct Cell {
    engine: Engine,
    stats: SearchStats,
    mismatch: Option<(Vec<ScoredResult>, Vec<ScoredResult>)>,
}

fn run_query(q: &Query, objects: &[GeoObject], engines: &Engines<'_>, selected: &[Engine]) -> Result<Vec<Cell>> {
    let metric = engines.qdr.metric();
    let global = linear_scan(q, objects, metric)?;
    let check = |expected: &[ScoredResult], actual: Vec<ScoredResult>| {
        (!results_agree(expected, &actual)).then(|| (expected.to_vec(), actual))
    };
    let mut cells = Vec::with_capacity(selected.len());
    for &engine in selected {
        let cell = match engine {
            Engine::Qdr => {
                let (r, stats) = engines.qdr.search(q)?;
                let scoped = scoped_linear_scan(q, &engines.qdr)?;
                Cell {
                    engine,
                    stats,
                    mismatch: check(&scoped, r),
                }
            }
            Engine::Linear => {
                let started = Instant::now();
                let r = linear_scan(q, objects, metric)?;
                let stats = SearchStats {
                    objects_scored: objects.len() as u64,
                    elapsed: started.elapsed(),
                    ..Default::default()
                };
                Cell {
                    engine,
                    stats,
                    mismatch: check(&global, r),
                }
            }
            Engine::PerKeyword => {
                let (r, stats) = engines.per_keyword.unwrap().search(q, metric)?;
                Cell {
                    engine,
                    stats,
                    mismatch: check(&global, r),
                }
            }
            Engine::KeywordOnly => {
                let (r, stats) = engines.keyword_only.unwrap().search(q, metric)?;
                Cell {
                    engine,
                    stats,
                    mismatch: check(&global, r),
                }
            }
        };
        cells.push(cell);
    }
    Ok(cells)
}

fn run_batch(
    queries: &[Query],
    objects: &[GeoObject],
    engines: &Engines<'_>,
    selected: &[Engine],
    threads: usize,
) -> Result<Vec<Vec<Cell>>> {
    let chunk = queries.len().div_ceil(threads.max(1)).max(1);
    let parts: Vec<Result<Vec<Vec<Cell>>>> = std::thread::scope(|s| {
        let handles: Vec<_> = queries
            .chunks(chunk)
            .map(|qs| s.spawn(move || qs.iter().map(|q| run_query(q, objects, engines, selected)).collect()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("bench worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(queries.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

struct Dataset {
    objects: Vec<GeoObject>,
    embeddings: EmbeddingStore,
    queries: QueryGenerator,
}

fn load_dataset(cfg: &BenchConfig, objects: usize, attributes: usize) -> Result<Dataset> {
    match &cfg.dataset {
        DatasetSource::Synthetic(base) => {
            let params = SynthParams {
                object_count: objects,
                attribute_dimension: attributes,
                ..base.clone()
            };
            let data = generate_synthetic(&params)?;
            let queries = QueryGenerator::new(&data, cfg.seed);
            Ok(Dataset {
                objects: data.objects,
                embeddings: data.embeddings,
                queries,
            })
        }
        DatasetSource::File {
            path,
            embeddings,
            higher_better,
            prenormalized,
        } => {
            let opts = Settings {
                higher_better: Some(higher_better.clone()),
                prenormalized: Some(*prenormalized),
                ..Default::default()
            }
            .load_options();
            let (objects, _) = load_objects(path, &opts)?;
            let embeddings = match embeddings {
                Some(p) => EmbeddingStore::load(p)?,
                None => EmbeddingStore::default(),
            };
            let queries = QueryGenerator::for_objects(&objects, cfg.seed);
            Ok(Dataset {
                objects,
                embeddings,
                queries,
            })
        }
    }
}

/// Runs the whole sweep. Returns `Err` only for setup problems; answer
/// disagreements are recorded in the report.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let base_params = cfg.params.index_params()?;
    let mut selected = cfg.engines.clone();
    selected.sort();
    selected.dedup();
    let threads = match cfg.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    };
    let (base_objects, base_attributes, dataset_seed) = match &cfg.dataset {
        DatasetSource::Synthetic(p) => (p.object_count, p.attribute_dimension, Some(p.seed)),
        DatasetSource::File { .. } => (0, 0, None),
    };

    let mut report = BenchReport {
        config: cfg.clone(),
        dataset_seed,
        builds: Vec::new(),
        rows: Vec::new(),
        checks: 0,
        failed_checks: 0,
        failures: Vec::new(),
    };

    for &n in &axis(&cfg.sweep.objects, base_objects) {
        for &dim in &axis(&cfg.sweep.attributes, base_attributes) {
            let mut data = load_dataset(cfg, n, dim)?;
            let (n, dim) = (data.objects.len(), data.objects[0].attributes.len());
            let per_keyword = selected
                .contains(&Engine::PerKeyword)
                .then(|| PerKeywordIndex::build(data.objects.clone(), base_params.dr))
                .transpose()?;
            let keyword_only = selected
                .contains(&Engine::KeywordOnly)
                .then(|| KeywordOnlyIndex::build(data.objects.clone(), base_params.dr))
                .transpose()?;
            let base_queries = data.queries.batch(cfg.queries);

            for &tau_cluster in &axis(&cfg.sweep.tau_cluster, base_params.cluster.tau_cluster) {
                for &tau_dup in &axis(&cfg.sweep.tau_dup, base_params.cluster.tau_dup) {
                    let mut params = base_params;
                    params.cluster.tau_cluster = tau_cluster;
                    params.cluster.tau_dup = tau_dup;
                    params.cluster.validate()?;
                    let started = Instant::now();
                    let qdr = QdrIndex::build(data.objects.clone(), data.embeddings.clone(), params)?;
                    let build_time = started.elapsed();
                    let summary = qdr.summary();
                    report.builds.push(BuildRow {
                        objects: n,
                        attributes: dim,
                        tau_cluster,
                        tau_dup,
                        build_ms: build_time.as_secs_f64() * 1e3,
                        index_bytes: index_to_bytes(&qdr).len() as u64,
                        leaf_count: summary.leaf_count,
                        duplication_ratio: summary.duplication_ratio,
                        qdr_nodes: summary.dr_nodes,
                        per_keyword_nodes: per_keyword.as_ref().map(PerKeywordIndex::node_count),
                        keyword_only_nodes: keyword_only.as_ref().map(KeywordOnlyIndex::node_count),
                    });
                    let engines = Engines {
                        qdr,
                        per_keyword: per_keyword.as_ref(),
                        keyword_only: keyword_only.as_ref(),
                    };

                    for &kappa in &axis(
                        &cfg.sweep.kappa,
                        cfg.params.kappa.unwrap_or(crate::model::DEFAULT_KAPPA),
                    ) {
                        let point = GridPoint {
                            objects: n,
                            attributes: dim,
                            tau_cluster,
                            tau_dup,
                            kappa,
                        };
                        let queries: Vec<Query> = base_queries
                            .iter()
                            .map(|q| {
                                let mut q = q.clone();
                                cfg.params.apply_to_query(&mut q);
                                q.kappa = kappa;
                                q
                            })
                            .collect();
                        let cells = run_batch(&queries, &data.objects, &engines, &selected, threads)?;
                        for (col, &engine) in selected.iter().enumerate() {
                            let mut row = EngineRow {
                                point,
                                engine,
                                queries: queries.len(),
                                median_node_accesses: median(
                                    cells.iter().map(|c| c[col].stats.node_accesses as f64).collect(),
                                ),
                                median_objects_scored: median(
                                    cells.iter().map(|c| c[col].stats.objects_scored as f64).collect(),
                                ),
                                median_time_us: median(
                                    cells.iter().map(|c| duration_us(c[col].stats.elapsed)).collect(),
                                ),
                                agreements: 0,
                                disagreements: 0,
                            };
                            for (q, c) in queries.iter().zip(&cells) {
                                report.checks += 1;
                                match &c[col].mismatch {
                                    None => row.agreements += 1,
                                    Some((expected, actual)) => {
                                        row.disagreements += 1;
                                        report.failed_checks += 1;
                                        if report.failures.len() < KEPT_FAILURES {
                                            report.failures.push(Disagreement {
                                                point,
                                                engine: c[col].engine,
                                                query: q.clone(),
                                                expected: expected.clone(),
                                                actual: actual.clone(),
                                            });
                                        }
                                    }
                                }
                            }
                            report.rows.push(row);
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

fn duration_us(d: Duration) -> f64 {
    d.as_secs_f64() * 1e6
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchConfig {
        BenchConfig {
            dataset: DatasetSource::Synthetic(SynthParams {
                object_count: 600,
                ..Default::default()
            }),
            queries: 12,
            threads: 2,
            sweep: Sweep {
                kappa: vec![5, 15],
                tau_dup: vec![0.0, 0.05],
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn small_sweep_agrees_everywhere() {
        let report = run_bench(&small()).unwrap();
        assert!(report.passed(), "{:#?}", report.failures);
        assert_eq!(report.builds.len(), 2);
        assert_eq!(report.rows.len(), 2 * 2 * 4);
        assert_eq!(report.checks, 2 * 2 * 4 * 12);
        let mut tsv = Vec::new();
        report.write_tsv(&mut tsv).unwrap();
        let tsv = String::from_utf8(tsv).unwrap();
        assert!(tsv.starts_with("# "));
        assert_eq!(
            tsv.lines().filter(|l| !l.starts_with('#')).count(),
            1 + report.rows.len()
        );
    }

    #[test]
    fn node_accesses_are_thread_independent() {
        let mut one = small();
        one.threads = 1;
        let a = run_bench(&one).unwrap();
        let b = run_bench(&small()).unwrap();
        let na = |r: &BenchReport| r.rows.iter().map(|r| r.median_node_accesses).collect::<Vec<_>>();
        assert_eq!(na(&a), na(&b));
    }

    #[test]
    fn config_roundtrips_through_toml() {
        let cfg = small();
        let back: BenchConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let parsed: BenchConfig = toml::from_str(
            "engines = [\"qdr\"]\nqueries = 3\n[dataset.synthetic]\nobject_count = 50\n[params]\ntau_cluster = 0.5\n",
        )
        .unwrap();
        assert_eq!(parsed.engines, vec![Engine::Qdr]);
        assert_eq!(parsed.params.tau_cluster, Some(0.5));
        assert!(toml::from_str::<BenchConfig>("[sweep]\nkapa = [1]").is_err());
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(vec![]), 0.0);
    }
}
