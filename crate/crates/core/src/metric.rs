//! Keyword distance: a blend of normalized edit distance and the distance
//! between unit-length word vectors.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QdrError, Result};

pub const DEFAULT_DELTA: f64 = 0.5;
/// Dimension used for pseudo-vectors when no embedding file is supplied.
pub const DEFAULT_FALLBACK_DIMENSION: usize = 32;
const FALLBACK_SEED: u64 = 0x5eed_0fc0_ffee;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    /// Weight of the textual component, in `[0, 1]`.
    pub delta: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self { delta: DEFAULT_DELTA }
    }
}

impl MetricParams {
    pub fn new(delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(QdrError::InvalidParameter(format!(
                "delta must lie in [0, 1] (got {delta})"
            )));
        }
        Ok(Self { delta })
    }
}

/// Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if ca == cb {
                diag
            } else {
                1 + diag.min(above).min(row[j])
            };
            diag = above;
        }
    }
    row[b.len()]
}

/// Edit distance divided by the longer length, so the result lies in `[0, 1]`.
pub fn textual_distance(k1: &str, k2: &str) -> f64 {
    let longest = k1.chars().count().max(k2.chars().count());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(k1, k2) as f64 / longest as f64
}

/// Half the Euclidean distance between two unit vectors.
pub fn vector_distance(a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sq.sqrt() / 2.0).min(1.0)
}

/// Word vectors keyed by keyword, unit-normalized on insertion. Keywords
/// without a stored vector resolve to a deterministic pseudo-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl Default for EmbeddingStore {
    fn default() -> Self {
        Self::new(DEFAULT_FALLBACK_DIMENSION)
    }
}

impl EmbeddingStore {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self {
            dimension,
            vectors: HashMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vectors.contains_key(word)
    }

    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(QdrError::DimensionMismatch {
                expected: self.dimension,
                actual: vector.len(),
            });
        }
        let unit = normalize(vector)
            .ok_or_else(|| QdrError::InvalidParameter("embedding vector must be finite and non-zero".into()))?;
        self.vectors.insert(word.into(), unit);
        Ok(())
    }

    /// Stores `vector` as is; for restoring vectors that were already
    /// normalized, where a second pass could move the last bit.
    pub(crate) fn insert_raw(&mut self, word: String, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(QdrError::DimensionMismatch {
                expected: self.dimension,
                actual: vector.len(),
            });
        }
        self.vectors.insert(word, vector);
        Ok(())
    }

    /// Stored vector for `word`, or its pseudo-vector.
    pub fn vector(&self, word: &str) -> Cow<'_, [f64]> {
        match self.vectors.get(word) {
            Some(v) => Cow::Borrowed(v.as_slice()),
            None => Cow::Owned(fallback_vector(word, self.dimension)),
        }
    }

    /// Stores pseudo-vectors for every listed word that has none, so later
    /// lookups are plain map hits.
    pub fn materialize<'a>(&mut self, words: impl IntoIterator<Item = &'a str>) {
        for w in words {
            if !self.vectors.contains_key(w) {
                let v = fallback_vector(w, self.dimension);
                self.vectors.insert(w.to_owned(), v);
            }
        }
    }

    /// Entries sorted by word.
    pub fn entries(&self) -> Vec<(&str, &[f64])> {
        let mut out: Vec<_> = self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice())).collect();
        out.sort_by(|a, b| a.0.cmp(b.0));
        out
    }

    /// Parses the whitespace-separated `word v1 … vd` text layout. A leading
    /// `count dimension` header line is detected and skipped.
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut store: Option<Self> = None;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let rest: Vec<&str> = fields.collect();
            if idx == 0 && rest.len() == 1 && word.parse::<u64>().is_ok() && rest[0].parse::<u64>().is_ok() {
                continue;
            }
            let values = rest
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| QdrError::Embedding {
                    line: lineno,
                    message: e.to_string(),
                })?;
            if values.is_empty() {
                return Err(QdrError::Embedding {
                    line: lineno,
                    message: format!("word {word:?} has no vector"),
                });
            }
            let store = store.get_or_insert_with(|| Self::new(values.len()));
            store
                .insert(word.to_lowercase(), values)
                .map_err(|e| QdrError::Embedding {
                    line: lineno,
                    message: e.to_string(),
                })?;
        }
        Ok(store.unwrap_or_default())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(BufReader::new(File::open(path.as_ref()).map_err(QdrError::file(path))?))
    }

    /// Writes the text layout with a `count dimension` header.
    pub fn write_text(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{} {}", self.vectors.len(), self.dimension)?;
        for (word, v) in self.entries() {
            write!(w, "{word}")?;
            for x in v {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// FNV-1a; stable across platforms and toolchains, unlike `DefaultHasher`.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Deterministic unit pseudo-vector for a word absent from the store.
pub fn fallback_vector(word: &str, dimension: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(word.as_bytes()) ^ FALLBACK_SEED);
    loop {
        let v: Vec<f64> = (0..dimension).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Some(unit) = normalize(v) {
            return unit;
        }
    }
}

/// Semantic distance in `[0, 1]`.
pub fn semantic_distance(k1: &str, k2: &str, store: &EmbeddingStore) -> f64 {
    if k1 == k2 {
        return 0.0;
    }
    vector_distance(&store.vector(k1), &store.vector(k2))
}

/// `δ·textual + (1 − δ)·semantic`.
pub fn keyword_distance(k1: &str, k2: &str, params: MetricParams, store: &EmbeddingStore) -> f64 {
    blend(params.delta, textual_distance(k1, k2), semantic_distance(k1, k2, store))
}

#[inline]
fn blend(delta: f64, textual: f64, semantic: f64) -> f64 {
    delta * textual + (1.0 - delta) * semantic
}

/// Anything that can measure keyword dissimilarity.
pub trait KeywordDistance {
    fn distance(&self, a: &str, b: &str) -> f64;
}

impl<F: Fn(&str, &str) -> f64> KeywordDistance for F {
    fn distance(&self, a: &str, b: &str) -> f64 {
        self(a, b)
    }
}

/// The blended keyword metric bound to an embedding store.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordMetric {
    pub params: MetricParams,
    pub store: EmbeddingStore,
}

impl KeywordMetric {
    pub fn new(params: MetricParams, store: EmbeddingStore) -> Self {
        Self { params, store }
    }

    /// Memoized pairwise distances over `words`.
    pub fn matrix(&self, words: &[String]) -> DistanceMatrix {
        let vectors: Vec<Cow<'_, [f64]>> = words.iter().map(|w| self.store.vector(w)).collect();
        DistanceMatrix::from_fn(words.len(), |i, j| {
            let semantic = if words[i] == words[j] {
                0.0
            } else {
                vector_distance(&vectors[i], &vectors[j])
            };
            blend(self.params.delta, textual_distance(&words[i], &words[j]), semantic)
        })
    }
}

impl KeywordDistance for KeywordMetric {
    fn distance(&self, a: &str, b: &str) -> f64 {
        keyword_distance(a, b, self.params, &self.store)
    }
}

/// Symmetric distance table with a zero diagonal, stored as the strict
/// upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds the table calling `f(i, j)` once for every `i < j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                upper.push(f(i, j));
            }
        }
        Self { n, upper }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        // row i starts after rows 0..i, each of length n-1-r
        let row_start = i * (2 * self.n - i - 1) / 2;
        self.upper[row_start + (j - i - 1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textual_examples() {
        assert_eq!(textual_distance("pizza", "pizza"), 0.0);
        assert_eq!(textual_distance("a", "b"), 1.0);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(textual_distance("kitten", "sitting"), 3.0 / 7.0);
        assert_eq!(levenshtein("", "abc"), 3);
    }

    #[test]
    fn semantic_examples() {
        let mut store = EmbeddingStore::new(2);
        store.insert("a", vec![1.0, 0.0]).unwrap();
        store.insert("b", vec![-3.0, 0.0]).unwrap();
        store.insert("c", vec![0.0, 2.0]).unwrap();
        store.insert("d", vec![5.0, 0.0]).unwrap();
        assert_eq!(semantic_distance("a", "d", &store), 0.0);
        assert_eq!(semantic_distance("a", "b", &store), 1.0);
        assert!((semantic_distance("a", "c", &store) - std::f64::consts::SQRT_2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn blend_boundaries() {
        let store = EmbeddingStore::default();
        let t = textual_distance("pizza", "pasta");
        let s = semantic_distance("pizza", "pasta", &store);
        assert_eq!(
            keyword_distance("pizza", "pasta", MetricParams { delta: 1.0 }, &store),
            t
        );
        assert_eq!(
            keyword_distance("pizza", "pasta", MetricParams { delta: 0.0 }, &store),
            s
        );
        assert!((blend(0.5, 0.4, 0.2) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn fallback_is_deterministic_unit() {
        let a = fallback_vector("zyzzyva", 16);
        let b = fallback_vector("zyzzyva", 16);
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_ne!(a, fallback_vector("zyzzyvb", 16));
    }

    #[test]
    fn parses_with_and_without_header() {
        let with = "2 3\npizza 1 0 0\nsteak 0 2 0\n";
        let without = "pizza 1 0 0\nsteak 0 2 0\n";
        let a = EmbeddingStore::from_reader(with.as_bytes()).unwrap();
        let b = EmbeddingStore::from_reader(without.as_bytes()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dimension(), 3);
        assert_eq!(&*a.vector("steak"), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_ragged_and_non_numeric() {
        assert!(matches!(
            EmbeddingStore::from_reader("a 1 2\nb 1 2 3\n".as_bytes()),
            Err(QdrError::Embedding { line: 2, .. })
        ));
        assert!(matches!(
            EmbeddingStore::from_reader("a 1 x\n".as_bytes()),
            Err(QdrError::Embedding { line: 1, .. })
        ));
    }

    #[test]
    fn text_roundtrip() {
        let mut store = EmbeddingStore::new(3);
        store.insert("b", vec![0.25, -0.5, 1.0]).unwrap();
        store.insert("a", vec![1.0, 1.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        store.write_text(&mut buf).unwrap();
        assert_eq!(EmbeddingStore::from_reader(buf.as_slice()).unwrap(), store);
    }

    #[test]
    fn matrix_matches_direct_computation_bitwise() {
        let metric = KeywordMetric::new(MetricParams::default(), EmbeddingStore::new(8));
        let words: Vec<String> = ["coffee", "pizza", "pizzeria", "steak", "sushi"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let m = metric.matrix(&words);
        for i in 0..words.len() {
            for j in 0..words.len() {
                assert_eq!(m.get(i, j).to_bits(), metric.distance(&words[i], &words[j]).to_bits());
            }
        }
    }
}
