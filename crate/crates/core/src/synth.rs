//! Seeded synthetic datasets with topic-structured keywords.
//!
//! Every topic has a random five-letter stem; its keywords are the stem plus
//! a two-letter suffix, and their embeddings are small perturbations of a
//! shared topic direction. Keywords of one topic are therefore close under
//! both halves of the keyword metric and far from every other topic.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::drtree::Mbr;
use crate::error::{QdrError, Result};
use crate::metric::EmbeddingStore;
use crate::model::{GeoObject, Point, Query, DEFAULT_KAPPA};

const STEM_LEN: usize = 5;
const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub object_count: usize,
    pub coord_range: (f64, f64),
    pub topics: usize,
    pub keywords_per_topic: usize,
    /// Fraction of its topic's keywords an object carries.
    pub r: f64,
    pub attribute_dimension: usize,
    pub attr_mean: f64,
    pub attr_std: f64,
    pub embedding_dimension: usize,
    /// Per-component noise added to the topic direction before normalizing.
    pub embedding_noise: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            object_count: 10_000,
            coord_range: (0.0, 10_000.0),
            topics: 16,
            keywords_per_topic: 16,
            r: 0.25,
            attribute_dimension: 4,
            attr_mean: 0.5,
            attr_std: 0.15,
            embedding_dimension: 16,
            embedding_noise: 0.035,
            seed: 7,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(QdrError::InvalidParameter(m.into()));
        if !(self.r > 0.0 && self.r <= 1.0) {
            return bad("r must lie in (0, 1]");
        }
        let (lo, hi) = self.coord_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad("coord_range must be a finite, non-empty interval");
        }
        if self.topics < 4 {
            return bad("need at least 4 topics");
        }
        if self.keywords_per_topic == 0 || self.keywords_per_topic > ALPHABET.len() * ALPHABET.len() {
            return bad("keywords_per_topic must be in 1..=676");
        }
        if self.object_count == 0 || self.attribute_dimension == 0 || self.embedding_dimension == 0 {
            return bad("object_count, attribute_dimension and embedding_dimension must be positive");
        }
        if !(0.0..).contains(&self.attr_std) || !self.attr_mean.is_finite() || !(0.0..).contains(&self.embedding_noise)
        {
            return bad("attribute and noise parameters must be finite and non-negative");
        }
        Ok(())
    }

    pub fn keywords_per_object(&self) -> usize {
        ((self.r * self.keywords_per_topic as f64).ceil() as usize).clamp(1, self.keywords_per_topic)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub objects: Vec<GeoObject>,
    pub embeddings: EmbeddingStore,
    /// Keywords of each topic, sorted.
    pub topics: Vec<Vec<String>>,
    pub params: SynthParams,
}

fn stem(rng: &mut ChaCha8Rng) -> String {
    (0..STEM_LEN)
        .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char)
        .collect()
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn open_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    loop {
        let v = rng.random_range(lo..hi);
        if v > lo {
            return v;
        }
    }
}

pub fn generate_synthetic(params: &SynthParams) -> Result<SynthDataset> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut embeddings = EmbeddingStore::new(params.embedding_dimension);
    let noise = Normal::new(0.0, params.embedding_noise).map_err(|e| QdrError::InvalidParameter(e.to_string()))?;

    let mut stems = BTreeSet::new();
    let mut topics = Vec::with_capacity(params.topics);
    while topics.len() < params.topics {
        let s = stem(&mut rng);
        if !stems.insert(s.clone()) {
            continue;
        }
        let center = unit_gaussian(&mut rng, params.embedding_dimension);
        let mut words = Vec::with_capacity(params.keywords_per_topic);
        for i in sample(&mut rng, ALPHABET.len() * ALPHABET.len(), params.keywords_per_topic) {
            let word = format!(
                "{s}{}{}",
                ALPHABET[i / ALPHABET.len()] as char,
                ALPHABET[i % ALPHABET.len()] as char
            );
            let v: Vec<f64> = center.iter().map(|c| c + noise.sample(&mut rng)).collect();
            embeddings.insert(word.clone(), v)?;
            words.push(word);
        }
        words.sort();
        topics.push(words);
    }

    let attr = Normal::new(params.attr_mean, params.attr_std).map_err(|e| QdrError::InvalidParameter(e.to_string()))?;
    let per_object = params.keywords_per_object();
    let (lo, hi) = params.coord_range;
    let width = params.object_count.to_string().len();
    let mut objects = Vec::with_capacity(params.object_count);
    for i in 0..params.object_count {
        let location = Point::new(open_uniform(&mut rng, lo, hi), open_uniform(&mut rng, lo, hi));
        let topic = &topics[rng.random_range(0..topics.len())];
        let keywords: Vec<&String> = sample(&mut rng, topic.len(), per_object)
            .into_iter()
            .map(|k| &topic[k])
            .collect();
        let attributes = (0..params.attribute_dimension)
            .map(|_| attr.sample(&mut rng).clamp(0.0, 1.0))
            .collect();
        objects.push(GeoObject::new(format!("o{i:0width$}"), location, keywords, attributes)?);
    }

    Ok(SynthDataset {
        objects,
        embeddings,
        topics,
        params: params.clone(),
    })
}

/// Random queries: a location inside the data bounds, one to three keywords
/// from a single keyword group and random weights normalized to sum to one.
/// For synthetic data the groups are the topics; for other datasets they
/// are the objects' own keyword lists.
pub struct QueryGenerator {
    rng: ChaCha8Rng,
    groups: Vec<Vec<String>>,
    bounds: Mbr,
    attribute_dimension: usize,
    pub kappa: usize,
    pub d_max: f64,
    pub max_keywords: usize,
}

impl QueryGenerator {
    pub fn new(data: &SynthDataset, seed: u64) -> Self {
        let (lo, hi) = data.params.coord_range;
        let bounds = Mbr {
            min: Point::new(lo, lo),
            max: Point::new(hi, hi),
        };
        Self::with_groups(data.topics.clone(), bounds, data.params.attribute_dimension, seed)
    }

    /// Groups are the distinct keyword lists of `objects`, which must be
    /// non-empty.
    pub fn for_objects(objects: &[GeoObject], seed: u64) -> Self {
        let groups: BTreeSet<Vec<String>> = objects.iter().map(|o| o.keywords.clone()).collect();
        let bounds = Mbr::enclosing(objects.iter().map(|o| o.location)).expect("objects must be non-empty");
        Self::with_groups(groups.into_iter().collect(), bounds, objects[0].attributes.len(), seed)
    }

    fn with_groups(groups: Vec<Vec<String>>, bounds: Mbr, attribute_dimension: usize, seed: u64) -> Self {
        let d = bounds.diagonal();
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            groups,
            bounds,
            attribute_dimension,
            kappa: DEFAULT_KAPPA,
            d_max: if d > 0.0 { d } else { 1.0 },
            max_keywords: 3,
        }
    }

    pub fn next_query(&mut self) -> Query {
        let rng = &mut self.rng;
        let coord = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| if lo < hi { rng.random_range(lo..hi) } else { lo };
        let location = Point::new(
            coord(rng, self.bounds.min.x, self.bounds.max.x),
            coord(rng, self.bounds.min.y, self.bounds.max.y),
        );
        let group = &self.groups[rng.random_range(0..self.groups.len())];
        let n = rng.random_range(1..=self.max_keywords.min(group.len()).max(1));
        let keywords: Vec<&String> = sample(rng, group.len(), n).into_iter().map(|k| &group[k]).collect();
        let raw: Vec<f64> = (0..self.attribute_dimension)
            .map(|_| rng.random_range(0.05..1.0))
            .collect();
        let total: f64 = raw.iter().sum();
        let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        // Push the rounding residue into the last weight so the sum is 1
        // within validation tolerance.
        let rest: f64 = weights[..weights.len() - 1].iter().sum();
        *weights.last_mut().unwrap() = (1.0 - rest).max(0.0);
        Query::new(location, keywords, weights, self.kappa, self.d_max)
    }

    pub fn batch(&mut self, n: usize) -> Vec<Query> {
        (0..n).map(|_| self.next_query()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::write_objects;

    fn small(seed: u64) -> SynthParams {
        SynthParams {
            object_count: 500,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let bytes = |p: &SynthParams| {
            let d = generate_synthetic(p).unwrap();
            let mut buf = Vec::new();
            write_objects(&d.objects, &mut buf).unwrap();
            d.embeddings.write_text(&mut buf).unwrap();
            buf
        };
        assert_eq!(bytes(&small(3)), bytes(&small(3)));
        assert_ne!(bytes(&small(3)), bytes(&small(4)));
    }

    #[test]
    fn shape_follows_params() {
        let p = small(1);
        let d = generate_synthetic(&p).unwrap();
        assert_eq!(d.objects.len(), 500);
        assert_eq!(d.topics.len(), 16);
        for o in &d.objects {
            assert!(o.location.x > 0.0 && o.location.x < 10_000.0);
            assert!(o.location.y > 0.0 && o.location.y < 10_000.0);
            assert_eq!(o.keywords.len(), 4);
            assert_eq!(o.attributes.len(), 4);
            assert!(o.attributes.iter().all(|a| (0.0..=1.0).contains(a)));
            assert!(d.topics.iter().any(|t| o.keywords.iter().all(|k| t.contains(k))));
        }
    }

    #[test]
    fn attribute_mean_near_target() {
        let d = generate_synthetic(&SynthParams {
            object_count: 10_000,
            ..Default::default()
        })
        .unwrap();
        let all: Vec<f64> = d.objects.iter().flat_map(|o| o.attributes.iter().copied()).collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        assert!((0.45..=0.55).contains(&mean), "{mean}");
    }

    #[test]
    fn queries_are_valid() {
        let d = generate_synthetic(&small(2)).unwrap();
        let mut g = QueryGenerator::new(&d, 9);
        for q in g.batch(200) {
            q.validate().unwrap();
            assert!((1..=3).contains(&q.keywords.len()));
        }
        let mut g = QueryGenerator::for_objects(&d.objects, 9);
        for q in g.batch(50) {
            q.validate().unwrap();
            assert!(d.objects.iter().any(|o| q.keywords.iter().all(|k| o.has_keyword(k))));
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(generate_synthetic(&SynthParams { r: 0.0, ..small(1) }).is_err());
        assert!(generate_synthetic(&SynthParams {
            coord_range: (5.0, 5.0),
            ..small(1)
        })
        .is_err());
    }
}
