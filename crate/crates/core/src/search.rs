//! Query processing: locate leaf clusters, relax the query bitmap per leaf,
//! run best-first search over each leaf's DR-tree, merge.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bitmap::{relax_query, KeywordBitmap};
use crate::drtree::{min_dist, DrChildren, DrNode, DrTree};
use crate::error::{QdrError, Result};
use crate::index::QdrIndex;
use crate::model::{euclidean_distance, weighted_sum, Query, ScoreParams, ScoredResult};
use crate::skyline::min_weighted_attribute;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Tree nodes popped and expanded; the stand-in for disk reads.
    pub node_accesses: u64,
    pub objects_scored: u64,
    /// Trees actually traversed.
    pub leaves_searched: u64,
    #[serde(with = "micros")]
    pub elapsed: Duration,
}

impl SearchStats {
    pub fn absorb(&mut self, other: &SearchStats) {
        self.node_accesses += other.node_accesses;
        self.objects_scored += other.objects_scored;
        self.leaves_searched += other.leaves_searched;
    }
}

mod micros {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_micros(u64::deserialize(d)?))
    }
}

/// A heap entry. Equal keys pop nodes before objects, so an object is only
/// emitted once no unexpanded node can still hold a tie with a smaller id.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HeapItem {
    pub key: f64,
    pub is_object: bool,
    pub id: u32,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .total_cmp(&other.key)
            .then(self.is_object.cmp(&other.is_object))
            .then(self.id.cmp(&other.id))
    }
}

/// Running κ-th best `(score, object)` among objects pushed so far. Entries
/// worse than it cannot reach the answer.
pub(crate) struct KthBest {
    kappa: usize,
    best: BinaryHeap<(OrdF64, u32)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct OrdF64(pub f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl KthBest {
    pub fn new(kappa: usize) -> Self {
        Self {
            kappa,
            best: BinaryHeap::with_capacity(kappa + 1),
        }
    }

    fn kth(&self) -> Option<(OrdF64, u32)> {
        (self.best.len() >= self.kappa).then(|| *self.best.peek().unwrap())
    }

    pub fn admits_bound(&self, bound: f64) -> bool {
        self.kth().is_none_or(|(s, _)| bound <= s.0)
    }

    pub fn admits_object(&self, score: f64, id: u32) -> bool {
        self.kth().is_none_or(|k| (OrdF64(score), id) < k)
    }

    pub fn offer(&mut self, score: f64, id: u32) {
        self.best.push((OrdF64(score), id));
        if self.best.len() > self.kappa {
            self.best.pop();
        }
    }
}

/// One object found in one DR-tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafHit {
    pub object: u32,
    pub score: f64,
    pub distance: f64,
    pub phi: u32,
    pub attribute_term: f64,
}

/// Lower bound on any object score below `node` for this query bitmap.
pub fn node_bound(q: &Query, params: &ScoreParams, bmr: &KeywordBitmap, node: &DrNode) -> f64 {
    let phi = bmr.and_count(&node.kb);
    if phi == 0 {
        return f64::INFINITY;
    }
    let attr = min_weighted_attribute(&node.sp, &q.weights).unwrap_or(0.0);
    params.combine(min_dist(q.location, &node.mbr), phi, attr)
}

/// Exact top-κ of one DR-tree by best-first traversal. `bmr` must be the
/// query bitmap relaxed against this tree's universe.
pub fn best_first_leaf_search(q: &Query, bmr: &KeywordBitmap, tree: &DrTree, stats: &mut SearchStats) -> Vec<LeafHit> {
    let kappa = q.kappa;
    let Some(root) = tree.root_id() else {
        return Vec::new();
    };
    if kappa == 0 {
        return Vec::new();
    }
    let params = q.score_params();
    stats.leaves_searched += 1;

    let mut heap = BinaryHeap::new();
    let mut pending: BTreeMap<u32, LeafHit> = BTreeMap::new();
    let mut threshold = KthBest::new(kappa);
    let mut out = Vec::with_capacity(kappa);
    heap.push(Reverse(HeapItem {
        key: 0.0,
        is_object: false,
        id: root,
    }));

    while let Some(Reverse(item)) = heap.pop() {
        if item.is_object {
            out.push(pending.remove(&item.id).expect("scored object"));
            if out.len() >= kappa {
                break;
            }
            continue;
        }
        stats.node_accesses += 1;
        match &tree.node(item.id).children {
            DrChildren::Nodes(children) => {
                for &c in children {
                    let bound = node_bound(q, &params, bmr, tree.node(c));
                    if bound.is_finite() && threshold.admits_bound(bound) {
                        heap.push(Reverse(HeapItem {
                            key: bound,
                            is_object: false,
                            id: c,
                        }));
                    }
                }
            }
            DrChildren::Entries(entries) => {
                for &e in entries {
                    let entry = tree.entry(e);
                    let phi = bmr.and_count(&entry.kb);
                    if phi == 0 {
                        continue;
                    }
                    stats.objects_scored += 1;
                    let distance = euclidean_distance(q.location, entry.location);
                    let attribute_term = weighted_sum(&q.weights, &entry.attributes);
                    let score = params.combine(distance, phi, attribute_term);
                    if !threshold.admits_object(score, entry.object) {
                        continue;
                    }
                    threshold.offer(score, entry.object);
                    pending.insert(
                        entry.object,
                        LeafHit {
                            object: entry.object,
                            score,
                            distance,
                            phi,
                            attribute_term,
                        },
                    );
                    heap.push(Reverse(HeapItem {
                        key: score,
                        is_object: true,
                        id: entry.object,
                    }));
                }
            }
        }
    }
    out
}

/// Keeps each object's best hit, then the κ best by `(score, object)`.
pub(crate) fn merge_hits(hits: impl IntoIterator<Item = LeafHit>, kappa: usize) -> Vec<LeafHit> {
    let mut best: BTreeMap<u32, LeafHit> = BTreeMap::new();
    for h in hits {
        best.entry(h.object)
            .and_modify(|b| {
                if h.score < b.score {
                    *b = h;
                }
            })
            .or_insert(h);
    }
    let mut all: Vec<LeafHit> = best.into_values().collect();
    all.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.object.cmp(&b.object)));
    all.truncate(kappa);
    all
}

pub(crate) fn check_query(q: &Query, index: &QdrIndex) -> Result<()> {
    q.validate()?;
    if q.weights.len() != index.attribute_dimension() {
        return Err(QdrError::DimensionMismatch {
            expected: index.attribute_dimension(),
            actual: q.weights.len(),
        });
    }
    Ok(())
}

/// Answers `q` over every leaf cluster its keywords route to.
pub fn qdr_search(q: &Query, index: &QdrIndex) -> Result<(Vec<ScoredResult>, SearchStats)> {
    check_query(q, index)?;
    let started = Instant::now();
    let mut stats = SearchStats::default();
    if q.kappa == 0 {
        return Ok((Vec::new(), stats));
    }
    let tree = index.tree();
    let mut hits = Vec::new();
    for leaf_id in tree.find_leaf_cluster(&q.keywords, index.metric()) {
        let leaf = tree.leaf(leaf_id);
        if leaf.tree.is_empty() {
            continue;
        }
        let bmr = relax_query(&q.keywords, &leaf.universe, q.tau_relax, index.metric());
        if bmr.is_zero() {
            continue;
        }
        hits.extend(best_first_leaf_search(q, &bmr, &leaf.tree, &mut stats));
    }
    let results = merge_hits(hits, q.kappa)
        .into_iter()
        .map(|h| to_result(index, h))
        .collect();
    stats.elapsed = started.elapsed();
    Ok((results, stats))
}

pub(crate) fn to_result(index: &QdrIndex, h: LeafHit) -> ScoredResult {
    ScoredResult {
        id: index.object(h.object).id.clone(),
        score: h.score,
        distance: h.distance,
        phi: h.phi,
        attribute_term: h.attribute_term,
    }
}
