//! Reference searchers: the exhaustive linear scan every other engine is
//! checked against, and two index baselines that each ignore one side of
//! the problem.
//!
//! - [`PerKeywordIndex`]: one plain R-tree per keyword, searched for every
//!   keyword the query relaxes to, merged afterwards.
//! - [`KeywordOnlyIndex`]: a single R-tree with keyword bitmaps but no
//!   attribute summaries; candidates come out in spatial+keyword order and
//!   are re-ranked by the full score.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::time::Instant;

use crate::bitmap::{encode, KeywordBitmap};
use crate::drtree::{min_dist, str_groups, DrChildren, DrEntry, DrParams, DrTree, Mbr};
use crate::error::{QdrError, Result};
use crate::index::QdrIndex;
use crate::metric::KeywordDistance;
use crate::model::{
    euclidean_distance, score_object, sort_results, weighted_sum, GeoObject, Point, Query, ScoredResult,
};
use crate::search::{merge_hits, HeapItem, KthBest, LeafHit, SearchStats};

/// Universe keywords a query counts as matches: the query's own keywords
/// plus everything strictly closer than `tau` to one of them.
pub fn relaxed_keywords<'u>(
    query_keywords: &[String],
    universe: &'u [String],
    tau: f64,
    metric: &impl KeywordDistance,
) -> BTreeSet<&'u str> {
    universe
        .iter()
        .filter(|u| query_keywords.iter().any(|k| k == *u || metric.distance(k, u) < tau))
        .map(String::as_str)
        .collect()
}

fn oracle_rank<'a>(
    q: &Query,
    objects: impl IntoIterator<Item = &'a GeoObject>,
    relevant: &BTreeSet<&str>,
) -> Result<Vec<ScoredResult>> {
    let mut out = Vec::new();
    for o in objects {
        let phi = o.keywords.iter().filter(|k| relevant.contains(k.as_str())).count() as u32;
        let score = score_object(q, o, phi)?;
        if score.is_finite() {
            out.push(ScoredResult {
                id: o.id.clone(),
                score,
                distance: euclidean_distance(q.location, o.location),
                phi,
                attribute_term: weighted_sum(&q.weights, &o.attributes),
            });
        }
    }
    sort_results(&mut out);
    out.truncate(q.kappa);
    Ok(out)
}

fn dataset_universe(objects: &[GeoObject]) -> Vec<String> {
    objects
        .iter()
        .flat_map(|o| o.keywords.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Exact top-κ by scoring every object, with keyword relevance relaxed over
/// the whole dataset's keyword universe.
pub fn linear_scan(q: &Query, objects: &[GeoObject], metric: &impl KeywordDistance) -> Result<Vec<ScoredResult>> {
    q.validate()?;
    let universe = dataset_universe(objects);
    let relevant = relaxed_keywords(&q.keywords, &universe, q.tau_relax, metric);
    oracle_rank(q, objects, &relevant)
}

/// Linear scan over the objects of the leaves `q` routes to, each leaf
/// judging keyword relevance against its own universe and every object
/// keeping its best score across leaves. This is the answer set the
/// two-layer index promises.
pub fn scoped_linear_scan(q: &Query, index: &QdrIndex) -> Result<Vec<ScoredResult>> {
    q.validate()?;
    let tree = index.tree();
    let mut best: BTreeMap<String, ScoredResult> = BTreeMap::new();
    let scoped = Query {
        kappa: usize::MAX,
        ..q.clone()
    };
    for leaf_id in tree.find_leaf_cluster(&q.keywords, index.metric()) {
        let leaf = tree.leaf(leaf_id);
        let relevant = relaxed_keywords(&q.keywords, &leaf.universe, q.tau_relax, index.metric());
        let members = leaf.tree.entries().iter().map(|e| index.object(e.object));
        let scoped_members: Vec<GeoObject> = members
            .map(|o| GeoObject {
                keywords: o
                    .keywords
                    .iter()
                    .filter(|k| leaf.universe.binary_search(k).is_ok())
                    .cloned()
                    .collect(),
                ..o.clone()
            })
            .collect();
        for r in oracle_rank(&scoped, &scoped_members, &relevant)? {
            match best.get(&r.id) {
                Some(b) if b.score <= r.score => {}
                _ => {
                    best.insert(r.id.clone(), r);
                }
            }
        }
    }
    let mut out: Vec<ScoredResult> = best.into_values().collect();
    sort_results(&mut out);
    out.truncate(q.kappa);
    Ok(out)
}

fn index_objects(mut objects: Vec<GeoObject>) -> Result<Vec<GeoObject>> {
    if objects.is_empty() {
        return Err(QdrError::InvalidParameter("cannot index an empty dataset".into()));
    }
    objects.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = objects.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(QdrError::DuplicateId(w[0].id.clone()));
    }
    Ok(objects)
}

fn check_dims(q: &Query, objects: &[GeoObject]) -> Result<()> {
    q.validate()?;
    let dim = objects[0].attributes.len();
    if q.weights.len() != dim {
        return Err(QdrError::DimensionMismatch {
            expected: dim,
            actual: q.weights.len(),
        });
    }
    Ok(())
}

fn relaxed_bitmap(q: &Query, universe: &[String], metric: &impl KeywordDistance) -> KeywordBitmap {
    let mut b = KeywordBitmap::zeros(universe.len());
    for (i, u) in universe.iter().enumerate() {
        if q.keywords.iter().any(|k| k == u || metric.distance(k, u) < q.tau_relax) {
            b.set(i);
        }
    }
    b
}

#[derive(Debug, Clone)]
struct PlainNode {
    mbr: Mbr,
    children: DrChildren,
}

/// R-tree with nothing but MBRs. Leaf children index the owner's object
/// table directly.
#[derive(Debug, Clone)]
struct PlainRTree {
    nodes: Vec<PlainNode>,
    root: u32,
}

impl PlainRTree {
    fn build(members: &[u32], objects: &[GeoObject], m: usize) -> Self {
        let mut nodes = Vec::new();
        let centers: Vec<Point> = members.iter().map(|&i| objects[i as usize].location).collect();
        let mut level: Vec<u32> = str_groups(&centers, m)
            .into_iter()
            .map(|g| {
                let ids: Vec<u32> = g.into_iter().map(|i| members[i]).collect();
                let mbr = Mbr::enclosing(ids.iter().map(|&i| objects[i as usize].location)).unwrap();
                nodes.push(PlainNode {
                    mbr,
                    children: DrChildren::Entries(ids),
                });
                (nodes.len() - 1) as u32
            })
            .collect();
        while level.len() > 1 {
            let centers: Vec<Point> = level.iter().map(|&n| nodes[n as usize].mbr.center()).collect();
            level = str_groups(&centers, m)
                .into_iter()
                .map(|g| {
                    let ids: Vec<u32> = g.into_iter().map(|i| level[i]).collect();
                    let mut mbr = nodes[ids[0] as usize].mbr;
                    for &c in &ids {
                        mbr.expand(&nodes[c as usize].mbr);
                    }
                    nodes.push(PlainNode {
                        mbr,
                        children: DrChildren::Nodes(ids),
                    });
                    (nodes.len() - 1) as u32
                })
                .collect();
        }
        Self { nodes, root: level[0] }
    }
}

/// One plain R-tree per keyword; an object appears in the tree of each of
/// its keywords.
#[derive(Debug, Clone)]
pub struct PerKeywordIndex {
    objects: Vec<GeoObject>,
    vocab: Vec<String>,
    object_bits: Vec<KeywordBitmap>,
    trees: Vec<PlainRTree>,
}

impl PerKeywordIndex {
    pub fn build(objects: Vec<GeoObject>, params: DrParams) -> Result<Self> {
        let objects = index_objects(objects)?;
        let vocab = dataset_universe(&objects);
        let object_bits: Vec<KeywordBitmap> = objects.iter().map(|o| encode(&o.keywords, &vocab)).collect();
        let mut postings: Vec<Vec<u32>> = vec![Vec::new(); vocab.len()];
        for (i, b) in object_bits.iter().enumerate() {
            for k in b.iter_ones() {
                postings[k].push(i as u32);
            }
        }
        let trees = postings
            .iter()
            .map(|p| PlainRTree::build(p, &objects, params.max_entries))
            .collect();
        Ok(Self {
            objects,
            vocab,
            object_bits,
            trees,
        })
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }

    /// Searches the tree of every relaxed-match keyword for its own top-κ
    /// and merges. Node bounds know nothing about attributes and assume every
    /// relaxed keyword matches.
    pub fn search(&self, q: &Query, metric: &impl KeywordDistance) -> Result<(Vec<ScoredResult>, SearchStats)> {
        check_dims(q, &self.objects)?;
        let started = Instant::now();
        let mut stats = SearchStats::default();
        if q.kappa == 0 {
            return Ok((Vec::new(), stats));
        }
        let params = q.score_params();
        let relevant = relaxed_bitmap(q, &self.vocab, metric);
        let phi_ceiling = relevant.count_ones();
        let mut hits = Vec::new();

        for k in relevant.iter_ones() {
            let tree = &self.trees[k];
            stats.leaves_searched += 1;
            let mut heap = BinaryHeap::new();
            let mut threshold = KthBest::new(q.kappa);
            let mut pending: BTreeMap<u32, LeafHit> = BTreeMap::new();
            let mut found = 0;
            heap.push(Reverse(HeapItem {
                key: 0.0,
                is_object: false,
                id: tree.root,
            }));
            while let Some(Reverse(item)) = heap.pop() {
                if item.is_object {
                    hits.push(pending.remove(&item.id).unwrap());
                    found += 1;
                    if found >= q.kappa {
                        break;
                    }
                    continue;
                }
                stats.node_accesses += 1;
                match &tree.nodes[item.id as usize].children {
                    DrChildren::Nodes(children) => {
                        for &c in children {
                            let bound =
                                params.combine(min_dist(q.location, &tree.nodes[c as usize].mbr), phi_ceiling, 0.0);
                            if threshold.admits_bound(bound) {
                                heap.push(Reverse(HeapItem {
                                    key: bound,
                                    is_object: false,
                                    id: c,
                                }));
                            }
                        }
                    }
                    DrChildren::Entries(members) => {
                        for &o in members {
                            let obj = &self.objects[o as usize];
                            let phi = relevant.and_count(&self.object_bits[o as usize]);
                            stats.objects_scored += 1;
                            let distance = euclidean_distance(q.location, obj.location);
                            let attribute_term = weighted_sum(&q.weights, &obj.attributes);
                            let score = params.combine(distance, phi, attribute_term);
                            if !threshold.admits_object(score, o) {
                                continue;
                            }
                            threshold.offer(score, o);
                            pending.insert(
                                o,
                                LeafHit {
                                    object: o,
                                    score,
                                    distance,
                                    phi,
                                    attribute_term,
                                },
                            );
                            heap.push(Reverse(HeapItem {
                                key: score,
                                is_object: true,
                                id: o,
                            }));
                        }
                    }
                }
            }
        }

        let results = merge_hits(hits, q.kappa)
            .into_iter()
            .map(|h| hit_result(&self.objects, h))
            .collect();
        stats.elapsed = started.elapsed();
        Ok((results, stats))
    }
}

fn hit_result(objects: &[GeoObject], h: LeafHit) -> ScoredResult {
    ScoredResult {
        id: objects[h.object as usize].id.clone(),
        score: h.score,
        distance: h.distance,
        phi: h.phi,
        attribute_term: h.attribute_term,
    }
}

/// A single R-tree over all objects with keyword bitmaps on every node.
/// Attribute values are not consulted until candidates are re-ranked.
#[derive(Debug, Clone)]
pub struct KeywordOnlyIndex {
    objects: Vec<GeoObject>,
    vocab: Vec<String>,
    tree: DrTree,
}

impl KeywordOnlyIndex {
    pub fn build(objects: Vec<GeoObject>, params: DrParams) -> Result<Self> {
        let objects = index_objects(objects)?;
        let vocab = dataset_universe(&objects);
        let entries = objects
            .iter()
            .enumerate()
            .map(|(i, o)| DrEntry {
                object: i as u32,
                location: o.location,
                attributes: o.attributes.clone(),
                kb: encode(&o.keywords, &vocab),
            })
            .collect();
        let tree = DrTree::from_entries(entries, vocab.len(), params);
        Ok(Self { objects, vocab, tree })
    }

    pub fn node_count(&self) -> usize {
        self.tree.node_count()
    }

    /// Best-first extraction by the spatial and keyword terms only; each
    /// extracted candidate is re-ranked with the full score, stopping once
    /// no remaining entry can beat the κ-th re-ranked candidate.
    /// `objects_scored` counts the candidates extracted.
    pub fn search(&self, q: &Query, metric: &impl KeywordDistance) -> Result<(Vec<ScoredResult>, SearchStats)> {
        check_dims(q, &self.objects)?;
        let started = Instant::now();
        let mut stats = SearchStats::default();
        let Some(root) = self.tree.root_id() else {
            return Ok((Vec::new(), stats));
        };
        if q.kappa == 0 {
            return Ok((Vec::new(), stats));
        }
        let params = q.score_params();
        let bmr = relaxed_bitmap(q, &self.vocab, metric);
        stats.leaves_searched = 1;

        let mut heap = BinaryHeap::new();
        let mut top = KthBest::new(q.kappa);
        let mut candidates = Vec::new();
        heap.push(Reverse(HeapItem {
            key: 0.0,
            is_object: false,
            id: root,
        }));
        while let Some(Reverse(item)) = heap.pop() {
            if !top.admits_bound(item.key) {
                break;
            }
            if item.is_object {
                let entry = self.tree.entry(item.id);
                let o = &self.objects[entry.object as usize];
                let phi = bmr.and_count(&entry.kb);
                let distance = euclidean_distance(q.location, o.location);
                let attribute_term = weighted_sum(&q.weights, &o.attributes);
                let score = params.combine(distance, phi, attribute_term);
                stats.objects_scored += 1;
                if top.admits_object(score, entry.object) {
                    top.offer(score, entry.object);
                }
                candidates.push(LeafHit {
                    object: entry.object,
                    score,
                    distance,
                    phi,
                    attribute_term,
                });
                continue;
            }
            stats.node_accesses += 1;
            match &self.tree.node(item.id).children {
                DrChildren::Nodes(children) => {
                    for &c in children {
                        let node = self.tree.node(c);
                        let phi = bmr.and_count(&node.kb);
                        let bound = params.combine(min_dist(q.location, &node.mbr), phi, 0.0);
                        if bound.is_finite() {
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
                        let entry = self.tree.entry(e);
                        let phi = bmr.and_count(&entry.kb);
                        let partial = params.combine(euclidean_distance(q.location, entry.location), phi, 0.0);
                        if partial.is_finite() {
                            heap.push(Reverse(HeapItem {
                                key: partial,
                                is_object: true,
                                id: e,
                            }));
                        }
                    }
                }
            }
        }

        let results = merge_hits(candidates, q.kappa)
            .into_iter()
            .map(|h| hit_result(&self.objects, h))
            .collect();
        stats.elapsed = started.elapsed();
        Ok((results, stats))
    }
}
