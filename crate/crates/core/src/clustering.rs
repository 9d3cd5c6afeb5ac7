//! Hierarchical quad clustering of the keyword universe.
//!
//! Each cluster that is still too wide is split four ways with kernel
//! k-means over the keyword distance. When a split produces a child tighter
//! than `tau_cluster`, keywords whose distances to the four sibling centers
//! have small variance are copied into every sibling.
//!
//! The split of a keyword set depends only on the set and the seed, never on
//! the thresholds or on traversal order, so raising `tau_cluster` only prunes
//! the tree and raising `tau_dup` only adds copies.

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QdrError, Result};
use crate::metric::{fnv1a, DistanceMatrix, KeywordMetric};

/// Fan-out of the cluster tree.
pub const QUAD: usize = 4;
pub const DEFAULT_TAU_CLUSTER: f64 = 0.3;
pub const DEFAULT_TAU_DUP: f64 = 0.05;
pub const DEFAULT_KERNEL_SIGMA: f64 = 0.5;
pub const DEFAULT_MAX_ITERS: usize = 50;
pub const DEFAULT_CLUSTER_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub tau_cluster: f64,
    pub tau_dup: f64,
    pub kernel_sigma: f64,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            tau_cluster: DEFAULT_TAU_CLUSTER,
            tau_dup: DEFAULT_TAU_DUP,
            kernel_sigma: DEFAULT_KERNEL_SIGMA,
            seed: DEFAULT_CLUSTER_SEED,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if self.tau_cluster.is_nan() || self.tau_cluster <= 0.0 {
            return Err(QdrError::InvalidParameter("tau_cluster must be positive".into()));
        }
        if !(0.0..).contains(&self.tau_dup) {
            return Err(QdrError::InvalidParameter("tau_dup must be non-negative".into()));
        }
        if self.kernel_sigma.is_nan() || self.kernel_sigma <= 0.0 {
            return Err(QdrError::InvalidParameter("kernel_sigma must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(QdrError::InvalidParameter("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Splits `members` (indices into `dist`) into `k` non-empty groups with
/// kernel k-means under the RBF kernel `exp(-d² / 2σ²)`.
///
/// Seeding is farthest-first in kernel space from a start point drawn from
/// an RNG keyed on `params.seed` and the member set. Groups come back sorted
/// internally and ordered by their smallest member.
pub fn kernel_kmeans(
    dist: &DistanceMatrix,
    members: &[usize],
    k: usize,
    params: &ClusterParams,
) -> Result<Vec<Vec<usize>>> {
    let n = members.len();
    if k == 0 || n < k {
        return Err(QdrError::TooFewKeywords {
            available: n,
            requested: k,
        });
    }
    let two_sigma_sq = 2.0 * params.kernel_sigma * params.kernel_sigma;
    let kernel: Vec<f64> = (0..n * n)
        .map(|ij| {
            let d = dist.get(members[ij / n], members[ij % n]);
            (-(d * d) / two_sigma_sq).exp()
        })
        .collect();
    let kx = |i: usize, j: usize| kernel[i * n + j];

    // farthest-first seeding in feature space, where |φ(x) − φ(y)|² = 2 − 2K(x, y)
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ member_hash(members));
    let mut seeds = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n)
        .map(|x| kx(x, x) + kx(seeds[0], seeds[0]) - 2.0 * kx(x, seeds[0]))
        .collect();
    while seeds.len() < k {
        let next = (0..n)
            .filter(|x| !seeds.contains(x))
            .max_by(|&a, &b| nearest[a].total_cmp(&nearest[b]).then(b.cmp(&a)))
            .expect("n >= k");
        seeds.push(next);
        for (x, near) in nearest.iter_mut().enumerate() {
            let d = kx(x, x) + kx(next, next) - 2.0 * kx(x, next);
            *near = near.min(d);
        }
    }

    let mut assign: Vec<usize> = (0..n)
        .map(|x| {
            (0..k)
                .min_by(|&a, &b| {
                    let da = 2.0 - 2.0 * kx(x, seeds[a]);
                    let db = 2.0 - 2.0 * kx(x, seeds[b]);
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .unwrap()
        })
        .collect();
    for (c, &s) in seeds.iter().enumerate() {
        assign[s] = c;
    }

    for _ in 0..params.max_iters {
        let dists = centroid_distances(&assign, k, n, &kx);
        let mut changed = false;
        for x in 0..n {
            let current = assign[x];
            let best = (0..k)
                .min_by(|&a, &b| dists[x * k + a].total_cmp(&dists[x * k + b]).then(a.cmp(&b)))
                .unwrap();
            if dists[x * k + best] < dists[x * k + current] {
                assign[x] = best;
                changed = true;
            }
        }
        changed |= repair_empty(&mut assign, k, n, &kx);
        if !changed {
            break;
        }
    }
    repair_empty(&mut assign, k, n, &kx);

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (x, &c) in assign.iter().enumerate() {
        groups[c].push(members[x]);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort_by_key(|g| g[0]);
    Ok(groups)
}

/// Squared feature-space distance from every point to every cluster mean,
/// laid out `[x * k + c]`. Empty clusters are at +infinity.
fn centroid_distances(assign: &[usize], k: usize, n: usize, kx: &impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut size = vec![0usize; k];
    for &c in assign {
        size[c] += 1;
    }
    let mut self_term = vec![0.0; k];
    for y in 0..n {
        for z in 0..n {
            if assign[y] == assign[z] {
                self_term[assign[y]] += kx(y, z);
            }
        }
    }
    let mut out = vec![f64::INFINITY; n * k];
    for x in 0..n {
        let mut cross = vec![0.0; k];
        for y in 0..n {
            cross[assign[y]] += kx(x, y);
        }
        for c in 0..k {
            if size[c] > 0 {
                let s = size[c] as f64;
                out[x * k + c] = kx(x, x) - 2.0 * cross[c] / s + self_term[c] / (s * s);
            }
        }
    }
    out
}

/// Moves the point farthest from its own mean (taken from clusters with at
/// least two members) into each empty cluster.
fn repair_empty(assign: &mut [usize], k: usize, n: usize, kx: &impl Fn(usize, usize) -> f64) -> bool {
    let mut changed = false;
    loop {
        let mut size = vec![0usize; k];
        for &c in assign.iter() {
            size[c] += 1;
        }
        let Some(empty) = (0..k).find(|&c| size[c] == 0) else {
            return changed;
        };
        let dists = centroid_distances(assign, k, n, kx);
        let donor = (0..n)
            .filter(|&x| size[assign[x]] >= 2)
            .max_by(|&a, &b| {
                dists[a * k + assign[a]]
                    .total_cmp(&dists[b * k + assign[b]])
                    .then(b.cmp(&a))
            })
            .expect("n >= k guarantees a donor");
        assign[donor] = empty;
        changed = true;
    }
}

fn member_hash(members: &[usize]) -> u64 {
    let bytes: Vec<u8> = members.iter().flat_map(|m| (*m as u64).to_le_bytes()).collect();
    fnv1a(&bytes)
}

/// Member minimizing the summed distance to all members; ties go to the
/// smallest index (lexicographic in a sorted vocabulary).
pub fn medoid(dist: &DistanceMatrix, members: &[usize]) -> usize {
    members
        .iter()
        .map(|&m| (m, members.iter().map(|&o| dist.get(m, o)).sum::<f64>()))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(m, _)| m)
        .expect("non-empty cluster")
}

pub fn diameter(dist: &DistanceMatrix, members: &[usize]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, &a) in members.iter().enumerate() {
        for &b in &members[i + 1..] {
            d = d.max(dist.get(a, b));
        }
    }
    d
}

/// For every keyword in the union of the four sets, copies it into all four
/// when the population variance of its distances to the four centers is
/// below `tau_dup`.
pub fn duplicate(
    dist: &DistanceMatrix,
    siblings: [&[usize]; QUAD],
    centers: [usize; QUAD],
    tau_dup: f64,
) -> [BTreeSet<usize>; QUAD] {
    let mut out: [BTreeSet<usize>; QUAD] = siblings.map(|s| s.iter().copied().collect());
    let union: BTreeSet<usize> = siblings.iter().flat_map(|s| s.iter().copied()).collect();
    for k in union {
        let d = centers.map(|c| dist.get(k, c));
        let mean = d.iter().sum::<f64>() / QUAD as f64;
        let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / QUAD as f64;
        if var < tau_dup {
            for set in &mut out {
                set.insert(k);
            }
        }
    }
    out
}

/// Why a cluster was not split further.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeafKind {
    /// Diameter below `tau_cluster`.
    Tight,
    /// Fewer than four keywords; exempt from the tightness bound.
    TooSmall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordCluster {
    /// Members assigned by clustering, sorted vocabulary indices.
    pub keywords: Vec<usize>,
    pub center: usize,
    /// Exact max pairwise distance over `keywords`.
    pub diameter: f64,
}

impl KeywordCluster {
    fn new(dist: &DistanceMatrix, keywords: Vec<usize>) -> Self {
        Self {
            center: medoid(dist, &keywords),
            diameter: diameter(dist, &keywords),
            keywords,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterNode {
    pub cluster: KeywordCluster,
    /// Keywords copied in by duplication (disjoint from `cluster.keywords`).
    /// Only leaves carry them; copies aimed at an internal node are routed
    /// down to its nearest-center leaf.
    pub duplicates: BTreeSet<usize>,
    pub children: Option<[usize; QUAD]>,
    pub leaf_kind: Option<LeafKind>,
}

impl ClusterNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    /// Clustered members plus duplicates, sorted.
    pub fn universe(&self) -> Vec<usize> {
        let mut all: BTreeSet<usize> = self.cluster.keywords.iter().copied().collect();
        all.extend(self.duplicates.iter().copied());
        all.into_iter().collect()
    }
}

/// The cluster tree. Node 0 is the root; children always have larger ids
/// than their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterHierarchy {
    pub vocab: Vec<String>,
    pub nodes: Vec<ClusterNode>,
}

impl ClusterHierarchy {
    pub fn root(&self) -> &ClusterNode {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, &ClusterNode)> {
        self.nodes.iter().enumerate().filter(|(_, n)| n.is_leaf())
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    /// Σ over leaves of universe size.
    pub fn keyword_occurrences(&self) -> usize {
        self.leaves()
            .map(|(_, n)| n.cluster.keywords.len() + n.duplicates.len())
            .sum()
    }

    pub fn words(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.vocab[i].clone()).collect()
    }
}

/// Builds the hierarchy over `vocab` (sorted, unique) with distances from
/// `metric`.
pub fn build_cluster_hierarchy(
    vocab: Vec<String>,
    metric: &KeywordMetric,
    params: &ClusterParams,
) -> Result<ClusterHierarchy> {
    let dist = metric.matrix(&vocab);
    build_from_matrix(vocab, &dist, params)
}

pub fn build_from_matrix(
    vocab: Vec<String>,
    dist: &DistanceMatrix,
    params: &ClusterParams,
) -> Result<ClusterHierarchy> {
    params.validate()?;
    if vocab.is_empty() {
        return Err(QdrError::EmptyUniverse);
    }
    debug_assert!(
        vocab.windows(2).all(|w| w[0] < w[1]),
        "vocabulary must be sorted and unique"
    );
    debug_assert_eq!(vocab.len(), dist.len());

    let leaf_kind = |c: &KeywordCluster| {
        if c.diameter < params.tau_cluster {
            Some(LeafKind::Tight)
        } else if c.keywords.len() < QUAD {
            Some(LeafKind::TooSmall)
        } else {
            None
        }
    };

    let root = KeywordCluster::new(dist, (0..vocab.len()).collect());
    let mut nodes = vec![ClusterNode {
        leaf_kind: leaf_kind(&root),
        cluster: root,
        duplicates: BTreeSet::new(),
        children: None,
    }];
    // copies waiting to be placed, per node
    let mut pending: Vec<BTreeSet<usize>> = vec![BTreeSet::new()];
    let mut queue = VecDeque::new();
    if nodes[0].leaf_kind.is_none() {
        queue.push_back(0);
    }

    while let Some(parent) = queue.pop_front() {
        let groups = kernel_kmeans(dist, &nodes[parent].cluster.keywords, QUAD, params)?;
        let first = nodes.len();
        for g in groups {
            let cluster = KeywordCluster::new(dist, g);
            let kind = leaf_kind(&cluster);
            if kind.is_none() {
                queue.push_back(nodes.len());
            }
            nodes.push(ClusterNode {
                cluster,
                duplicates: BTreeSet::new(),
                children: None,
                leaf_kind: kind,
            });
            pending.push(BTreeSet::new());
        }
        let ids = [first, first + 1, first + 2, first + 3];
        nodes[parent].children = Some(ids);

        if ids.iter().any(|&c| nodes[c].leaf_kind == Some(LeafKind::Tight)) {
            let sets = ids.map(|c| nodes[c].cluster.keywords.as_slice());
            let centers = ids.map(|c| nodes[c].cluster.center);
            let dup = duplicate(dist, sets, centers, params.tau_dup);
            for (slot, &c) in ids.iter().enumerate() {
                let own = &nodes[c].cluster.keywords;
                pending[c].extend(dup[slot].iter().filter(|k| own.binary_search(k).is_err()));
            }
        }
    }

    // parents precede children, so one forward pass settles every copy
    for id in 0..nodes.len() {
        let copies = std::mem::take(&mut pending[id]);
        match nodes[id].children {
            None => {
                let own = &nodes[id].cluster.keywords;
                let extra: Vec<usize> = copies.into_iter().filter(|k| own.binary_search(k).is_err()).collect();
                nodes[id].duplicates.extend(extra);
            }
            Some(children) => {
                for k in copies {
                    let target = *children
                        .iter()
                        .min_by(|&&a, &&b| {
                            let ca = nodes[a].cluster.center;
                            let cb = nodes[b].cluster.center;
                            dist.get(k, ca).total_cmp(&dist.get(k, cb)).then(ca.cmp(&cb))
                        })
                        .unwrap();
                    pending[target].insert(k);
                }
            }
        }
    }

    Ok(ClusterHierarchy { vocab, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("k{i:03}")).collect()
    }

    #[test]
    fn four_keywords_become_singletons() {
        let d = DistanceMatrix::from_fn(4, |i, j| 0.1 * (i + j) as f64);
        let p = kernel_kmeans(&d, &[0, 1, 2, 3], 4, &ClusterParams::default()).unwrap();
        assert_eq!(p, vec![vec![0], vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn too_few_keywords_is_an_error() {
        let d = DistanceMatrix::from_fn(3, |_, _| 0.5);
        assert!(matches!(
            kernel_kmeans(&d, &[0, 1, 2], 4, &ClusterParams::default()),
            Err(QdrError::TooFewKeywords { .. })
        ));
    }

    #[test]
    fn tight_universe_is_single_leaf() {
        let d = DistanceMatrix::from_fn(6, |_, _| 0.1);
        let h = build_from_matrix(vocab(6), &d, &ClusterParams::default()).unwrap();
        assert_eq!(h.nodes.len(), 1);
        assert_eq!(h.root().leaf_kind, Some(LeafKind::Tight));
    }

    #[test]
    fn small_universe_is_forced_leaf() {
        let d = DistanceMatrix::from_fn(3, |_, _| 0.9);
        let h = build_from_matrix(vocab(3), &d, &ClusterParams::default()).unwrap();
        assert_eq!(h.root().leaf_kind, Some(LeafKind::TooSmall));
    }

    #[test]
    fn duplication_boundaries() {
        let d = DistanceMatrix::from_fn(5, |i, j| if i == 4 || j == 4 { 0.6 } else { 0.9 });
        let sets: [&[usize]; 4] = [&[0, 4], &[1], &[2], &[3]];
        let none = duplicate(&d, sets, [0, 1, 2, 3], 0.0);
        assert_eq!(none.map(|s| s.len()), [2, 1, 1, 1]);
        // keyword 4 is equidistant from all four centers: zero variance
        let some = duplicate(&d, sets, [0, 1, 2, 3], 1e-9);
        assert!(some.iter().all(|s| s.contains(&4)));
        assert!(!some[1].contains(&0));
    }

    #[test]
    fn hierarchy_is_deterministic_and_covers() {
        let d = DistanceMatrix::from_fn(40, |i, j| {
            let (a, b) = (i % 5, j % 5);
            if a == b {
                0.05 + 0.001 * ((i + j) % 7) as f64
            } else {
                0.7 + 0.01 * ((i * j) % 9) as f64
            }
        });
        let p = ClusterParams::default();
        let h1 = build_from_matrix(vocab(40), &d, &p).unwrap();
        let h2 = build_from_matrix(vocab(40), &d, &p).unwrap();
        assert_eq!(h1, h2);
        let covered: BTreeSet<usize> = h1.leaves().flat_map(|(_, n)| n.universe()).collect();
        assert_eq!(covered, (0..40).collect());
        for (_, leaf) in h1.leaves() {
            if leaf.leaf_kind == Some(LeafKind::Tight) {
                assert!(leaf.cluster.diameter < p.tau_cluster);
            }
        }
        for n in &h1.nodes {
            if let Some(c) = n.children {
                assert!(c.iter().all(|&c| !h1.nodes[c].cluster.keywords.is_empty()));
            }
        }
    }
}
