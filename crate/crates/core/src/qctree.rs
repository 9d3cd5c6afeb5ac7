//! The keyword-cluster layer: a quad tree mirroring the cluster hierarchy,
//! with one DR-tree hanging off every leaf.

use std::collections::BTreeSet;

use crate::clustering::{ClusterHierarchy, LeafKind, QUAD};
use crate::drtree::{DrParams, DrTree};
use crate::error::{QdrError, Result};
use crate::metric::KeywordDistance;
use crate::model::GeoObject;

#[derive(Debug, Clone, PartialEq)]
pub struct QcLeaf {
    /// Keywords the clustering assigned here.
    pub core: Vec<String>,
    /// Keywords copied in by duplication.
    pub duplicates: Vec<String>,
    /// Diameter of `core`.
    pub diameter: f64,
    pub kind: LeafKind,
    /// Sorted `core ∪ duplicates`; bit `i` of every bitmap in `tree` is
    /// `universe[i]`.
    pub universe: Vec<String>,
    pub tree: DrTree,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QcNodeKind {
    Internal { children: [usize; QUAD] },
    Leaf(Box<QcLeaf>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcNode {
    /// Medoid keyword of the cluster this node stands for.
    pub center: String,
    pub kind: QcNodeKind,
}

impl QcNode {
    pub fn leaf(&self) -> Option<&QcLeaf> {
        match &self.kind {
            QcNodeKind::Leaf(l) => Some(l),
            QcNodeKind::Internal { .. } => None,
        }
    }
}

/// Node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct QcTree {
    pub(crate) nodes: Vec<QcNode>,
    pub(crate) leaves: Vec<usize>,
}

impl QcTree {
    /// Mirrors `hierarchy` and indexes every object in each leaf whose
    /// universe shares at least one of its keywords. `objects[i]` is stored
    /// as object id `i`.
    pub fn build(hierarchy: &ClusterHierarchy, objects: &[GeoObject], params: DrParams) -> Result<Self> {
        let mut nodes = Vec::with_capacity(hierarchy.nodes.len());
        let mut leaves = Vec::new();
        let mut placed = vec![false; objects.len()];

        for (id, cn) in hierarchy.nodes.iter().enumerate() {
            let center = hierarchy.vocab[cn.cluster.center].clone();
            let kind = match cn.children {
                Some(children) => QcNodeKind::Internal { children },
                None => {
                    let universe = hierarchy.words(&cn.universe());
                    let members: Vec<(u32, &GeoObject)> = objects
                        .iter()
                        .enumerate()
                        .filter(|(_, o)| o.keywords.iter().any(|k| universe.binary_search(k).is_ok()))
                        .map(|(i, o)| (i as u32, o))
                        .collect();
                    for (i, _) in &members {
                        placed[*i as usize] = true;
                    }
                    let tree = DrTree::bulk_build(members, &universe, params);
                    leaves.push(id);
                    QcNodeKind::Leaf(Box::new(QcLeaf {
                        core: hierarchy.words(&cn.cluster.keywords),
                        duplicates: hierarchy.words(&cn.duplicates.iter().copied().collect::<Vec<_>>()),
                        diameter: cn.cluster.diameter,
                        kind: cn.leaf_kind.unwrap_or(LeafKind::Tight),
                        universe,
                        tree,
                    }))
                }
            };
            nodes.push(QcNode { center, kind });
        }

        if let Some(i) = placed.iter().position(|p| !p) {
            return Err(QdrError::UnplacedObject(objects[i].id.clone()));
        }
        Ok(Self { nodes, leaves })
    }

    pub(crate) fn from_parts(nodes: Vec<QcNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(QdrError::Corrupt("cluster tree has no nodes".into()));
        }
        let leaves = (0..nodes.len()).filter(|&i| nodes[i].leaf().is_some()).collect();
        for n in &nodes {
            if let QcNodeKind::Internal { children } = &n.kind {
                if children.iter().any(|&c| c >= nodes.len()) {
                    return Err(QdrError::Corrupt("cluster child out of range".into()));
                }
            }
        }
        Ok(Self { nodes, leaves })
    }

    pub fn nodes(&self) -> &[QcNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &QcNode {
        &self.nodes[id]
    }

    /// Leaf node ids in ascending order.
    pub fn leaf_ids(&self) -> &[usize] {
        &self.leaves
    }

    pub fn leaf(&self, id: usize) -> &QcLeaf {
        self.nodes[id].leaf().expect("not a leaf node")
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Root-to-leaf path for one keyword, taking the child with the nearest
    /// center at every level (ties: smaller center keyword).
    pub fn descend(&self, keyword: &str, metric: &impl KeywordDistance) -> Vec<usize> {
        let mut path = vec![0];
        let mut at = 0;
        while let QcNodeKind::Internal { children } = &self.nodes[at].kind {
            at = children
                .iter()
                .map(|&c| (c, metric.distance(keyword, &self.nodes[c].center)))
                .min_by(|a, b| {
                    a.1.total_cmp(&b.1)
                        .then_with(|| self.nodes[a.0].center.cmp(&self.nodes[b.0].center))
                })
                .map(|(c, _)| c)
                .unwrap();
            path.push(at);
        }
        path
    }

    /// Union of the leaves reached by each query keyword, ascending.
    pub fn find_leaf_cluster<S: AsRef<str>>(&self, keywords: &[S], metric: &impl KeywordDistance) -> Vec<usize> {
        let reached: BTreeSet<usize> = keywords
            .iter()
            .map(|k| *self.descend(k.as_ref(), metric).last().unwrap())
            .collect();
        reached.into_iter().collect()
    }

    pub fn node_count(&self) -> usize {
        self.leaves.iter().map(|&l| self.leaf(l).tree.node_count()).sum()
    }

    /// Σ over leaves of universe size.
    pub fn keyword_occurrences(&self) -> usize {
        self.leaves.iter().map(|&l| self.leaf(l).universe.len()).sum()
    }
}
