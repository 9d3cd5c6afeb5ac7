use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::clustering::{build_cluster_hierarchy, ClusterParams};
use crate::drtree::{DrParams, Mbr};
use crate::error::{QdrError, Result};
use crate::metric::{EmbeddingStore, KeywordMetric, MetricParams};
use crate::model::{GeoObject, Query, ScoredResult};
use crate::qctree::QcTree;
use crate::search::{qdr_search, SearchStats};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IndexParams {
    pub metric: MetricParams,
    pub cluster: ClusterParams,
    pub dr: DrParams,
}

/// A built index: objects, the keyword metric it was clustered with, and
/// the two-layer tree.
#[derive(Debug, Clone, PartialEq)]
pub struct QdrIndex {
    pub(crate) params: IndexParams,
    pub(crate) metric: KeywordMetric,
    /// Sorted by id; position doubles as the internal object id.
    pub(crate) objects: Vec<GeoObject>,
    pub(crate) tree: QcTree,
    pub(crate) bounds: Mbr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub objects: usize,
    pub attribute_dimension: usize,
    pub universe_size: usize,
    pub cluster_nodes: usize,
    pub leaf_count: usize,
    pub empty_leaves: usize,
    pub dr_nodes: usize,
    pub indexed_entries: usize,
    pub keyword_occurrences: usize,
    /// Leaf keyword occurrences per distinct keyword.
    pub duplication_ratio: f64,
    pub max_dr_height: usize,
    pub bounds: Mbr,
}

impl QdrIndex {
    pub fn build(mut objects: Vec<GeoObject>, store: EmbeddingStore, params: IndexParams) -> Result<Self> {
        if objects.is_empty() {
            return Err(QdrError::InvalidParameter("cannot index an empty dataset".into()));
        }
        objects.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = objects.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(QdrError::DuplicateId(w[0].id.clone()));
        }
        let dim = objects[0].attributes.len();
        if let Some(o) = objects.iter().find(|o| o.attributes.len() != dim) {
            return Err(QdrError::DimensionMismatch {
                expected: dim,
                actual: o.attributes.len(),
            });
        }

        let vocab: Vec<String> = objects
            .iter()
            .flat_map(|o| o.keywords.iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut store = store;
        store.materialize(vocab.iter().map(String::as_str));
        let metric = KeywordMetric::new(params.metric, store);

        let hierarchy = build_cluster_hierarchy(vocab, &metric, &params.cluster)?;
        let tree = QcTree::build(&hierarchy, &objects, params.dr)?;
        let bounds = Mbr::enclosing(objects.iter().map(|o| o.location)).expect("non-empty");
        Ok(Self {
            params,
            metric,
            objects,
            tree,
            bounds,
        })
    }

    pub fn params(&self) -> &IndexParams {
        &self.params
    }

    pub fn metric(&self) -> &KeywordMetric {
        &self.metric
    }

    pub fn objects(&self) -> &[GeoObject] {
        &self.objects
    }

    pub fn object(&self, id: u32) -> &GeoObject {
        &self.objects[id as usize]
    }

    pub fn tree(&self) -> &QcTree {
        &self.tree
    }

    pub fn bounds(&self) -> Mbr {
        self.bounds
    }

    pub fn attribute_dimension(&self) -> usize {
        self.objects[0].attributes.len()
    }

    /// Default `d_max`: diagonal of the dataset's bounding rectangle.
    pub fn default_d_max(&self) -> f64 {
        let d = self.bounds.diagonal();
        if d > 0.0 {
            d
        } else {
            1.0
        }
    }

    pub fn search(&self, q: &Query) -> Result<(Vec<ScoredResult>, SearchStats)> {
        qdr_search(q, self)
    }

    /// Object ids indexed under the given leaves.
    pub fn objects_under(&self, leaves: &[usize]) -> BTreeSet<u32> {
        leaves
            .iter()
            .flat_map(|&l| self.tree.leaf(l).tree.entries().iter().map(|e| e.object))
            .collect()
    }

    pub fn summary(&self) -> IndexSummary {
        let leaves: Vec<_> = self.tree.leaf_ids().iter().map(|&l| self.tree.leaf(l)).collect();
        let universe = self
            .objects
            .iter()
            .flat_map(|o| o.keywords.iter())
            .collect::<BTreeSet<_>>()
            .len();
        let occurrences = self.tree.keyword_occurrences();
        IndexSummary {
            objects: self.objects.len(),
            attribute_dimension: self.attribute_dimension(),
            universe_size: universe,
            cluster_nodes: self.tree.nodes().len(),
            leaf_count: leaves.len(),
            empty_leaves: leaves.iter().filter(|l| l.tree.is_empty()).count(),
            dr_nodes: self.tree.node_count(),
            indexed_entries: leaves.iter().map(|l| l.tree.len()).sum(),
            keyword_occurrences: occurrences,
            duplication_ratio: occurrences as f64 / universe as f64,
            max_dr_height: leaves.iter().map(|l| l.tree.height()).max().unwrap_or(0),
            bounds: self.bounds,
        }
    }
}
