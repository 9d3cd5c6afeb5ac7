//! Dual-filtering R-tree: an STR-packed R-tree whose nodes carry a
//! compressed attribute skyline and the OR of their subtree's keyword
//! bitmaps.

use serde::{Deserialize, Serialize};

use crate::bitmap::{encode, KeywordBitmap};
use crate::model::{GeoObject, Point};
use crate::skyline::{compress_skyline, compute_skyline, SkylineSet, DEFAULT_TAU_MERGE};

/// Default maximum node fan-out.
pub const DEFAULT_MAX_ENTRIES: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mbr {
    pub min: Point,
    pub max: Point,
}

impl Mbr {
    pub fn from_point(p: Point) -> Self {
        Self { min: p, max: p }
    }

    pub fn expand(&mut self, other: &Mbr) {
        self.min.x = self.min.x.min(other.min.x);
        self.min.y = self.min.y.min(other.min.y);
        self.max.x = self.max.x.max(other.max.x);
        self.max.y = self.max.y.max(other.max.y);
    }

    pub fn contains(&self, p: Point) -> bool {
        self.min.x <= p.x && p.x <= self.max.x && self.min.y <= p.y && p.y <= self.max.y
    }

    pub fn center(&self) -> Point {
        Point::new((self.min.x + self.max.x) / 2.0, (self.min.y + self.max.y) / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        crate::model::euclidean_distance(self.min, self.max)
    }

    pub fn enclosing(points: impl IntoIterator<Item = Point>) -> Option<Self> {
        let mut it = points.into_iter();
        let mut mbr = Mbr::from_point(it.next()?);
        for p in it {
            mbr.expand(&Mbr::from_point(p));
        }
        Some(mbr)
    }
}

/// Smallest distance from `p` to any point of `mbr`; zero inside.
pub fn min_dist(p: Point, mbr: &Mbr) -> f64 {
    let dx = (mbr.min.x - p.x).max(0.0).max(p.x - mbr.max.x);
    let dy = (mbr.min.y - p.y).max(0.0).max(p.y - mbr.max.y);
    (dx * dx + dy * dy).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrParams {
    pub max_entries: usize,
    /// Cosine threshold for merging skyline points. `f64::INFINITY` keeps
    /// every node's skyline exact.
    pub tau_merge: f64,
}

impl Default for DrParams {
    fn default() -> Self {
        Self {
            max_entries: DEFAULT_MAX_ENTRIES,
            tau_merge: DEFAULT_TAU_MERGE,
        }
    }
}

/// An indexed object as seen by one tree: its bitmap is over that tree's
/// universe.
#[derive(Debug, Clone, PartialEq)]
pub struct DrEntry {
    /// Position of the object in the owning index's object table.
    pub object: u32,
    pub location: Point,
    pub attributes: Vec<f64>,
    pub kb: KeywordBitmap,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DrChildren {
    /// Indices into the tree's node arena.
    Nodes(Vec<u32>),
    /// Indices into the tree's entry table.
    Entries(Vec<u32>),
}

impl DrChildren {
    pub fn len(&self) -> usize {
        match self {
            DrChildren::Nodes(v) | DrChildren::Entries(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrNode {
    pub mbr: Mbr,
    pub sp: SkylineSet,
    pub kb: KeywordBitmap,
    pub children: DrChildren,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DrTree {
    pub(crate) nodes: Vec<DrNode>,
    pub(crate) root: Option<u32>,
    pub(crate) entries: Vec<DrEntry>,
    pub(crate) universe_len: usize,
    pub(crate) height: usize,
}

/// Sort-tile-recursive grouping of `items` (by their centers) into runs of
/// at most `m`. Returns groups of item indices.
pub(crate) fn str_groups(centers: &[Point], m: usize) -> Vec<Vec<usize>> {
    let n = centers.len();
    if n == 0 {
        return Vec::new();
    }
    let pages = n.div_ceil(m);
    let slices = (pages as f64).sqrt().ceil() as usize;
    let slice_len = slices * m;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        centers[a]
            .x
            .total_cmp(&centers[b].x)
            .then(centers[a].y.total_cmp(&centers[b].y))
            .then(a.cmp(&b))
    });
    let mut groups = Vec::with_capacity(pages);
    for slice in order.chunks(slice_len) {
        let mut slice = slice.to_vec();
        slice.sort_by(|&a, &b| {
            centers[a]
                .y
                .total_cmp(&centers[b].y)
                .then(centers[a].x.total_cmp(&centers[b].x))
                .then(a.cmp(&b))
        });
        groups.extend(slice.chunks(m).map(|c| c.to_vec()));
    }
    groups
}

impl DrTree {
    /// Packs `objects` (paired with their index in the owning object table)
    /// bottom-up. An empty input yields an empty tree.
    pub fn bulk_build<'a>(
        objects: impl IntoIterator<Item = (u32, &'a GeoObject)>,
        universe: &[String],
        params: DrParams,
    ) -> Self {
        let entries: Vec<DrEntry> = objects
            .into_iter()
            .map(|(object, o)| DrEntry {
                object,
                location: o.location,
                attributes: o.attributes.clone(),
                kb: encode(&o.keywords, universe),
            })
            .collect();
        Self::from_entries(entries, universe.len(), params)
    }

    pub(crate) fn from_entries(entries: Vec<DrEntry>, universe_len: usize, params: DrParams) -> Self {
        assert!(params.max_entries >= 2, "fan-out must be at least 2");
        let mut tree = DrTree {
            nodes: Vec::new(),
            root: None,
            entries,
            universe_len,
            height: 0,
        };
        if tree.entries.is_empty() {
            return tree;
        }

        let centers: Vec<Point> = tree.entries.iter().map(|e| e.location).collect();
        let mut level: Vec<u32> = str_groups(&centers, params.max_entries)
            .into_iter()
            .map(|g| {
                let ids: Vec<u32> = g.into_iter().map(|i| i as u32).collect();
                tree.push_leaf(ids, params.tau_merge)
            })
            .collect();
        tree.height = 1;

        while level.len() > 1 {
            let centers: Vec<Point> = level.iter().map(|&n| tree.nodes[n as usize].mbr.center()).collect();
            level = str_groups(&centers, params.max_entries)
                .into_iter()
                .map(|g| {
                    let ids: Vec<u32> = g.into_iter().map(|i| level[i]).collect();
                    tree.push_internal(ids, params.tau_merge)
                })
                .collect();
            tree.height += 1;
        }
        tree.root = Some(level[0]);
        tree
    }

    fn push_leaf(&mut self, ids: Vec<u32>, tau_merge: f64) -> u32 {
        let members: Vec<&DrEntry> = ids.iter().map(|&i| &self.entries[i as usize]).collect();
        let mbr = Mbr::enclosing(members.iter().map(|e| e.location)).expect("non-empty leaf");
        let mut kb = KeywordBitmap::zeros(self.universe_len);
        members.iter().for_each(|e| kb.union_with(&e.kb));
        let attrs: Vec<&[f64]> = members.iter().map(|e| e.attributes.as_slice()).collect();
        let sp = compress_skyline(&compute_skyline(&attrs), tau_merge);
        self.nodes.push(DrNode {
            mbr,
            sp,
            kb,
            children: DrChildren::Entries(ids),
        });
        (self.nodes.len() - 1) as u32
    }

    fn push_internal(&mut self, ids: Vec<u32>, tau_merge: f64) -> u32 {
        let mut mbr = self.nodes[ids[0] as usize].mbr;
        let mut kb = KeywordBitmap::zeros(self.universe_len);
        let mut union: Vec<&[f64]> = Vec::new();
        for &c in &ids {
            let child = &self.nodes[c as usize];
            mbr.expand(&child.mbr);
            kb.union_with(&child.kb);
            union.extend(child.sp.points.iter().map(|p| p.as_slice()));
        }
        let sp = compress_skyline(&compute_skyline(&union), tau_merge);
        self.nodes.push(DrNode {
            mbr,
            sp,
            kb,
            children: DrChildren::Nodes(ids),
        });
        (self.nodes.len() - 1) as u32
    }

    pub fn root(&self) -> Option<&DrNode> {
        self.root.map(|r| &self.nodes[r as usize])
    }

    pub fn root_id(&self) -> Option<u32> {
        self.root
    }

    pub fn node(&self, id: u32) -> &DrNode {
        &self.nodes[id as usize]
    }

    pub fn nodes(&self) -> &[DrNode] {
        &self.nodes
    }

    pub fn entry(&self, id: u32) -> &DrEntry {
        &self.entries[id as usize]
    }

    pub fn entries(&self) -> &[DrEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn universe_len(&self) -> usize {
        self.universe_len
    }

    /// Entry ids of every object below `node`.
    pub fn descendant_entries(&self, node: u32) -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            match &self.nodes[n as usize].children {
                DrChildren::Nodes(c) => stack.extend(c.iter().copied()),
                DrChildren::Entries(e) => out.extend(e.iter().copied()),
            }
        }
        out
    }
}
