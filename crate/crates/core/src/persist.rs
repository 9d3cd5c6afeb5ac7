//! Binary index container.
//!
//! ```text
//! "QDR1" | version u32 | section count u32
//! section table: tag [u8; 4] | offset u64 | length u64 | crc32 u32
//! section payloads
//! ```
//!
//! Everything is little-endian. Sections: `PARM` build parameters, `EMBD`
//! the embedding store, `OBJS` the object table, `QCTR` the cluster tree
//! with every leaf's DR-tree written node arena first. Arenas are stored in
//! memory order so a loaded index breaks search ties exactly as the
//! original did.

use std::fs;
use std::path::Path;

use crate::bitmap::KeywordBitmap;
use crate::clustering::{ClusterParams, LeafKind, QUAD};
use crate::drtree::{DrChildren, DrEntry, DrNode, DrParams, DrTree, Mbr};
use crate::error::{QdrError, Result};
use crate::index::{IndexParams, QdrIndex};
use crate::metric::{EmbeddingStore, KeywordMetric, MetricParams};
use crate::model::{GeoObject, Point};
use crate::qctree::{QcLeaf, QcNode, QcNodeKind, QcTree};
use crate::skyline::SkylineSet;

pub const MAGIC: &[u8; 4] = b"QDR1";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 12;
const TABLE_ENTRY_LEN: usize = 24;
const SECTIONS: [&[u8; 4]; 4] = [b"PARM", b"EMBD", b"OBJS", b"QCTR"];

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn strs(&mut self, v: &[String]) {
        self.len(v.len());
        v.iter().for_each(|s| self.str(s));
    }
    fn f64s(&mut self, v: &[f64]) {
        self.len(v.len());
        v.iter().for_each(|x| self.f64(*x));
    }
    fn u32s(&mut self, v: &[u32]) {
        self.len(v.len());
        v.iter().for_each(|x| self.u32(*x));
    }
    fn point(&mut self, p: Point) {
        self.f64(p.x);
        self.f64(p.y);
    }
    fn bitmap(&mut self, b: &KeywordBitmap) {
        self.len(b.len());
        self.0.extend_from_slice(&b.to_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], section: &'static str) -> Self {
        Self { buf, pos: 0, section }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(QdrError::Truncated(format!("section {} ends early", self.section)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    /// A count of items at least `min_item` bytes each; rejects counts the
    /// remaining bytes cannot hold before anything is allocated.
    fn len(&mut self, min_item: usize) -> Result<usize> {
        let n = self.u64()?;
        let left = (self.buf.len() - self.pos) as u64;
        if n.saturating_mul(min_item.max(1) as u64) > left && min_item > 0 {
            return Err(QdrError::Truncated(format!("section {} ends early", self.section)));
        }
        usize::try_from(n).map_err(|_| QdrError::Corrupt("length overflows usize".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| QdrError::Corrupt("invalid UTF-8 string".into()))
    }
    fn strs(&mut self) -> Result<Vec<String>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.str()).collect()
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn u32s(&mut self) -> Result<Vec<u32>> {
        let n = self.len(4)?;
        (0..n).map(|_| self.u32()).collect()
    }
    fn point(&mut self) -> Result<Point> {
        Ok(Point::new(self.f64()?, self.f64()?))
    }
    fn bitmap(&mut self) -> Result<KeywordBitmap> {
        let width = self.len(0)?;
        let bytes = self.take(width.div_ceil(8))?;
        KeywordBitmap::from_bytes(width, bytes)
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(QdrError::Corrupt(format!("trailing bytes in section {}", self.section)));
        }
        Ok(())
    }
}

fn write_params(w: &mut Writer, p: &IndexParams) {
    w.f64(p.metric.delta);
    w.f64(p.cluster.tau_cluster);
    w.f64(p.cluster.tau_dup);
    w.f64(p.cluster.kernel_sigma);
    w.u64(p.cluster.seed);
    w.len(p.cluster.max_iters);
    w.len(p.dr.max_entries);
    w.f64(p.dr.tau_merge);
}

fn read_params(r: &mut Reader) -> Result<IndexParams> {
    Ok(IndexParams {
        metric: MetricParams { delta: r.f64()? },
        cluster: ClusterParams {
            tau_cluster: r.f64()?,
            tau_dup: r.f64()?,
            kernel_sigma: r.f64()?,
            seed: r.u64()?,
            max_iters: r.u64()? as usize,
        },
        dr: DrParams {
            max_entries: r.u64()? as usize,
            tau_merge: r.f64()?,
        },
    })
}

fn write_store(w: &mut Writer, s: &EmbeddingStore) {
    w.len(s.dimension());
    let entries = s.entries();
    w.len(entries.len());
    for (word, v) in entries {
        w.str(word);
        v.iter().for_each(|x| w.f64(*x));
    }
}

fn read_store(r: &mut Reader) -> Result<EmbeddingStore> {
    let dim = r.len(0)?;
    if dim == 0 {
        return Err(QdrError::Corrupt("embedding dimension is zero".into()));
    }
    let n = r.len(8 + 8 * dim)?;
    let mut store = EmbeddingStore::new(dim);
    for _ in 0..n {
        let word = r.str()?;
        let v = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        store.insert_raw(word, v)?;
    }
    Ok(store)
}

fn write_objects(w: &mut Writer, objects: &[GeoObject]) {
    w.len(objects.len());
    for o in objects {
        w.str(&o.id);
        w.point(o.location);
        w.strs(&o.keywords);
        w.f64s(&o.attributes);
    }
}

fn read_objects(r: &mut Reader) -> Result<Vec<GeoObject>> {
    let n = r.len(48)?;
    (0..n)
        .map(|_| {
            Ok(GeoObject {
                id: r.str()?,
                location: r.point()?,
                keywords: r.strs()?,
                attributes: r.f64s()?,
            })
        })
        .collect()
}

fn write_children(w: &mut Writer, c: &DrChildren) {
    match c {
        DrChildren::Nodes(v) => {
            w.u8(0);
            w.u32s(v);
        }
        DrChildren::Entries(v) => {
            w.u8(1);
            w.u32s(v);
        }
    }
}

fn write_drtree(w: &mut Writer, t: &DrTree) {
    w.len(t.universe_len);
    w.len(t.height);
    match t.root {
        Some(r) => {
            w.u8(1);
            w.u32(r);
        }
        None => w.u8(0),
    }
    w.len(t.nodes.len());
    for n in &t.nodes {
        w.point(n.mbr.min);
        w.point(n.mbr.max);
        w.u8(n.sp.compressed as u8);
        w.len(n.sp.points.len());
        n.sp.points.iter().for_each(|p| w.f64s(p));
        w.bitmap(&n.kb);
        write_children(w, &n.children);
    }
    w.len(t.entries.len());
    for e in &t.entries {
        w.u32(e.object);
        w.point(e.location);
        w.f64s(&e.attributes);
        w.bitmap(&e.kb);
    }
}

fn read_drtree(r: &mut Reader, object_count: usize) -> Result<DrTree> {
    let universe_len = r.len(0)?;
    let height = r.len(0)?;
    let root = match r.u8()? {
        0 => None,
        1 => Some(r.u32()?),
        t => return Err(QdrError::Corrupt(format!("bad root tag {t}"))),
    };
    let node_count = r.len(50)?;
    let mut nodes = Vec::with_capacity(node_count);
    for _ in 0..node_count {
        let mbr = Mbr {
            min: r.point()?,
            max: r.point()?,
        };
        let compressed = r.u8()? != 0;
        let np = r.len(8)?;
        let points = (0..np).map(|_| r.f64s()).collect::<Result<Vec<_>>>()?;
        let kb = r.bitmap()?;
        let children = match r.u8()? {
            0 => DrChildren::Nodes(r.u32s()?),
            1 => DrChildren::Entries(r.u32s()?),
            t => return Err(QdrError::Corrupt(format!("bad children tag {t}"))),
        };
        nodes.push(DrNode {
            mbr,
            sp: SkylineSet { points, compressed },
            kb,
            children,
        });
    }
    let entry_count = r.len(36)?;
    let mut entries = Vec::with_capacity(entry_count);
    for _ in 0..entry_count {
        entries.push(DrEntry {
            object: r.u32()?,
            location: r.point()?,
            attributes: r.f64s()?,
            kb: r.bitmap()?,
        });
    }

    let in_range = |v: &[u32], n: usize| v.iter().all(|&i| (i as usize) < n);
    if root.is_some_and(|r| r as usize >= nodes.len()) || (root.is_none() && !nodes.is_empty()) {
        return Err(QdrError::Corrupt("DR-tree root out of range".into()));
    }
    for n in &nodes {
        let ok = match &n.children {
            DrChildren::Nodes(c) => in_range(c, nodes.len()),
            DrChildren::Entries(c) => in_range(c, entries.len()),
        };
        if !ok || n.kb.len() != universe_len {
            return Err(QdrError::Corrupt("DR-tree node references out of range".into()));
        }
    }
    if entries
        .iter()
        .any(|e| e.object as usize >= object_count || e.kb.len() != universe_len)
    {
        return Err(QdrError::Corrupt("DR-tree entry out of range".into()));
    }
    Ok(DrTree {
        nodes,
        root,
        entries,
        universe_len,
        height,
    })
}

fn write_qctree(w: &mut Writer, t: &QcTree) {
    w.len(t.nodes.len());
    for n in &t.nodes {
        w.str(&n.center);
        match &n.kind {
            QcNodeKind::Internal { children } => {
                w.u8(0);
                children.iter().for_each(|&c| w.len(c));
            }
            QcNodeKind::Leaf(l) => {
                w.u8(1);
                w.strs(&l.core);
                w.strs(&l.duplicates);
                w.f64(l.diameter);
                w.u8(match l.kind {
                    LeafKind::Tight => 0,
                    LeafKind::TooSmall => 1,
                });
                w.strs(&l.universe);
                write_drtree(w, &l.tree);
            }
        }
    }
}

fn read_qctree(r: &mut Reader, object_count: usize) -> Result<QcTree> {
    let n = r.len(9)?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let center = r.str()?;
        let kind = match r.u8()? {
            0 => {
                let mut children = [0usize; QUAD];
                for c in &mut children {
                    *c = r.len(0)?;
                }
                QcNodeKind::Internal { children }
            }
            1 => {
                let core = r.strs()?;
                let duplicates = r.strs()?;
                let diameter = r.f64()?;
                let kind = match r.u8()? {
                    0 => LeafKind::Tight,
                    1 => LeafKind::TooSmall,
                    t => return Err(QdrError::Corrupt(format!("bad leaf kind {t}"))),
                };
                let universe = r.strs()?;
                let tree = read_drtree(r, object_count)?;
                if tree.universe_len != universe.len() {
                    return Err(QdrError::Corrupt("leaf universe does not match its tree".into()));
                }
                QcNodeKind::Leaf(Box::new(QcLeaf {
                    core,
                    duplicates,
                    diameter,
                    kind,
                    universe,
                    tree,
                }))
            }
            t => return Err(QdrError::Corrupt(format!("bad cluster node tag {t}"))),
        };
        nodes.push(QcNode { center, kind });
    }
    QcTree::from_parts(nodes)
}

/// Serializes `index` into the container layout.
pub fn index_to_bytes(index: &QdrIndex) -> Vec<u8> {
    let mut payloads = Vec::with_capacity(SECTIONS.len());
    let mut w = Writer::default();
    write_params(&mut w, &index.params);
    payloads.push(std::mem::take(&mut w.0));
    write_store(&mut w, &index.metric.store);
    payloads.push(std::mem::take(&mut w.0));
    write_objects(&mut w, &index.objects);
    payloads.push(std::mem::take(&mut w.0));
    write_qctree(&mut w, &index.tree);
    payloads.push(std::mem::take(&mut w.0));

    let mut out = Writer::default();
    out.0.extend_from_slice(MAGIC);
    out.u32(FORMAT_VERSION);
    out.u32(SECTIONS.len() as u32);
    let mut offset = (HEADER_LEN + SECTIONS.len() * TABLE_ENTRY_LEN) as u64;
    for (tag, p) in SECTIONS.iter().zip(&payloads) {
        out.0.extend_from_slice(*tag);
        out.u64(offset);
        out.u64(p.len() as u64);
        out.u32(crc32fast::hash(p));
        offset += p.len() as u64;
    }
    for p in payloads {
        out.0.extend_from_slice(&p);
    }
    out.0
}

/// Parses a container. Nothing is returned unless every section checks out.
pub fn index_from_bytes(bytes: &[u8]) -> Result<QdrIndex> {
    if bytes.len() < 4 {
        return Err(QdrError::Truncated("missing header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(QdrError::BadMagic);
    }
    let mut header = Reader::new(bytes, "header");
    header.take(4)?;
    let version = header.u32()?;
    if version != FORMAT_VERSION {
        return Err(QdrError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let count = header.u32()? as usize;
    if count != SECTIONS.len() {
        return Err(QdrError::Corrupt(format!(
            "expected {} sections, found {count}",
            SECTIONS.len()
        )));
    }
    let mut sections: Vec<&[u8]> = Vec::with_capacity(count);
    for expected in SECTIONS {
        let tag = header.take(4)?;
        let name = String::from_utf8_lossy(tag).into_owned();
        if tag != expected {
            return Err(QdrError::Corrupt(format!("unexpected section {name:?}")));
        }
        let offset = header.u64()?;
        let len = header.u64()?;
        let crc = header.u32()?;
        let end = offset.checked_add(len).filter(|&e| e <= bytes.len() as u64);
        let Some(end) = end else {
            return Err(QdrError::Truncated(format!("section {name} runs past end of file")));
        };
        let payload = &bytes[offset as usize..end as usize];
        if crc32fast::hash(payload) != crc {
            return Err(QdrError::Checksum { section: name });
        }
        sections.push(payload);
    }

    let mut r = Reader::new(sections[0], "PARM");
    let params = read_params(&mut r)?;
    r.finish()?;
    let mut r = Reader::new(sections[1], "EMBD");
    let store = read_store(&mut r)?;
    r.finish()?;
    let mut r = Reader::new(sections[2], "OBJS");
    let objects = read_objects(&mut r)?;
    r.finish()?;
    if objects.is_empty() {
        return Err(QdrError::Corrupt("index has no objects".into()));
    }
    let mut r = Reader::new(sections[3], "QCTR");
    let tree = read_qctree(&mut r, objects.len())?;
    r.finish()?;

    let bounds = Mbr::enclosing(objects.iter().map(|o| o.location)).unwrap();
    Ok(QdrIndex {
        params,
        metric: KeywordMetric::new(params.metric, store),
        objects,
        tree,
        bounds,
    })
}

pub fn save_index(index: &QdrIndex, path: impl AsRef<Path>) -> Result<u64> {
    let bytes = index_to_bytes(index);
    fs::write(path.as_ref(), &bytes).map_err(QdrError::file(path))?;
    Ok(bytes.len() as u64)
}

pub fn load_index(path: impl AsRef<Path>) -> Result<QdrIndex> {
    index_from_bytes(&fs::read(path.as_ref()).map_err(QdrError::file(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Query;
    use crate::synth::{generate_synthetic, QueryGenerator, SynthParams};

    fn sample_index() -> (QdrIndex, Vec<Query>) {
        let data = generate_synthetic(&SynthParams {
            object_count: 400,
            seed: 11,
            ..Default::default()
        })
        .unwrap();
        let mut g = QueryGenerator::new(&data, 5);
        let queries = g.batch(30);
        let index = QdrIndex::build(data.objects, data.embeddings, IndexParams::default()).unwrap();
        (index, queries)
    }

    #[test]
    fn roundtrip_is_exact() {
        let (index, queries) = sample_index();
        let bytes = index_to_bytes(&index);
        let back = index_from_bytes(&bytes).unwrap();
        assert_eq!(back, index);
        assert_eq!(index_to_bytes(&back), bytes);
        for q in &queries {
            let (a, sa) = index.search(q).unwrap();
            let (b, sb) = back.search(q).unwrap();
            assert_eq!(a, b);
            assert_eq!(sa.node_accesses, sb.node_accesses);
        }
    }

    #[test]
    fn any_flipped_payload_byte_fails_cleanly() {
        let (index, _) = sample_index();
        let bytes = index_to_bytes(&index);
        let start = HEADER_LEN + SECTIONS.len() * TABLE_ENTRY_LEN;
        for pos in (start..bytes.len()).step_by(bytes.len() / 97 + 1) {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x20;
            assert!(
                matches!(index_from_bytes(&bad), Err(QdrError::Checksum { .. })),
                "byte {pos}"
            );
        }
    }

    #[test]
    fn header_errors() {
        let (index, _) = sample_index();
        let bytes = index_to_bytes(&index);
        assert!(matches!(index_from_bytes(b"NOPE...."), Err(QdrError::BadMagic)));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(index_from_bytes(&v2), Err(QdrError::Version { found: 2, .. })));
        for cut in [2, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(index_from_bytes(&bytes[..cut]), Err(QdrError::Truncated(_))),
                "cut {cut}"
            );
        }
    }
}
