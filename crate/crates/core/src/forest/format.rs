//! `AIRF1` binary model files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "AIRF1" u8 revision
//! u32 n_classes, then per class: str name
//! u32 n_aliases, then per alias: str token, u32 class
//! u8 embedding kind, u32 dimension, str descriptor
//! u64 frontend hash, u64 seed
//! u32 n_trees, u32 max_depth (0 = unlimited), u32 min_samples_leaf,
//! u32 features_per_split, u8 bootstrap
//! str provenance
//! per class: u32 n_trees, per tree: u32 n_nodes, per node:
//!   u8 0, f64 positive_fraction               (leaf)
//!   u8 1, u32 feature, f64 threshold, u32 left, u32 right   (split)
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8 bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{DecisionTree, ForestModel, ForestParams, Node};
use crate::dataset::Ontology;
use crate::embedding::{EmbeddingKind, EmbeddingSource};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 5] = b"AIRF1";
pub const MODEL_REVISION: u8 = 1;

struct Out(Vec<u8>);

impl Out {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("count fits in u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

pub fn write_model<W: Write>(model: &ForestModel, mut w: W) -> std::io::Result<()> {
    let mut o = Out(Vec::new());
    o.0.extend_from_slice(MODEL_MAGIC);
    o.u8(MODEL_REVISION);
    o.u32(model.ontology.len());
    for name in model.ontology.names() {
        o.str(name);
    }
    o.u32(model.ontology.aliases().len());
    for (alias, &class) in model.ontology.aliases() {
        o.str(alias);
        o.u32(class);
    }
    o.u8(model.embedding.kind.code());
    o.u32(model.embedding.dimension);
    o.str(&model.embedding.descriptor);
    o.u64(model.frontend_hash);
    o.u64(model.seed);
    let p = &model.params;
    o.u32(p.n_trees);
    o.u32(p.max_depth.unwrap_or(0));
    o.u32(p.min_samples_leaf);
    o.u32(p.resolved_features_per_split(model.embedding.dimension));
    o.u8(p.bootstrap as u8);
    o.str(&model.provenance);
    for trees in &model.ensembles {
        o.u32(trees.len());
        for t in trees {
            o.u32(t.nodes.len());
            for node in &t.nodes {
                match *node {
                    Node::Leaf { positive_fraction } => {
                        o.u8(0);
                        o.f64(positive_fraction);
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        o.u8(1);
                        o.u32(feature as usize);
                        o.f64(threshold);
                        o.u32(left as usize);
                        o.u32(right as usize);
                    }
                }
            }
        }
    }
    w.write_all(&o.0)
}

struct In<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedFile(msg.into())
}

impl<'a> In<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| malformed(format!("model file truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
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
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| malformed("string is not UTF-8"))
    }
    /// A count, bounded by the bytes left so corrupt lengths fail fast.
    fn count(&mut self, min_item_bytes: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item_bytes) > self.buf.len() - self.pos {
            return Err(malformed(format!("count {n} exceeds remaining data")));
        }
        Ok(n)
    }
}

pub fn read_model<R: Read>(mut r: R) -> Result<ForestModel> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| malformed(format!("reading model: {e}")))?;
    parse(&buf)
}

fn parse(buf: &[u8]) -> Result<ForestModel> {
    if buf.len() < 4 || &buf[..4] != b"AIRF" {
        return Err(Error::BadMagic);
    }
    let supported = format!("AIRF1 revision {MODEL_REVISION}");
    if buf.len() < 6 {
        return Err(malformed("model file truncated in header"));
    }
    if buf[4] != MODEL_MAGIC[4] || buf[5] != MODEL_REVISION {
        return Err(Error::VersionMismatch {
            found: format!("{} revision {}", String::from_utf8_lossy(&buf[..5]), buf[5]),
            supported,
        });
    }
    let mut r = In { buf, pos: 6 };

    let n_classes = r.count(4)?;
    let classes = (0..n_classes).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let n_aliases = r.count(8)?;
    let mut aliases = BTreeMap::new();
    for _ in 0..n_aliases {
        let a = r.str()?;
        let c = r.u32()? as usize;
        aliases.insert(a, c);
    }
    let ontology = Ontology::from_parts(classes, aliases).map_err(|e| malformed(e.to_string()))?;

    let kind = r.u8()?;
    let kind = EmbeddingKind::from_code(kind)
        .ok_or_else(|| malformed(format!("unknown embedding kind {kind}")))?;
    let dimension = r.u32()? as usize;
    if dimension == 0 {
        return Err(malformed("embedding dimension is zero"));
    }
    let embedding = EmbeddingSource {
        kind,
        dimension,
        descriptor: r.str()?,
    };
    let frontend_hash = r.u64()?;
    let seed = r.u64()?;
    let n_trees = r.u32()? as usize;
    let max_depth = match r.u32()? {
        0 => None,
        d => Some(d as usize),
    };
    let min_samples_leaf = r.u32()? as usize;
    let features_per_split = Some(r.u32()? as usize);
    let bootstrap = match r.u8()? {
        0 => false,
        1 => true,
        b => return Err(malformed(format!("bad bootstrap flag {b}"))),
    };
    let params = ForestParams {
        n_trees,
        max_depth,
        min_samples_leaf,
        features_per_split,
        bootstrap,
    };
    params.validate().map_err(|e| malformed(e.to_string()))?;
    let provenance = r.str()?;

    let mut ensembles = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let k = r.count(13)?;
        if k != n_trees {
            return Err(malformed(format!("class {c} has {k} trees, header says {n_trees}")));
        }
        let mut trees = Vec::with_capacity(k);
        for _ in 0..k {
            let n_nodes = r.count(9)?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                nodes.push(match r.u8()? {
                    0 => Node::Leaf {
                        positive_fraction: r.f64()?,
                    },
                    1 => Node::Split {
                        feature: r.u32()?,
                        threshold: r.f64()?,
                        left: r.u32()?,
                        right: r.u32()?,
                    },
                    t => return Err(malformed(format!("unknown node tag {t}"))),
                });
            }
            let tree = DecisionTree { nodes };
            tree.check(dimension).map_err(malformed)?;
            trees.push(tree);
        }
        ensembles.push(trees);
    }
    if r.pos != buf.len() {
        return Err(malformed(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(ForestModel {
        ontology,
        embedding,
        frontend_hash,
        seed,
        params,
        provenance,
        ensembles,
    })
}

pub fn save(model: &ForestModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf).expect("writing to memory");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ForestModel> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&buf)
}
