//! The KDTR binary tree container.
//!
//! Layout (little-endian): magic `KDTR`, version u32, depth u32, dim u32,
//! then per interior node in index order 1..2^D - 1: direction u8, level
//! u8, six padding bytes, threshold f64; then 2^D leaf point indices as
//! u32. Deserialized trees are structurally validated.

use std::path::Path;

use crate::bytes::{Reader, Writer};
use crate::error::Result;
use crate::kdtree::{KdNode, KdTree};

pub const KDTR_MAGIC: &[u8; 4] = b"KDTR";
pub const KDTR_VERSION: u32 = 1;

impl KdTree {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(KDTR_MAGIC);
        w.u32_le(KDTR_VERSION);
        w.u32_le(self.depth() as u32);
        w.u32_le(self.dim() as u32);
        for i in 1..=self.num_interior() {
            let node = self.node(i);
            w.u8(node.direction);
            w.u8(node.level);
            w.bytes(&[0u8; 6]);
            w.f64_le(node.threshold);
        }
        for &p in self.leaf_points() {
            w.u32_le(p);
        }
        w.into_vec()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<KdTree> {
        let mut r = Reader::new("KDTR", bytes);
        r.magic(KDTR_MAGIC)?;
        r.version(KDTR_VERSION)?;
        let depth = r.u32_le()? as usize;
        let dim = r.u32_le()? as usize;
        if depth == 0 || depth > 31 {
            return r.fail(format!("depth {depth} out of range"));
        }
        if dim != 2 && dim != 3 {
            return r.fail(format!("dim {dim} out of range"));
        }
        let leaves = 1usize << depth;
        let mut nodes = vec![
            KdNode {
                direction: 0,
                threshold: 0.0,
                level: 0,
            };
            leaves
        ];
        for item in nodes.iter_mut().skip(1) {
            let direction = r.u8()?;
            let level = r.u8()?;
            r.take(6)?;
            let threshold = r.f64_le()?;
            *item = KdNode {
                direction,
                threshold,
                level,
            };
        }
        let mut leaf_points = Vec::with_capacity(leaves);
        for _ in 0..leaves {
            leaf_points.push(r.u32_le()?);
        }
        r.finish()?;
        let tree = KdTree {
            depth,
            dim,
            nodes,
            leaf_points,
        };
        tree.validate().map_err(|e| crate::Error::Format {
            format: "KDTR",
            offset: bytes.len(),
            msg: e.to_string(),
        })?;
        Ok(tree)
    }

    pub fn write_kdtr(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn read_kdtr(path: impl AsRef<Path>) -> Result<KdTree> {
        KdTree::from_bytes(&std::fs::read(path)?)
    }
}
