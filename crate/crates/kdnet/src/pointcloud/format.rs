//! The KDPC binary cloud container.
//!
//! Layout (all integers little-endian):
//! magic `KDPC`, version u32, dim u32, point count u32, feature dim u32,
//! flags u32 (bit 0: per-point labels, bit 1: class label), coordinates as
//! f64 in point-major order, then features, then labels (u32 each), then
//! the class label (u32). Round-trips are bit-exact.

use std::path::Path;

use crate::bytes::{Reader, Writer};
use crate::error::Result;
use crate::pointcloud::PointCloud;

pub const KDPC_MAGIC: &[u8; 4] = b"KDPC";
pub const KDPC_VERSION: u32 = 1;

const FLAG_LABELS: u32 = 1;
const FLAG_CLASS: u32 = 2;

impl PointCloud {
    pub fn to_kdpc_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(KDPC_MAGIC);
        w.u32_le(KDPC_VERSION);
        w.u32_le(self.dim() as u32);
        w.u32_le(self.len() as u32);
        w.u32_le(self.feature_dim() as u32);
        let mut flags = 0;
        if self.labels().is_some() {
            flags |= FLAG_LABELS;
        }
        if self.class_label().is_some() {
            flags |= FLAG_CLASS;
        }
        w.u32_le(flags);
        for &v in self.coords() {
            w.f64_le(v);
        }
        for i in 0..self.len() {
            if self.feature_dim() > 0 {
                for &v in self.features_of(i) {
                    w.f64_le(v);
                }
            }
        }
        if let Some(labels) = self.labels() {
            for &l in labels {
                w.u32_le(l);
            }
        }
        if let Some(class) = self.class_label() {
            w.u32_le(class);
        }
        w.into_vec()
    }

    pub fn from_kdpc_bytes(bytes: &[u8]) -> Result<PointCloud> {
        let mut r = Reader::new("KDPC", bytes);
        r.magic(KDPC_MAGIC)?;
        r.version(KDPC_VERSION)?;
        let dim = r.u32_le()? as usize;
        let count = r.u32_le()? as usize;
        let feature_dim = r.u32_le()? as usize;
        let flags = r.u32_le()?;
        if flags & !(FLAG_LABELS | FLAG_CLASS) != 0 {
            return r.fail(format!("unknown flag bits {flags:#x}"));
        }
        let mut coords = Vec::with_capacity(count * dim);
        for _ in 0..count * dim {
            coords.push(r.f64_le()?);
        }
        let mut cloud = PointCloud::new(dim, coords)?;
        if feature_dim > 0 {
            let mut features = Vec::with_capacity(count * feature_dim);
            for _ in 0..count * feature_dim {
                features.push(r.f64_le()?);
            }
            cloud = cloud.with_features(feature_dim, features)?;
        }
        if flags & FLAG_LABELS != 0 {
            let mut labels = Vec::with_capacity(count);
            for _ in 0..count {
                labels.push(r.u32_le()?);
            }
            cloud = cloud.with_labels(labels)?;
        }
        if flags & FLAG_CLASS != 0 {
            cloud = cloud.with_class(r.u32_le()?);
        }
        r.finish()?;
        Ok(cloud)
    }

    pub fn write_kdpc(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_kdpc_bytes())?)
    }

    pub fn read_kdpc(path: impl AsRef<Path>) -> Result<PointCloud> {
        PointCloud::from_kdpc_bytes(&std::fs::read(path)?)
    }
}
