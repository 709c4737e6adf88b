//! IDX raster/label files (the MNIST distribution format).
//!
//! Magic numbers are big-endian: `0x00000803` for image files (three
//! dimension fields follow), `0x00000801` for label files (one dimension
//! field). Pixel and label payloads are unsigned bytes.

use std::path::Path;

use crate::bytes::{Reader, Writer};
use crate::error::Result;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let sz = self.rows * self.cols;
        &self.pixels[i * sz..(i + 1) * sz]
    }
}

pub fn read_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let mut r = Reader::new("IDX images", bytes);
    let magic = r.u32_be()?;
    if magic != IDX_IMAGES_MAGIC {
        return r.fail(format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"));
    }
    let count = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    let pixels = r.take(count * rows * cols)?.to_vec();
    r.finish()?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader::new("IDX labels", bytes);
    let magic = r.u32_be()?;
    if magic != IDX_LABELS_MAGIC {
        return r.fail(format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"));
    }
    let count = r.u32_be()? as usize;
    let labels = r.take(count)?.to_vec();
    r.finish()?;
    Ok(labels)
}

pub fn write_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32_be(IDX_IMAGES_MAGIC);
    w.u32_be(images.count as u32);
    w.u32_be(images.rows as u32);
    w.u32_be(images.cols as u32);
    w.bytes(&images.pixels);
    w.into_vec()
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32_be(IDX_LABELS_MAGIC);
    w.u32_be(labels.len() as u32);
    w.bytes(labels);
    w.into_vec()
}

pub fn read_idx_images_file(path: impl AsRef<Path>) -> Result<IdxImages> {
    read_idx_images(&std::fs::read(path)?)
}

pub fn read_idx_labels_file(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    read_idx_labels(&std::fs::read(path)?)
}
