//! Triangle meshes, area-weighted surface sampling, and the ASCII OFF
//! format (polygon faces are fan-triangulated on load).

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len() as u32;
        for f in &faces {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::invalid(format!(
                    "face {f:?} references a vertex outside 0..{n}"
                )));
            }
        }
        Ok(TriangleMesh { vertices, faces })
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn face_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.faces[i];
        let (a, b, c) = (
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        );
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let cross = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        0.5 * (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt()
    }

    /// Draws `n` surface points: faces chosen with probability
    /// proportional to area, positions uniform within a face via the
    /// square-root barycentric scheme.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Result<PointCloud> {
        let mut cumulative = Vec::with_capacity(self.faces.len());
        let mut total = 0.0;
        for i in 0..self.faces.len() {
            total += self.face_area(i);
            cumulative.push(total);
        }
        if total <= 0.0 {
            return Err(Error::DegenerateMesh);
        }
        let mut coords = Vec::with_capacity(n * 3);
        for _ in 0..n {
            let t = rng.random_range(0.0..total);
            let face = cumulative.partition_point(|&c| c <= t).min(self.faces.len() - 1);
            let [ia, ib, ic] = self.faces[face];
            let (a, b, c) = (
                self.vertices[ia as usize],
                self.vertices[ib as usize],
                self.vertices[ic as usize],
            );
            let r1: f64 = rng.random();
            let r2: f64 = rng.random();
            let sqrt_r1 = r1.sqrt();
            let u = 1.0 - sqrt_r1;
            let v = r2 * sqrt_r1;
            let w = 1.0 - u - v;
            for axis in 0..3 {
                coords.push(u * a[axis] + v * b[axis] + w * c[axis]);
            }
        }
        PointCloud::new(3, coords)
    }

    /// Parses ASCII OFF text. Faces with more than three vertices are
    /// fan-triangulated around the first vertex.
    pub fn from_off_str(text: &str) -> Result<Self> {
        let mut lines = OffLines::new(text);
        let (header_offset, header) = lines.next_content()?;
        let mut tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.first() != Some(&"OFF") {
            return Err(Error::Parse {
                offset: header_offset,
                msg: format!("expected OFF header, got {:?}", tokens.first().unwrap_or(&"")),
            });
        }
        tokens.remove(0);
        let (counts_offset, counts) = if tokens.is_empty() {
            let (off, line) = lines.next_content()?;
            (off, line.split_whitespace().collect::<Vec<_>>())
        } else {
            (header_offset, tokens)
        };
        if counts.len() < 2 {
            return Err(Error::Parse {
                offset: counts_offset,
                msg: "counts line needs at least vertex and face counts".into(),
            });
        }
        let nv: usize = parse_token(counts[0], counts_offset, "vertex count")?;
        let nf: usize = parse_token(counts[1], counts_offset, "face count")?;

        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (offset, line) = lines.next_content()?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() < 3 {
                return Err(Error::Parse {
                    offset,
                    msg: format!("vertex line needs 3 coordinates, got {}", toks.len()),
                });
            }
            let mut v = [0.0f64; 3];
            for (slot, tok) in v.iter_mut().zip(&toks) {
                *slot = parse_token(tok, offset, "vertex coordinate")?;
            }
            vertices.push(v);
        }

        let mut faces = Vec::with_capacity(nf);
        for _ in 0..nf {
            let (offset, line) = lines.next_content()?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.is_empty() {
                return Err(Error::Parse {
                    offset,
                    msg: "empty face line".into(),
                });
            }
            let k: usize = parse_token(toks[0], offset, "face vertex count")?;
            if k < 3 || toks.len() < 1 + k {
                return Err(Error::Parse {
                    offset,
                    msg: format!("face lists {k} vertices but line has {}", toks.len() - 1),
                });
            }
            let idx: Vec<u32> = toks[1..1 + k]
                .iter()
                .map(|t| parse_token(t, offset, "face index"))
                .collect::<Result<_>>()?;
            for i in 1..k - 1 {
                faces.push([idx[0], idx[i], idx[i + 1]]);
            }
        }
        TriangleMesh::new(vertices, faces)
    }

    pub fn from_off_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        TriangleMesh::from_off_str(&text)
    }

    pub fn to_off_string(&self) -> String {
        let mut out = String::from("OFF\n");
        out.push_str(&format!("{} {} 0\n", self.vertices.len(), self.faces.len()));
        for v in &self.vertices {
            out.push_str(&format!("{} {} {}\n", v[0], v[1], v[2]));
        }
        for f in &self.faces {
            out.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
        }
        out
    }
}

fn parse_token<T: std::str::FromStr>(tok: &str, offset: u64, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        offset,
        msg: format!("invalid {what}: {tok:?}"),
    })
}

/// Line iterator that tracks byte offsets and skips blanks and comments.
struct OffLines<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> OffLines<'a> {
    fn new(text: &'a str) -> Self {
        OffLines { text, pos: 0 }
    }

    fn next_content(&mut self) -> Result<(u64, &'a str)> {
        while self.pos < self.text.len() {
            let start = self.pos;
            let rest = &self.text[start..];
            let end = rest.find('\n').map_or(self.text.len(), |i| start + i);
            self.pos = end + 1;
            let line = self.text[start..end].trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            return Ok((start as u64, line));
        }
        Err(Error::Parse {
            offset: self.text.len() as u64,
            msg: "unexpected end of file".into(),
        })
    }
}
