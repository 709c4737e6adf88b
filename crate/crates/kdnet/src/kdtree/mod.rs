//! Balanced kd-trees over point clouds of size `2^D`.
//!
//! Construction is recursive and top-down: at every node the per-axis
//! coordinate ranges of the node's subset are computed, a split direction
//! is chosen (largest range, or sampled from a softmax over normalized
//! ranges in randomized mode), the subset is sorted by that coordinate
//! with the original point index as tie-break, and split into equal
//! halves. Interior nodes live at indices `1..2^D - 1` with node `i`
//! having children `2i` and `2i + 1`; index 0 is unused. Each leaf holds
//! exactly one point index.

mod format;

use rand::Rng;

use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KdNode {
    /// Split axis.
    pub direction: u8,
    /// Split position; points left of the node have coordinate <= this,
    /// points right have coordinate >= this.
    pub threshold: f64,
    /// 1 at the root, increasing towards the leaves.
    pub level: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitMode {
    Deterministic,
    Randomized,
}

/// Split-direction policy used during construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSampler {
    pub mode: SplitMode,
    pub gamma: f64,
}

pub const DEFAULT_GAMMA: f64 = 10.0;

impl SplitSampler {
    pub fn deterministic() -> Self {
        SplitSampler {
            mode: SplitMode::Deterministic,
            gamma: DEFAULT_GAMMA,
        }
    }

    pub fn randomized(gamma: f64) -> Result<Self> {
        if gamma <= 0.0 {
            return Err(Error::invalid(format!(
                "randomized split sampling needs gamma > 0, got {gamma}"
            )));
        }
        Ok(SplitSampler {
            mode: SplitMode::Randomized,
            gamma,
        })
    }
}

/// Softmax over `gamma * (ranges normalized to unit sum)`; an all-zero
/// range vector yields the uniform distribution.
pub fn direction_probabilities(ranges: &[f64], gamma: f64) -> Vec<f64> {
    let total: f64 = ranges.iter().sum();
    if total <= 0.0 {
        return vec![1.0 / ranges.len() as f64; ranges.len()];
    }
    let mut logits: Vec<f64> = ranges.iter().map(|r| gamma * r / total).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in &mut logits {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in &mut logits {
        *l /= sum;
    }
    logits
}

/// Chooses a split axis from per-axis coordinate spans.
///
/// Deterministic mode takes the argmax with lowest-index tie-break;
/// randomized mode draws from `direction_probabilities`.
pub fn sample_direction<R: Rng>(ranges: &[f64], sampler: &SplitSampler, rng: &mut R) -> usize {
    match sampler.mode {
        SplitMode::Deterministic => argmax(ranges),
        SplitMode::Randomized => {
            let probs = direction_probabilities(ranges, sampler.gamma);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            probs.len() - 1
        }
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct KdTree {
    depth: usize,
    dim: usize,
    /// Indexed 1..2^D - 1; entry 0 is a placeholder.
    nodes: Vec<KdNode>,
    /// Point index held by each leaf, in leaf order.
    leaf_points: Vec<u32>,
}

impl KdTree {
    /// Builds a balanced tree over a cloud of `2^D` points.
    pub fn build<R: Rng>(cloud: &PointCloud, sampler: &SplitSampler, rng: &mut R) -> Result<Self> {
        let n = cloud.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo {
                what: "cloud size",
                got: n,
            });
        }
        let depth = n.trailing_zeros() as usize;
        let dim = cloud.dim();
        let mut nodes = vec![
            KdNode {
                direction: 0,
                threshold: 0.0,
                level: 0,
            };
            n
        ];
        let mut order: Vec<u32> = (0..n as u32).collect();
        build_node(cloud, sampler, rng, 1, &mut order, &mut nodes)?;
        Ok(KdTree {
            depth,
            dim,
            nodes,
            leaf_points: order,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_interior(&self) -> usize {
        (1 << self.depth) - 1
    }

    pub fn num_leaves(&self) -> usize {
        1 << self.depth
    }

    /// Interior node accessor; `i` is the 1-based node number.
    pub fn node(&self, i: usize) -> &KdNode {
        debug_assert!(i >= 1 && i <= self.num_interior());
        &self.nodes[i]
    }

    pub(crate) fn node_mut(&mut self, i: usize) -> &mut KdNode {
        &mut self.nodes[i]
    }

    pub fn direction(&self, i: usize) -> usize {
        self.nodes[i].direction as usize
    }

    pub fn leaf_points(&self) -> &[u32] {
        &self.leaf_points
    }

    /// Level of tree position `i` (root = 1). Leaf positions
    /// `2^D..2^{D+1} - 1` report `D + 1`.
    pub fn level_of(i: usize) -> usize {
        debug_assert!(i >= 1);
        (usize::BITS - i.leading_zeros()) as usize
    }

    /// One-hot encoding of every split direction, node-index order.
    pub fn split_onehot(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.num_interior()];
        for i in 1..=self.num_interior() {
            out[(i - 1) * self.dim + self.direction(i)] = 1.0;
        }
        out
    }

    /// Count of splits per (level, axis); the tree-structure summary view.
    pub fn direction_histogram(&self) -> Vec<Vec<usize>> {
        let mut hist = vec![vec![0usize; self.dim]; self.depth];
        for i in 1..=self.num_interior() {
            hist[Self::level_of(i) - 1][self.direction(i)] += 1;
        }
        hist
    }

    /// Hash of the split directions and leaf assignment; identifies the
    /// tree topology a forward trace was computed against.
    pub fn structure_fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x1000_0000_01b3);
        };
        mix(self.depth as u64);
        mix(self.dim as u64);
        for i in 1..=self.num_interior() {
            mix(self.nodes[i].direction as u64 + 1);
        }
        for &p in &self.leaf_points {
            mix(p as u64 + 0x9e37);
        }
        h
    }

    /// Structural invariants that do not need the cloud: level formula,
    /// direction bounds, and leaf permutation.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_leaves();
        if self.nodes.len() != n {
            return Err(Error::invalid(format!(
                "node array length {} for {} leaves",
                self.nodes.len(),
                n
            )));
        }
        for i in 1..=self.num_interior() {
            let node = &self.nodes[i];
            if node.direction as usize >= self.dim {
                return Err(Error::invalid(format!(
                    "node {i} direction {} out of range for dim {}",
                    node.direction, self.dim
                )));
            }
            if node.level as usize != Self::level_of(i) {
                return Err(Error::invalid(format!(
                    "node {i} level {} does not match its index",
                    node.level
                )));
            }
            if !node.threshold.is_finite() {
                return Err(Error::invalid(format!("node {i} threshold not finite")));
            }
        }
        let mut seen = vec![false; n];
        for &p in &self.leaf_points {
            let p = p as usize;
            if p >= n || seen[p] {
                return Err(Error::invalid(
                    "leaf points are not a permutation of the cloud indices",
                ));
            }
            seen[p] = true;
        }
        Ok(())
    }

    /// Full invariants against the source cloud: every point of the left
    /// subtree lies at or below the threshold along the split direction,
    /// every point of the right subtree at or above it.
    pub fn validate_against(&self, cloud: &PointCloud) -> Result<()> {
        self.validate()?;
        if cloud.len() != self.num_leaves() || cloud.dim() != self.dim {
            return Err(Error::Incompatible {
                what: "cloud for tree validation",
                expected: format!("{} points, dim {}", self.num_leaves(), self.dim),
                got: format!("{} points, dim {}", cloud.len(), cloud.dim()),
            });
        }
        for i in 1..=self.num_interior() {
            let node = &self.nodes[i];
            let axis = node.direction as usize;
            for (leaf, &point) in self.leaf_points.iter().enumerate() {
                let pos = self.num_leaves() + leaf;
                // Walk up from the leaf position to find which side of i it is on.
                let mut p = pos;
                while p > 1 && p / 2 != i {
                    p /= 2;
                }
                if p / 2 != i {
                    continue;
                }
                let coord = cloud.coord(point as usize, axis);
                if p % 2 == 0 {
                    if coord > node.threshold {
                        return Err(Error::invalid(format!(
                            "left subtree of node {i} has coordinate {coord} > threshold {}",
                            node.threshold
                        )));
                    }
                } else if coord < node.threshold {
                    return Err(Error::invalid(format!(
                        "right subtree of node {i} has coordinate {coord} < threshold {}",
                        node.threshold
                    )));
                }
            }
        }
        Ok(())
    }
}

fn build_node<R: Rng>(
    cloud: &PointCloud,
    sampler: &SplitSampler,
    rng: &mut R,
    node_idx: usize,
    subset: &mut [u32],
    nodes: &mut [KdNode],
) -> Result<()> {
    let dim = cloud.dim();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for &p in subset.iter() {
        for a in 0..dim {
            let v = cloud.coord(p as usize, a);
            lo[a] = lo[a].min(v);
            hi[a] = hi[a].max(v);
        }
    }
    let ranges: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| h - l).collect();
    let axis = sample_direction(&ranges, sampler, rng);

    subset.sort_unstable_by(|&a, &b| {
        let ca = cloud.coord(a as usize, axis);
        let cb = cloud.coord(b as usize, axis);
        ca.partial_cmp(&cb).expect("finite coords").then(a.cmp(&b))
    });
    let half = subset.len() / 2;
    let threshold = 0.5
        * (cloud.coord(subset[half - 1] as usize, axis) + cloud.coord(subset[half] as usize, axis));
    nodes[node_idx] = KdNode {
        direction: axis as u8,
        threshold,
        level: KdTree::level_of(node_idx) as u8,
    };

    if half > 1 {
        let (left, right) = subset.split_at_mut(half);
        build_node(cloud, sampler, rng, 2 * node_idx, left, nodes)?;
        build_node(cloud, sampler, rng, 2 * node_idx + 1, right, nodes)?;
    }
    Ok(())
}
