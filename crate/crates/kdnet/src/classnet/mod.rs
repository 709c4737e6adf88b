//! The kd-tree classifier: shared leaf transform, bottom-up
//! direction-conditioned affine layers, linear classifier head, and full
//! reverse-mode backward pass.
//!
//! Interior levels are numbered 1 (root) through `D`; level `l` holds
//! `2^{l-1}` nodes and one affine transform per split direction, shared by
//! every level-`l` node that splits along that direction. A node combines
//! the concatenated representations of its two children, so the level-`l`
//! weights map `2 * m^{l+1} -> m^l`, where `m^{D+1}` is the leaf
//! representation size. Split thresholds never enter the computation;
//! only split directions and leaf representations do.

mod baseline;
mod batched;
mod checkpoint;

pub use baseline::{split_features, train_baseline, BaselineConfig, LinearBaseline};
pub use batched::forward_batched;
pub use checkpoint::{KDNW_MAGIC, KDNW_VERSION};

use rand::Rng;

use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::numerics::{self, Matrix, Param};
use crate::pointcloud::PointCloud;

/// Shape of a classifier network.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchitectureSpec {
    /// Tree depth; the network consumes clouds of `2^depth` points.
    pub depth: usize,
    /// Spatial dimensionality (2 or 3); also the number of split
    /// directions and so of shared transforms per level.
    pub dim: usize,
    /// Per-point input size: coordinates plus any attached features.
    pub input_dim: usize,
    /// Output size of the shared leaf transform.
    pub leaf_dim: usize,
    /// Representation sizes `m^1..m^D`, root first.
    pub level_dims: Vec<usize>,
    pub num_classes: usize,
    /// Apply the shared per-point affine+ReLU leaf transform. When off,
    /// raw coordinates are the leaf representations.
    pub leaf_transform: bool,
    /// Ablation: every leaf representation is the scalar 1, so the
    /// network sees only tree structure.
    pub trivial_leaf: bool,
    /// Optional fully connected ReLU layers between the root
    /// representation and the classifier.
    pub head_hidden: Vec<usize>,
}

impl ArchitectureSpec {
    pub fn new(
        depth: usize,
        dim: usize,
        leaf_dim: usize,
        level_dims: Vec<usize>,
        num_classes: usize,
    ) -> Self {
        ArchitectureSpec {
            depth,
            dim,
            input_dim: dim,
            leaf_dim,
            level_dims,
            num_classes,
            leaf_transform: true,
            trivial_leaf: false,
            head_hidden: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > 31 {
            return Err(Error::invalid(format!("depth {} out of range", self.depth)));
        }
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::invalid(format!("dim must be 2 or 3, got {}", self.dim)));
        }
        if self.level_dims.len() != self.depth {
            return Err(Error::invalid(format!(
                "{} level dims for depth {}",
                self.level_dims.len(),
                self.depth
            )));
        }
        if self.level_dims.iter().any(|&d| d == 0) || self.num_classes == 0 {
            return Err(Error::invalid("dimensions must be >= 1"));
        }
        if self.input_dim < self.dim {
            return Err(Error::invalid("input_dim smaller than spatial dim"));
        }
        if !self.trivial_leaf && !self.leaf_transform && self.leaf_dim != self.input_dim {
            return Err(Error::invalid(
                "without a leaf transform the leaf size must equal the input size",
            ));
        }
        if !self.trivial_leaf && self.leaf_dim == 0 {
            return Err(Error::invalid("leaf_dim must be >= 1"));
        }
        Ok(())
    }

    /// Representation size of tree level `l`; `D + 1` is the leaf level.
    pub fn rep_dim(&self, level: usize) -> usize {
        if level == self.depth + 1 {
            self.leaf_rep_dim()
        } else {
            self.level_dims[level - 1]
        }
    }

    pub fn leaf_rep_dim(&self) -> usize {
        if self.trivial_leaf {
            1
        } else if self.leaf_transform {
            self.leaf_dim
        } else {
            self.input_dim
        }
    }

    fn has_leaf_params(&self) -> bool {
        self.leaf_transform && !self.trivial_leaf
    }

    /// Keeps the root-side levels of the architecture and drops the
    /// `depth - new_depth` levels nearest the leaves.
    pub fn truncated(&self, new_depth: usize) -> Result<ArchitectureSpec> {
        if new_depth == 0 || new_depth > self.depth {
            return Err(Error::invalid(format!(
                "cannot truncate depth {} to {new_depth}",
                self.depth
            )));
        }
        let mut out = self.clone();
        out.depth = new_depth;
        out.level_dims = self.level_dims[..new_depth].to_vec();
        Ok(out)
    }
}

/// One tree level's learnable transforms, one `(W, b)` pair per split
/// direction.
#[derive(Clone, Debug)]
pub struct DirectionalLayerParams {
    pub w: Vec<Param>,
    pub b: Vec<Param>,
}

#[derive(Clone, Debug)]
pub struct KdNetwork {
    pub spec: ArchitectureSpec,
    pub leaf_w: Option<Param>,
    pub leaf_b: Option<Param>,
    /// Indexed by level - 1.
    pub levels: Vec<DirectionalLayerParams>,
    pub head_hidden: Vec<(Param, Param)>,
    pub head_w: Param,
    pub head_b: Param,
}

const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

impl KdNetwork {
    /// Initializes a network with scaled-uniform weights and zero biases;
    /// parameters are drawn in checkpoint order from `rng`.
    pub fn new<R: Rng>(spec: ArchitectureSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let (leaf_w, leaf_b) = if spec.has_leaf_params() {
            (
                Some(Param::new(
                    "leaf.w",
                    numerics::init_params(spec.leaf_dim, spec.input_dim, spec.input_dim, rng),
                )),
                Some(Param::new("leaf.b", numerics::zero_bias(spec.leaf_dim))),
            )
        } else {
            (None, None)
        };
        let mut levels = Vec::with_capacity(spec.depth);
        for l in 1..=spec.depth {
            let out_dim = spec.rep_dim(l);
            let in_dim = 2 * spec.rep_dim(l + 1);
            let mut w = Vec::with_capacity(spec.dim);
            let mut b = Vec::with_capacity(spec.dim);
            for d in 0..spec.dim {
                w.push(Param::new(
                    format!("level{l}.w.{}", AXIS_NAMES[d]),
                    numerics::init_params(out_dim, in_dim, in_dim, rng),
                ));
                b.push(Param::new(
                    format!("level{l}.b.{}", AXIS_NAMES[d]),
                    numerics::zero_bias(out_dim),
                ));
            }
            levels.push(DirectionalLayerParams { w, b });
        }
        let mut head_hidden = Vec::with_capacity(spec.head_hidden.len());
        let mut in_dim = spec.rep_dim(1);
        for (k, &h) in spec.head_hidden.iter().enumerate() {
            head_hidden.push((
                Param::new(
                    format!("head.hidden{k}.w"),
                    numerics::init_params(h, in_dim, in_dim, rng),
                ),
                Param::new(format!("head.hidden{k}.b"), numerics::zero_bias(h)),
            ));
            in_dim = h;
        }
        let head_w = Param::new(
            "head.w",
            numerics::init_params(spec.num_classes, in_dim, in_dim, rng),
        );
        let head_b = Param::new("head.b", numerics::zero_bias(spec.num_classes));
        Ok(KdNetwork {
            spec,
            leaf_w,
            leaf_b,
            levels,
            head_hidden,
            head_w,
            head_b,
        })
    }

    /// Parameters in checkpoint order: leaf transform, levels root to
    /// leaves with per-level directions x, y, z (weights before biases),
    /// head hidden layers, classifier last.
    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        if let (Some(w), Some(b)) = (&self.leaf_w, &self.leaf_b) {
            out.push(w);
            out.push(b);
        }
        for level in &self.levels {
            for d in 0..level.w.len() {
                out.push(&level.w[d]);
                out.push(&level.b[d]);
            }
        }
        for (w, b) in &self.head_hidden {
            out.push(w);
            out.push(b);
        }
        out.push(&self.head_w);
        out.push(&self.head_b);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = Vec::new();
        if let (Some(w), Some(b)) = (self.leaf_w.as_mut(), self.leaf_b.as_mut()) {
            out.push(w);
            out.push(b);
        }
        for level in &mut self.levels {
            for (w, b) in level.w.iter_mut().zip(level.b.iter_mut()) {
                out.push(w);
                out.push(b);
            }
        }
        for (w, b) in &mut self.head_hidden {
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.value.data().len()).sum()
    }

    fn grad_base(&self) -> usize {
        if self.spec.has_leaf_params() {
            2
        } else {
            0
        }
    }

    fn grad_index_level_w(&self, level: usize, dir: usize) -> usize {
        self.grad_base() + ((level - 1) * self.spec.dim + dir) * 2
    }

    fn grad_index_hidden(&self, k: usize) -> usize {
        self.grad_base() + self.spec.depth * self.spec.dim * 2 + 2 * k
    }

    fn grad_index_head(&self) -> usize {
        self.grad_index_hidden(self.head_hidden.len())
    }

    /// Adds a gradient set into the parameters' accumulators.
    pub fn accumulate(&mut self, grads: &Gradients) {
        let mut params = self.params_mut();
        assert_eq!(params.len(), grads.tensors.len());
        for (p, g) in params.iter_mut().zip(&grads.tensors) {
            p.grad.add_assign(g);
        }
    }

    /// Concatenation of all parameter values in checkpoint order; used by
    /// the finite-difference oracle.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for p in self.params() {
            out.extend_from_slice(p.value.data());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for p in self.params_mut() {
            let len = p.value.data().len();
            p.value.data_mut().copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        assert_eq!(offset, flat.len(), "flat parameter vector length mismatch");
    }

    /// Root representation size (the descriptor dimension).
    pub fn root_dim(&self) -> usize {
        self.spec.rep_dim(1)
    }
}

/// Per-parameter gradients in checkpoint order plus gradients with
/// respect to the leaf input vectors.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub tensors: Vec<Matrix>,
    pub leaf_inputs: Matrix,
}

impl Gradients {
    pub fn zeros_for(net: &KdNetwork) -> Self {
        let tensors = net
            .params()
            .iter()
            .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        Gradients {
            tensors,
            leaf_inputs: Matrix::zeros(1 << net.spec.depth, net.spec.input_dim),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        assert_eq!(self.tensors.len(), other.tensors.len());
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
        self.leaf_inputs.add_assign(&other.leaf_inputs);
    }

    /// Parameter gradients flattened in checkpoint order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for t in &self.tensors {
            out.extend_from_slice(t.data());
        }
        out
    }
}

/// Node representations cached by a forward pass, indexed by tree level;
/// entry `D + 1` holds the leaf representations.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub(crate) levels: Vec<Matrix>,
    pub(crate) leaf_inputs: Matrix,
    pub(crate) hidden: Vec<Vec<f64>>,
    pub(crate) logits: Vec<f64>,
    pub(crate) tree_fp: u64,
}

impl ForwardTrace {
    pub fn root(&self) -> &[f64] {
        self.levels[1].row(0)
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// Representation matrix of one tree level (leaves at `depth + 1`).
    pub fn level(&self, l: usize) -> &Matrix {
        &self.levels[l]
    }
}

fn check_sample(cloud: &PointCloud, tree: &KdTree, net: &KdNetwork) -> Result<()> {
    let spec = &net.spec;
    if tree.depth() != spec.depth || cloud.len() != 1 << spec.depth {
        return Err(Error::Incompatible {
            what: "sample for network",
            expected: format!("tree depth {} over {} points", spec.depth, 1 << spec.depth),
            got: format!("tree depth {} over {} points", tree.depth(), cloud.len()),
        });
    }
    if tree.dim() != spec.dim || cloud.dim() != spec.dim {
        return Err(Error::Incompatible {
            what: "spatial dimensionality",
            expected: spec.dim.to_string(),
            got: format!("tree {} / cloud {}", tree.dim(), cloud.dim()),
        });
    }
    if !spec.trivial_leaf && cloud.leaf_input_dim() != spec.input_dim {
        return Err(Error::Incompatible {
            what: "leaf input size",
            expected: spec.input_dim.to_string(),
            got: cloud.leaf_input_dim().to_string(),
        });
    }
    Ok(())
}

fn gather_leaf_inputs(cloud: &PointCloud, tree: &KdTree, input_dim: usize) -> Matrix {
    let mut inputs = Matrix::zeros(tree.num_leaves(), input_dim);
    for (leaf, &point) in tree.leaf_points().iter().enumerate() {
        cloud.copy_leaf_input(point as usize, inputs.row_mut(leaf));
    }
    inputs
}

/// Per-leaf representation vectors in leaf order: the scalar 1 under the
/// trivial-leaf ablation, otherwise the shared affine+ReLU transform of
/// the leaf's input vector (or the raw inputs when the transform is off).
pub fn leaf_representations(
    cloud: &PointCloud,
    tree: &KdTree,
    net: &KdNetwork,
) -> Result<Matrix> {
    check_sample(cloud, tree, net)?;
    if net.spec.trivial_leaf {
        let mut m = Matrix::zeros(tree.num_leaves(), 1);
        m.fill(1.0);
        return Ok(m);
    }
    let inputs = gather_leaf_inputs(cloud, tree, net.spec.input_dim);
    leaf_representations_from_inputs(&inputs, net)
}

fn leaf_representations_from_inputs(inputs: &Matrix, net: &KdNetwork) -> Result<Matrix> {
    match (&net.leaf_w, &net.leaf_b) {
        (Some(w), Some(b)) => {
            let mut reps = numerics::affine(&w.value, inputs, b.value.data())?;
            numerics::relu_inplace(&mut reps);
            Ok(reps)
        }
        _ => Ok(inputs.clone()),
    }
}

/// Bottom-up pass: combines child representations level by level using
/// the transform selected by each node's split direction, then applies
/// the classifier head to the root. Returns unnormalized class scores
/// and the trace needed for `backward`.
pub fn forward(
    cloud: &PointCloud,
    tree: &KdTree,
    net: &KdNetwork,
) -> Result<(Vec<f64>, ForwardTrace)> {
    check_sample(cloud, tree, net)?;
    let leaf_inputs = if net.spec.trivial_leaf {
        Matrix::zeros(tree.num_leaves(), net.spec.input_dim)
    } else {
        gather_leaf_inputs(cloud, tree, net.spec.input_dim)
    };
    let leaf_reps = if net.spec.trivial_leaf {
        let mut m = Matrix::zeros(tree.num_leaves(), 1);
        m.fill(1.0);
        m
    } else {
        leaf_representations_from_inputs(&leaf_inputs, net)?
    };
    let depth = net.spec.depth;

    let mut levels: Vec<Matrix> = Vec::with_capacity(depth + 2);
    levels.push(Matrix::zeros(0, 0));
    for l in 1..=depth {
        levels.push(Matrix::zeros(1 << (l - 1), net.spec.rep_dim(l)));
    }
    levels.push(leaf_reps);

    let mut concat = Vec::new();
    for l in (1..=depth).rev() {
        let child_dim = net.spec.rep_dim(l + 1);
        concat.resize(2 * child_dim, 0.0);
        let (head, tail) = levels.split_at_mut(l + 1);
        let out = &mut head[l];
        let children = &tail[0];
        let level_params = &net.levels[l - 1];
        for r in 0..out.rows() {
            let node = (1 << (l - 1)) + r;
            let d = tree.direction(node);
            concat[..child_dim].copy_from_slice(children.row(2 * r));
            concat[child_dim..].copy_from_slice(children.row(2 * r + 1));
            let row = out.row_mut(r);
            level_params.w[d].value.matvec(&concat, row);
            for (slot, bv) in row.iter_mut().zip(level_params.b[d].value.data()) {
                *slot += bv;
            }
            numerics::relu_slice(row);
        }
    }

    let mut hidden = Vec::with_capacity(net.head_hidden.len());
    let mut current = levels[1].row(0).to_vec();
    for (w, b) in &net.head_hidden {
        let mut next = vec![0.0; w.value.rows()];
        w.value.matvec(&current, &mut next);
        for (slot, bv) in next.iter_mut().zip(b.value.data()) {
            *slot += bv;
        }
        numerics::relu_slice(&mut next);
        hidden.push(next.clone());
        current = next;
    }
    let mut logits = vec![0.0; net.spec.num_classes];
    net.head_w.value.matvec(&current, &mut logits);
    for (slot, bv) in logits.iter_mut().zip(net.head_b.value.data()) {
        *slot += bv;
    }

    let trace = ForwardTrace {
        levels,
        leaf_inputs,
        hidden,
        logits: logits.clone(),
        tree_fp: tree.structure_fingerprint(),
    };
    Ok((logits, trace))
}

/// Reverse-mode pass from a logit gradient. Gradients of nodes sharing a
/// (level, direction) pair are summed into the one shared tensor; the
/// returned set also carries gradients for the leaf input vectors.
pub fn backward(
    trace: &ForwardTrace,
    logit_grad: &[f64],
    tree: &KdTree,
    net: &KdNetwork,
) -> Result<Gradients> {
    if trace.tree_fp != tree.structure_fingerprint() {
        return Err(Error::Incompatible {
            what: "forward trace",
            expected: "a trace computed against this tree".into(),
            got: "a trace from a different tree".into(),
        });
    }
    if trace.levels.len() != net.spec.depth + 2
        || logit_grad.len() != net.spec.num_classes
        || trace.levels[1].cols() != net.spec.rep_dim(1)
    {
        return Err(Error::Incompatible {
            what: "forward trace",
            expected: "a trace computed with this network".into(),
            got: "mismatched shapes".into(),
        });
    }
    let depth = net.spec.depth;
    let mut grads = Gradients::zeros_for(net);

    // Head, walking the hidden stack in reverse.
    let mut g = logit_grad.to_vec();
    let head_idx = net.grad_index_head();
    {
        let input: &[f64] = if let Some(last) = trace.hidden.last() {
            last
        } else {
            trace.levels[1].row(0)
        };
        grads.tensors[head_idx].outer_add(&g, input);
        for (slot, &gv) in grads.tensors[head_idx + 1].data_mut().iter_mut().zip(&g) {
            *slot += gv;
        }
        let mut dinput = vec![0.0; input.len()];
        net.head_w.value.matvec_t_add(&g, &mut dinput);
        g = dinput;
    }
    for k in (0..net.head_hidden.len()).rev() {
        numerics::relu_mask(&mut g, &trace.hidden[k]);
        let input: &[f64] = if k == 0 {
            trace.levels[1].row(0)
        } else {
            &trace.hidden[k - 1]
        };
        let idx = net.grad_index_hidden(k);
        grads.tensors[idx].outer_add(&g, input);
        for (slot, &gv) in grads.tensors[idx + 1].data_mut().iter_mut().zip(&g) {
            *slot += gv;
        }
        let mut dinput = vec![0.0; input.len()];
        net.head_hidden[k].0.value.matvec_t_add(&g, &mut dinput);
        g = dinput;
    }

    // Level-by-level downward sweep.
    let mut dlevels: Vec<Matrix> = trace
        .levels
        .iter()
        .map(|m| Matrix::zeros(m.rows(), m.cols()))
        .collect();
    dlevels[1].row_mut(0).copy_from_slice(&g);

    let mut concat = Vec::new();
    let mut dconcat = Vec::new();
    for l in 1..=depth {
        let child_dim = net.spec.rep_dim(l + 1);
        concat.resize(2 * child_dim, 0.0);
        dconcat.resize(2 * child_dim, 0.0);
        let children = &trace.levels[l + 1];
        for r in 0..trace.levels[l].rows() {
            let node = (1 << (l - 1)) + r;
            let d = tree.direction(node);
            let out_row = trace.levels[l].row(r);

            let (left, right) = dlevels.split_at_mut(l + 1);
            let dout = left[l].row_mut(r);
            numerics::relu_mask(dout, out_row);

            concat[..child_dim].copy_from_slice(children.row(2 * r));
            concat[child_dim..].copy_from_slice(children.row(2 * r + 1));

            let widx = net.grad_index_level_w(l, d);
            grads.tensors[widx].outer_add(dout, &concat);
            for (slot, &gv) in grads.tensors[widx + 1].data_mut().iter_mut().zip(dout.iter()) {
                *slot += gv;
            }

            dconcat.fill(0.0);
            net.levels[l - 1].w[d].value.matvec_t_add(dout, &mut dconcat);
            let dchildren = &mut right[0];
            for (slot, &gv) in dchildren.row_mut(2 * r).iter_mut().zip(&dconcat[..child_dim]) {
                *slot += gv;
            }
            for (slot, &gv) in dchildren
                .row_mut(2 * r + 1)
                .iter_mut()
                .zip(&dconcat[child_dim..])
            {
                *slot += gv;
            }
        }
    }

    // Leaf transform (or pass-through) backward.
    let dleaf = &mut dlevels[depth + 1];
    if net.spec.trivial_leaf {
        // Constant leaves: no parameters, zero input gradient.
    } else if let (Some(w), Some(_)) = (&net.leaf_w, &net.leaf_b) {
        for r in 0..dleaf.rows() {
            let out_row = trace.levels[depth + 1].row(r);
            let g_row = dleaf.row_mut(r);
            numerics::relu_mask(g_row, out_row);
        }
        for r in 0..dleaf.rows() {
            let g_row = dleaf.row(r);
            grads.tensors[0].outer_add(g_row, trace.leaf_inputs.row(r));
            for (slot, &gv) in grads.tensors[1].data_mut().iter_mut().zip(g_row) {
                *slot += gv;
            }
            w.value.matvec_t_add(g_row, grads.leaf_inputs.row_mut(r));
        }
    } else {
        grads.leaf_inputs = dleaf.clone();
    }

    Ok(grads)
}

#[cfg(test)]
mod tests;
