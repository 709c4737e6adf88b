use super::*;
use crate::kdtree::{SplitSampler, KdTree};
use crate::numerics::{finite_diff_grad, max_relative_error, softmax_cross_entropy};
use crate::pointcloud::PointCloud;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_cloud(n: usize, dim: usize, seed: u64) -> PointCloud {
    let mut r = rng(seed);
    let coords: Vec<f64> = (0..n * dim).map(|_| r.random_range(-1.0..1.0)).collect();
    PointCloud::new(dim, coords).unwrap()
}

/// Naive per-node recursive evaluator, written independently of the
/// level-sweep implementation: plain nested loops, one node at a time.
fn reference_logits(cloud: &PointCloud, tree: &KdTree, net: &KdNetwork) -> Vec<f64> {
    fn apply(w: &Matrix, b: &[f64], x: &[f64], relu: bool) -> Vec<f64> {
        let mut out = vec![0.0; w.rows()];
        for r in 0..w.rows() {
            let mut acc = b[r];
            for c in 0..w.cols() {
                acc += w.get(r, c) * x[c];
            }
            out[r] = if relu && acc < 0.0 { 0.0 } else { acc };
        }
        out
    }
    fn node_rep(pos: usize, cloud: &PointCloud, tree: &KdTree, net: &KdNetwork) -> Vec<f64> {
        let leaves = tree.num_leaves();
        if pos >= leaves {
            let point = tree.leaf_points()[pos - leaves] as usize;
            if net.spec.trivial_leaf {
                return vec![1.0];
            }
            let mut input = vec![0.0; cloud.leaf_input_dim()];
            cloud.copy_leaf_input(point, &mut input);
            return match (&net.leaf_w, &net.leaf_b) {
                (Some(w), Some(b)) => apply(&w.value, b.value.data(), &input, true),
                _ => input,
            };
        }
        let left = node_rep(2 * pos, cloud, tree, net);
        let right = node_rep(2 * pos + 1, cloud, tree, net);
        let mut concat = left;
        concat.extend(right);
        let level = KdTree::level_of(pos);
        let d = tree.direction(pos);
        let params = &net.levels[level - 1];
        apply(&params.w[d].value, params.b[d].value.data(), &concat, true)
    }
    let mut current = node_rep(1, cloud, tree, net);
    for (w, b) in &net.head_hidden {
        current = apply(&w.value, b.value.data(), &current, true);
    }
    apply(&net.head_w.value, net.head_b.value.data(), &current, false)
}

fn small_spec(depth: usize, dim: usize, seed: u64) -> ArchitectureSpec {
    let mut r = rng(seed);
    let level_dims: Vec<usize> = (0..depth).map(|_| r.random_range(1..=4)).collect();
    ArchitectureSpec::new(depth, dim, r.random_range(1..=4), level_dims, 3)
}

#[test]
fn d1_hand_example() {
    // Trivial leaves of size 1, one level with W = [[1, 1]], identity head:
    // v_1 = relu(1*1 + 1*1) = 2, logit = 2.
    let mut spec = ArchitectureSpec::new(1, 3, 1, vec![1], 1);
    spec.trivial_leaf = true;
    let mut net = KdNetwork::new(spec, &mut rng(0)).unwrap();
    for d in 0..3 {
        net.levels[0].w[d].value = Matrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
        net.levels[0].b[d].value.fill(0.0);
    }
    net.head_w.value = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
    net.head_b.value.fill(0.0);

    let cloud = random_cloud(2, 3, 1);
    let tree = KdTree::build(&cloud, &SplitSampler::deterministic(), &mut rng(0)).unwrap();
    let (logits, _) = forward(&cloud, &tree, &net).unwrap();
    assert_eq!(logits, vec![2.0]);
}

#[test]
fn zero_interior_weights_make_output_cloud_independent() {
    let spec = small_spec(3, 3, 2);
    let mut net = KdNetwork::new(spec, &mut rng(3)).unwrap();
    for level in &mut net.levels {
        for w in &mut level.w {
            w.value.fill(0.0);
        }
    }
    let cloud_a = random_cloud(8, 3, 4);
    let cloud_b = random_cloud(8, 3, 5);
    let tree_a = KdTree::build(&cloud_a, &SplitSampler::deterministic(), &mut rng(0)).unwrap();
    let tree_b = KdTree::build(&cloud_b, &SplitSampler::deterministic(), &mut rng(0)).unwrap();
    let (la, _) = forward(&cloud_a, &tree_a, &net).unwrap();
    let (lb, _) = forward(&cloud_b, &tree_b, &net).unwrap();
    assert_eq!(la, lb);
}

#[test]
fn forward_matches_recursive_reference() {
    for seed in 0..50 {
        let depth = 1 + (seed as usize % 4);
        let dim = if seed % 2 == 0 { 3 } else { 2 };
        let mut spec = small_spec(depth, dim, seed);
        if seed % 5 == 0 {
            spec.trivial_leaf = true;
        }
        if seed % 7 == 0 {
            spec.head_hidden = vec![3];
        }
        let net = KdNetwork::new(spec, &mut rng(seed + 100)).unwrap();
        let cloud = random_cloud(1 << depth, dim, seed + 200);
        let sampler = if seed % 3 == 0 {
            SplitSampler::randomized(10.0).unwrap()
        } else {
            SplitSampler::deterministic()
        };
        let tree = KdTree::build(&cloud, &sampler, &mut rng(seed + 300)).unwrap();
        let (logits, _) = forward(&cloud, &tree, &net).unwrap();
        let expected = reference_logits(&cloud, &tree, &net);
        for (a, b) in logits.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn trivial_leaves_are_all_ones() {
    let mut spec = small_spec(2, 3, 6);
    spec.trivial_leaf = true;
    let net = KdNetwork::new(spec, &mut rng(0)).unwrap();
    let cloud = random_cloud(4, 3, 7);
    let tree = KdTree::build(&cloud, &SplitSampler::deterministic(), &mut rng(0)).unwrap();
    let reps = leaf_representations(&cloud, &tree, &net).unwrap();
    assert_eq!(reps.shape(), (4, 1));
    assert!(reps.data().iter().all(|&v| v == 1.0));
}

#[test]
fn identity_leaf_transform_passes_nonnegative_coords() {
    let mut spec = ArchitectureSpec::new(2, 3, 3, vec![2, 2], 2);
    spec.leaf_dim = 3;
    let mut net = KdNetwork::new(spec, &mut rng(1)).unwrap();
    let eye = Matrix::from_vec(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    net.leaf_w.as_mut().unwrap().value = eye;
    net.leaf_b.as_mut().unwrap().value.fill(0.0);
    let coords: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
    let cloud = PointCloud::new(3, coords).unwrap();
    let tree = KdTree::build(&cloud, &SplitSampler::deterministic(), &mut rng(0)).unwrap();
    let reps = leaf_representations(&cloud, &tree, &net).unwrap();
    for (leaf, &point) in tree.leaf_points().iter().enumerate() {
        assert_eq!(reps.row(leaf), cloud.point(point as usize));
    }
}

#[test]
fn permuting_points_preserves_leaf_representation_multiset() {
    let spec = small_spec(3, 2, 8);
    let net = KdNetwork::new(spec, &mut rng(2)).unwrap();
    let cloud = random_cloud(8, 2, 9);
    // Reverse the point order; same geometric cloud.
    let mut rev_coords = Vec::new();
    for i in (0..cloud.len()).rev() {
        rev_coords.extend_from_slice(cloud.point(i));
    }
    let permuted = PointCloud::new(2, rev_coords).unwrap();
    let tree_a = KdTree::build(&cloud, &SplitSampler::deterministic(), &mut rng(0)).unwrap();
    let tree_b = KdTree::build(&permuted, &SplitSampler::deterministic(), &mut rng(0)).unwrap();
    let reps_a = leaf_representations(&cloud, &tree_a, &net).unwrap();
    let reps_b = leaf_representations(&permuted, &tree_b, &net).unwrap();
    let mut rows_a: Vec<Vec<f64>> = (0..8).map(|r| reps_a.row(r).to_vec()).collect();
    let mut rows_b: Vec<Vec<f64>> = (0..8).map(|r| reps_b.row(r).to_vec()).collect();
    let key = |v: &Vec<f64>| {
        v.iter()
            .map(|x| format!("{x:.15e}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    rows_a.sort_by_key(key);
    rows_b.sort_by_key(key);
    assert_eq!(rows_a, rows_b);
}

#[test]
fn zero_logit_grad_gives_zero_gradients() {
    let spec = small_spec(2, 3, 10);
    let net = KdNetwork::new(spec, &mut rng(11)).unwrap();
    let cloud = random_cloud(4, 3, 12);
    let tree = KdTree::build(&cloud, &SplitSampler::deterministic(), &mut rng(0)).unwrap();
    let (_, trace) = forward(&cloud, &tree, &net).unwrap();
    let grads = backward(&trace, &vec![0.0; 3], &tree, &net).unwrap();
    assert!(grads.flatten().iter().all(|&g| g == 0.0));
    assert!(grads.leaf_inputs.data().iter().all(|&g| g == 0.0));
}

#[test]
fn full_network_gradient_matches_finite_differences() {
    let mut spec = small_spec(3, 3, 13);
    spec.head_hidden = vec![3];
    let mut net = KdNetwork::new(spec, &mut rng(14)).unwrap();
    let cloud = random_cloud(8, 3, 15);
    let tree = KdTree::build(&cloud, &SplitSampler::deterministic(), &mut rng(0)).unwrap();
    let label = [1usize];

    let (_, trace) = forward(&cloud, &tree, &net).unwrap();
    let logits = Matrix::row_vector(trace.logits().to_vec()).unwrap();
    let (_, dlogits) = softmax_cross_entropy(&logits, &label).unwrap();
    let grads = backward(&trace, dlogits.row(0), &tree, &net).unwrap();
    let analytic = grads.flatten();

    let mut flat = net.flat_params();
    let numeric = finite_diff_grad(&mut flat, 1e-5, |theta| {
        let mut probe = net.clone();
        probe.set_flat_params(theta);
        let (logits, _) = forward(&cloud, &tree, &probe).unwrap();
        let logits = Matrix::row_vector(logits).unwrap();
        softmax_cross_entropy(&logits, &label).unwrap().0
    });
    let err = max_relative_error(&analytic, &numeric);
    assert!(err < 1e-5, "max relative error {err}");
}

#[test]
fn absent_direction_gets_zero_gradient() {
    // Collinear cloud along y: every split is on axis 1, so x/z weight
    // gradients vanish at every level.
    let coords: Vec<f64> = (0..8).flat_map(|i| [0.25, i as f64, -0.5]).collect();
    let cloud = PointCloud::new(3, coords).unwrap();
    let tree = KdTree::build(&cloud, &SplitSampler::deterministic(), &mut rng(0)).unwrap();
    let spec = small_spec(3, 3, 16);
    let net = KdNetwork::new(spec, &mut rng(17)).unwrap();
    let (_, trace) = forward(&cloud, &tree, &net).unwrap();
    let grads = backward(&trace, &[1.0, -0.5, 0.25], &tree, &net).unwrap();
    for l in 1..=3 {
        for d in [0usize, 2] {
            let idx = net.grad_index_level_w(l, d);
            assert!(grads.tensors[idx].data().iter().all(|&g| g == 0.0));
            assert!(grads.tensors[idx + 1].data().iter().all(|&g| g == 0.0));
        }
        let idx_y = net.grad_index_level_w(l, 1);
        assert!(grads.tensors[idx_y].data().iter().any(|&g| g != 0.0));
    }
}

#[test]
fn mutating_one_shared_tensor_only_affects_its_direction() {
    // A cloud engineered so level 2 contains both an x and a y split.
    let coords = vec![
        0.0, 0.0, 0.0, //
        4.0, 0.1, 0.0, //
        0.1, 3.0, 0.0, //
        0.2, -3.0, 0.0,
    ];
    let cloud = PointCloud::new(3, coords).unwrap();
    let tree = KdTree::build(&cloud, &SplitSampler::deterministic(), &mut rng(0)).unwrap();
    let dirs: Vec<usize> = (1..=3).map(|i| tree.direction(i)).collect();
    assert!(dirs[1] != dirs[2], "want mixed directions at level 2: {dirs:?}");

    let spec = small_spec(2, 3, 18);
    let mut net = KdNetwork::new(spec, &mut rng(19)).unwrap();
    let (_, trace) = forward(&cloud, &tree, &net).unwrap();
    let before: Vec<Matrix> = (1..=3).map(|l| trace.levels[l].clone()).collect();

    // Perturb the level-2 transform for the direction of node 2 only.
    let d2 = tree.direction(2);
    for v in net.levels[1].w[d2].value.data_mut() {
        *v += 0.5;
    }
    let (_, trace2) = forward(&cloud, &tree, &net).unwrap();
    // Node 2 (row 0 of level 2) changes, node 3 (row 1) does not.
    assert_ne!(trace2.levels[2].row(0), before[1].row(0));
    assert_eq!(trace2.levels[2].row(1), before[1].row(1));
    // Leaf representations untouched.
    assert_eq!(trace2.levels[3], before[2]);
}

#[test]
fn threshold_perturbation_leaves_logits_bit_identical() {
    let spec = small_spec(3, 3, 20);
    let net = KdNetwork::new(spec, &mut rng(21)).unwrap();
    let cloud = random_cloud(8, 3, 22);
    let mut tree = KdTree::build(&cloud, &SplitSampler::deterministic(), &mut rng(0)).unwrap();
    let (logits, _) = forward(&cloud, &tree, &net).unwrap();
    for i in 1..=tree.num_interior() {
        tree.node_mut(i).threshold += 17.0;
    }
    let (perturbed, _) = forward(&cloud, &tree, &net).unwrap();
    assert_eq!(logits, perturbed);
}

#[test]
fn jitter_preserving_split_directions_keeps_trivial_leaf_logits() {
    let mut spec = small_spec(3, 3, 23);
    spec.trivial_leaf = true;
    let net = KdNetwork::new(spec, &mut rng(24)).unwrap();
    let cloud = random_cloud(8, 3, 25);
    let tree = KdTree::build(&cloud, &SplitSampler::deterministic(), &mut rng(0)).unwrap();
    let (logits, _) = forward(&cloud, &tree, &net).unwrap();

    let mut r = rng(26);
    let jittered_coords: Vec<f64> = cloud
        .coords()
        .iter()
        .map(|v| v + r.random_range(-1e-9..1e-9))
        .collect();
    let jittered = PointCloud::new(3, jittered_coords).unwrap();
    let jtree = KdTree::build(&jittered, &SplitSampler::deterministic(), &mut rng(0)).unwrap();
    let same_dirs = (1..=tree.num_interior()).all(|i| tree.direction(i) == jtree.direction(i));
    assert!(same_dirs, "jitter flipped a split direction");
    let (jlogits, _) = forward(&jittered, &jtree, &net).unwrap();
    assert_eq!(logits, jlogits);
}

#[test]
fn backward_rejects_stale_trace() {
    let spec = small_spec(2, 3, 27);
    let net = KdNetwork::new(spec, &mut rng(28)).unwrap();
    let cloud = random_cloud(4, 3, 29);
    let tree = KdTree::build(&cloud, &SplitSampler::deterministic(), &mut rng(0)).unwrap();
    let (_, trace) = forward(&cloud, &tree, &net).unwrap();
    let other = random_cloud(4, 3, 30);
    let other_tree = KdTree::build(&other, &SplitSampler::deterministic(), &mut rng(0)).unwrap();
    assert!(backward(&trace, &[0.0; 3], &other_tree, &net).is_err());
}

#[test]
fn shared_parameter_count_follows_dim_and_depth() {
    for (depth, dim) in [(1usize, 3usize), (3, 2), (4, 3)] {
        let spec = small_spec(depth, dim, depth as u64 * 31 + dim as u64);
        let net = KdNetwork::new(spec, &mut rng(0)).unwrap();
        let interior: usize = net.levels.iter().map(|l| l.w.len() + l.b.len()).sum();
        assert_eq!(interior, 2 * dim * depth);
    }
}
