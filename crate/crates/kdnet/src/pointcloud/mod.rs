//! Point-cloud data model, normalization, resampling, raster ingestion,
//! and geometric augmentation.

mod format;
mod idx;
mod mesh;

pub use idx::{read_idx_images, read_idx_labels, write_idx_images, write_idx_labels, IdxImages};
pub use mesh::TriangleMesh;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// An ordered set of 2D or 3D points with optional per-point attribute
/// vectors, per-point part labels, and a shape-class label.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    feature_dim: usize,
    features: Vec<f64>,
    labels: Option<Vec<u32>>,
    class_label: Option<u32>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::invalid(format!("dim must be 2 or 3, got {dim}")));
        }
        if coords.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "coordinate buffer length {} is not a multiple of dim {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coordinates must be finite"));
        }
        Ok(PointCloud {
            dim,
            coords,
            feature_dim: 0,
            features: Vec::new(),
            labels: None,
            class_label: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} points",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_class(mut self, class: u32) -> Self {
        self.class_label = Some(class);
        self
    }

    pub fn with_features(mut self, feature_dim: usize, features: Vec<f64>) -> Result<Self> {
        if feature_dim == 0 || features.len() != feature_dim * self.len() {
            return Err(Error::invalid(format!(
                "feature buffer length {} does not match {} points x dim {feature_dim}",
                features.len(),
                self.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("features must be finite"));
        }
        self.feature_dim = feature_dim;
        self.features = features;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn coord(&self, i: usize, axis: usize) -> f64 {
        self.coords[i * self.dim + axis]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features_of(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn class_label(&self) -> Option<u32> {
        self.class_label
    }

    /// Dimensionality of the per-point vector fed to leaf transforms:
    /// spatial coordinates followed by any attached features.
    pub fn leaf_input_dim(&self) -> usize {
        self.dim + self.feature_dim
    }

    pub fn copy_leaf_input(&self, i: usize, out: &mut [f64]) {
        out[..self.dim].copy_from_slice(self.point(i));
        if self.feature_dim > 0 {
            out[self.dim..].copy_from_slice(self.features_of(i));
        }
    }

    /// Centers the cloud at the origin and rescales isotropically so the
    /// maximum absolute coordinate is exactly 1. A degenerate cloud whose
    /// points coincide maps to the origin.
    pub fn normalize(&self) -> Result<PointCloud> {
        if self.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let n = self.len() as f64;
        let mut centroid = vec![0.0; self.dim];
        for i in 0..self.len() {
            for (c, &v) in centroid.iter_mut().zip(self.point(i)) {
                *c += v;
            }
        }
        for c in &mut centroid {
            *c /= n;
        }
        let mut out = self.clone();
        let mut max_abs: f64 = 0.0;
        for i in 0..out.len() {
            for a in 0..self.dim {
                let v = out.coords[i * self.dim + a] - centroid[a];
                out.coords[i * self.dim + a] = v;
                max_abs = max_abs.max(v.abs());
            }
        }
        if max_abs > 0.0 {
            for v in &mut out.coords {
                *v /= max_abs;
            }
        }
        Ok(out)
    }

    /// Resamples to exactly `target` points (a power of two).
    ///
    /// Downsampling draws a uniform subset without replacement;
    /// upsampling keeps every original point and appends duplicates of
    /// uniformly chosen points perturbed by Gaussian noise
    /// (`sigma = 0.01` in normalized units), copying labels and features.
    /// The second return value maps each output index to its source index.
    pub fn resample<R: Rng>(&self, target: usize, rng: &mut R) -> Result<(PointCloud, Vec<u32>)> {
        if self.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if !target.is_power_of_two() {
            return Err(Error::NotPowerOfTwo {
                what: "resample target",
                got: target,
            });
        }
        let n = self.len();
        let provenance: Vec<u32> = if target == n {
            (0..n as u32).collect()
        } else if target < n {
            let mut chosen = rand::seq::index::sample(rng, n, target).into_vec();
            chosen.sort_unstable();
            chosen.into_iter().map(|i| i as u32).collect()
        } else {
            let mut map: Vec<u32> = (0..n as u32).collect();
            map.extend((n..target).map(|_| rng.random_range(0..n) as u32));
            map
        };

        let noise = Normal::new(0.0, UPSAMPLE_NOISE_SIGMA).expect("valid sigma");
        let mut coords = Vec::with_capacity(target * self.dim);
        let mut features = Vec::with_capacity(target * self.feature_dim);
        let mut labels = self.labels.as_ref().map(|_| Vec::with_capacity(target));
        for (out_idx, &src) in provenance.iter().enumerate() {
            let src = src as usize;
            let is_duplicate = out_idx >= n && target > n;
            for &v in self.point(src) {
                coords.push(if is_duplicate { v + noise.sample(rng) } else { v });
            }
            if self.feature_dim > 0 {
                features.extend_from_slice(self.features_of(src));
            }
            if let (Some(ls), Some(src_labels)) = (&mut labels, &self.labels) {
                ls.push(src_labels[src]);
            }
        }
        let cloud = PointCloud {
            dim: self.dim,
            coords,
            feature_dim: self.feature_dim,
            features,
            labels,
            class_label: self.class_label,
        };
        Ok((cloud, provenance))
    }

    /// Applies a random global translation and anisotropic horizontal
    /// rescaling, identically to every point.
    pub fn augment<R: Rng>(&self, cfg: &AugmentConfig, rng: &mut R) -> PointCloud {
        let mut out = self.clone();
        if cfg.scale {
            let mut factors = vec![1.0; self.dim];
            for &axis in &horizontal_axes(self.dim) {
                factors[axis] = rng.random_range(cfg.scale_min..=cfg.scale_max);
            }
            for i in 0..out.len() {
                for a in 0..self.dim {
                    out.coords[i * self.dim + a] *= factors[a];
                }
            }
        }
        if cfg.translate {
            let shift: Vec<f64> = (0..self.dim)
                .map(|_| rng.random_range(-cfg.translate_fraction..=cfg.translate_fraction))
                .collect();
            for i in 0..out.len() {
                for a in 0..self.dim {
                    out.coords[i * self.dim + a] += shift[a];
                }
            }
        }
        out
    }
}

/// Noise added to duplicated points when oversampling, in normalized units.
pub const UPSAMPLE_NOISE_SIGMA: f64 = 0.01;

/// Default noise added to raster pixel centers, in pixel units.
pub const PIXEL_NOISE_SIGMA: f64 = 0.2;

/// Axes subject to anisotropic scaling: both axes in 2D, the two
/// non-vertical axes in 3D (models are upright along the third axis).
pub fn horizontal_axes(dim: usize) -> Vec<usize> {
    match dim {
        2 => vec![0, 1],
        _ => vec![0, 1],
    }
}

/// Random geometric perturbations applied per training sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub translate: bool,
    pub translate_fraction: f64,
    pub scale: bool,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        AugmentConfig {
            translate: false,
            translate_fraction: 0.1,
            scale: false,
            scale_min: 0.66,
            scale_max: 1.5,
        }
    }

    /// Both perturbations on, with the standard ranges.
    pub fn standard() -> Self {
        AugmentConfig {
            translate: true,
            scale: true,
            ..AugmentConfig::disabled()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.translate_fraction) {
            return Err(Error::invalid(format!(
                "translate_fraction must be in [0, 1), got {}",
                self.translate_fraction
            )));
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max) {
            return Err(Error::invalid(format!(
                "scale range [{}, {}] invalid",
                self.scale_min, self.scale_max
            )));
        }
        Ok(())
    }
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig::disabled()
    }
}

/// Converts a grayscale raster into a 2D cloud: `n` points sampled with
/// replacement from the centers of non-zero pixels, perturbed by Gaussian
/// noise in pixel units, then normalized to `[-1, 1]^2`.
pub fn image_to_cloud<R: Rng>(
    pixels: &[u8],
    height: usize,
    width: usize,
    n: usize,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<PointCloud> {
    assert_eq!(pixels.len(), height * width);
    let centers: Vec<(f64, f64)> = pixels
        .iter()
        .enumerate()
        .filter(|(_, &p)| p != 0)
        .map(|(idx, _)| {
            let row = idx / width;
            let col = idx % width;
            // x right, y up, centers at half-integer pixel coordinates
            (col as f64 + 0.5, (height - 1 - row) as f64 + 0.5)
        })
        .collect();
    if centers.is_empty() {
        return Err(Error::BlankImage);
    }
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut coords = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let (x, y) = centers[rng.random_range(0..centers.len())];
        if noise_sigma > 0.0 {
            coords.push(x + noise.sample(rng));
            coords.push(y + noise.sample(rng));
        } else {
            coords.push(x);
            coords.push(y);
        }
    }
    PointCloud::new(2, coords)?.normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn normalize_symmetric_pair() {
        let cloud = PointCloud::new(3, vec![0.0, 0.0, 0.0, 2.0, 0.0, 0.0]).unwrap();
        let out = cloud.normalize().unwrap();
        assert_eq!(out.point(0), &[-1.0, 0.0, 0.0]);
        assert_eq!(out.point(1), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_is_idempotent() {
        let cloud = PointCloud::new(3, vec![1.0, 1.0, 1.0, 3.0, 1.0, 1.0, 1.0, 5.0, 1.0]).unwrap();
        let once = cloud.normalize().unwrap();
        let twice = once.normalize().unwrap();
        for (a, b) in once.coords().iter().zip(twice.coords()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_output_statistics() {
        let cloud = PointCloud::new(3, vec![1.0, 1.0, 1.0, 3.0, 1.0, 1.0, 1.0, 5.0, 1.0]).unwrap();
        let out = cloud.normalize().unwrap();
        let n = out.len() as f64;
        for a in 0..3 {
            let mean: f64 = (0..out.len()).map(|i| out.coord(i, a)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-12, "axis {a} centroid {mean}");
        }
        let max_abs = out
            .coords()
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        assert_eq!(max_abs, 1.0);
    }

    #[test]
    fn normalize_degenerate_single_point() {
        let cloud = PointCloud::new(2, vec![4.0, -7.0]).unwrap();
        let out = cloud.normalize().unwrap();
        assert_eq!(out.point(0), &[0.0, 0.0]);
    }

    #[test]
    fn normalize_empty_errors() {
        let cloud = PointCloud::new(2, vec![]).unwrap();
        assert!(matches!(cloud.normalize(), Err(Error::EmptyCloud)));
    }

    #[test]
    fn resample_identity_when_size_matches() {
        let cloud = PointCloud::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let (out, prov) = cloud.resample(4, &mut rng(0)).unwrap();
        assert_eq!(out, cloud);
        assert_eq!(prov, vec![0, 1, 2, 3]);
    }

    #[test]
    fn resample_upsamples_with_nearby_duplicates() {
        let coords: Vec<f64> = (0..5).flat_map(|i| [i as f64, 0.0]).collect();
        let cloud = PointCloud::new(2, coords)
            .unwrap()
            .with_labels(vec![0, 1, 2, 3, 4])
            .unwrap();
        let (out, prov) = cloud.resample(8, &mut rng(1)).unwrap();
        assert_eq!(out.len(), 8);
        // Originals survive unchanged, in place.
        for i in 0..5 {
            assert_eq!(out.point(i), cloud.point(i));
            assert_eq!(prov[i], i as u32);
        }
        for i in 5..8 {
            let src = prov[i] as usize;
            assert!(src < 5);
            let d: f64 = out
                .point(i)
                .iter()
                .zip(cloud.point(src))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(d <= 5.0 * UPSAMPLE_NOISE_SIGMA * 2f64.sqrt(), "distance {d}");
            assert_eq!(out.labels().unwrap()[i], cloud.labels().unwrap()[src]);
        }
    }

    #[test]
    fn resample_downsamples_to_distinct_subset() {
        let coords: Vec<f64> = (0..16).flat_map(|i| [i as f64, -(i as f64)]).collect();
        let cloud = PointCloud::new(2, coords).unwrap();
        let (out, prov) = cloud.resample(8, &mut rng(2)).unwrap();
        assert_eq!(out.len(), 8);
        let mut seen = prov.clone();
        seen.dedup();
        assert_eq!(seen.len(), 8, "sources must be distinct");
        for (i, &src) in prov.iter().enumerate() {
            assert_eq!(out.point(i), cloud.point(src as usize));
        }
    }

    #[test]
    fn resample_rejects_non_power_of_two() {
        let cloud = PointCloud::new(2, vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            cloud.resample(3, &mut rng(0)),
            Err(Error::NotPowerOfTwo { got: 3, .. })
        ));
    }

    #[test]
    fn augment_disabled_is_identity() {
        let cloud = PointCloud::new(3, vec![0.1, -0.5, 0.9, 0.0, 0.2, -0.3]).unwrap();
        let out = cloud.augment(&AugmentConfig::disabled(), &mut rng(3));
        assert_eq!(out, cloud);
    }

    #[test]
    fn translate_only_shifts_by_a_bounded_constant() {
        let cloud = PointCloud::new(3, vec![0.1, -0.5, 0.9, 0.0, 0.2, -0.3]).unwrap();
        let cfg = AugmentConfig {
            translate: true,
            ..AugmentConfig::disabled()
        };
        let out = cloud.augment(&cfg, &mut rng(4));
        let shift: Vec<f64> = (0..3).map(|a| out.coord(0, a) - cloud.coord(0, a)).collect();
        for a in 0..3 {
            assert!(shift[a].abs() <= 0.1 + 1e-15);
            for i in 0..cloud.len() {
                assert!((out.coord(i, a) - cloud.coord(i, a) - shift[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scale_only_rescales_horizontal_axes() {
        let cloud = PointCloud::new(3, vec![0.5, -0.5, 0.8, -0.2, 0.4, -0.6]).unwrap();
        let cfg = AugmentConfig {
            scale: true,
            ..AugmentConfig::disabled()
        };
        let out = cloud.augment(&cfg, &mut rng(5));
        for a in 0..2 {
            let ratio = out.coord(0, a) / cloud.coord(0, a);
            assert!((0.66..=1.5).contains(&ratio), "axis {a} ratio {ratio}");
            for i in 0..cloud.len() {
                assert!((out.coord(i, a) / cloud.coord(i, a) - ratio).abs() < 1e-12);
            }
        }
        for i in 0..cloud.len() {
            assert_eq!(out.coord(i, 2), cloud.coord(i, 2));
        }
    }

    #[test]
    fn augment_preserves_count_and_labels() {
        let cloud = PointCloud::new(2, vec![0.0, 0.0, 0.5, 0.5])
            .unwrap()
            .with_labels(vec![7, 9])
            .unwrap();
        let out = cloud.augment(&AugmentConfig::standard(), &mut rng(6));
        assert_eq!(out.len(), 2);
        assert_eq!(out.labels(), Some(&[7u32, 9u32][..]));
    }

    #[test]
    fn image_single_pixel_collapses_to_origin() {
        let mut pixels = vec![0u8; 9];
        pixels[4] = 200;
        let cloud = image_to_cloud(&pixels, 3, 3, 8, 0.0, &mut rng(7)).unwrap();
        assert_eq!(cloud.len(), 8);
        for i in 0..8 {
            assert_eq!(cloud.point(i), &[0.0, 0.0]);
        }
    }

    #[test]
    fn image_two_pixels_give_two_values_uniformly() {
        let mut pixels = vec![0u8; 16];
        pixels[1] = 10;
        pixels[14] = 10;
        let cloud = image_to_cloud(&pixels, 4, 4, 10_000, 0.0, &mut rng(8)).unwrap();
        let mut firsts = 0usize;
        let p0 = cloud.point(0).to_vec();
        let mut distinct: Vec<Vec<f64>> = vec![p0.clone()];
        for i in 0..cloud.len() {
            let p = cloud.point(i).to_vec();
            if p == p0 {
                firsts += 1;
            } else if !distinct.contains(&p) {
                distinct.push(p);
            }
        }
        assert_eq!(distinct.len(), 2);
        let frac = firsts as f64 / cloud.len() as f64;
        assert!((frac - 0.5).abs() < 0.02, "fraction {frac}");
    }

    #[test]
    fn blank_image_errors() {
        let pixels = vec![0u8; 4];
        assert!(matches!(
            image_to_cloud(&pixels, 2, 2, 4, 0.2, &mut rng(9)),
            Err(Error::BlankImage)
        ));
    }
}
