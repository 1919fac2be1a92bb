//! Keypoint-matching similarity between a slice and its augmented copy.
//!
//! The score is the number of descriptor matches that survive a ratio
//! test, summed over the configured detectors. The bundled detector is
//! ORB-style: FAST-9 corners ranked by Harris response, intensity-centroid
//! orientation and rotated BRIEF-256 descriptors. Inputs are min-max
//! scaled to 0..255 first, so HU and normalized slices score alike.

mod describe;
mod detect;
mod matcher;
mod pattern;

pub use describe::{hamming, Descriptor, DescriptorSet};
pub use detect::{Keypoint, MIN_IMAGE_SIDE, PATCH_MARGIN};
pub use matcher::{match_descriptors, MatchResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// Intensities scaled to 0..255 (not rounded).
#[derive(Debug, Clone)]
pub(crate) struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub(crate) fn from_image(img: &ImageGrid) -> Self {
        let (lo, hi) = img.min_max();
        let data = if hi > lo {
            let s = 255.0 / (hi - lo);
            img.data().iter().map(|&v| (v - lo) * s).collect()
        } else {
            vec![0.0; img.data().len()]
        };
        Self { height: img.height(), width: img.width(), data }
    }

    #[inline]
    pub(crate) fn at(&self, r: i64, c: i64) -> f64 {
        let r = r.clamp(0, self.height as i64 - 1) as usize;
        let c = c.clamp(0, self.width as i64 - 1) as usize;
        self.data[r * self.width + c]
    }
}

/// At most `max_count` keypoints by descending Harris response (ties in
/// row-major order). `fast_threshold` is a fraction of the intensity range.
pub fn detect_keypoints(img: &ImageGrid, max_count: usize, fast_threshold: f64) -> Result<Vec<Keypoint>> {
    detect::detect(&Plane::from_image(img), max_count, fast_threshold)
}

pub fn compute_descriptors(img: &ImageGrid, keypoints: &[Keypoint]) -> DescriptorSet {
    describe::describe(&describe::smooth(&Plane::from_image(img)), keypoints)
}

/// A keypoint detector plus descriptor whose matches contribute to the score.
pub trait FeatureDetector: Send + Sync {
    fn name(&self) -> &str;
    fn features(&self, img: &ImageGrid) -> Result<DescriptorSet>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbDetector {
    pub max_count: usize,
    pub fast_threshold: f64,
}

impl Default for OrbDetector {
    fn default() -> Self {
        Self { max_count: 500, fast_threshold: 0.08 }
    }
}

impl FeatureDetector for OrbDetector {
    fn name(&self) -> &str {
        "orb"
    }

    fn features(&self, img: &ImageGrid) -> Result<DescriptorSet> {
        let plane = Plane::from_image(img);
        let kps = detect::detect(&plane, self.max_count, self.fast_threshold)?;
        Ok(describe::describe(&describe::smooth(&plane), &kps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimilarityConfig {
    pub ratio: f64,
    pub max_count: usize,
    pub fast_threshold: f64,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self { ratio: 0.75, max_count: 500, fast_threshold: 0.08 }
    }
}

impl SimilarityConfig {
    pub fn orb(&self) -> OrbDetector {
        OrbDetector { max_count: self.max_count, fast_threshold: self.fast_threshold }
    }
}

/// Features of the unmodified slice, computed once and scored against
/// any number of augmented copies.
pub struct Reference<'d> {
    detectors: Vec<&'d dyn FeatureDetector>,
    features: Vec<DescriptorSet>,
    dims: (usize, usize),
    ratio: f64,
}

impl<'d> Reference<'d> {
    pub fn new(original: &ImageGrid, detectors: Vec<&'d dyn FeatureDetector>, ratio: f64) -> Result<Self> {
        let features = detectors.iter().map(|d| d.features(original)).collect::<Result<_>>()?;
        Ok(Self { detectors, features, dims: original.dims(), ratio })
    }

    /// Per-detector match results against `augmented`.
    pub fn matches(&self, augmented: &ImageGrid) -> Result<Vec<MatchResult>> {
        if augmented.dims() != self.dims {
            return Err(Error::invalid(format!("augmented slice is {:?}, original {:?}", augmented.dims(), self.dims)));
        }
        self.detectors
            .iter()
            .zip(&self.features)
            .map(|(d, fa)| match_descriptors(&fa.descriptors, &d.features(augmented)?.descriptors, self.ratio))
            .collect()
    }

    pub fn score(&self, augmented: &ImageGrid) -> Result<f64> {
        Ok(self.matches(augmented)?.iter().map(|m| m.pair_count as f64).sum())
    }
}

/// Match-count similarity with the default ORB-style detector.
pub fn similarity_score(original: &ImageGrid, augmented: &ImageGrid, config: &SimilarityConfig) -> Result<f64> {
    let orb = config.orb();
    Reference::new(original, vec![&orb], config.ratio)?.score(augmented)
}
