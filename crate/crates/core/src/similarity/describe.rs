use std::f64::consts::PI;

use super::detect::{Keypoint, PATCH_MARGIN};
use super::pattern::PATTERN;
use super::Plane;

pub type Descriptor = [u64; 4];

const ORIENTATION_BINS: f64 = 30.0;
const SMOOTH_SIGMA: f64 = 2.0;
const SMOOTH_RADIUS: i64 = 3;

/// Descriptors aligned with the keypoints they were computed for.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DescriptorSet {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

impl DescriptorSet {
    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }
}

#[inline]
pub fn hamming(a: &Descriptor, b: &Descriptor) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

pub(crate) fn smooth(img: &Plane) -> Plane {
    let k: Vec<f64> = (-SMOOTH_RADIUS..=SMOOTH_RADIUS)
        .map(|i| (-(i * i) as f64 / (2.0 * SMOOTH_SIGMA * SMOOTH_SIGMA)).exp())
        .collect();
    let norm: f64 = k.iter().sum();
    let k: Vec<f64> = k.iter().map(|v| v / norm).collect();
    let (h, w) = (img.height, img.width);
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = k.iter().enumerate().map(|(i, kv)| kv * img.at(r as i64, c as i64 + i as i64 - SMOOTH_RADIUS)).sum();
        }
    }
    let tmp = Plane { height: h, width: w, data: tmp };
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = k.iter().enumerate().map(|(i, kv)| kv * tmp.at(r as i64 + i as i64 - SMOOTH_RADIUS, c as i64)).sum();
        }
    }
    Plane { height: h, width: w, data: out }
}

/// Rotated BRIEF-256 on the smoothed image. Keypoints closer than the
/// patch margin to the border are skipped.
pub(crate) fn describe(smoothed: &Plane, keypoints: &[Keypoint]) -> DescriptorSet {
    let (h, w) = (smoothed.height, smoothed.width);
    let mut out = DescriptorSet::default();
    for kp in keypoints {
        let [r, c] = kp.position;
        if r < PATCH_MARGIN || c < PATCH_MARGIN || r + PATCH_MARGIN >= h || c + PATCH_MARGIN >= w {
            continue;
        }
        let step = 2.0 * PI / ORIENTATION_BINS;
        let angle = (kp.orientation / step).round() * step;
        let (sin, cos) = angle.sin_cos();
        let at = |x: i8, y: i8| {
            let (x, y) = (f64::from(x), f64::from(y));
            let dx = (x * cos - y * sin).round() as i64;
            let dy = (x * sin + y * cos).round() as i64;
            smoothed.at(r as i64 + dy, c as i64 + dx)
        };
        let mut d = [0u64; 4];
        for (i, p) in PATTERN.iter().enumerate() {
            if at(p[0], p[1]) < at(p[2], p[3]) {
                d[i / 64] |= 1 << (i % 64);
            }
        }
        out.keypoints.push(*kp);
        out.descriptors.push(d);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_preserves_constants() {
        let img = Plane { height: 9, width: 7, data: vec![3.0; 63] };
        assert!(smooth(&img).data.iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn hamming_counts_bits() {
        assert_eq!(hamming(&[0; 4], &[u64::MAX; 4]), 256);
        assert_eq!(hamming(&[1, 0, 0, 3], &[0, 0, 0, 1]), 2);
    }
}
