use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::Plane;
use crate::error::{Error, Result};

/// Smallest accepted image side.
pub const MIN_IMAGE_SIDE: usize = 32;
/// Distance from the border a keypoint must keep so that its rotated
/// descriptor pattern stays inside the image.
pub const PATCH_MARGIN: usize = 19;
const ORIENTATION_RADIUS: i64 = 15;
const HARRIS_K: f64 = 0.04;
const HARRIS_HALF_BLOCK: i64 = 3;

/// Bresenham circle of radius 3, `(dx, dy)` clockwise from 12 o'clock.
pub(crate) const CIRCLE: [(i64, i64); 16] = [
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
];
const ARC: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// `(row, col)`.
    pub position: [usize; 2],
    pub response: f64,
    /// Radians, x right and y down.
    pub orientation: f64,
}

/// Largest threshold for which the pixel still passes the 9-of-16
/// segment test; 0 when no arc is brighter or darker at all.
pub(crate) fn fast_score(img: &Plane, r: usize, c: usize) -> f64 {
    let p = img.at(r as i64, c as i64);
    let ring: [f64; 16] = std::array::from_fn(|k| img.at(r as i64 + CIRCLE[k].1, c as i64 + CIRCLE[k].0) - p);
    let mut best: f64 = 0.0;
    for start in 0..16 {
        let (mut bright, mut dark) = (f64::INFINITY, f64::INFINITY);
        for k in 0..ARC {
            let d = ring[(start + k) % 16];
            bright = bright.min(d);
            dark = dark.min(-d);
        }
        best = best.max(bright).max(dark);
    }
    best
}

fn harris(img: &Plane, r: usize, c: usize) -> f64 {
    let (mut a, mut b, mut cc) = (0.0, 0.0, 0.0);
    for dy in -HARRIS_HALF_BLOCK..=HARRIS_HALF_BLOCK {
        for dx in -HARRIS_HALF_BLOCK..=HARRIS_HALF_BLOCK {
            let (y, x) = (r as i64 + dy, c as i64 + dx);
            let v = |oy: i64, ox: i64| img.at(y + oy, x + ox);
            let gx = (v(-1, 1) + 2.0 * v(0, 1) + v(1, 1)) - (v(-1, -1) + 2.0 * v(0, -1) + v(1, -1));
            let gy = (v(1, -1) + 2.0 * v(1, 0) + v(1, 1)) - (v(-1, -1) + 2.0 * v(-1, 0) + v(-1, 1));
            a += gx * gx;
            b += gy * gy;
            cc += gx * gy;
        }
    }
    a * b - cc * cc - HARRIS_K * (a + b) * (a + b)
}

/// Intensity-centroid angle over a disc of radius 15.
pub(crate) fn orientation(img: &Plane, r: usize, c: usize) -> f64 {
    let (mut m01, mut m10) = (0.0, 0.0);
    for dy in -ORIENTATION_RADIUS..=ORIENTATION_RADIUS {
        for dx in -ORIENTATION_RADIUS..=ORIENTATION_RADIUS {
            if dx * dx + dy * dy > ORIENTATION_RADIUS * ORIENTATION_RADIUS {
                continue;
            }
            let v = img.at(r as i64 + dy, c as i64 + dx);
            m10 += dx as f64 * v;
            m01 += dy as f64 * v;
        }
    }
    let a = m01.atan2(m10);
    if a < 0.0 { a + 2.0 * PI } else { a }
}

/// Pixels passing the segment test at `threshold` (in the 0..255 scale),
/// before suppression. Border pixels within the patch margin are skipped.
pub(crate) fn segment_test_scores(img: &Plane, threshold: f64) -> Vec<f64> {
    let (h, w) = (img.height, img.width);
    let mut scores = vec![0.0; h * w];
    let lo = PATCH_MARGIN - 1;
    if h < 2 * PATCH_MARGIN + 1 || w < 2 * PATCH_MARGIN + 1 {
        return scores;
    }
    for r in lo..h - lo {
        for c in lo..w - lo {
            let s = fast_score(img, r, c);
            if s > threshold {
                scores[r * w + c] = s;
            }
        }
    }
    scores
}

/// FAST-9 detection with 3x3 suppression, Harris ranking and centroid
/// orientation. `threshold` is a fraction of the 0..255 intensity range.
pub(crate) fn detect(img: &Plane, max_count: usize, threshold: f64) -> Result<Vec<Keypoint>> {
    let (h, w) = (img.height, img.width);
    if h < MIN_IMAGE_SIDE || w < MIN_IMAGE_SIDE {
        return Err(Error::invalid(format!("keypoint detection needs at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, got {h}x{w}")));
    }
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(Error::invalid(format!("FAST threshold {threshold} must be a non-negative fraction")));
    }
    let scores = segment_test_scores(img, threshold * 255.0);
    let mut kps = Vec::new();
    if h < 2 * PATCH_MARGIN + 1 || w < 2 * PATCH_MARGIN + 1 {
        return Ok(kps);
    }
    for r in PATCH_MARGIN..h - PATCH_MARGIN {
        for c in PATCH_MARGIN..w - PATCH_MARGIN {
            let s = scores[r * w + c];
            if s == 0.0 {
                continue;
            }
            let is_max = (r - 1..=r + 1).all(|y| (c - 1..=c + 1).all(|x| scores[y * w + x] <= s));
            if is_max {
                kps.push(Keypoint { position: [r, c], response: harris(img, r, c), orientation: 0.0 });
            }
        }
    }
    // stable sort keeps row-major order among equal responses
    kps.sort_by(|a, b| b.response.total_cmp(&a.response));
    kps.truncate(max_count);
    for k in &mut kps {
        k.orientation = orientation(img, k.position[0], k.position[1]);
    }
    Ok(kps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_fixture() -> Plane {
        let mut data = vec![0.0; 64 * 64];
        for r in 30..33 {
            for c in 30..33 {
                data[r * 64 + c] = 255.0;
            }
        }
        Plane { height: 64, width: 64, data }
    }

    // Plain 9-contiguous segment test, no score shortcuts.
    fn oracle_is_corner(img: &Plane, r: usize, c: usize, t: f64) -> bool {
        let p = img.at(r as i64, c as i64);
        let ring: Vec<f64> = CIRCLE.iter().map(|&(dx, dy)| img.at(r as i64 + dy, c as i64 + dx)).collect();
        let run = |pred: &dyn Fn(f64) -> bool| {
            let mut best = 0;
            let mut cur = 0;
            for k in 0..32 {
                if pred(ring[k % 16]) {
                    cur += 1;
                    best = best.max(cur);
                } else {
                    cur = 0;
                }
            }
            best >= 9
        };
        run(&|v| v > p + t) || run(&|v| v < p - t)
    }

    #[test]
    fn square_corners_match_segment_test_oracle() {
        let img = square_fixture();
        let t = 0.1 * 255.0;
        let scores = segment_test_scores(&img, t);
        let mut n = 0;
        for r in PATCH_MARGIN..64 - PATCH_MARGIN {
            for c in PATCH_MARGIN..64 - PATCH_MARGIN {
                assert_eq!(scores[r * 64 + c] > 0.0, oracle_is_corner(&img, r, c, t), "({r},{c})");
                n += oracle_is_corner(&img, r, c, t) as usize;
            }
        }
        assert!(n >= 4);
        let kps = detect(&img, 500, 0.1).unwrap();
        assert!(kps.len() >= 4);
        assert!(kps.iter().all(|k| (29..=33).contains(&k.position[0]) && (29..=33).contains(&k.position[1])));
    }

    #[test]
    fn constant_image_has_no_keypoints() {
        let img = Plane { height: 40, width: 40, data: vec![0.0; 1600] };
        assert!(detect(&img, 10, 0.08).unwrap().is_empty());
        let small = Plane { height: 31, width: 40, data: vec![0.0; 31 * 40] };
        assert!(detect(&small, 10, 0.08).is_err());
    }

    #[test]
    fn orientation_points_toward_mass() {
        let mut data = vec![0.0; 64 * 64];
        for r in 21..44 {
            for c in 33..44 {
                data[r * 64 + c] = 100.0;
            }
        }
        let img = Plane { height: 64, width: 64, data };
        assert!(orientation(&img, 32, 32).abs() < 1e-9);
    }
}
