use crate::error::{Error, Result};
use crate::geometry::Point;

/// Triangles with less area than this (px²) are treated as degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// 2×3 matrix mapping `(y, x, 1)` to `(y', x')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub matrix: [[f64; 3]; 2],
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform { matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] };

    pub fn translation(dy: f64, dx: f64) -> Self {
        Self { matrix: [[1.0, 0.0, dy], [0.0, 1.0, dx]] }
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        let m = &self.matrix;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2],
        ]
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.matrix;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.determinant();
        if !(det.abs() > f64::EPSILON) || !det.is_finite() {
            return Err(Error::degenerate("affine transform is singular"));
        }
        let m = &self.matrix;
        let (a, b, c, d) = (m[1][1] / det, -m[0][1] / det, -m[1][0] / det, m[0][0] / det);
        Ok(Self {
            matrix: [
                [a, b, -(a * m[0][2] + b * m[1][2])],
                [c, d, -(c * m[0][2] + d * m[1][2])],
            ],
        })
    }

    /// Spectral norm of the linear part.
    pub fn linear_norm(&self) -> f64 {
        let m = &self.matrix;
        let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
        let s = a * a + b * b + c * c + d * d;
        let det = a * d - b * c;
        ((s + (s * s - 4.0 * det * det).max(0.0).sqrt()) / 2.0).sqrt()
    }
}

/// Signed area of a triangle; positive for counter-clockwise `(x, y-up)` order.
pub fn signed_area(t: &[Point; 3]) -> f64 {
    let (a, b, c) = (t[0], t[1], t[2]);
    ((b[1] - a[1]) * (c[0] - a[0]) - (b[0] - a[0]) * (c[1] - a[1])) / 2.0
}

/// Exact six-parameter affine map sending `src[i]` to `dst[i]`.
pub fn estimate_affine(src: &[Point; 3], dst: &[Point; 3]) -> Result<AffineTransform> {
    for (name, t) in [("source", src), ("destination", dst)] {
        if !(signed_area(t).abs() > MIN_TRIANGLE_AREA) {
            return Err(Error::degenerate(format!("{name} triangle has no area")));
        }
    }
    // Work relative to the first vertex to keep the solve well conditioned.
    let (u1, u2) = (sub(src[1], src[0]), sub(src[2], src[0]));
    let (v1, v2) = (sub(dst[1], dst[0]), sub(dst[2], dst[0]));
    let det = u1[0] * u2[1] - u2[0] * u1[1];
    // inverse of U = [u1 u2] (columns)
    let ui = [[u2[1] / det, -u2[0] / det], [-u1[1] / det, u1[0] / det]];
    let l = [
        [v1[0] * ui[0][0] + v2[0] * ui[1][0], v1[0] * ui[0][1] + v2[0] * ui[1][1]],
        [v1[1] * ui[0][0] + v2[1] * ui[1][0], v1[1] * ui[0][1] + v2[1] * ui[1][1]],
    ];
    let t = [
        dst[0][0] - (l[0][0] * src[0][0] + l[0][1] * src[0][1]),
        dst[0][1] - (l[1][0] * src[0][0] + l[1][1] * src[0][1]),
    ];
    Ok(AffineTransform { matrix: [[l[0][0], l[0][1], t[0]], [l[1][0], l[1][1], t[1]]] })
}

#[inline]
fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_triangles_give_identity() {
        let t = [[0.0, 0.0], [0.0, 3.0], [2.0, 1.0]];
        let m = estimate_affine(&t, &t).unwrap();
        for (got, want) in m.matrix.iter().flatten().zip(AffineTransform::IDENTITY.matrix.iter().flatten()) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_is_recovered() {
        let s = [[1.0, 2.0], [4.0, -1.0], [-3.0, 5.0]];
        let d = s.map(|p| [p[0] + 5.0, p[1] + 7.0]);
        let m = estimate_affine(&s, &d).unwrap();
        let want = AffineTransform::translation(5.0, 7.0);
        for (got, want) in m.matrix.iter().flatten().zip(want.matrix.iter().flatten()) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn random_matrices_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut done = 0;
        while done < 100 {
            let known = AffineTransform {
                matrix: [
                    [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-50.0..50.0)],
                    [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-50.0..50.0)],
                ],
            };
            if known.determinant().abs() < 0.05 {
                continue;
            }
            let src: [Point; 3] = std::array::from_fn(|_| [rng.gen_range(0.0..512.0), rng.gen_range(0.0..512.0)]);
            if signed_area(&src).abs() < 10.0 {
                continue;
            }
            let dst = src.map(|p| known.apply(p));
            let m = estimate_affine(&src, &dst).unwrap();
            for (got, want) in m.matrix.iter().flatten().zip(known.matrix.iter().flatten()) {
                assert!((got - want).abs() < 1e-9, "{got} vs {want}");
            }
            done += 1;
        }
    }

    #[test]
    fn degenerate_triangles_are_rejected() {
        let good = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        let flat = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        assert!(matches!(estimate_affine(&flat, &good), Err(Error::DegenerateInput(_))));
        assert!(matches!(estimate_affine(&good, &flat), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn inverse_round_trips() {
        let m = AffineTransform { matrix: [[1.2, 0.3, 4.0], [-0.7, 0.9, -2.0]] };
        let inv = m.inverse().unwrap();
        let p = [13.0, -7.5];
        let q = inv.apply(m.apply(p));
        assert!((q[0] - p[0]).abs() < 1e-12 && (q[1] - p[1]).abs() < 1e-12);
        let rot = AffineTransform { matrix: [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0]] };
        assert!((rot.linear_norm() - 1.0).abs() < 1e-12);
    }
}
