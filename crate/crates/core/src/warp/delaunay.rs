//! Incremental Bowyer-Watson Delaunay triangulation.
//!
//! Orientation and in-circle decisions use exact adaptive predicates, so
//! the cocircular configurations that regular control grids are full of
//! resolve consistently. Points are inserted in index order and the output
//! is normalized (lowest vertex index first, triangles sorted), which makes
//! the result a pure function of the input sequence.

use robust::Coord;

use crate::error::{Error, Result};
use crate::geometry::Point;

const NONE: usize = usize::MAX;

/// Triangulation of a point set. Triangles are counter-clockwise with
/// respect to [`orient`].
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }
}

#[inline]
fn coord(p: Point) -> Coord<f64> {
    Coord { x: p[1], y: p[0] }
}

/// Exact orientation of `(a, b, c)`: positive, negative or zero.
#[inline]
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    robust::orient2d(coord(a), coord(b), coord(c))
}

/// Exact in-circle test; positive when `d` lies strictly inside the
/// circumcircle of the positively oriented triangle `(a, b, c)`.
#[inline]
pub fn in_circle(a: Point, b: Point, c: Point, d: Point) -> f64 {
    robust::incircle(coord(a), coord(b), coord(c), coord(d))
}

#[derive(Debug, Clone, Copy)]
struct Tri {
    v: [usize; 3],
    // n[k] is the neighbour across the edge opposite v[k]
    n: [usize; 3],
    alive: bool,
}

struct Builder {
    pts: Vec<Point>,
    tris: Vec<Tri>,
    stamp: Vec<u32>,
    epoch: u32,
    last: usize,
}

impl Builder {
    fn locate(&self, p: Point) -> usize {
        let mut cur = self.last;
        let mut steps = 0usize;
        'walk: loop {
            let t = &self.tris[cur];
            for k in 0..3 {
                let a = self.pts[t.v[(k + 1) % 3]];
                let b = self.pts[t.v[(k + 2) % 3]];
                if orient(a, b, p) < 0.0 {
                    cur = t.n[k];
                    steps += 1;
                    if cur == NONE || steps > self.tris.len() {
                        break 'walk;
                    }
                    continue 'walk;
                }
            }
            return cur;
        }
        // Walk failed; fall back to a scan.
        self.tris
            .iter()
            .enumerate()
            .filter(|(_, t)| t.alive)
            .find(|(_, t)| (0..3).all(|k| orient(self.pts[t.v[(k + 1) % 3]], self.pts[t.v[(k + 2) % 3]], p) >= 0.0))
            .map(|(i, _)| i)
            .expect("point outside the super triangle")
    }

    fn circumcircle_contains(&self, t: usize, p: Point) -> bool {
        let [a, b, c] = self.tris[t].v;
        in_circle(self.pts[a], self.pts[b], self.pts[c], p) > 0.0
    }

    fn insert(&mut self, idx: usize) -> bool {
        let p = self.pts[idx];
        let start = self.locate(p);
        if self.tris[start].v.iter().any(|&v| self.pts[v] == p) {
            return false;
        }

        self.epoch += 1;
        if self.stamp.len() < self.tris.len() {
            self.stamp.resize(self.tris.len(), 0);
        }
        let epoch = self.epoch;
        let mut cavity = vec![start];
        self.stamp[start] = epoch;
        let mut i = 0;
        while i < cavity.len() {
            let t = cavity[i];
            i += 1;
            for k in 0..3 {
                let nb = self.tris[t].n[k];
                if nb == NONE || self.stamp[nb] == epoch {
                    continue;
                }
                if self.circumcircle_contains(nb, p) {
                    self.stamp[nb] = epoch;
                    cavity.push(nb);
                }
            }
        }

        // Boundary edges (a, b) keep the orientation they had in the cavity.
        let mut boundary: Vec<(usize, usize, usize)> = Vec::with_capacity(cavity.len() + 2);
        for &t in &cavity {
            let tri = self.tris[t];
            for k in 0..3 {
                let nb = tri.n[k];
                if nb == NONE || self.stamp[nb] != epoch {
                    boundary.push((tri.v[(k + 1) % 3], tri.v[(k + 2) % 3], nb));
                }
            }
        }
        for &t in &cavity {
            self.tris[t].alive = false;
        }

        let first = self.tris.len();
        for (j, &(a, b, outer)) in boundary.iter().enumerate() {
            let nt = first + j;
            self.tris.push(Tri { v: [a, b, idx], n: [NONE, NONE, outer], alive: true });
            if outer != NONE {
                let o = &mut self.tris[outer];
                for k in 0..3 {
                    if o.v[(k + 1) % 3] == b && o.v[(k + 2) % 3] == a {
                        o.n[k] = nt;
                    }
                }
            }
        }
        for j in 0..boundary.len() {
            let (a, b, _) = boundary[j];
            let nt = first + j;
            // across (b, p): the new triangle starting at b
            // across (p, a): the new triangle ending at a
            for (m, &(a2, b2, _)) in boundary.iter().enumerate() {
                if a2 == b {
                    self.tris[nt].n[0] = first + m;
                }
                if b2 == a {
                    self.tris[nt].n[1] = first + m;
                }
            }
        }
        self.last = first;
        true
    }
}

/// Position along a Hilbert curve over a 65536 x 65536 lattice.
fn hilbert_index(mut x: u32, mut y: u32) -> u64 {
    let mut d = 0u64;
    let mut s = 1u32 << 15;
    while s > 0 {
        let rx = u32::from(x & s > 0);
        let ry = u32::from(y & s > 0);
        d += u64::from(s) * u64::from(s) * u64::from((3 * rx) ^ ry);
        if ry == 0 {
            if rx == 1 {
                x = s.wrapping_mul(2).wrapping_sub(1).wrapping_sub(x) & 0xFFFF;
                y = s.wrapping_mul(2).wrapping_sub(1).wrapping_sub(y) & 0xFFFF;
            }
            std::mem::swap(&mut x, &mut y);
        }
        s >>= 1;
    }
    d
}

/// Delaunay triangulation of `points`, covering their convex hull.
///
/// Exact duplicates are left out of the mesh (their index is never
/// referenced by a triangle).
pub fn delaunay(points: &[Point]) -> Result<TriangleMesh> {
    if points.len() < 3 {
        return Err(Error::degenerate(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::degenerate("non-finite point"));
    }
    let p0 = points[0];
    let Some(p1) = points.iter().copied().find(|&p| p != p0) else {
        return Err(Error::degenerate("all points coincide"));
    };
    if points.iter().all(|&p| orient(p0, p1, p) == 0.0) {
        return Err(Error::degenerate("all points are collinear"));
    }

    let n = points.len();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1.0);
    let c = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let m = 1.0e3 * span;
    let mut pts = points.to_vec();
    pts.push([c[0] - m, c[1] - 2.0 * m]);
    pts.push([c[0] - m, c[1] + 2.0 * m]);
    pts.push([c[0] + 2.0 * m, c[1]]);
    let mut sv = [n, n + 1, n + 2];
    if orient(pts[sv[0]], pts[sv[1]], pts[sv[2]]) < 0.0 {
        sv.swap(1, 2);
    }

    let mut b = Builder {
        pts,
        tris: vec![Tri { v: sv, n: [NONE; 3], alive: true }],
        stamp: vec![0],
        epoch: 0,
        last: 0,
    };
    // Row-major insertion of a regular grid keeps reopening the cavities
    // attached to the super triangle; Hilbert order keeps every cavity
    // local and the point-location walk short.
    let mut order: Vec<(u64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let q = |v: f64, k: usize| (((v - lo[k]) / span) * 65535.0).round() as u32;
            (hilbert_index(q(p[0], 0), q(p[1], 1)), i)
        })
        .collect();
    order.sort_unstable();
    for (_, idx) in order {
        b.insert(idx);
    }

    let mut triangles: Vec<[usize; 3]> = b
        .tris
        .iter()
        .filter(|t| t.alive && t.v.iter().all(|&v| v < n))
        .map(|t| t.v)
        .collect();
    let vertices = b.pts[..n].to_vec();
    fill_hull_pockets(&vertices, &mut triangles);

    for t in &mut triangles {
        let k = (0..3).min_by_key(|&k| t[k]).unwrap();
        t.rotate_left(k);
    }
    triangles.sort_unstable();
    Ok(TriangleMesh { vertices, triangles })
}

/// Closes concavities left on the hull by the finite super triangle and
/// restores the Delaunay property with edge flips. A no-op in the common case.
fn fill_hull_pockets(pts: &[Point], tris: &mut Vec<[usize; 3]>) {
    use std::collections::{HashMap, HashSet};

    let mut filled = false;
    loop {
        let edges: HashSet<(usize, usize)> = tris
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .collect();
        let next: HashMap<usize, usize> = edges
            .iter()
            .filter(|&&(a, b)| !edges.contains(&(b, a)))
            .map(|&(a, b)| (a, b))
            .collect();
        let boundary: Vec<usize> = next.keys().copied().collect();
        let mut added = false;
        let mut candidates: Vec<usize> = boundary.clone();
        candidates.sort_unstable();
        for a in candidates {
            let b = next[&a];
            let Some(&c) = next.get(&b) else { continue };
            if orient(pts[a], pts[b], pts[c]) >= 0.0 {
                continue;
            }
            // triangle (a, c, b) must not swallow another boundary vertex
            let blocked = boundary.iter().any(|&v| {
                v != a
                    && v != b
                    && v != c
                    && orient(pts[a], pts[c], pts[v]) >= 0.0
                    && orient(pts[c], pts[b], pts[v]) >= 0.0
                    && orient(pts[b], pts[a], pts[v]) >= 0.0
            });
            if !blocked {
                tris.push([a, c, b]);
                added = true;
                filled = true;
                break;
            }
        }
        if !added {
            break;
        }
    }
    if !filled {
        return;
    }

    loop {
        let mut owner: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (ti, t) in tris.iter().enumerate() {
            for k in 0..3 {
                owner.insert((t[(k + 1) % 3], t[(k + 2) % 3]), (ti, k));
            }
        }
        let mut flip = None;
        for (&(a, b), &(t1, k1)) in &owner {
            if let Some(&(t2, k2)) = owner.get(&(b, a)) {
                let p1 = tris[t1][k1];
                let p2 = tris[t2][k2];
                if in_circle(pts[tris[t1][0]], pts[tris[t1][1]], pts[tris[t1][2]], pts[p2]) > 0.0 {
                    flip = Some((t1, t2, a, b, p1, p2));
                    break;
                }
            }
        }
        let Some((t1, t2, a, b, p1, p2)) = flip else { break };
        // edge (a, b) in t1 = (p1, a, b); replace with (p1, p2)
        tris[t1] = [p1, a, p2];
        tris[t2] = [p2, b, p1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force empty-circumcircle check using plain floating point.
    fn assert_delaunay(mesh: &TriangleMesh) {
        let v = mesh.vertices();
        for t in mesh.triangles() {
            let [a, b, c] = [v[t[0]], v[t[1]], v[t[2]]];
            let area = ((b[1] - a[1]) * (c[0] - a[0]) - (b[0] - a[0]) * (c[1] - a[1])) / 2.0;
            assert!(area > 1e-12, "triangle {t:?} is not positively oriented");
            // circumcenter
            let (ax, ay, bx, by, cx, cy) = (a[1], a[0], b[1], b[0], c[1], c[0]);
            let d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
            let ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / d;
            let uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / d;
            let r2 = (ax - ux).powi(2) + (ay - uy).powi(2);
            for (i, p) in v.iter().enumerate() {
                if t.contains(&i) {
                    continue;
                }
                let d2 = (p[1] - ux).powi(2) + (p[0] - uy).powi(2);
                assert!(d2 >= r2 * (1.0 - 1e-9), "point {i} inside circumcircle of {t:?}");
            }
        }
    }

    fn hull_area(points: &[Point]) -> f64 {
        let mut p: Vec<Point> = points.to_vec();
        p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        p.dedup();
        let cross = |o: Point, a: Point, b: Point| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
        let mut hull: Vec<Point> = Vec::new();
        for pass in 0..2 {
            let start = hull.len();
            let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
            for &q in iter {
                while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                    hull.pop();
                }
                hull.push(q);
            }
            hull.pop();
        }
        let mut area = 0.0;
        for i in 0..hull.len() {
            let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
            area += a[0] * b[1] - a[1] * b[0];
        }
        area.abs() / 2.0
    }

    fn mesh_area(mesh: &TriangleMesh) -> f64 {
        (0..mesh.len())
            .map(|t| {
                let [a, b, c] = mesh.triangle_points(t);
                orient(a, b, c).abs() / 2.0
            })
            .sum()
    }

    #[test]
    fn unit_square_splits_in_two() {
        let pts = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let mesh = delaunay(&pts).unwrap();
        assert_eq!(mesh.len(), 2);
        assert!((mesh_area(&mesh) - 1.0).abs() < 1e-12);
        assert_delaunay(&mesh);
    }

    #[test]
    fn collinear_and_tiny_inputs_are_rejected() {
        assert!(matches!(delaunay(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]), Err(Error::DegenerateInput(_))));
        assert!(matches!(delaunay(&[[0.0, 0.0], [1.0, 1.0]]), Err(Error::DegenerateInput(_))));
        assert!(matches!(delaunay(&[[3.0, 3.0]; 5]), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn random_sets_satisfy_empty_circle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(3..=12);
            let pts: Vec<Point> = (0..n).map(|_| [rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)]).collect();
            if pts.iter().all(|&p| orient(pts[0], pts[1], p) == 0.0) {
                continue;
            }
            let mesh = delaunay(&pts).unwrap();
            assert_delaunay(&mesh);
            assert!((mesh_area(&mesh) - hull_area(&pts)).abs() < 1e-6 * hull_area(&pts).max(1.0));
        }
    }

    #[test]
    fn control_grid_is_fully_covered() {
        let grid = crate::geometry::make_control_grid(512, 384, 16).unwrap();
        let mesh = delaunay(grid.points()).unwrap();
        assert_eq!(mesh.len(), 2 * 15 * 15);
        assert!((mesh_area(&mesh) - 512.0 * 384.0).abs() < 1e-6);
        assert_delaunay(&mesh);
    }

    #[test]
    fn thin_hull_slivers_are_kept() {
        // Nearly collinear bottom row; circumcircles of the hull triangles are huge.
        let pts = [[0.0, 0.0], [1e-7, 50.0], [0.0, 100.0], [30.0, 50.0], [-1e-7, 25.0]];
        let mesh = delaunay(&pts).unwrap();
        assert!((mesh_area(&mesh) - hull_area(&pts)).abs() < 1e-9);
    }

    #[test]
    fn output_is_deterministic() {
        let grid = crate::geometry::make_control_grid(100, 100, 9).unwrap();
        assert_eq!(delaunay(grid.points()).unwrap(), delaunay(grid.points()).unwrap());
    }
}
