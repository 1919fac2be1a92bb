use rayon::prelude::*;

use super::affine::{estimate_affine, signed_area, AffineTransform, MIN_TRIANGLE_AREA};
use super::delaunay::{delaunay, TriangleMesh};
use crate::error::{Error, Result};
use crate::geometry::{ControlGrid, Point, TargetGrid};

/// Per-pixel backward map: output pixel to source coordinate, or `None`
/// when the pixel lies outside every destination triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMap {
    height: usize,
    width: usize,
    coords: Vec<Option<Point>>,
    fold_count: usize,
}

impl SampleMap {
    pub fn identity(height: usize, width: usize) -> Self {
        let coords = (0..height)
            .flat_map(|r| (0..width).map(move |c| Some([r as f64, c as f64])))
            .collect();
        Self { height, width, coords, fold_count: 0 }
    }

    /// Builds a map from a closure evaluated at every output pixel.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> Option<Point>) -> Self {
        let coords = (0..height).flat_map(|r| (0..width).map(move |c| (r, c))).map(|(r, c)| f(r, c)).collect();
        Self { height, width, coords, fold_count: 0 }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<Point> {
        self.coords[row * self.width + col]
    }

    pub fn coords(&self) -> &[Option<Point>] {
        &self.coords
    }

    /// Destination triangles that flipped orientation or collapsed.
    pub fn fold_count(&self) -> usize {
        self.fold_count
    }

    pub fn covered(&self) -> usize {
        self.coords.iter().filter(|c| c.is_some()).count()
    }
}

/// Source triangulation plus the per-triangle backward transforms for one
/// destination configuration.
#[derive(Debug, Clone)]
pub struct PiecewiseAffineMap {
    mesh: TriangleMesh,
    target: Vec<Point>,
    // destination -> source, `None` for collapsed destination triangles
    backward: Vec<Option<AffineTransform>>,
    fold_count: usize,
}

impl PiecewiseAffineMap {
    /// `mesh` triangulates the source points; `target` holds their
    /// destinations in the same order.
    pub fn new(mesh: TriangleMesh, target: &[Point]) -> Result<Self> {
        if mesh.vertices().len() != target.len() {
            return Err(Error::invalid(format!(
                "mesh has {} vertices but {} destinations were given",
                mesh.vertices().len(),
                target.len()
            )));
        }
        let mut fold_count = 0;
        let backward = mesh
            .triangles()
            .iter()
            .map(|&[a, b, c]| {
                let src = [mesh.vertices()[a], mesh.vertices()[b], mesh.vertices()[c]];
                let dst = [target[a], target[b], target[c]];
                let (sa, da) = (signed_area(&src), signed_area(&dst));
                if da.abs() <= MIN_TRIANGLE_AREA || sa.signum() != da.signum() {
                    fold_count += 1;
                }
                estimate_affine(&dst, &src).ok()
            })
            .collect();
        Ok(Self { mesh, target: target.to_vec(), backward, fold_count })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn target(&self) -> &[Point] {
        &self.target
    }

    pub fn target_triangle(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.mesh.triangles()[t];
        [self.target[a], self.target[b], self.target[c]]
    }

    /// Backward (destination to source) transform of triangle `t`.
    pub fn backward(&self, t: usize) -> Option<&AffineTransform> {
        self.backward[t].as_ref()
    }

    pub fn fold_count(&self) -> usize {
        self.fold_count
    }

    /// Rasterizes the destination mesh onto an `out_dims` pixel lattice.
    ///
    /// Triangles are drawn in mesh order; where folded triangles overlap,
    /// the one drawn last owns the pixel.
    pub fn sample_map(&self, out_dims: (usize, usize)) -> SampleMap {
        let (h, w) = out_dims;
        let mut owner = vec![u32::MAX; h * w];
        for t in 0..self.mesh.len() {
            if self.backward[t].is_none() {
                continue;
            }
            let tri = self.target_triangle(t);
            let (y0, y1) = span(tri.iter().map(|p| p[0]), h);
            let (x0, x1) = span(tri.iter().map(|p| p[1]), w);
            if y0 > y1 || x0 > x1 {
                continue;
            }
            let edges = EdgeTest::new(&tri);
            for r in y0..=y1 {
                let row = &mut owner[r * w..(r + 1) * w];
                for (c, slot) in row.iter_mut().enumerate().take(x1 + 1).skip(x0) {
                    if edges.contains([r as f64, c as f64]) {
                        *slot = t as u32;
                    }
                }
            }
        }
        let mut coords = vec![None; h * w];
        coords.par_chunks_mut(w.max(1)).enumerate().for_each(|(r, row)| {
            for (c, out) in row.iter_mut().enumerate() {
                let t = owner[r * w + c];
                if t != u32::MAX {
                    let m = self.backward[t as usize].as_ref().expect("rasterized triangles have transforms");
                    *out = Some(m.apply([r as f64, c as f64]));
                }
            }
        });
        SampleMap { height: h, width: w, coords, fold_count: self.fold_count }
    }
}

fn span(values: impl Iterator<Item = f64> + Clone, len: usize) -> (usize, usize) {
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    let lo = (lo - 1e-9).ceil().max(0.0);
    let hi = (hi + 1e-9).floor().min(len as f64 - 1.0);
    if hi < 0.0 || lo > hi {
        return (1, 0);
    }
    (lo as usize, hi as usize)
}

/// Closed point-in-triangle test by signed distance to each edge.
pub(crate) struct EdgeTest {
    verts: [Point; 3],
    inv_len: [f64; 3],
    sign: f64,
}

/// Points this close (px) outside an edge still count as inside, so that
/// shared edges never open a crack.
pub(crate) const EDGE_TOLERANCE: f64 = 1e-9;

impl EdgeTest {
    pub(crate) fn new(t: &[Point; 3]) -> Self {
        let inv_len = std::array::from_fn(|k| {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            1.0 / (b[0] - a[0]).hypot(b[1] - a[1])
        });
        Self { verts: *t, inv_len, sign: signed_area(t).signum() }
    }

    #[inline]
    pub(crate) fn contains(&self, p: Point) -> bool {
        (0..3).all(|k| {
            let (a, b) = (self.verts[k], self.verts[(k + 1) % 3]);
            let cross = (b[1] - a[1]) * (p[0] - a[0]) - (b[0] - a[0]) * (p[1] - a[1]);
            cross * self.sign * self.inv_len[k] >= -EDGE_TOLERANCE
        })
    }
}

/// Triangulates `source`, derives the per-triangle transforms toward
/// `target` and rasterizes the backward map at `out_dims`.
pub fn build_piecewise_map(source: &ControlGrid, target: &TargetGrid, out_dims: (usize, usize)) -> Result<SampleMap> {
    if !target.matches(source) {
        return Err(Error::invalid("source and target grids differ in shape"));
    }
    let mesh = delaunay(source.points())?;
    Ok(PiecewiseAffineMap::new(mesh, target.points())?.sample_map(out_dims))
}
