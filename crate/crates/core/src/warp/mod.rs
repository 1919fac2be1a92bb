//! Piecewise affine resampling driven by a control-point mesh.
//!
//! The source control grid is triangulated once; each destination
//! configuration then only needs new per-triangle transforms and a
//! rasterization of the destination mesh. Sampling is backward: every
//! output pixel looks up its source coordinate.

mod affine;
mod delaunay;
mod map;
mod sample;

pub use affine::{estimate_affine, signed_area, AffineTransform, MIN_TRIANGLE_AREA};
pub use delaunay::{delaunay, in_circle, orient, TriangleMesh};
pub use map::{build_piecewise_map, PiecewiseAffineMap, SampleMap};
pub use sample::{
    sample, sample_bicubic, sample_bilinear, sample_nearest, warp_image, warp_mask, Interpolation, CUBIC_A,
};

use crate::error::Result;
use crate::geometry::{make_control_grid, make_target_grid, ControlGrid, SampledIntensity};

/// Control grid and its triangulation for one `(height, width, δ)`.
#[derive(Debug, Clone)]
pub struct Warper {
    grid: ControlGrid,
    mesh: TriangleMesh,
}

impl Warper {
    pub fn new(height: usize, width: usize, delta: usize) -> Result<Self> {
        let grid = make_control_grid(height, width, delta)?;
        let mesh = delaunay(grid.points())?;
        Ok(Self { grid, mesh })
    }

    pub fn grid(&self) -> &ControlGrid {
        &self.grid
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.grid.height(), self.grid.width())
    }

    pub fn piecewise(&self, intensity: SampledIntensity, rotation: f64, phase: f64) -> Result<PiecewiseAffineMap> {
        let target = make_target_grid(&self.grid, intensity, rotation, phase)?;
        PiecewiseAffineMap::new(self.mesh.clone(), target.points())
    }

    pub fn sample_map(&self, intensity: SampledIntensity, rotation: f64, phase: f64) -> Result<SampleMap> {
        Ok(self.piecewise(intensity, rotation, phase)?.sample_map(self.dims()))
    }
}
