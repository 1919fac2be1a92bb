//! Scan-table removal: everything outside the reconstruction circle, whose
//! position follows from the table height and reconstruction geometry, is
//! overwritten with a pad value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dicom::DicomSliceMeta;
use crate::error::{Error, Result};
use crate::image::{ImageGrid, PixelSemantics};

/// Scanner calibration: `scale` multiplies pixel distances, `offset_mm`
/// is added to the table height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableCalibration {
    pub scale: f64,
    pub offset_mm: f64,
}

impl Default for TableCalibration {
    fn default() -> Self {
        Self { scale: 1.0, offset_mm: 0.0 }
    }
}

/// Where the vertical recon-center coordinate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerticalSource {
    ReconCenter,
    ImagePosition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRemovalGeometry {
    /// `(row, col)` in pixels.
    pub center_px: [f64; 2],
    pub radius_px: f64,
    pub pad_value: f64,
    pub cal_scale: f64,
    pub cal_offset_mm: f64,
    /// Center offset `d` in mm.
    pub offset_mm: f64,
    pub vertical_mm: f64,
    pub vertical_source: VerticalSource,
}

/// Pad value for pixels outside the valid disc: air for HU, 0 otherwise.
pub fn default_pad(semantics: PixelSemantics) -> f64 {
    match semantics {
        PixelSemantics::Hu => -1024.0,
        _ => 0.0,
    }
}

fn missing(what: &str) -> Error {
    Error::MissingMetadata(format!("table removal needs {what}"))
}

pub fn compute_table_geometry(
    meta: &DicomSliceMeta,
    dims: (usize, usize),
    cal: TableCalibration,
    pad_value: f64,
) -> Result<TableRemovalGeometry> {
    let h = meta.table_height_mm.ok_or_else(|| missing("Table Height (0018,1130)"))?;
    let zeta = meta.pixel_spacing_mm_per_px.ok_or_else(|| missing("Pixel Spacing (0028,0030)"))?[0];
    let diameter = meta.reconstruction_diameter_mm.ok_or_else(|| missing("Reconstruction Diameter (0018,1100)"))?;
    let (vertical_mm, vertical_source) = match (meta.recon_center_mm, meta.image_position_patient_mm) {
        (Some(c), _) => (c[1], VerticalSource::ReconCenter),
        (None, Some(p)) => (p[1] + dims.0 as f64 * zeta / 2.0, VerticalSource::ImagePosition),
        (None, None) => return Err(missing("a vertical center (0043,1031 or 0020,0032)")),
    };
    if !(zeta > 0.0) {
        return Err(Error::InvalidGeometry(format!("row spacing {zeta} must be positive")));
    }
    let r_mm = diameter / 2.0;
    let d = vertical_mm - (h + cal.offset_mm - r_mm);
    let center_px = [dims.0 as f64 / 2.0 - d / zeta * cal.scale, dims.1 as f64 / 2.0];
    let radius_px = r_mm / zeta * cal.scale;
    if !(radius_px > 0.0 && radius_px.is_finite()) || !center_px.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidGeometry(format!("radius {radius_px} px at center {center_px:?}")));
    }
    if !pad_value.is_finite() {
        return Err(Error::invalid("pad value must be finite"));
    }
    Ok(TableRemovalGeometry {
        center_px,
        radius_px,
        pad_value,
        cal_scale: cal.scale,
        cal_offset_mm: cal.offset_mm,
        offset_mm: d,
        vertical_mm,
        vertical_source,
    })
}

impl TableRemovalGeometry {
    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        let dy = row as f64 - self.center_px[0];
        let dx = col as f64 - self.center_px[1];
        dy * dy + dx * dx <= self.radius_px * self.radius_px
    }
}

/// Sets every pixel outside the valid disc to the pad value.
pub fn apply_valid_mask(img: &ImageGrid, geom: &TableRemovalGeometry) -> ImageGrid {
    let mut out = img.clone();
    let w = img.width();
    out.data_mut().par_chunks_mut(w).enumerate().for_each(|(r, row)| {
        for (c, v) in row.iter_mut().enumerate() {
            if !geom.is_valid(r, c) {
                *v = geom.pad_value;
            }
        }
    });
    out
}

/// Label grid with 1 inside the valid disc and 0 outside.
pub fn valid_mask(geom: &TableRemovalGeometry, dims: (usize, usize)) -> ImageGrid {
    ImageGrid::from_fn(dims.0, dims.1, PixelSemantics::Label, |r, c| if geom.is_valid(r, c) { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> DicomSliceMeta {
        DicomSliceMeta {
            reconstruction_diameter_mm: Some(500.0),
            table_height_mm: Some(160.0),
            pixel_spacing_mm_per_px: Some([0.977, 0.977]),
            recon_center_mm: Some([0.0, 0.0, 0.0]),
            ..Default::default()
        }
    }

    #[test]
    fn worked_example() {
        let g = compute_table_geometry(&meta(), (512, 512), TableCalibration::default(), -1024.0).unwrap();
        let d = 0.0 - (160.0 + 0.0 - 250.0);
        assert_eq!(d, 90.0);
        assert!((g.offset_mm - 90.0).abs() < 1e-12);
        assert!((g.center_px[0] - (256.0 - 90.0 / 0.977)).abs() < 1e-9);
        assert!((g.center_px[0] - 163.88).abs() < 0.01);
        assert_eq!(g.center_px[1], 256.0);
        assert!((g.radius_px - 250.0 / 0.977).abs() < 1e-9);
        assert!((g.radius_px - 255.88).abs() < 0.01);
        assert_eq!(g.vertical_source, VerticalSource::ReconCenter);
    }

    #[test]
    fn zero_offset_centers_the_disc() {
        let mut m = meta();
        m.recon_center_mm = Some([0.0, 160.0 + 3.0 - 250.0, 0.0]);
        let cal = TableCalibration { scale: 1.0, offset_mm: 3.0 };
        let g = compute_table_geometry(&m, (100, 80), cal, 0.0).unwrap();
        assert_eq!(g.center_px, [50.0, 40.0]);
    }

    #[test]
    fn image_position_fallback() {
        let mut m = meta();
        m.recon_center_mm = None;
        m.image_position_patient_mm = Some([-250.0, -250.096, 0.0]);
        let g = compute_table_geometry(&m, (512, 512), TableCalibration::default(), 0.0).unwrap();
        assert_eq!(g.vertical_source, VerticalSource::ImagePosition);
        assert!((g.vertical_mm - (-250.096 + 256.0 * 0.977)).abs() < 1e-9);
    }

    #[test]
    fn missing_and_invalid_metadata() {
        let mut m = meta();
        m.table_height_mm = None;
        assert!(matches!(
            compute_table_geometry(&m, (64, 64), TableCalibration::default(), 0.0),
            Err(Error::MissingMetadata(_))
        ));
        let mut m = meta();
        m.recon_center_mm = None;
        assert!(matches!(
            compute_table_geometry(&m, (64, 64), TableCalibration::default(), 0.0),
            Err(Error::MissingMetadata(_))
        ));
        let cal = TableCalibration { scale: 0.0, offset_mm: 0.0 };
        assert!(matches!(compute_table_geometry(&meta(), (64, 64), cal, 0.0), Err(Error::InvalidGeometry(_))));
    }

    fn geom(center: [f64; 2], radius: f64, pad: f64) -> TableRemovalGeometry {
        TableRemovalGeometry {
            center_px: center,
            radius_px: radius,
            pad_value: pad,
            cal_scale: 1.0,
            cal_offset_mm: 0.0,
            offset_mm: 0.0,
            vertical_mm: 0.0,
            vertical_source: VerticalSource::ReconCenter,
        }
    }

    #[test]
    fn mask_matches_brute_force_and_is_idempotent() {
        let img = ImageGrid::from_fn(64, 64, PixelSemantics::Hu, |r, c| (r * 64 + c) as f64);
        let g = geom([32.0, 32.0], 10.0, -1024.0);
        let once = apply_valid_mask(&img, &g);
        for r in 0..64 {
            for c in 0..64 {
                let inside = ((r as i64 - 32).pow(2) + (c as i64 - 32).pow(2)) <= 100;
                let want = if inside { img.get(r, c) } else { -1024.0 };
                assert_eq!(once.get(r, c).to_bits(), want.to_bits());
            }
        }
        assert_eq!(apply_valid_mask(&once, &g), once);
        let mask = valid_mask(&g, (64, 64));
        assert_eq!(mask.data().iter().filter(|&&v| v == 1.0).count(), once.data().iter().filter(|&&v| v != -1024.0).count());
    }

    #[test]
    fn large_radius_is_identity_and_tiny_radius_pads() {
        let img = ImageGrid::from_fn(20, 30, PixelSemantics::Hu, |r, c| (r + c) as f64);
        assert_eq!(apply_valid_mask(&img, &geom([10.0, 15.0], 100.0, 0.0)), img);
        let out = apply_valid_mask(&img, &geom([10.0, 15.0], 1e-6, -1.0));
        assert_eq!(out.data().iter().filter(|&&v| v != -1.0).count(), 1);
        assert_eq!(out.get(10, 15), img.get(10, 15));
    }
}
