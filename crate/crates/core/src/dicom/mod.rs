//! DICOM ingestion: slice parsing, the geometry metadata the table removal
//! needs, HU rescale and the slice-wise preprocessing stages.
//!
//! Only little-endian uncompressed transfer syntaxes are handled (implicit
//! and explicit VR). Private GE tags (scan range, recon center) are read
//! when present and otherwise reported as absent.

mod parse;
mod preprocess;
mod series;
mod write;

pub use parse::{parse_dicom_slice, read_dicom_file};
pub use preprocess::{normalize, rescale_to_hu, resize, resize_labels, Normalization};
pub use series::{assemble_series, SliceSeries};
pub use write::{write_dicom_slice, VrEncoding};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attribute tags consumed by the pipeline.
pub mod tags {
    pub type Tag = (u16, u16);

    pub const TRANSFER_SYNTAX_UID: Tag = (0x0002, 0x0010);
    pub const RECONSTRUCTION_DIAMETER: Tag = (0x0018, 0x1100);
    pub const TABLE_HEIGHT: Tag = (0x0018, 0x1130);
    pub const IMAGE_POSITION_PATIENT: Tag = (0x0020, 0x0032);
    pub const SLICE_LOCATION: Tag = (0x0020, 0x1041);
    pub const SCAN_START_LOCATION: Tag = (0x0027, 0x1050);
    pub const SCAN_END_LOCATION: Tag = (0x0027, 0x1051);
    pub const SAMPLES_PER_PIXEL: Tag = (0x0028, 0x0002);
    pub const ROWS: Tag = (0x0028, 0x0010);
    pub const COLUMNS: Tag = (0x0028, 0x0011);
    pub const PIXEL_SPACING: Tag = (0x0028, 0x0030);
    pub const BITS_ALLOCATED: Tag = (0x0028, 0x0100);
    pub const PIXEL_REPRESENTATION: Tag = (0x0028, 0x0103);
    pub const RESCALE_INTERCEPT: Tag = (0x0028, 0x1052);
    pub const RESCALE_SLOPE: Tag = (0x0028, 0x1053);
    pub const RECON_CENTER: Tag = (0x0043, 0x1031);
    pub const PIXEL_DATA: Tag = (0x7FE0, 0x0010);
}

pub const IMPLICIT_VR_LITTLE_ENDIAN: &str = "1.2.840.10008.1.2";
pub const EXPLICIT_VR_LITTLE_ENDIAN: &str = "1.2.840.10008.1.2.1";

/// Per-slice acquisition geometry. Absent tags stay `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DicomSliceMeta {
    /// (0018,1100), mm.
    #[serde(default)]
    pub reconstruction_diameter_mm: Option<f64>,
    /// (0018,1130): table top to rotation center, mm, below is positive.
    #[serde(default)]
    pub table_height_mm: Option<f64>,
    /// (0020,0032), `(x, y, z)` of the first transmitted pixel, mm.
    #[serde(default)]
    pub image_position_patient_mm: Option<[f64; 3]>,
    /// (0020,1041), mm.
    #[serde(default)]
    pub slice_location_mm: Option<f64>,
    /// (0028,0030), `(row, column)` spacing in mm per pixel.
    #[serde(default)]
    pub pixel_spacing_mm_per_px: Option<[f64; 2]>,
    /// (0043,1031), GE private, `(x, y, z)` in mm.
    #[serde(default)]
    pub recon_center_mm: Option<[f64; 3]>,
    /// (0027,1050), GE private.
    #[serde(default)]
    pub scan_start_mm: Option<f64>,
    /// (0027,1051), GE private.
    #[serde(default)]
    pub scan_end_mm: Option<f64>,
    /// (0028,1053).
    #[serde(default)]
    pub rescale_slope: Option<f64>,
    /// (0028,1052).
    #[serde(default)]
    pub rescale_intercept: Option<f64>,
}

impl DicomSliceMeta {
    pub fn validate(&self) -> Result<()> {
        if let Some([r, c]) = self.pixel_spacing_mm_per_px {
            if !(r > 0.0 && c > 0.0 && r.is_finite() && c.is_finite()) {
                return Err(Error::Parse(format!("pixel spacing must be positive, got [{r}, {c}]")));
            }
        }
        if let Some(d) = self.reconstruction_diameter_mm {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Parse(format!("reconstruction diameter must be positive, got {d}")));
            }
        }
        Ok(())
    }

    /// `(slope, intercept)`; absent attributes mean the stored values are
    /// already modality values.
    pub fn rescale(&self) -> (f64, f64) {
        (self.rescale_slope.unwrap_or(1.0), self.rescale_intercept.unwrap_or(0.0))
    }

    /// Axial position used to order slices: Slice Location, else the z of
    /// Image Position (Patient).
    pub fn axial_location(&self) -> Option<f64> {
        self.slice_location_mm.or(self.image_position_patient_mm.map(|p| p[2]))
    }

    /// Copy with pixel spacing adjusted for a resize from `from` to `to`.
    pub fn resized(&self, from: (usize, usize), to: (usize, usize)) -> Self {
        let mut out = self.clone();
        if let Some([r, c]) = self.pixel_spacing_mm_per_px {
            out.pixel_spacing_mm_per_px = Some([
                r * from.0 as f64 / to.0 as f64,
                c * from.1 as f64 / to.1 as f64,
            ]);
        }
        out
    }
}
