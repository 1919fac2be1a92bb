use super::tags::{self, Tag};
use super::{DicomSliceMeta, EXPLICIT_VR_LITTLE_ENDIAN, IMPLICIT_VR_LITTLE_ENDIAN};
use crate::error::{Error, Result};
use crate::image::ImageGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VrEncoding {
    Explicit,
    Implicit,
}

const CT_IMAGE_STORAGE: &str = "1.2.840.10008.5.1.4.1.1.2";

struct Out {
    buf: Vec<u8>,
    explicit: bool,
}

impl Out {
    fn put(&mut self, tag: Tag, vr: &[u8; 2], value: &[u8], pad: u8) {
        let mut v = value.to_vec();
        if v.len() % 2 == 1 {
            v.push(pad);
        }
        self.buf.extend_from_slice(&tag.0.to_le_bytes());
        self.buf.extend_from_slice(&tag.1.to_le_bytes());
        let long = matches!(vr, b"OB" | b"OW" | b"UN" | b"UT");
        if self.explicit || tag.0 == 0x0002 {
            self.buf.extend_from_slice(vr);
            if long {
                self.buf.extend_from_slice(&[0, 0]);
                self.buf.extend_from_slice(&(v.len() as u32).to_le_bytes());
            } else {
                self.buf.extend_from_slice(&(v.len() as u16).to_le_bytes());
            }
        } else {
            self.buf.extend_from_slice(&(v.len() as u32).to_le_bytes());
        }
        self.buf.extend_from_slice(&v);
    }

    fn text(&mut self, tag: Tag, vr: &[u8; 2], s: &str) {
        self.put(tag, vr, s.as_bytes(), if vr == b"UI" { 0 } else { b' ' });
    }

    fn ds(&mut self, tag: Tag, values: &[f64]) {
        let s: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
        self.text(tag, b"DS", &s.join("\\"));
    }

    fn us(&mut self, tag: Tag, v: u16) {
        self.put(tag, b"US", &v.to_le_bytes(), 0);
    }
}

/// Serializes a single-frame CT slice with 16-bit signed pixels.
///
/// Decimal fields use the shortest round-tripping representation, so
/// reading the file back yields bit-identical metadata. The private scan
/// range is stored as FD.
pub fn write_dicom_slice(raw: &ImageGrid, meta: &DicomSliceMeta, encoding: VrEncoding) -> Result<Vec<u8>> {
    let (h, w) = raw.dims();
    if h > u16::MAX as usize || w > u16::MAX as usize {
        return Err(Error::invalid(format!("{h}x{w} exceeds the 16-bit row/column limit")));
    }
    let mut pixels = Vec::with_capacity(h * w * 2);
    for &v in raw.data() {
        if v.fract() != 0.0 || v < i16::MIN as f64 || v > i16::MAX as f64 {
            return Err(Error::invalid(format!("stored value {v} does not fit a signed 16-bit integer")));
        }
        pixels.extend_from_slice(&(v as i16).to_le_bytes());
    }

    let syntax = match encoding {
        VrEncoding::Explicit => EXPLICIT_VR_LITTLE_ENDIAN,
        VrEncoding::Implicit => IMPLICIT_VR_LITTLE_ENDIAN,
    };
    let mut group = Out { buf: Vec::new(), explicit: true };
    group.put((0x0002, 0x0001), b"OB", &[0, 1], 0);
    group.text((0x0002, 0x0002), b"UI", CT_IMAGE_STORAGE);
    group.text((0x0002, 0x0003), b"UI", "2.25.1");
    group.text(tags::TRANSFER_SYNTAX_UID, b"UI", syntax);

    let mut out = Out { buf: vec![0u8; 128], explicit: encoding == VrEncoding::Explicit };
    out.buf.extend_from_slice(b"DICM");
    out.put((0x0002, 0x0000), b"UL", &(group.buf.len() as u32).to_le_bytes(), 0);
    out.buf.extend_from_slice(&group.buf);

    out.text((0x0008, 0x0016), b"UI", CT_IMAGE_STORAGE);
    out.text((0x0008, 0x0060), b"CS", "CT");
    if let Some(d) = meta.reconstruction_diameter_mm {
        out.ds(tags::RECONSTRUCTION_DIAMETER, &[d]);
    }
    if let Some(t) = meta.table_height_mm {
        out.ds(tags::TABLE_HEIGHT, &[t]);
    }
    if let Some(p) = meta.image_position_patient_mm {
        out.ds(tags::IMAGE_POSITION_PATIENT, &p);
    }
    if let Some(s) = meta.slice_location_mm {
        out.ds(tags::SLICE_LOCATION, &[s]);
    }
    if meta.scan_start_mm.is_some() || meta.scan_end_mm.is_some() {
        out.text((0x0027, 0x0010), b"LO", "GEMS_IMAG_01");
        if let Some(v) = meta.scan_start_mm {
            out.put(tags::SCAN_START_LOCATION, b"FD", &v.to_le_bytes(), 0);
        }
        if let Some(v) = meta.scan_end_mm {
            out.put(tags::SCAN_END_LOCATION, b"FD", &v.to_le_bytes(), 0);
        }
    }
    out.us(tags::SAMPLES_PER_PIXEL, 1);
    out.text((0x0028, 0x0004), b"CS", "MONOCHROME2");
    out.us(tags::ROWS, h as u16);
    out.us(tags::COLUMNS, w as u16);
    if let Some(s) = meta.pixel_spacing_mm_per_px {
        out.ds(tags::PIXEL_SPACING, &s);
    }
    out.us(tags::BITS_ALLOCATED, 16);
    out.us((0x0028, 0x0101), 16);
    out.us((0x0028, 0x0102), 15);
    out.us(tags::PIXEL_REPRESENTATION, 1);
    if let Some(v) = meta.rescale_intercept {
        out.ds(tags::RESCALE_INTERCEPT, &[v]);
    }
    if let Some(v) = meta.rescale_slope {
        out.ds(tags::RESCALE_SLOPE, &[v]);
    }
    if let Some(c) = meta.recon_center_mm {
        out.text((0x0043, 0x0010), b"LO", "GEMS_PARM_01");
        out.ds(tags::RECON_CENTER, &c);
    }
    out.put(tags::PIXEL_DATA, b"OW", &pixels, 0);
    Ok(out.buf)
}
