use std::path::Path;

use super::tags::{self, Tag};
use super::{DicomSliceMeta, EXPLICIT_VR_LITTLE_ENDIAN, IMPLICIT_VR_LITTLE_ENDIAN};
use crate::error::{Error, Result};
use crate::image::{ImageGrid, PixelSemantics};

const UNDEFINED: u32 = 0xFFFF_FFFF;
const ITEM: Tag = (0xFFFE, 0xE000);
const ITEM_END: Tag = (0xFFFE, 0xE00D);
const SEQUENCE_END: Tag = (0xFFFE, 0xE0DD);

// VRs whose explicit header carries a 2-byte reserved field and a 4-byte length
const LONG_VRS: [&[u8; 2]; 13] = [
    b"OB", b"OD", b"OF", b"OL", b"OV", b"OW", b"SQ", b"SV", b"UC", b"UN", b"UR", b"UT", b"UV",
];
const KNOWN_VRS: [&[u8; 2]; 34] = [
    b"AE", b"AS", b"AT", b"CS", b"DA", b"DS", b"DT", b"FD", b"FL", b"IS", b"LO", b"LT", b"OB", b"OD", b"OF", b"OL",
    b"OV", b"OW", b"PN", b"SH", b"SL", b"SQ", b"SS", b"ST", b"SV", b"TM", b"UC", b"UI", b"UL", b"UN", b"UR", b"US",
    b"UT", b"UV",
];

struct Element<'a> {
    tag: Tag,
    vr: Option<[u8; 2]>,
    value: &'a [u8],
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Parse(format!("unexpected end of stream at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn peek_group(&self) -> Option<u16> {
        self.buf.get(self.pos..self.pos + 2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn at_end(&self) -> bool {
        self.pos >= self.buf.len()
    }

    /// Reads one element header and value. Undefined-length sequences are
    /// skipped and returned with an empty value.
    fn element(&mut self, explicit: bool) -> Result<Element<'a>> {
        let tag = (self.u16()?, self.u16()?);
        if tag.0 == 0xFFFE {
            let len = self.u32()?;
            let value = if len == UNDEFINED { &[][..] } else { self.take(len as usize)? };
            return Ok(Element { tag, vr: None, value });
        }
        let (vr, len) = if explicit {
            let vr: [u8; 2] = self.take(2)?.try_into().unwrap();
            if LONG_VRS.contains(&&vr) {
                self.take(2)?;
                (Some(vr), self.u32()?)
            } else {
                (Some(vr), u32::from(self.u16()?))
            }
        } else {
            (None, self.u32()?)
        };
        if len == UNDEFINED {
            if tag == tags::PIXEL_DATA {
                return Err(Error::UnsupportedEncoding("encapsulated (compressed) pixel data".into()));
            }
            // UN with undefined length is implicit VR inside
            let inner_explicit = explicit && vr != Some(*b"UN");
            self.skip_sequence(inner_explicit)?;
            return Ok(Element { tag, vr, value: &[] });
        }
        let value = self.take(len as usize)?;
        Ok(Element { tag, vr, value })
    }

    fn skip_sequence(&mut self, explicit: bool) -> Result<()> {
        loop {
            let item = self.element(explicit)?;
            match item.tag {
                SEQUENCE_END => return Ok(()),
                ITEM if item.value.is_empty() => self.skip_item(explicit)?,
                ITEM => {}
                other => {
                    return Err(Error::Parse(format!("unexpected ({:04X},{:04X}) inside sequence", other.0, other.1)))
                }
            }
        }
    }

    // Undefined-length item: elements until the item delimiter.
    fn skip_item(&mut self, explicit: bool) -> Result<()> {
        loop {
            if self.element(explicit)?.tag == ITEM_END {
                return Ok(());
            }
        }
    }
}

fn text(value: &[u8]) -> String {
    String::from_utf8_lossy(value).trim_matches(|c: char| c == '\0' || c.is_whitespace()).to_string()
}

fn decimals(e: &Element, n: usize) -> Result<Vec<f64>> {
    let s = text(e.value);
    let out: std::result::Result<Vec<f64>, _> = s.split('\\').map(|p| p.trim().parse::<f64>()).collect();
    match out {
        Ok(v) if v.len() >= n && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(Error::Parse(format!(
            "({:04X},{:04X}) expected {n} decimal value(s), got {s:?}",
            e.tag.0, e.tag.1
        ))),
    }
}

fn single_float(e: &Element) -> Result<f64> {
    match (e.vr.as_ref().map(|v| &v[..]), e.value.len()) {
        (Some(b"FL") | Some(b"UN") | None, 4) => {
            Ok(f64::from(f32::from_le_bytes(e.value.try_into().unwrap())))
        }
        (Some(b"FD") | Some(b"UN") | None, 8) => Ok(f64::from_le_bytes(e.value.try_into().unwrap())),
        _ => Ok(decimals(e, 1)?[0]),
    }
}

fn unsigned(e: &Element) -> Result<u32> {
    match e.value.len() {
        2 => Ok(u32::from(u16::from_le_bytes([e.value[0], e.value[1]]))),
        4 => Ok(u32::from_le_bytes(e.value.try_into().unwrap())),
        _ => Err(Error::Parse(format!("({:04X},{:04X}) is not an unsigned short", e.tag.0, e.tag.1))),
    }
}

fn looks_explicit(buf: &[u8], pos: usize) -> bool {
    buf.get(pos + 4..pos + 6).is_some_and(|vr| KNOWN_VRS.iter().any(|k| &k[..] == vr))
}

/// Parses one uncompressed little-endian slice into raw stored values
/// plus the geometry metadata.
pub fn parse_dicom_slice(bytes: &[u8]) -> Result<(ImageGrid, DicomSliceMeta)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let explicit = if bytes.len() >= 132 && &bytes[128..132] == b"DICM" {
        r.pos = 132;
        let mut syntax = None;
        while r.peek_group() == Some(0x0002) {
            let e = r.element(true)?;
            if e.tag == tags::TRANSFER_SYNTAX_UID {
                syntax = Some(text(e.value));
            }
        }
        match syntax.as_deref() {
            Some(IMPLICIT_VR_LITTLE_ENDIAN) => false,
            Some(EXPLICIT_VR_LITTLE_ENDIAN) => true,
            Some(other) => return Err(Error::UnsupportedEncoding(format!("transfer syntax {other}"))),
            None => return Err(Error::Parse("file meta lacks a transfer syntax".into())),
        }
    } else {
        looks_explicit(bytes, 0)
    };

    let mut meta = DicomSliceMeta::default();
    let (mut rows, mut cols, mut bits, mut signed, mut samples) = (None, None, 16u32, false, 1u32);
    let mut pixels: Option<&[u8]> = None;
    while !r.at_end() {
        let e = r.element(explicit)?;
        match e.tag {
            tags::RECONSTRUCTION_DIAMETER => meta.reconstruction_diameter_mm = Some(decimals(&e, 1)?[0]),
            tags::TABLE_HEIGHT => meta.table_height_mm = Some(decimals(&e, 1)?[0]),
            tags::IMAGE_POSITION_PATIENT => {
                let v = decimals(&e, 3)?;
                meta.image_position_patient_mm = Some([v[0], v[1], v[2]]);
            }
            tags::SLICE_LOCATION => meta.slice_location_mm = Some(decimals(&e, 1)?[0]),
            tags::SCAN_START_LOCATION => meta.scan_start_mm = Some(single_float(&e)?),
            tags::SCAN_END_LOCATION => meta.scan_end_mm = Some(single_float(&e)?),
            tags::PIXEL_SPACING => {
                let v = decimals(&e, 2)?;
                meta.pixel_spacing_mm_per_px = Some([v[0], v[1]]);
            }
            tags::RECON_CENTER => {
                let v = decimals(&e, 3)?;
                meta.recon_center_mm = Some([v[0], v[1], v[2]]);
            }
            tags::RESCALE_SLOPE => meta.rescale_slope = Some(decimals(&e, 1)?[0]),
            tags::RESCALE_INTERCEPT => meta.rescale_intercept = Some(decimals(&e, 1)?[0]),
            tags::ROWS => rows = Some(unsigned(&e)? as usize),
            tags::COLUMNS => cols = Some(unsigned(&e)? as usize),
            tags::BITS_ALLOCATED => bits = unsigned(&e)?,
            tags::PIXEL_REPRESENTATION => signed = unsigned(&e)? == 1,
            tags::SAMPLES_PER_PIXEL => samples = unsigned(&e)?,
            tags::PIXEL_DATA => pixels = Some(e.value),
            _ => {}
        }
    }

    let pixels = pixels.ok_or_else(|| Error::Parse("missing PixelData (7FE0,0010)".into()))?;
    if meta.pixel_spacing_mm_per_px.is_none() {
        return Err(Error::Parse("missing PixelSpacing (0028,0030)".into()));
    }
    meta.validate()?;
    let (rows, cols) = match (rows, cols) {
        (Some(r), Some(c)) if r > 0 && c > 0 => (r, c),
        _ => return Err(Error::Parse("missing or zero Rows/Columns".into())),
    };
    if samples != 1 {
        return Err(Error::UnsupportedEncoding(format!("{samples} samples per pixel")));
    }
    let bytes_per = match bits {
        8 => 1,
        16 => 2,
        other => return Err(Error::UnsupportedEncoding(format!("{other} bits allocated"))),
    };
    let n = rows * cols;
    if pixels.len() < n * bytes_per {
        return Err(Error::Parse(format!("pixel data holds {} bytes, need {}", pixels.len(), n * bytes_per)));
    }
    let data: Vec<f64> = match (bytes_per, signed) {
        (1, false) => pixels[..n].iter().map(|&v| f64::from(v)).collect(),
        (1, true) => pixels[..n].iter().map(|&v| f64::from(v as i8)).collect(),
        (_, false) => pixels.chunks_exact(2).take(n).map(|b| f64::from(u16::from_le_bytes([b[0], b[1]]))).collect(),
        (_, true) => pixels.chunks_exact(2).take(n).map(|b| f64::from(i16::from_le_bytes([b[0], b[1]]))).collect(),
    };
    Ok((ImageGrid::new(rows, cols, data, PixelSemantics::Hu)?, meta))
}

pub fn read_dicom_file(path: impl AsRef<Path>) -> Result<(ImageGrid, DicomSliceMeta)> {
    let bytes = std::fs::read(path)?;
    parse_dicom_slice(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-assembled implicit VR dataset, independent of the writer.
    struct Fixture(Vec<u8>);

    impl Fixture {
        fn el(mut self, g: u16, e: u16, value: &[u8]) -> Self {
            let mut v = value.to_vec();
            if v.len() % 2 == 1 {
                v.push(b' ');
            }
            self.0.extend_from_slice(&g.to_le_bytes());
            self.0.extend_from_slice(&e.to_le_bytes());
            self.0.extend_from_slice(&(v.len() as u32).to_le_bytes());
            self.0.extend_from_slice(&v);
            self
        }
    }

    fn base() -> Fixture {
        Fixture(Vec::new())
            .el(0x0008, 0x0060, b"CT")
            .el(0x0018, 0x1100, b"500")
            .el(0x0018, 0x1130, b"160.5")
            .el(0x0020, 0x0032, b"-250\\-250\\-37.25")
            .el(0x0020, 0x1041, b"-37.25")
            .el(0x0027, 0x1050, &(-100.5f32).to_le_bytes())
            .el(0x0027, 0x1051, &(400.25f32).to_le_bytes())
            .el(0x0028, 0x0002, &1u16.to_le_bytes())
            .el(0x0028, 0x0010, &2u16.to_le_bytes())
            .el(0x0028, 0x0011, &3u16.to_le_bytes())
            .el(0x0028, 0x0030, b"0.9765625\\0.9765625")
            .el(0x0028, 0x0100, &16u16.to_le_bytes())
            .el(0x0028, 0x0103, &1u16.to_le_bytes())
            .el(0x0028, 0x1052, b"-1024")
            .el(0x0028, 0x1053, b"1")
            .el(0x0043, 0x1031, b"0\\-12.5\\0")
    }

    fn pixels(vals: &[i16]) -> Vec<u8> {
        vals.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    #[test]
    fn implicit_fixture_fields_are_read_exactly() {
        let f = base().el(0x7FE0, 0x0010, &pixels(&[0, 1, -2, 3000, -32768, 32767]));
        let (img, meta) = parse_dicom_slice(&f.0).unwrap();
        assert_eq!(img.dims(), (2, 3));
        assert_eq!(img.data(), &[0.0, 1.0, -2.0, 3000.0, -32768.0, 32767.0]);
        assert_eq!(meta.reconstruction_diameter_mm, Some(500.0));
        assert_eq!(meta.table_height_mm, Some(160.5));
        assert_eq!(meta.image_position_patient_mm, Some([-250.0, -250.0, -37.25]));
        assert_eq!(meta.slice_location_mm, Some(-37.25));
        assert_eq!(meta.scan_start_mm, Some(-100.5));
        assert_eq!(meta.scan_end_mm, Some(400.25));
        assert_eq!(meta.pixel_spacing_mm_per_px, Some([0.9765625, 0.9765625]));
        assert_eq!(meta.recon_center_mm, Some([0.0, -12.5, 0.0]));
        assert_eq!(meta.rescale(), (1.0, -1024.0));
    }

    #[test]
    fn absent_optional_tags_stay_absent() {
        let f = Fixture(Vec::new())
            .el(0x0028, 0x0010, &1u16.to_le_bytes())
            .el(0x0028, 0x0011, &1u16.to_le_bytes())
            .el(0x0028, 0x0030, b"1\\1")
            .el(0x7FE0, 0x0010, &pixels(&[5]));
        let (_, meta) = parse_dicom_slice(&f.0).unwrap();
        assert_eq!(meta.table_height_mm, None);
        assert_eq!(meta.recon_center_mm, None);
        assert_eq!(meta.rescale_slope, None);
    }

    #[test]
    fn missing_required_tags_fail() {
        let f = base();
        assert!(matches!(parse_dicom_slice(&f.0), Err(Error::Parse(_))));
        let f = Fixture(Vec::new())
            .el(0x0028, 0x0010, &1u16.to_le_bytes())
            .el(0x0028, 0x0011, &1u16.to_le_bytes())
            .el(0x7FE0, 0x0010, &pixels(&[5]));
        assert!(matches!(parse_dicom_slice(&f.0), Err(Error::Parse(_))));
    }

    #[test]
    fn sequences_with_undefined_length_are_skipped() {
        let mut f = Fixture(Vec::new()).el(0x0008, 0x0060, b"CT");
        // (0008,1140) SQ, undefined length, one undefined-length item
        f.0.extend_from_slice(&[0x08, 0x00, 0x40, 0x11, 0xFF, 0xFF, 0xFF, 0xFF]);
        f.0.extend_from_slice(&[0xFE, 0xFF, 0x00, 0xE0, 0xFF, 0xFF, 0xFF, 0xFF]);
        f = f.el(0x0008, 0x1150, b"1.2.3");
        f.0.extend_from_slice(&[0xFE, 0xFF, 0x0D, 0xE0, 0, 0, 0, 0]);
        f.0.extend_from_slice(&[0xFE, 0xFF, 0xDD, 0xE0, 0, 0, 0, 0]);
        let f = f
            .el(0x0028, 0x0010, &1u16.to_le_bytes())
            .el(0x0028, 0x0011, &2u16.to_le_bytes())
            .el(0x0028, 0x0030, b"0.5\\0.5")
            .el(0x7FE0, 0x0010, &pixels(&[7, 9]));
        let (img, _) = parse_dicom_slice(&f.0).unwrap();
        assert_eq!(img.data(), &[7.0, 9.0]);
    }

    #[test]
    fn compressed_syntax_is_unsupported() {
        let mut bytes = vec![0u8; 128];
        bytes.extend_from_slice(b"DICM");
        let ts = b"1.2.840.10008.1.2.4.50\0";
        bytes.extend_from_slice(&[0x02, 0x00, 0x10, 0x00, b'U', b'I']);
        bytes.extend_from_slice(&(ts.len() as u16).to_le_bytes());
        bytes.extend_from_slice(ts);
        assert!(matches!(parse_dicom_slice(&bytes), Err(Error::UnsupportedEncoding(_))));
    }

    #[test]
    fn truncated_stream_is_a_parse_error() {
        let f = base().el(0x7FE0, 0x0010, &pixels(&[0, 1, 2, 3, 4, 5]));
        assert!(matches!(parse_dicom_slice(&f.0[..f.0.len() - 3]), Err(Error::Parse(_))));
    }
}
