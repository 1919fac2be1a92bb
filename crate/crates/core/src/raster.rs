//! Raster file I/O: 16-bit PNG and PGM, flat little-endian float32 with a
//! JSON header, 8-bit masks/heatmaps, and JSON sidecars carrying slice
//! geometry for non-DICOM inputs.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::dicom::DicomSliceMeta;
use crate::error::{Error, Result};
use crate::image::{ImageGrid, PixelSemantics};

/// Linear code for 16-bit storage: `value = offset + scale * stored`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quantization {
    pub offset: f64,
    pub scale: f64,
}

impl Quantization {
    pub const HU: Quantization = Quantization { offset: -32768.0, scale: 1.0 };
    pub const UNIT: Quantization = Quantization { offset: 0.0, scale: 1.0 / 65535.0 };
    pub const IDENTITY: Quantization = Quantization { offset: 0.0, scale: 1.0 };

    /// HU: one LSB per HU. Normalized data inside [0, 1]: full 16-bit span
    /// of the unit interval. Labels: stored as-is. Anything else: min-max.
    pub fn for_image(img: &ImageGrid) -> Self {
        let (lo, hi) = img.min_max();
        match img.semantics() {
            PixelSemantics::Hu => Self::HU,
            PixelSemantics::Label => Self::IDENTITY,
            PixelSemantics::Normalized if lo >= 0.0 && hi <= 1.0 => Self::UNIT,
            PixelSemantics::Normalized if hi > lo => Self { offset: lo, scale: (hi - lo) / 65535.0 },
            PixelSemantics::Normalized => Self { offset: lo, scale: 1.0 },
        }
    }

    #[inline]
    pub fn encode(&self, v: f64) -> u16 {
        ((v - self.offset) / self.scale).round().clamp(0.0, 65535.0) as u16
    }

    #[inline]
    pub fn decode(&self, s: u16) -> f64 {
        self.offset + self.scale * f64::from(s)
    }

    pub fn encode_image(&self, img: &ImageGrid) -> Vec<u16> {
        img.data().iter().map(|&v| self.encode(v)).collect()
    }
}

fn codec(e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::Codec(other.to_string()),
    }
}

pub fn encode_png16(height: usize, width: usize, data: &[u16]) -> Result<Vec<u8>> {
    let buf: ImageBuffer<Luma<u16>, &[u16]> = ImageBuffer::from_raw(width as u32, height as u32, data)
        .ok_or_else(|| Error::invalid("pixel buffer does not match dimensions"))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png).map_err(codec)?;
    Ok(out.into_inner())
}

pub fn write_png16(path: &Path, height: usize, width: usize, data: &[u16]) -> Result<()> {
    fs::write(path, encode_png16(height, width, data)?)?;
    Ok(())
}

/// Reads a grayscale PNG as 16-bit stored values (8-bit files are widened).
pub fn read_png16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let img = image::open(path).map_err(codec)?;
    if img.color().channel_count() != 1 {
        return Err(Error::UnsupportedEncoding(format!("{} is not single-channel", path.display())));
    }
    let img = img.into_luma16();
    Ok((img.height() as usize, img.width() as usize, img.into_raw()))
}

pub fn encode_pgm16(height: usize, width: usize, data: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.extend(data.iter().flat_map(|v| v.to_be_bytes()));
    out
}

pub fn write_pgm16(path: &Path, height: usize, width: usize, data: &[u16]) -> Result<()> {
    fs::write(path, encode_pgm16(height, width, data))?;
    Ok(())
}

pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Parse("truncated PGM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::UnsupportedEncoding("only binary (P5) PGM is supported".into()));
    }
    let mut num = || -> Result<usize> { token()?.parse().map_err(|_| Error::Parse("bad PGM header number".into())) };
    let (w, h, maxval) = (num()?, num()?, num()?);
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("bad PGM header {w}x{h} max {maxval}")));
    }
    let body = &bytes[(pos + 1).min(bytes.len())..];
    let n = w * h;
    let data: Vec<u16> = if maxval < 256 {
        if body.len() < n {
            return Err(Error::Parse("truncated PGM body".into()));
        }
        body[..n].iter().map(|&b| u16::from(b)).collect()
    } else {
        if body.len() < 2 * n {
            return Err(Error::Parse("truncated PGM body".into()));
        }
        body.chunks_exact(2).take(n).map(|b| u16::from_be_bytes([b[0], b[1]])).collect()
    };
    Ok((h, w, data))
}

pub fn read_pgm16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    decode_pgm(&fs::read(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHeader {
    pub height: usize,
    pub width: usize,
    pub dtype: String,
    pub byte_order: String,
    pub semantics: PixelSemantics,
}

/// `path.raw` gets a sibling `path.raw.json` header.
pub fn raw_header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_raw_f32(path: &Path, img: &ImageGrid) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for &v in img.data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    let header = RawHeader {
        height: img.height(),
        width: img.width(),
        dtype: "float32".into(),
        byte_order: "little".into(),
        semantics: img.semantics(),
    };
    fs::write(raw_header_path(path), serde_json::to_vec_pretty(&header)?)?;
    Ok(())
}

pub fn read_raw_f32(path: &Path) -> Result<ImageGrid> {
    let header: RawHeader = serde_json::from_slice(&fs::read(raw_header_path(path))?)?;
    if header.dtype != "float32" || header.byte_order != "little" {
        return Err(Error::UnsupportedEncoding(format!("{} {}-endian raster", header.dtype, header.byte_order)));
    }
    let bytes = fs::read(path)?;
    if bytes.len() != header.height * header.width * 4 {
        return Err(Error::Parse(format!("{} holds {} bytes, header says {}x{}", path.display(), bytes.len(), header.height, header.width)));
    }
    let data = bytes.chunks_exact(4).map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))).collect();
    ImageGrid::new(header.height, header.width, data, header.semantics)
}

/// 8-bit grayscale: labels as 0/255, everything else min-max scaled.
pub fn write_png8(path: &Path, img: &ImageGrid) -> Result<()> {
    let (lo, hi) = img.min_max();
    let data: Vec<u8> = match img.semantics() {
        PixelSemantics::Label => img.data().iter().map(|&v| if v != 0.0 { 255 } else { 0 }).collect(),
        _ if hi > lo => img.data().iter().map(|&v| ((v - lo) / (hi - lo) * 255.0).round() as u8).collect(),
        _ => vec![0; img.data().len()],
    };
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(img.width() as u32, img.height() as u32, data)
        .ok_or_else(|| Error::invalid("pixel buffer does not match dimensions"))?;
    buf.save_with_format(path, image::ImageFormat::Png).map_err(codec)
}

/// Writes a 16-bit raster, PNG or PGM by extension.
pub fn write_raster16(path: &Path, img: &ImageGrid, q: &Quantization) -> Result<()> {
    let data = q.encode_image(img);
    match extension(path).as_deref() {
        Some("pgm") => write_pgm16(path, img.height(), img.width(), &data),
        _ => write_png16(path, img.height(), img.width(), &data),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

/// Reads a single-slice raster. 16-bit PNG/PGM stored values are mapped
/// through the sidecar's rescale slope/intercept (default 1, 0) into HU;
/// float32 rasters carry their own semantics.
pub fn read_raster(path: &Path, meta: Option<&DicomSliceMeta>) -> Result<ImageGrid> {
    let (h, w, data) = match extension(path).as_deref() {
        Some("raw") => return read_raw_f32(path),
        Some("pgm") => read_pgm16(path)?,
        Some("png") => read_png16(path)?,
        _ => return Err(Error::UnsupportedEncoding(format!("unknown raster type {}", path.display()))),
    };
    let (slope, intercept) = meta.map(DicomSliceMeta::rescale).unwrap_or((1.0, 0.0));
    let data = data.into_iter().map(|v| slope * f64::from(v) + intercept).collect();
    ImageGrid::new(h, w, data, PixelSemantics::Hu)
}

/// Sidecar next to a raster: `slice.png` -> `slice.json`.
pub fn sidecar_path(raster: &Path) -> PathBuf {
    raster.with_extension("json")
}

pub fn read_sidecar(path: &Path) -> Result<DicomSliceMeta> {
    let meta: DicomSliceMeta = serde_json::from_slice(&fs::read(path)?)?;
    meta.validate()?;
    Ok(meta)
}
