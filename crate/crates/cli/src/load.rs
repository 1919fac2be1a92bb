use std::collections::HashMap;
use std::path::{Path, PathBuf};

use polarwarp_core::dicom::{assemble_series, read_dicom_file, rescale_to_hu, resize, resize_labels, DicomSliceMeta};
use polarwarp_core::raster::{read_raster, read_sidecar, sidecar_path};
use polarwarp_core::{ImageGrid, PixelSemantics};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};

const EXTENSIONS: [&str; 4] = ["dcm", "png", "pgm", "raw"];

/// One input slice after rescaling and optional resizing.
#[derive(Debug, Clone)]
pub struct LoadedSlice {
    pub name: String,
    pub source: PathBuf,
    pub image: ImageGrid,
    pub mask: Option<ImageGrid>,
    pub meta: Option<DicomSliceMeta>,
}

fn ext(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

/// Files and directory contents, directories sorted by name.
pub fn expand_inputs(paths: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && ext(f).is_some_and(|e| EXTENSIONS.contains(&e.as_str())))
                .collect();
            entries.sort();
            out.extend(entries);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(CliError::Io(format!("{}: no such file or directory", p.display())));
        }
    }
    if out.is_empty() {
        return Err(CliError::Io("no input slices found".into()));
    }
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "slice".into())
}

fn with_path<T>(path: &Path, r: polarwarp_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| {
        let cli = CliError::from(e);
        match cli {
            CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
            CliError::Metadata(m) => CliError::Metadata(format!("{}: {m}", path.display())),
            other => other,
        }
    })
}

fn load_mask(path: &Path, dims: (usize, usize)) -> CliResult<ImageGrid> {
    let m = with_path(path, read_raster(path, None))?.with_semantics(PixelSemantics::Label);
    if m.dims() != dims {
        return Err(CliError::Io(format!("{}: mask is {:?}, slice is {dims:?}", path.display(), m.dims())));
    }
    Ok(m)
}

fn load_one(path: &Path) -> CliResult<(ImageGrid, Option<DicomSliceMeta>)> {
    if ext(path).as_deref() == Some("dcm") {
        let (raw, meta) = with_path(path, read_dicom_file(path))?;
        let (slope, intercept) = meta.rescale();
        let hu = with_path(path, rescale_to_hu(&raw, slope, intercept))?;
        return Ok((hu, Some(meta)));
    }
    let side = sidecar_path(path);
    let meta = if side.is_file() { Some(with_path(&side, read_sidecar(&side))?) } else { None };
    let img = with_path(path, read_raster(path, meta.as_ref()))?;
    Ok((img, meta))
}

/// Reads every input in parallel. A DICOM series is ordered by axial
/// location and checked for duplicates; rasters keep their input order.
pub fn load_slices(paths: &[PathBuf], masks: &[PathBuf], resize_to: Option<[usize; 2]>) -> CliResult<Vec<LoadedSlice>> {
    let files = expand_inputs(paths)?;
    let mask_files = if masks.is_empty() { Vec::new() } else { expand_inputs(masks)? };
    if !mask_files.is_empty() && mask_files.len() != files.len() {
        return Err(CliError::Config(format!("{} masks for {} slices", mask_files.len(), files.len())));
    }
    let dicom: Vec<bool> = files.iter().map(|f| ext(f).as_deref() == Some("dcm")).collect();
    if dicom.iter().any(|&d| d) && !dicom.iter().all(|&d| d) {
        return Err(CliError::Config("DICOM and raster inputs cannot be mixed".into()));
    }
    let loaded = files
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let (image, meta) = load_one(f)?;
            let mask = mask_files.get(i).map(|m| load_mask(m, image.dims())).transpose()?;
            Ok(LoadedSlice { name: stem(f), source: f.clone(), image, mask, meta })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut slices = if dicom[0] { order_series(loaded)? } else { loaded };
    if let Some([h, w]) = resize_to {
        slices.par_iter_mut().try_for_each(|s| -> CliResult<()> {
            let from = s.image.dims();
            s.image = resize(&s.image, (h, w))?;
            if let Some(m) = &s.mask {
                s.mask = Some(resize_labels(m, (h, w))?);
            }
            s.meta = s.meta.as_ref().map(|m| m.resized(from, (h, w)));
            Ok(())
        })?;
    }
    log::info!("loaded {} slices", slices.len());
    Ok(slices)
}

fn order_series(loaded: Vec<LoadedSlice>) -> CliResult<Vec<LoadedSlice>> {
    let mut extras: HashMap<u64, (String, PathBuf, Option<ImageGrid>)> = HashMap::new();
    let mut pairs = Vec::with_capacity(loaded.len());
    for s in loaded {
        let meta = s.meta.expect("DICOM slices carry metadata");
        if let Some(z) = meta.axial_location() {
            extras.insert(z.to_bits(), (s.name, s.source, s.mask));
        }
        pairs.push((s.image, meta));
    }
    let series = assemble_series(pairs)?;
    Ok(series
        .into_inner()
        .into_iter()
        .map(|(image, meta)| {
            let z = meta.axial_location().expect("assembled slices have a location");
            let (name, source, mask) = extras.remove(&z.to_bits()).expect("one entry per location");
            LoadedSlice { name, source, image, mask, meta: Some(meta) }
        })
        .collect())
}
