use super::DicomSliceMeta;
use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// Slices ordered by ascending axial location.
#[derive(Debug, Clone)]
pub struct SliceSeries {
    slices: Vec<(ImageGrid, DicomSliceMeta)>,
}

impl SliceSeries {
    pub fn slices(&self) -> &[(ImageGrid, DicomSliceMeta)] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn locations(&self) -> Vec<f64> {
        self.slices.iter().map(|(_, m)| m.axial_location().unwrap_or(f64::NAN)).collect()
    }

    pub fn into_inner(self) -> Vec<(ImageGrid, DicomSliceMeta)> {
        self.slices
    }
}

pub fn assemble_series(slices: Vec<(ImageGrid, DicomSliceMeta)>) -> Result<SliceSeries> {
    let Some(first) = slices.first() else {
        return Err(Error::invalid("a series needs at least one slice"));
    };
    let dims = first.0.dims();
    let mut keyed = Vec::with_capacity(slices.len());
    for (i, (img, meta)) in slices.into_iter().enumerate() {
        if img.dims() != dims {
            return Err(Error::invalid(format!("slice {i} is {:?}, expected {dims:?}", img.dims())));
        }
        let z = meta
            .axial_location()
            .ok_or_else(|| Error::MissingMetadata(format!("slice {i} has neither Slice Location nor Image Position")))?;
        keyed.push((z, img, meta));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = keyed.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateSlice(w[0].0));
    }
    Ok(SliceSeries { slices: keyed.into_iter().map(|(_, i, m)| (i, m)).collect() })
}
