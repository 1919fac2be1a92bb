use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageGrid, PixelSemantics};

/// `slope * raw + intercept`, tagged as HU.
pub fn rescale_to_hu(raw: &ImageGrid, slope: f64, intercept: f64) -> Result<ImageGrid> {
    if !slope.is_finite() || !intercept.is_finite() {
        return Err(Error::invalid(format!("rescale slope {slope} / intercept {intercept} must be finite")));
    }
    Ok(raw.map(|v| slope * v + intercept).with_semantics(PixelSemantics::Hu))
}

/// Bilinear resize with pixel-center alignment:
/// `src = (dst + 0.5) * in / out - 0.5`, clamped to the image.
pub fn resize(img: &ImageGrid, out_dims: (usize, usize)) -> Result<ImageGrid> {
    let (oh, ow) = out_dims;
    if oh < 2 || ow < 2 {
        return Err(Error::invalid(format!("resize target {oh}x{ow} is below 2x2")));
    }
    let (h, w) = img.dims();
    if (h, w) == out_dims {
        return Ok(img.clone());
    }
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        (0..n_out)
            .map(|d| {
                let s = ((d as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let (ys, xs) = (axis(h, oh), axis(w, ow));
    let mut out = vec![0.0; oh * ow];
    out.par_chunks_mut(ow).zip(ys.par_iter()).for_each(|(row, &(y0, y1, ty))| {
        for (v, &(x0, x1, tx)) in row.iter_mut().zip(&xs) {
            let top = img.get(y0, x0) * (1.0 - tx) + img.get(y0, x1) * tx;
            let bottom = img.get(y1, x0) * (1.0 - tx) + img.get(y1, x1) * tx;
            *v = top * (1.0 - ty) + bottom * ty;
        }
    });
    ImageGrid::new(oh, ow, out, img.semantics())
}

/// Nearest-neighbour resize for label grids, same pixel-center alignment
/// as [`resize`].
pub fn resize_labels(mask: &ImageGrid, out_dims: (usize, usize)) -> Result<ImageGrid> {
    let (oh, ow) = out_dims;
    if oh < 2 || ow < 2 {
        return Err(Error::invalid(format!("resize target {oh}x{ow} is below 2x2")));
    }
    let (h, w) = mask.dims();
    let pick = |d: usize, n_in: usize, n_out: usize| {
        (((d as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).round().max(0.0) as usize).min(n_in - 1)
    };
    Ok(ImageGrid::from_fn(oh, ow, PixelSemantics::Label, |r, c| mask.get(pick(r, h, oh), pick(c, w, ow))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Normalization {
    /// Zero mean, unit (population) standard deviation.
    Zscore,
    /// Clamp to `[center - width/2, center + width/2]`, then map to `[0, 1]`.
    Window { center: f64, width: f64 },
}

pub fn normalize(img: &ImageGrid, strategy: Normalization) -> Result<ImageGrid> {
    match strategy {
        Normalization::Zscore => {
            let n = img.data().len() as f64;
            let mean = img.data().iter().sum::<f64>() / n;
            let var = img.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            if !(std > 1e-12 * mean.abs().max(1.0)) {
                return Err(Error::degenerate("z-score normalization of a constant image"));
            }
            Ok(img.map(|v| (v - mean) / std).with_semantics(PixelSemantics::Normalized))
        }
        Normalization::Window { center, width } => {
            if !(width > 0.0 && width.is_finite() && center.is_finite()) {
                return Err(Error::invalid(format!("window width {width} must be positive")));
            }
            let lo = center - width / 2.0;
            Ok(img.map(|v| ((v - lo) / width).clamp(0.0, 1.0)).with_semantics(PixelSemantics::Normalized))
        }
    }
}
