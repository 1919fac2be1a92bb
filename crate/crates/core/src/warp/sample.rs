use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::map::SampleMap;
use crate::error::{Error, Result};
use crate::image::{ImageGrid, PixelSemantics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Nearest,
    Bilinear,
    #[default]
    Bicubic,
}

/// Catmull-Rom parameter of the cubic convolution kernel.
pub const CUBIC_A: f64 = -0.5;

#[inline]
fn cubic_weight(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((CUBIC_A + 2.0) * t - (CUBIC_A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((CUBIC_A * t - 5.0 * CUBIC_A) * t + 8.0 * CUBIC_A) * t - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

#[inline]
pub fn sample_nearest(img: &ImageGrid, y: f64, x: f64) -> f64 {
    img.get_clamped((y + 0.5).floor() as isize, (x + 0.5).floor() as isize)
}

#[inline]
pub fn sample_bilinear(img: &ImageGrid, y: f64, x: f64) -> f64 {
    let (y0, x0) = (y.floor(), x.floor());
    let (ty, tx) = (y - y0, x - x0);
    let (r, c) = (y0 as isize, x0 as isize);
    let top = img.get_clamped(r, c) * (1.0 - tx) + img.get_clamped(r, c + 1) * tx;
    let bottom = img.get_clamped(r + 1, c) * (1.0 - tx) + img.get_clamped(r + 1, c + 1) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Cubic convolution over the 4×4 neighbourhood, border pixels replicated.
#[inline]
pub fn sample_bicubic(img: &ImageGrid, y: f64, x: f64) -> f64 {
    let (y0, x0) = (y.floor(), x.floor());
    let (ty, tx) = (y - y0, x - x0);
    if ty == 0.0 && tx == 0.0 {
        return img.get_clamped(y0 as isize, x0 as isize);
    }
    let wy = [cubic_weight(1.0 + ty), cubic_weight(ty), cubic_weight(1.0 - ty), cubic_weight(2.0 - ty)];
    let wx = [cubic_weight(1.0 + tx), cubic_weight(tx), cubic_weight(1.0 - tx), cubic_weight(2.0 - tx)];
    let (r, c) = (y0 as isize - 1, x0 as isize - 1);
    let mut acc = 0.0;
    for (i, wyi) in wy.iter().enumerate() {
        let mut row = 0.0;
        for (j, wxj) in wx.iter().enumerate() {
            row += wxj * img.get_clamped(r + i as isize, c + j as isize);
        }
        acc += wyi * row;
    }
    acc
}

#[inline]
pub fn sample(img: &ImageGrid, y: f64, x: f64, interpolation: Interpolation) -> f64 {
    match interpolation {
        Interpolation::Nearest => sample_nearest(img, y, x),
        Interpolation::Bilinear => sample_bilinear(img, y, x),
        Interpolation::Bicubic => sample_bicubic(img, y, x),
    }
}

/// Resamples `img` through `map`; uncovered pixels receive `pad_value`.
///
/// Label grids are always sampled with nearest neighbour; asking for
/// bicubic on one is an error.
pub fn warp_image(img: &ImageGrid, map: &SampleMap, interpolation: Interpolation, pad_value: f64) -> Result<ImageGrid> {
    let interpolation = if img.semantics() == PixelSemantics::Label {
        if interpolation == Interpolation::Bicubic {
            return Err(Error::invalid("bicubic interpolation is not defined for label grids"));
        }
        Interpolation::Nearest
    } else {
        interpolation
    };
    if !pad_value.is_finite() {
        return Err(Error::invalid("pad value must be finite"));
    }
    let (h, w) = map.dims();
    let mut out = vec![0.0; h * w];
    out.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
        for (c, v) in row.iter_mut().enumerate() {
            *v = match map.get(r, c) {
                Some([y, x]) => sample(img, y, x, interpolation),
                None => pad_value,
            };
        }
    });
    ImageGrid::new(h, w, out, img.semantics())
}

/// Nearest-neighbour warp of a label grid; uncovered pixels become 0.
pub fn warp_mask(mask: &ImageGrid, map: &SampleMap) -> Result<ImageGrid> {
    let mask = mask.clone().with_semantics(PixelSemantics::Label);
    warp_image(&mask, map, Interpolation::Nearest, 0.0)
}
