//! Pixel-level overlap metrics for binary segmentations.
//!
//! When a ratio's denominator is zero the value is 1.0 if the masks are
//! both empty (`tp = fp = fn = 0`) and 0.0 otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }

    fn is_empty_match(&self) -> bool {
        self.tp == 0 && self.fp == 0 && self.fn_ == 0
    }

    fn ratio(&self, num: u64, den: u64) -> f64 {
        if den == 0 {
            if self.is_empty_match() { 1.0 } else { 0.0 }
        } else {
            num as f64 / den as f64
        }
    }
}

/// Counts agreement between two binary masks (nonzero is foreground).
pub fn confusion_counts(pred: &ImageGrid, gt: &ImageGrid) -> Result<ConfusionCounts> {
    if pred.dims() != gt.dims() {
        return Err(Error::invalid(format!(
            "prediction is {:?} but ground truth is {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p != 0.0, g != 0.0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

pub fn dice(c: &ConfusionCounts) -> f64 {
    c.ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
}

pub fn recall(c: &ConfusionCounts) -> f64 {
    c.ratio(c.tp, c.tp + c.fn_)
}

pub fn precision(c: &ConfusionCounts) -> f64 {
    c.ratio(c.tp, c.tp + c.fp)
}
