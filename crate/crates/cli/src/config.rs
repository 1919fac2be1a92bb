//! JSON pipeline configuration. Every key is optional; unknown keys are
//! rejected. Command-line flags are applied on top.

use std::path::{Path, PathBuf};

use polarwarp_core::dicom::Normalization;
use polarwarp_core::geometry::DistortionParams;
use polarwarp_core::search::{GridConfig, ParamGrid};
use polarwarp_core::similarity::SimilarityConfig;
use polarwarp_core::table::TableCalibration;
use polarwarp_core::warp::Interpolation;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputSpec {
    /// Files or directories. Directories contribute their `.dcm`, `.png`,
    /// `.pgm` and `.raw` files in name order. DICOM and raster inputs
    /// cannot be mixed.
    pub paths: Vec<PathBuf>,
    /// Label masks, one per input slice in the same order.
    pub masks: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistortionConfig {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
    pub rotation: f64,
    pub delta: usize,
    pub refresh_every: u32,
    pub count_per_slice: usize,
    /// Fixed Ψ for every output instead of random draws.
    pub psi: Option<f64>,
}

impl Default for DistortionConfig {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            frequency: 1.0,
            phase: 0.0,
            rotation: 0.0,
            delta: 16,
            refresh_every: 1,
            count_per_slice: 1,
            psi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableRemovalConfig {
    pub enabled: bool,
    pub cal_scale: f64,
    pub cal_offset_mm: f64,
    /// Defaults to -1024 for HU slices and 0 otherwise.
    pub pad_value: Option<f64>,
}

impl Default for TableRemovalConfig {
    fn default() -> Self {
        Self { enabled: false, cal_scale: 1.0, cal_offset_mm: 0.0, pad_value: None }
    }
}

impl TableRemovalConfig {
    pub fn calibration(&self) -> TableCalibration {
        TableCalibration { scale: self.cal_scale, offset_mm: self.cal_offset_mm }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub deltas: Vec<usize>,
    pub map_dims: [usize; 2],
    pub sizes: Vec<[usize; 2]>,
    pub warp_delta: usize,
    pub repetitions: usize,
    pub prefetch_batch: usize,
    pub prefetch_batches: usize,
    pub prefetch_dims: [usize; 2],
    /// Defaults to ten times the measured producer batch time.
    pub consumer_delay_ms: Option<f64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            deltas: vec![16, 32, 64],
            map_dims: [512, 512],
            sizes: vec![[128, 128], [256, 256], [512, 512]],
            warp_delta: 16,
            repetitions: 10,
            prefetch_batch: 4,
            prefetch_batches: 12,
            prefetch_dims: [128, 128],
            consumer_delay_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub input: InputSpec,
    pub out: Option<PathBuf>,
    pub resize: Option<[usize; 2]>,
    pub seed: u64,
    pub distortion: DistortionConfig,
    pub table_removal: TableRemovalConfig,
    pub normalization: Option<Normalization>,
    pub interpolation: Interpolation,
    /// 0 uses every available core.
    pub workers: usize,
    pub lossless: bool,
    pub similarity: SimilarityConfig,
    pub grid: ParamGrid,
    pub percentile: f64,
    /// CSV `amplitude,frequency,loss`; without it the quadratic evaluator
    /// with optimum (6, 2) is used.
    pub lookup: Option<PathBuf>,
    pub bench: BenchConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: InputSpec::default(),
            out: None,
            resize: None,
            seed: 0,
            distortion: DistortionConfig::default(),
            table_removal: TableRemovalConfig::default(),
            normalization: None,
            interpolation: Interpolation::Bicubic,
            workers: 0,
            lossless: false,
            similarity: SimilarityConfig::default(),
            grid: ParamGrid::default(),
            percentile: 90.0,
            lookup: None,
            bench: BenchConfig::default(),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl PipelineConfig {
    /// Reads a config file; relative paths inside are taken relative to
    /// the file's directory.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text).map_err(config_err)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.input.paths.iter_mut().for_each(fix);
        cfg.input.masks.iter_mut().for_each(fix);
        if let Some(p) = cfg.out.as_mut() {
            fix(p);
        }
        if let Some(p) = cfg.lookup.as_mut() {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn distortion_params(&self) -> DistortionParams {
        DistortionParams {
            amplitude_bound: self.distortion.amplitude,
            freq_bound: self.distortion.frequency,
            phase: self.distortion.phase,
            rotation: self.distortion.rotation,
            seed: self.seed,
            refresh_every: self.distortion.refresh_every,
        }
    }

    pub fn grid_config(&self) -> GridConfig {
        GridConfig {
            delta: self.distortion.delta,
            rotation: self.distortion.rotation,
            phase: self.distortion.phase,
            interpolation: self.interpolation,
            similarity: self.similarity,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.distortion_params().validate().map_err(config_err)?;
        if self.distortion.delta < 2 {
            return Err(config_err(format!("delta must be >= 2, got {}", self.distortion.delta)));
        }
        if let Some(p) = self.distortion.psi {
            if !(0.0..=1.0).contains(&p) {
                return Err(config_err(format!("psi must lie in [0, 1], got {p}")));
            }
        }
        if let Some([h, w]) = self.resize {
            if h < 2 || w < 2 {
                return Err(config_err(format!("resize {h}x{w} is below 2x2")));
            }
        }
        let t = &self.table_removal;
        if !(t.cal_scale > 0.0 && t.cal_scale.is_finite() && t.cal_offset_mm.is_finite()) {
            return Err(config_err("table calibration must be finite with a positive scale"));
        }
        if t.pad_value.is_some_and(|p| !p.is_finite()) {
            return Err(config_err("pad value must be finite"));
        }
        if let Some(Normalization::Window { width, .. }) = self.normalization {
            if !(width > 0.0) {
                return Err(config_err("window width must be positive"));
            }
        }
        let s = &self.similarity;
        if !(s.ratio > 0.0 && s.ratio <= 1.0) || !(s.fast_threshold >= 0.0) {
            return Err(config_err("similarity ratio must lie in (0, 1] and the FAST threshold be >= 0"));
        }
        self.grid.validate().map_err(config_err)?;
        if !(0.0..=100.0).contains(&self.percentile) {
            return Err(config_err(format!("percentile {} outside [0, 100]", self.percentile)));
        }
        if !self.input.masks.is_empty() && self.input.masks.len() != self.input.paths.len() {
            return Err(config_err("give one mask per input file"));
        }
        if self.bench.repetitions < polarwarp_core::bench::MIN_REPETITIONS {
            return Err(config_err("bench repetitions must be >= 5"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c: PipelineConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, PipelineConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sed": 1}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"distortion": {"amp": 1}}"#).is_err());
    }

    #[test]
    fn nested_values_parse() {
        let c: PipelineConfig = serde_json::from_str(
            r#"{"seed": 4, "distortion": {"amplitude": 3, "delta": 20},
                "normalization": {"kind": "window", "center": 40, "width": 400},
                "interpolation": "nearest", "table_removal": {"enabled": true}}"#,
        )
        .unwrap();
        assert_eq!((c.seed, c.distortion.amplitude, c.distortion.delta), (4, 3.0, 20));
        assert_eq!(c.normalization, Some(Normalization::Window { center: 40.0, width: 400.0 }));
        assert_eq!(c.interpolation, Interpolation::Nearest);
        assert!(c.table_removal.enabled);
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut c = PipelineConfig::default();
        c.distortion.rotation = 2.0;
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let mut c = PipelineConfig::default();
        c.distortion.psi = Some(1.2);
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.input.paths = vec!["a.png".into()];
        c.input.masks = vec!["a.png".into(), "b.png".into()];
        assert!(c.validate().is_err());
    }
}
