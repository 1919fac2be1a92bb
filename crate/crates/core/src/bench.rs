//! Timing harness for map generation, resampling and a prefetching
//! producer/consumer pipeline.
//!
//! Memory figures are estimates computed from the buffers each operation
//! allocates, not measured RSS.

use std::io::Write;
use std::sync::mpsc::{sync_channel, TryRecvError};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::Augmenter;
use crate::dicom::Normalization;
use crate::error::{Error, Result};
use crate::geometry::{make_control_grid, make_target_grid, DistortionParams, Point, SampledIntensity};
use crate::image::{ImageGrid, PixelSemantics};
use crate::phantom::abdominal_phantom;
use crate::table::{compute_table_geometry, TableCalibration};
use crate::warp::{delaunay, warp_image, Interpolation, PiecewiseAffineMap, SampleMap, Warper};

pub const MIN_REPETITIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub operation: String,
    pub delta: usize,
    /// `HxW`.
    pub dims: String,
    pub repetitions: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub peak_alloc_estimate_bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn find(&self, operation: &str, dims: (usize, usize), delta: usize) -> Option<&BenchRow> {
        let d = format!("{}x{}", dims.0, dims.1);
        self.rows.iter().find(|r| r.operation == operation && r.dims == d && r.delta == delta)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn extend(&mut self, other: BenchReport) {
        self.rows.extend(other.rows);
    }
}

/// Per-sample times in ms after one untimed warm-up call.
pub fn sample_times(repetitions: usize, mut f: impl FnMut()) -> Vec<f64> {
    f();
    (0..repetitions)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect()
}

/// Mean and nearest-rank 95th percentile.
pub fn summarize(times: &[f64]) -> (f64, f64) {
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let mut s = times.to_vec();
    s.sort_by(f64::total_cmp);
    let k = ((0.95 * s.len() as f64).ceil() as usize).clamp(1, s.len());
    (mean, s[k - 1])
}

fn row(operation: &str, delta: usize, dims: (usize, usize), times: &[f64], bytes: u64) -> BenchRow {
    let (mean_ms, p95_ms) = summarize(times);
    BenchRow {
        operation: operation.to_string(),
        delta,
        dims: format!("{}x{}", dims.0, dims.1),
        repetitions: times.len(),
        mean_ms,
        p95_ms,
        peak_alloc_estimate_bytes: bytes,
    }
}

fn check_reps(repetitions: usize) -> Result<()> {
    if repetitions < MIN_REPETITIONS {
        return Err(Error::invalid(format!("need at least {MIN_REPETITIONS} repetitions, got {repetitions}")));
    }
    Ok(())
}

const BENCH_INTENSITY: SampledIntensity = SampledIntensity { a: 1.0, f: 1.0 };

/// Target grid, triangulation and per-triangle transforms, one row per δ.
pub fn bench_map_generation(deltas: &[usize], dims: (usize, usize), repetitions: usize) -> Result<BenchReport> {
    check_reps(repetitions)?;
    let mut report = BenchReport::default();
    for &delta in deltas {
        if delta < 2 {
            return Err(Error::invalid(format!("delta {delta} < 2")));
        }
        let grid = make_control_grid(dims.0, dims.1, delta)?;
        let mut failure = None;
        let mut n_tri = 0;
        let times = sample_times(repetitions, || {
            let run = || -> Result<usize> {
                let target = make_target_grid(&grid, BENCH_INTENSITY, 0.0, 0.0)?;
                let mesh = delaunay(grid.points())?;
                Ok(PiecewiseAffineMap::new(mesh, target.points())?.mesh().len())
            };
            match run() {
                Ok(n) => n_tri = n,
                Err(e) => failure = Some(e),
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        let pts = (delta * delta) as u64;
        let bytes = pts * 2 * std::mem::size_of::<Point>() as u64 + n_tri as u64 * (24 + 56);
        report.rows.push(row("map_generation", delta, dims, &times, bytes));
    }
    Ok(report)
}

fn random_image(dims: (usize, usize), seed: u64) -> ImageGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageGrid::from_fn(dims.0, dims.1, PixelSemantics::Hu, |_, _| rng.gen_range(-1000.0..1000.0))
}

/// Resampling time per size for a fixed map (built outside the timing).
/// Besides the main `warp_bicubic` rows this records a constant-image and
/// a nearest-neighbour variant.
pub fn bench_warp(sizes: &[(usize, usize)], delta: usize, repetitions: usize) -> Result<BenchReport> {
    check_reps(repetitions)?;
    let mut report = BenchReport::default();
    for &dims in sizes {
        if dims.0 < 64 || dims.1 < 64 {
            return Err(Error::invalid(format!("bench sizes start at 64x64, got {dims:?}")));
        }
        let map: SampleMap = Warper::new(dims.0, dims.1, delta)?.sample_map(BENCH_INTENSITY, 0.0, 0.0)?;
        let random = random_image(dims, 7);
        let constant = ImageGrid::filled(dims.0, dims.1, 40.0, PixelSemantics::Hu);
        let px = (dims.0 * dims.1) as u64;
        let bytes = px * (2 * 8 + std::mem::size_of::<Option<Point>>() as u64);
        for (name, img, interp) in [
            ("warp_bicubic", &random, Interpolation::Bicubic),
            ("warp_bicubic_constant", &constant, Interpolation::Bicubic),
            ("warp_nearest", &random, Interpolation::Nearest),
        ] {
            let mut failure = None;
            let times = sample_times(repetitions, || {
                if let Err(e) = warp_image(img, &map, interp, -1024.0) {
                    failure = Some(e);
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
            report.rows.push(row(name, delta, dims, &times, bytes));
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefetchReport {
    /// Share of steady-state consumer wall time spent waiting for a batch.
    pub idle_fraction: f64,
    pub batches: usize,
    pub batch_size: usize,
    pub producer_batch_ms: f64,
    pub consumer_delay_ms: f64,
    pub wait_ms: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefetchConfig {
    pub batch_size: usize,
    pub batches: usize,
    pub dims: (usize, usize),
    pub delta: usize,
    pub workers: usize,
}

impl Default for PrefetchConfig {
    fn default() -> Self {
        Self { batch_size: 4, batches: 12, dims: (128, 128), delta: 16, workers: 1 }
    }
}

const QUEUE_DEPTH: usize = 2;

/// Producer runs the full augmentation pipeline into a queue of depth 2;
/// the consumer sleeps `consumer_delay_ms` per batch. The first batch only
/// fills the pipeline and is excluded from the idle measurement.
pub fn bench_pipeline_prefetch(cfg: PrefetchConfig, consumer_delay_ms: f64) -> Result<PrefetchReport> {
    if !(consumer_delay_ms >= 0.0 && consumer_delay_ms.is_finite()) {
        return Err(Error::invalid("consumer delay must be >= 0"));
    }
    if cfg.batch_size == 0 || cfg.batches < 2 {
        return Err(Error::invalid("need a nonzero batch size and at least two batches"));
    }
    let phantom = abdominal_phantom(cfg.dims.0, 1);
    if cfg.dims.0 != cfg.dims.1 {
        return Err(Error::invalid("prefetch bench uses a square phantom"));
    }
    let table = compute_table_geometry(&phantom.meta, cfg.dims, TableCalibration::default(), -1024.0)?;
    let params = DistortionParams { amplitude_bound: 3.0, freq_bound: 2.0, seed: 5, ..Default::default() };
    let aug = Augmenter::new(cfg.dims, cfg.delta, params, Interpolation::Bicubic, -1024.0)?
        .with_normalization(Some(Normalization::Window { center: 40.0, width: 400.0 }));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;

    let (tx, rx) = sync_channel::<Result<Vec<ImageGrid>>>(QUEUE_DEPTH);
    let (batches, batch_size) = (cfg.batches, cfg.batch_size);
    let producer = thread::scope(|s| {
        let handle = s.spawn(|| {
            let mut produce_ms = Vec::with_capacity(batches);
            for b in 0..batches {
                let t = Instant::now();
                let batch = pool.install(|| {
                    (0..batch_size)
                        .into_par_iter()
                        .map(|i| aug.augment(&phantom.image, None, Some(&table), 0, (b * batch_size + i) as u64).map(|a| a.image))
                        .collect::<Result<Vec<_>>>()
                });
                produce_ms.push(t.elapsed().as_secs_f64() * 1e3);
                if tx.send(batch).is_err() {
                    break;
                }
            }
            drop(tx);
            produce_ms
        });

        let mut wait = Duration::ZERO;
        let mut steady_start = None;
        let mut failure = None;
        for b in 0..batches {
            // Only an empty queue counts as idle. Popping a ready batch can
            // hand the CPU to the unblocked producer on a busy machine,
            // which is scheduling latency rather than starvation.
            let got = match rx.try_recv() {
                Ok(v) => Some(v),
                Err(TryRecvError::Disconnected) => None,
                Err(TryRecvError::Empty) => {
                    let t = Instant::now();
                    let v = rx.recv().ok();
                    if b > 0 {
                        wait += t.elapsed();
                    }
                    v
                }
            };
            match got {
                Some(Ok(_)) => {}
                Some(Err(e)) => {
                    failure = Some(e);
                    break;
                }
                None => break,
            }
            if b == 0 {
                steady_start = Some(Instant::now());
            }
            thread::sleep(Duration::from_secs_f64(consumer_delay_ms / 1e3));
        }
        let wall = steady_start.map(|s| s.elapsed()).unwrap_or_default();
        drop(rx);
        let produce_ms = handle.join().expect("producer thread panicked");
        (wait, wall, produce_ms, failure)
    });
    let (wait, wall, produce_ms, failure) = producer;
    if let Some(e) = failure {
        return Err(e);
    }
    let producer_batch_ms = produce_ms.iter().sum::<f64>() / produce_ms.len().max(1) as f64;
    let (wait_ms, wall_ms) = (wait.as_secs_f64() * 1e3, wall.as_secs_f64() * 1e3);
    let idle_fraction = if wall_ms > 0.0 { (wait_ms / wall_ms).clamp(0.0, 1.0) } else { 0.0 };
    Ok(PrefetchReport { idle_fraction, batches, batch_size, producer_batch_ms, consumer_delay_ms, wait_ms, wall_ms })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let (mean, p95) = summarize(&[1.0, 2.0, 3.0, 4.0, 10.0]);
        assert_eq!((mean, p95), (4.0, 10.0));
        assert_eq!(sample_times(5, || {}).len(), 5);
    }

    #[test]
    fn map_generation_rows() {
        let r = bench_map_generation(&[4, 8], (64, 64), 5).unwrap();
        assert_eq!(r.rows.len(), 2);
        for row in &r.rows {
            assert_eq!(row.repetitions, 5);
            assert!(row.mean_ms > 0.0 && row.p95_ms >= row.mean_ms * 0.5);
        }
        assert!(bench_map_generation(&[4], (64, 64), 4).is_err());
    }

    #[test]
    fn warp_rows_and_csv() {
        let r = bench_warp(&[(64, 64)], 8, 5).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert!(r.find("warp_nearest", (64, 64), 8).is_some());
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("operation,delta,dims,repetitions,mean_ms,p95_ms,peak_alloc_estimate_bytes\n"));
        assert!(bench_warp(&[(32, 64)], 8, 5).is_err());
    }

    #[test]
    fn prefetch_bounds() {
        let cfg = PrefetchConfig { batch_size: 1, batches: 3, dims: (64, 64), delta: 8, workers: 1 };
        let r = bench_pipeline_prefetch(cfg, 0.0).unwrap();
        assert!((0.0..=1.0).contains(&r.idle_fraction));
        assert!(r.producer_batch_ms > 0.0);
    }
}
