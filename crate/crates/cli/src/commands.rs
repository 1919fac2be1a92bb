use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use polarwarp_core::augment::{AugmentRecord, Augmenter};
use polarwarp_core::bench::{bench_map_generation, bench_pipeline_prefetch, bench_warp, PrefetchConfig};
use polarwarp_core::dicom::Normalization;
use polarwarp_core::geometry::DistortionParams;
use polarwarp_core::raster::{write_png8, write_raster16, write_raw_f32, Quantization};
use polarwarp_core::search::{
    build_similarity_grid, quadratic_loss, run_search, select_k10, write_grid_csv, GridConfig, LookupEvaluator,
    SearchReport, SimilarityGrid,
};
use polarwarp_core::table::{apply_valid_mask, compute_table_geometry, default_pad, valid_mask, TableRemovalGeometry};
use polarwarp_core::warp::Interpolation;
use polarwarp_core::{ImageGrid, PixelSemantics};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::load::{load_slices, LoadedSlice};

fn out_dir(cfg: &PipelineConfig) -> CliResult<PathBuf> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<fs::File> {
    fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_inputs(cfg: &PipelineConfig) -> CliResult<Vec<LoadedSlice>> {
    if cfg.input.paths.is_empty() {
        return Err(CliError::Config("no input slices given".into()));
    }
    load_slices(&cfg.input.paths, &cfg.input.masks, cfg.resize)
}

fn table_geometry(cfg: &PipelineConfig, s: &LoadedSlice) -> CliResult<TableRemovalGeometry> {
    let meta = s
        .meta
        .as_ref()
        .ok_or_else(|| CliError::Metadata(format!("{}: table removal needs DICOM or sidecar metadata", s.source.display())))?;
    let pad = cfg.table_removal.pad_value.unwrap_or_else(|| default_pad(s.image.semantics()));
    compute_table_geometry(meta, s.image.dims(), cfg.table_removal.calibration(), pad)
        .map_err(|e| match CliError::from(e) {
            CliError::Metadata(m) => CliError::Metadata(format!("{}: {m}", s.source.display())),
            other => other,
        })
}

#[derive(Serialize)]
struct Provenance<'a> {
    source: &'a Path,
    output: String,
    seed: u64,
    stream: u64,
    sample: u64,
    distortion: DistortionParams,
    delta: usize,
    interpolation: Interpolation,
    pad_value: f64,
    applied: AugmentRecord,
    table_removal: Option<TableRemovalGeometry>,
    normalization: Option<Normalization>,
    quantization: Quantization,
}

/// Writes `count_per_slice` augmented copies of every slice.
pub fn augment(cfg: &PipelineConfig) -> CliResult<()> {
    let slices = load_inputs(cfg)?;
    let dir = out_dir(cfg)?;
    let params = cfg.distortion_params();
    let count = cfg.distortion.count_per_slice;
    let jobs: Vec<(usize, usize)> = (0..slices.len()).flat_map(|i| (0..count).map(move |k| (i, k))).collect();
    let tables = slices
        .iter()
        .map(|s| cfg.table_removal.enabled.then(|| table_geometry(cfg, s)).transpose())
        .collect::<CliResult<Vec<_>>>()?;
    let mut augmenters: Vec<(usize, usize, Augmenter)> = Vec::new();
    for s in &slices {
        let (h, w) = s.image.dims();
        if augmenters.iter().any(|a| (a.0, a.1) == (h, w)) {
            continue;
        }
        let pad = cfg.table_removal.pad_value.unwrap_or_else(|| default_pad(s.image.semantics()));
        let aug = Augmenter::new((h, w), cfg.distortion.delta, params, cfg.interpolation, pad)?
            .with_normalization(cfg.normalization)
            .with_fixed_psi(cfg.distortion.psi)?;
        augmenters.push((h, w, aug));
    }
    jobs.par_iter().try_for_each(|&(i, k)| -> CliResult<()> {
        let s = &slices[i];
        let aug = &augmenters.iter().find(|a| (a.0, a.1) == s.image.dims()).expect("augmenter per size").2;
        let out = aug.augment(&s.image, s.mask.as_ref(), tables[i].as_ref(), i as u64, k as u64)?;
        let base = format!("{}_aug{k}", s.name);
        let q = Quantization::for_image(&out.image);
        write_raster16(&dir.join(format!("{base}.png")), &out.image, &q)?;
        if cfg.lossless {
            write_raw_f32(&dir.join(format!("{base}.raw")), &out.image)?;
        }
        if let Some(m) = &out.mask {
            write_raster16(&dir.join(format!("{base}_mask.png")), m, &Quantization::IDENTITY)?;
        }
        let pad = cfg.table_removal.pad_value.unwrap_or_else(|| default_pad(s.image.semantics()));
        let prov = Provenance {
            source: &s.source,
            output: format!("{base}.png"),
            seed: cfg.seed,
            stream: i as u64,
            sample: k as u64,
            distortion: params,
            delta: cfg.distortion.delta,
            interpolation: cfg.interpolation,
            pad_value: pad,
            applied: AugmentRecord::from(&out),
            table_removal: tables[i],
            normalization: cfg.normalization,
            quantization: q,
        };
        write_json(&dir.join(format!("{base}.prov.json")), &prov)?;
        log::debug!("{base}: psi {:.4}, folds {}", out.psi, out.fold_count);
        Ok(())
    })?;
    log::info!("wrote {} augmented slices to {}", jobs.len(), dir.display());
    Ok(())
}

/// Valid-region mask, cleaned slice and geometry for every input.
pub fn table_mask(cfg: &PipelineConfig) -> CliResult<()> {
    let slices = load_inputs(cfg)?;
    let dir = out_dir(cfg)?;
    slices.par_iter().try_for_each(|s| -> CliResult<()> {
        let g = table_geometry(cfg, s)?;
        write_png8(&dir.join(format!("{}_valid.png", s.name)), &valid_mask(&g, s.image.dims()))?;
        let clean = apply_valid_mask(&s.image, &g);
        write_raster16(&dir.join(format!("{}_clean.png", s.name)), &clean, &Quantization::for_image(&clean))?;
        write_json(&dir.join(format!("{}.table.json", s.name)), &g)?;
        Ok(())
    })?;
    log::info!("wrote table masks for {} slices to {}", slices.len(), dir.display());
    Ok(())
}

fn grid_for(cfg: &PipelineConfig) -> CliResult<SimilarityGrid> {
    let slices = load_inputs(cfg)?;
    let images: Vec<ImageGrid> = slices.into_iter().map(|s| s.image).collect();
    let t = std::time::Instant::now();
    let grid = build_similarity_grid(&images, &cfg.grid, &cfg.grid_config())?;
    log::info!("similarity grid over {} cells in {:.2?}", grid.scores.len(), t.elapsed());
    Ok(grid)
}

#[derive(Serialize)]
struct GridSummary<'a> {
    grid: &'a SimilarityGrid,
    config: GridConfig,
    table_removal: bool,
}

/// Heatmap with amplitudes down the rows and frequencies across.
fn heatmap(grid: &SimilarityGrid) -> CliResult<ImageGrid> {
    Ok(ImageGrid::new(grid.amplitudes.len(), grid.frequencies.len(), grid.scores.clone(), PixelSemantics::Normalized)?)
}

pub fn similarity_grid(cfg: &PipelineConfig) -> CliResult<()> {
    let grid = grid_for(cfg)?;
    let dir = out_dir(cfg)?;
    write_grid_csv(create(&dir.join("similarity_grid.csv"))?, &grid, None, None)?;
    write_json(&dir.join("similarity_grid.json"), &GridSummary { grid: &grid, config: cfg.grid_config(), table_removal: false })?;
    write_png8(&dir.join("similarity_grid.png"), &heatmap(&grid)?)?;
    Ok(())
}

pub fn search(cfg: &PipelineConfig) -> CliResult<()> {
    // fail on an unreadable lookup table before the expensive grid
    let lookup = cfg.lookup.as_ref().map(|p| LookupEvaluator::from_csv(p)).transpose()?;
    let grid = grid_for(cfg)?;
    let cands = select_k10(&grid, cfg.percentile)?;
    log::info!("{} candidates at threshold {}", cands.pairs.len(), cands.threshold);
    let outcome = match &lookup {
        Some(table) => {
            let missing = table.missing(&cands);
            if !missing.is_empty() {
                return Err(CliError::Coverage(format!("lookup table misses {} candidates: {missing:?}", missing.len())));
            }
            run_search(&cands, |a, w| table.loss(a, w))?
        }
        None => run_search(&cands, |a, w| Ok(quadratic_loss(a, w)))?,
    };
    let dir = out_dir(cfg)?;
    write_grid_csv(create(&dir.join("search.csv"))?, &grid, Some(&cands), Some(&outcome))?;
    write_json(&dir.join("search.json"), &SearchReport::new(&grid, &cands, &outcome))?;
    log::info!("best (A, ω) = {:?}, loss {}", outcome.best, outcome.best_loss);
    Ok(())
}

pub fn bench(cfg: &PipelineConfig) -> CliResult<()> {
    let b = &cfg.bench;
    let [mh, mw] = b.map_dims;
    let mut report = bench_map_generation(&b.deltas, (mh, mw), b.repetitions)?;
    let sizes: Vec<(usize, usize)> = b.sizes.iter().map(|&[h, w]| (h, w)).collect();
    report.extend(bench_warp(&sizes, b.warp_delta, b.repetitions)?);
    let pcfg = PrefetchConfig {
        batch_size: b.prefetch_batch,
        batches: b.prefetch_batches,
        dims: (b.prefetch_dims[0], b.prefetch_dims[1]),
        delta: b.warp_delta,
        workers: rayon::current_num_threads(),
    };
    let delay = match b.consumer_delay_ms {
        Some(d) => d,
        None => 10.0 * bench_pipeline_prefetch(pcfg, 0.0)?.producer_batch_ms,
    };
    let prefetch = bench_pipeline_prefetch(pcfg, delay)?;
    log::info!("prefetch idle fraction {:.4} at {delay:.2} ms consumer delay", prefetch.idle_fraction);
    match &cfg.out {
        Some(_) => {
            let dir = out_dir(cfg)?;
            report.write_csv(create(&dir.join("bench.csv"))?)?;
            write_json(&dir.join("prefetch.json"), &prefetch)?;
        }
        None => {
            let stdout = std::io::stdout();
            report.write_csv(stdout.lock())?;
            let mut lock = stdout.lock();
            writeln!(lock, "{}", serde_json::to_string(&prefetch)?)?;
        }
    }
    Ok(())
}
