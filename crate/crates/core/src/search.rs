//! Similarity-guided search over distortion intensities `(A, ω)`.
//!
//! Every grid cell distorts the reference slices at full strength (Ψ = 1)
//! and records the mean match count against the undistorted slices. The
//! top decile of cells is then handed to an evaluator, and the cell with
//! the lowest loss wins.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SampledIntensity;
use crate::image::ImageGrid;
use crate::similarity::{FeatureDetector, Reference, SimilarityConfig};
use crate::table::default_pad;
use crate::warp::{warp_image, Interpolation, Warper};

pub const DEFAULT_LADDER: [f64; 9] = [0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0];
pub const DEFAULT_BOUNDS: [f64; 2] = [0.25, 12.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamGrid {
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub bounds: [f64; 2],
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self { amplitudes: DEFAULT_LADDER.to_vec(), frequencies: DEFAULT_LADDER.to_vec(), bounds: DEFAULT_BOUNDS }
    }
}

impl ParamGrid {
    pub fn new(amplitudes: Vec<f64>, frequencies: Vec<f64>, bounds: [f64; 2]) -> Result<Self> {
        let g = Self { amplitudes, frequencies, bounds };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.bounds;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid(format!("bad bounds [{lo}, {hi}]")));
        }
        if self.amplitudes.is_empty() || self.frequencies.is_empty() {
            return Err(Error::invalid("parameter grid axes must be nonempty"));
        }
        for &v in self.amplitudes.iter().chain(&self.frequencies) {
            if !(v >= lo && v <= hi) {
                return Err(Error::invalid(format!("grid value {v} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len() * self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cells in row-major order (amplitude outer, frequency inner).
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.amplitudes.iter().flat_map(|&a| self.frequencies.iter().map(move |&w| (a, w))).collect()
    }
}

/// How each cell's distortion is rendered before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub delta: usize,
    pub rotation: f64,
    pub phase: f64,
    pub interpolation: Interpolation,
    pub similarity: SimilarityConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            delta: 16,
            rotation: 0.0,
            phase: 0.0,
            interpolation: Interpolation::Bicubic,
            similarity: SimilarityConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGrid {
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
    /// Row-major, amplitude outer.
    pub scores: Vec<f64>,
    pub sample_count: usize,
}

impl SimilarityGrid {
    pub fn new(amplitudes: Vec<f64>, frequencies: Vec<f64>, scores: Vec<f64>, sample_count: usize) -> Result<Self> {
        if scores.len() != amplitudes.len() * frequencies.len() || scores.is_empty() {
            return Err(Error::invalid("score table does not match the grid axes"));
        }
        if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("scores must be finite and non-negative"));
        }
        Ok(Self { amplitudes, frequencies, scores, sample_count })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.frequencies.len() + j]
    }

    pub fn score_at(&self, a: f64, w: f64) -> Option<f64> {
        let i = self.amplitudes.iter().position(|&x| x == a)?;
        let j = self.frequencies.iter().position(|&x| x == w)?;
        Some(self.get(i, j))
    }

    /// `(A, ω, S)` triples in row-major order.
    pub fn cells(&self) -> Vec<(f64, f64, f64)> {
        let n = self.frequencies.len();
        self.scores.iter().enumerate().map(|(k, &s)| (self.amplitudes[k / n], self.frequencies[k % n], s)).collect()
    }
}

/// Mean similarity over `slices` for every `(A, ω)` cell, Ψ fixed at 1.
pub fn build_similarity_grid(slices: &[ImageGrid], grid: &ParamGrid, config: &GridConfig) -> Result<SimilarityGrid> {
    let orb = config.similarity.orb();
    build_similarity_grid_with(slices, grid, config, &[&orb])
}

pub fn build_similarity_grid_with(
    slices: &[ImageGrid],
    grid: &ParamGrid,
    config: &GridConfig,
    detectors: &[&dyn FeatureDetector],
) -> Result<SimilarityGrid> {
    grid.validate()?;
    if slices.is_empty() {
        return Err(Error::invalid("similarity grid needs at least one slice"));
    }
    let dims = slices[0].dims();
    if slices.iter().any(|s| s.dims() != dims) {
        return Err(Error::invalid("slices differ in size"));
    }
    let warper = Warper::new(dims.0, dims.1, config.delta)?;
    let refs = slices
        .par_iter()
        .map(|s| Reference::new(s, detectors.to_vec(), config.similarity.ratio))
        .collect::<Result<Vec<_>>>()?;
    let cells = grid.cells();
    let scores = cells
        .par_iter()
        .map(|&(a, f)| {
            let map = warper.sample_map(SampledIntensity { a, f }, config.rotation, config.phase)?;
            let mut total = 0.0;
            for (slice, r) in slices.iter().zip(&refs) {
                let warped = warp_image(slice, &map, config.interpolation, default_pad(slice.semantics()))?;
                total += r.score(&warped)?;
            }
            Ok(total / slices.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    log::debug!("similarity grid: {} cells over {} slices", cells.len(), slices.len());
    SimilarityGrid::new(grid.amplitudes.clone(), grid.frequencies.clone(), scores, slices.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub pairs: Vec<(f64, f64)>,
    pub threshold: f64,
    pub percentile: f64,
}

/// Cells scoring at or above the `percentile` threshold.
///
/// With `N` cells, `k = ceil((100 - percentile) * N / 100)` (at least 1)
/// and the threshold is the k-th largest score, so the top `k` cells and
/// anything tied with the k-th are selected.
pub fn select_k10(grid: &SimilarityGrid, percentile: f64) -> Result<CandidateSet> {
    if !(0.0..=100.0).contains(&percentile) {
        return Err(Error::invalid(format!("percentile {percentile} outside [0, 100]")));
    }
    let n = grid.scores.len();
    let k = ((((100.0 - percentile) * n as f64) / 100.0 - 1e-9).ceil() as usize).clamp(1, n);
    let mut sorted = grid.scores.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = sorted[k - 1];
    let pairs = grid.cells().into_iter().filter(|&(_, _, s)| s >= threshold).map(|(a, w, _)| (a, w)).collect();
    Ok(CandidateSet { pairs, threshold, percentile })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: (f64, f64),
    pub best_loss: f64,
    /// `(A, ω, loss)` in candidate order.
    pub losses: Vec<(f64, f64, f64)>,
}

/// Evaluates every candidate and returns the lowest loss; ties go to the
/// smallest `A`, then the smallest `ω`.
pub fn run_search<F>(candidates: &CandidateSet, evaluator: F) -> Result<SearchOutcome>
where
    F: Fn(f64, f64) -> Result<f64> + Sync,
{
    if candidates.pairs.is_empty() {
        return Err(Error::invalid("no candidates to search"));
    }
    let losses = candidates
        .pairs
        .par_iter()
        .map(|&(a, w)| {
            let l = evaluator(a, w)?;
            if l.is_nan() {
                return Err(Error::invalid(format!("evaluator returned NaN at ({a}, {w})")));
            }
            Ok((a, w, l))
        })
        .collect::<Result<Vec<_>>>()?;
    let &(a, w, l) = losses
        .iter()
        .min_by(|x, y| x.2.total_cmp(&y.2).then(x.0.total_cmp(&y.0)).then(x.1.total_cmp(&y.1)))
        .expect("nonempty");
    Ok(SearchOutcome { best: (a, w), best_loss: l, losses })
}

/// Synthetic evaluator with its optimum at `(6, 2)`.
pub fn quadratic_loss(a: f64, w: f64) -> f64 {
    (a - 6.0).powi(2) + (w - 2.0).powi(2)
}

/// Evaluator backed by a precomputed `(A, ω) -> loss` table.
#[derive(Debug, Clone, Default)]
pub struct LookupEvaluator {
    table: HashMap<(u64, u64), f64>,
}

#[derive(Debug, Deserialize)]
struct LookupRow {
    amplitude: f64,
    frequency: f64,
    loss: f64,
}

impl LookupEvaluator {
    pub fn from_entries(entries: impl IntoIterator<Item = (f64, f64, f64)>) -> Self {
        Self { table: entries.into_iter().map(|(a, w, l)| ((a.to_bits(), w.to_bits()), l)).collect() }
    }

    /// CSV with header `amplitude,frequency,loss`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut rows = Vec::new();
        for row in rdr.deserialize() {
            let r: LookupRow = row?;
            rows.push((r.amplitude, r.frequency, r.loss));
        }
        Ok(Self::from_entries(rows))
    }

    pub fn loss(&self, a: f64, w: f64) -> Result<f64> {
        self.table
            .get(&(a.to_bits(), w.to_bits()))
            .copied()
            .ok_or_else(|| Error::Coverage(format!("lookup table has no entry for A={a}, ω={w}")))
    }

    /// Candidates the table does not cover.
    pub fn missing(&self, candidates: &CandidateSet) -> Vec<(f64, f64)> {
        candidates.pairs.iter().copied().filter(|&(a, w)| self.loss(a, w).is_err()).collect()
    }
}

/// Pearson correlation; `None` for fewer than two points or zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&ranks(x), &ranks(y))
}

/// CSV rows `amplitude,frequency,score,loss,selected`.
pub fn write_grid_csv<W: Write>(
    out: W,
    grid: &SimilarityGrid,
    candidates: Option<&CandidateSet>,
    losses: Option<&SearchOutcome>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["amplitude", "frequency", "score", "loss", "selected"])?;
    for (a, f, s) in grid.cells() {
        let loss = losses
            .and_then(|o| o.losses.iter().find(|l| l.0 == a && l.1 == f))
            .map(|l| l.2.to_string())
            .unwrap_or_default();
        let selected = candidates.map(|c| c.pairs.contains(&(a, f)).to_string()).unwrap_or_default();
        w.write_record([a.to_string(), f.to_string(), s.to_string(), loss, selected])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub threshold: f64,
    pub k_set: Vec<(f64, f64)>,
    pub best: (f64, f64),
    pub best_loss: f64,
    pub loss_table: Vec<(f64, f64, f64)>,
    pub pearson: Option<f64>,
}

impl SearchReport {
    pub fn new(grid: &SimilarityGrid, candidates: &CandidateSet, outcome: &SearchOutcome) -> Self {
        let (s, l): (Vec<f64>, Vec<f64>) =
            outcome.losses.iter().filter_map(|&(a, w, l)| grid.score_at(a, w).map(|s| (s, l))).unzip();
        Self {
            threshold: candidates.threshold,
            k_set: candidates.pairs.clone(),
            best: outcome.best,
            best_loss: outcome.best_loss,
            loss_table: outcome.losses.clone(),
            pearson: pearson(&s, &l),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::PixelSemantics;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_of(scores: Vec<f64>, n_a: usize) -> SimilarityGrid {
        let n_w = scores.len() / n_a;
        SimilarityGrid::new((0..n_a).map(|i| i as f64).collect(), (0..n_w).map(|j| j as f64).collect(), scores, 1).unwrap()
    }

    #[test]
    fn nearest_rank_examples() {
        let g = grid_of((1..=10).map(f64::from).collect(), 2);
        let c = select_k10(&g, 90.0).unwrap();
        assert_eq!((c.pairs.len(), c.threshold), (1, 10.0));
        let g = grid_of(vec![3.0; 12], 3);
        assert_eq!(select_k10(&g, 90.0).unwrap().pairs.len(), 12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s: Vec<f64> = (0..49).map(|i| i as f64 + rng.gen_range(0.0..0.5)).collect();
        s.shuffle(&mut rng);
        let g = grid_of(s.clone(), 7);
        let c = select_k10(&g, 90.0).unwrap();
        assert_eq!(c.pairs.len(), 5);
        // oracle: the five largest values
        let mut sorted = s;
        sorted.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(c.threshold, sorted[4]);
    }

    proptest! {
        #[test]
        fn selection_size_is_ceil_plus_ties(scores in prop::collection::vec(0u8..6, 1..60)) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let n = scores.len();
            let g = SimilarityGrid::new(vec![0.0], (0..n).map(|j| j as f64).collect(), scores.clone(), 1).unwrap();
            let c = select_k10(&g, 90.0).unwrap();
            let k = (n as f64 / 10.0).ceil() as usize;
            let ties = scores.iter().filter(|&&s| s == c.threshold).count();
            prop_assert!(c.pairs.len() >= k && c.pairs.len() < k + ties);
            prop_assert!(c.pairs.iter().all(|&(_, w)| scores[w as usize] >= c.threshold));
        }

        #[test]
        fn search_is_permutation_invariant(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pairs: Vec<(f64, f64)> = (0..15).map(|_| (f64::from(rng.gen_range(0..5u8)), f64::from(rng.gen_range(0..5u8)))).collect();
            let eval = |a: f64, w: f64| Ok(((a - 2.0).abs() + (w - 3.0).abs()).floor());
            let base = run_search(&CandidateSet { pairs: pairs.clone(), threshold: 0.0, percentile: 90.0 }, eval).unwrap();
            pairs.shuffle(&mut rng);
            let again = run_search(&CandidateSet { pairs, threshold: 0.0, percentile: 90.0 }, eval).unwrap();
            prop_assert_eq!(base.best, again.best);
        }
    }

    #[test]
    fn quadratic_optimum_and_singletons() {
        let cells = ParamGrid::default().cells();
        let c = CandidateSet { pairs: cells, threshold: 0.0, percentile: 0.0 };
        let out = run_search(&c, |a, w| Ok(quadratic_loss(a, w))).unwrap();
        assert_eq!(out.best, (6.0, 2.0));
        let one = CandidateSet { pairs: vec![(12.0, 12.0)], threshold: 0.0, percentile: 90.0 };
        assert_eq!(run_search(&one, |_, _| Ok(1e9)).unwrap().best, (12.0, 12.0));
        let none = CandidateSet { pairs: vec![], threshold: 0.0, percentile: 90.0 };
        assert!(run_search(&none, |_, _| Ok(0.0)).is_err());
    }

    #[test]
    fn lookup_matches_exhaustive_scan_and_reports_gaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cells = ParamGrid::default().cells();
        let entries: Vec<(f64, f64, f64)> = cells.iter().map(|&(a, w)| (a, w, rng.gen_range(0.0..1.0))).collect();
        let eval = LookupEvaluator::from_entries(entries.clone());
        let c = CandidateSet { pairs: cells.clone(), threshold: 0.0, percentile: 0.0 };
        let out = run_search(&c, |a, w| eval.loss(a, w)).unwrap();
        let oracle = entries.iter().min_by(|x, y| x.2.total_cmp(&y.2)).unwrap();
        assert_eq!(out.best, (oracle.0, oracle.1));
        let partial = LookupEvaluator::from_entries(entries[1..].to_vec());
        assert_eq!(partial.missing(&c), vec![cells[0]]);
        assert!(matches!(run_search(&c, |a, w| partial.loss(a, w)), Err(Error::Coverage(_))));
    }

    #[test]
    fn lookup_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "amplitude,frequency,loss\n0.5,1,0.25\n6,2,0.1\n").unwrap();
        let e = LookupEvaluator::from_csv(&p).unwrap();
        assert_eq!(e.loss(6.0, 2.0).unwrap(), 0.1);
        assert!(e.loss(1.0, 1.0).is_err());
    }

    #[test]
    fn correlations() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0], &[2.0, 3.0]).is_none());
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 5.0, 1.0, 0.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn blank_slice_gives_zero_grid_and_zero_cell_is_self_similarity() {
        let blank = ImageGrid::filled(64, 64, -1000.0, PixelSemantics::Hu);
        let small = ParamGrid::new(vec![0.25, 2.0], vec![1.0, 4.0], DEFAULT_BOUNDS).unwrap();
        let g = build_similarity_grid(&[blank], &small, &GridConfig::default()).unwrap();
        assert!(g.scores.iter().all(|&s| s == 0.0));

        let p = crate::phantom::abdominal_phantom(128, 3).image;
        let grid = ParamGrid::new(vec![0.0, 4.0], vec![0.0, 3.0], [0.0, 12.0]).unwrap();
        let g = build_similarity_grid(std::slice::from_ref(&p), &grid, &GridConfig::default()).unwrap();
        let cfg = SimilarityConfig::default();
        let self_sim = crate::similarity::similarity_score(&p, &p, &cfg).unwrap();
        assert_eq!(g.get(0, 0), self_sim);
        assert!(g.scores.iter().all(|&s| s <= self_sim));
        assert!(ParamGrid::new(vec![0.0], vec![1.0], DEFAULT_BOUNDS).is_err());
    }

    #[test]
    fn csv_schema() {
        let g = grid_of(vec![1.0, 2.0, 3.0, 4.0], 2);
        let c = select_k10(&g, 90.0).unwrap();
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, &g, Some(&c), None).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "amplitude,frequency,score,loss,selected");
        assert_eq!(lines[4], "1,1,4,,true");
    }
}
