//! Cloud-artifact screening on per-tile water counts.
//!
//! Each river tile contributes one count per mosaic date, taken over the
//! tile's occurrence support (pixels that were ever water). A date scores by
//! how far it falls below the median count, relative to the support size.
//! Flagged tile-dates can be replaced by the last clean earlier date.

#[allow(unused_imports)] // unused when a dev-dependency links std
use num_traits::Float;
use alloc::vec::Vec;

use chrono::NaiveDate;

use crate::metrics::median;
use crate::mosaic::MosaicSeries;
use crate::raster::mask;
use crate::{Error, ProbabilityRaster, Result};

/// Regular partition of the mosaic grid into square tiles (edge tiles may be
/// smaller). Tile ids run row-major from the upper-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGrid {
    pub width: usize,
    pub height: usize,
    pub tile: usize,
}

impl TileGrid {
    pub fn new(width: usize, height: usize, tile: usize) -> Result<Self> {
        if tile == 0 || width == 0 || height == 0 {
            return Err(Error::InvalidGrid("tile grid needs positive extent and tile size"));
        }
        Ok(Self { width, height, tile })
    }

    pub fn cols(&self) -> usize {
        self.width.div_ceil(self.tile)
    }

    pub fn rows(&self) -> usize {
        self.height.div_ceil(self.tile)
    }

    pub fn count(&self) -> usize {
        self.cols() * self.rows()
    }

    /// Pixel window `(x0, y0, w, h)` of a tile.
    pub fn bounds(&self, id: usize) -> (usize, usize, usize, usize) {
        let (x0, y0) = ((id % self.cols()) * self.tile, (id / self.cols()) * self.tile);
        (x0, y0, self.tile.min(self.width - x0), self.tile.min(self.height - y0))
    }

    /// Full-tile area threshold for a support fraction.
    pub fn min_water_for_fraction(&self, fraction: f64) -> usize {
        (fraction * (self.tile * self.tile) as f64).floor() as usize
    }

    fn pixels(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        let (x0, y0, w, h) = self.bounds(id);
        (y0..y0 + h).flat_map(move |y| (x0..x0 + w).map(move |x| y * self.width + x))
    }
}

fn check_extent(tiles: &TileGrid, w: usize, h: usize) -> Result<()> {
    if tiles.width != w || tiles.height != h {
        return Err(Error::GridMismatch("tile grid does not cover the raster"));
    }
    Ok(())
}

fn support_of(occ: &ProbabilityRaster, tiles: &TileGrid, id: usize) -> Vec<usize> {
    let band = occ.band(0);
    tiles.pixels(id).filter(|&i| band[i] > 0.0).collect()
}

/// Tiles whose occurrence support holds strictly more than `min_water` pixels.
pub fn select_river_tiles(occurrence: &ProbabilityRaster, tiles: &TileGrid, min_water: usize) -> Result<Vec<usize>> {
    check_extent(tiles, occurrence.width(), occurrence.height())?;
    Ok((0..tiles.count())
        .filter(|&id| support_of(occurrence, tiles, id).len() > min_water)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileWaterSeries {
    pub tile_id: usize,
    pub support: usize,
    pub dates: Vec<NaiveDate>,
    pub counts: Vec<u64>,
}

/// Water counts over the tile's occurrence support, one per mosaic date.
pub fn tile_water_series(series: &MosaicSeries, occurrence: &ProbabilityRaster, tiles: &TileGrid, tile_id: usize) -> Result<TileWaterSeries> {
    check_extent(tiles, series.grid.width, series.grid.height)?;
    check_extent(tiles, occurrence.width(), occurrence.height())?;
    let support = support_of(occurrence, tiles, tile_id);
    let counts = series
        .entries
        .iter()
        .map(|e| {
            let band = e.mask.band(0);
            support.iter().filter(|&&i| band[i] == mask::WATER).count() as u64
        })
        .collect();
    Ok(TileWaterSeries {
        tile_id,
        support: support.len(),
        dates: series.dates(),
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyParams {
    pub top_k: usize,
    /// Dry dates needed for the guard to trip.
    pub min_dry_dates: usize,
    /// A date is dry when its count is below this fraction of the support.
    pub dry_fraction: f64,
    /// Scores at or below this floor are natural variation, not artifacts.
    pub min_score: f64,
    /// A flagged deficit must also exceed this many median absolute deviations.
    pub mad_factor: f64,
}

impl Default for AnomalyParams {
    fn default() -> Self {
        Self {
            top_k: 5,
            min_dry_dates: 2,
            dry_fraction: 0.01,
            min_score: 0.05,
            mad_factor: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Flagged,
    Corrected,
    Dismissed,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Flagged => "flagged",
            Action::Corrected => "corrected",
            Action::Dismissed => "dismissed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyFlag {
    pub tile_id: usize,
    /// Position in the mosaic series.
    pub index: usize,
    pub date: NaiveDate,
    pub score: f64,
    pub action: Action,
}

fn median_u64(counts: &[u64]) -> f64 {
    let v: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    median(&v).unwrap_or(0.0)
}

/// `max(0, median - count) / support` for every date.
pub fn anomaly_scores(series: &TileWaterSeries) -> Vec<f64> {
    if series.support == 0 {
        return alloc::vec![0.0; series.counts.len()];
    }
    let med = median_u64(&series.counts);
    let s = series.support as f64;
    series.counts.iter().map(|&c| (med - c as f64).max(0.0) / s).collect()
}

/// Top-k anomalous dates of one tile, largest score first (earlier date wins
/// ties). Returns nothing when the dry-date guard trips.
pub fn detect_anomalies(series: &TileWaterSeries, params: &AnomalyParams) -> Result<Vec<AnomalyFlag>> {
    let n = series.counts.len();
    if n < 3 {
        return Err(Error::TooFewDates { need: 3, got: n });
    }
    if series.dates.len() != n {
        return Err(Error::ShapeMismatch("dates and counts differ in length".into()));
    }
    let dry_cut = params.dry_fraction * series.support as f64;
    let dry = series.counts.iter().filter(|&&c| (c as f64) < dry_cut).count();
    if dry >= params.min_dry_dates || series.support == 0 {
        return Ok(Vec::new());
    }
    let scores = anomaly_scores(series);
    let med = median_u64(&series.counts);
    let deviations: Vec<f64> = series.counts.iter().map(|&c| (c as f64 - med).abs()).collect();
    let mad = median(&deviations).unwrap_or(0.0);
    let support = series.support as f64;
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| scores[i] > params.min_score && scores[i] * support > params.mad_factor * mad)
        .collect();
    candidates.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    candidates.truncate(params.top_k);
    Ok(candidates
        .into_iter()
        .map(|i| AnomalyFlag {
            tile_id: series.tile_id,
            index: i,
            date: series.dates[i],
            score: scores[i],
            action: Action::Flagged,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionMode {
    ReportOnly,
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub tile_id: usize,
    pub date: NaiveDate,
    pub score: f64,
    pub action: Action,
    pub replaced_from: Option<NaiveDate>,
}

/// Replace flagged tile-dates with the last clean earlier date of the same
/// tile. A flag with no clean predecessor is dismissed. In report-only mode
/// the series is returned untouched.
pub fn correct(series: &MosaicSeries, tiles: &TileGrid, flags: &[AnomalyFlag], mode: CorrectionMode) -> Result<(MosaicSeries, Vec<AuditEntry>)> {
    check_extent(tiles, series.grid.width, series.grid.height)?;
    let mut out = series.clone();
    let mut audit = Vec::with_capacity(flags.len());
    let mut ordered: Vec<&AnomalyFlag> = flags.iter().collect();
    ordered.sort_by_key(|f| (f.tile_id, f.index));
    for flag in ordered {
        if flag.index >= series.entries.len() || flag.tile_id >= tiles.count() {
            return Err(Error::ShapeMismatch("flag outside the mosaic series".into()));
        }
        let is_flagged = |i: usize| flags.iter().any(|f| f.tile_id == flag.tile_id && f.index == i);
        let source = (0..flag.index).rev().find(|&i| !is_flagged(i));
        let (action, replaced_from) = match (source, mode) {
            (None, _) => (Action::Dismissed, None),
            (Some(s), CorrectionMode::ReportOnly) => (Action::Flagged, Some(series.entries[s].date)),
            (Some(s), CorrectionMode::Auto) => {
                let (src_mask, src_prov) = (series.entries[s].mask.band(0), series.entries[s].provenance.band(0));
                let dst = &mut out.entries[flag.index];
                for i in tiles.pixels(flag.tile_id) {
                    dst.mask.band_mut(0)[i] = src_mask[i];
                    dst.provenance.band_mut(0)[i] = src_prov[i];
                }
                (Action::Corrected, Some(series.entries[s].date))
            }
        };
        audit.push(AuditEntry {
            tile_id: flag.tile_id,
            date: flag.date,
            score: flag.score,
            action,
            replaced_from,
        });
    }
    Ok((out, audit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mosaic::{Cadence, MosaicEntry, NO_SOURCE};
    use crate::{GridRef, Raster};
    use alloc::vec;
    use chrono::Days;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
        (0..n).map(|i| d0 + Days::new(12 * i as u64)).collect()
    }

    fn tws(counts: &[u64], support: usize) -> TileWaterSeries {
        TileWaterSeries { tile_id: 0, support, dates: dates(counts.len()), counts: counts.to_vec() }
    }

    #[test]
    fn tile_bounds() {
        let t = TileGrid::new(10, 7, 4).unwrap();
        assert_eq!((t.cols(), t.rows(), t.count()), (3, 2, 6));
        assert_eq!(t.bounds(2), (8, 0, 2, 4));
        assert_eq!(t.bounds(5), (8, 4, 2, 3));
        assert_eq!(TileGrid::new(4096, 4096, 4096).unwrap().min_water_for_fraction(500_000.0 / 4096f64.powi(2)), 500_000);
    }

    #[test]
    fn river_tile_threshold_is_strict() {
        let g = GridRef::pixel_space(4, 2);
        let occ = Raster::new(g, 1, -1.0, vec![10.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0]).unwrap();
        let t = TileGrid::new(4, 2, 2).unwrap();
        assert_eq!(select_river_tiles(&occ, &t, 1).unwrap(), vec![0]);
        assert!(select_river_tiles(&occ, &t, 2).unwrap().is_empty());
    }

    #[test]
    fn constant_series_has_no_flags() {
        let s = tws(&[500; 10], 1000);
        assert!(anomaly_scores(&s).iter().all(|&v| v == 0.0));
        assert!(detect_anomalies(&s, &AnomalyParams::default()).unwrap().is_empty());
    }

    #[test]
    fn single_drop_scores_by_median_deficit() {
        let mut counts = vec![10_000u64; 9];
        counts[4] = 2_000;
        let flags = detect_anomalies(&tws(&counts, 100_000), &AnomalyParams::default()).unwrap();
        assert_eq!(flags.len(), 1);
        assert_eq!(flags[0].index, 4);
        assert!((flags[0].score - 0.08).abs() < 1e-12);
    }

    #[test]
    fn dry_guard_trips() {
        let s = tws(&[5000, 0, 4000, 3, 5000, 5000], 10_000);
        assert!(detect_anomalies(&s, &AnomalyParams::default()).unwrap().is_empty());
        assert!(matches!(detect_anomalies(&tws(&[1, 2], 10), &AnomalyParams::default()), Err(Error::TooFewDates { .. })));
    }

    #[test]
    fn top_k_and_tie_order() {
        let counts = [100, 10, 100, 10, 100, 10, 100, 10, 100, 10, 100, 10, 100, 100, 100];
        let params = AnomalyParams { top_k: 3, mad_factor: 0.0, ..AnomalyParams::default() };
        let flags = detect_anomalies(&tws(&counts, 100), &params).unwrap();
        assert_eq!(flags.iter().map(|f| f.index).collect::<Vec<_>>(), vec![1, 3, 5]);
    }

    fn series_of(rows: &[[u8; 2]]) -> MosaicSeries {
        let grid = GridRef::pixel_space(2, 1);
        MosaicSeries {
            cadence: Cadence::new(dates(1)[0], 12).unwrap(),
            grid: grid.clone(),
            entries: rows
                .iter()
                .zip(dates(rows.len()))
                .enumerate()
                .map(|(w, (r, date))| MosaicEntry {
                    window: w,
                    date,
                    mask: Raster::new(grid.clone(), 1, 255, r.to_vec()).unwrap(),
                    provenance: Raster::filled(grid.clone(), 1, w as i32, NO_SOURCE),
                })
                .collect(),
        }
    }

    fn flag(tile: usize, index: usize) -> AnomalyFlag {
        AnomalyFlag { tile_id: tile, index, date: dates(index + 1)[index], score: 0.5, action: Action::Flagged }
    }

    #[test]
    fn correction_skips_back_over_flags() {
        let s = series_of(&[[1, 1], [1, 0], [0, 0], [0, 0], [1, 1]]);
        let tiles = TileGrid::new(2, 1, 1).unwrap();
        let flags = [flag(0, 2), flag(0, 3), flag(1, 0)];
        let (fixed, audit) = correct(&s, &tiles, &flags, CorrectionMode::Auto).unwrap();
        assert_eq!(fixed.entries[2].mask.data(), &[1, 0]);
        assert_eq!(fixed.entries[3].mask.data(), &[1, 0]);
        assert_eq!(fixed.entries[3].provenance.data(), &[1, 3]);
        assert_eq!(fixed.entries[1], s.entries[1]);
        assert_eq!(fixed.entries[4], s.entries[4]);
        let dismissed = audit.iter().find(|a| a.tile_id == 1).unwrap();
        assert_eq!(dismissed.action, Action::Dismissed);
        assert!(audit.iter().filter(|a| a.tile_id == 0).all(|a| a.replaced_from == Some(s.entries[1].date)));

        let (untouched, report) = correct(&s, &tiles, &flags, CorrectionMode::ReportOnly).unwrap();
        assert_eq!(untouched, s);
        assert_eq!(report.len(), 3);
    }
}
