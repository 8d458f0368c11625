//! Scene prediction and the fixed-cadence mosaic time series.
//!
//! A scene is padded so its extent is a whole number of tile cores plus a
//! border, cut into overlapping tiles, predicted tile by tile, and stitched
//! back from the tile cores (the border of every tile prediction is dropped).
//! Per-scene masks then go through compositing (water over dry over nodata),
//! forward gap-fill, and the occurrence / recurrence summaries.

use alloc::vec::Vec;

use chrono::{Datelike, Days, NaiveDate};

use crate::raster::{mask, F32_NODATA};
use crate::tiling::{pad_to, retile, Tile};
use crate::train::image_tensor;
use crate::unet::{Tensor, UNet};
use crate::{BackscatterRaster, Error, GridRef, ProbabilityRaster, Raster, Result, ShadeMask, WaterMask};

/// Provenance code: pixel value copied forward from an earlier mosaic.
pub const GAP_FILLED: i32 = -1;
/// Provenance code: no observation at all so far.
pub const NO_SOURCE: i32 = -2;

/// Padding and tile layout of one scene.
#[derive(Debug, Clone)]
pub struct ScenePlan {
    pub scene_grid: GridRef,
    pub tile: usize,
    pub border: usize,
    pub tiles: Vec<Tile<u8>>,
    /// Nodata footprint of the scene (any band at 0).
    pub nodata: Vec<bool>,
}

impl ScenePlan {
    pub fn core(&self) -> usize {
        self.tile - 2 * self.border
    }
}

/// Pad and cut a scene for prediction. `size_multiple` is the model's spatial
/// divisibility requirement (`2^depth`).
pub fn plan_scene(scene: &BackscatterRaster, tile: usize, border: usize, size_multiple: usize) -> Result<ScenePlan> {
    if tile <= 2 * border {
        return Err(Error::InvalidTiling { tile, overlap: border });
    }
    if size_multiple == 0 || tile % size_multiple != 0 {
        return Err(Error::InvalidConfig(alloc::format!(
            "tile size {tile} is incompatible with the model (must be a multiple of {size_multiple})"
        )));
    }
    let core = tile - 2 * border;
    let target_w = scene.width().div_ceil(core) * core;
    let target_h = scene.height().div_ceil(core) * core;
    let padded = fill_nodata_nearest(&pad_to(scene, target_w, target_h, border, scene.nodata())?);
    let tiles = retile(&padded, tile, border)?;
    let nodata = (0..scene.height())
        .flat_map(|y| (0..scene.width()).map(move |x| (x, y)))
        .map(|(x, y)| scene.is_nodata_at(x, y))
        .collect();
    Ok(ScenePlan {
        scene_grid: scene.grid().clone(),
        tile,
        border,
        tiles,
        nodata,
    })
}

/// Give every nodata pixel (any band at nodata) the values of its nearest valid
/// pixel in 4-connected steps, ties broken by scan order. The model never saw
/// code 0 in training, and read literally it is darker than any water, so
/// padding and swath edges would otherwise bleed false water into the scene.
/// The nodata footprint is restored after stitching.
pub fn fill_nodata_nearest(r: &BackscatterRaster) -> BackscatterRaster {
    let (w, h) = (r.width(), r.height());
    let mut out = r.clone();
    let mut done: Vec<bool> = (0..w * h).map(|i| !r.is_nodata_at(i % w, i / w)).collect();
    let mut queue: alloc::collections::VecDeque<usize> = (0..w * h).filter(|&i| done[i]).collect();
    if queue.is_empty() {
        return out;
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let neighbours = [
            (x > 0).then(|| i - 1),
            (x + 1 < w).then(|| i + 1),
            (y > 0).then(|| i - w),
            (y + 1 < h).then(|| i + w),
        ];
        for j in neighbours.into_iter().flatten() {
            if !done[j] {
                done[j] = true;
                for b in 0..r.bands() {
                    let v = out.get(b, x, y);
                    out.set(b, j % w, j / w, v);
                }
                queue.push_back(j);
            }
        }
    }
    out
}

/// Model input for one planned tile.
pub fn tile_input(tile: &Tile<u8>) -> Tensor<f32> {
    image_tensor(&tile.raster)
}

/// Reassemble tile predictions (one per planned tile, same order) into a
/// scene-sized probability raster. Residual double coverage keeps the maximum.
pub fn stitch(plan: &ScenePlan, predictions: &[Tensor<f32>]) -> Result<ProbabilityRaster> {
    if predictions.len() != plan.tiles.len() {
        return Err(Error::ShapeMismatch(alloc::format!(
            "{} predictions for {} tiles",
            predictions.len(),
            plan.tiles.len()
        )));
    }
    let (w, h) = (plan.scene_grid.width, plan.scene_grid.height);
    let mut out = Raster::filled(plan.scene_grid.clone(), 1, F32_NODATA, F32_NODATA);
    let (b, t) = (plan.border, plan.tile);
    for (tile, pred) in plan.tiles.iter().zip(predictions) {
        if pred.height != t || pred.width != t || pred.channels != 1 {
            return Err(Error::ShapeMismatch("tile prediction has the wrong shape".into()));
        }
        for ty in b..t - b {
            let y = tile.y0 + ty - b;
            if y >= h {
                break;
            }
            for tx in b..t - b {
                let x = tile.x0 + tx - b;
                if x >= w {
                    break;
                }
                let p = pred.at(0, ty, tx);
                let cur = out.get(0, x, y);
                if cur == F32_NODATA || p > cur {
                    out.set(0, x, y, p);
                }
            }
        }
    }
    for (v, &nd) in out.band_mut(0).iter_mut().zip(&plan.nodata) {
        if nd {
            *v = F32_NODATA;
        }
    }
    Ok(out)
}

/// Pad, tile, infer, crop tile borders and stitch.
pub fn predict_scene(scene: &BackscatterRaster, model: &UNet<f32>, tile: usize, border: usize) -> Result<ProbabilityRaster> {
    let plan = plan_scene(scene, tile, border, model.config().size_multiple())?;
    let preds = plan
        .tiles
        .iter()
        .map(|t| model.forward_one(&tile_input(t)))
        .collect::<Result<Vec<_>>>()?;
    stitch(&plan, &preds)
}

/// Fixed-length windows starting at `epoch_start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cadence {
    pub epoch_start: NaiveDate,
    pub days: u32,
}

impl Cadence {
    pub fn new(epoch_start: NaiveDate, days: u32) -> Result<Self> {
        if days == 0 {
            return Err(Error::InvalidConfig("cadence must be at least one day".into()));
        }
        Ok(Self { epoch_start, days })
    }

    /// `floor((date - epoch) / cadence)`; `None` before the epoch.
    pub fn window_of(&self, date: NaiveDate) -> Option<usize> {
        let delta = (date - self.epoch_start).num_days();
        (delta >= 0).then(|| (delta / i64::from(self.days)) as usize)
    }

    pub fn window_start(&self, window: usize) -> NaiveDate {
        self.epoch_start + Days::new(window as u64 * u64::from(self.days))
    }
}

fn rank(v: u8) -> u8 {
    match v {
        mask::WATER => 2,
        mask::DRY => 1,
        _ => 0,
    }
}

fn check_on_grid(m: &WaterMask, target: &GridRef) -> Result<()> {
    let g = m.grid();
    if g.width != target.width || g.height != target.height || g.offset_in(target) != Some((0, 0)) {
        return Err(Error::GridMismatch("mask is not on the mosaic grid"));
    }
    Ok(())
}

/// Per-pixel maximum over contributors (water > dry > nodata). Provenance holds
/// the index of the first contributor attaining the maximum, or [`NO_SOURCE`].
pub fn composite(masks: &[&WaterMask], target: &GridRef) -> Result<(WaterMask, Raster<i32>)> {
    for m in masks {
        check_on_grid(m, target)?;
    }
    let mut out = Raster::filled(target.clone(), 1, mask::NODATA, mask::NODATA);
    let mut prov = Raster::filled(target.clone(), 1, NO_SOURCE, NO_SOURCE);
    for (k, m) in masks.iter().enumerate() {
        let (o, p) = (out.band_mut(0), prov.band_mut(0));
        for ((dst, src_prov), &v) in o.iter_mut().zip(p.iter_mut()).zip(m.band(0)) {
            if rank(v) > rank(*dst) {
                *dst = v;
                *src_prov = k as i32;
            }
        }
    }
    Ok((out, prov))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MosaicEntry {
    pub window: usize,
    pub date: NaiveDate,
    pub mask: WaterMask,
    pub provenance: Raster<i32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MosaicSeries {
    pub cadence: Cadence,
    pub grid: GridRef,
    pub entries: Vec<MosaicEntry>,
}

/// One per-scene mask already projected onto the mosaic grid.
#[derive(Debug, Clone)]
pub struct Observation {
    /// Identifier written into provenance (e.g. manifest row).
    pub source: i32,
    pub date: NaiveDate,
    pub mask: WaterMask,
}

impl MosaicSeries {
    /// Composite observations into windows `0..n_windows` (or up to the last
    /// observed window). Observations before the epoch or past the last window
    /// are ignored. The series is not gap-filled.
    pub fn build(cadence: Cadence, grid: GridRef, observations: &[Observation], n_windows: Option<usize>) -> Result<Self> {
        let windows: Vec<Option<usize>> = observations.iter().map(|o| cadence.window_of(o.date)).collect();
        let count = n_windows.unwrap_or_else(|| windows.iter().flatten().max().map_or(0, |m| m + 1));
        let mut entries = Vec::with_capacity(count);
        for w in 0..count {
            let members: Vec<&Observation> = observations
                .iter()
                .zip(&windows)
                .filter(|(_, ow)| **ow == Some(w))
                .map(|(o, _)| o)
                .collect();
            let masks: Vec<&WaterMask> = members.iter().map(|o| &o.mask).collect();
            let (m, local) = composite(&masks, &grid)?;
            let provenance = local.map(NO_SOURCE, |k| if k >= 0 { members[k as usize].source } else { k });
            entries.push(MosaicEntry {
                window: w,
                date: cadence.window_start(w),
                mask: m,
                provenance,
            });
        }
        Ok(Self { cadence, grid, entries })
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.entries.iter().map(|e| e.date).collect()
    }

    pub fn masks(&self) -> Vec<WaterMask> {
        self.entries.iter().map(|e| e.mask.clone()).collect()
    }
}

/// Pixel-wise forward fill from the latest valid date. Returns the filled
/// series and the number of pixel-dates left as leading nodata.
pub fn gap_fill(series: &MosaicSeries) -> (MosaicSeries, usize) {
    let mut out = series.clone();
    let n = series.grid.len();
    let mut last: Vec<u8> = alloc::vec![mask::NODATA; n];
    let mut leading = 0usize;
    for entry in out.entries.iter_mut() {
        let (m, p) = (entry.mask.band_mut(0), entry.provenance.band_mut(0));
        for i in 0..n {
            if m[i] == mask::NODATA {
                if last[i] == mask::NODATA {
                    leading += 1;
                } else {
                    m[i] = last[i];
                    p[i] = GAP_FILLED;
                }
            } else {
                last[i] = m[i];
            }
        }
    }
    (out, leading)
}

/// `100 * water dates / valid dates`; nodata where no date is valid.
pub fn occurrence(series: &MosaicSeries) -> ProbabilityRaster {
    let n = series.grid.len();
    let (mut water, mut valid) = (alloc::vec![0u32; n], alloc::vec![0u32; n]);
    for e in &series.entries {
        for (i, &v) in e.mask.band(0).iter().enumerate() {
            if v != mask::NODATA {
                valid[i] += 1;
                water[i] += u32::from(v == mask::WATER);
            }
        }
    }
    let data = water
        .iter()
        .zip(&valid)
        .map(|(&w, &v)| if v == 0 { F32_NODATA } else { (100.0 * f64::from(w) / f64::from(v)) as f32 })
        .collect();
    Raster::new(series.grid.clone(), 1, F32_NODATA, data).expect("grid-sized payload")
}

/// `100 * years with water / years with a valid date`, by calendar year.
pub fn recurrence(series: &MosaicSeries) -> ProbabilityRaster {
    let n = series.grid.len();
    let mut years: Vec<i32> = series.entries.iter().map(|e| e.date.year()).collect();
    years.dedup();
    let (mut water_years, mut valid_years) = (alloc::vec![0u32; n], alloc::vec![0u32; n]);
    for &year in &years {
        let (mut wet, mut seen) = (alloc::vec![false; n], alloc::vec![false; n]);
        for e in series.entries.iter().filter(|e| e.date.year() == year) {
            for (i, &v) in e.mask.band(0).iter().enumerate() {
                if v != mask::NODATA {
                    seen[i] = true;
                    wet[i] |= v == mask::WATER;
                }
            }
        }
        for i in 0..n {
            valid_years[i] += u32::from(seen[i]);
            water_years[i] += u32::from(wet[i]);
        }
    }
    let data = water_years
        .iter()
        .zip(&valid_years)
        .map(|(&w, &v)| if v == 0 { F32_NODATA } else { (100.0 * f64::from(w) / f64::from(v)) as f32 })
        .collect();
    Raster::new(series.grid.clone(), 1, F32_NODATA, data).expect("grid-sized payload")
}

/// Force shaded pixels to non-water.
pub fn apply_shade(m: &WaterMask, shade: &ShadeMask) -> Result<WaterMask> {
    if m.width() != shade.width() || m.height() != shade.height() {
        return Err(Error::GridMismatch("shade mask must be projected onto the mosaic grid"));
    }
    let mut out = m.clone();
    for (v, &s) in out.band_mut(0).iter_mut().zip(shade.band(0)) {
        if s == crate::shade::EXCLUDE {
            *v = mask::DRY;
        }
    }
    Ok(out)
}
