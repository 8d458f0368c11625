//! Seeded synthetic basin: a meandering river whose width follows a gauge
//! level, constant lakes, an optional mountain with radar shadow, two
//! overlapping orbits per date and injected cloud artifacts.
//!
//! Everything is a pure function of [`BasinConfig`]. Images are rendered on
//! demand from per-date PRNG streams, so any scene can be regenerated alone.

#[allow(unused_imports)] // unused when a dev-dependency links std
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_distr::Normal;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::metrics::{ClassLabel, GaugeSeries};
use crate::quantize::quantize_scene;
use crate::raster::{mask, DEM_NODATA};
use crate::tiling::crop;
use crate::train::{prepare_pairs, SamplePair, Split};
use crate::{BackscatterRaster, DemRaster, Error, GridRef, Raster, Result, WaterMask};

const WATER_DB: (f64, f64) = (-24.0, -18.0);
const LAND_DB: (f64, f64) = (-14.0, -8.0);
const SHADOW_DB: (f64, f64) = (-25.0, -19.0);
const CLOUD_GAIN_DB: f64 = 10.0;
const MEAN_LEVEL_M: f64 = 20.0;
const DEM_FACTOR: usize = 3;
const MOUNTAIN_SLOPE_DEG: f64 = 35.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BasinConfig {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub n_dates: usize,
    pub cadence_days: u32,
    pub epoch_start: NaiveDate,
    pub pixel_size_m: f64,
    /// QA tile edge in pixels.
    pub qa_tile: usize,
    pub mountains: bool,
    /// Probability that an eligible river tile-date receives a cloud.
    pub cloud_rate: f64,
    pub speckle_db: f64,
}

impl Default for BasinConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            width: 384,
            height: 384,
            n_dates: 30,
            cadence_days: 12,
            epoch_start: NaiveDate::from_ymd_opt(2022, 1, 1).expect("valid date"),
            pixel_size_m: 10.0,
            qa_tile: 64,
            mountains: true,
            cloud_rate: 0.15,
            speckle_db: 1.5,
        }
    }
}

impl BasinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 64 || self.height < 64 {
            return Err(Error::InvalidConfig("basin must be at least 64 x 64 pixels".into()));
        }
        if self.n_dates < 3 {
            return Err(Error::InvalidConfig("basin needs at least 3 dates".into()));
        }
        if self.cadence_days == 0 || self.qa_tile == 0 {
            return Err(Error::InvalidConfig("cadence and QA tile size must be positive".into()));
        }
        if !(self.pixel_size_m > 0.0) || !(self.speckle_db >= 0.0) || !(0.0..=1.0).contains(&self.cloud_rate) {
            return Err(Error::InvalidConfig("pixel size, speckle or cloud rate out of range".into()));
        }
        Ok(())
    }
}

/// One acquisition of one orbit.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub scene_id: String,
    pub orbit_id: String,
    pub date: NaiveDate,
    /// Window index of the acquisition.
    pub index: usize,
    pub image: BackscatterRaster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CloudArtifact {
    pub tile_id: usize,
    pub index: usize,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Lake {
    cx: f64,
    cy: f64,
    r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Orbit {
    id: &'static str,
    x0: usize,
    x1: usize,
    left_nodata: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Basin {
    pub config: BasinConfig,
    pub grid: GridRef,
    /// Acquisition date of each window.
    pub dates: Vec<NaiveDate>,
    pub truth: Vec<WaterMask>,
    pub gauge: GaugeSeries,
    pub artifacts: Vec<CloudArtifact>,
    pub dem: DemRaster,
    pub classes: Raster<u8>,
    pub class_labels: Vec<ClassLabel>,
    mountain: Option<(f64, f64, f64)>,
    lakes: Vec<Lake>,
    phases: [f64; 2],
    orbits: [Orbit; 2],
    missing: Vec<[bool; 2]>,
}

fn level_at(day: f64) -> f64 {
    let season = 5.0 * (2.0 * core::f64::consts::PI * (day - 60.0) / 365.0).sin();
    let drought = 3.0 * (-((day - 260.0) / 30.0).powi(2)).exp();
    MEAN_LEVEL_M + season - drought
}

fn stream(seed: u64, a: u64, b: u64) -> Xoshiro256PlusPlus {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(a.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(b.wrapping_mul(0x94D0_49BB_1331_11EB));
    Xoshiro256PlusPlus::seed_from_u64(mixed)
}

impl Basin {
    pub fn generate(config: &BasinConfig) -> Result<Self> {
        config.validate()?;
        let (w, h) = (config.width, config.height);
        let grid = GridRef::new(500_000.0, 9_650_000.0, config.pixel_size_m, config.pixel_size_m, w, h, "EPSG:32720")?;
        let mut rng = stream(config.seed, 0, 0);
        let phases = [rng.random::<f64>() * 6.283, rng.random::<f64>() * 6.283];
        let (wf, hf) = (w as f64, h as f64);
        let mountain = config.mountains.then(|| (0.86 * wf, 0.14 * hf, 0.13 * wf));
        let lake_slots = [(0.12, 0.2), (0.2, 0.7), (0.8, 0.8)];
        let lakes = lake_slots
            .iter()
            .map(|&(fx, fy)| Lake {
                cx: (fx + 0.04 * (rng.random::<f64>() - 0.5)) * wf,
                cy: (fy + 0.04 * (rng.random::<f64>() - 0.5)) * hf,
                r: (0.03 + 0.015 * rng.random::<f64>()) * wf,
            })
            .collect();
        let offsets: Vec<u64> = (0..config.n_dates).map(|_| rng.random_range(0..3u64)).collect();
        let dates: Vec<NaiveDate> = offsets
            .iter()
            .enumerate()
            .map(|(i, &o)| config.epoch_start + Days::new(i as u64 * u64::from(config.cadence_days) + o))
            .collect();
        let orbits = [
            Orbit { id: "A", x0: 0, x1: w * 5 / 8, left_nodata: 0 },
            Orbit { id: "B", x0: w * 3 / 8, x1: w, left_nodata: 2 },
        ];
        let missing = (0..config.n_dates)
            .map(|i| {
                let b = i % 7 == 3;
                [i % 9 == 5 && !b, b]
            })
            .collect();
        let mut basin = Self {
            config: config.clone(),
            grid: grid.clone(),
            dates,
            truth: Vec::new(),
            gauge: GaugeSeries::new(Vec::new(), Vec::new())?,
            artifacts: Vec::new(),
            dem: Raster::filled(GridRef::pixel_space(1, 1), 1, 0.0, DEM_NODATA),
            classes: Raster::filled(grid.clone(), 1, 0, 0),
            class_labels: Vec::new(),
            mountain,
            lakes,
            phases,
            orbits,
            missing,
        };
        basin.truth = (0..config.n_dates).map(|i| basin.truth_at(i)).collect();
        basin.gauge = basin.make_gauge()?;
        basin.dem = basin.make_dem()?;
        basin.classes = basin.make_classes();
        basin.class_labels = ["river channel", "floodplain", "upland forest", "lake", "mountain"]
            .iter()
            .zip(["river channel", "flooded forest", "upland forest", "lake", "mountain"])
            .enumerate()
            .map(|(k, (low, high))| ClassLabel {
                code: k as u8 + 1,
                label_low_water: (*low).into(),
                label_high_water: high.into(),
            })
            .collect();
        basin.artifacts = basin.place_clouds();
        Ok(basin)
    }

    pub fn day_of(&self, index: usize) -> f64 {
        (self.dates[index] - self.config.epoch_start).num_days() as f64
    }

    pub fn level_on(&self, date: NaiveDate) -> f64 {
        level_at((date - self.config.epoch_start).num_days() as f64)
    }

    fn centerline(&self, y: f64) -> f64 {
        let (w, h) = (self.config.width as f64, self.config.height as f64);
        let tau = 2.0 * core::f64::consts::PI;
        0.5 * w + 0.08 * w * (tau * y / (0.7 * h) + self.phases[0]).sin() + 0.03 * w * (tau * y / (0.23 * h) + self.phases[1]).sin()
    }

    fn half_width(&self, level: f64) -> f64 {
        let scale = self.config.width as f64 / 384.0;
        scale * (10.0 + 0.25 * (level - MEAN_LEVEL_M))
    }

    fn in_lake(&self, x: f64, y: f64) -> bool {
        self.lakes.iter().any(|l| (x - l.cx).powi(2) + (y - l.cy).powi(2) < l.r * l.r)
    }

    fn in_shadow(&self, x: f64, y: f64) -> bool {
        self.mountain
            .is_some_and(|(cx, cy, r)| x > cx && (x - cx).powi(2) + (y - cy).powi(2) < r * r)
    }

    fn truth_at(&self, index: usize) -> WaterMask {
        let hw = self.half_width(self.level_on(self.dates[index]));
        let (w, h) = (self.config.width, self.config.height);
        let mut data = alloc::vec![mask::DRY; w * h];
        for y in 0..h {
            let (yc, c) = (y as f64 + 0.5, self.centerline(y as f64 + 0.5));
            for x in 0..w {
                let xc = x as f64 + 0.5;
                if (xc - c).abs() < hw || self.in_lake(xc, yc) {
                    data[y * w + x] = mask::WATER;
                }
            }
        }
        Raster::new(self.grid.clone(), 1, mask::NODATA, data).expect("grid-sized mask")
    }

    fn make_gauge(&self) -> Result<GaugeSeries> {
        let mut rng = stream(self.config.seed, 1, 0);
        let noise = Normal::new(0.0, 0.03).map_err(|_| Error::InvalidConfig("gauge noise".into()))?;
        let span = self.config.n_dates as i64 * i64::from(self.config.cadence_days);
        let (mut dates, mut levels) = (Vec::new(), Vec::new());
        for day in -15..=span + 15 {
            let date = self.config.epoch_start + chrono::Duration::days(day);
            dates.push(date);
            levels.push(level_at(day as f64) + rng.sample(noise));
        }
        GaugeSeries::new(dates, levels)
    }

    /// 30 m DEM (three basin pixels per cell when the basin is at 10 m).
    fn make_dem(&self) -> Result<DemRaster> {
        let (w, h) = (self.config.width.div_ceil(DEM_FACTOR), self.config.height.div_ceil(DEM_FACTOR));
        let cell = self.config.pixel_size_m * DEM_FACTOR as f64;
        let grid = GridRef::new(self.grid.origin_x, self.grid.origin_y, cell, cell, w, h, self.grid.crs_tag.clone())?;
        let mut rng = stream(self.config.seed, 2, 0);
        let tan = MOUNTAIN_SLOPE_DEG.to_radians().tan();
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                // Centre of the cell in basin pixel units.
                let (bx, by) = ((x as f64 + 0.5) * DEM_FACTOR as f64, (y as f64 + 0.5) * DEM_FACTOR as f64);
                let mut z = 40.0 + 0.002 * bx * self.config.pixel_size_m + 0.3 * (rng.random::<f64>() - 0.5);
                if let Some((cx, cy, r)) = self.mountain {
                    let d = ((bx - cx).powi(2) + (by - cy).powi(2)).sqrt();
                    z += tan * (r * 1.15 - d).max(0.0) * self.config.pixel_size_m;
                }
                data.push(z as f32);
            }
        }
        Raster::new(grid, 1, DEM_NODATA, data)
    }

    fn make_classes(&self) -> Raster<u8> {
        let (w, h) = (self.config.width, self.config.height);
        let high = self.half_width(MEAN_LEVEL_M + 5.0);
        let mut data = alloc::vec![3u8; w * h];
        for y in 0..h {
            let (yc, c) = (y as f64 + 0.5, self.centerline(y as f64 + 0.5));
            for x in 0..w {
                let xc = x as f64 + 0.5;
                let d = (xc - c).abs();
                data[y * w + x] = if self.in_lake(xc, yc) {
                    4
                } else if d < high {
                    1
                } else if d < 3.0 * high {
                    2
                } else if self.mountain.is_some_and(|(cx, cy, r)| (xc - cx).powi(2) + (yc - cy).powi(2) < r * r) {
                    5
                } else {
                    3
                };
            }
        }
        Raster::new(self.grid.clone(), 1, 0, data).expect("grid-sized classes")
    }

    pub fn tile_count(&self) -> usize {
        self.config.width.div_ceil(self.config.qa_tile) * self.config.height.div_ceil(self.config.qa_tile)
    }

    fn tile_bounds(&self, id: usize) -> (usize, usize, usize, usize) {
        let t = self.config.qa_tile;
        let cols = self.config.width.div_ceil(t);
        let (x0, y0) = ((id % cols) * t, (id / cols) * t);
        (x0, y0, t.min(self.config.width - x0), t.min(self.config.height - y0))
    }

    /// Tiles the river crosses with a large share of the tile.
    pub fn river_tiles(&self) -> Vec<usize> {
        let hw = self.half_width(MEAN_LEVEL_M - 5.0);
        (0..self.tile_count())
            .filter(|&id| {
                let (x0, y0, w, h) = self.tile_bounds(id);
                let cells = (y0..y0 + h)
                    .map(|y| {
                        let c = self.centerline(y as f64 + 0.5);
                        let (lo, hi) = ((c - hw).max(x0 as f64), (c + hw).min((x0 + w) as f64));
                        (hi - lo).max(0.0)
                    })
                    .sum::<f64>();
                cells > 0.08 * (w * h) as f64
            })
            .collect()
    }

    /// Tiles holding a lake and no river: their true water count never changes.
    pub fn constant_tiles(&self) -> Vec<usize> {
        let first = &self.truth[0];
        (0..self.tile_count())
            .filter(|&id| {
                let (x0, y0, w, h) = self.tile_bounds(id);
                let count = |m: &WaterMask| {
                    (y0..y0 + h).flat_map(|y| (x0..x0 + w).map(move |x| (x, y))).filter(|&(x, y)| m.get(0, x, y) == mask::WATER).count()
                };
                let c0 = count(first);
                c0 > 0 && self.truth.iter().all(|m| count(m) == c0)
            })
            .collect()
    }

    fn tile_fully_observed(&self, id: usize, index: usize) -> bool {
        let (x0, _, w, _) = self.tile_bounds(id);
        let present: Vec<&Orbit> = self.orbits.iter().zip(&self.missing[index]).filter(|(_, &m)| !m).map(|(o, _)| o).collect();
        (x0..x0 + w).all(|x| present.iter().any(|o| x >= o.x0 + o.left_nodata && x < o.x1))
    }

    fn place_clouds(&self) -> Vec<CloudArtifact> {
        let mut rng = stream(self.config.seed, 3, 0);
        let mut out = Vec::new();
        for id in self.river_tiles() {
            let mut last: Option<usize> = None;
            let mut placed = 0;
            for index in 1..self.config.n_dates {
                let roll = rng.random::<f64>();
                if placed >= 3 || last.is_some_and(|l| l + 1 >= index) || !self.tile_fully_observed(id, index) {
                    continue;
                }
                if roll < self.config.cloud_rate {
                    out.push(CloudArtifact { tile_id: id, index, date: self.dates[index] });
                    last = Some(index);
                    placed += 1;
                }
            }
        }
        out.sort_by_key(|a| (a.index, a.tile_id));
        out
    }

    fn cloud_gain(&self, index: usize, x: usize, y: usize) -> f64 {
        for a in self.artifacts.iter().filter(|a| a.index == index) {
            let (x0, y0, w, h) = self.tile_bounds(a.tile_id);
            if x < x0 || x >= x0 + w || y < y0 || y >= y0 + h {
                continue;
            }
            let cy = y0 as f64 + h as f64 / 2.0;
            let cx = self.centerline(cy).clamp(x0 as f64, (x0 + w) as f64);
            let r = 0.45 * self.config.qa_tile as f64;
            if (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2) < r * r {
                return CLOUD_GAIN_DB;
            }
        }
        0.0
    }

    /// Full-basin dB bands for one date, speckled from the given stream.
    fn render_db(&self, index: usize, stream_id: u64, clouds: bool) -> (Vec<f64>, Vec<f64>) {
        let mut rng = stream(self.config.seed, 100 + index as u64, stream_id);
        let noise = Normal::new(0.0, self.config.speckle_db.max(1e-12)).expect("finite speckle");
        let truth = &self.truth[index];
        let (w, h) = (self.config.width, self.config.height);
        let (mut vh, mut vv) = (Vec::with_capacity(w * h), Vec::with_capacity(w * h));
        for y in 0..h {
            for x in 0..w {
                let (mut a, mut b) = if truth.get(0, x, y) == mask::WATER {
                    WATER_DB
                } else if self.in_shadow(x as f64 + 0.5, y as f64 + 0.5) {
                    SHADOW_DB
                } else {
                    LAND_DB
                };
                if clouds {
                    let g = self.cloud_gain(index, x, y);
                    a += g;
                    b += g;
                }
                let (na, nb): (f64, f64) = (rng.sample(noise), rng.sample(noise));
                vh.push(a + if self.config.speckle_db > 0.0 { na } else { 0.0 });
                vv.push(b + if self.config.speckle_db > 0.0 { nb } else { 0.0 });
            }
        }
        (vh, vv)
    }

    /// Cloud-free full-basin image (used for training pairs).
    pub fn clean_image(&self, index: usize) -> BackscatterRaster {
        let (vh, vv) = self.render_db(index, 9, false);
        quantize_scene(self.grid.clone(), &vh, &vv).expect("grid-sized bands")
    }

    /// Full-basin image as the sensor would see it, clouds included.
    pub fn observed_image(&self, index: usize) -> BackscatterRaster {
        let (vh, vv) = self.render_db(index, 8, true);
        quantize_scene(self.grid.clone(), &vh, &vv).expect("grid-sized bands")
    }

    /// All acquisitions of one window (missing orbits are skipped).
    pub fn scenes_at(&self, index: usize) -> Vec<SynthScene> {
        let mut out = Vec::new();
        for (k, orbit) in self.orbits.iter().enumerate() {
            if self.missing[index][k] {
                continue;
            }
            let (vh, vv) = self.render_db(index, k as u64 + 1, true);
            let full = quantize_scene(self.grid.clone(), &vh, &vv).expect("grid-sized bands");
            let mut image = crop(&full, orbit.x0, 0, orbit.x1 - orbit.x0, self.config.height).expect("orbit inside basin");
            for y in 0..image.height() {
                for x in 0..orbit.left_nodata {
                    image.set(0, x, y, 0);
                    image.set(1, x, y, 0);
                }
            }
            out.push(SynthScene {
                scene_id: format!("S{index:03}{}", orbit.id),
                orbit_id: orbit.id.into(),
                date: self.dates[index],
                index,
                image,
            });
        }
        out
    }

    pub fn scenes(&self) -> Vec<SynthScene> {
        (0..self.config.n_dates).flat_map(|i| self.scenes_at(i)).collect()
    }

    /// Training pairs from cloud-free images: every `val_every`-th date goes
    /// to validation, the rest to training.
    pub fn training_pairs(&self, crop_size: usize, tile: usize, val_every: usize) -> Result<Vec<SamplePair>> {
        let mut out = Vec::new();
        for i in 0..self.config.n_dates {
            let split = if val_every > 0 && i % val_every == val_every - 1 { Split::Validation } else { Split::Training };
            let id = format!("date{i:03}");
            out.extend(prepare_pairs(&self.clean_image(i), &self.truth[i], crop_size, tile, &id, split, Some(self.dates[i]))?);
        }
        Ok(out)
    }

    /// Truth water pixel counts per tile and date, `[tile][date]`.
    pub fn truth_tile_counts(&self) -> Vec<Vec<u64>> {
        (0..self.tile_count())
            .map(|id| {
                let (x0, y0, w, h) = self.tile_bounds(id);
                self.truth
                    .iter()
                    .map(|m| (y0..y0 + h).map(|y| (x0..x0 + w).filter(|&x| m.get(0, x, y) == mask::WATER).count() as u64).sum())
                    .collect()
            })
            .collect()
    }
}

/// Threshold on the VH band: codes strictly below `max_code` are water.
pub fn naive_water(image: &BackscatterRaster, max_code: u8) -> WaterMask {
    let data = image
        .band(0)
        .iter()
        .map(|&v| if v == 0 { mask::NODATA } else { u8::from(v < max_code) })
        .collect();
    Raster::new(image.grid().clone(), 1, mask::NODATA, data).expect("grid-sized mask")
}
