//! Accuracy assessment and water-area analytics.

#[allow(unused_imports)] // unused when a dev-dependency links std
use num_traits::Float;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;

use crate::raster::mask;
use crate::{Error, Raster, Result, WaterMask};

/// Pixelwise confusion counts over pixels valid in both rasters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// Fraction of compared pixels classified correctly.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => (self.tp + self.tn) as f64 / n as f64,
        }
    }

    /// Counts with the roles of prediction and reference exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tp,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tn,
        }
    }

    /// Accumulate one pair of mask values. Nodata on either side is skipped.
    #[inline]
    pub fn record(&mut self, pred: u8, reference: u8) {
        match (pred, reference) {
            (mask::WATER, mask::WATER) => self.tp += 1,
            (mask::WATER, mask::DRY) => self.fp += 1,
            (mask::DRY, mask::WATER) => self.fn_ += 1,
            (mask::DRY, mask::DRY) => self.tn += 1,
            _ => {}
        }
    }
}

pub fn confusion(pred: &WaterMask, reference: &WaterMask) -> Result<ConfusionCounts> {
    if pred.width() != reference.width() || pred.height() != reference.height() {
        return Err(Error::GridMismatch("prediction and reference differ in size"));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &r) in pred.band(0).iter().zip(reference.band(0)) {
        c.record(p, r);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and their harmonic mean.
pub fn prf(c: &ConfusionCounts) -> Result<Prf> {
    if c.tp + c.fp == 0 {
        return Err(Error::UndefinedMetric("precision: tp + fp = 0"));
    }
    if c.tp + c.fn_ == 0 {
        return Err(Error::UndefinedMetric("recall: tp + fn = 0"));
    }
    let precision = c.tp as f64 / (c.tp + c.fp) as f64;
    let recall = c.tp as f64 / (c.tp + c.fn_) as f64;
    Ok(Prf {
        precision,
        recall,
        f1: f1_score(precision, recall),
    })
}

/// Harmonic mean; 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Like [`prf`] but undefined ratios count as 0, which is what training
/// histories want for degenerate epochs.
pub fn prf_or_zero(c: &ConfusionCounts) -> Prf {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    Prf {
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

/// One class of an integer-coded class raster, with its dual-season labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassLabel {
    pub code: u8,
    pub label_low_water: String,
    pub label_high_water: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossTabRow {
    pub code: u8,
    pub label_low_water: String,
    pub label_high_water: String,
    pub count: u64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassCrossTab {
    pub rows: Vec<CrossTabRow>,
    pub total: u64,
}

/// Distribution of the selected pixels (`selection == 1`) over classes.
///
/// Rows follow `labels`; codes present in the raster but missing from `labels`
/// are appended in ascending order with empty labels. `class_nodata` pixels are
/// not counted.
pub fn crosstab(
    selection: &WaterMask,
    classes: &Raster<u8>,
    labels: &[ClassLabel],
    class_nodata: Option<u8>,
) -> Result<ClassCrossTab> {
    if selection.width() != classes.width() || selection.height() != classes.height() {
        return Err(Error::GridMismatch("selection and class raster differ in size"));
    }
    let mut counts = [0u64; 256];
    for (&s, &c) in selection.band(0).iter().zip(classes.band(0)) {
        if s == mask::WATER && Some(c) != class_nodata {
            counts[c as usize] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let pct = |n: u64| if total == 0 { 0.0 } else { 100.0 * n as f64 / total as f64 };
    let mut rows: Vec<CrossTabRow> = labels
        .iter()
        .map(|l| CrossTabRow {
            code: l.code,
            label_low_water: l.label_low_water.clone(),
            label_high_water: l.label_high_water.clone(),
            count: counts[l.code as usize],
            percent: pct(counts[l.code as usize]),
        })
        .collect();
    for code in 0..=255u8 {
        let n = counts[code as usize];
        if n > 0 && !labels.iter().any(|l| l.code == code) {
            rows.push(CrossTabRow {
                code,
                label_low_water: String::new(),
                label_high_water: String::new(),
                count: n,
                percent: pct(n),
            });
        }
    }
    Ok(ClassCrossTab { rows, total })
}

/// Water area in km² for `count` pixels of `pixel_area_m2`.
pub fn pixels_to_km2(count: u64, pixel_area_m2: f64) -> f64 {
    count as f64 * pixel_area_m2 / 1e6
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaSeries {
    pub dates: Vec<NaiveDate>,
    pub water_pixels: Vec<u64>,
    pub areas_km2: Vec<f64>,
    pub pixel_area_m2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaStats {
    pub min_km2: f64,
    pub min_date: NaiveDate,
    pub max_km2: f64,
    pub max_date: NaiveDate,
    pub median_km2: f64,
    /// `100 * min / max`.
    pub min_over_max_percent: f64,
}

/// Per-date water area of a (shade-applied) mask series.
pub fn area_series(dates: &[NaiveDate], masks: &[WaterMask]) -> Result<AreaSeries> {
    if dates.len() != masks.len() {
        return Err(Error::ShapeMismatch("one date per mask".into()));
    }
    let mut order: Vec<usize> = (0..dates.len()).collect();
    order.sort_by_key(|&i| dates[i]);
    if order.windows(2).any(|w| dates[w[0]] == dates[w[1]]) {
        return Err(Error::DatesNotIncreasing);
    }
    let pixel_area_m2 = masks.first().map_or(0.0, |m| m.grid().pixel_area());
    let water_pixels: Vec<u64> = order.iter().map(|&i| masks[i].water_count() as u64).collect();
    Ok(AreaSeries {
        dates: order.iter().map(|&i| dates[i]).collect(),
        areas_km2: water_pixels.iter().map(|&n| pixels_to_km2(n, pixel_area_m2)).collect(),
        water_pixels,
        pixel_area_m2,
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

impl AreaSeries {
    pub fn stats(&self) -> Option<AreaStats> {
        let (imin, imax) = extrema(&self.areas_km2)?;
        let (min_km2, max_km2) = (self.areas_km2[imin], self.areas_km2[imax]);
        Some(AreaStats {
            min_km2,
            min_date: self.dates[imin],
            max_km2,
            max_date: self.dates[imax],
            median_km2: median(&self.areas_km2)?,
            min_over_max_percent: if max_km2 > 0.0 { 100.0 * min_km2 / max_km2 } else { 0.0 },
        })
    }
}

fn extrema(v: &[f64]) -> Option<(usize, usize)> {
    if v.is_empty() {
        return None;
    }
    let (mut lo, mut hi) = (0, 0);
    for (i, &x) in v.iter().enumerate() {
        if x < v[lo] {
            lo = i;
        }
        if x > v[hi] {
            hi = i;
        }
    }
    Some((lo, hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaugeSeries {
    pub dates: Vec<NaiveDate>,
    pub levels_m: Vec<f64>,
}

impl GaugeSeries {
    pub fn new(dates: Vec<NaiveDate>, levels_m: Vec<f64>) -> Result<Self> {
        if dates.len() != levels_m.len() {
            return Err(Error::ShapeMismatch("one level per gauge date".into()));
        }
        if dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::DatesNotIncreasing);
        }
        Ok(Self { dates, levels_m })
    }

    /// Reading closest to `date` within `max_days`; ties go to the earlier day.
    pub fn nearest(&self, date: NaiveDate, max_days: i64) -> Option<f64> {
        let idx = self.dates.partition_point(|d| *d < date);
        let mut best: Option<(i64, usize)> = None;
        for i in [idx.wrapping_sub(1), idx] {
            if let Some(d) = self.dates.get(i) {
                let gap = (*d - date).num_days().abs();
                if gap <= max_days && best.is_none_or(|(g, _)| gap < g) {
                    best = Some((gap, i));
                }
            }
        }
        best.map(|(_, i)| self.levels_m[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub pairs: usize,
}

/// Default gauge alignment window: half the 12-day cadence.
pub const GAUGE_WINDOW_DAYS: i64 = 6;

/// Aligned `(level, area)` pairs: each area date takes the nearest gauge
/// reading within `max_days`, dates without one are dropped.
pub fn align(gauge: &GaugeSeries, areas: &AreaSeries, max_days: i64) -> Vec<(NaiveDate, f64, f64)> {
    areas
        .dates
        .iter()
        .zip(&areas.areas_km2)
        .filter_map(|(&d, &a)| gauge.nearest(d, max_days).map(|l| (d, l, a)))
        .collect()
}

/// Pearson correlation between gauge level and water area.
pub fn correlate(gauge: &GaugeSeries, areas: &AreaSeries, max_days: i64) -> Result<Correlation> {
    let pairs = align(gauge, areas, max_days);
    if pairs.len() < 3 {
        return Err(Error::TooFewPairs(pairs.len()));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.2).collect();
    Ok(Correlation {
        r: pearson(&xs, &ys).ok_or(Error::UndefinedMetric("correlation: constant series"))?,
        pairs: pairs.len(),
    })
}

/// Two-pass Pearson coefficient; `None` when either series is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs[..n].iter().zip(&ys[..n]) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
