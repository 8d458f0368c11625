//! CSV tables and small filesystem helpers.

use std::fs;
use std::path::{Path, PathBuf};

use aquamosaic_core::metrics::{AreaSeries, ClassCrossTab, ClassLabel, ConfusionCounts, GaugeSeries, Prf};
use aquamosaic_core::qa::AuditEntry;
use aquamosaic_core::train::EpochRecord;
use aquamosaic_core::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

/// Write through a sibling temporary file so readers never see partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn table_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Table { path: path.to_path_buf(), message: e.to_string() }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| table_err(path, e))?;
    rd.deserialize().map(|r| r.map_err(|e| table_err(path, e))).collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    for row in rows {
        wr.serialize(row).map_err(|e| table_err(path, e))?;
    }
    let bytes = wr.into_inner().map_err(|e| table_err(path, e))?;
    write_atomic(path, &bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub scene_id: String,
    pub orbit_id: String,
    pub date: NaiveDate,
    pub path: PathBuf,
}

/// Manifest rows with relative paths resolved against the manifest's folder.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut rows: Vec<ManifestRow> = read_rows(path)?;
    for r in &mut rows {
        if r.path.is_relative() {
            r.path = base.join(&r.path);
        }
    }
    if rows.is_empty() {
        return Err(table_err(path, "manifest has no scenes"));
    }
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    write_rows(path, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaugeRow {
    pub date: NaiveDate,
    pub level_m: f64,
}

pub fn read_gauge(path: &Path) -> Result<GaugeSeries> {
    let mut rows: Vec<GaugeRow> = read_rows(path)?;
    rows.sort_by_key(|r| r.date);
    GaugeSeries::new(rows.iter().map(|r| r.date).collect(), rows.iter().map(|r| r.level_m).collect()).map_err(|e| table_err(path, e))
}

pub fn write_gauge(path: &Path, g: &GaugeSeries) -> Result<()> {
    write_rows(path, g.dates.iter().zip(&g.levels_m).map(|(&date, &level_m)| GaugeRow { date, level_m }))
}

#[derive(Debug, Serialize)]
struct AuditRow<'a> {
    tile_id: usize,
    date: NaiveDate,
    score: String,
    action: &'a str,
    replaced_from_date: Option<NaiveDate>,
}

pub fn write_audit(path: &Path, entries: &[AuditEntry]) -> Result<()> {
    write_rows(
        path,
        entries.iter().map(|e| AuditRow {
            tile_id: e.tile_id,
            date: e.date,
            score: format!("{:.6}", e.score),
            action: e.action.as_str(),
            replaced_from_date: e.replaced_from,
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub tile_id: usize,
    pub date: NaiveDate,
    pub score: f64,
    pub action: String,
    pub replaced_from_date: Option<NaiveDate>,
}

pub fn read_audit(path: &Path) -> Result<Vec<AuditRecord>> {
    read_rows(path)
}

#[derive(Debug, Serialize, Deserialize)]
struct HistoryRow {
    epoch: usize,
    train_loss: f64,
    val_loss: f64,
    val_accuracy: f64,
    val_f1: f64,
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    write_rows(
        path,
        history.iter().map(|r| HistoryRow {
            epoch: r.epoch,
            train_loss: r.train_loss,
            val_loss: r.val_loss,
            val_accuracy: r.val_accuracy,
            val_f1: r.val_f1,
        }),
    )
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let rows: Vec<HistoryRow> = read_rows(path)?;
    Ok(rows
        .into_iter()
        .map(|r| EpochRecord { epoch: r.epoch, train_loss: r.train_loss, val_loss: r.val_loss, val_accuracy: r.val_accuracy, val_f1: r.val_f1 })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    code: u8,
    label_low_water: String,
    label_high_water: String,
}

pub fn read_labels(path: &Path) -> Result<Vec<ClassLabel>> {
    let rows: Vec<LabelRow> = read_rows(path)?;
    Ok(rows
        .into_iter()
        .map(|r| ClassLabel { code: r.code, label_low_water: r.label_low_water, label_high_water: r.label_high_water })
        .collect())
}

pub fn write_labels(path: &Path, labels: &[ClassLabel]) -> Result<()> {
    write_rows(
        path,
        labels.iter().map(|l| LabelRow { code: l.code, label_low_water: l.label_low_water.clone(), label_high_water: l.label_high_water.clone() }),
    )
}

#[derive(Debug, Serialize)]
struct MetricsRow {
    tp: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    tn: u64,
    precision: String,
    recall: String,
    f1: String,
    accuracy: String,
}

pub fn write_metrics(path: &Path, c: &ConfusionCounts, prf: &Prf) -> Result<()> {
    write_rows(
        path,
        [MetricsRow {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            tn: c.tn,
            precision: format!("{:.6}", prf.precision),
            recall: format!("{:.6}", prf.recall),
            f1: format!("{:.6}", prf.f1),
            accuracy: format!("{:.6}", c.accuracy()),
        }],
    )
}

#[derive(Debug, Serialize)]
struct CrossTabOut<'a> {
    code: u8,
    label_low_water: &'a str,
    label_high_water: &'a str,
    count: u64,
    percent: String,
}

pub fn write_crosstab(path: &Path, tab: &ClassCrossTab) -> Result<()> {
    write_rows(
        path,
        tab.rows.iter().map(|r| CrossTabOut {
            code: r.code,
            label_low_water: &r.label_low_water,
            label_high_water: &r.label_high_water,
            count: r.count,
            percent: format!("{:.3}", r.percent),
        }),
    )
}

#[derive(Debug, Serialize)]
struct AreaRow {
    date: NaiveDate,
    water_pixels: u64,
    area_km2: String,
}

pub fn write_area_series(path: &Path, s: &AreaSeries) -> Result<()> {
    write_rows(
        path,
        s.dates.iter().zip(&s.water_pixels).zip(&s.areas_km2).map(|((&date, &p), &a)| AreaRow { date, water_pixels: p, area_km2: format!("{a:.6}") }),
    )
}

#[derive(Debug, Serialize)]
struct PlotRow {
    date: NaiveDate,
    level_m: String,
    area_km2: String,
}

/// Aligned (date, level, area) triples for external plotting.
pub fn write_plot_data(path: &Path, rows: &[(NaiveDate, f64, f64)]) -> Result<()> {
    write_rows(
        path,
        rows.iter().map(|&(date, l, a)| PlotRow { date, level_m: format!("{l:.4}"), area_km2: format!("{a:.6}") }),
    )
}

/// `key,value` summary table.
pub fn write_summary(path: &Path, rows: &[(&str, String)]) -> Result<()> {
    #[derive(Serialize)]
    struct Kv<'a> {
        key: &'a str,
        value: &'a str,
    }
    write_rows(path, rows.iter().map(|(k, v)| Kv { key: k, value: v }))
}

pub fn read_summary(path: &Path) -> Result<Vec<(String, String)>> {
    #[derive(Deserialize)]
    struct Kv {
        key: String,
        value: String,
    }
    let rows: Vec<Kv> = read_rows(path)?;
    Ok(rows.into_iter().map(|r| (r.key, r.value)).collect())
}
