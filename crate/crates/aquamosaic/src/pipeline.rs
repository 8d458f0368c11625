//! Pipeline stages over files: shade, train, predict, qa, stats and compare.
//!
//! Every stage reads its inputs from disk and writes its outputs atomically,
//! so `run` can skip a stage whose outputs already exist. Progress goes to
//! stderr as `stage key=value ...` lines.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::Instant;

use aquamosaic_core::metrics::{self, area_series, confusion, crosstab, prf};
use aquamosaic_core::mosaic::{self, Cadence, MosaicEntry, MosaicSeries, Observation};
use aquamosaic_core::qa::{self, AnomalyParams, CorrectionMode, TileGrid};
use aquamosaic_core::raster::mask;
use aquamosaic_core::shade::{self, ShadeParams};
use aquamosaic_core::tiling::{crop, project_nearest, resample_mask, ResampleRule};
use aquamosaic_core::train::{self, prepare_pairs, SamplePair, Split, TrainConfig, TrainOutcome};
use aquamosaic_core::unet::{self, Gradients, Tensor, UNet, UNetConfig};
use aquamosaic_core::{GridRef, NaiveDate, Raster, ShadeMask, WaterMask};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::format::{i32_to_f32, read_f32, read_u8, write_raster};
use crate::io;
use crate::weights::{load_weights, save_weights};

/// Emit one `stage key=value ...` record on stderr.
pub fn log(stage: &str, fields: &[(&str, &dyn Display)]) {
    let mut line = String::from(stage);
    for (k, v) in fields {
        line.push_str(&format!(" {k}={v}"));
    }
    eprintln!("{line}");
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

fn ms(t: Instant) -> u128 {
    t.elapsed().as_millis()
}

// ---------------------------------------------------------------- shade

pub fn run_shade(dem: &Path, keep_override: Option<&Path>, params: &ShadeParams, out: &Path) -> Result<ShadeMask> {
    let t = Instant::now();
    let dem = read_f32(dem)?;
    let keep = keep_override.map(read_u8).transpose()?;
    let mask = shade::build_shade_mask(&dem, params, keep.as_ref())?;
    write_raster(&mask, out)?;
    log("shade", &[("excluded_px", &mask.water_count()), ("out", &out.display()), ("elapsed_ms", &ms(t))]);
    Ok(mask)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub image: PathBuf,
    pub mask: PathBuf,
    pub source_id: String,
    pub split: String,
    pub date: Option<NaiveDate>,
}

pub fn write_pairs_table(path: &Path, rows: &[PairRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    for r in rows {
        wr.serialize(r).map_err(|e| Error::Table { path: path.into(), message: e.to_string() })?;
    }
    let bytes = wr.into_inner().map_err(|e| Error::Table { path: path.into(), message: e.to_string() })?;
    io::write_atomic(path, &bytes)
}

/// Load the pairs table and cut every image/mask pair into training samples.
pub fn load_pairs(table: &Path, crop_px: usize, tile_px: usize) -> Result<Vec<SamplePair>> {
    let base = table.parent().unwrap_or(Path::new(""));
    let table_err = |m: String| Error::Table { path: table.into(), message: m };
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(table).map_err(|e| table_err(e.to_string()))?;
    let mut out = Vec::new();
    for row in rd.deserialize::<PairRow>() {
        let row = row.map_err(|e| table_err(e.to_string()))?;
        let split = match row.split.as_str() {
            "training" => Split::Training,
            "validation" => Split::Validation,
            other => return Err(table_err(format!("unknown split `{other}`"))),
        };
        let image = read_u8(&base.join(&row.image))?;
        let target = read_u8(&base.join(&row.mask))?;
        out.extend(prepare_pairs(&image, &target, crop_px, tile_px, &row.source_id, split, row.date)?);
    }
    Ok(out)
}

/// Batch gradient with the forward and backward passes of each sample spread
/// over `pool`. Per-sample gradients are summed in sample order, so the result
/// does not depend on the worker count.
fn pooled_gradient(pool: &rayon::ThreadPool) -> impl FnMut(&UNet<f32>, &[Tensor<f32>], &[Tensor<f32>]) -> aquamosaic_core::Result<(f32, Gradients<f32>)> + '_ {
    move |model, xs, ts| {
        pool.install(|| {
            let traces = xs.par_iter().map(|x| model.trace_one(x)).collect::<aquamosaic_core::Result<Vec<_>>>()?;
            let (loss, dprob) = unet::batch_loss_grad(&traces, ts)?;
            let per: Vec<Gradients<f32>> = traces.par_iter().zip(&dprob).map(|(tr, d)| model.backward_one(tr, d)).collect();
            let mut iter = per.into_iter();
            let mut grads = iter.next().expect("non-empty batch");
            for g in iter {
                unet::model::add_gradients(&mut grads, &g);
            }
            Ok((loss, grads))
        })
    }
}

pub fn run_train(pairs: &[SamplePair], model: UNetConfig, config: &TrainConfig, workers: usize, weights_out: &Path, history_out: &Path) -> Result<TrainOutcome> {
    let t = Instant::now();
    let n_train = pairs.iter().filter(|p| p.split == Split::Training).count();
    log("train", &[("event", &"start"), ("training_pairs", &n_train), ("validation_pairs", &(pairs.len() - n_train)), ("epochs", &config.epochs)]);
    let pool = pool(workers)?;
    let outcome = train::train_custom(pairs, model, config, pooled_gradient(&pool), |r| {
        log(
            "train",
            &[
                ("epoch", &r.epoch),
                ("train_loss", &format!("{:.6}", r.train_loss)),
                ("val_loss", &format!("{:.6}", r.val_loss)),
                ("val_accuracy", &format!("{:.6}", r.val_accuracy)),
                ("val_f1", &format!("{:.6}", r.val_f1)),
                ("elapsed_ms", &ms(t)),
            ],
        )
    })?;
    save_weights(&outcome.model, weights_out)?;
    io::write_history(history_out, &outcome.history)?;
    log("train", &[("event", &"done"), ("best_epoch", &outcome.best_epoch), ("elapsed_ms", &ms(t))]);
    Ok(outcome)
}

// ---------------------------------------------------------------- mosaics on disk

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexRow {
    window: usize,
    date: NaiveDate,
    cadence_days: u32,
    epoch_start: NaiveDate,
    mosaic: String,
    provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SourceRow {
    source: i32,
    scene_id: String,
}

fn index_path(dir: &Path) -> PathBuf {
    dir.join("index.csv")
}

/// Write mosaics, provenance, occurrence and recurrence. The index is written
/// last and marks the folder complete.
pub fn write_series(dir: &Path, series: &MosaicSeries, sources: &[(i32, String)]) -> Result<()> {
    let mut rows = Vec::with_capacity(series.entries.len());
    for e in &series.entries {
        let (m, p) = (format!("mosaic_{}.aqmr", e.date), format!("provenance_{}.aqmr", e.date));
        write_raster(&e.mask, &dir.join(&m))?;
        write_raster(&i32_to_f32(&e.provenance), &dir.join(&p))?;
        rows.push(IndexRow {
            window: e.window,
            date: e.date,
            cadence_days: series.cadence.days,
            epoch_start: series.cadence.epoch_start,
            mosaic: m,
            provenance: p,
        });
    }
    write_raster(&mosaic::occurrence(series), &dir.join("occurrence.aqmr"))?;
    write_raster(&mosaic::recurrence(series), &dir.join("recurrence.aqmr"))?;
    write_csv(&dir.join("sources.csv"), sources.iter().map(|(s, id)| SourceRow { source: *s, scene_id: id.clone() }))?;
    write_csv(&index_path(dir), rows)
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let err = |e: csv::Error| Error::Table { path: path.into(), message: e.to_string() };
    let mut wr = csv::Writer::from_writer(Vec::new());
    for r in rows {
        wr.serialize(r).map_err(err)?;
    }
    let bytes = wr.into_inner().map_err(|e| Error::Table { path: path.into(), message: e.to_string() })?;
    io::write_atomic(path, &bytes)
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let err = |e: csv::Error| Error::Table { path: path.into(), message: e.to_string() };
    let mut rd = csv::Reader::from_path(path).map_err(err)?;
    rd.deserialize().map(|r| r.map_err(err)).collect()
}

pub fn series_complete(dir: &Path) -> bool {
    index_path(dir).exists()
}

pub fn read_series(dir: &Path) -> Result<(MosaicSeries, Vec<(i32, String)>)> {
    let rows: Vec<IndexRow> = read_csv(&index_path(dir))?;
    let first = rows.first().ok_or_else(|| Error::Table { path: index_path(dir), message: "no mosaics listed".into() })?;
    let cadence = Cadence::new(first.epoch_start, first.cadence_days)?;
    let mut entries = Vec::with_capacity(rows.len());
    for r in &rows {
        let m = read_u8(&dir.join(&r.mosaic))?;
        let p = read_f32(&dir.join(&r.provenance))?;
        let provenance = p.map(mosaic::NO_SOURCE, |v| v as i32);
        entries.push(MosaicEntry { window: r.window, date: r.date, mask: m, provenance });
    }
    let grid = entries[0].mask.grid().clone();
    if entries.iter().any(|e| e.mask.grid() != &grid) {
        return Err(Error::Table { path: index_path(dir), message: "mosaics are not on one grid".into() });
    }
    let sources_path = dir.join("sources.csv");
    let sources = if sources_path.exists() {
        read_csv::<SourceRow>(&sources_path)?.into_iter().map(|r| (r.source, r.scene_id)).collect()
    } else {
        Vec::new()
    };
    Ok((MosaicSeries { cadence, grid, entries }, sources))
}

// ---------------------------------------------------------------- predict

#[derive(Debug, Clone)]
pub struct PredictOptions {
    pub cadence_days: u32,
    pub epoch_start: NaiveDate,
    pub n_windows: Option<usize>,
    pub tile_px: usize,
    pub border_px: usize,
    pub workers: usize,
}

pub fn run_predict(manifest: &Path, weights: &Path, shade_mask: Option<&Path>, opts: &PredictOptions, out_dir: &Path) -> Result<MosaicSeries> {
    let t = Instant::now();
    let model = load_weights(weights, None)?;
    let rows = io::read_manifest(manifest)?;
    let cadence = Cadence::new(opts.epoch_start, opts.cadence_days)?;
    let shade_mask = shade_mask.map(read_u8).transpose()?;
    log("predict", &[("event", &"start"), ("scenes", &rows.len()), ("tile_px", &opts.tile_px), ("border_px", &opts.border_px)]);

    let pool = pool(opts.workers)?;
    let masks: Vec<WaterMask> = pool.install(|| {
        rows.par_iter()
            .map(|row| -> Result<WaterMask> {
                let scene = read_u8(&row.path)?;
                if scene.bands() != 2 {
                    return Err(Error::Table { path: row.path.clone(), message: format!("expected 2 bands, found {}", scene.bands()) });
                }
                let prob = mosaic::predict_scene(&scene, &model, opts.tile_px, opts.border_px)?;
                Ok(unet::threshold(&prob, 0.5))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut grid: GridRef = masks[0].grid().clone();
    for m in &masks[1..] {
        grid = grid.union(m.grid())?;
    }
    let observations = rows
        .iter()
        .zip(&masks)
        .enumerate()
        .map(|(i, (row, m))| Ok(Observation { source: i as i32, date: row.date, mask: project_nearest(m, &grid, mask::NODATA)? }))
        .collect::<Result<Vec<_>>>()?;
    let series = MosaicSeries::build(cadence, grid.clone(), &observations, opts.n_windows)?;
    let (mut series, leading) = mosaic::gap_fill(&series);
    if let Some(s) = &shade_mask {
        let projected = shade::project_mask(s, &grid)?;
        for e in &mut series.entries {
            e.mask = mosaic::apply_shade(&e.mask, &projected)?;
        }
    }
    let sources: Vec<(i32, String)> = rows.iter().enumerate().map(|(i, r)| (i as i32, r.scene_id.clone())).collect();
    write_series(out_dir, &series, &sources)?;
    log(
        "predict",
        &[("event", &"done"), ("windows", &series.entries.len()), ("leading_nodata_px", &leading), ("shade", &shade_mask.is_some()), ("elapsed_ms", &ms(t))],
    );
    Ok(series)
}

// ---------------------------------------------------------------- qa

#[derive(Debug, Clone)]
pub struct QaOptions {
    pub tile_px: usize,
    pub min_water_frac: f64,
    pub params: AnomalyParams,
    pub mode: CorrectionMode,
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub struct QaOutcome {
    pub river_tiles: Vec<usize>,
    pub audit: Vec<qa::AuditEntry>,
    pub series: MosaicSeries,
}

pub fn run_qa(mosaics_dir: &Path, opts: &QaOptions, out_dir: &Path) -> Result<QaOutcome> {
    let t = Instant::now();
    let (series, sources) = read_series(mosaics_dir)?;
    let tiles = TileGrid::new(series.grid.width, series.grid.height, opts.tile_px)?;
    let occurrence = mosaic::occurrence(&series);
    let min_water = tiles.min_water_for_fraction(opts.min_water_frac);
    let river = qa::select_river_tiles(&occurrence, &tiles, min_water)?;
    let pool = pool(opts.workers)?;
    let flags: Vec<qa::AnomalyFlag> = pool.install(|| {
        river
            .par_iter()
            .map(|&id| {
                let s = qa::tile_water_series(&series, &occurrence, &tiles, id)?;
                qa::detect_anomalies(&s, &opts.params)
            })
            .collect::<aquamosaic_core::Result<Vec<_>>>()
    })?
    .into_iter()
    .flatten()
    .collect();
    let (corrected, audit) = qa::correct(&series, &tiles, &flags, opts.mode)?;
    if opts.mode == CorrectionMode::ReportOnly {
        let thumbs = out_dir.join("thumbnails");
        for f in &flags {
            let (x0, y0, w, h) = tiles.bounds(f.tile_id);
            let crop = crop(&series.entries[f.index].mask, x0, y0, w, h)?;
            write_raster(&crop, &thumbs.join(format!("tile{:04}_{}.aqmr", f.tile_id, f.date)))?;
        }
    }
    io::write_audit(&out_dir.join("audit.csv"), &audit)?;
    write_series(out_dir, &corrected, &sources)?;
    let corrected_n = audit.iter().filter(|a| a.action == qa::Action::Corrected).count();
    log(
        "qa",
        &[("river_tiles", &river.len()), ("min_water_px", &min_water), ("flags", &flags.len()), ("corrected", &corrected_n), ("elapsed_ms", &ms(t))],
    );
    Ok(QaOutcome { river_tiles: river, audit, series: corrected })
}

// ---------------------------------------------------------------- stats

#[derive(Debug, Clone)]
pub struct StatsOutcome {
    pub areas: metrics::AreaSeries,
    pub correlation: Option<metrics::Correlation>,
}

pub fn run_stats(mosaics_dir: &Path, gauge: &Path, window_days: i64, out_dir: &Path) -> Result<StatsOutcome> {
    let t = Instant::now();
    let (series, _) = read_series(mosaics_dir)?;
    let gauge = io::read_gauge(gauge)?;
    let areas = area_series(&series.dates(), &series.masks())?;
    let stats = areas.stats().ok_or_else(|| Error::Table { path: mosaics_dir.into(), message: "empty series".into() })?;
    let correlation = metrics::correlate(&gauge, &areas, window_days);
    let aligned = metrics::align(&gauge, &areas, window_days);
    io::write_area_series(&out_dir.join("area_series.csv"), &areas)?;
    io::write_plot_data(&out_dir.join("plot_data.csv"), &aligned)?;
    let mut summary: Vec<(&str, String)> = vec![
        ("dates", areas.dates.len().to_string()),
        ("pixel_area_m2", format!("{}", areas.pixel_area_m2)),
        ("min_area_km2", format!("{:.6}", stats.min_km2)),
        ("min_date", stats.min_date.to_string()),
        ("max_area_km2", format!("{:.6}", stats.max_km2)),
        ("max_date", stats.max_date.to_string()),
        ("median_area_km2", format!("{:.6}", stats.median_km2)),
        ("min_over_max_percent", format!("{:.4}", stats.min_over_max_percent)),
    ];
    match &correlation {
        Ok(c) => {
            summary.push(("gauge_pearson_r", format!("{:.6}", c.r)));
            summary.push(("gauge_pairs", c.pairs.to_string()));
        }
        Err(e) => summary.push(("gauge_pearson_r", format!("undefined ({e})"))),
    }
    io::write_summary(&out_dir.join("summary.csv"), &summary)?;
    let r = correlation.as_ref().map(|c| format!("{:.4}", c.r)).unwrap_or_else(|_| "undefined".into());
    log("stats", &[("dates", &areas.dates.len()), ("pearson_r", &r), ("elapsed_ms", &ms(t))]);
    Ok(StatsOutcome { areas, correlation: correlation.ok() })
}

// ---------------------------------------------------------------- compare

/// Bring `pred` onto the reference grid: block-resample by the pixel-size
/// ratio, then nearest projection.
pub fn align_to_reference(pred: &WaterMask, reference: &GridRef, rule: ResampleRule) -> Result<WaterMask> {
    let ratio = reference.pixel_size_x / pred.grid().pixel_size_x;
    let factor = ratio.round();
    if factor < 1.0 || (ratio - factor).abs() > 1e-6 {
        return Err(Error::Config(format!("reference pixel size is not an integer multiple of the prediction's ({ratio})")));
    }
    let coarse = resample_mask(pred, factor as usize, rule)?;
    Ok(project_nearest(&coarse, reference, mask::NODATA)?)
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub counts: metrics::ConfusionCounts,
    pub prf: metrics::Prf,
}

pub fn run_compare(pred: &WaterMask, reference: &WaterMask, classes: Option<(&Raster<u8>, &[metrics::ClassLabel])>, rule: ResampleRule, out_dir: &Path) -> Result<CompareOutcome> {
    let t = Instant::now();
    let aligned = align_to_reference(pred, reference.grid(), rule)?;
    let counts = confusion(&aligned, reference)?;
    let scores = prf(&counts)?;
    io::write_metrics(&out_dir.join("metrics.csv"), &counts, &scores)?;
    if let Some((cls, labels)) = classes {
        let cls = project_nearest(cls, reference.grid(), 0)?;
        let pick = |f: &dyn Fn(u8, u8) -> bool| {
            let data = aligned.band(0).iter().zip(reference.band(0)).map(|(&p, &r)| u8::from(f(p, r))).collect();
            Raster::new(reference.grid().clone(), 1, mask::NODATA, data).expect("reference-sized selection")
        };
        let false_negative = pick(&|p, r| p == mask::DRY && r == mask::WATER);
        let model_water = pick(&|p, r| p == mask::WATER && r != mask::NODATA);
        io::write_crosstab(&out_dir.join("crosstab_false_negative.csv"), &crosstab(&false_negative, &cls, labels, Some(0))?)?;
        io::write_crosstab(&out_dir.join("crosstab_model_water.csv"), &crosstab(&model_water, &cls, labels, Some(0))?)?;
    }
    log(
        "compare",
        &[
            ("precision", &format!("{:.4}", scores.precision)),
            ("recall", &format!("{:.4}", scores.recall)),
            ("f1", &format!("{:.4}", scores.f1)),
            ("elapsed_ms", &ms(t)),
        ],
    );
    Ok(CompareOutcome { counts, prf: scores })
}

// ---------------------------------------------------------------- run

fn skip(stage: &str, outputs: &[PathBuf]) -> bool {
    let done = outputs.iter().all(|p| p.exists());
    if done {
        log(stage, &[("status", &"skipped"), ("reason", &"outputs present")]);
    }
    done
}

/// shade, train, predict, qa, stats, compare. Stages whose outputs exist are
/// skipped; the first failure aborts with the stage name.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<()> {
    let t = Instant::now();
    cfg.validate()?;
    log("run", &[("event", &"start"), ("output_dir", &cfg.output_dir.display()), ("seed", &cfg.seed)]);

    let shade_out = cfg.shade_path();
    if !skip("shade", &[shade_out.clone()]) {
        run_shade(&cfg.dem, cfg.shade_override.as_deref(), &cfg.shade, &shade_out).map_err(|e| e.in_stage("shade"))?;
    }

    let (weights, history) = (cfg.weights_path(), cfg.history_path());
    if !skip("train", &[weights.clone(), history.clone()]) {
        (|| {
            let pairs = load_pairs(&cfg.pairs, cfg.train_crop_px, cfg.model.input_size)?;
            run_train(&pairs, cfg.model, &cfg.train, cfg.workers, &weights, &history)
        })()
        .map_err(|e| e.in_stage("train"))?;
    }

    let mosaics = cfg.mosaics_dir();
    if !skip("predict", &[index_path(&mosaics)]) {
        let opts = PredictOptions {
            cadence_days: cfg.cadence_days,
            epoch_start: cfg.epoch_start,
            n_windows: cfg.n_windows,
            tile_px: cfg.tile_px,
            border_px: cfg.border_px,
            workers: cfg.workers,
        };
        run_predict(&cfg.manifest, &weights, Some(&shade_out), &opts, &mosaics).map_err(|e| e.in_stage("predict"))?;
    }

    let qa_dir = cfg.qa_dir();
    if !skip("qa", &[index_path(&qa_dir), qa_dir.join("audit.csv")]) {
        let opts = QaOptions { tile_px: cfg.qa_tile_px, min_water_frac: cfg.qa_min_water_frac, params: cfg.qa, mode: cfg.qa_mode, workers: cfg.workers };
        run_qa(&mosaics, &opts, &qa_dir).map_err(|e| e.in_stage("qa"))?;
    }

    let stats_dir = cfg.stats_dir();
    if !skip("stats", &[stats_dir.join("summary.csv")]) {
        run_stats(&qa_dir, &cfg.gauge, cfg.gauge_window_days, &stats_dir).map_err(|e| e.in_stage("stats"))?;
    }

    if let (Some(reference), Some(date)) = (&cfg.reference, cfg.reference_date) {
        let report = cfg.report_dir();
        if !skip("compare", &[report.join("metrics.csv")]) {
            (|| {
                let (series, _) = read_series(&qa_dir)?;
                let window = series.cadence.window_of(date).ok_or_else(|| Error::Config(format!("reference_date {date} precedes epoch_start")))?;
                let entry = series
                    .entries
                    .iter()
                    .find(|e| e.window == window)
                    .ok_or_else(|| Error::Config(format!("no mosaic covers reference_date {date}")))?;
                let reference = read_u8(reference)?;
                let classes = match (&cfg.classes, &cfg.class_labels) {
                    (Some(c), Some(l)) => Some((read_u8(c)?, io::read_labels(l)?)),
                    _ => None,
                };
                run_compare(&entry.mask, &reference, classes.as_ref().map(|(c, l)| (c, l.as_slice())), cfg.compare_rule, &report)
            })()
            .map_err(|e| e.in_stage("compare"))?;
        }
    }
    log("run", &[("event", &"done"), ("elapsed_ms", &ms(t))]);
    Ok(())
}
