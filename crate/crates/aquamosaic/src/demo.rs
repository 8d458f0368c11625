//! Writes a synthetic basin to disk as a ready-to-run pipeline workspace.

use std::path::{Path, PathBuf};

use aquamosaic_core::synth::{Basin, BasinConfig};
use aquamosaic_core::tiling::{resample_mask, ResampleRule};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::write_raster;
use crate::io::{self, ManifestRow};
use crate::pipeline::{write_pairs_table, PairRow};

#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub basin: BasinConfig,
    /// Cloud-free dates written as training pairs; every fourth goes to validation.
    pub train_dates: usize,
    pub train_epochs: usize,
    pub train_batch: usize,
    pub train_learning_rate: f64,
    /// Date index whose truth becomes the 30 m reference map.
    pub reference_index: usize,
}

impl Default for DemoOptions {
    fn default() -> Self {
        let basin = BasinConfig::default();
        Self {
            reference_index: basin.n_dates / 2,
            basin,
            train_dates: 16,
            train_epochs: 20,
            train_batch: 32,
            train_learning_rate: 3e-4,
        }
    }
}

#[derive(Serialize)]
struct ArtifactRow {
    tile_id: usize,
    index: usize,
    date: aquamosaic_core::NaiveDate,
}

/// Write scenes, manifest, training pairs, DEM, gauge, reference, classes and
/// `demo.cfg` under `dir`. Returns the config path.
pub fn write_demo(dir: &Path, opts: &DemoOptions) -> Result<PathBuf> {
    let cfg = &opts.basin;
    if opts.train_dates == 0 || opts.train_dates > cfg.n_dates || opts.reference_index >= cfg.n_dates {
        return Err(Error::Config(format!(
            "demo needs 1..={} training dates and a reference index below {}",
            cfg.n_dates, cfg.n_dates
        )));
    }
    let basin = Basin::generate(cfg)?;

    let mut manifest = Vec::new();
    for s in basin.scenes() {
        let rel = PathBuf::from("scenes").join(format!("{}.aqmr", s.scene_id));
        write_raster(&s.image, &dir.join(&rel))?;
        manifest.push(ManifestRow { scene_id: s.scene_id, orbit_id: s.orbit_id, date: s.date, path: rel });
    }
    io::write_manifest(&dir.join("manifest.csv"), &manifest)?;

    let mut pairs = Vec::new();
    for i in 0..opts.train_dates {
        let (image, mask) = (PathBuf::from(format!("image_{i:03}.aqmr")), PathBuf::from(format!("mask_{i:03}.aqmr")));
        write_raster(&basin.clean_image(i), &dir.join("train").join(&image))?;
        write_raster(&basin.truth[i], &dir.join("train").join(&mask))?;
        let split = if i % 4 == 3 { "validation" } else { "training" };
        pairs.push(PairRow { image, mask, source_id: format!("date{i:03}"), split: split.into(), date: Some(basin.dates[i]) });
    }
    write_pairs_table(&dir.join("train").join("pairs.csv"), &pairs)?;

    write_raster(&basin.dem, &dir.join("dem.aqmr"))?;
    io::write_gauge(&dir.join("gauge.csv"), &basin.gauge)?;
    let factor = (basin.dem.grid().pixel_size_x / basin.grid.pixel_size_x).round() as usize;
    let reference = resample_mask(&basin.truth[opts.reference_index], factor, ResampleRule::Majority)?;
    write_raster(&reference, &dir.join("reference.aqmr"))?;
    write_raster(&basin.classes, &dir.join("classes.aqmr"))?;
    io::write_labels(&dir.join("class_labels.csv"), &basin.class_labels)?;

    let mut wr = csv::Writer::from_writer(Vec::new());
    for a in &basin.artifacts {
        wr.serialize(ArtifactRow { tile_id: a.tile_id, index: a.index, date: a.date })
            .map_err(|e| Error::Table { path: dir.join("artifacts.csv"), message: e.to_string() })?;
    }
    let bytes = wr.into_inner().map_err(|e| Error::Table { path: dir.join("artifacts.csv"), message: e.to_string() })?;
    io::write_atomic(&dir.join("artifacts.csv"), &bytes)?;

    let text = format!(
        "# Synthetic basin demo (seed {seed}).\n\
         manifest = manifest.csv\n\
         pairs = train/pairs.csv\n\
         dem = dem.aqmr\n\
         gauge = gauge.csv\n\
         reference = reference.aqmr\n\
         reference_date = {ref_date}\n\
         classes = classes.aqmr\n\
         class_labels = class_labels.csv\n\
         output_dir = out\n\
         \n\
         epoch_start = {epoch}\n\
         cadence_days = {cadence}\n\
         n_windows = {n}\n\
         tile_px = 128\n\
         border_px = 16\n\
         train_crop_px = {crop}\n\
         train_epochs = {epochs}\n\
         train_batch = {batch}\n\
         train_learning_rate = {lr}\n\
         qa_tile_px = {qa_tile}\n\
         seed = {seed}\n",
        seed = cfg.seed,
        ref_date = basin.dates[opts.reference_index],
        epoch = cfg.epoch_start,
        cadence = cfg.cadence_days,
        n = cfg.n_dates,
        crop = cfg.width.min(cfg.height) / 64 * 64,
        epochs = opts.train_epochs,
        batch = opts.train_batch,
        lr = opts.train_learning_rate,
        qa_tile = cfg.qa_tile,
    );
    let path = dir.join("demo.cfg");
    io::write_atomic(&path, text.as_bytes())?;
    Ok(path)
}
