//! Flat `key = value` pipeline configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Units are part of the
//! key name (`cadence_days`, `tile_px`). Relative paths resolve against the
//! folder holding the config file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use aquamosaic_core::qa::{AnomalyParams, CorrectionMode};
use aquamosaic_core::shade::ShadeParams;
use aquamosaic_core::tiling::ResampleRule;
use aquamosaic_core::train::TrainConfig;
use aquamosaic_core::unet::UNetConfig;
use aquamosaic_core::NaiveDate;

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub pairs: PathBuf,
    pub dem: PathBuf,
    pub shade_override: Option<PathBuf>,
    pub gauge: PathBuf,
    pub reference: Option<PathBuf>,
    pub reference_date: Option<NaiveDate>,
    pub classes: Option<PathBuf>,
    pub class_labels: Option<PathBuf>,
    pub output_dir: PathBuf,

    pub cadence_days: u32,
    pub epoch_start: NaiveDate,
    pub n_windows: Option<usize>,
    pub tile_px: usize,
    pub border_px: usize,
    pub shade: ShadeParams,
    pub model: UNetConfig,
    pub train: TrainConfig,
    pub train_crop_px: usize,
    pub qa_tile_px: usize,
    pub qa_min_water_frac: f64,
    pub qa: AnomalyParams,
    pub qa_mode: CorrectionMode,
    pub compare_rule: ResampleRule,
    pub gauge_window_days: i64,
    pub seed: u64,
    pub workers: usize,
}

impl PipelineConfig {
    pub fn weights_path(&self) -> PathBuf {
        self.output_dir.join("weights.aqmw")
    }

    pub fn history_path(&self) -> PathBuf {
        self.output_dir.join("history.csv")
    }

    pub fn shade_path(&self) -> PathBuf {
        self.output_dir.join("shade.aqmr")
    }

    pub fn mosaics_dir(&self) -> PathBuf {
        self.output_dir.join("mosaics")
    }

    pub fn qa_dir(&self) -> PathBuf {
        self.output_dir.join("qa")
    }

    pub fn stats_dir(&self) -> PathBuf {
        self.output_dir.join("stats")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.output_dir.join("report")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut kv = Entries::parse(text)?;
        let path = |kv: &mut Entries, key: &str| kv.take_str(key).map(|v| base.join(v));
        let required = |kv: &mut Entries, key: &str| path(kv, key).ok_or_else(|| Error::Config(format!("missing key `{key}`")));
        let defaults = UNetConfig::default();
        let train_defaults = TrainConfig::default();
        let qa_defaults = AnomalyParams::default();
        let shade_defaults = ShadeParams::default();
        let cfg = Self {
            manifest: required(&mut kv, "manifest")?,
            pairs: required(&mut kv, "pairs")?,
            dem: required(&mut kv, "dem")?,
            shade_override: path(&mut kv, "shade_override"),
            gauge: required(&mut kv, "gauge")?,
            reference: path(&mut kv, "reference"),
            reference_date: kv.take_opt("reference_date")?,
            classes: path(&mut kv, "classes"),
            class_labels: path(&mut kv, "class_labels"),
            output_dir: required(&mut kv, "output_dir")?,
            cadence_days: kv.take_or("cadence_days", 12)?,
            epoch_start: kv
                .take_opt("epoch_start")?
                .ok_or_else(|| Error::Config("missing key `epoch_start`".into()))?,
            n_windows: kv.take_opt("n_windows")?,
            tile_px: kv.take_or("tile_px", 128)?,
            border_px: kv.take_or("border_px", 16)?,
            shade: ShadeParams {
                factor: kv.take_or("shade_factor", shade_defaults.factor)?,
                threshold_deg: kv.take_or("shade_threshold_deg", shade_defaults.threshold_deg)?,
            },
            model: UNetConfig {
                in_channels: 2,
                out_channels: 1,
                depth: kv.take_or("model_depth", defaults.depth)?,
                base_filters: kv.take_or("model_base_filters", defaults.base_filters)?,
                input_size: kv.take_or("model_input_px", defaults.input_size)?,
            },
            train: TrainConfig {
                epochs: kv.take_or("train_epochs", train_defaults.epochs)?,
                batch_size: kv.take_or("train_batch", train_defaults.batch_size)?,
                learning_rate: kv.take_or("train_learning_rate", train_defaults.learning_rate)?,
                seed: 0,
            },
            train_crop_px: kv.take_or("train_crop_px", 384)?,
            qa_tile_px: kv.take_or("qa_tile_px", 64)?,
            qa_min_water_frac: kv.take_or("qa_min_water_frac", 500_000.0 / 4096.0f64.powi(2))?,
            qa: AnomalyParams {
                top_k: kv.take_or("qa_top_k", qa_defaults.top_k)?,
                min_dry_dates: kv.take_or("qa_min_dry_dates", qa_defaults.min_dry_dates)?,
                dry_fraction: kv.take_or("qa_dry_frac", qa_defaults.dry_fraction)?,
                min_score: kv.take_or("qa_min_score", qa_defaults.min_score)?,
                mad_factor: kv.take_or("qa_mad_factor", qa_defaults.mad_factor)?,
            },
            qa_mode: kv.take_or("qa_mode", Mode(CorrectionMode::Auto))?.0,
            compare_rule: kv.take_or("compare_rule", Rule(ResampleRule::Majority))?.0,
            gauge_window_days: kv.take_or("gauge_window_days", aquamosaic_core::metrics::GAUGE_WINDOW_DAYS)?,
            seed: kv.take_or("seed", 0)?,
            workers: kv.take_or("workers", 1)?,
        };
        kv.finish()?;
        let mut cfg = cfg;
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check every module precondition the pipeline depends on.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.cadence_days == 0 {
            return bad("cadence_days must be positive".into());
        }
        if self.tile_px <= 2 * self.border_px {
            return bad(format!("tile_px {} must exceed twice border_px {}", self.tile_px, self.border_px));
        }
        if self.tile_px % self.model.size_multiple() != 0 {
            return bad(format!("tile_px {} must be a multiple of {}", self.tile_px, self.model.size_multiple()));
        }
        if self.train_crop_px == 0 || self.train_crop_px % self.model.input_size != 0 {
            return bad(format!("train_crop_px {} must be a multiple of model_input_px {}", self.train_crop_px, self.model.input_size));
        }
        if self.shade.factor == 0 || !(0.0..90.0).contains(&self.shade.threshold_deg) {
            return bad("shade_factor must be >= 1 and shade_threshold_deg in [0, 90)".into());
        }
        if self.qa_tile_px == 0 || !(0.0..=1.0).contains(&self.qa_min_water_frac) {
            return bad("qa_tile_px must be positive and qa_min_water_frac in [0, 1]".into());
        }
        if self.qa.top_k == 0 || !(0.0..=1.0).contains(&self.qa.dry_fraction) || self.qa.min_score < 0.0 || self.qa.mad_factor < 0.0 {
            return bad("qa parameters out of range".into());
        }
        if self.gauge_window_days < 0 {
            return bad("gauge_window_days must be non-negative".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.reference.is_some() != self.reference_date.is_some() {
            return bad("reference and reference_date go together".into());
        }
        if self.classes.is_some() != self.class_labels.is_some() {
            return bad("classes and class_labels go together".into());
        }
        let mut seen = BTreeSet::new();
        let inputs = [Some(&self.manifest), Some(&self.pairs), Some(&self.dem), Some(&self.gauge), self.shade_override.as_ref(), self.reference.as_ref(), self.classes.as_ref(), self.class_labels.as_ref()];
        for p in inputs.into_iter().flatten().chain([&self.output_dir]) {
            if !seen.insert(p.clone()) {
                return bad(format!("path {} is used twice", p.display()));
            }
        }
        Ok(())
    }
}

struct Mode(CorrectionMode);

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Mode(CorrectionMode::Auto)),
            "report-only" => Ok(Mode(CorrectionMode::ReportOnly)),
            other => Err(format!("unknown mode `{other}` (auto | report-only)")),
        }
    }
}

struct Rule(ResampleRule);

impl FromStr for Rule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "majority" => Ok(Rule(ResampleRule::Majority)),
            "any-water" => Ok(Rule(ResampleRule::AnyWater)),
            other => Err(format!("unknown resample rule `{other}` (majority | any-water)")),
        }
    }
}

struct Entries(BTreeMap<String, String>);

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
        }
        Ok(Self(map))
    }

    fn take_str(&mut self, key: &str) -> Option<String> {
        self.0.remove(key).filter(|v| !v.is_empty())
    }

    fn take_opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.take_str(key)
            .map(|v| v.parse().map_err(|e| Error::Config(format!("`{key}`: {e}"))))
            .transpose()
    }

    fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take_opt(key)?.unwrap_or(default))
    }

    fn finish(self) -> Result<()> {
        match self.0.keys().next() {
            Some(k) => Err(Error::Config(format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}
