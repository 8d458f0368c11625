use std::path::PathBuf;
use std::process::ExitCode;

use aquamosaic::config::PipelineConfig;
use aquamosaic::demo::{write_demo, DemoOptions};
use aquamosaic::error::{Error, Result};
use aquamosaic::format::read_u8;
use aquamosaic::pipeline::{self, PredictOptions, QaOptions};
use aquamosaic_core::qa::{AnomalyParams, CorrectionMode};
use aquamosaic_core::shade::ShadeParams;
use aquamosaic_core::synth::BasinConfig;
use aquamosaic_core::tiling::ResampleRule;
use aquamosaic_core::train::TrainConfig;
use aquamosaic_core::unet::UNetConfig;
use aquamosaic_core::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aquamosaic", version, about = "Water-surface mosaics from SAR scenes")]
struct Cli {
    /// Worker threads for prediction, training and QA.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Seed for initialization, shuffling and augmentation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pipeline config file (`run`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Auto,
    ReportOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Majority,
    AnyWater,
}

#[derive(Subcommand)]
enum Command {
    /// Mountain-shade exclusion mask from a DEM.
    Shade {
        #[arg(long)]
        dem: PathBuf,
        /// Mask whose KEEP pixels are never excluded.
        #[arg(long)]
        keep_override: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        factor: usize,
        #[arg(long, default_value_t = 20.0)]
        threshold_deg: f64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train the U-Net on an image/mask pairs table.
    Train {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = TrainConfig::default().epochs)]
        epochs: usize,
        #[arg(long, default_value_t = TrainConfig::default().batch_size)]
        batch: usize,
        #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
        lr: f64,
        #[arg(long, default_value_t = 384)]
        crop: usize,
        #[arg(long, default_value_t = UNetConfig::default().depth)]
        depth: usize,
        #[arg(long, default_value_t = UNetConfig::default().base_filters)]
        base_filters: usize,
        #[arg(long, default_value_t = UNetConfig::default().input_size)]
        input_px: usize,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        history: PathBuf,
    },
    /// Predict every manifest scene and composite the mosaic series.
    Predict {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        shade: Option<PathBuf>,
        #[arg(long, value_parser = parse_date)]
        epoch_start: NaiveDate,
        #[arg(long, default_value_t = 12)]
        cadence_days: u32,
        #[arg(long)]
        n_windows: Option<usize>,
        #[arg(long, default_value_t = 128)]
        tile: usize,
        #[arg(long, default_value_t = 16)]
        border: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Flag and correct cloud-artifact dates in a mosaic series.
    Qa {
        #[arg(long)]
        mosaics: PathBuf,
        #[arg(long, default_value_t = 64)]
        tile: usize,
        #[arg(long, default_value_t = 500_000.0 / 4096.0f64.powi(2))]
        min_water_frac: f64,
        #[arg(long, default_value_t = AnomalyParams::default().top_k)]
        top_k: usize,
        #[arg(long, value_enum, default_value = "auto")]
        mode: Mode,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Accuracy of one mosaic against a coarser reference map.
    Compare {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, requires = "labels")]
        classes: Option<PathBuf>,
        #[arg(long, requires = "classes")]
        labels: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "majority")]
        rule: Rule,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Water-area series, drought statistics and gauge correlation.
    Stats {
        #[arg(long)]
        mosaics: PathBuf,
        #[arg(long)]
        gauge: PathBuf,
        #[arg(long, default_value_t = 6)]
        window_days: i64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write the synthetic-basin demo workspace.
    Demo {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        dates: Option<usize>,
        #[arg(long)]
        train_dates: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Every stage from a config file, skipping stages whose outputs exist.
    Run,
}

fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn execute(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let workers = cli.workers;
    if workers == 0 {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    match cli.command {
        Command::Shade { dem, keep_override, factor, threshold_deg, out } => {
            pipeline::run_shade(&dem, keep_override.as_deref(), &ShadeParams { factor, threshold_deg }, &out)?;
        }
        Command::Train { pairs, epochs, batch, lr, crop, depth, base_filters, input_px, out, history } => {
            let model = UNetConfig { depth, base_filters, input_size: input_px, ..UNetConfig::default() };
            model.validate().map_err(|e| Error::Config(e.to_string()))?;
            let train = TrainConfig { epochs, batch_size: batch, learning_rate: lr, seed };
            train.validate().map_err(|e| Error::Config(e.to_string()))?;
            let samples = pipeline::load_pairs(&pairs, crop, input_px)?;
            pipeline::run_train(&samples, model, &train, workers, &out, &history)?;
        }
        Command::Predict { manifest, weights, shade, epoch_start, cadence_days, n_windows, tile, border, out } => {
            let opts = PredictOptions { cadence_days, epoch_start, n_windows, tile_px: tile, border_px: border, workers };
            pipeline::run_predict(&manifest, &weights, shade.as_deref(), &opts, &out)?;
        }
        Command::Qa { mosaics, tile, min_water_frac, top_k, mode, out } => {
            let mode = match mode {
                Mode::Auto => CorrectionMode::Auto,
                Mode::ReportOnly => CorrectionMode::ReportOnly,
            };
            let opts = QaOptions { tile_px: tile, min_water_frac, params: AnomalyParams { top_k, ..AnomalyParams::default() }, mode, workers };
            pipeline::run_qa(&mosaics, &opts, &out)?;
        }
        Command::Compare { pred, reference, classes, labels, rule, out } => {
            let rule = match rule {
                Rule::Majority => ResampleRule::Majority,
                Rule::AnyWater => ResampleRule::AnyWater,
            };
            let pred = read_u8(&pred)?;
            let reference = read_u8(&reference)?;
            let classes = match (classes, labels) {
                (Some(c), Some(l)) => Some((read_u8(&c)?, aquamosaic::io::read_labels(&l)?)),
                _ => None,
            };
            pipeline::run_compare(&pred, &reference, classes.as_ref().map(|(c, l)| (c, l.as_slice())), rule, &out)?;
        }
        Command::Stats { mosaics, gauge, window_days, out } => {
            pipeline::run_stats(&mosaics, &gauge, window_days, &out)?;
        }
        Command::Demo { out, dates, train_dates, epochs, lr } => {
            let mut opts = DemoOptions::default();
            let n = dates.unwrap_or(opts.basin.n_dates);
            opts.basin = BasinConfig { seed: cli.seed.unwrap_or(opts.basin.seed), n_dates: n, ..opts.basin };
            opts.reference_index = n / 2;
            opts.train_dates = train_dates.unwrap_or(opts.train_dates.min(n));
            opts.train_epochs = epochs.unwrap_or(opts.train_epochs);
            opts.train_learning_rate = lr.unwrap_or(opts.train_learning_rate);
            let cfg = write_demo(&out, &opts)?;
            println!("{}", cfg.display());
        }
        Command::Run => {
            let path = cli.config.ok_or_else(|| Error::Config("run needs --config <file>".into()))?;
            let mut cfg = PipelineConfig::load(&path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
                cfg.train.seed = s;
            }
            cfg.workers = workers;
            pipeline::run_pipeline(&cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
