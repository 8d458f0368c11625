//! Acceptance suite: one pass/fail line per criterion.
//!
//! `cargo test --test acceptance` runs everything; criterion numbers given as
//! arguments (`cargo test --test acceptance -- 3 7`) select a subset.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use aquamosaic_core::metrics::{self, AreaSeries, ConfusionCounts};
use aquamosaic_core::mosaic::{self, Cadence, MosaicSeries, Observation};
use aquamosaic_core::qa::{self, Action, AnomalyParams, CorrectionMode, TileGrid};
use aquamosaic_core::quantize::{dequantize, quantize_db};
use aquamosaic_core::synth::{naive_water, Basin, BasinConfig};
use aquamosaic_core::train::{train_with, TrainConfig};
use aquamosaic_core::unet::UNetConfig;
use aquamosaic_core::NaiveDate;

#[path = "../../core/tests/support/mod.rs"]
mod support;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criteria() -> Vec<Criterion> {
    let secs = Duration::from_secs;
    vec![
        Criterion { id: 1, name: "F1 arithmetic", budget: secs(1), run: f1_arithmetic },
        Criterion { id: 2, name: "area arithmetic", budget: secs(1), run: area_arithmetic },
        Criterion { id: 3, name: "quantization sweep", budget: secs(1), run: quantization_sweep },
        Criterion { id: 4, name: "U-Net gradient check", budget: secs(120), run: gradient_check },
        Criterion { id: 5, name: "forward-pass oracle", budget: secs(30), run: forward_oracle },
        Criterion { id: 6, name: "training sanity", budget: secs(600), run: training_sanity },
        Criterion { id: 7, name: "mosaic algebra", budget: secs(60), run: mosaic_algebra },
        Criterion { id: 8, name: "shade mask oracles", budget: secs(60), run: shade_oracles },
        Criterion { id: 9, name: "QA filter", budget: secs(120), run: qa_filter },
        Criterion { id: 10, name: "end-to-end determinism", budget: secs(900), run: end_to_end_determinism },
        Criterion { id: 11, name: "gauge correlation", budget: secs(10), run: gauge_correlation },
    ]
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria().into_iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let t = Instant::now();
        let outcome = (c.run)();
        let elapsed = t.elapsed();
        let over = elapsed > c.budget;
        let (verdict, detail) = match outcome {
            Ok(d) if !over => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over budget of {:?}", c.budget)),
            Err(d) => ("FAIL", d),
        };
        failed += usize::from(verdict == "FAIL");
        println!("criterion {:>2} {:<24} {verdict} ({detail}) [{:.1}s]", c.id, c.name, elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

/// Counts with exactly the given precision and recall (in thousandths).
fn counts_for(precision_milli: u64, recall_milli: u64) -> ConfusionCounts {
    let tp = precision_milli * recall_milli;
    ConfusionCounts {
        tp,
        fp: 1000 * recall_milli - tp,
        fn_: 1000 * precision_milli - tp,
        tn: 0,
    }
}

fn f1_arithmetic() -> Outcome {
    let a = metrics::prf(&counts_for(935, 926)).map_err(|e| e.to_string())?;
    let b = metrics::prf(&counts_for(614, 836)).map_err(|e| e.to_string())?;
    let ok = (a.precision - 0.935).abs() < 1e-12
        && (a.recall - 0.926).abs() < 1e-12
        && (a.f1 - 0.930).abs() <= 0.0005
        && (b.f1 - 0.708).abs() <= 0.0005;
    check(ok, format!("F1 {:.4} and {:.4}", a.f1, b.f1))
}

fn area_arithmetic() -> Outcome {
    let km2 = metrics::pixels_to_km2(24_761_019, 30.0 * 30.0);
    let d = |m: u32| NaiveDate::from_ymd_opt(2022, m, 1).unwrap();
    let series = AreaSeries {
        dates: vec![d(5), d(10)],
        water_pixels: vec![0, 0],
        areas_km2: vec![14_036.3, 9_559.9],
        pixel_area_m2: 900.0,
    };
    let ratio = series.stats().ok_or("empty series")?.min_over_max_percent;
    check((km2 - 22_284.9).abs() <= 0.1 && (ratio - 68.1).abs() <= 0.05, format!("{km2:.2} km2, min/max {ratio:.3}%"))
}

fn quantization_sweep() -> Outcome {
    let (mut worst_trip, mut n) = (0.0f64, 0);
    for i in -12_000..=1_000 {
        let x = f64::from(i) / 100.0;
        let q = quantize_db(x).map_err(|e| e.to_string())?;
        let want = ((x.clamp(-49.0, 1.0) + 50.0) * 5.0).round();
        if f64::from(q) != want || q == 0 {
            return Err(format!("x = {x}: code {q}, formula {want}"));
        }
        if (-49.0..=1.0).contains(&x) {
            worst_trip = worst_trip.max((dequantize(q).map_err(|e| e.to_string())? - x).abs());
        }
        n += 1;
    }
    // Half a code is 0.1 dB; allow one rounding of the decimal grid.
    check(worst_trip <= 0.1 + 1e-9, format!("{n} values, worst round-trip {worst_trip:.4} dB"))
}

fn gradient_check() -> Outcome {
    let reports = support::unet::gradient_check(21);
    let mut parts = Vec::new();
    let mut ok = reports.len() == 3;
    for r in &reports {
        let sampled = r.checked == r.available.min(50) || r.checked + r.kinks == r.available;
        ok &= sampled && r.checked >= 5 && r.biases >= 1 && r.worst <= 1e-4;
        parts.push(format!("{} {}/{} err {:.1e}", r.kind, r.checked, r.available, r.worst));
    }
    check(ok, parts.join(", "))
}

fn forward_oracle() -> Outcome {
    let tiny = UNetConfig { depth: 1, base_filters: 2, input_size: 8, ..UNetConfig::default() };
    let worst = (0..5).map(|s| support::unet::forward_deviation(tiny, s, 8)).fold(0.0, f64::max);
    check(worst <= 1e-5, format!("max deviation {worst:.2e}"))
}

fn training_sanity() -> Outcome {
    let basin = Basin::generate(&BasinConfig { n_dates: 16, mountains: false, ..BasinConfig::default() }).map_err(|e| e.to_string())?;
    let pairs = basin.training_pairs(384, 64, 4).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { epochs: 20, batch_size: 32, learning_rate: 3e-4, seed: 0 };
    let out = train_with(&pairs, UNetConfig::default(), &cfg, |_| {}).map_err(|e| e.to_string())?;
    let best = out.history.iter().max_by(|a, b| a.val_f1.total_cmp(&b.val_f1)).ok_or("no epochs")?;
    let first = out.history.iter().find(|r| r.val_f1 >= 0.95).map(|r| r.epoch);
    check(
        first.is_some(),
        format!("best val F1 {:.4} at epoch {}, first >= 0.95 at epoch {}, {} pairs", best.val_f1, best.epoch, first.map_or("none".into(), |e| e.to_string()), pairs.len()),
    )
}

fn mosaic_algebra() -> Outcome {
    use support::mosaic::{composite_laws, gap_fill_laws, summary_laws};
    for seed in 0..1000u64 {
        let s = seed as usize;
        composite_laws(seed, 1 + s % 5, 1 + (s / 5) % 5).map_err(|e| format!("seed {seed}: {e}"))?;
        gap_fill_laws(seed, 1 + s % 29).map_err(|e| format!("seed {seed}: {e}"))?;
        summary_laws(seed, 1 + s % 39).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok("1000 cases of each law".into())
}

fn shade_oracles() -> Outcome {
    use support::shade::*;
    let horn = horn_worst_error(8, 100);
    let (flat, incline) = flat_and_incline();
    let fill = fill_holes_mismatches(12, 200);
    let laws = morphology_law_violations(14, 300);
    let hull = hull_mismatches(13, 100);
    check(
        horn <= 1e-9 && flat == 0.0 && incline <= 1e-9 && fill == 0 && laws == 0 && hull == 0,
        format!("Horn err {horn:.1e} deg, flat {flat}, incline err {incline:.1e}, fill {fill}, hull {hull}, idempotence {laws} mismatches"),
    )
}

/// Water per date from a plain VH threshold on the cloudy observed images,
/// so the only thing under test is the QA filter.
fn qa_filter() -> Outcome {
    let basin = Basin::generate(&BasinConfig::default()).map_err(|e| e.to_string())?;
    let n = basin.config.n_dates;
    // Halfway between the water and land VH means (-24 and -14 dB).
    let threshold = quantize_db(-19.0).map_err(|e| e.to_string())?;
    let cadence = Cadence::new(basin.config.epoch_start, basin.config.cadence_days).map_err(|e| e.to_string())?;
    let observations: Vec<Observation> = (0..n)
        .map(|i| Observation { source: i as i32, date: basin.dates[i], mask: naive_water(&basin.observed_image(i), threshold) })
        .collect();
    let truth_obs: Vec<Observation> =
        (0..n).map(|i| Observation { source: i as i32, date: basin.dates[i], mask: basin.truth[i].clone() }).collect();
    let err = |e: aquamosaic_core::Error| e.to_string();
    let series = MosaicSeries::build(cadence, basin.grid.clone(), &observations, Some(n)).map_err(err)?;
    let truth = MosaicSeries::build(cadence, basin.grid.clone(), &truth_obs, Some(n)).map_err(err)?;
    let occurrence = mosaic::occurrence(&series);
    let tiles = TileGrid::new(basin.config.width, basin.config.height, basin.config.qa_tile).map_err(err)?;
    let min_water = tiles.min_water_for_fraction(500_000.0 / 4096f64.powi(2));
    let river = qa::select_river_tiles(&occurrence, &tiles, min_water).map_err(err)?;
    let params = AnomalyParams::default();

    let mut flags = Vec::new();
    for &id in &river {
        flags.extend(qa::detect_anomalies(&qa::tile_water_series(&series, &occurrence, &tiles, id).map_err(err)?, &params).map_err(err)?);
    }
    let injected = &basin.artifacts;
    let found = injected.iter().filter(|a| flags.iter().any(|f| f.tile_id == a.tile_id && f.index == a.index)).count();
    let rate = found as f64 / injected.len().max(1) as f64;

    let constant = basin.constant_tiles();
    let mut false_flags = 0;
    for &id in &constant {
        false_flags += qa::detect_anomalies(&qa::tile_water_series(&series, &occurrence, &tiles, id).map_err(err)?, &params).map_err(err)?.len();
    }

    let (fixed, audit) = qa::correct(&series, &tiles, &flags, CorrectionMode::Auto).map_err(err)?;
    let mut worst = 0.0f64;
    let mut corrected = 0;
    for a in audit.iter().filter(|a| a.action == Action::Corrected) {
        let index = flags.iter().find(|f| f.tile_id == a.tile_id && f.date == a.date).map(|f| f.index).ok_or("audit without flag")?;
        let got = qa::tile_water_series(&fixed, &occurrence, &tiles, a.tile_id).map_err(err)?.counts[index] as f64;
        let want = qa::tile_water_series(&truth, &occurrence, &tiles, a.tile_id).map_err(err)?.counts[index] as f64;
        worst = worst.max((got - want).abs() / want.max(1.0));
        corrected += 1;
    }
    check(
        !injected.is_empty() && rate >= 0.9 && !constant.is_empty() && false_flags == 0 && corrected > 0 && worst <= 0.05,
        format!(
            "{found}/{} injected dates flagged, {} flags total, {false_flags} false flags on {} constant tiles, {corrected} corrections within {:.2}% of truth",
            injected.len(),
            flags.len(),
            constant.len(),
            100.0 * worst
        ),
    )
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aquamosaic"))
}

fn run_demo(dir: &Path) -> Result<(), String> {
    let out = bin().args(["demo", "-o"]).arg(dir).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let out = bin().args(["run", "--config"]).arg(dir.join("demo.cfg")).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(())
}

fn compared_files(out: &Path) -> Result<Vec<PathBuf>, String> {
    let mut files = Vec::new();
    for sub in ["mosaics", "report"] {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(out.join(sub))
            .map_err(|e| format!("{sub}: {e}"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        files.extend(entries);
    }
    Ok(files)
}

fn end_to_end_determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    run_demo(&a)?;
    run_demo(&b)?;
    let (fa, fb) = (compared_files(&a.join("out"))?, compared_files(&b.join("out"))?);
    if fa.iter().map(|p| p.file_name()).ne(fb.iter().map(|p| p.file_name())) {
        return Err("runs wrote different file sets".into());
    }
    for must in ["occurrence.aqmr", "recurrence.aqmr", "metrics.csv"] {
        if !fa.iter().any(|p| p.file_name().is_some_and(|n| n == must)) {
            return Err(format!("{must} missing"));
        }
    }
    let mut bytes = 0;
    for (x, y) in fa.iter().zip(&fb) {
        let (dx, dy) = (std::fs::read(x).map_err(|e| e.to_string())?, std::fs::read(y).map_err(|e| e.to_string())?);
        if dx != dy {
            return Err(format!("{} differs", x.display()));
        }
        bytes += dx.len();
    }
    Ok(format!("{} files, {bytes} bytes identical", fa.len()))
}

fn gauge_correlation() -> Outcome {
    let basin = Basin::generate(&BasinConfig::default()).map_err(|e| e.to_string())?;
    let areas = metrics::area_series(&basin.dates, &basin.truth).map_err(|e| e.to_string())?;
    let c = metrics::correlate(&basin.gauge, &areas, metrics::GAUGE_WINDOW_DAYS).map_err(|e| e.to_string())?;
    let pairs = metrics::align(&basin.gauge, &areas, metrics::GAUGE_WINDOW_DAYS);
    let n = pairs.len() as f64;
    let (mx, my) = (pairs.iter().map(|p| p.1).sum::<f64>() / n, pairs.iter().map(|p| p.2).sum::<f64>() / n);
    let cov = |f: &dyn Fn(&(NaiveDate, f64, f64)) -> f64| pairs.iter().map(f).sum::<f64>() / n;
    let oracle = cov(&|p| (p.1 - mx) * (p.2 - my)) / (cov(&|p| (p.1 - mx).powi(2)).sqrt() * cov(&|p| (p.2 - my).powi(2)).sqrt());
    let gap = (c.r - oracle).abs();
    check(c.r >= 0.9 && gap <= 1e-12, format!("r = {:.4} over {} pairs, oracle gap {gap:.1e}", c.r, c.pairs))
}
