//! Mosaic algebra laws checked on seeded random masks and series.

use aquamosaic_core::mosaic::{self, Cadence, MosaicSeries, Observation, GAP_FILLED, NO_SOURCE};
use aquamosaic_core::raster::mask;
use aquamosaic_core::{GridRef, Raster, WaterMask};
use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const LABELS: [u8; 3] = [mask::DRY, mask::WATER, mask::NODATA];

pub fn grid(w: usize, h: usize) -> GridRef {
    GridRef::new(0.0, 0.0, 10.0, 10.0, w, h, "EPSG:32720").unwrap()
}

pub fn random_mask(rng: &mut impl Rng, g: &GridRef) -> WaterMask {
    let data = (0..g.len()).map(|_| LABELS[rng.random_range(0..3)]).collect();
    Raster::new(g.clone(), 1, mask::NODATA, data).unwrap()
}

pub fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 11, 20).unwrap()
}

/// Random observations over 400 days composited into 34 windows of 12 days,
/// so the series spans two calendar years.
pub fn random_series(seed: u64, w: usize, h: usize, n_obs: usize) -> MosaicSeries {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let g = grid(w, h);
    let obs: Vec<Observation> = (0..n_obs)
        .map(|i| Observation {
            source: i as i32,
            date: epoch() + Days::new(rng.random_range(0..400)),
            mask: random_mask(&mut rng, &g),
        })
        .collect();
    MosaicSeries::build(Cadence::new(epoch(), 12).unwrap(), g, &obs, Some(34)).unwrap()
}

fn ensure(ok: bool, what: &str) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what.to_string())
    }
}

/// Associativity, commutativity and the water > dry > nodata maximum, with
/// provenance pointing at the first contributor attaining it.
pub fn composite_laws(seed: u64, w: usize, h: usize) -> Result<(), String> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let g = grid(w, h);
    let (a, b, c) = (random_mask(&mut rng, &g), random_mask(&mut rng, &g), random_mask(&mut rng, &g));
    let comp = |ms: &[&WaterMask]| mosaic::composite(ms, &g).unwrap();
    let (abc, prov) = comp(&[&a, &b, &c]);
    let (ab, _) = comp(&[&a, &b]);
    let (bc, _) = comp(&[&b, &c]);
    ensure(abc == comp(&[&ab, &c]).0, "(a + b) + c differs from a + b + c")?;
    ensure(abc == comp(&[&a, &bc]).0, "a + (b + c) differs from a + b + c")?;
    ensure(abc == comp(&[&c, &b, &a]).0, "composite depends on order")?;
    ensure(abc == comp(&[&b, &a, &c]).0, "composite depends on order")?;
    let inputs = [&a, &b, &c];
    for i in 0..g.len() {
        let vals: Vec<u8> = inputs.iter().map(|m| m.band(0)[i]).collect();
        let want = [mask::WATER, mask::DRY].into_iter().find(|v| vals.contains(v)).unwrap_or(mask::NODATA);
        ensure(abc.band(0)[i] == want, "composite is not the pixel maximum")?;
        let p = prov.band(0)[i];
        let want_p = vals.iter().position(|&v| v == want && want != mask::NODATA).map_or(NO_SOURCE, |k| k as i32);
        ensure(p == want_p, "provenance is not the first maximal contributor")?;
    }
    Ok(())
}

/// Idempotence, non-interference with valid pixels, forward fill from the
/// latest valid date, and the leading-nodata count.
pub fn gap_fill_laws(seed: u64, n_obs: usize) -> Result<(), String> {
    let s = random_series(seed, 3, 3, n_obs);
    let (filled, leading) = mosaic::gap_fill(&s);
    let (again, leading_again) = mosaic::gap_fill(&filled);
    ensure(again == filled, "gap fill is not idempotent")?;
    ensure(leading_again == leading, "leading nodata count changed on refill")?;
    let mut counted = 0;
    for i in 0..s.grid.len() {
        let mut last = mask::NODATA;
        for (e, f) in s.entries.iter().zip(&filled.entries) {
            let v = e.mask.band(0)[i];
            if v != mask::NODATA {
                last = v;
                ensure(f.mask.band(0)[i] == v, "gap fill changed a valid pixel")?;
                ensure(f.provenance.band(0)[i] == e.provenance.band(0)[i], "gap fill changed valid provenance")?;
            } else if last != mask::NODATA {
                ensure(f.provenance.band(0)[i] == GAP_FILLED, "filled pixel lacks the gap-fill mark")?;
            }
            counted += usize::from(last == mask::NODATA);
            ensure(f.mask.band(0)[i] == last, "fill did not copy the latest valid value")?;
        }
    }
    ensure(counted == leading, "leading nodata count is wrong")
}

/// Occurrence and recurrence lie in [0, 100], share a nodata footprint, and
/// occurrence 100 implies recurrence 100.
pub fn summary_laws(seed: u64, n_obs: usize) -> Result<(), String> {
    let s = random_series(seed, 3, 2, n_obs);
    let occ = mosaic::occurrence(&s);
    let rec = mosaic::recurrence(&s);
    for (&o, &r) in occ.band(0).iter().zip(rec.band(0)) {
        ensure((o == -1.0) == (r == -1.0), "occurrence and recurrence disagree on nodata")?;
        if o == -1.0 {
            continue;
        }
        ensure((0.0..=100.0).contains(&o) && (0.0..=100.0).contains(&r), "summary outside [0, 100]")?;
        ensure(o != 100.0 || r == 100.0, "occurrence 100 without recurrence 100")?;
        ensure(o == 0.0 || r > 0.0, "water observed but recurrence 0")?;
    }
    Ok(())
}
