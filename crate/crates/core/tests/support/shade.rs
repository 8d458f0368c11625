//! Brute-force terrain and morphology oracles.

use std::collections::VecDeque;

use aquamosaic_core::raster::DEM_NODATA;
use aquamosaic_core::shade::{self, EXCLUDE, KEEP};
use aquamosaic_core::{DemRaster, GridRef, Raster, ShadeMask};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub fn dem_from(w: usize, h: usize, cell: f64, data: Vec<f32>) -> DemRaster {
    let g = GridRef::new(0.0, 0.0, cell, cell, w, h, "EPSG:32720").unwrap();
    Raster::new(g, 1, DEM_NODATA, data).unwrap()
}

pub fn mask_from(w: usize, h: usize, bits: &[bool]) -> ShadeMask {
    Raster::new(GridRef::pixel_space(w, h), 1, 0xFF, bits.iter().map(|&b| if b { EXCLUDE } else { KEEP }).collect()).unwrap()
}

/// Horn slope from an explicitly edge-padded copy of the DEM.
pub fn horn_oracle(dem: &[f64], w: usize, h: usize, cell: f64) -> Vec<f64> {
    let (pw, ph) = (w + 2, h + 2);
    let mut pad = vec![0.0; pw * ph];
    for py in 0..ph {
        for px in 0..pw {
            let sx = px.saturating_sub(1).min(w - 1);
            let sy = py.saturating_sub(1).min(h - 1);
            pad[py * pw + px] = dem[sy * w + sx];
        }
    }
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let at = |dx: usize, dy: usize| pad[(y + dy) * pw + x + dx];
            let (a, b, c) = (at(0, 0), at(1, 0), at(2, 0));
            let (d, f) = (at(0, 1), at(2, 1));
            let (g, hh, i) = (at(0, 2), at(1, 2), at(2, 2));
            let dzdx = ((c + 2.0 * f + i) - (a + 2.0 * d + g)) / (8.0 * cell);
            let dzdy = ((g + 2.0 * hh + i) - (a + 2.0 * b + c)) / (8.0 * cell);
            out.push((dzdx * dzdx + dzdy * dzdy).sqrt().atan().to_degrees());
        }
    }
    out
}

/// Background pixels reachable from the border through 4-connected
/// background stay background; everything else becomes foreground.
pub fn fill_oracle(bits: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut reach = vec![false; w * h];
    let mut q = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if (x == 0 || y == 0 || x == w - 1 || y == h - 1) && !bits[y * w + x] {
                reach[y * w + x] = true;
                q.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = q.pop_front() {
        let mut visit = |nx: usize, ny: usize| {
            let i = ny * w + nx;
            if !bits[i] && !reach[i] {
                reach[i] = true;
                q.push_back((nx, ny));
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
    }
    reach.iter().map(|r| !r).collect()
}

pub fn random_bits(rng: &mut impl Rng, n: usize, p: f64) -> Vec<bool> {
    (0..n).map(|_| rng.random_bool(p)).collect()
}

/// `p` lies in the convex hull of `pts` iff it is on the inner side of every
/// supporting line through two points of the set.
pub fn in_hull_oracle(pts: &[(i64, i64)], p: (i64, i64)) -> bool {
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    if pts.contains(&p) {
        return true;
    }
    for &a in pts {
        for &b in pts {
            if a == b {
                continue;
            }
            let sides: Vec<i64> = pts.iter().map(|&q| cross(a, b, q)).collect();
            let supporting = sides.iter().all(|&s| s >= 0);
            if supporting && cross(a, b, p) < 0 {
                return false;
            }
        }
    }
    // Collinear sets: inside only between the extremes on the line.
    let all_collinear = pts.iter().all(|&q| cross(pts[0], *pts.last().unwrap(), q) == 0);
    if all_collinear {
        let (lo, hi) = (pts.iter().min().unwrap(), pts.iter().max().unwrap());
        return cross(*lo, *hi, p) == 0 && p >= *lo && p <= *hi;
    }
    true
}

/// Worst slope error against the Horn oracle over `cases` random 16x16 DEMs.
pub fn horn_worst_error(seed: u64, cases: usize) -> f64 {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let (w, h) = (16, 16);
        let cell = [10.0, 30.0, 90.0][case % 3];
        let data: Vec<f32> = (0..w * h).map(|_| rng.random_range(0.0..500.0f32)).collect();
        let got = shade::slope_deg(&dem_from(w, h, cell, data.clone())).unwrap();
        let want = horn_oracle(&data.iter().map(|&v| f64::from(v)).collect::<Vec<_>>(), w, h, cell);
        for (&g, &o) in got.band(0).iter().zip(&want) {
            worst = worst.max((g - o).abs());
        }
    }
    worst
}

/// Slopes of a flat DEM and of one rising one cell size per cell
/// (interior columns only, edges replicate).
pub fn flat_and_incline() -> (f64, f64) {
    let flat = shade::slope_deg(&dem_from(6, 5, 30.0, vec![123.0; 30])).unwrap();
    let ramp: Vec<f32> = (0..6 * 5).map(|i| (i % 6) as f32 * 30.0).collect();
    let slope = shade::slope_deg(&dem_from(6, 5, 30.0, ramp)).unwrap();
    let flat_max = flat.band(0).iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    let incline_err = (0..5).flat_map(|y| (1..5).map(move |x| (x, y))).fold(0.0f64, |m, (x, y)| m.max((slope.get(0, x, y) - 45.0).abs()));
    (flat_max, incline_err)
}

/// Random masks on which `fill_holes` disagrees with the flood-fill oracle.
pub fn fill_holes_mismatches(seed: u64, cases: usize) -> usize {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (0..cases)
        .filter(|&case| {
            let (w, h) = (3 + case % 14, 3 + (case / 3) % 14);
            let bits = random_bits(&mut rng, w * h, 0.45);
            shade::fill_holes(&mask_from(w, h, &bits)) != mask_from(w, h, &fill_oracle(&bits, w, h))
        })
        .count()
}

/// Random masks where hull or fill is not idempotent, or drops an input pixel.
pub fn morphology_law_violations(seed: u64, cases: usize) -> usize {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (0..cases)
        .filter(|_| {
            let (w, h) = (rng.random_range(3..14), rng.random_range(3..14));
            let p = rng.random_range(0.05..0.6);
            let m = mask_from(w, h, &random_bits(&mut rng, w * h, p));
            let filled = shade::fill_holes(&m);
            let hulls = shade::convex_hull_components(&m);
            let covers = m.band(0).iter().zip(filled.band(0)).zip(hulls.band(0)).all(|((&a, &b), &c)| a != EXCLUDE || (b == EXCLUDE && c == EXCLUDE));
            shade::fill_holes(&filled) != filled || shade::convex_hull_components(&hulls) != hulls || !covers
        })
        .count()
}

/// Single-component random masks whose hull disagrees with the half-plane
/// oracle somewhere.
pub fn hull_mismatches(seed: u64, cases: usize) -> usize {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let (mut tested, mut bad) = (0, 0);
    while tested < cases {
        let (w, h) = (10, 9);
        let bits = random_bits(&mut rng, w * h, 0.2);
        let m = mask_from(w, h, &bits);
        let comps = shade::components(&m);
        if comps.len() != 1 {
            continue;
        }
        tested += 1;
        let got = shade::convex_hull_components(&m);
        let agree = (0..h as i64).all(|y| (0..w as i64).all(|x| (got.get(0, x as usize, y as usize) == EXCLUDE) == in_hull_oracle(&comps[0], (x, y))));
        bad += usize::from(!agree);
    }
    bad
}
