//! Terrain-shade exclusion mask built from a DEM.
//!
//! Steep terrain casts radar shadows that look exactly like open water. The mask
//! is produced in raster space: minimum aggregation, eight-neighbour (Horn)
//! slope, a strict slope threshold, hole filling and a convex hull per
//! connected component.

#[allow(unused_imports)] // unused when a dev-dependency links std
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;


use crate::raster::DEM_NODATA;
use crate::{DemRaster, Error, GridRef, Raster, Result, ShadeMask};

pub const SLOPE_NODATA: f64 = -1.0;
pub const KEEP: u8 = 0;
pub const EXCLUDE: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ShadeParams {
    pub factor: usize,
    pub threshold_deg: f64,
}

impl Default for ShadeParams {
    fn default() -> Self {
        Self {
            factor: 3,
            threshold_deg: 20.0,
        }
    }
}

fn is_valid_elevation(v: f32) -> bool {
    v.is_finite() && v != DEM_NODATA
}

/// Minimum over `factor x factor` blocks; nodata is ignored and all-nodata
/// blocks stay nodata. Pixel size grows by `factor`.
pub fn aggregate_min(dem: &DemRaster, factor: usize) -> Result<DemRaster> {
    if factor < 1 {
        return Err(Error::InvalidFactor(factor));
    }
    let grid = dem.grid().coarsened(factor);
    let mut out = Raster::filled(grid.clone(), 1, DEM_NODATA, DEM_NODATA);
    for by in 0..grid.height {
        for bx in 0..grid.width {
            let mut best: Option<f32> = None;
            for y in by * factor..((by + 1) * factor).min(dem.height()) {
                for x in bx * factor..((bx + 1) * factor).min(dem.width()) {
                    let v = dem.get(0, x, y);
                    if is_valid_elevation(v) {
                        best = Some(best.map_or(v, |b| b.min(v)));
                    }
                }
            }
            if let Some(v) = best {
                out.set(0, bx, by, v);
            }
        }
    }
    Ok(out)
}

/// Slope in degrees with Horn's 3x3 weights. Border pixels replicate the edge;
/// invalid neighbours take the centre elevation.
pub fn slope_deg(dem: &DemRaster) -> Result<Raster<f64>> {
    let g = dem.grid();
    let (px, py) = (g.pixel_size_x, g.pixel_size_y);
    if (px - py).abs() > 1e-9 * px.max(py) {
        return Err(Error::NonSquarePixels { x: px, y: py });
    }
    let (w, h) = (dem.width(), dem.height());
    if w < 3 || h < 3 {
        return Err(Error::TooSmall("slope needs at least 3x3 pixels"));
    }
    let cell = px;
    let mut out = Raster::filled(g.clone(), 1, SLOPE_NODATA, SLOPE_NODATA);
    for y in 0..h {
        for x in 0..w {
            let centre = dem.get(0, x, y);
            if !is_valid_elevation(centre) {
                continue;
            }
            let z = |dx: i64, dy: i64| -> f64 {
                let nx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                let ny = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                let v = dem.get(0, nx, ny);
                f64::from(if is_valid_elevation(v) { v } else { centre })
            };
            let (a, b, c) = (z(-1, -1), z(0, -1), z(1, -1));
            let (d, f) = (z(-1, 0), z(1, 0));
            let (gg, hh, i) = (z(-1, 1), z(0, 1), z(1, 1));
            let dzdx = ((c + 2.0 * f + i) - (a + 2.0 * d + gg)) / (8.0 * cell);
            let dzdy = ((gg + 2.0 * hh + i) - (a + 2.0 * b + c)) / (8.0 * cell);
            let rise = (dzdx * dzdx + dzdy * dzdy).sqrt();
            out.set(0, x, y, rise.atan().to_degrees());
        }
    }
    Ok(out)
}

/// `1` where slope is strictly greater than `threshold_deg`.
pub fn threshold_slope(slope: &Raster<f64>, threshold_deg: f64) -> ShadeMask {
    slope.map(0xFF, |s| if s != SLOPE_NODATA && s > threshold_deg { EXCLUDE } else { KEEP })
}

/// Set every 4-connected background region that does not reach the raster
/// border to foreground.
pub fn fill_holes(mask: &ShadeMask) -> ShadeMask {
    let (w, h) = (mask.width(), mask.height());
    let src = mask.band(0);
    let mut outside = vec![false; w * h];
    let mut stack = Vec::new();
    let seed = |x: usize, y: usize, stack: &mut Vec<usize>, outside: &mut Vec<bool>| {
        let i = y * w + x;
        if src[i] != EXCLUDE && !outside[i] {
            outside[i] = true;
            stack.push(i);
        }
    };
    for x in 0..w {
        seed(x, 0, &mut stack, &mut outside);
        seed(x, h - 1, &mut stack, &mut outside);
    }
    for y in 0..h {
        seed(0, y, &mut stack, &mut outside);
        seed(w - 1, y, &mut stack, &mut outside);
    }
    while let Some(i) = stack.pop() {
        let (x, y) = (i % w, i / w);
        if x > 0 {
            seed(x - 1, y, &mut stack, &mut outside);
        }
        if x + 1 < w {
            seed(x + 1, y, &mut stack, &mut outside);
        }
        if y > 0 {
            seed(x, y - 1, &mut stack, &mut outside);
        }
        if y + 1 < h {
            seed(x, y + 1, &mut stack, &mut outside);
        }
    }
    let mut out = mask.clone();
    for (i, v) in out.band_mut(0).iter_mut().enumerate() {
        if !outside[i] {
            *v = EXCLUDE;
        }
    }
    out
}

/// 8-connected foreground components, each as a list of `(x, y)` pixels.
pub fn components(mask: &ShadeMask) -> Vec<Vec<(i64, i64)>> {
    let (w, h) = (mask.width(), mask.height());
    let src = mask.band(0);
    let mut seen = vec![false; w * h];
    let mut comps = Vec::new();
    for start in 0..w * h {
        if src[start] != EXCLUDE || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            comp.push((x, y));
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if src[j] == EXCLUDE && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        comps.push(comp);
    }
    comps
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull (monotone chain) with collinear points dropped; counter-clockwise
/// in the `(x, y)` coordinate frame.
pub fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Whether integer point `p` lies inside or on the hull returned by [`convex_hull`].
pub fn hull_contains(hull: &[(i64, i64)], p: (i64, i64)) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0] == p,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            cross(a, b, p) == 0
                && p.0 >= a.0.min(b.0)
                && p.0 <= a.0.max(b.0)
                && p.1 >= a.1.min(b.1)
                && p.1 <= a.1.max(b.1)
        }
        n => (0..n).all(|k| cross(hull[k], hull[(k + 1) % n], p) >= 0),
    }
}

fn hull_pass(mask: &ShadeMask) -> ShadeMask {
    let mut out = mask.clone();
    let w = mask.width();
    for comp in components(mask) {
        let hull = convex_hull(&comp);
        let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
        for &(x, y) in &hull {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let band = out.band_mut(0);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if hull_contains(&hull, (x, y)) {
                    band[y as usize * w + x as usize] = EXCLUDE;
                }
            }
        }
    }
    out
}

/// Rasterize the convex hull of every 8-connected component. Hulls that come
/// to touch are merged and re-hulled until the mask is stable, which makes the
/// operation idempotent.
pub fn convex_hull_components(mask: &ShadeMask) -> ShadeMask {
    let mut current = hull_pass(mask);
    loop {
        let next = hull_pass(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

/// Project onto another grid of the same crs. A target pixel is excluded when
/// its footprint overlaps any excluded source pixel; outside the source it is
/// kept.
pub fn project_mask(mask: &ShadeMask, target: &GridRef) -> Result<ShadeMask> {
    let src = mask.grid();
    if src.crs_tag != target.crs_tag {
        return Err(Error::CrsMismatch {
            expected: target.crs_tag.clone(),
            got: src.crs_tag.clone(),
        });
    }
    const EDGE: f64 = 1e-9;
    let mut out = Raster::filled(target.clone(), 1, KEEP, mask.nodata());
    let (sw, sh) = (mask.width() as i64, mask.height() as i64);
    for ty in 0..target.height {
        let top = target.origin_y - ty as f64 * target.pixel_size_y;
        let bottom = top - target.pixel_size_y;
        let r0 = ((src.origin_y - top) / src.pixel_size_y + EDGE).floor() as i64;
        let r1 = ((src.origin_y - bottom) / src.pixel_size_y - EDGE).ceil() as i64;
        for tx in 0..target.width {
            let left = target.origin_x + tx as f64 * target.pixel_size_x;
            let right = left + target.pixel_size_x;
            let c0 = ((left - src.origin_x) / src.pixel_size_x + EDGE).floor() as i64;
            let c1 = ((right - src.origin_x) / src.pixel_size_x - EDGE).ceil() as i64;
            let hit = (r0.max(0)..r1.min(sh)).any(|r| {
                (c0.max(0)..c1.min(sw)).any(|c| mask.get(0, c as usize, r as usize) == EXCLUDE)
            });
            if hit {
                out.set(0, tx, ty, EXCLUDE);
            }
        }
    }
    Ok(out)
}

/// Force pixels marked in `keep_override` back to keep (`mask AND NOT override`).
pub fn apply_override(mask: &ShadeMask, keep_override: &ShadeMask) -> Result<ShadeMask> {
    if mask.width() != keep_override.width() || mask.height() != keep_override.height() {
        return Err(Error::GridMismatch("override mask must match the shade grid"));
    }
    let mut out = mask.clone();
    for (v, &o) in out.band_mut(0).iter_mut().zip(keep_override.band(0)) {
        if o == EXCLUDE {
            *v = KEEP;
        }
    }
    Ok(out)
}

/// Full shade pipeline on the aggregated DEM grid.
pub fn build_shade_mask(
    dem: &DemRaster,
    params: &ShadeParams,
    keep_override: Option<&ShadeMask>,
) -> Result<ShadeMask> {
    let coarse = aggregate_min(dem, params.factor)?;
    let slope = slope_deg(&coarse)?;
    let steep = threshold_slope(&slope, params.threshold_deg);
    let filled = fill_holes(&steep);
    let hulls = convex_hull_components(&filled);
    match keep_override {
        Some(o) => {
            let o = if o.grid() == hulls.grid() {
                o.clone()
            } else {
                project_mask(o, hulls.grid())?
            };
            apply_override(&hulls, &o)
        }
        None => Ok(hulls),
    }
}
