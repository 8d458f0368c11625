//! Grid algebra: padding, cropping, sliding-window retiling and mask resampling.

#[allow(unused_imports)] // unused when a dev-dependency links std
use num_traits::Float;
use alloc::vec::Vec;


use crate::raster::mask;
use crate::{Error, GridRef, Raster, Result, WaterMask};

/// A window cut out of a larger raster, with its pixel offset in the source.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile<T> {
    pub raster: Raster<T>,
    pub x0: usize,
    pub y0: usize,
}

/// Embed `r` into a `target_w x target_h` canvas surrounded by `border` pixels on
/// every side. Content lands at `(border, border)`; everything else is `fill`.
pub fn pad_to<T: Copy + PartialEq>(
    r: &Raster<T>,
    target_w: usize,
    target_h: usize,
    border: usize,
    fill: T,
) -> Result<Raster<T>> {
    if target_w < r.width() || target_h < r.height() {
        return Err(Error::TargetTooSmall {
            target_w,
            target_h,
            source_w: r.width(),
            source_h: r.height(),
        });
    }
    let (out_w, out_h) = (target_w + 2 * border, target_h + 2 * border);
    let grid = r
        .grid()
        .window(-(border as i64), -(border as i64), out_w, out_h);
    let mut out = Raster::filled(grid, r.bands(), fill, r.nodata());
    for b in 0..r.bands() {
        for y in 0..r.height() {
            let src = r.index(b, 0, y);
            let dst = out.index(b, border, y + border);
            out.data_mut()[dst..dst + r.width()].copy_from_slice(&r.data()[src..src + r.width()]);
        }
    }
    Ok(out)
}

/// Copy of the window `w x h` at `(x0, y0)`; the window must lie inside `r`.
pub fn crop<T: Copy + PartialEq>(
    r: &Raster<T>,
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
) -> Result<Raster<T>> {
    if w == 0 || h == 0 || x0 + w > r.width() || y0 + h > r.height() {
        return Err(Error::WindowOutOfBounds { x0, y0, w, h });
    }
    Ok(window(r, x0 as i64, y0 as i64, w, h))
}

/// Window that may extend past the raster; outside pixels are nodata.
pub fn window<T: Copy + PartialEq>(r: &Raster<T>, x0: i64, y0: i64, w: usize, h: usize) -> Raster<T> {
    let grid = r.grid().window(x0, y0, w, h);
    let mut out = Raster::filled(grid, r.bands(), r.nodata(), r.nodata());
    let sx0 = x0.max(0);
    let sx1 = (x0 + w as i64).min(r.width() as i64);
    if sx1 <= sx0 {
        return out;
    }
    let run = (sx1 - sx0) as usize;
    for b in 0..r.bands() {
        for oy in 0..h {
            let sy = y0 + oy as i64;
            if sy < 0 || sy >= r.height() as i64 {
                continue;
            }
            let src = r.index(b, sx0 as usize, sy as usize);
            let dst = out.index(b, (sx0 - x0) as usize, oy);
            out.data_mut()[dst..dst + run].copy_from_slice(&r.data()[src..src + run]);
        }
    }
    out
}

/// Origins along one axis: advance by `tile - 2 * overlap` until the tiles reach
/// the raster edge. Always at least one tile.
pub fn tile_origins(extent: usize, tile: usize, overlap: usize) -> Result<Vec<usize>> {
    if tile <= 2 * overlap {
        return Err(Error::InvalidTiling { tile, overlap });
    }
    let stride = tile - 2 * overlap;
    let count = if extent <= tile {
        1
    } else {
        (extent - tile).div_ceil(stride) + 1
    };
    Ok((0..count).map(|i| i * stride).collect())
}

/// Cut `r` into `tile x tile` windows whose origins advance by
/// `tile - 2 * overlap`. Windows reaching past the raster are filled with nodata.
pub fn retile<T: Copy + PartialEq>(r: &Raster<T>, tile: usize, overlap: usize) -> Result<Vec<Tile<T>>> {
    let xs = tile_origins(r.width(), tile, overlap)?;
    let ys = tile_origins(r.height(), tile, overlap)?;
    let mut tiles = Vec::with_capacity(xs.len() * ys.len());
    for &y0 in &ys {
        for &x0 in &xs {
            tiles.push(Tile {
                raster: window(r, x0 as i64, y0 as i64, tile, tile),
                x0,
                y0,
            });
        }
    }
    Ok(tiles)
}

/// Block aggregation rule for mask coarsening.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleRule {
    /// Water when any source pixel in the block is water.
    AnyWater,
    /// Water when strictly more than half of the valid source pixels are water.
    Majority,
}

/// Coarsen a mask by an integer factor. Partial blocks at the right and bottom
/// edges are treated as padded with nodata; all-nodata blocks stay nodata.
pub fn resample_mask(m: &WaterMask, factor: usize, rule: ResampleRule) -> Result<WaterMask> {
    if factor < 1 {
        return Err(Error::InvalidFactor(factor));
    }
    let grid = m.grid().coarsened(factor);
    let mut out = Raster::filled(grid.clone(), 1, mask::NODATA, mask::NODATA);
    for by in 0..grid.height {
        for bx in 0..grid.width {
            let (mut water, mut valid) = (0usize, 0usize);
            for y in by * factor..((by + 1) * factor).min(m.height()) {
                for x in bx * factor..((bx + 1) * factor).min(m.width()) {
                    match m.get(0, x, y) {
                        mask::WATER => {
                            water += 1;
                            valid += 1;
                        }
                        mask::NODATA => {}
                        _ => valid += 1,
                    }
                }
            }
            if valid == 0 {
                continue;
            }
            let is_water = match rule {
                ResampleRule::AnyWater => water > 0,
                ResampleRule::Majority => 2 * water > valid,
            };
            out.set(0, bx, by, if is_water { mask::WATER } else { mask::DRY });
        }
    }
    Ok(out)
}

/// Nearest-neighbour projection onto `target`: each target pixel takes the value
/// of the source pixel containing its centre. Pixels outside the source get
/// `fill`.
pub fn project_nearest<T: Copy + PartialEq>(r: &Raster<T>, target: &GridRef, fill: T) -> Result<Raster<T>> {
    if r.grid().crs_tag != target.crs_tag {
        return Err(Error::CrsMismatch {
            expected: target.crs_tag.clone(),
            got: r.grid().crs_tag.clone(),
        });
    }
    if let Some((ox, oy)) = r.grid().offset_in(target) {
        // Same lattice: a shifted copy.
        let mut out = window(r, -ox, -oy, target.width, target.height);
        if fill != r.nodata() {
            fill_outside(&mut out, ox, oy, r.width(), r.height(), fill);
        }
        return out.with_grid(target.clone());
    }
    let mut out = Raster::filled(target.clone(), r.bands(), fill, r.nodata());
    let (w, h) = (r.width() as f64, r.height() as f64);
    for ty in 0..target.height {
        for tx in 0..target.width {
            let (mx, my) = target.pixel_center(tx as f64, ty as f64);
            let (sx, sy) = r.grid().to_pixel(mx, my);
            if sx < 0.0 || sy < 0.0 || sx >= w || sy >= h {
                continue;
            }
            let (sx, sy) = (sx.floor() as usize, sy.floor() as usize);
            for b in 0..r.bands() {
                out.set(b, tx, ty, r.get(b, sx, sy));
            }
        }
    }
    Ok(out)
}

fn fill_outside<T: Copy + PartialEq>(out: &mut Raster<T>, ox: i64, oy: i64, sw: usize, sh: usize, fill: T) {
    for b in 0..out.bands() {
        for y in 0..out.height() {
            for x in 0..out.width() {
                let inside_x = (x as i64) >= ox && (x as i64) < ox + sw as i64;
                let inside_y = (y as i64) >= oy && (y as i64) < oy + sh as i64;
                if !(inside_x && inside_y) {
                    out.set(b, x, y, fill);
                }
            }
        }
    }
}
