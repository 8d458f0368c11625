#[allow(unused_imports)] // unused when a dev-dependency links std
use num_traits::Float;
use alloc::string::String;


use crate::{Error, Result};

/// Relative tolerance used when deciding whether two origins sit on the same
/// pixel lattice.
const LATTICE_TOLERANCE: f64 = 1e-6;

/// North-up georeferencing of a raster.
///
/// `origin_x`/`origin_y` locate the upper-left corner of pixel `(0, 0)`. Columns
/// grow towards +x, rows grow towards -y.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRef {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size_x: f64,
    pub pixel_size_y: f64,
    pub width: usize,
    pub height: usize,
    pub crs_tag: String,
}

impl GridRef {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        pixel_size_x: f64,
        pixel_size_y: f64,
        width: usize,
        height: usize,
        crs_tag: impl Into<String>,
    ) -> Result<Self> {
        let grid = Self {
            origin_x,
            origin_y,
            pixel_size_x,
            pixel_size_y,
            width,
            height,
            crs_tag: crs_tag.into(),
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Unit pixels anchored at the map origin; handy for tests and synthetic data.
    pub fn pixel_space(width: usize, height: usize) -> Self {
        Self {
            origin_x: 0.0,
            origin_y: 0.0,
            pixel_size_x: 1.0,
            pixel_size_y: 1.0,
            width: width.max(1),
            height: height.max(1),
            crs_tag: String::from("PIXEL"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidGrid("width and height must be at least 1"));
        }
        let sizes_ok = self.pixel_size_x.is_finite()
            && self.pixel_size_y.is_finite()
            && self.pixel_size_x > 0.0
            && self.pixel_size_y > 0.0;
        if !sizes_ok {
            return Err(Error::InvalidGrid("pixel sizes must be strictly positive"));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(Error::InvalidGrid("origin must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ground area of one pixel in squared map units.
    pub fn pixel_area(&self) -> f64 {
        self.pixel_size_x * self.pixel_size_y
    }

    /// Map coordinates of the centre of pixel `(col, row)`.
    pub fn pixel_center(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.origin_x + (col + 0.5) * self.pixel_size_x,
            self.origin_y - (row + 0.5) * self.pixel_size_y,
        )
    }

    /// Fractional (col, row) of a map coordinate.
    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin_x) / self.pixel_size_x,
            (self.origin_y - y) / self.pixel_size_y,
        )
    }

    pub fn same_resolution(&self, other: &GridRef) -> bool {
        self.crs_tag == other.crs_tag
            && rel_eq(self.pixel_size_x, other.pixel_size_x)
            && rel_eq(self.pixel_size_y, other.pixel_size_y)
    }

    /// Two grids are composable when they share crs and resolution and their
    /// origins differ by whole pixels.
    pub fn is_composable(&self, other: &GridRef) -> bool {
        self.offset_in(other).is_some()
    }

    /// Integer (col, row) of this grid's origin expressed in `other`'s pixels.
    pub fn offset_in(&self, other: &GridRef) -> Option<(i64, i64)> {
        if !self.same_resolution(other) {
            return None;
        }
        let (col, row) = other.to_pixel(self.origin_x, self.origin_y);
        let (rc, rr) = (col.round(), row.round());
        if (col - rc).abs() > LATTICE_TOLERANCE || (row - rr).abs() > LATTICE_TOLERANCE {
            return None;
        }
        Some((rc as i64, rr as i64))
    }

    /// Sub-window `w x h` starting at pixel `(x0, y0)`; the window may extend past
    /// this grid.
    pub fn window(&self, x0: i64, y0: i64, w: usize, h: usize) -> GridRef {
        GridRef {
            origin_x: self.origin_x + x0 as f64 * self.pixel_size_x,
            origin_y: self.origin_y - y0 as f64 * self.pixel_size_y,
            pixel_size_x: self.pixel_size_x,
            pixel_size_y: self.pixel_size_y,
            width: w,
            height: h,
            crs_tag: self.crs_tag.clone(),
        }
    }

    /// Same footprint origin with pixels `factor` times larger.
    pub fn coarsened(&self, factor: usize) -> GridRef {
        GridRef {
            origin_x: self.origin_x,
            origin_y: self.origin_y,
            pixel_size_x: self.pixel_size_x * factor as f64,
            pixel_size_y: self.pixel_size_y * factor as f64,
            width: self.width.div_ceil(factor),
            height: self.height.div_ceil(factor),
            crs_tag: self.crs_tag.clone(),
        }
    }

    /// Smallest grid on this grid's lattice covering both footprints.
    pub fn union(&self, other: &GridRef) -> Result<GridRef> {
        let (ox, oy) = other
            .offset_in(self)
            .ok_or(Error::GridMismatch("grids are not composable"))?;
        let x0 = ox.min(0);
        let y0 = oy.min(0);
        let x1 = (ox + other.width as i64).max(self.width as i64);
        let y1 = (oy + other.height as i64).max(self.height as i64);
        Ok(self.window(x0, y0, (x1 - x0) as usize, (y1 - y0) as usize))
    }
}

fn rel_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= LATTICE_TOLERANCE * a.abs().max(b.abs())
}
