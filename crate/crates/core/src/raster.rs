use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, GridRef, Result};

/// Water mask pixel codes.
pub mod mask {
    pub const DRY: u8 = 0;
    pub const WATER: u8 = 1;
    pub const NODATA: u8 = 255;
}

/// Nodata marker used by every real-valued raster produced by the pipeline
/// (probabilities, percentages).
pub const F32_NODATA: f32 = -1.0;

/// Nodata marker for elevation rasters.
pub const DEM_NODATA: f32 = -9999.0;

/// Multi-band raster, band-sequential and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    grid: GridRef,
    bands: usize,
    nodata: T,
    data: Vec<T>,
}

/// Two bands (VH, VV) of quantized backscatter; 0 marks nodata.
pub type BackscatterRaster = Raster<u8>;
/// Per-pixel water probability, [`F32_NODATA`] where unknown.
pub type ProbabilityRaster = Raster<f32>;
/// `{0, 1, 255}` water mask, see [`mask`].
pub type WaterMask = Raster<u8>;
/// Elevation in meters, [`DEM_NODATA`] where unknown.
pub type DemRaster = Raster<f32>;
/// `{0 = keep, 1 = exclude}` terrain-shade mask.
pub type ShadeMask = Raster<u8>;

impl<T: Copy + PartialEq> Raster<T> {
    pub fn new(grid: GridRef, bands: usize, nodata: T, data: Vec<T>) -> Result<Self> {
        grid.validate()?;
        if bands == 0 {
            return Err(Error::InvalidGrid("band count must be at least 1"));
        }
        let expected = grid.len() * bands;
        if data.len() != expected {
            return Err(Error::DataLength {
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            grid,
            bands,
            nodata,
            data,
        })
    }

    pub fn filled(grid: GridRef, bands: usize, value: T, nodata: T) -> Self {
        let len = grid.len() * bands.max(1);
        Self {
            grid,
            bands: bands.max(1),
            nodata,
            data: vec![value; len],
        }
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn nodata(&self) -> T {
        self.nodata
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn band(&self, band: usize) -> &[T] {
        let n = self.grid.len();
        &self.data[band * n..(band + 1) * n]
    }

    pub fn band_mut(&mut self, band: usize) -> &mut [T] {
        let n = self.grid.len();
        &mut self.data[band * n..(band + 1) * n]
    }

    #[inline]
    pub fn index(&self, band: usize, x: usize, y: usize) -> usize {
        (band * self.grid.height + y) * self.grid.width + x
    }

    #[inline]
    pub fn get(&self, band: usize, x: usize, y: usize) -> T {
        self.data[self.index(band, x, y)]
    }

    #[inline]
    pub fn set(&mut self, band: usize, x: usize, y: usize, value: T) {
        let i = self.index(band, x, y);
        self.data[i] = value;
    }

    /// True when any band holds the nodata value at `(x, y)`.
    pub fn is_nodata_at(&self, x: usize, y: usize) -> bool {
        (0..self.bands).any(|b| self.get(b, x, y) == self.nodata)
    }

    pub fn with_grid(mut self, grid: GridRef) -> Result<Self> {
        if grid.width != self.grid.width || grid.height != self.grid.height {
            return Err(Error::ShapeMismatch(format!(
                "grid {}x{} does not fit raster {}x{}",
                grid.width, grid.height, self.grid.width, self.grid.height
            )));
        }
        self.grid = grid;
        Ok(self)
    }

    pub fn map<U: Copy + PartialEq>(&self, nodata: U, f: impl Fn(T) -> U) -> Raster<U> {
        Raster {
            grid: self.grid.clone(),
            bands: self.bands,
            nodata,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Geometry equality: same dimensions and georeferencing.
    pub fn same_grid<U>(&self, other: &Raster<U>) -> bool {
        self.grid == other.grid
    }
}

impl Raster<u8> {
    /// Number of water pixels in a single-band mask.
    pub fn water_count(&self) -> usize {
        self.band(0).iter().filter(|&&v| v == mask::WATER).count()
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == mask::DRY || v == mask::WATER)
    }
}

/// Mirror every band left-right.
pub fn flip_horizontal<T: Copy + PartialEq>(r: &Raster<T>) -> Raster<T> {
    let (w, h) = (r.width(), r.height());
    let mut out = r.clone();
    for b in 0..r.bands() {
        for y in 0..h {
            for x in 0..w {
                out.set(b, x, y, r.get(b, w - 1 - x, y));
            }
        }
    }
    out
}

/// Mirror every band top-bottom.
pub fn flip_vertical<T: Copy + PartialEq>(r: &Raster<T>) -> Raster<T> {
    let (w, h) = (r.width(), r.height());
    let mut out = r.clone();
    for b in 0..r.bands() {
        for y in 0..h {
            let src = r.index(b, 0, h - 1 - y);
            let dst = out.index(b, 0, y);
            out.data[dst..dst + w].copy_from_slice(&r.data[src..src + w]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_payload_length() {
        let g = GridRef::pixel_space(3, 2);
        assert_eq!(
            Raster::new(g, 2, 0u8, vec![1; 11]).unwrap_err(),
            Error::DataLength { expected: 12, got: 11 }
        );
    }

    #[test]
    fn band_sequential_layout() {
        let g = GridRef::pixel_space(2, 2);
        let r = Raster::new(g, 2, 0u8, (1..=8).collect()).unwrap();
        assert_eq!(r.get(1, 0, 0), 5);
        assert_eq!(r.get(0, 1, 1), 4);
        assert_eq!(r.band(1), &[5, 6, 7, 8]);
    }

    #[test]
    fn flips_are_involutions() {
        let g = GridRef::pixel_space(3, 2);
        let r = Raster::new(g, 1, 0u8, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(flip_horizontal(&r).band(0), &[3, 2, 1, 6, 5, 4]);
        assert_eq!(flip_vertical(&r).band(0), &[4, 5, 6, 1, 2, 3]);
        assert_eq!(flip_horizontal(&flip_horizontal(&r)), r);
        assert_eq!(flip_vertical(&flip_vertical(&r)), r);
    }
}
