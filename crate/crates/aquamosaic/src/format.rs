//! The AQMR raster container.
//!
//! ```text
//! "AQMR" | version u16 | dtype u8 | bands u8 | width u32 | height u32
//! | nodata f64 | origin_x f64 | origin_y f64 | pixel_size_x f64 | pixel_size_y f64
//! | crs_len u16 | crs utf-8 | payload (band-sequential, row-major) | crc32(payload) u32
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use aquamosaic_core::{GridRef, Raster};

use crate::error::{io_err, Error, FormatError};

pub const MAGIC: &[u8; 4] = b"AQMR";
pub const VERSION: u16 = 1;
pub const DTYPE_U8: u8 = 1;
pub const DTYPE_F32: u8 = 2;

/// A decoded raster of either supported sample type.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyRaster {
    U8(Raster<u8>),
    F32(Raster<f32>),
}

impl AnyRaster {
    pub fn grid(&self) -> &GridRef {
        match self {
            AnyRaster::U8(r) => r.grid(),
            AnyRaster::F32(r) => r.grid(),
        }
    }

    pub fn into_u8(self) -> Result<Raster<u8>, FormatError> {
        match self {
            AnyRaster::U8(r) => Ok(r),
            AnyRaster::F32(_) => Err(FormatError::WrongDtype { expected: DTYPE_U8, found: DTYPE_F32 }),
        }
    }

    pub fn into_f32(self) -> Result<Raster<f32>, FormatError> {
        match self {
            AnyRaster::F32(r) => Ok(r),
            AnyRaster::U8(_) => Err(FormatError::WrongDtype { expected: DTYPE_F32, found: DTYPE_U8 }),
        }
    }
}

/// Sample types that can be stored in an AQMR payload.
pub trait Sample: Copy + PartialEq {
    const DTYPE: u8;
    fn nodata_f64(self) -> f64;
    fn put(self, out: &mut Vec<u8>);
}

impl Sample for u8 {
    const DTYPE: u8 = DTYPE_U8;
    fn nodata_f64(self) -> f64 {
        f64::from(self)
    }
    fn put(self, out: &mut Vec<u8>) {
        out.push(self);
    }
}

impl Sample for f32 {
    const DTYPE: u8 = DTYPE_F32;
    fn nodata_f64(self) -> f64 {
        f64::from(self)
    }
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

pub fn encode<T: Sample>(r: &Raster<T>) -> Result<Vec<u8>, FormatError> {
    let g = r.grid();
    let crs = g.crs_tag.as_bytes();
    let crs_len = u16::try_from(crs.len()).map_err(|_| FormatError::Header("crs tag longer than 65535 bytes".into()))?;
    let bands = u8::try_from(r.bands()).map_err(|_| FormatError::Header("more than 255 bands".into()))?;
    let (w, h) = (
        u32::try_from(g.width).map_err(|_| FormatError::Header("width exceeds u32".into()))?,
        u32::try_from(g.height).map_err(|_| FormatError::Header("height exceeds u32".into()))?,
    );
    let mut out = Vec::with_capacity(64 + crs.len() + r.data().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::DTYPE);
    out.push(bands);
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    for v in [r.nodata().nodata_f64(), g.origin_x, g.origin_y, g.pixel_size_x, g.pixel_size_y] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&crs_len.to_le_bytes());
    out.extend_from_slice(crs);
    let start = out.len();
    for &v in r.data() {
        v.put(&mut out);
    }
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(FormatError::Truncated {
            needed: self.pos.saturating_add(n),
            available: self.bytes.len(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

pub fn decode(bytes: &[u8]) -> Result<AnyRaster, FormatError> {
    let mut rd = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = rd.array()?;
    if &magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = rd.u16()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let dtype = rd.u8()?;
    let bands = usize::from(rd.u8()?);
    let (w, h) = (rd.u32()? as usize, rd.u32()? as usize);
    let nodata = rd.f64()?;
    let (ox, oy, px, py) = (rd.f64()?, rd.f64()?, rd.f64()?, rd.f64()?);
    let crs_len = usize::from(rd.u16()?);
    let crs = std::str::from_utf8(rd.take(crs_len)?).map_err(|_| FormatError::Header("crs tag is not utf-8".into()))?;
    let grid = GridRef::new(ox, oy, px, py, w, h, crs).map_err(|e| FormatError::Header(e.to_string()))?;
    if bands == 0 {
        return Err(FormatError::Header("band count is zero".into()));
    }
    let sample = match dtype {
        DTYPE_U8 => 1,
        DTYPE_F32 => 4,
        other => return Err(FormatError::UnknownDtype(other)),
    };
    let n = bands
        .checked_mul(w)
        .and_then(|v| v.checked_mul(h))
        .ok_or_else(|| FormatError::Header("dimensions overflow".into()))?;
    let payload = rd.take(n * sample)?;
    let stored = rd.u32()?;
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed });
    }
    if rd.pos != bytes.len() {
        return Err(FormatError::Header(format!("{} trailing bytes", bytes.len() - rd.pos)));
    }
    let header = |e: aquamosaic_core::Error| FormatError::Header(e.to_string());
    Ok(match dtype {
        DTYPE_U8 => {
            if !(0.0..=255.0).contains(&nodata) || nodata.fract() != 0.0 {
                return Err(FormatError::Header("u8 nodata out of range".into()));
            }
            AnyRaster::U8(Raster::new(grid, bands, nodata as u8, payload.to_vec()).map_err(header)?)
        }
        _ => {
            let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            AnyRaster::F32(Raster::new(grid, bands, nodata as f32, data).map_err(header)?)
        }
    })
}

pub fn write_raster<T: Sample>(r: &Raster<T>, path: &Path) -> Result<(), Error> {
    let bytes = encode(r).map_err(|e| Error::Format { path: path.to_path_buf(), source: e })?;
    crate::io::write_atomic(path, &bytes)
}

pub fn read_raster(path: &Path) -> Result<AnyRaster, Error> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    decode(&bytes).map_err(|e| Error::Format { path: path.to_path_buf(), source: e })
}

pub fn read_u8(path: &Path) -> Result<Raster<u8>, Error> {
    read_raster(path)?.into_u8().map_err(|e| Error::Format { path: path.to_path_buf(), source: e })
}

pub fn read_f32(path: &Path) -> Result<Raster<f32>, Error> {
    read_raster(path)?.into_f32().map_err(|e| Error::Format { path: path.to_path_buf(), source: e })
}

/// Integer rasters (provenance) are stored as f32; values stay exact below 2^24.
pub fn i32_to_f32(r: &Raster<i32>) -> Raster<f32> {
    r.map(r.nodata() as f32, |v| v as f32)
}
