//! The AQMW weight file.
//!
//! ```text
//! "AQMW" | version u16 | depth u8 | base_filters u16 | input_size u16
//! | in_channels u8 | out_channels u8
//! | per parameter: name_len u16 | name | rank u8 | dims u32 x rank | f32 payload
//! | crc32 u32 over every preceding byte
//! ```

use std::path::Path;

use aquamosaic_core::unet::{Param, UNet, UNetConfig};

use crate::error::{io_err, Error, WeightsError};

pub const MAGIC: &[u8; 4] = b"AQMW";
pub const VERSION: u16 = 1;

pub fn encode(model: &UNet<f32>) -> Result<Vec<u8>, WeightsError> {
    let c = model.config();
    let narrow = |v: usize, what: &str| u16::try_from(v).map_err(|_| WeightsError::Shape(format!("{what} does not fit the header")));
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(u8::try_from(c.depth).map_err(|_| WeightsError::Shape("depth does not fit the header".into()))?);
    out.extend_from_slice(&narrow(c.base_filters, "base_filters")?.to_le_bytes());
    out.extend_from_slice(&narrow(c.input_size, "input_size")?.to_le_bytes());
    out.push(u8::try_from(c.in_channels).map_err(|_| WeightsError::Shape("in_channels does not fit".into()))?);
    out.push(u8::try_from(c.out_channels).map_err(|_| WeightsError::Shape("out_channels does not fit".into()))?);
    for p in model.params() {
        out.extend_from_slice(&narrow(p.name.len(), "parameter name")?.to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.dims.len() as u8);
        for &d in &p.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &p.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WeightsError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(WeightsError::Truncated)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, WeightsError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WeightsError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, WeightsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Decode a weight file. With `expected`, a header that disagrees with that
/// configuration is refused before any parameter is read.
pub fn decode(bytes: &[u8], expected: Option<&UNetConfig>) -> Result<UNet<f32>, WeightsError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    if bytes.len() < 4 + 2 + 7 + 4 {
        return Err(WeightsError::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(WeightsError::Checksum { stored, computed });
    }
    let mut cur = Cursor { bytes: body, pos: 4 };
    let version = cur.u16()?;
    if version != VERSION {
        return Err(WeightsError::UnsupportedVersion(version));
    }
    let config = UNetConfig {
        depth: usize::from(cur.u8()?),
        base_filters: usize::from(cur.u16()?),
        input_size: usize::from(cur.u16()?),
        in_channels: usize::from(cur.u8()?),
        out_channels: usize::from(cur.u8()?),
    };
    if let Some(want) = expected {
        if want != &config {
            return Err(WeightsError::ConfigMismatch { expected: *want, found: config });
        }
    }
    config.validate().map_err(|e| WeightsError::Shape(e.to_string()))?;
    let shapes = config.parameter_shapes();
    let mut params = Vec::with_capacity(shapes.len());
    for (want_name, want_dims) in &shapes {
        let name_len = usize::from(cur.u16()?);
        let name = std::str::from_utf8(cur.take(name_len)?).map_err(|_| WeightsError::Shape("parameter name is not utf-8".into()))?;
        let rank = usize::from(cur.u8()?);
        let dims = (0..rank).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if name != want_name || &dims != want_dims {
            return Err(WeightsError::Shape(format!("expected {want_name} {want_dims:?}, found {name} {dims:?}")));
        }
        let n: usize = dims.iter().product();
        let values = cur.take(n * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        params.push(Param { name: name.to_string(), dims, values });
    }
    if cur.pos != body.len() {
        return Err(WeightsError::Shape(format!("{} unexpected trailing bytes", body.len() - cur.pos)));
    }
    UNet::from_params(config, params).map_err(|e| WeightsError::Shape(e.to_string()))
}

pub fn save_weights(model: &UNet<f32>, path: &Path) -> Result<(), Error> {
    let bytes = encode(model).map_err(|e| Error::Weights { path: path.to_path_buf(), source: e })?;
    crate::io::write_atomic(path, &bytes)
}

pub fn load_weights(path: &Path, expected: Option<&UNetConfig>) -> Result<UNet<f32>, Error> {
    if !path.exists() {
        return Err(Error::WeightsNotFound(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    decode(&bytes, expected).map_err(|e| Error::Weights { path: path.to_path_buf(), source: e })
}
