//! Storage scaling between calibrated backscatter in dB and 8-bit pixels.
//!
//! Values are clamped to [-49, 1] dB and mapped linearly onto [5, 255], five
//! codes per dB. Code 0 never results from the scaling and is reserved for nodata.


#[allow(unused_imports)] // unused when a dev-dependency links std
use num_traits::Float;
use crate::raster::BackscatterRaster;
use crate::{Error, GridRef, Raster, Result};

pub const DB_MIN: f64 = -49.0;
pub const DB_MAX: f64 = 1.0;
pub const CODES_PER_DB: f64 = 5.0;
pub const NODATA: u8 = 0;

/// `(max(-49, min(1, x)) + 50) * 5`, rounded half away from zero.
pub fn quantize_db(x: f64) -> Result<u8> {
    if !x.is_finite() {
        return Err(Error::InvalidBackscatter(x));
    }
    let scaled = (x.min(DB_MAX).max(DB_MIN) + 50.0) * CODES_PER_DB;
    Ok(scaled.round() as u8)
}

pub fn dequantize(v: u8) -> Result<f64> {
    if v == NODATA {
        return Err(Error::NodataPixel);
    }
    Ok(f64::from(v) / CODES_PER_DB - 50.0)
}

/// Quantize co-registered VH and VV dB planes into a two-band raster. NaN input
/// pixels become nodata; infinities are rejected.
pub fn quantize_scene(grid: GridRef, vh_db: &[f64], vv_db: &[f64]) -> Result<BackscatterRaster> {
    let mut data = alloc::vec::Vec::with_capacity(vh_db.len() + vv_db.len());
    for &x in vh_db.iter().chain(vv_db) {
        data.push(if x.is_nan() { NODATA } else { quantize_db(x)? });
    }
    Raster::new(grid, 2, NODATA, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clamp_and_midpoint_examples() {
        assert_eq!(quantize_db(1.0).unwrap(), 255);
        assert_eq!(quantize_db(-49.0).unwrap(), 5);
        assert_eq!(quantize_db(-120.0).unwrap(), 5);
        assert_eq!(quantize_db(-20.0).unwrap(), 150);
        assert_eq!(quantize_db(40.0).unwrap(), 255);
    }

    #[test]
    fn rounds_to_nearest_code() {
        assert_eq!(quantize_db(-20.06).unwrap(), 150); // 149.7
        assert_eq!(quantize_db(-19.94).unwrap(), 150); // 150.3
        assert_eq!(quantize_db(-19.86).unwrap(), 151); // 150.7
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(matches!(quantize_db(f64::NAN), Err(Error::InvalidBackscatter(_))));
        assert!(quantize_db(f64::INFINITY).is_err());
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(dequantize(255).unwrap(), 1.0);
        assert_eq!(dequantize(5).unwrap(), -49.0);
        assert_eq!(dequantize(150).unwrap(), -20.0);
        assert_eq!(dequantize(0), Err(Error::NodataPixel));
    }

    #[test]
    fn every_code_round_trips() {
        for v in 5..=255u8 {
            assert_eq!(quantize_db(dequantize(v).unwrap()).unwrap(), v);
        }
    }

    #[test]
    fn scene_marks_nan_as_nodata() {
        let g = GridRef::pixel_space(2, 1);
        let r = quantize_scene(g, &[-20.0, f64::NAN], &[1.0, -49.0]).unwrap();
        assert_eq!(r.data(), &[150, 0, 255, 5]);
    }

    proptest! {
        #[test]
        fn monotone(a in -200.0f64..200.0, b in -200.0f64..200.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantize_db(lo).unwrap() <= quantize_db(hi).unwrap());
        }

        #[test]
        fn round_trip_error_is_half_a_step(x in -60.0f64..10.0) {
            let back = dequantize(quantize_db(x).unwrap()).unwrap();
            prop_assert!((back - x.clamp(DB_MIN, DB_MAX)).abs() <= 0.1 + 1e-12);
        }
    }
}
