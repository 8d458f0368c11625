//! From-scratch U-Net: encoder/decoder with skip connections, trained with
//! BCE + Dice loss and Adam. Both loss terms are taken over every pixel of a
//! batch.
//!
//! Each encoder level applies two 3x3 convolutions with ReLU and a 2x2 max-pool.
//! Each decoder level doubles the resolution by nearest-neighbour upsampling, a
//! 2x2 convolution, concatenation with the skip tensor and two 3x3
//! convolutions. A 1x1 convolution and a sigmoid produce the probability map.
//! Channels double at every level starting from `base_filters`. There are no
//! normalization layers.

pub mod adam;
pub mod loss;
pub mod model;
pub mod ops;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use model::{batch_loss_grad, ConvSpec, Gradients, Param, Trace, UNet, UNetConfig};
pub use tensor::{Scalar, Tensor};

use crate::raster::mask;
use crate::{ProbabilityRaster, Raster, WaterMask};

/// Probability map of a batch; see [`UNet::forward`].
pub fn forward<T: Scalar>(model: &UNet<T>, batch: &[Tensor<T>]) -> crate::Result<alloc::vec::Vec<Tensor<T>>> {
    model.forward(batch)
}

/// Gradients of the batch loss; see [`UNet::loss_and_gradients`].
pub fn backward<T: Scalar>(model: &UNet<T>, batch: &[Tensor<T>], targets: &[Tensor<T>]) -> crate::Result<Gradients<T>> {
    Ok(model.loss_and_gradients(batch, targets)?.1)
}

/// Water where probability is at least `t`; nodata stays nodata.
pub fn threshold(prob: &ProbabilityRaster, t: f32) -> WaterMask {
    let nodata = prob.nodata();
    let mut out: WaterMask = prob.map(mask::NODATA, |p| {
        if p == nodata || p.is_nan() {
            mask::NODATA
        } else if p >= t {
            mask::WATER
        } else {
            mask::DRY
        }
    });
    if out.bands() > 1 {
        out = Raster::new(out.grid().clone(), 1, mask::NODATA, out.band(0).to_vec()).expect("single band");
    }
    out
}
