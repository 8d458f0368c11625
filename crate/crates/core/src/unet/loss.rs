//! Segmentation loss: mean binary cross-entropy plus the Dice complement.

use alloc::format;
use alloc::vec::Vec;

use super::tensor::Scalar;
use crate::{Error, Result};

pub const BCE_CLIP: f64 = 1e-7;
pub const DICE_SMOOTH: f64 = 1.0;

fn constants<T: Scalar>() -> (T, T, T) {
    let eps = T::from(BCE_CLIP).unwrap();
    (eps, T::one() - eps, T::from(DICE_SMOOTH).unwrap())
}

fn check(pred: &[impl Sized], target: &[impl Sized]) -> Result<()> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "prediction has {} pixels, target {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(())
}

/// Mean BCE with predictions clipped to `[1e-7, 1 - 1e-7]`.
pub fn bce<T: Scalar>(pred: &[T], target: &[T]) -> Result<T> {
    check(pred, target)?;
    let (lo, hi, _) = constants::<T>();
    let n = T::from(pred.len()).unwrap();
    let sum = pred.iter().zip(target).fold(T::zero(), |acc, (&p, &t)| {
        let p = p.max(lo).min(hi);
        acc - (t * p.ln() + (T::one() - t) * (T::one() - p).ln())
    });
    Ok(sum / n)
}

/// `1 - (2 sum(p t) + 1) / (sum(p) + sum(t) + 1)`.
pub fn dice_term<T: Scalar>(pred: &[T], target: &[T]) -> Result<T> {
    check(pred, target)?;
    let (_, _, s) = constants::<T>();
    let (mut spt, mut sp, mut st) = (T::zero(), T::zero(), T::zero());
    for (&p, &t) in pred.iter().zip(target) {
        spt = spt + p * t;
        sp = sp + p;
        st = st + t;
    }
    Ok(T::one() - (spt + spt + s) / (sp + st + s))
}

pub fn loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<T> {
    Ok(bce(pred, target)? + dice_term(pred, target)?)
}

/// Loss and its derivative with respect to each prediction.
pub fn loss_and_grad<T: Scalar>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    check(pred, target)?;
    let (lo, hi, s) = constants::<T>();
    let n = T::from(pred.len()).unwrap();
    let (mut spt, mut sp, mut st) = (T::zero(), T::zero(), T::zero());
    for (&p, &t) in pred.iter().zip(target) {
        spt = spt + p * t;
        sp = sp + p;
        st = st + t;
    }
    let num = spt + spt + s;
    let den = sp + st + s;
    let two = T::one() + T::one();
    let mut bce_sum = T::zero();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let pc = p.max(lo).min(hi);
            bce_sum = bce_sum - (t * pc.ln() + (T::one() - t) * (T::one() - pc).ln());
            let d_bce = if p > lo && p < hi {
                (-t / pc + (T::one() - t) / (T::one() - pc)) / n
            } else {
                T::zero()
            };
            let d_dice = -(two * t * den - num) / (den * den);
            d_bce + d_dice
        })
        .collect();
    Ok((bce_sum / n + T::one() - num / den, grad))
}
