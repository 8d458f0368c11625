//! Training-sample preparation, augmentation, the training loop and evaluation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::metrics::{prf_or_zero, ConfusionCounts};
use crate::raster::{flip_horizontal, flip_vertical, mask};
use crate::tiling::{crop, retile};
use crate::unet::{adam_step, loss, AdamState, Gradients, Tensor, UNet, UNetConfig};
use crate::{BackscatterRaster, Error, Result, WaterMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Training,
    Validation,
}

/// Co-registered image tile and binary target.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub image: BackscatterRaster,
    pub mask: WaterMask,
    pub source_id: String,
    pub split: Split,
    pub date: Option<NaiveDate>,
}

impl SamplePair {
    pub fn input_tensor(&self) -> Tensor<f32> {
        image_tensor(&self.image)
    }

    pub fn target_tensor(&self) -> Tensor<f32> {
        let data = self.mask.band(0).iter().map(|&v| f32::from(v == mask::WATER)).collect();
        Tensor::from_vec(1, self.mask.height(), self.mask.width(), data).expect("mask shape")
    }
}

/// Normalize quantized backscatter to `[0, 1]` by `/255`; nodata becomes 0.
pub fn image_tensor(image: &BackscatterRaster) -> Tensor<f32> {
    let data = image.data().iter().map(|&v| f32::from(v) / 255.0).collect();
    Tensor::from_vec(image.bands(), image.height(), image.width(), data).expect("raster shape")
}

/// Centre-crop image and mask to `crop x crop` and cut both into `tile x tile`
/// pairs, row by row.
pub fn prepare_pairs(
    image: &BackscatterRaster,
    target: &WaterMask,
    crop_size: usize,
    tile: usize,
    source_id: &str,
    split: Split,
    date: Option<NaiveDate>,
) -> Result<Vec<SamplePair>> {
    if image.grid() != target.grid() {
        return Err(Error::GridMismatch("image and mask are not co-registered"));
    }
    if !target.is_binary() {
        return Err(Error::NonBinaryMask);
    }
    if tile == 0 || crop_size % tile != 0 {
        return Err(Error::InvalidConfig(format!("crop {crop_size} is not a multiple of tile {tile}")));
    }
    let (w, h) = (image.width(), image.height());
    if w < crop_size || h < crop_size {
        return Err(Error::TooSmall("raster is smaller than the training crop"));
    }
    let (x0, y0) = ((w - crop_size) / 2, (h - crop_size) / 2);
    let image = crop(image, x0, y0, crop_size, crop_size)?;
    let target = crop(target, x0, y0, crop_size, crop_size)?;
    let images = retile(&image, tile, 0)?;
    let masks = retile(&target, tile, 0)?;
    Ok(images
        .into_iter()
        .zip(masks)
        .map(|(i, m)| SamplePair {
            image: i.raster,
            mask: m.raster,
            source_id: source_id.into(),
            split,
            date,
        })
        .collect())
}

/// Independent horizontal and vertical flips, each with probability 0.5,
/// applied identically to image and mask.
pub fn augment<R: Rng + ?Sized>(pair: &SamplePair, rng: &mut R) -> SamplePair {
    let mut out = pair.clone();
    if rng.random_bool(0.5) {
        out.image = flip_horizontal(&out.image);
        out.mask = flip_horizontal(&out.mask);
    }
    if rng.random_bool(0.5) {
        out.image = flip_vertical(&out.image);
        out.mask = flip_vertical(&out.mask);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::InvalidConfig("epochs and batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: UNet<f32>,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Confusion counts and derived scores over a set of pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub mean_loss: f64,
}

pub fn evaluate(model: &UNet<f32>, pairs: &[SamplePair]) -> Result<Evaluation> {
    let mut counts = ConfusionCounts::default();
    let (mut probs, mut truth) = (Vec::new(), Vec::new());
    for pair in pairs {
        let x = pair.input_tensor();
        let t = pair.target_tensor();
        let p = model.forward_one(&x)?;
        truth.extend_from_slice(&t.data);
        for (&prob, &truth) in p.data.iter().zip(pair.mask.band(0)) {
            counts.record(u8::from(prob >= 0.5), truth);
        }
        probs.extend_from_slice(&p.data);
    }
    let prf = prf_or_zero(&counts);
    Ok(Evaluation {
        counts,
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        accuracy: counts.accuracy(),
        mean_loss: if pairs.is_empty() { 0.0 } else { f64::from(loss::loss(&probs, &truth)?) },
    })
}

/// Train from a seeded He initialization. Each epoch is one shuffled pass over
/// the training pairs; the checkpoint with the highest validation pixel
/// accuracy is returned (earliest epoch on ties).
pub fn train(pairs: &[SamplePair], model_config: UNetConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(pairs, model_config, config, |_| {})
}

pub fn train_with(
    pairs: &[SamplePair],
    model_config: UNetConfig,
    config: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    train_custom(pairs, model_config, config, |m, x, t| m.loss_and_gradients(x, t), on_epoch)
}

/// Batch loss and gradients for the current model, so callers can fan a batch
/// out over worker threads.
pub trait BatchGradient: FnMut(&UNet<f32>, &[Tensor<f32>], &[Tensor<f32>]) -> Result<(f32, Gradients<f32>)> {}

impl<F> BatchGradient for F where F: FnMut(&UNet<f32>, &[Tensor<f32>], &[Tensor<f32>]) -> Result<(f32, Gradients<f32>)> {}

/// [`train_with`] with a caller-supplied batch gradient.
pub fn train_custom(
    pairs: &[SamplePair],
    model_config: UNetConfig,
    config: &TrainConfig,
    mut batch_gradient: impl BatchGradient,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    model_config.validate()?;
    let training: Vec<&SamplePair> = pairs.iter().filter(|p| p.split == Split::Training).collect();
    let validation: Vec<SamplePair> = pairs.iter().filter(|p| p.split == Split::Validation).cloned().collect();
    if training.is_empty() {
        return Err(Error::EmptySplit("training"));
    }
    if validation.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    let mut model = UNet::<f32>::init(model_config, config.seed)?;
    let mut adam = AdamState::new(&model, config.learning_rate);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(config.seed ^ 0x5EED_0F_A0A0);
    let mut order: Vec<usize> = (0..training.len()).collect();
    let mut best: Option<(f64, usize, UNet<f32>)> = None;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let mut inputs = Vec::with_capacity(chunk.len());
            let mut targets = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let p = augment(training[i], &mut rng);
                inputs.push(p.input_tensor());
                targets.push(p.target_tensor());
            }
            let (l, grads) = batch_gradient(&model, &inputs, &targets)?;
            adam_step(&mut model, &grads, &mut adam)?;
            loss_sum += f64::from(l);
            batches += 1;
        }
        let eval = evaluate(&model, &validation)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_loss: eval.mean_loss,
            val_accuracy: eval.accuracy,
            val_f1: eval.f1,
        };
        on_epoch(&record);
        history.push(record);
        if best.as_ref().is_none_or(|(acc, _, _)| eval.accuracy > *acc) {
            best = Some((eval.accuracy, epoch, model.clone()));
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
    })
}
