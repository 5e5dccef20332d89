//! From stored records to network-ready samples, reconstructions and scores.
//!
//! A [`Sample`] holds the undersampled k-space, the sensitivity maps
//! estimated from its central calibration lines, and both ground-truth views
//! (recombined image and per-coil images), all divided by one intensity
//! scale.

use crate::baselines;
use crate::cascade::{self, CascadeModel, Prediction};
use crate::coils::{combine, estimate_sensitivities, SensitivityMaps};
use crate::data::{derive_seed, DatasetRecord};
use crate::error::{ensure_shape, Error, Result};
use crate::fft;
use crate::image::{CoilStack, ComplexImage};
use crate::metrics;
use crate::sampling::{apply_mask, generate_mask, SamplingMask};

pub const NORMALIZATION_PERCENTILE: f64 = 0.99;
pub const DEFAULT_POCSENSE_ITERS: usize = 30;
pub const DEFAULT_POCSENSE_STEP: f64 = 1.0;

const STREAM_REMASK: u64 = 0x5245_4D41_534B;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub protocol: String,
    pub s0: CoilStack,
    pub mask: SamplingMask,
    pub maps: SensitivityMaps,
    pub truth_image: ComplexImage,
    pub truth_coils: CoilStack,
    /// Intensity divisor applied to `s0` and both truths.
    pub scale: f64,
}

impl Sample {
    /// Pixels scored by the metrics: the support of the estimated maps.
    pub fn roi(&self) -> &[bool] {
        self.maps.support()
    }

    pub fn acceleration(&self) -> f64 {
        self.mask.height() as f64 / self.mask.sampled_lines().len().max(1) as f64
    }
}

/// Percentile of `values` by the nearest-rank rule.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// 99th-percentile root-sum-of-squares magnitude of the zero-filled coil images.
pub fn normalization_scale(s0: &CoilStack) -> Result<f64> {
    let mut imgs = s0.clone();
    fft::ifft_coils_inplace(&mut imgs);
    let scale = percentile(&imgs.rss(), NORMALIZATION_PERCENTILE);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "cannot normalize undersampled data with percentile magnitude {scale}"
        )));
    }
    Ok(scale)
}

/// The record's stored mask, or a fresh one at `af` when given.
///
/// Regenerated masks are seeded from the record seed, the acceleration and
/// `salt`, so distinct salts give distinct masks for one record.
pub fn derive_mask(record: &DatasetRecord, af: Option<f64>, calib: usize, salt: u64) -> Result<SamplingMask> {
    let (h, w) = record.dims();
    match af {
        None => {
            ensure_shape(record.mask.dims() == (h, w), || {
                format!("record mask {:?} vs k-space {:?}", record.mask.dims(), (h, w))
            })?;
            Ok(record.mask.clone())
        }
        Some(af) => {
            let seed = derive_seed(record.seed ^ af.to_bits(), STREAM_REMASK, salt);
            generate_mask(h, w, af, calib, seed)
        }
    }
}

pub fn prepare_sample(record: &DatasetRecord, mask: &SamplingMask, calib: usize) -> Result<Sample> {
    let mut s0 = apply_mask(&record.kspace, mask)?;
    let maps = estimate_sensitivities(&s0, mask, calib)?;
    let scale = normalization_scale(&s0)?;
    let inv = 1.0 / scale;
    s0.scale(inv);
    let mut truth_coils = fft::ifft2c_coils(&record.kspace);
    truth_coils.scale(inv);
    let truth_image = combine(&truth_coils, &maps)?;
    Ok(Sample {
        id: record.id.clone(),
        protocol: record.protocol.clone(),
        s0,
        mask: mask.clone(),
        maps,
        truth_image,
        truth_coils,
        scale,
    })
}

#[derive(Debug, Clone, Copy)]
pub enum Method<'a> {
    ZeroFilled,
    Pocsense { iters: usize, step: f64 },
    Model(&'a CascadeModel),
}

impl Method<'_> {
    pub fn label(&self) -> &'static str {
        match self {
            Method::ZeroFilled => "Zero-filled",
            Method::Pocsense { .. } => "POCSENSE",
            Method::Model(m) => m.variant().display_name(),
        }
    }

    pub fn pocsense() -> Self {
        Method::Pocsense {
            iters: DEFAULT_POCSENSE_ITERS,
            step: DEFAULT_POCSENSE_STEP,
        }
    }
}

/// Recombined reconstruction in the sample's normalized units. DC-CNN coil
/// images are recombined with the estimated maps for scoring only.
pub fn reconstruct(sample: &Sample, method: Method<'_>) -> Result<ComplexImage> {
    match method {
        Method::ZeroFilled => baselines::zero_filled(&sample.s0, &sample.maps, &sample.mask),
        Method::Pocsense { iters, step } => {
            Ok(baselines::pocsense_iterate(&sample.s0, &sample.maps, &sample.mask, iters, step)?.image)
        }
        Method::Model(model) => match cascade::forward(model, &sample.s0, &sample.mask, Some(&sample.maps))? {
            Prediction::Image(x) => Ok(x),
            Prediction::Coils(c) => combine(&c, &sample.maps),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub psnr: f64,
    pub ssim: f64,
}

pub fn score(pred: &ComplexImage, sample: &Sample) -> Result<Scores> {
    let roi = Some(sample.roi());
    Ok(Scores {
        psnr: metrics::psnr(pred, &sample.truth_image, roi)?,
        ssim: metrics::ssim(pred, &sample.truth_image, roi)?,
    })
}
