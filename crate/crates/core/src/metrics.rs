//! PSNR and SSIM on magnitude images.
//!
//! The peak `L` defaults to the maximum reference magnitude inside the region
//! of interest. SSIM uses an 11×11 Gaussian window (σ = 1.5), averaged over
//! window centres whose full window lies inside the frame.

use crate::error::{ensure_shape, Error, Result};
use crate::image::ComplexImage;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_pair(pred: &ComplexImage, reference: &ComplexImage, roi: Option<&[bool]>) -> Result<()> {
    ensure_shape(pred.dims() == reference.dims(), || {
        format!("prediction {:?} vs reference {:?}", pred.dims(), reference.dims())
    })?;
    if let Some(roi) = roi {
        ensure_shape(roi.len() == reference.len(), || {
            format!("roi has {} pixels, image {}", roi.len(), reference.len())
        })?;
    }
    Ok(())
}

fn in_roi(roi: Option<&[bool]>, i: usize) -> bool {
    roi.is_none_or(|r| r[i])
}

/// Largest reference magnitude inside `roi`.
pub fn peak_magnitude(reference: &ComplexImage, roi: Option<&[bool]>) -> f64 {
    reference
        .data()
        .iter()
        .enumerate()
        .filter(|(i, _)| in_roi(roi, *i))
        .map(|(_, z)| z.norm())
        .fold(0.0, f64::max)
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` when the magnitudes agree.
pub fn psnr(pred: &ComplexImage, reference: &ComplexImage, roi: Option<&[bool]>) -> Result<f64> {
    check_pair(pred, reference, roi)?;
    let peak = peak_magnitude(reference, roi);
    if peak == 0.0 {
        return Err(Error::UndefinedReference);
    }
    psnr_with_peak(pred, reference, roi, peak)
}

pub fn psnr_with_peak(pred: &ComplexImage, reference: &ComplexImage, roi: Option<&[bool]>, peak: f64) -> Result<f64> {
    check_pair(pred, reference, roi)?;
    if peak.is_nan() || peak <= 0.0 {
        return Err(Error::UndefinedReference);
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, (p, r)) in pred.data().iter().zip(reference.data()).enumerate() {
        if in_roi(roi, i) {
            sum += (p.norm() - r.norm()).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty region of interest".into()));
    }
    let mse = sum / n as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - half).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" Gaussian filter; output is `(h-10) x (w-10)`.
fn filter_valid(img: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..k).map(|j| g[j] * img[r * w + c + j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..k).map(|j| g[j] * rows[(r + j) * ow + c]).sum();
        }
    }
    out
}

/// Mean structural similarity over `roi`.
pub fn ssim(pred: &ComplexImage, reference: &ComplexImage, roi: Option<&[bool]>) -> Result<f64> {
    check_pair(pred, reference, roi)?;
    let peak = peak_magnitude(reference, roi);
    if peak == 0.0 {
        return Err(Error::UndefinedReference);
    }
    ssim_with_range(pred, reference, roi, peak)
}

pub fn ssim_with_range(pred: &ComplexImage, reference: &ComplexImage, roi: Option<&[bool]>, range: f64) -> Result<f64> {
    check_pair(pred, reference, roi)?;
    let (h, w) = reference.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "{h}x{w} frame is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let a = pred.magnitude();
    let b = reference.magnitude();
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let g = gaussian_window();
    let [mu_a, mu_b, e_aa, e_bb, e_ab] = [&a, &b, &aa, &bb, &ab].map(|v| filter_valid(v, h, w, &g));
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let half = SSIM_WINDOW / 2;
    let ow = w + 1 - SSIM_WINDOW;
    let (mut total, mut n) = (0.0, 0usize);
    for (i, &ma) in mu_a.iter().enumerate() {
        let (r, c) = (i / ow + half, i % ow + half);
        if !in_roi(roi, r * w + c) {
            continue;
        }
        let mb = mu_b[i];
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no SSIM window centre inside the region of interest".into()));
    }
    Ok(total / n as f64)
}
