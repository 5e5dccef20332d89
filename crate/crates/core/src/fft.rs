//! Centered, orthonormal 2D Fourier transform.
//!
//! The pixel at `(H/2, W/2)` (integer division) is the image origin and the
//! k-space sample at the same index is DC. Both directions scale by
//! `1/sqrt(H*W)`, so the transform is unitary and the inverse is the adjoint.

use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::image::{CoilStack, ComplexImage};

static PLANNER: Lazy<Mutex<FftPlanner<f64>>> = Lazy::new(|| Mutex::new(FftPlanner::new()));

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    let mut planner = PLANNER.lock().unwrap_or_else(|e| e.into_inner());
    planner.plan_fft(len, direction)
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "fft2c needs positive dimensions, got {height}x{width}"
        )));
    }
    Ok(())
}

/// Centered unitary 2D DFT of one row-major plane, in place.
pub(crate) fn transform_plane(plane: &mut [Complex64], height: usize, width: usize, direction: FftDirection) {
    debug_assert_eq!(plane.len(), height * width);
    let (h2, w2) = (height / 2, width / 2);

    // ifftshift: brings (H/2, W/2) to the origin.
    let mut buf = vec![Complex64::new(0.0, 0.0); plane.len()];
    for r in 0..height {
        let src_r = (r + h2) % height;
        for c in 0..width {
            buf[r * width + c] = plane[src_r * width + (c + w2) % width];
        }
    }

    plan(width, direction).process(&mut buf);

    let mut cols = vec![Complex64::new(0.0, 0.0); plane.len()];
    for r in 0..height {
        for c in 0..width {
            cols[c * height + r] = buf[r * width + c];
        }
    }
    plan(height, direction).process(&mut cols);

    // fftshift back, with orthonormal scaling.
    let scale = 1.0 / ((height * width) as f64).sqrt();
    for c in 0..width {
        let dst_c = (c + w2) % width;
        for r in 0..height {
            plane[((r + h2) % height) * width + dst_c] = cols[c * height + r] * scale;
        }
    }
}

pub(crate) fn fft_plane(plane: &mut [Complex64], height: usize, width: usize) {
    transform_plane(plane, height, width, FftDirection::Forward);
}

pub(crate) fn ifft_plane(plane: &mut [Complex64], height: usize, width: usize) {
    transform_plane(plane, height, width, FftDirection::Inverse);
}

/// Image to k-space.
pub fn fft2c(img: &ComplexImage) -> Result<ComplexImage> {
    let (h, w) = img.dims();
    check_dims(h, w)?;
    let mut out = img.clone();
    fft_plane(out.data_mut(), h, w);
    Ok(out)
}

/// k-space to image; exact inverse (and adjoint) of [`fft2c`].
pub fn ifft2c(ksp: &ComplexImage) -> Result<ComplexImage> {
    let (h, w) = ksp.dims();
    check_dims(h, w)?;
    let mut out = ksp.clone();
    ifft_plane(out.data_mut(), h, w);
    Ok(out)
}

/// [`fft2c`] applied to every coil plane.
pub fn fft2c_coils(stack: &CoilStack) -> CoilStack {
    let mut out = stack.clone();
    fft_coils_inplace(&mut out);
    out
}

/// [`ifft2c`] applied to every coil plane.
pub fn ifft2c_coils(stack: &CoilStack) -> CoilStack {
    let mut out = stack.clone();
    ifft_coils_inplace(&mut out);
    out
}

pub(crate) fn fft_coils_inplace(stack: &mut CoilStack) {
    let (h, w) = stack.dims();
    for coil in stack.coils_mut() {
        fft_plane(coil, h, w);
    }
}

pub(crate) fn ifft_coils_inplace(stack: &mut CoilStack) {
    let (h, w) = stack.dims();
    for coil in stack.coils_mut() {
        ifft_plane(coil, h, w);
    }
}
