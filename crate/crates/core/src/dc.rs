//! Data-consistency layer.
//!
//! On acquired lines the network's k-space estimate is blended with the
//! measurement, `λ·s_cnn + (1−λ)·s_0`; unacquired samples keep `s_cnn`.

use rustfft::num_complex::Complex64;

use crate::coils::{self, SensitivityMaps};
use crate::error::{ensure_shape, Error, Result};
use crate::fft;
use crate::image::{CoilStack, ComplexImage};
use crate::sampling::SamplingMask;

/// Blending weight used for freshly initialized layers.
pub const DEFAULT_INITIAL_LAMBDA: f64 = 0.05;

/// Trainable blending weight, stored as an unconstrained logit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcParam {
    pub raw: f64,
    pub trainable: bool,
}

impl DcParam {
    pub fn from_lambda(lambda: f64) -> Self {
        Self {
            raw: logit(lambda),
            trainable: true,
        }
    }

    pub fn frozen(lambda: f64) -> Self {
        Self {
            raw: logit(lambda),
            trainable: false,
        }
    }

    pub fn lambda(&self) -> f64 {
        sigmoid(self.raw)
    }

    /// `dλ/draw`.
    pub fn dlambda_draw(&self) -> f64 {
        let l = self.lambda();
        l * (1.0 - l)
    }
}

impl Default for DcParam {
    fn default() -> Self {
        Self::from_lambda(DEFAULT_INITIAL_LAMBDA)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`]; 0 and 1 map to ∓∞ so hard replacement is exact.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("lambda {lambda} outside [0, 1]")))
    }
}

fn check_percoil(s_cnn: &CoilStack, s0: &CoilStack, mask: &SamplingMask) -> Result<()> {
    ensure_shape(s_cnn.same_shape(s0) && s_cnn.dims() == mask.dims(), || {
        format!(
            "s_cnn {}x{:?}, s_0 {}x{:?}, mask {:?}",
            s_cnn.n_coil(),
            s_cnn.dims(),
            s0.n_coil(),
            s0.dims(),
            mask.dims()
        )
    })
}

/// Replaces each coil's acquired lines in place.
pub(crate) fn blend_inplace(s: &mut CoilStack, s0: &CoilStack, mask: &SamplingMask, lambda: f64) {
    let w = s.width();
    let rows = mask.row_flags();
    for (coil, meas) in s.coils_mut().zip(s0.coils()) {
        for ((row, mrow), &on) in coil.chunks_mut(w).zip(meas.chunks(w)).zip(rows) {
            if on {
                for (z, m) in row.iter_mut().zip(mrow) {
                    *z = *z * lambda + *m * (1.0 - lambda);
                }
            }
        }
    }
}

/// Backward of [`blend_inplace`]: scales `grad` by λ on acquired lines in
/// place and returns `∂L/∂λ`. `s_pre` is the k-space before blending.
pub(crate) fn blend_backward(
    grad: &mut CoilStack,
    s_pre: &CoilStack,
    s0: &CoilStack,
    mask: &SamplingMask,
    lambda: f64,
) -> f64 {
    let w = grad.width();
    let rows = mask.row_flags();
    let mut dlambda = 0.0;
    for c in 0..grad.n_coil() {
        let (pre, meas) = (s_pre.coil(c), s0.coil(c));
        let g = grad.coil_mut(c);
        for (r, &on) in rows.iter().enumerate() {
            if !on {
                continue;
            }
            for k in r * w..(r + 1) * w {
                let diff = pre[k] - meas[k];
                dlambda += g[k].re * diff.re + g[k].im * diff.im;
                g[k] *= lambda;
            }
        }
    }
    dlambda
}

/// Per-coil consistency in k-space.
pub fn dc_percoil(s_cnn: &CoilStack, s0: &CoilStack, mask: &SamplingMask, lambda: f64) -> Result<CoilStack> {
    check_percoil(s_cnn, s0, mask)?;
    check_lambda(lambda)?;
    let mut out = s_cnn.clone();
    blend_inplace(&mut out, s0, mask, lambda);
    Ok(out)
}

/// Output of [`dc_combined_traced`]: the recombined image plus the per-coil
/// k-space right after replacement.
#[derive(Debug, Clone)]
pub struct CombinedDcTrace {
    pub image: ComplexImage,
    pub replaced_kspace: CoilStack,
}

/// Encode, replace acquired samples, recombine.
pub fn dc_combined(
    x_cnn: &ComplexImage,
    s0: &CoilStack,
    maps: &SensitivityMaps,
    mask: &SamplingMask,
    lambda: f64,
) -> Result<ComplexImage> {
    dc_combined_traced(x_cnn, s0, maps, mask, lambda).map(|t| t.image)
}

pub fn dc_combined_traced(
    x_cnn: &ComplexImage,
    s0: &CoilStack,
    maps: &SensitivityMaps,
    mask: &SamplingMask,
    lambda: f64,
) -> Result<CombinedDcTrace> {
    ensure_shape(x_cnn.dims() == maps.dims() && s0.n_coil() == maps.n_coil(), || {
        format!(
            "image {:?}, maps {}x{:?}, s_0 {} coils",
            x_cnn.dims(),
            maps.n_coil(),
            maps.dims(),
            s0.n_coil()
        )
    })?;
    check_lambda(lambda)?;
    let mut s = coils::expand_slice(x_cnn.data(), maps);
    check_percoil(&s, s0, mask)?;
    fft::fft_coils_inplace(&mut s);
    blend_inplace(&mut s, s0, mask, lambda);
    let replaced_kspace = s.clone();
    fft::ifft_coils_inplace(&mut s);
    let image = coils::combine(&s, maps)?;
    Ok(CombinedDcTrace {
        image,
        replaced_kspace,
    })
}

/// Forward pass of the combined layer that keeps the pre-blend k-space for
/// the backward pass.
pub(crate) fn dc_combined_forward(
    x_cnn: &[Complex64],
    s0: &CoilStack,
    maps: &SensitivityMaps,
    mask: &SamplingMask,
    lambda: f64,
) -> (Vec<Complex64>, CoilStack) {
    let mut s = coils::expand_slice(x_cnn, maps);
    fft::fft_coils_inplace(&mut s);
    let pre = s.clone();
    blend_inplace(&mut s, s0, mask, lambda);
    fft::ifft_coils_inplace(&mut s);
    let mut out = vec![Complex64::new(0.0, 0.0); x_cnn.len()];
    coils::combine_into(&s, maps, &mut out);
    (out, pre)
}

/// Backward of [`dc_combined_forward`]: returns `(∂L/∂x_cnn, ∂L/∂λ)`.
pub(crate) fn dc_combined_backward(
    grad_out: &[Complex64],
    pre: &CoilStack,
    s0: &CoilStack,
    maps: &SensitivityMaps,
    mask: &SamplingMask,
    lambda: f64,
) -> (Vec<Complex64>, f64) {
    // Adjoint of combine∘ifft is fft∘expand.
    let mut g = coils::expand_slice(grad_out, maps);
    fft::fft_coils_inplace(&mut g);
    let dlambda = blend_backward(&mut g, pre, s0, mask, lambda);
    fft::ifft_coils_inplace(&mut g);
    let mut gx = vec![Complex64::new(0.0, 0.0); grad_out.len()];
    coils::combine_into(&g, maps, &mut gx);
    (gx, dlambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coils::simulate_sensitivities;
    use crate::sampling::{apply_mask, generate_mask};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut ChaCha8Rng) -> Complex64 {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    }

    fn random_stack(n: usize, h: usize, w: usize, seed: u64) -> CoilStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CoilStack::new(n, h, w, (0..n * h * w).map(|_| rand_c(&mut rng)).collect()).unwrap()
    }

    fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexImage::from_fn(h, w, |_, _| rand_c(&mut rng))
    }

    fn unit_maps(h: usize, w: usize) -> SensitivityMaps {
        let ones = ComplexImage::from_fn(h, w, |_, _| Complex64::new(1.0, 0.0));
        SensitivityMaps::from_profiles(CoilStack::from_images(vec![ones]).unwrap())
    }

    #[test]
    fn lambda_parameterization() {
        let p = DcParam::default();
        assert!((p.lambda() - 0.05).abs() < 1e-15);
        assert_eq!(DcParam::from_lambda(0.0).lambda(), 0.0);
        assert_eq!(DcParam::from_lambda(1.0).lambda(), 1.0);
        for raw in [-40.0, -3.0, 0.0, 2.5, 40.0] {
            let l = DcParam { raw, trainable: true }.lambda();
            assert!(l > 0.0 && l < 1.0 || raw.abs() > 35.0);
        }
    }

    #[test]
    fn percoil_limits_and_arithmetic() {
        let mask = SamplingMask::from_lines(4, 4, vec![1, 2], 0).unwrap();
        let s_cnn = random_stack(2, 4, 4, 1);
        let s0 = apply_mask(&random_stack(2, 4, 4, 2), &mask).unwrap();

        let hard = dc_percoil(&s_cnn, &s0, &mask, 0.0).unwrap();
        let soft = dc_percoil(&s_cnn, &s0, &mask, 1.0).unwrap();
        assert_eq!(soft, s_cnn);
        for c in 0..2 {
            for r in 0..4 {
                for k in r * 4..(r + 1) * 4 {
                    let expect = if mask.is_sampled(r) { s0.coil(c)[k] } else { s_cnn.coil(c)[k] };
                    assert_eq!(hard.coil(c)[k], expect);
                }
            }
        }

        let one = SamplingMask::full(1, 1);
        let a = CoilStack::new(1, 1, 1, vec![Complex64::new(4.0, 0.0)]).unwrap();
        let b = CoilStack::new(1, 1, 1, vec![Complex64::new(8.0, 0.0)]).unwrap();
        let out = dc_percoil(&a, &b, &one, 0.25).unwrap();
        assert_eq!(out.data()[0], Complex64::new(7.0, 0.0));
    }

    #[test]
    fn percoil_validates_inputs() {
        let mask = SamplingMask::full(4, 4);
        let a = random_stack(2, 4, 4, 0);
        assert!(dc_percoil(&a, &a, &mask, 1.5).is_err());
        assert!(dc_percoil(&a, &a, &mask, -0.1).is_err());
        assert!(dc_percoil(&a, &random_stack(3, 4, 4, 0), &mask, 0.5).is_err());
        assert!(dc_percoil(&a, &a, &SamplingMask::full(4, 5), 0.5).is_err());
    }

    #[test]
    fn hard_percoil_is_idempotent() {
        let mask = generate_mask(8, 8, 2.0, 2, 3).unwrap();
        let s0 = random_stack(3, 8, 8, 4);
        let once = dc_percoil(&random_stack(3, 8, 8, 5), &s0, &mask, 0.0).unwrap();
        assert_eq!(dc_percoil(&once, &s0, &mask, 0.0).unwrap(), once);
    }

    #[test]
    fn percoil_matches_scalar_loop() {
        let mask = generate_mask(4, 4, 2.0, 2, 9).unwrap();
        let s_cnn = random_stack(2, 4, 4, 10);
        let s0 = random_stack(2, 4, 4, 11);
        let lambda = 0.3;
        let out = dc_percoil(&s_cnn, &s0, &mask, lambda).unwrap();
        for i in 0..32 {
            let row = (i % 16) / 4;
            let (a, b) = (s_cnn.data()[i], s0.data()[i]);
            let (re, im) = if mask.sampled_lines().contains(&row) {
                (lambda * a.re + (1.0 - lambda) * b.re, lambda * a.im + (1.0 - lambda) * b.im)
            } else {
                (a.re, a.im)
            };
            assert!((out.data()[i] - Complex64::new(re, im)).norm() < 1e-15);
        }
    }

    #[test]
    fn combined_with_empty_mask_or_unit_lambda_is_identity_on_support() {
        let maps = simulate_sensitivities(8, 8, 3, 2).unwrap();
        let x = random_image(8, 8, 3);
        let s0 = random_stack(3, 8, 8, 4);
        for (mask, lambda) in [(SamplingMask::empty(8, 8), 0.0), (generate_mask(8, 8, 2.0, 2, 1).unwrap(), 1.0)] {
            let out = dc_combined(&x, &s0, &maps, &mask, lambda).unwrap();
            for (a, b) in out.data().iter().zip(x.data()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn combined_hard_replacement_of_zero_image_is_zero_filled() {
        let maps = unit_maps(8, 8);
        let mask = generate_mask(8, 8, 2.0, 2, 6).unwrap();
        let s0 = apply_mask(&random_stack(1, 8, 8, 7), &mask).unwrap();
        let out = dc_combined(&ComplexImage::zeros(8, 8), &s0, &maps, &mask, 0.0).unwrap();
        let zf = fft::ifft2c(&apply_mask(&s0, &mask).unwrap().coil_image(0)).unwrap();
        for (a, b) in out.data().iter().zip(zf.data()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn combined_trace_is_exact_on_acquired_lines() {
        let maps = simulate_sensitivities(8, 8, 2, 8).unwrap();
        let mask = generate_mask(8, 8, 2.0, 2, 8).unwrap();
        let s0 = apply_mask(&random_stack(2, 8, 8, 9), &mask).unwrap();
        let t = dc_combined_traced(&random_image(8, 8, 10), &s0, &maps, &mask, 0.0).unwrap();
        for c in 0..2 {
            for (k, on) in mask.sample_flags().enumerate() {
                if on {
                    assert_eq!(t.replaced_kspace.coil(c)[k], s0.coil(c)[k]);
                }
            }
        }
    }

    #[test]
    fn combined_is_affine() {
        // f(a·x) − f(0) = a·(f(x) − f(0)) for fixed s_0.
        let maps = simulate_sensitivities(4, 4, 2, 1).unwrap();
        let mask = generate_mask(4, 4, 2.0, 2, 2).unwrap();
        let s0 = random_stack(2, 4, 4, 3);
        let x = random_image(4, 4, 4);
        let f0 = dc_combined(&ComplexImage::zeros(4, 4), &s0, &maps, &mask, 0.4).unwrap();
        let fx = dc_combined(&x, &s0, &maps, &mask, 0.4).unwrap();
        let mut x3 = x.clone();
        x3.scale(3.0);
        let f3 = dc_combined(&x3, &s0, &maps, &mask, 0.4).unwrap();
        for i in 0..16 {
            let lhs = f3.data()[i] - f0.data()[i];
            let rhs = (fx.data()[i] - f0.data()[i]) * 3.0;
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn percoil_derivative_by_finite_differences() {
        let mask = SamplingMask::from_lines(4, 4, vec![0, 3], 0).unwrap();
        let s_cnn = random_stack(1, 4, 4, 12);
        let s0 = random_stack(1, 4, 4, 13);
        let lambda = 0.35;
        let h = 1e-6;
        for k in 0..16 {
            let mut plus = s_cnn.clone();
            let mut minus = s_cnn.clone();
            plus.data_mut()[k].re += h;
            minus.data_mut()[k].re -= h;
            let fp = dc_percoil(&plus, &s0, &mask, lambda).unwrap().data()[k].re;
            let fm = dc_percoil(&minus, &s0, &mask, lambda).unwrap().data()[k].re;
            let d = (fp - fm) / (2.0 * h);
            let expect = if mask.is_sampled(k / 4) { lambda } else { 1.0 };
            assert!((d - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn combined_backward_matches_finite_differences() {
        let maps = simulate_sensitivities(4, 4, 2, 21).unwrap();
        let mask = generate_mask(4, 4, 2.0, 2, 22).unwrap();
        let s0 = apply_mask(&random_stack(2, 4, 4, 23), &mask).unwrap();
        let x = random_image(4, 4, 24);
        let weights = random_image(4, 4, 25);
        let lambda = 0.3;
        // L = Re<w, f(x, λ)>, so ∂L/∂out = w.
        let loss = |x: &ComplexImage, l: f64| {
            let out = dc_combined(x, &s0, &maps, &mask, l).unwrap();
            crate::image::inner_product(weights.data(), out.data()).unwrap().re
        };
        let (_, pre) = dc_combined_forward(x.data(), &s0, &maps, &mask, lambda);
        let (gx, dl) = dc_combined_backward(weights.data(), &pre, &s0, &maps, &mask, lambda);
        let h = 1e-6;
        let fd_l = (loss(&x, lambda + h) - loss(&x, lambda - h)) / (2.0 * h);
        assert!((fd_l - dl).abs() < 1e-7);
        for k in 0..16 {
            for part in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                let delta = if part == 0 { Complex64::new(h, 0.0) } else { Complex64::new(0.0, h) };
                xp.data_mut()[k] += delta;
                xm.data_mut()[k] -= delta;
                let fd = (loss(&xp, lambda) - loss(&xm, lambda)) / (2.0 * h);
                let an = if part == 0 { gx[k].re } else { gx[k].im };
                assert!((fd - an).abs() < 1e-7);
            }
        }
    }
}
