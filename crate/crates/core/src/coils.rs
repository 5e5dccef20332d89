//! Coil sensitivity maps: simulation, calibration-region estimate, and the
//! pixelwise expand / combine pair.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use crate::error::{ensure_shape, Error, Result};
use crate::fft;
use crate::image::{CoilStack, ComplexImage};
use crate::sampling::{central_lines, SamplingMask};

/// Fraction of the peak root-sum-of-squares below which a pixel is air.
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 0.05;

/// Per-coil complex maps with unit root-sum-of-squares on `support` and
/// zeros elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMaps {
    maps: CoilStack,
    support: Vec<bool>,
}

impl SensitivityMaps {
    /// Normalizes raw coil profiles to unit root-sum-of-squares wherever the
    /// profile energy is nonzero.
    pub fn from_profiles(profiles: CoilStack) -> Self {
        let rss = profiles.rss();
        let support: Vec<bool> = rss.iter().map(|&r| r > 0.0).collect();
        Self::normalize(profiles, &rss, support)
    }

    /// Wraps maps that are already normalized (e.g. loaded from disk). Support
    /// is any pixel with nonzero energy.
    pub fn from_normalized(maps: CoilStack) -> Self {
        let support = maps.rss().iter().map(|&r| r > 0.0).collect();
        Self { maps, support }
    }

    fn normalize(mut profiles: CoilStack, rss: &[f64], support: Vec<bool>) -> Self {
        for coil in profiles.coils_mut() {
            for ((z, &r), &on) in coil.iter_mut().zip(rss).zip(&support) {
                *z = if on { *z / r } else { Complex64::new(0.0, 0.0) };
            }
        }
        Self {
            maps: profiles,
            support,
        }
    }

    pub fn n_coil(&self) -> usize {
        self.maps.n_coil()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.maps.dims()
    }

    pub fn maps(&self) -> &CoilStack {
        &self.maps
    }

    pub fn coil(&self, i: usize) -> &[Complex64] {
        self.maps.coil(i)
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    /// `Σ_i |C_i(p)|²` at every pixel.
    pub fn energy(&self) -> Vec<f64> {
        self.maps.rss().into_iter().map(|r| r * r).collect()
    }
}

/// Smooth Gaussian-profile coils placed at equally spaced angles around the
/// field of view, each with a seeded linear phase ramp.
pub fn simulate_sensitivities(height: usize, width: usize, n_coil: usize, seed: u64) -> Result<SensitivityMaps> {
    if n_coil == 0 {
        return Err(Error::InvalidArgument("n_coil must be >= 1".into()));
    }
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "map dimensions must be positive, got {height}x{width}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cy, cx) = (height as f64 / 2.0, width as f64 / 2.0);
    let radius = 0.6 * cy.max(cx);
    let spread = 0.55 * height.min(width) as f64;
    let mut planes = Vec::with_capacity(n_coil);
    for i in 0..n_coil {
        let angle = 2.0 * PI * i as f64 / n_coil as f64 + rng.gen_range(-0.1..0.1);
        let (py, px) = (cy + radius * angle.sin(), cx + radius * angle.cos());
        let offset = rng.gen_range(-PI..PI);
        let ramp_y = rng.gen_range(-1.0..1.0) * PI / height as f64;
        let ramp_x = rng.gen_range(-1.0..1.0) * PI / width as f64;
        planes.push(ComplexImage::from_fn(height, width, |r, c| {
            let (dy, dx) = (r as f64 - py, c as f64 - px);
            let mag = (-(dy * dy + dx * dx) / (2.0 * spread * spread)).exp();
            let phase = offset + ramp_y * (r as f64 - cy) + ramp_x * (c as f64 - cx);
            Complex64::from_polar(mag, phase)
        }));
    }
    Ok(SensitivityMaps::from_profiles(CoilStack::from_images(planes)?))
}

/// Raised-cosine taper over `n` calibration lines, zero-free at the ends.
pub(crate) fn calibration_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let t = PI * (j as f64 + 0.5) / n as f64;
            t.sin().powi(2)
        })
        .collect()
}

/// Low-resolution estimate from the fully sampled centre lines, normalized by
/// root-sum-of-squares. Pixels below `DEFAULT_SUPPORT_THRESHOLD` of the peak
/// are excluded from support.
pub fn estimate_sensitivities(s0: &CoilStack, mask: &SamplingMask, calib: usize) -> Result<SensitivityMaps> {
    estimate_sensitivities_with_threshold(s0, mask, calib, DEFAULT_SUPPORT_THRESHOLD)
}

pub fn estimate_sensitivities_with_threshold(
    s0: &CoilStack,
    mask: &SamplingMask,
    calib: usize,
    threshold: f64,
) -> Result<SensitivityMaps> {
    ensure_shape(s0.dims() == mask.dims(), || {
        format!("k-space {:?} vs mask {:?}", s0.dims(), mask.dims())
    })?;
    let (h, w) = s0.dims();
    if calib < 4 || calib > h {
        return Err(Error::InvalidConfig(format!(
            "calibration width {calib} must lie in [4, {h}]"
        )));
    }
    let lines = central_lines(h, calib);
    if !mask.contains_lines(lines.clone()) {
        return Err(Error::InvalidConfig(format!(
            "mask lacks calibration lines {}..{}",
            lines.start, lines.end
        )));
    }
    let window = calibration_window(calib);
    let mut low = CoilStack::zeros(s0.n_coil(), h, w);
    for (dst, src) in low.coils_mut().zip(s0.coils()) {
        for (j, row) in lines.clone().enumerate() {
            for c in 0..w {
                dst[row * w + c] = src[row * w + c] * window[j];
            }
        }
        fft::ifft_plane(dst, h, w);
    }
    let rss = low.rss();
    let peak = rss.iter().cloned().fold(0.0, f64::max);
    let cutoff = threshold * peak;
    let support: Vec<bool> = rss.iter().map(|&r| peak > 0.0 && r >= cutoff && r > 0.0).collect();
    Ok(SensitivityMaps::normalize(low, &rss, support))
}

/// `x(p) = Σ_i conj(C_i(p))·x_i(p)`.
pub fn combine(coil_imgs: &CoilStack, maps: &SensitivityMaps) -> Result<ComplexImage> {
    check_stack(coil_imgs, maps)?;
    let (h, w) = coil_imgs.dims();
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    combine_into(coil_imgs, maps, &mut out);
    Ok(ComplexImage::from_raw(h, w, out))
}

pub(crate) fn combine_into(coil_imgs: &CoilStack, maps: &SensitivityMaps, out: &mut [Complex64]) {
    out.fill(Complex64::new(0.0, 0.0));
    for (img, map) in coil_imgs.coils().zip(maps.maps.coils()) {
        for ((o, x), m) in out.iter_mut().zip(img).zip(map) {
            *o += m.conj() * x;
        }
    }
}

/// `x_i(p) = C_i(p)·x(p)`.
pub fn expand(img: &ComplexImage, maps: &SensitivityMaps) -> Result<CoilStack> {
    ensure_shape(img.dims() == maps.dims(), || {
        format!("image {:?} vs maps {:?}", img.dims(), maps.dims())
    })?;
    Ok(expand_slice(img.data(), maps))
}

pub(crate) fn expand_slice(img: &[Complex64], maps: &SensitivityMaps) -> CoilStack {
    let (h, w) = maps.dims();
    let mut data = Vec::with_capacity(maps.n_coil() * h * w);
    for map in maps.maps.coils() {
        data.extend(map.iter().zip(img).map(|(m, x)| m * x));
    }
    CoilStack::from_raw(maps.n_coil(), h, w, data)
}

fn check_stack(stack: &CoilStack, maps: &SensitivityMaps) -> Result<()> {
    ensure_shape(
        stack.dims() == maps.dims() && stack.n_coil() == maps.n_coil(),
        || {
            format!(
                "{} coils of {:?} vs {} maps of {:?}",
                stack.n_coil(),
                stack.dims(),
                maps.n_coil(),
                maps.dims()
            )
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::inner_product;
    use crate::sampling::{apply_mask, generate_mask};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexImage::from_fn(h, w, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn random_stack(n: usize, h: usize, w: usize, seed: u64) -> CoilStack {
        let imgs = (0..n).map(|i| random_image(h, w, seed * 100 + i as u64)).collect();
        CoilStack::from_images(imgs).unwrap()
    }

    fn max_energy_error(maps: &SensitivityMaps) -> f64 {
        maps.energy()
            .iter()
            .zip(maps.support())
            .filter(|(_, &s)| s)
            .map(|(e, _)| (e - 1.0).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn single_simulated_coil_has_unit_magnitude() {
        let maps = simulate_sensitivities(12, 10, 1, 3).unwrap();
        assert!(maps.coil(0).iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn simulated_maps_are_normalized_and_deterministic() {
        let a = simulate_sensitivities(32, 24, 8, 9).unwrap();
        assert!(a.support().iter().all(|&s| s));
        assert!(max_energy_error(&a) <= 1e-6);
        assert_eq!(a, simulate_sensitivities(32, 24, 8, 9).unwrap());
        assert!(simulate_sensitivities(4, 4, 0, 0).is_err());
    }

    #[test]
    fn combine_inverts_expand_on_support() {
        let maps = simulate_sensitivities(8, 8, 4, 1).unwrap();
        let y = random_image(8, 8, 2);
        let back = combine(&expand(&y, &maps).unwrap(), &maps).unwrap();
        for (a, b) in back.data().iter().zip(y.data()) {
            assert!((a - b).norm() < 1e-12);
        }
        let zero = combine(&CoilStack::zeros(4, 8, 8), &maps).unwrap();
        assert!(zero.data().iter().all(|z| z.norm() == 0.0));
        let zs = expand(&ComplexImage::zeros(8, 8), &maps).unwrap();
        assert!(zs.data().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn combine_matches_pixel_loop() {
        let maps = simulate_sensitivities(4, 4, 2, 5).unwrap();
        let stack = random_stack(2, 4, 4, 6);
        let got = combine(&stack, &maps).unwrap();
        for p in 0..16 {
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..2 {
                let (c, x) = (maps.coil(i)[p], stack.coil(i)[p]);
                re += c.re * x.re + c.im * x.im;
                im += c.re * x.im - c.im * x.re;
            }
            assert!((got.data()[p] - Complex64::new(re, im)).norm() < 1e-14);
        }
    }

    #[test]
    fn single_coil_expand_preserves_magnitude() {
        let maps = simulate_sensitivities(6, 6, 1, 0).unwrap();
        let x = random_image(6, 6, 1);
        let e = expand(&x, &maps).unwrap();
        for (a, b) in e.coil(0).iter().zip(x.data()) {
            assert!((a.norm() - b.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let maps = simulate_sensitivities(8, 8, 2, 0).unwrap();
        assert!(combine(&CoilStack::zeros(3, 8, 8), &maps).is_err());
        assert!(combine(&CoilStack::zeros(2, 8, 9), &maps).is_err());
        assert!(expand(&ComplexImage::zeros(8, 7), &maps).is_err());
    }

    fn blob_kspace(h: usize, w: usize, n: usize) -> (CoilStack, SensitivityMaps, ComplexImage) {
        let maps = simulate_sensitivities(h, w, n, 4).unwrap();
        let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
        let x = ComplexImage::from_fn(h, w, |r, c| {
            let d = ((r as f64 - cy) / (0.3 * h as f64)).powi(2) + ((c as f64 - cx) / (0.3 * w as f64)).powi(2);
            Complex64::from_polar((-d).exp(), 0.4 * (r as f64 - cy) / h as f64)
        });
        let ksp = fft::fft2c_coils(&expand(&x, &maps).unwrap());
        (ksp, maps, x)
    }

    #[test]
    fn estimate_is_normalized_on_support() {
        let (ksp, _, _) = blob_kspace(48, 40, 6);
        let mask = generate_mask(48, 40, 2.0, 24, 1).unwrap();
        let s0 = apply_mask(&ksp, &mask).unwrap();
        let est = estimate_sensitivities(&s0, &mask, 24).unwrap();
        assert!(max_energy_error(&est) <= 1e-6);
        for (i, &on) in est.support().iter().enumerate() {
            if !on {
                assert!((0..6).all(|c| est.coil(c)[i].norm() == 0.0));
            }
        }
    }

    #[test]
    fn single_coil_estimate_has_unit_magnitude() {
        let (ksp, _, _) = blob_kspace(32, 32, 1);
        let mask = generate_mask(32, 32, 2.0, 8, 0).unwrap();
        let s0 = apply_mask(&ksp, &mask).unwrap();
        let est = estimate_sensitivities(&s0, &mask, 8).unwrap();
        for (z, &on) in est.coil(0).iter().zip(est.support()) {
            if on {
                assert!((z.norm() - 1.0).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn estimate_requires_calibration_lines() {
        let (ksp, _, _) = blob_kspace(32, 32, 2);
        let mask = SamplingMask::from_lines(32, 32, vec![0, 1, 2, 3], 0).unwrap();
        assert!(estimate_sensitivities(&ksp, &mask, 8).is_err());
        assert!(estimate_sensitivities(&ksp, &SamplingMask::full(32, 32), 2).is_err());
    }

    /// Mean over support of the worst-coil deviation from the phase-aligned
    /// true maps `C_i · e^{iφ}`.
    fn estimate_error(est: &SensitivityMaps, truth: &SensitivityMaps, x: &ComplexImage) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for p in 0..x.len() {
            if !est.support()[p] {
                continue;
            }
            let phase = Complex64::from_polar(1.0, x.data()[p].arg());
            let worst = (0..est.n_coil())
                .map(|i| (est.coil(i)[p] - truth.coil(i)[p] * phase).norm())
                .fold(0.0, f64::max);
            total += worst;
            count += 1;
        }
        total / count as f64
    }

    #[test]
    fn calibration_estimate_tracks_fully_sampled_estimate() {
        let (ksp, truth, x) = blob_kspace(64, 64, 8);
        let mask = generate_mask(64, 64, 2.0, 24, 3).unwrap();
        let s0 = apply_mask(&ksp, &mask).unwrap();
        let calib = estimate_sensitivities(&s0, &mask, 24).unwrap();
        let full = estimate_sensitivities(&ksp, &SamplingMask::full(64, 64), 64).unwrap();
        let e_calib = estimate_error(&calib, &truth, &x);
        let e_full = estimate_error(&full, &truth, &x);
        // Measured: calib 0.0158, full 0.0024.
        assert!(e_full < 0.005, "full-data estimate error {e_full}");
        assert!(e_calib < 0.025, "calibration estimate error {e_calib}");
    }

    proptest! {
        #[test]
        fn expand_and_combine_are_adjoint(seed in any::<u64>(), n in 1usize..5) {
            let maps = simulate_sensitivities(6, 5, n, seed).unwrap();
            let x = random_image(6, 5, seed ^ 1);
            let y = random_stack(n, 6, 5, seed % 1000);
            let lhs = inner_product(expand(&x, &maps).unwrap().data(), y.data()).unwrap();
            let rhs = inner_product(x.data(), combine(&y, &maps).unwrap().data()).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
        }
    }
}
