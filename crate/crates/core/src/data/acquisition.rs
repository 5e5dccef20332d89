//! Multi-coil acquisition simulation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;

use crate::coils::{self, SensitivityMaps};
use crate::error::{ensure_shape, Error, Result};
use crate::fft;
use crate::image::{CoilStack, ComplexImage};
use crate::sampling::SamplingMask;

/// One simulated (or externally produced) acquisition.
///
/// `kspace` is fully sampled; the mask is applied when the record is used,
/// so one record can serve several acceleration factors.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: String,
    pub protocol: String,
    pub seed: u64,
    pub noise_sigma: f64,
    pub kspace: CoilStack,
    pub mask: SamplingMask,
    /// Acceleration and calibration width the stored mask was drawn with.
    pub af: Option<f64>,
    pub calib: Option<usize>,
    pub maps: Option<SensitivityMaps>,
}

impl DatasetRecord {
    pub fn n_coil(&self) -> usize {
        self.kspace.n_coil()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.kspace.dims()
    }

    /// Rounds the k-space (and maps) to single precision, matching what a
    /// write/read cycle produces.
    pub fn quantize_to_f32(&mut self) {
        fn q(data: &mut [Complex64]) {
            for z in data {
                *z = Complex64::new(z.re as f32 as f64, z.im as f32 as f64);
            }
        }
        q(self.kspace.data_mut());
        if let Some(maps) = &self.maps {
            let mut stack = maps.maps().clone();
            q(stack.data_mut());
            self.maps = Some(SensitivityMaps::from_normalized(stack));
        }
    }
}

/// `s_full = fft2c(expand(phantom, maps))` plus circular complex Gaussian
/// noise with `E|n|² = σ²` per sample.
pub fn simulate_acquisition(
    phantom: &ComplexImage,
    maps: &SensitivityMaps,
    mask: &SamplingMask,
    noise_sigma: f64,
    seed: u64,
) -> Result<DatasetRecord> {
    ensure_shape(phantom.dims() == maps.dims() && phantom.dims() == mask.dims(), || {
        format!(
            "phantom {:?}, maps {:?}, mask {:?}",
            phantom.dims(),
            maps.dims(),
            mask.dims()
        )
    })?;
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sigma {noise_sigma} must be >= 0")));
    }
    let mut kspace = coils::expand(phantom, maps)?;
    fft::fft_coils_inplace(&mut kspace);
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma / std::f64::consts::SQRT_2).expect("finite sigma");
        for z in kspace.data_mut() {
            *z += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    Ok(DatasetRecord {
        id: String::new(),
        protocol: String::new(),
        seed,
        noise_sigma,
        kspace,
        mask: mask.clone(),
        af: None,
        calib: None,
        maps: Some(maps.clone()),
    })
}
