//! Cartesian phase-encode undersampling.
//!
//! Rows of a k-space plane are phase-encode lines; a mask keeps whole rows.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use crate::error::{ensure_shape, Error, Result};
use crate::image::CoilStack;

/// Number of fully sampled centre lines used by the acquisition protocol.
pub const DEFAULT_CALIB_LINES: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingMask {
    height: usize,
    width: usize,
    sampled_lines: Vec<usize>,
    seed: u64,
    row_flags: Vec<bool>,
}

impl SamplingMask {
    /// Builds a mask from an explicit line list. Lines are sorted and must be unique.
    pub fn from_lines(height: usize, width: usize, mut lines: Vec<usize>, seed: u64) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "mask dimensions must be positive, got {height}x{width}"
            )));
        }
        lines.sort_unstable();
        if let Some(&bad) = lines.iter().find(|&&l| l >= height) {
            return Err(Error::InvalidArgument(format!(
                "sampled line {bad} outside [0, {height})"
            )));
        }
        if lines.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate sampled line".into()));
        }
        let mut row_flags = vec![false; height];
        for &l in &lines {
            row_flags[l] = true;
        }
        Ok(Self {
            height,
            width,
            sampled_lines: lines,
            seed,
            row_flags,
        })
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self::from_lines(height, width, (0..height).collect(), 0).expect("valid full mask")
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self::from_lines(height, width, Vec::new(), 0).expect("valid empty mask")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sampled_lines(&self) -> &[usize] {
        &self.sampled_lines
    }

    pub fn is_sampled(&self, row: usize) -> bool {
        self.row_flags[row]
    }

    pub fn row_flags(&self) -> &[bool] {
        &self.row_flags
    }

    pub fn contains_lines(&self, lines: std::ops::Range<usize>) -> bool {
        lines.into_iter().all(|l| l < self.height && self.row_flags[l])
    }

    pub fn sampled_fraction(&self) -> f64 {
        self.sampled_lines.len() as f64 / self.height as f64
    }

    /// Per-sample flags over a full `height x width` plane.
    pub fn sample_flags(&self) -> impl Iterator<Item = bool> + '_ {
        self.row_flags
            .iter()
            .flat_map(move |&f| std::iter::repeat_n(f, self.width))
    }
}

/// The `calib` lines centred on `height / 2`.
pub fn central_lines(height: usize, calib: usize) -> std::ops::Range<usize> {
    let start = (height / 2).saturating_sub(calib / 2);
    let end = (start + calib).min(height);
    start..end
}

/// Line count kept at acceleration `af`.
pub fn line_budget(height: usize, af: f64) -> usize {
    (height as f64 / af).round() as usize
}

/// Random Cartesian mask: the `calib` central lines plus uniformly drawn
/// outer lines up to `round(height / af)` in total.
pub fn generate_mask(height: usize, width: usize, af: f64, calib: usize, seed: u64) -> Result<SamplingMask> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "mask dimensions must be positive, got {height}x{width}"
        )));
    }
    if !(af.is_finite() && af >= 1.0) {
        return Err(Error::InvalidConfig(format!("acceleration factor {af} must be >= 1")));
    }
    if calib > height {
        return Err(Error::InvalidConfig(format!(
            "calibration width {calib} exceeds {height} lines"
        )));
    }
    let budget = line_budget(height, af);
    if budget < calib {
        return Err(Error::InvalidConfig(format!(
            "round({height}/{af}) = {budget} lines cannot hold {calib} calibration lines"
        )));
    }
    let centre = central_lines(height, calib);
    let outer: Vec<usize> = (0..height).filter(|l| !centre.contains(l)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines: Vec<usize> = centre.collect();
    lines.extend(
        index::sample(&mut rng, outer.len(), budget - calib)
            .into_iter()
            .map(|i| outer[i]),
    );
    SamplingMask::from_lines(height, width, lines, seed)
}

/// Zeroes every unsampled line of every coil.
pub fn apply_mask(ksp: &CoilStack, mask: &SamplingMask) -> Result<CoilStack> {
    let mut out = ksp.clone();
    apply_mask_inplace(&mut out, mask)?;
    Ok(out)
}

pub(crate) fn apply_mask_inplace(ksp: &mut CoilStack, mask: &SamplingMask) -> Result<()> {
    ensure_shape(ksp.dims() == mask.dims(), || {
        format!("k-space {:?} vs mask {:?}", ksp.dims(), mask.dims())
    })?;
    let w = ksp.width();
    for coil in ksp.coils_mut() {
        mask_plane(coil, mask.row_flags(), w);
    }
    Ok(())
}

pub(crate) fn mask_plane(plane: &mut [Complex64], rows: &[bool], width: usize) {
    for (row, &keep) in plane.chunks_mut(width).zip(rows) {
        if !keep {
            row.fill(Complex64::new(0.0, 0.0));
        }
    }
}
