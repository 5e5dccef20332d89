//! Complex 2D images and coil-major multi-coil stacks.

use rustfft::num_complex::Complex64;

use crate::error::{ensure_shape, Error, Result};

/// A 2D grid of complex samples stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexImage {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        ensure_shape(data.len() == height * width, || {
            format!("{} samples for a {height}x{width} image", data.len())
        })?;
        if let Some(i) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(format!("image sample {i}")));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { height, width, data }
    }

    /// Wraps `data` without the finiteness scan. Length must still match.
    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self { height, width, data }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
        self.data[row * self.width + col] = v;
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.data).sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// `n_coil` images of identical size, stored coil-major.
///
/// Used both for per-coil images and per-coil k-space.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilStack {
    n_coil: usize,
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

pub type MultiCoilImage = CoilStack;
pub type MultiCoilKSpace = CoilStack;

impl CoilStack {
    pub fn new(n_coil: usize, height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if n_coil == 0 {
            return Err(Error::InvalidArgument("coil stack needs at least one coil".into()));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "coil dimensions must be positive, got {height}x{width}"
            )));
        }
        ensure_shape(data.len() == n_coil * height * width, || {
            format!(
                "{} samples for {n_coil} coils of {height}x{width}",
                data.len()
            )
        })?;
        if let Some(i) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(format!("coil sample {i}")));
        }
        Ok(Self {
            n_coil,
            height,
            width,
            data,
        })
    }

    pub fn zeros(n_coil: usize, height: usize, width: usize) -> Self {
        Self {
            n_coil,
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); n_coil * height * width],
        }
    }

    pub fn from_images(images: Vec<ComplexImage>) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidArgument("coil stack needs at least one coil".into()))?;
        let (h, w) = first.dims();
        let mut data = Vec::with_capacity(images.len() * h * w);
        for (i, img) in images.iter().enumerate() {
            ensure_shape(img.dims() == (h, w), || {
                format!("coil {i} is {:?}, coil 0 is {:?}", img.dims(), (h, w))
            })?;
            data.extend_from_slice(img.data());
        }
        Ok(Self {
            n_coil: images.len(),
            height: h,
            width: w,
            data,
        })
    }

    pub(crate) fn from_raw(n_coil: usize, height: usize, width: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), n_coil * height * width);
        Self {
            n_coil,
            height,
            width,
            data,
        }
    }

    pub fn n_coil(&self) -> usize {
        self.n_coil
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

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn coil(&self, i: usize) -> &[Complex64] {
        let n = self.plane_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn coil_mut(&mut self, i: usize) -> &mut [Complex64] {
        let n = self.plane_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn coils(&self) -> std::slice::Chunks<'_, Complex64> {
        self.data.chunks(self.plane_len())
    }

    pub fn coils_mut(&mut self) -> std::slice::ChunksMut<'_, Complex64> {
        let n = self.plane_len();
        self.data.chunks_mut(n)
    }

    pub fn coil_image(&self, i: usize) -> ComplexImage {
        ComplexImage::from_raw(self.height, self.width, self.coil(i).to_vec())
    }

    pub fn same_shape(&self, other: &CoilStack) -> bool {
        self.n_coil == other.n_coil && self.height == other.height && self.width == other.width
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.data).sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    /// Root-sum-of-squares over coils at each pixel.
    pub fn rss(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.plane_len()];
        for coil in self.coils() {
            for (a, z) in acc.iter_mut().zip(coil) {
                *a += z.norm_sqr();
            }
        }
        acc.iter_mut().for_each(|a| *a = a.sqrt());
        acc
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

pub(crate) fn norm_sqr(data: &[Complex64]) -> f64 {
    data.iter().map(|z| z.norm_sqr()).sum()
}

/// `Σ conj(a)·b` over all samples.
pub fn inner_product(a: &[Complex64], b: &[Complex64]) -> Result<Complex64> {
    ensure_shape(a.len() == b.len(), || {
        format!("inner product of {} and {} samples", a.len(), b.len())
    })?;
    Ok(a.iter().zip(b).map(|(x, y)| x.conj() * y).sum())
}
