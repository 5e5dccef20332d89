//! Ellipse phantoms with smooth polynomial phase.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::ComplexImage;

/// An ellipse in normalized coordinates: the frame spans `[-1, 1]` on both
/// axes, row axis first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center_row: f64,
    pub center_col: f64,
    pub radius_row: f64,
    pub radius_col: f64,
    /// Rotation in radians.
    pub angle: f64,
    pub intensity: f64,
}

impl Ellipse {
    fn contains(&self, u: f64, v: f64) -> bool {
        let (du, dv) = (u - self.center_row, v - self.center_col);
        let (s, c) = self.angle.sin_cos();
        let a = c * du + s * dv;
        let b = -s * du + c * dv;
        (a / self.radius_row).powi(2) + (b / self.radius_col).powi(2) <= 1.0
    }
}

/// `φ(u, v) = c0 + c1·u + c2·v + c3·u·v + c4·u² + c5·v²` in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseModel {
    pub coeffs: [f64; 6],
}

impl PhaseModel {
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let c = &self.coeffs;
        c[0] + c[1] * u + c[2] * v + c[3] * u * v + c[4] * u * u + c[5] * v * v
    }
}

fn normalized(r: usize, c: usize, height: usize, width: usize) -> (f64, f64) {
    let u = (r as f64 - (height / 2) as f64) / (height as f64 / 2.0);
    let v = (c as f64 - (width / 2) as f64) / (width as f64 / 2.0);
    (u, v)
}

/// Additive ellipse magnitudes clipped to `[0, 1]`, times `e^{iφ}`.
pub fn render_ellipses(height: usize, width: usize, ellipses: &[Ellipse], phase: &PhaseModel) -> ComplexImage {
    ComplexImage::from_fn(height, width, |r, c| {
        let (u, v) = normalized(r, c, height, width);
        let mag: f64 = ellipses.iter().filter(|e| e.contains(u, v)).map(|e| e.intensity).sum();
        Complex64::from_polar(mag.clamp(0.0, 1.0), phase.eval(u, v))
    })
}

/// Synthetic stand-ins for five clinical acquisition protocols. Each one
/// draws ellipses and phase from different ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    AxialT2Fs,
    CoronalPd,
    CoronalPdFs,
    SagittalPd,
    SagittalT2Fs,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::AxialT2Fs,
        Protocol::CoronalPd,
        Protocol::CoronalPdFs,
        Protocol::SagittalPd,
        Protocol::SagittalT2Fs,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Protocol::AxialT2Fs => "axial_t2fs",
            Protocol::CoronalPd => "coronal_pd",
            Protocol::CoronalPdFs => "coronal_pdfs",
            Protocol::SagittalPd => "sagittal_pd",
            Protocol::SagittalT2Fs => "sagittal_t2fs",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Protocol::AxialT2Fs => "Axial T2 FS",
            Protocol::CoronalPd => "Coronal PD",
            Protocol::CoronalPdFs => "Coronal PDFS",
            Protocol::SagittalPd => "Sagittal PD",
            Protocol::SagittalT2Fs => "Sagittal T2 FS",
        }
    }

    fn style(self) -> Style {
        match self {
            Protocol::AxialT2Fs => Style { features: (6, 10), body_intensity: (0.2, 0.4), feature_intensity: (0.3, 1.0), phase: 0.6 },
            Protocol::CoronalPd => Style { features: (8, 14), body_intensity: (0.5, 0.8), feature_intensity: (0.1, 0.5), phase: 0.3 },
            Protocol::CoronalPdFs => Style { features: (6, 12), body_intensity: (0.3, 0.5), feature_intensity: (0.2, 0.8), phase: 0.5 },
            Protocol::SagittalPd => Style { features: (10, 16), body_intensity: (0.5, 0.8), feature_intensity: (0.1, 0.4), phase: 0.3 },
            Protocol::SagittalT2Fs => Style { features: (5, 9), body_intensity: (0.2, 0.4), feature_intensity: (0.4, 1.0), phase: 0.8 },
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.tag() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown protocol {s:?}")))
    }
}

struct Style {
    features: (usize, usize),
    body_intensity: (f64, f64),
    feature_intensity: (f64, f64),
    phase: f64,
}

fn draw(rng: &mut ChaCha8Rng, style: &Style, n_ellipses: usize) -> (Vec<Ellipse>, PhaseModel) {
    let mut ellipses = Vec::with_capacity(n_ellipses);
    ellipses.push(Ellipse {
        center_row: rng.gen_range(-0.05..0.05),
        center_col: rng.gen_range(-0.05..0.05),
        radius_row: rng.gen_range(0.6..0.85),
        radius_col: rng.gen_range(0.5..0.8),
        angle: rng.gen_range(-0.3..0.3),
        intensity: rng.gen_range(style.body_intensity.0..style.body_intensity.1),
    });
    for _ in 1..n_ellipses {
        ellipses.push(Ellipse {
            center_row: rng.gen_range(-0.5..0.5),
            center_col: rng.gen_range(-0.45..0.45),
            radius_row: rng.gen_range(0.04..0.3),
            radius_col: rng.gen_range(0.04..0.3),
            angle: rng.gen_range(-PI..PI),
            intensity: rng.gen_range(style.feature_intensity.0..style.feature_intensity.1),
        });
    }
    let mut coeffs = [0.0; 6];
    coeffs[0] = rng.gen_range(-PI..PI);
    for c in &mut coeffs[1..] {
        *c = rng.gen_range(-style.phase..style.phase);
    }
    (ellipses, PhaseModel { coeffs })
}

const DEFAULT_STYLE: Style = Style {
    features: (6, 12),
    body_intensity: (0.3, 0.7),
    feature_intensity: (0.1, 1.0),
    phase: 0.5,
};

/// A seeded phantom: one body ellipse plus `n_ellipses - 1` interior features.
pub fn make_phantom(height: usize, width: usize, seed: u64, n_ellipses: usize) -> Result<ComplexImage> {
    if n_ellipses == 0 {
        return Err(Error::InvalidArgument("phantom needs at least one ellipse".into()));
    }
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!("bad phantom size {height}x{width}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ellipses, phase) = draw(&mut rng, &DEFAULT_STYLE, n_ellipses);
    Ok(render_ellipses(height, width, &ellipses, &phase))
}

/// Phantom whose ellipse count, contrast and phase follow `protocol`.
pub fn make_protocol_phantom(protocol: Protocol, height: usize, width: usize, seed: u64) -> Result<ComplexImage> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!("bad phantom size {height}x{width}")));
    }
    let style = protocol.style();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(style.features.0..=style.features.1) + 1;
    let (ellipses, phase) = draw(&mut rng, &style, n);
    Ok(render_ellipses(height, width, &ellipses, &phase))
}
