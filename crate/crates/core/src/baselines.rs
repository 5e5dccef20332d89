//! Non-learned references: zero-filled and projected-Landweber POCSENSE.

use crate::coils::SensitivityMaps;
use crate::dc;
use crate::encoding::{adjoint_op, forward_op};
use crate::error::{Error, Result};
use crate::image::{CoilStack, ComplexImage};
use crate::sampling::SamplingMask;

/// `E^H s_0`.
pub fn zero_filled(s0: &CoilStack, maps: &SensitivityMaps, mask: &SamplingMask) -> Result<ComplexImage> {
    adjoint_op(s0, maps, mask)
}

#[derive(Debug, Clone)]
pub struct PocsenseResult {
    pub image: ComplexImage,
    /// `‖E x − s_0‖₂` after each iteration.
    pub residuals: Vec<f64>,
}

impl PocsenseResult {
    pub fn is_monotone(&self) -> bool {
        self.residuals
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300)
    }
}

fn residual(x: &ComplexImage, s0: &CoilStack, maps: &SensitivityMaps, mask: &SamplingMask) -> Result<f64> {
    let mut r = forward_op(x, maps, mask)?;
    for (a, b) in r.data_mut().iter_mut().zip(s0.data()) {
        *a -= b;
    }
    // s_0 off the mask does not enter the data term.
    crate::sampling::apply_mask_inplace(&mut r, mask)?;
    Ok(r.norm())
}

/// Alternates a gradient step on `½‖Ex − s_0‖²` with hard replacement of
/// the acquired samples.
pub fn pocsense_iterate(
    s0: &CoilStack,
    maps: &SensitivityMaps,
    mask: &SamplingMask,
    iters: usize,
    step: f64,
) -> Result<PocsenseResult> {
    if iters == 0 {
        return Err(Error::InvalidArgument("POCSENSE needs at least one iteration".into()));
    }
    if !(step.is_finite() && step >= 0.0) {
        return Err(Error::InvalidArgument(format!("step {step} must be finite and >= 0")));
    }
    let mut x = zero_filled(s0, maps, mask)?;
    let mut residuals = Vec::with_capacity(iters);
    for it in 0..iters {
        if step > 0.0 {
            let mut r = forward_op(&x, maps, mask)?;
            for (a, b) in r.data_mut().iter_mut().zip(s0.data()) {
                *a -= b;
            }
            let g = adjoint_op(&r, maps, mask)?;
            for (xi, gi) in x.data_mut().iter_mut().zip(g.data()) {
                *xi -= gi * step;
            }
        }
        x = dc::dc_combined(&x, s0, maps, mask, 0.0)?;
        if !x.is_finite() {
            return Err(Error::NonFinite(format!(
                "POCSENSE iterate {it}; residual trace {residuals:?}"
            )));
        }
        residuals.push(residual(&x, s0, maps, mask)?);
    }
    Ok(PocsenseResult { image: x, residuals })
}
