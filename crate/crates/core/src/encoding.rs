//! SENSE encoding operator `E = M·F·C` and its adjoint `E^H = C^H·F^H·M`.

use crate::coils::{self, SensitivityMaps};
use crate::error::{ensure_shape, Result};
use crate::fft;
use crate::image::{CoilStack, ComplexImage};
use crate::sampling::{self, SamplingMask};

fn check(dims: (usize, usize), maps: &SensitivityMaps, mask: &SamplingMask) -> Result<()> {
    ensure_shape(dims == maps.dims() && dims == mask.dims(), || {
        format!(
            "operand {:?}, maps {:?}, mask {:?}",
            dims,
            maps.dims(),
            mask.dims()
        )
    })
}

/// Image to masked multi-coil k-space.
pub fn forward_op(x: &ComplexImage, maps: &SensitivityMaps, mask: &SamplingMask) -> Result<CoilStack> {
    check(x.dims(), maps, mask)?;
    let mut ksp = coils::expand_slice(x.data(), maps);
    fft::fft_coils_inplace(&mut ksp);
    sampling::apply_mask_inplace(&mut ksp, mask)?;
    Ok(ksp)
}

/// Masked multi-coil k-space back to one recombined image.
pub fn adjoint_op(s: &CoilStack, maps: &SensitivityMaps, mask: &SamplingMask) -> Result<ComplexImage> {
    check(s.dims(), maps, mask)?;
    ensure_shape(s.n_coil() == maps.n_coil(), || {
        format!("{} coils vs {} maps", s.n_coil(), maps.n_coil())
    })?;
    let mut imgs = sampling::apply_mask(s, mask)?;
    fft::ifft_coils_inplace(&mut imgs);
    coils::combine(&imgs, maps)
}
