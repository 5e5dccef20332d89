//! The two training objectives and their gradients with respect to the
//! network output.

use std::fmt;
use std::str::FromStr;

use crate::cascade::{Prediction, Variant};
use crate::coils::{combine, expand, SensitivityMaps};
use crate::error::{ensure_shape, Error, Result};
use crate::image::{CoilStack, ComplexImage};
use crate::pipeline::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `Σ_p |x(p) − x̂(p)|²` on the recombined image.
    Recombined,
    /// `Σ_i Σ_p |conj(C_i)(x_i − x̂_i)|²` on coil images.
    Coilwise,
}

impl LossKind {
    /// The objective matching each network's output space.
    pub fn default_for(variant: Variant) -> Self {
        match variant {
            Variant::DPocsense => LossKind::Recombined,
            Variant::DcCnn => LossKind::Coilwise,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Recombined => "recombined",
            LossKind::Coilwise => "coilwise",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recombined" => Ok(LossKind::Recombined),
            "coilwise" => Ok(LossKind::Coilwise),
            other => Err(Error::InvalidArgument(format!("unknown loss {other:?} (recombined|coilwise)"))),
        }
    }
}

pub fn loss_recombined(pred: &ComplexImage, truth: &ComplexImage) -> Result<f64> {
    ensure_shape(pred.dims() == truth.dims(), || {
        format!("prediction {:?} vs truth {:?}", pred.dims(), truth.dims())
    })?;
    Ok(pred.data().iter().zip(truth.data()).map(|(p, t)| (t - p).norm_sqr()).sum())
}

fn check_coilwise(pred: &CoilStack, truth: &CoilStack, maps: &SensitivityMaps) -> Result<()> {
    ensure_shape(
        pred.same_shape(truth) && pred.n_coil() == maps.n_coil() && pred.dims() == maps.dims(),
        || {
            format!(
                "prediction {}x{:?}, truth {}x{:?}, maps {}x{:?}",
                pred.n_coil(),
                pred.dims(),
                truth.n_coil(),
                truth.dims(),
                maps.n_coil(),
                maps.dims()
            )
        },
    )
}

pub fn loss_coilwise(pred: &CoilStack, truth: &CoilStack, maps: &SensitivityMaps) -> Result<f64> {
    check_coilwise(pred, truth, maps)?;
    Ok(pred
        .data()
        .iter()
        .zip(truth.data())
        .zip(maps.maps().data())
        .map(|((p, t), c)| (c.conj() * (t - p)).norm_sqr())
        .sum())
}

/// `(loss, ∂L/∂re + i ∂L/∂im)` against the sample's truth in the view `kind`.
pub(crate) fn loss_and_grad(pred: &Prediction, sample: &Sample, kind: LossKind) -> Result<(f64, Prediction)> {
    let maps = &sample.maps;
    match (pred, kind) {
        (Prediction::Image(x), LossKind::Recombined) => {
            let (l, g) = recombined_grad(x, &sample.truth_image)?;
            Ok((l, Prediction::Image(g)))
        }
        (Prediction::Coils(c), LossKind::Coilwise) => {
            let (l, g) = coilwise_grad(c, &sample.truth_coils, maps)?;
            Ok((l, Prediction::Coils(g)))
        }
        (Prediction::Image(x), LossKind::Coilwise) => {
            let (l, g) = coilwise_grad(&expand(x, maps)?, &sample.truth_coils, maps)?;
            Ok((l, Prediction::Image(combine(&g, maps)?)))
        }
        (Prediction::Coils(c), LossKind::Recombined) => {
            let (l, g) = recombined_grad(&combine(c, maps)?, &sample.truth_image)?;
            Ok((l, Prediction::Coils(expand(&g, maps)?)))
        }
    }
}

fn recombined_grad(pred: &ComplexImage, truth: &ComplexImage) -> Result<(f64, ComplexImage)> {
    let loss = loss_recombined(pred, truth)?;
    let mut g = pred.clone();
    for (gi, t) in g.data_mut().iter_mut().zip(truth.data()) {
        *gi = (*gi - t) * 2.0;
    }
    Ok((loss, g))
}

fn coilwise_grad(pred: &CoilStack, truth: &CoilStack, maps: &SensitivityMaps) -> Result<(f64, CoilStack)> {
    let loss = loss_coilwise(pred, truth, maps)?;
    let mut g = pred.clone();
    for ((gi, t), c) in g.data_mut().iter_mut().zip(truth.data()).zip(maps.maps().data()) {
        *gi = (*gi - t) * (2.0 * c.norm_sqr());
    }
    Ok((loss, g))
}
