//! Batch losses and exact reverse-mode gradients.

use rayon::prelude::*;

use crate::cascade::{self, CascadeGrads, CascadeModel};
use crate::error::{Error, Result};
use crate::pipeline::Sample;

use super::loss::{loss_and_grad, LossKind};

fn sample_gradient(model: &CascadeModel, sample: &Sample, kind: LossKind) -> Result<(f64, CascadeGrads)> {
    let (pred, tape) = cascade::forward_taped(model, &sample.s0, &sample.mask, Some(&sample.maps))?;
    let (loss, g_pred) = loss_and_grad(&pred, sample, kind)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss} on sample {:?}", sample.id)));
    }
    let grads = cascade::backward(model, &tape, &sample.s0, &sample.mask, Some(&sample.maps), &g_pred);
    if !grads.is_finite() {
        return Err(Error::NonFinite(format!("gradient on sample {:?} (loss {loss})", sample.id)));
    }
    Ok((loss, grads))
}

/// Mean loss over `batch` and its gradient with respect to every parameter.
///
/// Samples are processed in parallel; partial results are summed in batch
/// order so the output does not depend on scheduling.
pub fn compute_gradients(model: &CascadeModel, batch: &[Sample], kind: LossKind) -> Result<(f64, CascadeGrads)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let parts: Vec<(f64, CascadeGrads)> = batch
        .par_iter()
        .map(|s| sample_gradient(model, s, kind))
        .collect::<Result<_>>()?;
    let mut total = CascadeGrads::zeros_for(model);
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.add_assign(g);
    }
    let inv = 1.0 / batch.len() as f64;
    total.scale(inv);
    Ok((loss * inv, total))
}

/// Mean loss over `batch` without gradients.
pub fn batch_loss(model: &CascadeModel, batch: &[Sample], kind: LossKind) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let losses: Vec<f64> = batch
        .par_iter()
        .map(|s| {
            let pred = cascade::forward(model, &s.s0, &s.mask, Some(&s.maps))?;
            Ok(loss_and_grad(&pred, s, kind)?.0)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / batch.len() as f64)
}
