//! Recorded loss computations and their reverse passes.
//!
//! A [`LossGraph`] captures one forward pass through the network together
//! with the loss-head gradient at the raw output, so `backward` can produce
//! gradients for every parameter without recomputing the forward.

use ndarray::Array2;

use crate::core::{Pair, TimeSeries, UNetParams, WarpingMatrix};
use crate::error::{Error, Result};
use crate::warpnet::ops::{softmax_rows, softmax_rows_backward};
use crate::warpnet::unet::{unet_backward, unet_forward_recorded, UNetGrads, UNetTrace};
use crate::warpnet::{outer_concat, OuterConcat};

/// Derivative of one contrastive term with respect to the mean squared
/// residual. The hinge uses subgradient 0 exactly at the margin.
fn contrastive_ddist(residual: f64, matching: bool, tau: f64) -> f64 {
    if matching {
        1.0
    } else if residual < tau {
        -1.0
    } else {
        0.0
    }
}

/// Contrastive training loss (both directions) evaluated from the raw
/// network output, along with its gradient with respect to that output.
pub fn training_loss_from_raw(
    p_raw: &Array2<f64>,
    a: &TimeSeries,
    b: &TimeSeries,
    matching: bool,
    tau: f64,
) -> Result<(f64, Array2<f64>)> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::InvalidConfig("margin tau must be > 0".into()));
    }
    let wk = (a.w() * a.k()) as f64;
    let p_s = softmax_rows(p_raw);
    let p_t = softmax_rows(&p_raw.t().to_owned());

    let warped_b = p_s.dot(b.values());
    let warped_a = p_t.dot(a.values());
    let res_s = a.values() - &warped_b;
    let res_t = b.values() - &warped_a;
    let d_s = res_s.iter().map(|v| v * v).sum::<f64>() / wk;
    let d_t = res_t.iter().map(|v| v * v).sum::<f64>() / wk;

    let loss_s = if matching { d_s } else { (tau - d_s).max(0.0) };
    let loss_t = if matching { d_t } else { (tau - d_t).max(0.0) };

    // d(loss)/d(warped) = d(loss)/d(D) * 2 (warped - x) / WK
    let c_s = contrastive_ddist(d_s, matching, tau) * 2.0 / wk;
    let c_t = contrastive_ddist(d_t, matching, tau) * 2.0 / wk;
    let grad_warped_b = res_s.mapv(|v| -v * c_s);
    let grad_warped_a = res_t.mapv(|v| -v * c_t);

    let grad_p_s = grad_warped_b.dot(&b.values().t());
    let grad_p_t = grad_warped_a.dot(&a.values().t());

    let mut grad_raw = softmax_rows_backward(&p_s, &grad_p_s);
    grad_raw += &softmax_rows_backward(&p_t, &grad_p_t).t();
    Ok((loss_s + loss_t, grad_raw))
}

/// Pre-training loss evaluated from the raw network output, along with its
/// gradient with respect to that output.
pub fn pretrain_loss_from_raw(
    p_raw: &Array2<f64>,
    p_dtw: &WarpingMatrix,
) -> Result<(f64, Array2<f64>)> {
    if !p_dtw.is_normalized() {
        return Err(Error::NotNormalized);
    }
    if p_raw.dim() != p_dtw.entries().dim() {
        return Err(Error::InconsistentShapes(format!(
            "raw output is {:?}, target is {:?}",
            p_raw.dim(),
            p_dtw.entries().dim()
        )));
    }
    let w2 = (p_raw.nrows() * p_raw.nrows()) as f64;
    let p_s = softmax_rows(p_raw);
    let diff = &p_s - p_dtw.entries();
    let loss = diff.iter().map(|v| v * v).sum::<f64>() / w2;
    let grad_p_s = diff.mapv(|v| 2.0 * v / w2);
    Ok((loss, softmax_rows_backward(&p_s, &grad_p_s)))
}

/// One recorded loss evaluation. `backward` consumes the recording, so a
/// second call reports [`Error::GraphNotRecorded`].
pub struct LossGraph {
    loss: f64,
    grad_p_raw: Array2<f64>,
    trace: Option<UNetTrace>,
}

impl LossGraph {
    pub fn loss(&self) -> f64 {
        self.loss
    }

    /// Gradients of the recorded loss with respect to every parameter.
    pub fn backward(&mut self, params: &UNetParams) -> Result<UNetGrads> {
        let trace = self.trace.take().ok_or(Error::GraphNotRecorded)?;
        Ok(unet_backward(params, &trace, &self.grad_p_raw))
    }
}

fn record(params: &UNetParams, x: &OuterConcat) -> Result<(Array2<f64>, UNetTrace)> {
    unet_forward_recorded(x, params)
}

/// Forward pass plus contrastive loss head, recorded for backprop.
pub fn record_training_loss(params: &UNetParams, pair: &Pair, tau: f64) -> Result<LossGraph> {
    let x = outer_concat(&pair.a, &pair.b)?;
    let (p_raw, trace) = record(params, &x)?;
    let (loss, grad_p_raw) = training_loss_from_raw(&p_raw, &pair.a, &pair.b, pair.matching, tau)?;
    Ok(LossGraph {
        loss,
        grad_p_raw,
        trace: Some(trace),
    })
}

/// Forward pass plus pre-training MSE head against a DTW target, recorded
/// for backprop.
pub fn record_pretrain_loss(
    params: &UNetParams,
    a: &TimeSeries,
    b: &TimeSeries,
    p_dtw: &WarpingMatrix,
) -> Result<LossGraph> {
    let x = outer_concat(a, b)?;
    let (p_raw, trace) = record(params, &x)?;
    let (loss, grad_p_raw) = pretrain_loss_from_raw(&p_raw, p_dtw)?;
    Ok(LossGraph {
        loss,
        grad_p_raw,
        trace: Some(trace),
    })
}
