//! The attention-to-warp model: outer concatenation, U-Net forward pass,
//! row-wise softmax into warping paths, warping, the symmetric pair
//! distance, the contrastive and pre-training losses, and reverse-mode
//! gradients for all of them.

pub mod checkpoint;
pub mod graph;
pub mod ops;
pub mod unet;

use ndarray::{Array2, Array3};

use crate::core::{validate_pair, TimeSeries, UNetParams, WarpingMatrix};
use crate::error::{Error, Result};

pub use graph::{record_pretrain_loss, record_training_loss, LossGraph};
pub use unet::{unet_forward, unet_forward_recorded, UNetGrads, UNetTrace};

/// The (2K, W, W) input tensor of the warping network: cell (i, j) holds the
/// concatenation of `a`'s point i (first K channels) and `b`'s point j (last
/// K channels).
#[derive(Debug, Clone, PartialEq)]
pub struct OuterConcat {
    tensor: Array3<f64>,
    k: usize,
}

impl OuterConcat {
    pub fn tensor(&self) -> &Array3<f64> {
        &self.tensor
    }

    /// Channel `c` of cell (i, j), i.e. entry c of [a_i, b_j].
    pub fn value(&self, i: usize, j: usize, c: usize) -> f64 {
        self.tensor[[c, i, j]]
    }

    pub fn w(&self) -> usize {
        self.tensor.dim().1
    }

    pub fn channels(&self) -> usize {
        self.tensor.dim().0
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Builds the outer concatenation of two equal-shape series.
pub fn outer_concat(a: &TimeSeries, b: &TimeSeries) -> Result<OuterConcat> {
    validate_pair(a, b)?;
    let (w, k) = (a.w(), a.k());
    let mut tensor = Array3::zeros((2 * k, w, w));
    for c in 0..k {
        for i in 0..w {
            let av = a.values()[[i, c]];
            for j in 0..w {
                tensor[[c, i, j]] = av;
            }
        }
        for j in 0..w {
            let bv = b.values()[[j, c]];
            for i in 0..w {
                tensor[[k + c, i, j]] = bv;
            }
        }
    }
    Ok(OuterConcat { tensor, k })
}

/// Row-wise softmax with max-subtraction; the result is row-stochastic.
pub fn row_softmax(m: &Array2<f64>) -> Result<WarpingMatrix> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    WarpingMatrix::normalized(ops::softmax_rows(m))
}

/// Softmaxes the raw output into the two warping paths: `P_s` from the rows
/// of `p_raw` and `P_t` from the rows of its transpose.
pub fn make_paths(p_raw: &Array2<f64>) -> Result<(WarpingMatrix, WarpingMatrix)> {
    let p_s = row_softmax(p_raw)?;
    let p_t = row_softmax(&p_raw.t().to_owned())?;
    Ok((p_s, p_t))
}

/// Warps `x` by a normalized warping matrix: output row i is the convex
/// combination `p_i * x`.
pub fn warp(p: &WarpingMatrix, x: &TimeSeries) -> Result<TimeSeries> {
    if !p.is_normalized() {
        return Err(Error::NotNormalized);
    }
    if p.w() != x.w() {
        return Err(Error::ShapeMismatch {
            w_a: p.w(),
            k_a: p.w(),
            w_b: x.w(),
            k_b: x.k(),
        });
    }
    TimeSeries::new(p.entries().dot(x.values()))
}

fn mean_sq_residual(x: &TimeSeries, y: &TimeSeries) -> f64 {
    let diff = x.values() - y.values();
    diff.iter().map(|v| v * v).sum::<f64>() / (x.w() * x.k()) as f64
}

/// The symmetric model distance: the average of the per-element squared
/// residuals of `a` against the warped `b` and of `b` against the warped
/// `a`.
pub fn pair_distance(
    a: &TimeSeries,
    b: &TimeSeries,
    p_s: &WarpingMatrix,
    p_t: &WarpingMatrix,
) -> Result<f64> {
    validate_pair(a, b)?;
    let warped_b = warp(p_s, b)?;
    let warped_a = warp(p_t, a)?;
    Ok(0.5 * (mean_sq_residual(a, &warped_b) + mean_sq_residual(b, &warped_a)))
}

/// One directed contrastive term: mean squared residual for matching pairs,
/// hinge `max(0, tau - residual)` for non-matching pairs.
pub fn contrastive_loss(
    x: &TimeSeries,
    warped: &TimeSeries,
    matching: bool,
    tau: f64,
) -> Result<f64> {
    validate_pair(x, warped)?;
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::InvalidConfig("margin tau must be > 0".into()));
    }
    let d = mean_sq_residual(x, warped);
    Ok(if matching { d } else { (tau - d).max(0.0) })
}

/// Sum of the two directed contrastive terms.
pub fn training_loss(
    a: &TimeSeries,
    b: &TimeSeries,
    p_s: &WarpingMatrix,
    p_t: &WarpingMatrix,
    matching: bool,
    tau: f64,
) -> Result<f64> {
    let warped_b = warp(p_s, b)?;
    let warped_a = warp(p_t, a)?;
    Ok(contrastive_loss(a, &warped_b, matching, tau)?
        + contrastive_loss(b, &warped_a, matching, tau)?)
}

/// Pre-training loss: mean squared error between the predicted path and the
/// DTW target, both row-stochastic.
pub fn pretrain_loss(p_s: &WarpingMatrix, p_dtw: &WarpingMatrix) -> Result<f64> {
    if !p_s.is_normalized() || !p_dtw.is_normalized() {
        return Err(Error::NotNormalized);
    }
    if p_s.w() != p_dtw.w() {
        return Err(Error::ShapeMismatch {
            w_a: p_s.w(),
            k_a: p_s.w(),
            w_b: p_dtw.w(),
            k_b: p_dtw.w(),
        });
    }
    let diff = p_s.entries() - p_dtw.entries();
    let w = p_s.w() as f64;
    Ok(diff.iter().map(|v| v * v).sum::<f64>() / (w * w))
}

/// Full inference path: U-Net forward, softmax into paths, symmetric
/// distance.
pub fn model_distance(params: &UNetParams, a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
    let x = outer_concat(a, b)?;
    let p_raw = unet_forward(&x, params)?;
    let (p_s, p_t) = make_paths(&p_raw)?;
    pair_distance(a, b, &p_s, &p_t)
}
