//! Learned time warping for multivariate time-series metric learning.
//!
//! A U-Net attention model predicts a warping matrix between two equal-length
//! series. Row-wise softmax turns that matrix into a pair of row-stochastic
//! warping paths used to warp each series onto the other's time axis; the
//! symmetric mean squared residual of the warped pair is the learned distance.
//! Training combines a DTW-guided pre-training stage with contrastive
//! metric learning, and evaluation harnesses cover k-NN classification and
//! verification EER.

pub mod core;
pub mod data;
pub mod dtw;
pub mod error;
pub mod eval;
pub mod train;
pub mod warpnet;

pub use crate::core::{
    AdamConfig, LabeledSeries, MatchRatio, Pair, TimeSeries, TrainingConfig, UNetArch, UNetParams,
    WarpingMatrix,
};
pub use crate::error::{Error, Result};
