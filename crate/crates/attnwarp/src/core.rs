//! Shared domain types: series, pairs, warping matrices, model parameters,
//! and training configuration. Construction validates invariants; all types
//! are immutable afterwards and safe to share across threads.

use ndarray::{Array1, Array2, Array4, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on row sums of a normalized warping matrix.
pub const ROW_SUM_TOL: f64 = 1e-6;

/// A length-W sequence of K-dimensional real vectors. Row `i` is the data
/// point at time step `i`. Entries are guaranteed finite, W >= 1, K >= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Array2<f64>,
}

impl TimeSeries {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InconsistentShapes(format!(
                "time series must be at least 1x1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self { values })
    }

    /// Build from row vectors; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let w = rows.len();
        let k = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InconsistentShapes(
                "rows have differing lengths".into(),
            ));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((w, k), flat)
            .map_err(|e| Error::InconsistentShapes(e.to_string()))?;
        Self::new(values)
    }

    /// Temporal length W.
    pub fn w(&self) -> usize {
        self.values.nrows()
    }

    /// Dimension count K.
    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }
}

/// A time series together with its class identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub series: TimeSeries,
    pub label: String,
}

impl LabeledSeries {
    pub fn new(series: TimeSeries, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::InvalidConfig("label must be non-empty".into()));
        }
        Ok(Self { series, label })
    }
}

/// Checks that two series can form a pair: equal W and K, finite entries.
pub fn validate_pair(a: &TimeSeries, b: &TimeSeries) -> Result<()> {
    if !a.values().iter().all(|v| v.is_finite()) || !b.values().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if a.w() != b.w() || a.k() != b.k() {
        return Err(Error::ShapeMismatch {
            w_a: a.w(),
            k_a: a.k(),
            w_b: b.w(),
            k_b: b.k(),
        });
    }
    Ok(())
}

/// A pair of equal-shape series with a binary match label
/// (`matching == true` means same class).
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub a: TimeSeries,
    pub b: TimeSeries,
    pub matching: bool,
}

impl Pair {
    pub fn new(a: TimeSeries, b: TimeSeries, matching: bool) -> Result<Self> {
        validate_pair(&a, &b)?;
        Ok(Self { a, b, matching })
    }
}

/// A W x W matrix of alignment decisions. `normalized` is true once the
/// entries are the output of a row-wise softmax: each entry in [0, 1] and
/// every row summing to 1 within [`ROW_SUM_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct WarpingMatrix {
    entries: Array2<f64>,
    normalized: bool,
}

impl WarpingMatrix {
    /// Wraps a raw (pre-softmax) square matrix.
    pub fn raw(entries: Array2<f64>) -> Result<Self> {
        Self::validate_square_finite(&entries)?;
        Ok(Self {
            entries,
            normalized: false,
        })
    }

    /// Wraps a row-stochastic matrix, checking the normalization invariant.
    pub fn normalized(entries: Array2<f64>) -> Result<Self> {
        Self::validate_square_finite(&entries)?;
        for row in entries.rows() {
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotNormalized);
            }
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::NotNormalized);
            }
        }
        Ok(Self {
            entries,
            normalized: true,
        })
    }

    fn validate_square_finite(entries: &Array2<f64>) -> Result<()> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::InconsistentShapes(format!(
                "warping matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if !entries.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn w(&self) -> usize {
        self.entries.nrows()
    }
}

/// U-Net topology: per-level channel counts (last level is the bottleneck),
/// convolutions per encoder level, and post-concatenation convolutions per
/// decoder level. Every level except the bottleneck downsamples by 2x2
/// max-pooling on the way in and upsamples by nearest-neighbor 2x on the way
/// out; skip connections pair each encoder level with the decoder level at
/// the same depth by channel concatenation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UNetArch {
    /// Input channel count (2K for an outer concatenation of K-dim series).
    pub input_channels: usize,
    /// Channels per level; `channels[levels-1]` is the bottleneck width.
    pub channels: Vec<usize>,
    /// Convolutions per level on the encoder side, aligned with `channels`.
    pub enc_convs: Vec<usize>,
    /// Convolutions after the skip concatenation per decoder level,
    /// aligned with `channels[..levels-1]`.
    pub dec_convs: Vec<usize>,
}

impl UNetArch {
    /// Seven encoder and seven decoder convolution layers.
    pub fn small(input_channels: usize) -> Self {
        Self {
            input_channels,
            channels: vec![16, 32, 64],
            enc_convs: vec![2, 2, 3],
            dec_convs: vec![2, 2],
        }
    }

    /// Eight encoder and eight decoder convolution layers.
    pub fn large(input_channels: usize) -> Self {
        Self {
            input_channels,
            channels: vec![16, 32, 64],
            enc_convs: vec![2, 3, 3],
            dec_convs: vec![2, 3],
        }
    }

    /// Two-level net small enough for finite-difference gradient checks.
    pub fn tiny(input_channels: usize) -> Self {
        Self {
            input_channels,
            channels: vec![4, 8],
            enc_convs: vec![1, 1],
            dec_convs: vec![1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 {
            return Err(Error::InvalidConfig("input_channels must be >= 1".into()));
        }
        if self.channels.is_empty() || self.channels.iter().any(|&c| c == 0) {
            return Err(Error::InvalidConfig(
                "channel schedule must be non-empty and positive".into(),
            ));
        }
        if self.enc_convs.len() != self.channels.len() {
            return Err(Error::InvalidConfig(
                "enc_convs must have one entry per level".into(),
            ));
        }
        if self.dec_convs.len() + 1 != self.channels.len() {
            return Err(Error::InvalidConfig(
                "dec_convs must have one entry per non-bottleneck level".into(),
            ));
        }
        if self.enc_convs.iter().chain(&self.dec_convs).any(|&n| n == 0) {
            return Err(Error::InvalidConfig(
                "every level needs at least one convolution".into(),
            ));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.channels.len()
    }

    /// Number of pooling stages; the spatial size must be divisible by
    /// 2^pool_stages.
    pub fn pool_stages(&self) -> usize {
        self.levels() - 1
    }

    /// Smallest spatial size granularity accepted by the net.
    pub fn divisor(&self) -> usize {
        1 << self.pool_stages()
    }

    /// (encoder, decoder) convolution layer counts, the up-convolution and
    /// the final output convolution counting toward the decoder.
    pub fn conv_layer_counts(&self) -> (usize, usize) {
        let enc: usize = self.enc_convs.iter().sum();
        let dec: usize = self.dec_convs.iter().map(|n| n + 1).sum::<usize>() + 1;
        (enc, dec)
    }
}

/// One 3x3 convolution layer: weight shape (out, in, 3, 3) plus a bias per
/// output channel. Also reused as the container for gradients and optimizer
/// moments, which share the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
}

impl ConvParams {
    pub fn zeros(out_ch: usize, in_ch: usize) -> Self {
        Self {
            weight: Array4::zeros((out_ch, in_ch, 3, 3)),
            bias: Array1::zeros(out_ch),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// All learnable parameters of the warping-prediction network, together with
/// the topology they belong to. The convolution order matches the forward
/// traversal: encoder levels top-down, bottleneck, decoder levels bottom-up
/// (up-convolution first, then post-concatenation convolutions), final
/// 1-channel output convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct UNetParams {
    pub arch: UNetArch,
    pub convs: Vec<ConvParams>,
}

impl UNetParams {
    /// Checks that stored shapes match the architecture and all values are
    /// finite.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let expected = crate::warpnet::unet::conv_shapes(&self.arch);
        if expected.len() != self.convs.len() {
            return Err(Error::ArchitectureMismatch(format!(
                "expected {} convolution layers, got {}",
                expected.len(),
                self.convs.len()
            )));
        }
        for (i, ((out_ch, in_ch), conv)) in expected.iter().zip(&self.convs).enumerate() {
            if conv.out_channels() != *out_ch || conv.in_channels() != *in_ch {
                return Err(Error::ArchitectureMismatch(format!(
                    "conv {} has shape {}x{}, expected {}x{}",
                    i,
                    conv.out_channels(),
                    conv.in_channels(),
                    out_ch,
                    in_ch
                )));
            }
            if !conv.weight.iter().chain(conv.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::NonFiniteInput);
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.convs
            .iter()
            .map(|c| c.weight.len() + c.bias.len())
            .sum()
    }
}

/// Matching : non-matching pair counts per batch, e.g. 1:2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRatio {
    pub matching: u32,
    pub non_matching: u32,
}

impl MatchRatio {
    pub fn new(matching: u32, non_matching: u32) -> Result<Self> {
        if non_matching == 0 {
            return Err(Error::InvalidConfig(
                "match ratio denominator must be > 0".into(),
            ));
        }
        Ok(Self {
            matching,
            non_matching,
        })
    }

    /// Matching-pair count for a batch, rounding down.
    pub fn matching_count(&self, batch_size: usize) -> usize {
        let total = (self.matching + self.non_matching) as usize;
        batch_size * self.matching as usize / total
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Hyperparameters of the contrastive training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Hinge margin tau of the contrastive loss.
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Matching : non-matching ratio per batch; `None` samples pairs
    /// uniformly from all pairs, with the label deciding z.
    pub match_ratio: Option<MatchRatio>,
    /// Optimizer steps per epoch; defaults to one pass worth of samples.
    pub steps_per_epoch: Option<usize>,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            learning_rate: 1e-4,
            batch_size: 512,
            max_epochs: 20,
            match_ratio: None,
            steps_per_epoch: None,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.margin <= 0.0 || !self.margin.is_finite() {
            return Err(Error::InvalidConfig("margin must be > 0".into()));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn series(w: usize, k: usize) -> TimeSeries {
        TimeSeries::new(Array2::zeros((w, k))).unwrap()
    }

    #[test]
    fn validate_pair_accepts_matching_shapes() {
        assert!(validate_pair(&series(50, 2), &series(50, 2)).is_ok());
    }

    #[test]
    fn validate_pair_rejects_length_mismatch() {
        let err = validate_pair(&series(50, 2), &series(40, 2)).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { w_a: 50, w_b: 40, .. }));
    }

    #[test]
    fn time_series_rejects_nan() {
        let err = TimeSeries::new(array![[0.0, f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteInput));
    }

    #[test]
    fn validate_pair_is_symmetric_in_shapes() {
        let shapes = [(3usize, 1usize), (3, 2), (5, 1), (5, 2)];
        for &(wa, ka) in &shapes {
            for &(wb, kb) in &shapes {
                let ab = validate_pair(&series(wa, ka), &series(wb, kb)).is_ok();
                let ba = validate_pair(&series(wb, kb), &series(wa, ka)).is_ok();
                assert_eq!(ab, ba);
            }
        }
    }

    #[test]
    fn normalized_matrix_rejects_bad_row_sum() {
        let m = array![[0.6, 0.6], [0.5, 0.5]];
        assert!(matches!(
            WarpingMatrix::normalized(m),
            Err(Error::NotNormalized)
        ));
    }

    #[test]
    fn normalized_matrix_accepts_degenerate_one_by_one() {
        let m = WarpingMatrix::normalized(array![[1.0]]).unwrap();
        assert!(m.is_normalized());
    }

    #[test]
    fn match_ratio_rounds_down() {
        let r = MatchRatio::new(1, 2).unwrap();
        assert_eq!(r.matching_count(15), 5);
        assert_eq!(r.matching_count(16), 5);
    }

    #[test]
    fn arch_presets_have_stated_layer_counts() {
        assert_eq!(UNetArch::small(4).conv_layer_counts(), (7, 7));
        assert_eq!(UNetArch::large(128).conv_layer_counts(), (8, 8));
        UNetArch::small(4).validate().unwrap();
        UNetArch::large(128).validate().unwrap();
        UNetArch::tiny(4).validate().unwrap();
    }
}
