//! U-Net forward and reverse passes over an outer concatenation.
//!
//! The net maps a (2K, W, W) tensor to a single-channel W x W matrix of raw
//! alignment decisions. Every convolution is 3x3 with padding 1 and is
//! followed by ReLU except the final output convolution, which stays linear.
//! Downsampling is 2x2 max-pooling, upsampling is nearest-neighbor 2x
//! followed by a convolution, and skip connections concatenate encoder
//! feature maps onto the decoder path.

use ndarray::{Array1, Array2, Array3, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::core::{ConvParams, UNetArch, UNetParams};
use crate::error::{Error, Result};
use crate::warpnet::ops;
use crate::warpnet::OuterConcat;

/// (out, in) channel counts of every convolution in forward-traversal order.
pub fn conv_shapes(arch: &UNetArch) -> Vec<(usize, usize)> {
    let levels = arch.levels();
    let mut shapes = Vec::new();
    let mut prev = arch.input_channels;
    for lvl in 0..levels {
        for _ in 0..arch.enc_convs[lvl] {
            shapes.push((arch.channels[lvl], prev));
            prev = arch.channels[lvl];
        }
    }
    for lvl in (0..levels - 1).rev() {
        // Up-convolution after nearest-neighbor upsampling.
        shapes.push((arch.channels[lvl], prev));
        // Skip concatenation doubles the channel count.
        let mut cur = arch.channels[lvl] * 2;
        for _ in 0..arch.dec_convs[lvl] {
            shapes.push((arch.channels[lvl], cur));
            cur = arch.channels[lvl];
        }
        prev = arch.channels[lvl];
    }
    shapes.push((1, prev));
    shapes
}

impl UNetParams {
    /// He-initialized parameters: kernel entries drawn from
    /// N(0, sqrt(2 / fan_in)), biases zero.
    pub fn he_init(arch: UNetArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let convs = conv_shapes(&arch)
            .into_iter()
            .map(|(out_ch, in_ch)| {
                let std = (2.0 / (in_ch as f64 * 9.0)).sqrt();
                let normal = Normal::new(0.0, std).expect("valid std");
                ConvParams {
                    weight: Array4::from_shape_fn((out_ch, in_ch, 3, 3), |_| {
                        normal.sample(&mut rng)
                    }),
                    bias: Array1::zeros(out_ch),
                }
            })
            .collect();
        Ok(Self { arch, convs })
    }

    /// All-zero parameters with the shapes the architecture requires.
    pub fn zeros(arch: UNetArch) -> Result<Self> {
        arch.validate()?;
        let convs = conv_shapes(&arch)
            .into_iter()
            .map(|(out_ch, in_ch)| ConvParams::zeros(out_ch, in_ch))
            .collect();
        Ok(Self { arch, convs })
    }
}

/// Gradients of a scalar loss with respect to every parameter; shapes mirror
/// the parameters.
#[derive(Debug, Clone)]
pub struct UNetGrads {
    pub convs: Vec<ConvParams>,
}

impl UNetGrads {
    pub fn zeros_like(params: &UNetParams) -> Self {
        Self {
            convs: params
                .convs
                .iter()
                .map(|c| ConvParams::zeros(c.out_channels(), c.in_channels()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &UNetGrads) {
        for (a, b) in self.convs.iter_mut().zip(&other.convs) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for c in self.convs.iter_mut() {
            c.weight *= factor;
            c.bias *= factor;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.convs
            .iter()
            .flat_map(|c| c.weight.iter().chain(c.bias.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

enum StageKind {
    ConvRelu { conv: usize },
    ConvLinear { conv: usize },
    MaxPool { argmax: Vec<u8> },
    Upsample,
    /// Concatenates the recorded output of `skip_stage` (first) with the
    /// current tensor (second).
    ConcatSkip { skip_stage: usize },
}

/// Recorded forward pass: per-stage outputs plus the network input, enough
/// to replay the computation in reverse.
pub struct UNetTrace {
    input: Array3<f64>,
    stages: Vec<StageKind>,
    outputs: Vec<Array3<f64>>,
}

fn check_compatible(arch: &UNetArch, x: &OuterConcat) -> Result<()> {
    if x.channels() != arch.input_channels {
        return Err(Error::ArchitectureMismatch(format!(
            "input has {} channels, architecture expects {}",
            x.channels(),
            arch.input_channels
        )));
    }
    if x.w() % arch.divisor() != 0 {
        return Err(Error::ArchitectureMismatch(format!(
            "spatial size {} not divisible by {}",
            x.w(),
            arch.divisor()
        )));
    }
    Ok(())
}

fn squeeze_output(out: Array3<f64>) -> Result<Array2<f64>> {
    if !out.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteActivation);
    }
    let (_, h, w) = out.dim();
    Ok(out.into_shape_with_order((h, w)).expect("single channel"))
}

/// Forward pass producing the raw warping matrix (no recording).
pub fn unet_forward(x: &OuterConcat, params: &UNetParams) -> Result<Array2<f64>> {
    let arch = &params.arch;
    check_compatible(arch, x)?;
    let levels = arch.levels();
    let mut conv = 0usize;
    let mut cur = x.tensor().clone();
    let mut skips: Vec<Array3<f64>> = Vec::with_capacity(levels - 1);
    for lvl in 0..levels {
        for _ in 0..arch.enc_convs[lvl] {
            let p = &params.convs[conv];
            cur = ops::conv3x3(&cur, &p.weight, &p.bias);
            ops::relu_inplace(&mut cur);
            conv += 1;
        }
        if lvl + 1 < levels {
            skips.push(cur.clone());
            cur = ops::maxpool2(&cur).0;
        }
    }
    for lvl in (0..levels - 1).rev() {
        cur = ops::upsample2(&cur);
        let p = &params.convs[conv];
        cur = ops::conv3x3(&cur, &p.weight, &p.bias);
        ops::relu_inplace(&mut cur);
        conv += 1;
        cur = ops::concat_channels(&skips[lvl], &cur);
        for _ in 0..arch.dec_convs[lvl] {
            let p = &params.convs[conv];
            cur = ops::conv3x3(&cur, &p.weight, &p.bias);
            ops::relu_inplace(&mut cur);
            conv += 1;
        }
    }
    let p = &params.convs[conv];
    cur = ops::conv3x3(&cur, &p.weight, &p.bias);
    squeeze_output(cur)
}

/// Forward pass that records every intermediate needed by
/// [`unet_backward`].
pub fn unet_forward_recorded(
    x: &OuterConcat,
    params: &UNetParams,
) -> Result<(Array2<f64>, UNetTrace)> {
    let arch = &params.arch;
    check_compatible(arch, x)?;
    let levels = arch.levels();
    let mut trace = UNetTrace {
        input: x.tensor().clone(),
        stages: Vec::new(),
        outputs: Vec::new(),
    };
    let mut conv = 0usize;
    let mut cur = x.tensor().clone();
    let mut skip_stage = vec![0usize; levels - 1];

    let push = |trace: &mut UNetTrace, kind: StageKind, out: Array3<f64>| -> Array3<f64> {
        trace.stages.push(kind);
        trace.outputs.push(out.clone());
        out
    };

    for lvl in 0..levels {
        for _ in 0..arch.enc_convs[lvl] {
            let p = &params.convs[conv];
            let mut out = ops::conv3x3(&cur, &p.weight, &p.bias);
            ops::relu_inplace(&mut out);
            cur = push(&mut trace, StageKind::ConvRelu { conv }, out);
            conv += 1;
        }
        if lvl + 1 < levels {
            skip_stage[lvl] = trace.outputs.len() - 1;
            let (out, argmax) = ops::maxpool2(&cur);
            cur = push(&mut trace, StageKind::MaxPool { argmax }, out);
        }
    }
    for lvl in (0..levels - 1).rev() {
        let out = ops::upsample2(&cur);
        cur = push(&mut trace, StageKind::Upsample, out);
        let p = &params.convs[conv];
        let mut out = ops::conv3x3(&cur, &p.weight, &p.bias);
        ops::relu_inplace(&mut out);
        cur = push(&mut trace, StageKind::ConvRelu { conv }, out);
        conv += 1;
        let out = ops::concat_channels(&trace.outputs[skip_stage[lvl]], &cur);
        cur = push(
            &mut trace,
            StageKind::ConcatSkip {
                skip_stage: skip_stage[lvl],
            },
            out,
        );
        for _ in 0..arch.dec_convs[lvl] {
            let p = &params.convs[conv];
            let mut out = ops::conv3x3(&cur, &p.weight, &p.bias);
            ops::relu_inplace(&mut out);
            cur = push(&mut trace, StageKind::ConvRelu { conv }, out);
            conv += 1;
        }
    }
    let p = &params.convs[conv];
    let out = ops::conv3x3(&cur, &p.weight, &p.bias);
    let out = push(&mut trace, StageKind::ConvLinear { conv }, out);
    Ok((squeeze_output(out)?, trace))
}

/// Reverse pass over a recorded forward: gradient of a scalar loss with
/// respect to every parameter, given the loss gradient at the raw output.
pub fn unet_backward(
    params: &UNetParams,
    trace: &UNetTrace,
    grad_output: &Array2<f64>,
) -> UNetGrads {
    let mut grads = UNetGrads::zeros_like(params);
    let n = trace.stages.len();
    let (h, w) = grad_output.dim();
    let mut grad = grad_output
        .to_owned()
        .into_shape_with_order((1, h, w))
        .expect("reshape");
    // Gradients parked for encoder outputs that also feed skip connections.
    let mut pending: Vec<Option<Array3<f64>>> = (0..n).map(|_| None).collect();

    for idx in (0..n).rev() {
        if let Some(p) = pending[idx].take() {
            grad += &p;
        }
        let input = if idx == 0 {
            &trace.input
        } else {
            &trace.outputs[idx - 1]
        };
        match &trace.stages[idx] {
            StageKind::ConvRelu { conv } => {
                ops::relu_backward_inplace(&mut grad, &trace.outputs[idx]);
                let p = &params.convs[*conv];
                let (gin, gw, gb) = ops::conv3x3_backward(input, &p.weight, &grad);
                grads.convs[*conv].weight += &gw;
                grads.convs[*conv].bias += &gb;
                grad = gin;
            }
            StageKind::ConvLinear { conv } => {
                let p = &params.convs[*conv];
                let (gin, gw, gb) = ops::conv3x3_backward(input, &p.weight, &grad);
                grads.convs[*conv].weight += &gw;
                grads.convs[*conv].bias += &gb;
                grad = gin;
            }
            StageKind::MaxPool { argmax } => {
                grad = ops::maxpool2_backward(&grad, argmax, input.dim());
            }
            StageKind::Upsample => {
                grad = ops::upsample2_backward(&grad);
            }
            StageKind::ConcatSkip { skip_stage } => {
                let skip_channels = trace.outputs[*skip_stage].dim().0;
                let (gskip, gcur) = ops::split_channels(&grad, skip_channels);
                match &mut pending[*skip_stage] {
                    Some(acc) => *acc += &gskip,
                    slot => *slot = Some(gskip),
                }
                grad = gcur;
            }
        }
    }
    grads
}
