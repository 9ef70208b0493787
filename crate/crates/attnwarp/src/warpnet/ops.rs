//! Dense primitives for the warping network: 3x3 same-padding convolution,
//! 2x2 max-pooling, nearest-neighbor upsampling, channel concatenation, and
//! row-wise softmax, each with its reverse-mode counterpart.
//!
//! Feature maps are `Array3<f64>` in (channels, height, width) layout and
//! kernels are `Array4<f64>` in (out, in, 3, 3) layout. Parallel sections
//! write disjoint output slices, so results are bit-reproducible regardless
//! of the thread count.

use ndarray::{Array1, Array2, Array3, Array4};
use rayon::prelude::*;

/// Below this output volume a convolution runs sequentially; the rayon
/// dispatch overhead dominates on tiny planes.
const PAR_MIN_VOLUME: usize = 1 << 15;

fn conv_channel_forward(
    out_ch: &mut [f64],
    co: usize,
    input: &[f64],
    weight: &[f64],
    bias: f64,
    cin: usize,
    h: usize,
    w: usize,
) {
    out_ch.fill(bias);
    let plane = h * w;
    for ci in 0..cin {
        let in_ch = &input[ci * plane..(ci + 1) * plane];
        let wbase = (co * cin + ci) * 9;
        for ky in 0..3usize {
            let dy = ky as isize - 1;
            let (y_lo, y_hi) = shift_range(dy, h);
            for kx in 0..3usize {
                let wv = weight[wbase + ky * 3 + kx];
                let dx = kx as isize - 1;
                let (x_lo, x_hi) = shift_range(dx, w);
                for y in y_lo..y_hi {
                    let iy = (y as isize + dy) as usize;
                    let src_lo = (iy * w) as isize + x_lo as isize + dx;
                    let dst = &mut out_ch[y * w + x_lo..y * w + x_hi];
                    let src = &in_ch[src_lo as usize..src_lo as usize + (x_hi - x_lo)];
                    for (o, i) in dst.iter_mut().zip(src) {
                        *o += wv * *i;
                    }
                }
            }
        }
    }
}

/// Index range [lo, hi) such that every index plus `shift` stays in [0, n).
#[inline]
fn shift_range(shift: isize, n: usize) -> (usize, usize) {
    let lo = if shift < 0 { 1 } else { 0 };
    let hi = if shift > 0 { n - 1 } else { n };
    (lo, hi)
}

/// 3x3 convolution with zero padding 1; output spatial size equals input.
pub fn conv3x3(input: &Array3<f64>, weight: &Array4<f64>, bias: &Array1<f64>) -> Array3<f64> {
    let (cin, h, w) = input.dim();
    let cout = weight.shape()[0];
    debug_assert_eq!(weight.shape()[1], cin);
    let mut out = Array3::zeros((cout, h, w));
    let in_flat = input.as_slice().expect("contiguous input");
    let w_flat = weight.as_slice().expect("contiguous weight");
    let plane = h * w;
    let out_flat = out.as_slice_mut().expect("contiguous output");
    if cout * plane >= PAR_MIN_VOLUME {
        out_flat
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(co, out_ch)| {
                conv_channel_forward(out_ch, co, in_flat, w_flat, bias[co], cin, h, w)
            });
    } else {
        for (co, out_ch) in out_flat.chunks_mut(plane).enumerate() {
            conv_channel_forward(out_ch, co, in_flat, w_flat, bias[co], cin, h, w);
        }
    }
    out
}

fn conv_weight_grad_channel(
    gw_ch: &mut [f64],
    gb_ch: &mut f64,
    co: usize,
    input: &[f64],
    grad_out: &[f64],
    cin: usize,
    h: usize,
    w: usize,
) {
    let plane = h * w;
    let go_ch = &grad_out[co * plane..(co + 1) * plane];
    *gb_ch = go_ch.iter().sum();
    for ci in 0..cin {
        let in_ch = &input[ci * plane..(ci + 1) * plane];
        for ky in 0..3usize {
            let dy = ky as isize - 1;
            let (y_lo, y_hi) = shift_range(dy, h);
            for kx in 0..3usize {
                let dx = kx as isize - 1;
                let (x_lo, x_hi) = shift_range(dx, w);
                let mut acc = 0.0;
                for y in y_lo..y_hi {
                    let iy = (y as isize + dy) as usize;
                    let src_lo = (iy * w) as isize + x_lo as isize + dx;
                    let go = &go_ch[y * w + x_lo..y * w + x_hi];
                    let src = &in_ch[src_lo as usize..src_lo as usize + (x_hi - x_lo)];
                    for (g, i) in go.iter().zip(src) {
                        acc += g * i;
                    }
                }
                gw_ch[ci * 9 + ky * 3 + kx] = acc;
            }
        }
    }
}

fn conv_input_grad_channel(
    gin_ch: &mut [f64],
    ci: usize,
    weight: &[f64],
    grad_out: &[f64],
    cout: usize,
    cin: usize,
    h: usize,
    w: usize,
) {
    let plane = h * w;
    for co in 0..cout {
        let go_ch = &grad_out[co * plane..(co + 1) * plane];
        let wbase = (co * cin + ci) * 9;
        for ky in 0..3usize {
            let dy = ky as isize - 1;
            let (y_lo, y_hi) = shift_range(dy, h);
            for kx in 0..3usize {
                let wv = weight[wbase + ky * 3 + kx];
                let dx = kx as isize - 1;
                let (x_lo, x_hi) = shift_range(dx, w);
                for y in y_lo..y_hi {
                    let iy = (y as isize + dy) as usize;
                    let dst_lo = (iy * w) as isize + x_lo as isize + dx;
                    let dst = &mut gin_ch[dst_lo as usize..dst_lo as usize + (x_hi - x_lo)];
                    let go = &go_ch[y * w + x_lo..y * w + x_hi];
                    for (g_in, g_out) in dst.iter_mut().zip(go) {
                        *g_in += wv * *g_out;
                    }
                }
            }
        }
    }
}

/// Reverse pass of [`conv3x3`]: gradients with respect to the input, the
/// kernel, and the bias.
pub fn conv3x3_backward(
    input: &Array3<f64>,
    weight: &Array4<f64>,
    grad_out: &Array3<f64>,
) -> (Array3<f64>, Array4<f64>, Array1<f64>) {
    let (cin, h, w) = input.dim();
    let cout = weight.shape()[0];
    let plane = h * w;
    let in_flat = input.as_slice().expect("contiguous input");
    let w_flat = weight.as_slice().expect("contiguous weight");
    let go_flat = grad_out.as_slice().expect("contiguous grad");

    let mut grad_w = Array4::zeros((cout, cin, 3, 3));
    let mut grad_b = Array1::zeros(cout);
    {
        let gw_flat = grad_w.as_slice_mut().expect("contiguous grad_w");
        let gb_flat = grad_b.as_slice_mut().expect("contiguous grad_b");
        if cout * plane >= PAR_MIN_VOLUME {
            gw_flat
                .par_chunks_mut(cin * 9)
                .zip(gb_flat.par_iter_mut())
                .enumerate()
                .for_each(|(co, (gw_ch, gb_ch))| {
                    conv_weight_grad_channel(gw_ch, gb_ch, co, in_flat, go_flat, cin, h, w)
                });
        } else {
            for (co, (gw_ch, gb_ch)) in gw_flat
                .chunks_mut(cin * 9)
                .zip(gb_flat.iter_mut())
                .enumerate()
            {
                conv_weight_grad_channel(gw_ch, gb_ch, co, in_flat, go_flat, cin, h, w);
            }
        }
    }

    let mut grad_in = Array3::zeros((cin, h, w));
    {
        let gi_flat = grad_in.as_slice_mut().expect("contiguous grad_in");
        if cin * plane >= PAR_MIN_VOLUME {
            gi_flat
                .par_chunks_mut(plane)
                .enumerate()
                .for_each(|(ci, gin_ch)| {
                    conv_input_grad_channel(gin_ch, ci, w_flat, go_flat, cout, cin, h, w)
                });
        } else {
            for (ci, gin_ch) in gi_flat.chunks_mut(plane).enumerate() {
                conv_input_grad_channel(gin_ch, ci, w_flat, go_flat, cout, cin, h, w);
            }
        }
    }

    (grad_in, grad_w, grad_b)
}

/// In-place ReLU.
pub fn relu_inplace(x: &mut Array3<f64>) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Masks `grad` to the positive support of the recorded activation output.
pub fn relu_backward_inplace(grad: &mut Array3<f64>, output: &Array3<f64>) {
    for (g, o) in grad.iter_mut().zip(output.iter()) {
        if *o <= 0.0 {
            *g = 0.0;
        }
    }
}

/// 2x2 max-pooling with stride 2. Returns the pooled map and the chosen
/// in-window offset (dy * 2 + dx) per output cell; ties keep the first cell
/// in scan order, making the pass deterministic.
pub fn maxpool2(input: &Array3<f64>) -> (Array3<f64>, Vec<u8>) {
    let (c, h, w) = input.dim();
    debug_assert!(h % 2 == 0 && w % 2 == 0);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Array3::zeros((c, oh, ow));
    let mut argmax = vec![0u8; c * oh * ow];
    for ci in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0u8;
                for dy in 0..2usize {
                    for dx in 0..2usize {
                        let v = input[[ci, 2 * y + dy, 2 * x + dx]];
                        if v > best {
                            best = v;
                            arg = (dy * 2 + dx) as u8;
                        }
                    }
                }
                out[[ci, y, x]] = best;
                argmax[(ci * oh + y) * ow + x] = arg;
            }
        }
    }
    (out, argmax)
}

/// Routes gradients back to the argmax positions recorded by [`maxpool2`].
pub fn maxpool2_backward(
    grad_out: &Array3<f64>,
    argmax: &[u8],
    in_shape: (usize, usize, usize),
) -> Array3<f64> {
    let (c, h, w) = in_shape;
    let (oc, oh, ow) = grad_out.dim();
    debug_assert_eq!((oc, oh, ow), (c, h / 2, w / 2));
    let mut grad_in = Array3::zeros(in_shape);
    for ci in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let arg = argmax[(ci * oh + y) * ow + x] as usize;
                let (dy, dx) = (arg / 2, arg % 2);
                grad_in[[ci, 2 * y + dy, 2 * x + dx]] += grad_out[[ci, y, x]];
            }
        }
    }
    grad_in
}

/// Nearest-neighbor 2x upsampling.
pub fn upsample2(input: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = input.dim();
    let mut out = Array3::zeros((c, 2 * h, 2 * w));
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                let v = input[[ci, y, x]];
                out[[ci, 2 * y, 2 * x]] = v;
                out[[ci, 2 * y, 2 * x + 1]] = v;
                out[[ci, 2 * y + 1, 2 * x]] = v;
                out[[ci, 2 * y + 1, 2 * x + 1]] = v;
            }
        }
    }
    out
}

/// Reverse of [`upsample2`]: sums each 2x2 output block.
pub fn upsample2_backward(grad_out: &Array3<f64>) -> Array3<f64> {
    let (c, h2, w2) = grad_out.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut grad_in = Array3::zeros((c, h, w));
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                grad_in[[ci, y, x]] = grad_out[[ci, 2 * y, 2 * x]]
                    + grad_out[[ci, 2 * y, 2 * x + 1]]
                    + grad_out[[ci, 2 * y + 1, 2 * x]]
                    + grad_out[[ci, 2 * y + 1, 2 * x + 1]];
            }
        }
    }
    grad_in
}

/// Stacks `first` on top of `second` along the channel axis.
pub fn concat_channels(first: &Array3<f64>, second: &Array3<f64>) -> Array3<f64> {
    let (c1, h, w) = first.dim();
    let (c2, h2, w2) = second.dim();
    debug_assert_eq!((h, w), (h2, w2));
    let mut out = Array3::zeros((c1 + c2, h, w));
    out.slice_mut(ndarray::s![..c1, .., ..]).assign(first);
    out.slice_mut(ndarray::s![c1.., .., ..]).assign(second);
    out
}

/// Splits a gradient flowing into a concatenation back into its two parts.
pub fn split_channels(grad: &Array3<f64>, first_channels: usize) -> (Array3<f64>, Array3<f64>) {
    let a = grad.slice(ndarray::s![..first_channels, .., ..]).to_owned();
    let b = grad.slice(ndarray::s![first_channels.., .., ..]).to_owned();
    (a, b)
}

/// Row-wise softmax with max-subtraction for numerical stability.
pub fn softmax_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Reverse pass of [`softmax_rows`]: given the softmax output `s` and the
/// upstream gradient `g`, returns the gradient with respect to the logits,
/// `s * (g - <g, s>)` per row.
pub fn softmax_rows_backward(s: &Array2<f64>, g: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(s.dim());
    for ((mut orow, srow), grow) in out.rows_mut().into_iter().zip(s.rows()).zip(g.rows()) {
        let dot: f64 = srow.iter().zip(grow.iter()).map(|(a, b)| a * b).sum();
        for ((o, &sv), &gv) in orow.iter_mut().zip(srow.iter()).zip(grow.iter()) {
            *o = sv * (gv - dot);
        }
    }
    out
}
