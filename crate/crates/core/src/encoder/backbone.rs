//! Two-layer 3×3 convolutional backbone with tanh activations and reflect
//! padding, evaluated on a rectangular window of the image.
//!
//! Feature maps are stored channel-major at full image size; only the window
//! that was requested is meaningful. The backward pass returns gradients for
//! the input plane and, optionally, for the parameters.

use crate::detect::PixelRect;

/// Borrowed view of the backbone parameters.
#[derive(Clone, Copy)]
pub struct BackboneParams<'a> {
    pub channels: usize,
    pub conv1_w: &'a [f64],
    pub conv1_b: &'a [f64],
    pub conv2_w: &'a [f64],
    pub conv2_b: &'a [f64],
}

/// Parameter gradients laid out like [`BackboneParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct BackboneGrads {
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
}

impl BackboneGrads {
    pub fn zeros(channels: usize) -> Self {
        Self {
            conv1_w: vec![0.0; channels * 9],
            conv1_b: vec![0.0; channels],
            conv2_w: vec![0.0; channels * channels * 9],
            conv2_b: vec![0.0; channels],
        }
    }

    pub fn add_assign(&mut self, other: &BackboneGrads) {
        for (a, b) in [
            (&mut self.conv1_w, &other.conv1_w),
            (&mut self.conv1_b, &other.conv1_b),
            (&mut self.conv2_w, &other.conv2_w),
            (&mut self.conv2_b, &other.conv2_b),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if i < 0 {
        (-i) as usize
    } else if i as usize >= n {
        2 * n - 2 - i as usize
    } else {
        i as usize
    }
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct BackboneCache {
    pub width: usize,
    pub height: usize,
    /// Input plane.
    pub input: Vec<f64>,
    /// `tanh(conv1(input))`, valid on `window1`.
    pub hidden: Vec<f64>,
    /// `tanh(conv2(hidden))`, valid on `window2`.
    pub output: Vec<f64>,
    pub window1: PixelRect,
    pub window2: PixelRect,
}

fn conv_tanh(
    input: &[f64],
    in_ch: usize,
    out_ch: usize,
    weights: &[f64],
    bias: &[f64],
    width: usize,
    height: usize,
    window: PixelRect,
    out: &mut [f64],
) {
    let plane = width * height;
    for o in 0..out_ch {
        for y in window.y0..window.y1 {
            let rows = [
                reflect(y as isize - 1, height),
                y,
                reflect(y as isize + 1, height),
            ];
            for x in window.x0..window.x1 {
                let cols = [
                    reflect(x as isize - 1, width),
                    x,
                    reflect(x as isize + 1, width),
                ];
                let mut acc = bias[o];
                for i in 0..in_ch {
                    let w = &weights[(o * in_ch + i) * 9..(o * in_ch + i) * 9 + 9];
                    let src = &input[i * plane..(i + 1) * plane];
                    for (ky, &ry) in rows.iter().enumerate() {
                        let row = &src[ry * width..ry * width + width];
                        acc += w[ky * 3] * row[cols[0]] + w[ky * 3 + 1] * row[cols[1]] + w[ky * 3 + 2] * row[cols[2]];
                    }
                }
                out[o * plane + y * width + x] = acc.tanh();
            }
        }
    }
}

/// Backward through `tanh(conv(input))`.
///
/// `grad_out` is the gradient w.r.t. the activation (valid on `window`).
#[allow(clippy::too_many_arguments)]
fn conv_tanh_backward(
    grad_out: &[f64],
    activation: &[f64],
    input: &[f64],
    in_ch: usize,
    out_ch: usize,
    weights: &[f64],
    width: usize,
    height: usize,
    window: PixelRect,
    mut grad_in: Option<&mut [f64]>,
    mut grad_w: Option<&mut [f64]>,
    mut grad_b: Option<&mut [f64]>,
) {
    let plane = width * height;
    for o in 0..out_ch {
        for y in window.y0..window.y1 {
            let rows = [
                reflect(y as isize - 1, height),
                y,
                reflect(y as isize + 1, height),
            ];
            for x in window.x0..window.x1 {
                let idx = o * plane + y * width + x;
                let a = activation[idx];
                let g = grad_out[idx] * (1.0 - a * a);
                if g == 0.0 {
                    continue;
                }
                let cols = [
                    reflect(x as isize - 1, width),
                    x,
                    reflect(x as isize + 1, width),
                ];
                if let Some(gb) = grad_b.as_deref_mut() {
                    gb[o] += g;
                }
                for i in 0..in_ch {
                    let base = (o * in_ch + i) * 9;
                    for (ky, &ry) in rows.iter().enumerate() {
                        for (kx, &rx) in cols.iter().enumerate() {
                            let p = i * plane + ry * width + rx;
                            if let Some(gi) = grad_in.as_deref_mut() {
                                gi[p] += weights[base + ky * 3 + kx] * g;
                            }
                            if let Some(gw) = grad_w.as_deref_mut() {
                                gw[base + ky * 3 + kx] += input[p] * g;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Runs both layers so that the output is valid on `window2`.
pub fn forward(params: BackboneParams<'_>, input: Vec<f64>, width: usize, height: usize, window2: PixelRect) -> BackboneCache {
    let c = params.channels;
    let window1 = window2.grow(1, width, height);
    let mut hidden = vec![0.0; c * width * height];
    conv_tanh(&input, 1, c, params.conv1_w, params.conv1_b, width, height, window1, &mut hidden);
    let mut output = vec![0.0; c * width * height];
    conv_tanh(&hidden, c, c, params.conv2_w, params.conv2_b, width, height, window2, &mut output);
    BackboneCache {
        width,
        height,
        input,
        hidden,
        output,
        window1,
        window2,
    }
}

/// Gradient w.r.t. the input plane (and optionally the parameters) given the
/// gradient w.r.t. the backbone output.
pub fn backward(
    params: BackboneParams<'_>,
    cache: &BackboneCache,
    grad_output: &[f64],
    grads: Option<&mut BackboneGrads>,
) -> Vec<f64> {
    let c = params.channels;
    let (w, h) = (cache.width, cache.height);
    let mut grad_hidden = vec![0.0; c * w * h];
    let mut grad_input = vec![0.0; w * h];
    match grads {
        Some(g) => {
            conv_tanh_backward(
                grad_output,
                &cache.output,
                &cache.hidden,
                c,
                c,
                params.conv2_w,
                w,
                h,
                cache.window2,
                Some(&mut grad_hidden),
                Some(&mut g.conv2_w),
                Some(&mut g.conv2_b),
            );
            conv_tanh_backward(
                &grad_hidden,
                &cache.hidden,
                &cache.input,
                1,
                c,
                params.conv1_w,
                w,
                h,
                cache.window1,
                Some(&mut grad_input),
                Some(&mut g.conv1_w),
                Some(&mut g.conv1_b),
            );
        }
        None => {
            conv_tanh_backward(
                grad_output,
                &cache.output,
                &cache.hidden,
                c,
                c,
                params.conv2_w,
                w,
                h,
                cache.window2,
                Some(&mut grad_hidden),
                None,
                None,
            );
            conv_tanh_backward(
                &grad_hidden,
                &cache.hidden,
                &cache.input,
                1,
                c,
                params.conv1_w,
                w,
                h,
                cache.window1,
                Some(&mut grad_input),
                None,
                None,
            );
        }
    }
    grad_input
}
