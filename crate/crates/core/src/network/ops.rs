//! Convolution and max-pooling over `(height, width, channels)` volumes.

use rayon::prelude::*;

use super::spec::window_output_size;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

fn hwc(x: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    x.shape()
        .hwc()
        .ok_or_else(|| Error::shape(None, format!("{what} must be (height, width, channels), got {}", x.shape())))
}

/// Dot product of an `f64` patch with `f32` weights, four fixed lanes so the
/// summation order never depends on scheduling.
#[inline]
fn dot(patch: &[f64], weights: &[f32]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut p = patch.chunks_exact(4);
    let mut w = weights.chunks_exact(4);
    for (pc, wc) in (&mut p).zip(&mut w) {
        for k in 0..4 {
            acc[k] += pc[k] * f64::from(wc[k]);
        }
    }
    let mut tail = 0.0;
    for (a, b) in p.remainder().iter().zip(w.remainder()) {
        tail += a * f64::from(*b);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Zero-padded 2-D convolution.
///
/// `weight` is `(out, in, f, f)`, `bias` has one entry per output channel.
/// Returns `(H', W', out)` with `H' = (H + 2 pad - f) / stride + 1`.
pub fn conv2d_forward(x: &Tensor, weight: &Tensor, bias: &[f32], stride: usize, pad: usize) -> Result<Tensor> {
    let (h, w, cin) = hwc(x, "conv input")?;
    let (cout, wcin, fh, fw) = match *weight.dims() {
        [o, i, a, b] => (o, i, a, b),
        _ => {
            return Err(Error::shape(
                None,
                format!("conv weight must be (out, in, h, w), got {}", weight.shape()),
            ))
        }
    };
    if fh != fw {
        return Err(Error::shape(None, format!("non-square filter {fh}x{fw}")));
    }
    if wcin != cin {
        return Err(Error::shape(
            None,
            format!("weight expects {wcin} input channels, input has {cin}"),
        ));
    }
    if bias.len() != cout {
        return Err(Error::shape(
            None,
            format!("bias has {} entries for {cout} output channels", bias.len()),
        ));
    }
    let f = fh;
    let (oh, ow) = match (window_output_size(h, f, stride, pad), window_output_size(w, f, stride, pad)) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(Error::shape(
                None,
                format!("filter {f} with stride {stride}, padding {pad} does not fit {h}x{w}"),
            ))
        }
    };

    // Repack to (out, u, v, in) so a patch row is contiguous in the input.
    let taps = f * f * cin;
    let src = weight.data();
    let mut packed = vec![0.0f32; cout * taps];
    for o in 0..cout {
        for ci in 0..cin {
            for u in 0..f {
                for v in 0..f {
                    packed[o * taps + (u * f + v) * cin + ci] = src[((o * cin + ci) * f + u) * f + v];
                }
            }
        }
    }

    let input = x.data();
    let mut out = vec![0.0f32; oh * ow * cout];
    out.par_chunks_mut(ow * cout).enumerate().for_each(|(i, row)| {
        let mut patch = vec![0.0f64; taps];
        for j in 0..ow {
            for u in 0..f {
                let y = (i * stride + u) as isize - pad as isize;
                for v in 0..f {
                    let xx = (j * stride + v) as isize - pad as isize;
                    let slot = &mut patch[(u * f + v) * cin..(u * f + v + 1) * cin];
                    if y < 0 || xx < 0 || y as usize >= h || xx as usize >= w {
                        slot.fill(0.0);
                    } else {
                        let base = (y as usize * w + xx as usize) * cin;
                        for (s, &val) in slot.iter_mut().zip(&input[base..base + cin]) {
                            *s = f64::from(val);
                        }
                    }
                }
            }
            let cell = &mut row[j * cout..(j + 1) * cout];
            for (o, dst) in cell.iter_mut().enumerate() {
                let sum = dot(&patch, &packed[o * taps..(o + 1) * taps]);
                *dst = (f64::from(bias[o]) + sum) as f32;
            }
        }
    });

    Tensor::new(Shape::new([oh, ow, cout])?, out)
}

/// Per-channel max over each window. Padded positions never win: they are
/// excluded from the window rather than treated as zeros.
pub fn maxpool_forward(x: &Tensor, window: usize, stride: usize, pad: usize) -> Result<Tensor> {
    let (h, w, c) = hwc(x, "pool input")?;
    if pad >= window {
        return Err(Error::shape(None, format!("pool padding {pad} must be below window {window}")));
    }
    let (oh, ow) = match (
        window_output_size(h, window, stride, pad),
        window_output_size(w, window, stride, pad),
    ) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(Error::shape(
                None,
                format!("pool window {window} with stride {stride}, padding {pad} does not fit {h}x{w}"),
            ))
        }
    };

    let input = x.data();
    let mut out = vec![f32::NEG_INFINITY; oh * ow * c];
    out.par_chunks_mut(ow * c).enumerate().for_each(|(i, row)| {
        for j in 0..ow {
            let cell = &mut row[j * c..(j + 1) * c];
            for u in 0..window {
                let y = (i * stride + u) as isize - pad as isize;
                if y < 0 || y as usize >= h {
                    continue;
                }
                for v in 0..window {
                    let xx = (j * stride + v) as isize - pad as isize;
                    if xx < 0 || xx as usize >= w {
                        continue;
                    }
                    let base = (y as usize * w + xx as usize) * c;
                    for (m, &val) in cell.iter_mut().zip(&input[base..base + c]) {
                        if val > *m {
                            *m = val;
                        }
                    }
                }
            }
        }
    });
    // pad < window, so every window covers at least one real pixel and no
    // -inf survives.

    Tensor::new(Shape::new([oh, ow, c])?, out)
}
