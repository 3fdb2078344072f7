//! Layer kernels on flat slices.

/// `out[o] = b[o] + Σ_i w[o, i] x[i]`, accumulated bias-first in ascending `i`.
pub(crate) fn dense_forward(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    b.iter()
        .zip(w.chunks_exact(n_in))
        .map(|(&bias, row)| row.iter().zip(x).fold(bias, |acc, (wi, xi)| acc + wi * xi))
        .collect()
}

pub(crate) fn dense_backward(
    w: &[f64],
    x: &[f64],
    g: &[f64],
    gx: Option<&mut [f64]>,
    grads: Option<(&mut [f64], &mut [f64])>,
) {
    let n_in = x.len();
    if let Some((gw, gb)) = grads {
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            gb[o] += go;
            for (gwi, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                *gwi += go * xi;
            }
        }
    }
    if let Some(gx) = gx {
        gx.fill(0.0);
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            for (gxi, wi) in gx.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                *gxi += go * wi;
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn from_shapes(input: &[usize], output: &[usize], kernel: usize, stride: usize) -> Self {
        ConvGeom {
            channels: input[0],
            height: input[1],
            width: input[2],
            out_channels: output[0],
            kernel,
            stride,
        }
    }

    pub fn out_h(&self) -> usize {
        (self.height - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width - self.kernel) / self.stride + 1
    }
}

/// Valid (unpadded) cross-correlation; each output accumulates bias first,
/// then `(channel, ky, kx)` in row-major order.
pub(crate) fn conv_forward(w: &[f64], b: &[f64], x: &[f64], g: ConvGeom) -> Vec<f64> {
    let (oh, ow, k) = (g.out_h(), g.out_w(), g.kernel);
    let mut out = Vec::with_capacity(g.out_channels * oh * ow);
    for o in 0..g.out_channels {
        let filt = &w[o * g.channels * k * k..(o + 1) * g.channels * k * k];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b[o];
                for c in 0..g.channels {
                    for ky in 0..k {
                        let row = (c * g.height + oy * g.stride + ky) * g.width + ox * g.stride;
                        let wrow = &filt[(c * k + ky) * k..(c * k + ky + 1) * k];
                        for (wi, xi) in wrow.iter().zip(&x[row..row + k]) {
                            acc += wi * xi;
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

pub(crate) fn conv_backward(
    w: &[f64],
    x: &[f64],
    gout: &[f64],
    g: ConvGeom,
    mut gx: Option<&mut [f64]>,
    grads: Option<(&mut [f64], &mut [f64])>,
) {
    let (oh, ow, k) = (g.out_h(), g.out_w(), g.kernel);
    let fsize = g.channels * k * k;
    if let Some(gx) = gx.as_deref_mut() {
        gx.fill(0.0);
    }
    let (mut gw, mut gb) = match grads {
        Some((gw, gb)) => (Some(gw), Some(gb)),
        None => (None, None),
    };
    for o in 0..g.out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let go = gout[(o * oh + oy) * ow + ox];
                if go == 0.0 {
                    continue;
                }
                if let Some(gb) = gb.as_deref_mut() {
                    gb[o] += go;
                }
                for c in 0..g.channels {
                    for ky in 0..k {
                        let row = (c * g.height + oy * g.stride + ky) * g.width + ox * g.stride;
                        let widx = o * fsize + (c * k + ky) * k;
                        if let Some(gw) = gw.as_deref_mut() {
                            for (gwi, xi) in gw[widx..widx + k].iter_mut().zip(&x[row..row + k]) {
                                *gwi += go * xi;
                            }
                        }
                        if let Some(gx) = gx.as_deref_mut() {
                            for (gxi, wi) in gx[row..row + k].iter_mut().zip(&w[widx..widx + k]) {
                                *gxi += go * wi;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Non-overlapping max pool; ties go to the first (row-major) position.
pub(crate) fn maxpool_forward(x: &[f64], shape: &[usize], window: usize) -> Vec<f64> {
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let (oh, ow) = (h / window, w / window);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                for dy in 0..window {
                    for dx in 0..window {
                        let v = x[(ch * h + oy * window + dy) * w + ox * window + dx];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out.push(best);
            }
        }
    }
    out
}

pub(crate) fn maxpool_backward(x: &[f64], shape: &[usize], window: usize, gout: &[f64]) -> Vec<f64> {
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let (oh, ow) = (h / window, w / window);
    let mut gx = vec![0.0; x.len()];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut at = 0;
                for dy in 0..window {
                    for dx in 0..window {
                        let idx = (ch * h + oy * window + dy) * w + ox * window + dx;
                        if x[idx] > best {
                            best = x[idx];
                            at = idx;
                        }
                    }
                }
                gx[at] += gout[(ch * oh + oy) * ow + ox];
            }
        }
    }
    gx
}
