//! Layer primitives on `[C, H, W]` tensors.
//!
//! Convolutions and pooling take a `dilation` so the same code serves both
//! the strided per-patch path used in training and the dense path, where
//! every stride-2 pooling is replaced by a stride-1 pooling and the
//! following layers are dilated.

/// Dense `[channels, height, width]` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * height * width);
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    /// Shape-only placeholder (no data) for activations that backward
    /// never reads.
    pub fn empty_like(other: &Tensor3) -> Self {
        Self {
            channels: other.channels,
            height: other.height,
            width: other.width,
            data: Vec::new(),
        }
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Tensor3) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }
}

/// `C = alpha * A * B + beta * C` on row-major slices with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(last(m, k, rsa, csa) < a.len());
        assert!(last(k, n, rsb, csb) < b.len());
    }
    assert!(last(m, n, rsc, csc) < c.len());
    // SAFETY: the asserts above keep every strided access in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Output side of a valid convolution / pooling window.
#[inline]
pub fn conv_out(size: usize, kernel: usize, dilation: usize) -> usize {
    size + 1 - ((kernel - 1) * dilation + 1)
}

#[inline]
pub fn pool_out(size: usize, kernel: usize, stride: usize, dilation: usize) -> usize {
    (size - ((kernel - 1) * dilation + 1)) / stride + 1
}

/// Lays out rows `[row0, row0 + rows)` of the convolution input patches as
/// columns: `col[(ci, ky, kx), (r, ox)]`.
#[allow(clippy::too_many_arguments)]
fn im2col(
    input: &Tensor3,
    kernel: usize,
    dilation: usize,
    out_w: usize,
    row0: usize,
    rows: usize,
    col: &mut Vec<f64>,
) {
    col.clear();
    col.reserve(input.channels * kernel * kernel * rows * out_w);
    for ci in 0..input.channels {
        let plane = input.plane(ci);
        for ky in 0..kernel {
            for kx in 0..kernel {
                for r in 0..rows {
                    let iy = row0 + r + ky * dilation;
                    let start = iy * input.width + kx * dilation;
                    col.extend_from_slice(&plane[start..start + out_w]);
                }
            }
        }
    }
}

fn col2im(col: &[f64], kernel: usize, out_h: usize, out_w: usize, grad_in: &mut Tensor3) {
    let n = out_h * out_w;
    let (h, w) = (grad_in.height, grad_in.width);
    let mut src = 0;
    for ci in 0..grad_in.channels {
        let plane = &mut grad_in.data[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kernel {
            for kx in 0..kernel {
                for r in 0..out_h {
                    let start = (r + ky) * w + kx;
                    for (dst, &v) in plane[start..start + out_w]
                        .iter_mut()
                        .zip(&col[src + r * out_w..src + (r + 1) * out_w])
                    {
                        *dst += v;
                    }
                }
                src += n;
            }
        }
    }
}

const MAX_CHUNK_COLUMNS: usize = 4096;

/// Valid 2D convolution, stride 1, optional dilation. `weight` is
/// `[out, in, k, k]` row-major.
pub fn conv_forward(
    input: &Tensor3,
    weight: &[f64],
    bias: &[f64],
    kernel: usize,
    dilation: usize,
) -> Tensor3 {
    let out_c = bias.len();
    let kk = input.channels * kernel * kernel;
    debug_assert_eq!(weight.len(), out_c * kk);
    let out_h = conv_out(input.height, kernel, dilation);
    let out_w = conv_out(input.width, kernel, dilation);
    let plane = out_h * out_w;
    let mut data = Vec::with_capacity(out_c * plane);
    for &b in bias {
        data.extend(std::iter::repeat_n(b, plane));
    }
    let mut out = Tensor3::from_vec(out_c, out_h, out_w, data);
    let rows_per_chunk = (MAX_CHUNK_COLUMNS / out_w.max(1)).max(1);
    let mut col = Vec::new();
    let mut row0 = 0;
    while row0 < out_h {
        let rows = rows_per_chunk.min(out_h - row0);
        im2col(input, kernel, dilation, out_w, row0, rows, &mut col);
        let n = rows * out_w;
        let offset = row0 * out_w;
        gemm(
            out_c,
            kk,
            n,
            weight,
            (kk, 1),
            &col,
            (n, 1),
            1.0,
            &mut out.data[offset..],
            (plane, 1),
        );
        row0 += rows;
    }
    out
}

/// Backward pass of an undilated [`conv_forward`]. Accumulates into
/// `grad_weight` / `grad_bias` and returns the input gradient when asked.
pub fn conv_backward(
    input: &Tensor3,
    weight: &[f64],
    kernel: usize,
    grad_out: &Tensor3,
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    want_input_grad: bool,
) -> Option<Tensor3> {
    let out_c = grad_out.channels;
    let kk = input.channels * kernel * kernel;
    let n = grad_out.height * grad_out.width;
    let mut col = Vec::new();
    im2col(input, kernel, 1, grad_out.width, 0, grad_out.height, &mut col);

    // dW[out, kk] += dOut[out, n] * col^T[n, kk]
    gemm(
        out_c,
        n,
        kk,
        &grad_out.data,
        (n, 1),
        &col,
        (1, n),
        1.0,
        grad_weight,
        (kk, 1),
    );
    for (c, gb) in grad_bias.iter_mut().enumerate() {
        *gb += grad_out.plane(c).iter().sum::<f64>();
    }
    if !want_input_grad {
        return None;
    }
    // dCol[kk, n] = W^T[kk, out] * dOut[out, n]
    let mut dcol = vec![0.0; kk * n];
    gemm(
        kk,
        out_c,
        n,
        weight,
        (1, kk),
        &grad_out.data,
        (n, 1),
        0.0,
        &mut dcol,
        (n, 1),
    );
    let mut grad_in = Tensor3::zeros(input.channels, input.height, input.width);
    col2im(&dcol, kernel, grad_out.height, grad_out.width, &mut grad_in);
    Some(grad_in)
}

/// Writes the undilated im2col matrix of `input` into columns
/// `[offset, offset + out_h * out_w)` of `col`, whose rows have `stride`
/// entries.
fn im2col_strided(input: &Tensor3, kernel: usize, out_h: usize, out_w: usize, col: &mut [f64], stride: usize, offset: usize) {
    let mut row = 0;
    for ci in 0..input.channels {
        let plane = input.plane(ci);
        for ky in 0..kernel {
            for kx in 0..kernel {
                let base = row * stride + offset;
                for r in 0..out_h {
                    let start = (r + ky) * input.width + kx;
                    col[base + r * out_w..base + (r + 1) * out_w].copy_from_slice(&plane[start..start + out_w]);
                }
                row += 1;
            }
        }
    }
}

/// [`conv_forward`] (undilated) over several same-shape inputs with one
/// matrix product.
pub fn conv_forward_batch(inputs: &[&Tensor3], weight: &[f64], bias: &[f64], kernel: usize) -> Vec<Tensor3> {
    let Some(first) = inputs.first() else {
        return Vec::new();
    };
    let out_c = bias.len();
    let kk = first.channels * kernel * kernel;
    let out_h = conv_out(first.height, kernel, 1);
    let out_w = conv_out(first.width, kernel, 1);
    let n = out_h * out_w;
    let total = n * inputs.len();
    let mut col = vec![0.0; kk * total];
    for (b, x) in inputs.iter().enumerate() {
        debug_assert!(x.same_shape(first));
        im2col_strided(x, kernel, out_h, out_w, &mut col, total, b * n);
    }
    let mut out = vec![0.0; out_c * total];
    for (c, &bv) in bias.iter().enumerate() {
        out[c * total..(c + 1) * total].fill(bv);
    }
    gemm(out_c, kk, total, weight, (kk, 1), &col, (total, 1), 1.0, &mut out, (total, 1));
    (0..inputs.len())
        .map(|b| {
            let mut t = Tensor3::zeros(out_c, out_h, out_w);
            for c in 0..out_c {
                t.data[c * n..(c + 1) * n].copy_from_slice(&out[c * total + b * n..c * total + (b + 1) * n]);
            }
            t
        })
        .collect()
}

/// [`conv_backward`] over several inputs: weight gradients of all items are
/// accumulated with one matrix product.
pub fn conv_backward_batch(
    inputs: &[&Tensor3],
    weight: &[f64],
    kernel: usize,
    grad_outs: &[Tensor3],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    want_input_grad: bool,
) -> Option<Vec<Tensor3>> {
    let first = inputs.first()?;
    let out_c = grad_outs[0].channels;
    let (out_h, out_w) = (grad_outs[0].height, grad_outs[0].width);
    let kk = first.channels * kernel * kernel;
    let n = out_h * out_w;
    let total = n * inputs.len();
    let mut col = vec![0.0; kk * total];
    let mut dout = vec![0.0; out_c * total];
    for (b, (x, g)) in inputs.iter().zip(grad_outs).enumerate() {
        im2col_strided(x, kernel, out_h, out_w, &mut col, total, b * n);
        for c in 0..out_c {
            dout[c * total + b * n..c * total + (b + 1) * n].copy_from_slice(g.plane(c));
        }
    }
    gemm(out_c, total, kk, &dout, (total, 1), &col, (1, total), 1.0, grad_weight, (kk, 1));
    for (c, gb) in grad_bias.iter_mut().enumerate() {
        *gb += dout[c * total..(c + 1) * total].iter().sum::<f64>();
    }
    if !want_input_grad {
        return None;
    }
    let mut dcol = col;
    gemm(kk, out_c, total, weight, (1, kk), &dout, (total, 1), 0.0, &mut dcol, (total, 1));
    Some(
        inputs
            .iter()
            .enumerate()
            .map(|(b, x)| {
                let mut local = vec![0.0; kk * n];
                for r in 0..kk {
                    local[r * n..(r + 1) * n].copy_from_slice(&dcol[r * total + b * n..r * total + (b + 1) * n]);
                }
                let mut grad_in = Tensor3::zeros(x.channels, x.height, x.width);
                col2im(&local, kernel, out_h, out_w, &mut grad_in);
                grad_in
            })
            .collect(),
    )
}

/// Max pooling; returns the output and, per output value, the flat input
/// index of the winning element (first maximum in scan order).
pub fn maxpool_forward(
    input: &Tensor3,
    kernel: usize,
    stride: usize,
    dilation: usize,
) -> (Tensor3, Vec<u32>) {
    let out_h = pool_out(input.height, kernel, stride, dilation);
    let out_w = pool_out(input.width, kernel, stride, dilation);
    let mut out = Vec::with_capacity(input.channels * out_h * out_w);
    let mut argmax = Vec::with_capacity(out.capacity());
    let in_plane = input.height * input.width;
    for c in 0..input.channels {
        let plane = input.plane(c);
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for ky in 0..kernel {
                    let row = (oy * stride + ky * dilation) * input.width;
                    for kx in 0..kernel {
                        let idx = row + ox * stride + kx * dilation;
                        if plane[idx] > best {
                            best = plane[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push((c * in_plane + best_idx) as u32);
            }
        }
    }
    (Tensor3::from_vec(input.channels, out_h, out_w, out), argmax)
}

pub fn maxpool_backward(grad_out: &Tensor3, argmax: &[u32], input_shape: (usize, usize, usize)) -> Tensor3 {
    let (c, h, w) = input_shape;
    let mut grad_in = Tensor3::zeros(c, h, w);
    for (&g, &idx) in grad_out.data.iter().zip(argmax) {
        grad_in.data[idx as usize] += g;
    }
    grad_in
}

/// `exp(x)` for `x` in `[-40, 0]`: `2^k · p(r)` with `|r| <= ln2 / 2` and a
/// degree-13 Taylor polynomial (relative error ~1e-16). Branch-free so the
/// caller's loop vectorizes.
#[inline(always)]
fn exp_nonpositive(x: f64) -> f64 {
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let x = x.max(-40.0);
    let k = (x * std::f64::consts::LOG2_E - 0.5) as i64 as f64;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 6_227_020_800.0;
    for c in [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ] {
        p = p * r + c;
    }
    p * f64::from_bits(((k as i64 + 1023) as u64) << 52)
}

/// `tanh(x) = sign(x) · (1 − e) / (1 + e)` with `e = exp(−2|x|)`.
#[inline(always)]
pub fn tanh(x: f64) -> f64 {
    let e = exp_nonpositive(-2.0 * x.abs());
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

pub fn tanh_inplace(t: &mut Tensor3) {
    for v in &mut t.data {
        *v = tanh(*v);
    }
}

/// Gradient through `y = tanh(x)` given the forward output `y`.
pub fn tanh_backward(output: &Tensor3, grad_out: &Tensor3) -> Tensor3 {
    let data = output
        .data
        .iter()
        .zip(&grad_out.data)
        .map(|(&y, &g)| g * (1.0 - y * y))
        .collect();
    Tensor3::from_vec(output.channels, output.height, output.width, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_matches_libm() {
        let mut worst = 0f64;
        for i in -200_000..=200_000 {
            let x = i as f64 * 1e-4;
            let (a, b) = (tanh(x), x.tanh());
            worst = worst.max((a - b).abs() / b.abs().max(1e-3));
        }
        assert!(worst < 1e-13, "worst relative error {worst}");
        assert_eq!(tanh(0.0), 0.0);
        assert_eq!(tanh(50.0), 1.0);
        assert_eq!(tanh(-50.0), -1.0);
    }

    fn naive_conv(input: &Tensor3, weight: &[f64], bias: &[f64], k: usize, d: usize) -> Tensor3 {
        let oh = conv_out(input.height, k, d);
        let ow = conv_out(input.width, k, d);
        let mut out = Tensor3::zeros(bias.len(), oh, ow);
        for co in 0..bias.len() {
            for y in 0..oh {
                for x in 0..ow {
                    let mut s = bias[co];
                    for ci in 0..input.channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let wv = weight[((co * input.channels + ci) * k + ky) * k + kx];
                                s += wv * input.plane(ci)[(y + ky * d) * input.width + x + kx * d];
                            }
                        }
                    }
                    out.data[(co * oh + y) * ow + x] = s;
                }
            }
        }
        out
    }

    fn ramp(n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|i| ((i * 37 % 101) as f64 / 101.0 - 0.5) * scale).collect()
    }

    #[test]
    fn conv_matches_naive_with_dilation() {
        let input = Tensor3::from_vec(3, 11, 9, ramp(3 * 11 * 9, 2.0));
        let weight = ramp(4 * 3 * 9, 1.0);
        let bias = vec![0.1, -0.2, 0.3, 0.0];
        for d in [1, 2] {
            let fast = conv_forward(&input, &weight, &bias, 3, d);
            let slow = naive_conv(&input, &weight, &bias, 3, d);
            assert!(fast.same_shape(&slow));
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pool_shapes() {
        let input = Tensor3::from_vec(1, 4, 4, ramp(16, 1.0));
        let (out, _) = maxpool_forward(&input, 2, 2, 1);
        assert_eq!((out.height, out.width), (2, 2));
        let (dense, _) = maxpool_forward(&input, 2, 1, 2);
        assert_eq!((dense.height, dense.width), (2, 2));
    }

    #[test]
    fn maxpool_backward_routes_to_argmax() {
        let input = Tensor3::from_vec(1, 2, 2, vec![0.0, 3.0, 1.0, 2.0]);
        let (out, arg) = maxpool_forward(&input, 2, 2, 1);
        assert_eq!(out.data, vec![3.0]);
        let g = maxpool_backward(&Tensor3::from_vec(1, 1, 1, vec![5.0]), &arg, (1, 2, 2));
        assert_eq!(g.data, vec![0.0, 5.0, 0.0, 0.0]);
    }
}
