//! Forward and backward kernels of the layers the network is built from.

use crate::scalar::{gemm, MatMut, MatRef, Scalar};

use super::tensor::FeatureMap;

pub const BN_EPS: f64 = 1e-5;

/// Writes the 3×3, pad-1 patch matrix of image `b` into `cols`
/// (`channels*9` rows × `height*width` columns).
fn im2col3<T: Scalar>(x: &FeatureMap<T>, b: usize, cols: &mut [T]) {
    let (h, w) = (x.height, x.width);
    let p = h * w;
    for c in 0..x.channels {
        let plane = x.plane_of(c, b);
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(c * 9 + ky * 3 + kx) * p..(c * 9 + ky * 3 + kx + 1) * p];
                for y in 0..h {
                    let out = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            out[0] = T::zero();
                            out[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => out.copy_from_slice(src),
                        _ => {
                            out[..w - 1].copy_from_slice(&src[1..]);
                            out[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

fn ensure_len<T: Scalar>(buf: &mut Vec<T>, n: usize) {
    if buf.len() < n {
        buf.resize(n, T::zero());
    }
}

/// 3×3 convolution, stride 1, zero padding 1. `weight` is
/// `[out][in][3][3]`.
pub fn conv3x3_forward<T: Scalar>(
    x: &FeatureMap<T>,
    weight: &[T],
    bias: &[T],
    out_channels: usize,
    scratch: &mut Vec<T>,
) -> FeatureMap<T> {
    let k = x.channels * 9;
    assert_eq!(weight.len(), out_channels * k);
    let p = x.plane();
    let mut y = FeatureMap::zeros(out_channels, x.batch, x.height, x.width);
    ensure_len(scratch, k * p);
    let row_stride = x.batch * p;
    for b in 0..x.batch {
        im2col3(x, b, &mut scratch[..k * p]);
        gemm(
            T::one(),
            MatRef::new(weight, out_channels, k),
            MatRef::new(&scratch[..k * p], k, p),
            T::zero(),
            MatMut::with_row_stride(&mut y.data[b * p..], out_channels, p, row_stride),
        );
    }
    for (c, &bc) in bias.iter().enumerate() {
        y.channel_mut(c).iter_mut().for_each(|v| *v += bc);
    }
    y
}

pub struct ConvGrads<T> {
    pub dx: Option<FeatureMap<T>>,
    pub dweight: Vec<T>,
    pub dbias: Vec<T>,
}

/// Gradients of [`conv3x3_forward`]. The input gradient is itself a 3×3
/// convolution of `dy` with the spatially flipped, channel-transposed kernel.
pub fn conv3x3_backward<T: Scalar>(
    x: &FeatureMap<T>,
    weight: &[T],
    dy: &FeatureMap<T>,
    need_dx: bool,
    scratch: &mut Vec<T>,
) -> ConvGrads<T> {
    let cin = x.channels;
    let cout = dy.channels;
    let k = cin * 9;
    let p = x.plane();
    let row_stride = x.batch * p;

    let dbias: Vec<T> = (0..cout).map(|c| dy.channel(c).iter().copied().sum()).collect();

    let mut dweight = vec![T::zero(); cout * k];
    ensure_len(scratch, k.max(cout * 9) * p);
    for b in 0..x.batch {
        im2col3(x, b, &mut scratch[..k * p]);
        gemm(
            T::one(),
            MatRef::with_row_stride(&dy.data[b * p..], cout, p, row_stride),
            MatRef::new(&scratch[..k * p], k, p).t(),
            T::one(),
            MatMut::new(&mut dweight, cout, k),
        );
    }

    let dx = need_dx.then(|| {
        // flipped[ci][co][8 - t] = weight[co][ci][t]
        let mut flipped = vec![T::zero(); cin * cout * 9];
        for co in 0..cout {
            for ci in 0..cin {
                for t in 0..9 {
                    flipped[ci * cout * 9 + co * 9 + (8 - t)] = weight[co * k + ci * 9 + t];
                }
            }
        }
        let mut dx = FeatureMap::zeros(cin, x.batch, x.height, x.width);
        let kd = cout * 9;
        for b in 0..x.batch {
            im2col3(dy, b, &mut scratch[..kd * p]);
            gemm(
                T::one(),
                MatRef::new(&flipped, cin, kd),
                MatRef::new(&scratch[..kd * p], kd, p),
                T::zero(),
                MatMut::with_row_stride(&mut dx.data[b * p..], cin, p, row_stride),
            );
        }
        dx
    });
    ConvGrads { dx, dweight, dbias }
}

/// 1×1 convolution: `y = W x (+ b)` with `W` of shape `[out][in]`.
pub fn conv1x1_forward<T: Scalar>(
    x: &FeatureMap<T>,
    weight: &[T],
    bias: Option<&[T]>,
    out_channels: usize,
) -> FeatureMap<T> {
    let m = x.channel_len();
    let mut y = FeatureMap::zeros(out_channels, x.batch, x.height, x.width);
    gemm(
        T::one(),
        MatRef::new(weight, out_channels, x.channels),
        MatRef::new(&x.data, x.channels, m),
        T::zero(),
        MatMut::new(&mut y.data, out_channels, m),
    );
    if let Some(bias) = bias {
        for (c, &bc) in bias.iter().enumerate() {
            y.channel_mut(c).iter_mut().for_each(|v| *v += bc);
        }
    }
    y
}

/// Gradients of [`conv1x1_forward`]: `(dx, dW, db)`.
pub fn conv1x1_backward<T: Scalar>(
    x: &FeatureMap<T>,
    weight: &[T],
    dy: &FeatureMap<T>,
    need_dx: bool,
) -> ConvGrads<T> {
    let m = x.channel_len();
    let cout = dy.channels;
    let mut dweight = vec![T::zero(); cout * x.channels];
    gemm(
        T::one(),
        MatRef::new(&dy.data, cout, m),
        MatRef::new(&x.data, x.channels, m).t(),
        T::zero(),
        MatMut::new(&mut dweight, cout, x.channels),
    );
    let dbias = (0..cout).map(|c| dy.channel(c).iter().copied().sum()).collect();
    let dx = need_dx.then(|| {
        let mut dx = FeatureMap::zeros(x.channels, x.batch, x.height, x.width);
        gemm(
            T::one(),
            MatRef::new(weight, cout, x.channels).t(),
            MatRef::new(&dy.data, cout, m),
            T::zero(),
            MatMut::new(&mut dx.data, x.channels, m),
        );
        dx
    });
    ConvGrads { dx, dweight, dbias }
}

/// 2×2 stride-2 transposed convolution. `weight` is `[in][out][2][2]`.
pub fn conv_transpose2x2_forward<T: Scalar>(
    x: &FeatureMap<T>,
    weight: &[T],
    bias: &[T],
    out_channels: usize,
) -> FeatureMap<T> {
    let m = x.channel_len();
    let rows = out_channels * 4;
    let mut z = vec![T::zero(); rows * m];
    gemm(
        T::one(),
        MatRef::new(weight, x.channels, rows).t(),
        MatRef::new(&x.data, x.channels, m),
        T::zero(),
        MatMut::new(&mut z, rows, m),
    );
    let (h, w) = (x.height, x.width);
    let mut y = FeatureMap::zeros(out_channels, x.batch, 2 * h, 2 * w);
    let (oh, ow) = (2 * h, 2 * w);
    for co in 0..out_channels {
        let bc = bias[co];
        for b in 0..x.batch {
            let dst = (co * x.batch + b) * oh * ow;
            for a in 0..2 {
                for e in 0..2 {
                    let src = &z[(co * 4 + a * 2 + e) * m + b * h * w..][..h * w];
                    for i in 0..h {
                        let out_row = dst + (2 * i + a) * ow + e;
                        for j in 0..w {
                            y.data[out_row + 2 * j] = src[i * w + j] + bc;
                        }
                    }
                }
            }
        }
    }
    y
}

pub fn conv_transpose2x2_backward<T: Scalar>(
    x: &FeatureMap<T>,
    weight: &[T],
    dy: &FeatureMap<T>,
) -> ConvGrads<T> {
    let (h, w) = (x.height, x.width);
    let m = x.channel_len();
    let cout = dy.channels;
    let rows = cout * 4;
    let (oh, ow) = (2 * h, 2 * w);
    let mut dz = vec![T::zero(); rows * m];
    for co in 0..cout {
        for b in 0..x.batch {
            let src = (co * x.batch + b) * oh * ow;
            for a in 0..2 {
                for e in 0..2 {
                    let dst = &mut dz[(co * 4 + a * 2 + e) * m + b * h * w..][..h * w];
                    for i in 0..h {
                        let in_row = src + (2 * i + a) * ow + e;
                        for j in 0..w {
                            dst[i * w + j] = dy.data[in_row + 2 * j];
                        }
                    }
                }
            }
        }
    }
    let mut dweight = vec![T::zero(); x.channels * rows];
    gemm(
        T::one(),
        MatRef::new(&x.data, x.channels, m),
        MatRef::new(&dz, rows, m).t(),
        T::zero(),
        MatMut::new(&mut dweight, x.channels, rows),
    );
    let mut dx = FeatureMap::zeros(x.channels, x.batch, h, w);
    gemm(
        T::one(),
        MatRef::new(weight, x.channels, rows),
        MatRef::new(&dz, rows, m),
        T::zero(),
        MatMut::new(&mut dx.data, x.channels, m),
    );
    let dbias = (0..cout).map(|c| dy.channel(c).iter().copied().sum()).collect();
    ConvGrads { dx: Some(dx), dweight, dbias }
}

/// Normalization statistics mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Per-channel statistics of the current batch.
    Train,
    /// Stored running statistics.
    Eval,
}

pub struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    /// Batch mean and biased variance (train mode only).
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
}

/// Per-channel normalization followed by ReLU.
pub fn bn_relu_forward<T: Scalar>(
    x: &FeatureMap<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
    mode: Mode,
) -> (FeatureMap<T>, BnCache<T>) {
    let n = x.channel_len();
    let eps = BN_EPS;
    let mut y = FeatureMap::zeros(x.channels, x.batch, x.height, x.width);
    let mut xhat = vec![T::zero(); x.data.len()];
    let mut inv_std = Vec::with_capacity(x.channels);
    let mut batch_mean = Vec::new();
    let mut batch_var = Vec::new();
    for c in 0..x.channels {
        let xs = x.channel(c);
        let (mean, var) = match mode {
            Mode::Train => {
                let mean = xs.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n as f64;
                let var = xs
                    .iter()
                    .map(|v| {
                        let d = v.to_f64_lossy() - mean;
                        d * d
                    })
                    .sum::<f64>()
                    / n as f64;
                batch_mean.push(T::from_f64_lossy(mean));
                batch_var.push(T::from_f64_lossy(var));
                (T::from_f64_lossy(mean), T::from_f64_lossy(var))
            }
            Mode::Eval => (running_mean[c], running_var[c]),
        };
        let is = T::one() / (var + T::from_f64_lossy(eps)).sqrt();
        inv_std.push(is);
        let (g, bt) = (gamma[c], beta[c]);
        let xh = &mut xhat[c * n..(c + 1) * n];
        let out = y.channel_mut(c);
        for i in 0..n {
            let v = (xs[i] - mean) * is;
            xh[i] = v;
            let o = g * v + bt;
            out[i] = if o > T::zero() { o } else { T::zero() };
        }
    }
    (y, BnCache { xhat, inv_std, batch_mean, batch_var })
}

/// Backward through ReLU and normalization: `(dx, dgamma, dbeta)`.
pub fn bn_relu_backward<T: Scalar>(
    out: &FeatureMap<T>,
    cache: &BnCache<T>,
    gamma: &[T],
    dy: &FeatureMap<T>,
    mode: Mode,
) -> (FeatureMap<T>, Vec<T>, Vec<T>) {
    let n = out.channel_len();
    let nt = T::from_usize(n).expect("count fits");
    let mut dx = FeatureMap::zeros(out.channels, out.batch, out.height, out.width);
    let mut dgamma = Vec::with_capacity(out.channels);
    let mut dbeta = Vec::with_capacity(out.channels);
    for c in 0..out.channels {
        let o = out.channel(c);
        let d = dy.channel(c);
        let xh = &cache.xhat[c * n..(c + 1) * n];
        // gradient w.r.t. the normalized affine output, masked by ReLU
        let mut sum_d = T::zero();
        let mut sum_dx = T::zero();
        let mut dpre = vec![T::zero(); n];
        for i in 0..n {
            if o[i] > T::zero() {
                dpre[i] = d[i];
                sum_d += d[i];
                sum_dx += d[i] * xh[i];
            }
        }
        dgamma.push(sum_dx);
        dbeta.push(sum_d);
        let scale = gamma[c] * cache.inv_std[c];
        let out_c = dx.channel_mut(c);
        match mode {
            Mode::Train => {
                let k = scale / nt;
                for i in 0..n {
                    out_c[i] = k * (nt * dpre[i] - sum_d - xh[i] * sum_dx);
                }
            }
            Mode::Eval => {
                for i in 0..n {
                    out_c[i] = scale * dpre[i];
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// 2×2 max pooling; returns the pooled map and the winning offset (0..4)
/// of every output cell. Ties go to the first offset in row-major order.
pub fn maxpool2_forward<T: Scalar>(x: &FeatureMap<T>) -> (FeatureMap<T>, Vec<u8>) {
    let (h, w) = (x.height / 2, x.width / 2);
    let mut y = FeatureMap::zeros(x.channels, x.batch, h, w);
    let mut arg = vec![0u8; y.data.len()];
    let iw = x.width;
    for plane in 0..x.channels * x.batch {
        let src = &x.data[plane * x.plane()..(plane + 1) * x.plane()];
        let base = plane * h * w;
        for i in 0..h {
            for j in 0..w {
                let r0 = 2 * i * iw + 2 * j;
                let cand = [src[r0], src[r0 + 1], src[r0 + iw], src[r0 + iw + 1]];
                let mut best = 0;
                for t in 1..4 {
                    if cand[t] > cand[best] {
                        best = t;
                    }
                }
                y.data[base + i * w + j] = cand[best];
                arg[base + i * w + j] = best as u8;
            }
        }
    }
    (y, arg)
}

pub fn maxpool2_backward<T: Scalar>(dy: &FeatureMap<T>, arg: &[u8], in_height: usize, in_width: usize) -> FeatureMap<T> {
    let mut dx = FeatureMap::zeros(dy.channels, dy.batch, in_height, in_width);
    let (h, w) = (dy.height, dy.width);
    for plane in 0..dy.channels * dy.batch {
        let base = plane * h * w;
        let dst = plane * in_height * in_width;
        for i in 0..h {
            for j in 0..w {
                let t = arg[base + i * w + j] as usize;
                let (a, e) = (t / 2, t % 2);
                dx.data[dst + (2 * i + a) * in_width + 2 * j + e] += dy.data[base + i * w + j];
            }
        }
    }
    dx
}

pub fn sigmoid<T: Scalar>(s: T) -> T {
    if s >= T::zero() {
        T::one() / (T::one() + (-s).exp())
    } else {
        let e = s.exp();
        e / (T::one() + e)
    }
}

/// Weights of one attention gate.
pub struct GateParams<'a, T> {
    /// `[inner][channels]`
    pub wx: &'a [T],
    /// `[inner][channels]`
    pub wg: &'a [T],
    pub bias: &'a [T],
    /// `[1][inner]`
    pub psi: &'a [T],
    pub psi_bias: T,
}

pub struct GateCache<T> {
    /// ReLU output of the joint projection.
    pub q: FeatureMap<T>,
    /// Per-pixel coefficients, one channel.
    pub alpha: FeatureMap<T>,
}

/// Attention gate: `q = relu(Wx x + Wg g + b)`, `alpha = sigmoid(psi q + b_psi)`,
/// output `x * alpha` broadcast over channels.
pub fn attention_gate_forward<T: Scalar>(
    x: &FeatureMap<T>,
    g: &FeatureMap<T>,
    p: &GateParams<'_, T>,
) -> (FeatureMap<T>, GateCache<T>) {
    let inner = p.bias.len();
    let m = x.channel_len();
    let mut q = conv1x1_forward(x, p.wx, Some(p.bias), inner);
    gemm(
        T::one(),
        MatRef::new(p.wg, inner, g.channels),
        MatRef::new(&g.data, g.channels, m),
        T::one(),
        MatMut::new(&mut q.data, inner, m),
    );
    q.data.iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero()
        }
    });
    let mut alpha = conv1x1_forward(&q, p.psi, Some(std::slice::from_ref(&p.psi_bias)), 1);
    alpha.data.iter_mut().for_each(|v| *v = sigmoid(*v));
    let mut out = x.clone();
    for c in 0..x.channels {
        for (o, &a) in out.channel_mut(c).iter_mut().zip(&alpha.data) {
            *o *= a;
        }
    }
    (out, GateCache { q, alpha })
}

pub struct GateGrads<T> {
    pub dx: FeatureMap<T>,
    pub dg: FeatureMap<T>,
    pub dwx: Vec<T>,
    pub dwg: Vec<T>,
    pub dbias: Vec<T>,
    pub dpsi: Vec<T>,
    pub dpsi_bias: T,
}

pub fn attention_gate_backward<T: Scalar>(
    x: &FeatureMap<T>,
    g: &FeatureMap<T>,
    p: &GateParams<'_, T>,
    cache: &GateCache<T>,
    dout: &FeatureMap<T>,
) -> GateGrads<T> {
    let m = x.channel_len();
    let inner = p.bias.len();
    let alpha = &cache.alpha.data;

    let mut dx = dout.clone();
    let mut dalpha = vec![T::zero(); m];
    for c in 0..x.channels {
        let xc = x.channel(c);
        let dc = dx.channel_mut(c);
        for i in 0..m {
            dalpha[i] += dc[i] * xc[i];
            dc[i] *= alpha[i];
        }
    }
    // through the sigmoid
    let ds: Vec<T> = dalpha.iter().zip(alpha).map(|(&d, &a)| d * a * (T::one() - a)).collect();
    let ds = FeatureMap::from_data(1, x.batch, x.height, x.width, ds).expect("shape matches");
    let psi_grads = conv1x1_backward(&cache.q, p.psi, &ds, true);
    let mut dq = psi_grads.dx.expect("requested");
    for (d, &q) in dq.data.iter_mut().zip(&cache.q.data) {
        if q <= T::zero() {
            *d = T::zero();
        }
    }
    let gx = conv1x1_backward(x, p.wx, &dq, true);
    let gg = conv1x1_backward(g, p.wg, &dq, true);
    dx.add_assign(&gx.dx.expect("requested"));
    debug_assert_eq!(gx.dbias.len(), inner);
    GateGrads {
        dx,
        dg: gg.dx.expect("requested"),
        dwx: gx.dweight,
        dwg: gg.dweight,
        dbias: gx.dbias,
        dpsi: psi_grads.dweight,
        dpsi_bias: psi_grads.dbias[0],
    }
}
