//! Layer primitives with hand-written backward passes.
//!
//! Kernels are flat `[out][in][kh][kw]` arrays. A transposed convolution
//! reuses the layout of the convolution it is the adjoint of, so its
//! kernel is `[in][out][kh][kw]` from its own point of view.

use crate::error::{dims_err, Error, Result};

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_c: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl ConvSpec {
    pub fn new(in_c: usize, out_c: usize, kh: usize, kw: usize) -> Self {
        Self {
            in_c,
            out_c,
            kh,
            kw,
            stride: (1, 1),
            pad: (0, 0),
        }
    }

    pub fn stride(mut self, sh: usize, sw: usize) -> Self {
        self.stride = (sh, sw);
        self
    }

    pub fn pad(mut self, ph: usize, pw: usize) -> Self {
        self.pad = (ph, pw);
        self
    }

    pub fn kernel_len(&self) -> usize {
        self.out_c * self.in_c * self.kh * self.kw
    }

    pub fn kernel_shape(&self) -> Vec<usize> {
        vec![self.out_c, self.in_c, self.kh, self.kw]
    }

    pub fn validate(&self) -> Result<()> {
        if [
            self.in_c,
            self.out_c,
            self.kh,
            self.kw,
            self.stride.0,
            self.stride.1,
        ]
        .contains(&0)
        {
            return Err(Error::InvalidConfig(format!(
                "degenerate convolution {self:?}"
            )));
        }
        Ok(())
    }

    pub fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.validate()?;
        let (hp, wp) = (h + 2 * self.pad.0, w + 2 * self.pad.1);
        if hp < self.kh || wp < self.kw {
            return Err(dims_err("convolution input", (self.kh, self.kw), (hp, wp)));
        }
        Ok((
            (hp - self.kh) / self.stride.0 + 1,
            (wp - self.kw) / self.stride.1 + 1,
        ))
    }

    /// Output size of the transposed convolution sharing this kernel,
    /// where `in_c`/`out_c` are read from the transposed side.
    pub fn transposed_out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.validate()?;
        if h == 0 || w == 0 {
            return Err(dims_err("transposed convolution input", "nonempty", (h, w)));
        }
        let oh = (h - 1) * self.stride.0 + self.kh;
        let ow = (w - 1) * self.stride.1 + self.kw;
        if oh < 2 * self.pad.0 + 1 || ow < 2 * self.pad.1 + 1 {
            return Err(dims_err("transposed convolution input", "nonempty", (h, w)));
        }
        Ok((oh - 2 * self.pad.0, ow - 2 * self.pad.1))
    }

    /// The convolution whose input gradient this transposed convolution is.
    fn adjoint(&self) -> ConvSpec {
        ConvSpec {
            in_c: self.out_c,
            out_c: self.in_c,
            ..*self
        }
    }
}

/// Output indices `o` in `[lo, hi)` with `0 <= o*stride + off - pad < n_in`.
#[inline]
fn valid_range(n_out: usize, n_in: usize, stride: usize, off: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > off {
        (pad - off).div_ceil(stride)
    } else {
        0
    };
    let hi = if n_in + pad > off {
        ((n_in + pad - off - 1) / stride + 1).min(n_out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn check_kernel(k: &[f64], s: &ConvSpec) -> Result<()> {
    if k.len() != s.kernel_len() {
        return Err(Error::SizeMismatch {
            expected: s.kernel_len(),
            found: k.len(),
        });
    }
    Ok(())
}

fn check_bias(b: &[f64], n: usize) -> Result<()> {
    if b.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: b.len(),
        });
    }
    Ok(())
}

fn conv_raw(x: &Tensor, k: &[f64], s: &ConvSpec) -> Result<Tensor> {
    if x.channels() != s.in_c {
        return Err(dims_err("convolution input channels", s.in_c, x.channels()));
    }
    check_kernel(k, s)?;
    let (h, w) = (x.height(), x.width());
    let (oh, ow) = s.out_dims(h, w)?;
    let (sh, sw) = s.stride;
    let (ph, pw) = s.pad;
    let xd = x.data();
    let mut out = vec![0.0; s.out_c * oh * ow];
    for o in 0..s.out_c {
        let obase = o * oh * ow;
        for i in 0..s.in_c {
            let ibase = i * h * w;
            for ky in 0..s.kh {
                let (y0, y1) = valid_range(oh, h, sh, ky, ph);
                for kx in 0..s.kw {
                    let wv = k[((o * s.in_c + i) * s.kh + ky) * s.kw + kx];
                    let (x0, x1) = valid_range(ow, w, sw, kx, pw);
                    for oy in y0..y1 {
                        let iy = oy * sh + ky - ph;
                        let orow = obase + oy * ow;
                        let irow = ibase + iy * w;
                        for ox in x0..x1 {
                            out[orow + ox] += wv * xd[irow + ox * sw + kx - pw];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_raw(s.out_c, oh, ow, out))
}

fn conv_input_grad(dy: &Tensor, k: &[f64], s: &ConvSpec, h: usize, w: usize) -> Result<Tensor> {
    check_kernel(k, s)?;
    let (oh, ow) = s.out_dims(h, w)?;
    dy.check_dims("convolution output gradient", (s.out_c, oh, ow))?;
    let (sh, sw) = s.stride;
    let (ph, pw) = s.pad;
    let dyd = dy.data();
    let mut dx = vec![0.0; s.in_c * h * w];
    for o in 0..s.out_c {
        let obase = o * oh * ow;
        for i in 0..s.in_c {
            let ibase = i * h * w;
            for ky in 0..s.kh {
                let (y0, y1) = valid_range(oh, h, sh, ky, ph);
                for kx in 0..s.kw {
                    let wv = k[((o * s.in_c + i) * s.kh + ky) * s.kw + kx];
                    let (x0, x1) = valid_range(ow, w, sw, kx, pw);
                    for oy in y0..y1 {
                        let iy = oy * sh + ky - ph;
                        let orow = obase + oy * ow;
                        let irow = ibase + iy * w;
                        for ox in x0..x1 {
                            dx[irow + ox * sw + kx - pw] += wv * dyd[orow + ox];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_raw(s.in_c, h, w, dx))
}

fn conv_kernel_grad(x: &Tensor, dy: &Tensor, s: &ConvSpec) -> Result<Vec<f64>> {
    let (h, w) = (x.height(), x.width());
    let (oh, ow) = s.out_dims(h, w)?;
    dy.check_dims("convolution output gradient", (s.out_c, oh, ow))?;
    let (sh, sw) = s.stride;
    let (ph, pw) = s.pad;
    let (xd, dyd) = (x.data(), dy.data());
    let mut dk = vec![0.0; s.kernel_len()];
    for o in 0..s.out_c {
        let obase = o * oh * ow;
        for i in 0..s.in_c {
            let ibase = i * h * w;
            for ky in 0..s.kh {
                let (y0, y1) = valid_range(oh, h, sh, ky, ph);
                for kx in 0..s.kw {
                    let (x0, x1) = valid_range(ow, w, sw, kx, pw);
                    let mut acc = 0.0;
                    for oy in y0..y1 {
                        let iy = oy * sh + ky - ph;
                        let orow = obase + oy * ow;
                        let irow = ibase + iy * w;
                        for ox in x0..x1 {
                            acc += dyd[orow + ox] * xd[irow + ox * sw + kx - pw];
                        }
                    }
                    dk[((o * s.in_c + i) * s.kh + ky) * s.kw + kx] = acc;
                }
            }
        }
    }
    Ok(dk)
}

fn add_bias(t: &mut Tensor, b: &[f64]) {
    let plane = t.height() * t.width();
    for (c, bv) in b.iter().enumerate() {
        for v in &mut t.data_mut()[c * plane..(c + 1) * plane] {
            *v += bv;
        }
    }
}

fn bias_grad(dy: &Tensor) -> Vec<f64> {
    let plane = dy.height() * dy.width();
    (0..dy.channels())
        .map(|c| dy.data()[c * plane..(c + 1) * plane].iter().sum())
        .collect()
}

/// Gradients of a layer with one kernel and one bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub dx: Tensor,
    pub dk: Vec<f64>,
    pub db: Vec<f64>,
}

/// Cross-correlation `y[o] = b[o] + Σ_i k[o][i] ⋆ x[i]`.
pub fn conv2d(x: &Tensor, k: &[f64], b: &[f64], s: &ConvSpec) -> Result<Tensor> {
    check_bias(b, s.out_c)?;
    let mut y = conv_raw(x, k, s)?;
    add_bias(&mut y, b);
    Ok(y)
}

pub fn conv2d_backward(x: &Tensor, k: &[f64], s: &ConvSpec, dy: &Tensor) -> Result<ConvGrads> {
    Ok(ConvGrads {
        dx: conv_input_grad(dy, k, s, x.height(), x.width())?,
        dk: conv_kernel_grad(x, dy, s)?,
        db: bias_grad(dy),
    })
}

/// Transposed convolution. `s.in_c`/`s.out_c` are its own input and output
/// channels; `k` is laid out `[in][out][kh][kw]`.
pub fn transposed_conv2d(x: &Tensor, k: &[f64], b: &[f64], s: &ConvSpec) -> Result<Tensor> {
    if x.channels() != s.in_c {
        return Err(dims_err(
            "transposed convolution input channels",
            s.in_c,
            x.channels(),
        ));
    }
    check_bias(b, s.out_c)?;
    let (oh, ow) = s.transposed_out_dims(x.height(), x.width())?;
    let mut y = conv_input_grad(x, k, &s.adjoint(), oh, ow)?;
    add_bias(&mut y, b);
    Ok(y)
}

pub fn transposed_conv2d_backward(
    x: &Tensor,
    k: &[f64],
    s: &ConvSpec,
    dy: &Tensor,
) -> Result<ConvGrads> {
    let adj = s.adjoint();
    let (oh, ow) = s.transposed_out_dims(x.height(), x.width())?;
    dy.check_dims("transposed convolution output gradient", (s.out_c, oh, ow))?;
    Ok(ConvGrads {
        dx: conv_raw(dy, k, &adj)?,
        dk: conv_kernel_grad(dy, x, &adj)?,
        db: bias_grad(dy),
    })
}

pub fn relu(t: &Tensor) -> Tensor {
    t.map(|v| v.max(0.0))
}

/// Gradient through a ReLU, given its output.
pub fn relu_backward(out: &Tensor, dy: &Tensor) -> Tensor {
    let data = out
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&o, &g)| if o > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_raw(out.channels(), out.height(), out.width(), data)
}

/// 2×2 stride-2 max pooling; returns the flat input index of every maximum.
pub fn maxpool2(x: &Tensor) -> (Tensor, Vec<usize>) {
    let (c, h, w) = x.dims();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = x.idx(ch, 2 * oy, 2 * ox);
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = x.idx(ch, 2 * oy + dy, 2 * ox + dx);
                    if x.data()[i] > x.data()[best] {
                        best = i;
                    }
                }
                out.push(x.data()[best]);
                arg.push(best);
            }
        }
    }
    (Tensor::from_raw(c, oh, ow, out), arg)
}

pub fn maxpool2_backward(input_dims: (usize, usize, usize), arg: &[usize], dy: &Tensor) -> Tensor {
    let (c, h, w) = input_dims;
    let mut dx = Tensor::zeros(c, h, w);
    for (&i, &g) in arg.iter().zip(dy.data()) {
        dx.data_mut()[i] += g;
    }
    dx
}

fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Tensor::from_raw(a.channels() + b.channels(), a.height(), a.width(), data)
}

fn split_channels(t: &Tensor, first: usize) -> (Tensor, Tensor) {
    let plane = t.height() * t.width();
    let (a, b) = t.data().split_at(first * plane);
    (
        Tensor::from_raw(first, t.height(), t.width(), a.to_vec()),
        Tensor::from_raw(t.channels() - first, t.height(), t.width(), b.to_vec()),
    )
}

/// How a downsampler halves resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DownsamplerKind {
    /// `relu(concat(conv3x3/2 → out−in channels, maxpool))`.
    ConvPool,
    /// `relu(conv1x1(maxpool))`.
    PoolOnly,
}

impl DownsamplerKind {
    pub fn conv_spec(self, in_c: usize, out_c: usize) -> Result<ConvSpec> {
        match self {
            DownsamplerKind::ConvPool => {
                if out_c <= in_c {
                    return Err(Error::InvalidConfig(format!(
                        "downsampler {in_c}->{out_c} must widen"
                    )));
                }
                Ok(ConvSpec::new(in_c, out_c - in_c, 3, 3)
                    .stride(2, 2)
                    .pad(1, 1))
            }
            DownsamplerKind::PoolOnly => Ok(ConvSpec::new(in_c, out_c, 1, 1)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DownsamplerCache {
    input: Tensor,
    pooled: Tensor,
    pool_arg: Vec<usize>,
    out: Tensor,
}

impl DownsamplerCache {
    pub(crate) fn push_decisions(&self, mask: &mut Vec<bool>, args: &mut Vec<usize>) {
        mask.extend(self.out.data().iter().map(|&v| v > 0.0));
        args.extend_from_slice(&self.pool_arg);
    }
}

pub fn downsampler(
    x: &Tensor,
    kind: DownsamplerKind,
    out_c: usize,
    k: &[f64],
    b: &[f64],
) -> Result<(Tensor, DownsamplerCache)> {
    let s = kind.conv_spec(x.channels(), out_c)?;
    if !x.height().is_multiple_of(2) || !x.width().is_multiple_of(2) {
        return Err(dims_err(
            "downsampler input (even sides)",
            "even",
            (x.height(), x.width()),
        ));
    }
    let (pooled, pool_arg) = maxpool2(x);
    let pre = match kind {
        DownsamplerKind::ConvPool => concat_channels(&conv2d(x, k, b, &s)?, &pooled),
        DownsamplerKind::PoolOnly => conv2d(&pooled, k, b, &s)?,
    };
    let out = relu(&pre);
    Ok((
        out.clone(),
        DownsamplerCache {
            input: x.clone(),
            pooled,
            pool_arg,
            out,
        },
    ))
}

pub fn downsampler_backward(
    cache: &DownsamplerCache,
    kind: DownsamplerKind,
    k: &[f64],
    dy: &Tensor,
) -> Result<ConvGrads> {
    let x = &cache.input;
    let s = kind.conv_spec(x.channels(), cache.out.channels())?;
    let d_pre = relu_backward(&cache.out, dy);
    match kind {
        DownsamplerKind::ConvPool => {
            let (d_conv, d_pool) = split_channels(&d_pre, s.out_c);
            let mut g = conv2d_backward(x, k, &s, &d_conv)?;
            g.dx.add_assign(&maxpool2_backward(x.dims(), &cache.pool_arg, &d_pool));
            Ok(g)
        }
        DownsamplerKind::PoolOnly => {
            let g = conv2d_backward(&cache.pooled, k, &s, &d_pre)?;
            Ok(ConvGrads {
                dx: maxpool2_backward(x.dims(), &cache.pool_arg, &g.dx),
                dk: g.dk,
                db: g.db,
            })
        }
    }
}

/// The four factorized convolutions of a non-bottleneck-1D block, in order.
pub fn nonbt1d_specs(c: usize) -> [ConvSpec; 4] {
    let v = ConvSpec::new(c, c, 3, 1).pad(1, 0);
    let h = ConvSpec::new(c, c, 1, 3).pad(0, 1);
    [v, h, v, h]
}

#[derive(Debug, Clone)]
pub struct NonBt1dCache {
    /// Block input followed by the three inner ReLU outputs.
    acts: [Tensor; 4],
    out: Tensor,
}

impl NonBt1dCache {
    pub(crate) fn push_decisions(&self, mask: &mut Vec<bool>) {
        for t in self.acts[1..].iter().chain([&self.out]) {
            mask.extend(t.data().iter().map(|&v| v > 0.0));
        }
    }
}

/// `relu(x + conv1x3(relu(conv3x1(relu(conv1x3(relu(conv3x1(x))))))))`.
/// `params` holds kernel, bias pairs for the four convolutions.
pub fn nonbt1d(x: &Tensor, params: [&[f64]; 8]) -> Result<(Tensor, NonBt1dCache)> {
    let specs = nonbt1d_specs(x.channels());
    let a1 = relu(&conv2d(x, params[0], params[1], &specs[0])?);
    let a2 = relu(&conv2d(&a1, params[2], params[3], &specs[1])?);
    let a3 = relu(&conv2d(&a2, params[4], params[5], &specs[2])?);
    let mut z = conv2d(&a3, params[6], params[7], &specs[3])?;
    z.add_assign(x);
    let out = relu(&z);
    Ok((
        out.clone(),
        NonBt1dCache {
            acts: [x.clone(), a1, a2, a3],
            out,
        },
    ))
}

/// Returns the input gradient and the gradients of the eight parameter
/// arrays in `nonbt1d` order.
pub fn nonbt1d_backward(
    cache: &NonBt1dCache,
    params: [&[f64]; 8],
    dy: &Tensor,
) -> Result<(Tensor, Vec<Vec<f64>>)> {
    let specs = nonbt1d_specs(cache.out.channels());
    let d_sum = relu_backward(&cache.out, dy);
    let mut dx = d_sum.clone();
    let mut grads = vec![Vec::new(); 8];
    let mut d = d_sum;
    for layer in (0..4).rev() {
        let g = conv2d_backward(&cache.acts[layer], params[2 * layer], &specs[layer], &d)?;
        grads[2 * layer] = g.dk;
        grads[2 * layer + 1] = g.db;
        d = if layer > 0 {
            relu_backward(&cache.acts[layer], &g.dx)
        } else {
            g.dx
        };
    }
    dx.add_assign(&d);
    Ok((dx, grads))
}
