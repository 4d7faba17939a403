use rand_distr::{Distribution, Normal};

use crate::error::{dims_err, Error, Result};
use crate::seeds;

use super::layers::{
    conv2d, conv2d_backward, downsampler, downsampler_backward, nonbt1d, nonbt1d_backward,
    nonbt1d_specs, relu, relu_backward, transposed_conv2d, transposed_conv2d_backward, ConvSpec,
    DownsamplerCache, DownsamplerKind, NonBt1dCache,
};
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Full widths: 16/64/128 with 5 and 8 residual blocks.
    Full,
    /// 8/16/32 with 2 residual blocks per stage; trains on a CPU in minutes.
    Desk,
    Custom,
}

/// Network layout. Input is `(1, width, width + bands − 1)`, output is
/// `(1, width, width)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchConfig {
    pub bands: usize,
    pub width: usize,
    /// Downsampler output channels, one per stage.
    pub encoder_widths: Vec<usize>,
    /// Residual blocks after each downsampler.
    pub encoder_blocks: Vec<usize>,
    /// Residual blocks after each upsampling stage except the last.
    pub decoder_blocks: Vec<usize>,
    pub downsampler: DownsamplerKind,
    /// When false only the spectral unmixing layers are built.
    pub enhance: bool,
    /// When false every ReLU of the unmixing layers is removed.
    pub activations: bool,
    pub preset: Preset,
}

impl ArchConfig {
    pub fn desk(bands: usize, width: usize) -> Self {
        Self {
            bands,
            width,
            encoder_widths: vec![8, 16, 32],
            encoder_blocks: vec![0, 2, 2],
            decoder_blocks: vec![2, 2],
            downsampler: DownsamplerKind::ConvPool,
            enhance: true,
            activations: true,
            preset: Preset::Desk,
        }
    }

    pub fn full(bands: usize, width: usize) -> Self {
        Self {
            encoder_widths: vec![16, 64, 128],
            encoder_blocks: vec![0, 5, 8],
            decoder_blocks: vec![2, 2],
            preset: Preset::Full,
            ..Self::desk(bands, width)
        }
    }

    /// Unmixing layers only, without activations: a linear map.
    pub fn linear_unmixing(bands: usize, width: usize) -> Self {
        Self {
            enhance: false,
            activations: false,
            preset: Preset::Custom,
            ..Self::desk(bands, width)
        }
    }

    /// Channel counts of the four feature layers after the expansion:
    /// `m/2, m/4, m/8, 1`, each at least 1.
    pub fn ladder(&self) -> [usize; 4] {
        let m = self.bands;
        [(m / 2).max(1), (m / 4).max(1), (m / 8).max(1), 1]
    }

    pub fn input_dims(&self) -> (usize, usize, usize) {
        (1, self.width, self.width + self.bands - 1)
    }

    pub fn output_dims(&self) -> (usize, usize, usize) {
        (1, self.width, self.width)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.bands == 0 || self.width == 0 {
            return bad("bands and width must be positive".into());
        }
        if !self.enhance {
            return Ok(());
        }
        let stages = self.encoder_widths.len();
        if stages == 0
            || self.encoder_blocks.len() != stages
            || self.decoder_blocks.len() + 1 != stages
        {
            return bad(format!(
                "{stages} encoder widths need as many block counts and {} decoder block counts",
                stages.saturating_sub(1)
            ));
        }
        if !self.width.is_multiple_of(1 << stages) {
            return bad(format!(
                "width {} must be divisible by {}",
                self.width,
                1usize << stages
            ));
        }
        let mut prev = 1;
        for &w in &self.encoder_widths {
            if w == 0 || (self.downsampler == DownsamplerKind::ConvPool && w <= prev) {
                return bad(format!(
                    "encoder widths {:?} must increase from 1",
                    self.encoder_widths
                ));
            }
            prev = w;
        }
        Ok(())
    }

    /// Flattened layer list.
    pub fn layers(&self) -> Result<Vec<LayerSpec>> {
        self.validate()?;
        let m = self.bands;
        let act = self.activations;
        let mut layers = vec![
            LayerSpec::PadRight { cols: 1 },
            LayerSpec::Conv {
                spec: ConvSpec::new(1, 1, 1, m + 1),
                relu: false,
            },
            LayerSpec::TConv {
                spec: ConvSpec::new(1, m, 1, 1),
                relu: false,
            },
        ];
        let mut c = m;
        for next in self.ladder() {
            layers.push(LayerSpec::Conv {
                spec: ConvSpec::new(c, next, 3, 3).pad(1, 1),
                relu: act,
            });
            c = next;
        }
        if !self.enhance {
            return Ok(layers);
        }
        for (&w, &blocks) in self.encoder_widths.iter().zip(&self.encoder_blocks) {
            layers.push(LayerSpec::Downsampler {
                in_c: c,
                out_c: w,
                kind: self.downsampler,
            });
            layers.extend((0..blocks).map(|_| LayerSpec::NonBt1d { channels: w }));
            c = w;
        }
        let ups: Vec<usize> = self
            .encoder_widths
            .iter()
            .rev()
            .skip(1)
            .copied()
            .chain([1])
            .collect();
        for (i, &w) in ups.iter().enumerate() {
            let last = i + 1 == ups.len();
            layers.push(LayerSpec::TConv {
                spec: ConvSpec::new(c, w, 2, 2).stride(2, 2),
                relu: !last,
            });
            if !last {
                layers.extend(
                    (0..self.decoder_blocks[i]).map(|_| LayerSpec::NonBt1d { channels: w }),
                );
            }
            c = w;
        }
        Ok(layers)
    }

    /// Tensor dims after every layer, starting with the input.
    pub fn propagate_shapes(&self) -> Result<Vec<(usize, usize, usize)>> {
        let mut dims = vec![self.input_dims()];
        for layer in self.layers()? {
            let d = layer.out_dims(*dims.last().unwrap())?;
            dims.push(d);
        }
        if *dims.last().unwrap() != self.output_dims() {
            return Err(dims_err(
                "network output",
                self.output_dims(),
                *dims.last().unwrap(),
            ));
        }
        Ok(dims)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .layers()?
            .iter()
            .flat_map(|l| l.param_shapes())
            .map(|(_, s)| s.iter().product::<usize>())
            .sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    PadRight {
        cols: usize,
    },
    Conv {
        spec: ConvSpec,
        relu: bool,
    },
    /// `spec.in_c`/`spec.out_c` are the transposed layer's own channels.
    TConv {
        spec: ConvSpec,
        relu: bool,
    },
    Downsampler {
        in_c: usize,
        out_c: usize,
        kind: DownsamplerKind,
    },
    NonBt1d {
        channels: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Conv,
    TConv,
    Bias,
}

impl BlockKind {
    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Conv => "conv",
            BlockKind::TConv => "tconv",
            BlockKind::Bias => "bias",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "conv" => Some(BlockKind::Conv),
            "tconv" => Some(BlockKind::TConv),
            "bias" => Some(BlockKind::Bias),
            _ => None,
        }
    }
}

impl LayerSpec {
    pub fn param_shapes(&self) -> Vec<(BlockKind, Vec<usize>)> {
        let conv = |s: &ConvSpec| {
            vec![
                (BlockKind::Conv, s.kernel_shape()),
                (BlockKind::Bias, vec![s.out_c]),
            ]
        };
        match self {
            LayerSpec::PadRight { .. } => vec![],
            LayerSpec::Conv { spec, .. } => conv(spec),
            LayerSpec::TConv { spec, .. } => {
                vec![
                    (
                        BlockKind::TConv,
                        vec![spec.in_c, spec.out_c, spec.kh, spec.kw],
                    ),
                    (BlockKind::Bias, vec![spec.out_c]),
                ]
            }
            LayerSpec::Downsampler { in_c, out_c, kind } => {
                conv(&kind.conv_spec(*in_c, *out_c).expect("validated"))
            }
            LayerSpec::NonBt1d { channels } => {
                nonbt1d_specs(*channels).iter().flat_map(conv).collect()
            }
        }
    }

    /// Inputs per output unit, for initialization.
    fn fan_in(&self) -> Vec<usize> {
        match self {
            LayerSpec::PadRight { .. } => vec![],
            LayerSpec::Conv { spec, .. } => vec![spec.in_c * spec.kh * spec.kw],
            LayerSpec::TConv { spec, .. } => {
                vec![(spec.in_c * spec.kh * spec.kw / (spec.stride.0 * spec.stride.1)).max(1)]
            }
            LayerSpec::Downsampler { in_c, out_c, kind } => {
                let s = kind.conv_spec(*in_c, *out_c).expect("validated");
                vec![s.in_c * s.kh * s.kw]
            }
            LayerSpec::NonBt1d { channels } => vec![channels * 3; 4],
        }
    }

    pub fn out_dims(&self, (c, h, w): (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let expect_c = |n: usize| {
            if c == n {
                Ok(())
            } else {
                Err(dims_err("layer input channels", n, c))
            }
        };
        match self {
            LayerSpec::PadRight { cols } => Ok((c, h, w + cols)),
            LayerSpec::Conv { spec, .. } => {
                expect_c(spec.in_c)?;
                let (oh, ow) = spec.out_dims(h, w)?;
                Ok((spec.out_c, oh, ow))
            }
            LayerSpec::TConv { spec, .. } => {
                expect_c(spec.in_c)?;
                let (oh, ow) = spec.transposed_out_dims(h, w)?;
                Ok((spec.out_c, oh, ow))
            }
            LayerSpec::Downsampler { in_c, out_c, .. } => {
                expect_c(*in_c)?;
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(dims_err("downsampler input (even sides)", "even", (h, w)));
                }
                Ok((*out_c, h / 2, w / 2))
            }
            LayerSpec::NonBt1d { channels } => {
                expect_c(*channels)?;
                Ok((c, h, w))
            }
        }
    }
}

/// One named parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub kind: BlockKind,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Architecture plus every weight and bias, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub arch: ArchConfig,
    pub blocks: Vec<ParamBlock>,
    layers: Vec<LayerSpec>,
}

/// Gradient arrays mirroring `NetworkParams::blocks`.
pub type Gradients = Vec<Vec<f64>>;

/// He-initialized network.
pub fn build_network(arch: &ArchConfig, seed: u64) -> Result<NetworkParams> {
    arch.propagate_shapes()?;
    let layers = arch.layers()?;
    let mut rng = seeds::rng(seed);
    let mut blocks = Vec::new();
    for layer in &layers {
        let mut fans = layer.fan_in().into_iter();
        for (kind, shape) in layer.param_shapes() {
            let len = shape.iter().product();
            let values = if kind == BlockKind::Bias {
                vec![0.0; len]
            } else {
                let fan = fans.next().expect("one fan-in per kernel") as f64;
                let normal = Normal::new(0.0, (2.0 / fan).sqrt()).expect("positive std");
                (0..len).map(|_| normal.sample(&mut rng)).collect()
            };
            blocks.push(ParamBlock {
                kind,
                shape,
                values,
            });
        }
    }
    Ok(NetworkParams {
        arch: arch.clone(),
        blocks,
        layers,
    })
}

enum LayerCache {
    Pad,
    Conv { input: Tensor, out: Option<Tensor> },
    TConv { input: Tensor, out: Option<Tensor> },
    Down(DownsamplerCache),
    Block(NonBt1dCache),
}

/// Activations kept from a forward pass for the backward pass.
pub struct ForwardTrace {
    caches: Vec<LayerCache>,
}

impl ForwardTrace {
    /// Every ReLU on/off state and max-pool choice taken in the pass.
    pub fn decisions(&self) -> (Vec<bool>, Vec<usize>) {
        let (mut mask, mut args) = (Vec::new(), Vec::new());
        for c in &self.caches {
            match c {
                LayerCache::Conv { out: Some(o), .. } | LayerCache::TConv { out: Some(o), .. } => {
                    mask.extend(o.data().iter().map(|&v| v > 0.0))
                }
                LayerCache::Down(d) => d.push_decisions(&mut mask, &mut args),
                LayerCache::Block(b) => b.push_decisions(&mut mask),
                _ => {}
            }
        }
        (mask, args)
    }
}

impl NetworkParams {
    /// Rebuild from an architecture and blocks, checking every shape.
    pub fn from_blocks(arch: ArchConfig, blocks: Vec<ParamBlock>) -> Result<Self> {
        arch.propagate_shapes()?;
        let layers = arch.layers()?;
        let expected: Vec<_> = layers.iter().flat_map(|l| l.param_shapes()).collect();
        if expected.len() != blocks.len() {
            return Err(Error::SizeMismatch {
                expected: expected.len(),
                found: blocks.len(),
            });
        }
        for ((kind, shape), b) in expected.iter().zip(&blocks) {
            if *kind != b.kind
                || *shape != b.shape
                || b.values.len() != shape.iter().product::<usize>()
            {
                return Err(dims_err(&format!("{} block", kind.name()), shape, &b.shape));
            }
            if b.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("network parameter".into()));
            }
        }
        Ok(Self {
            arch,
            blocks,
            layers,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(|b| b.values.len()).sum()
    }

    pub fn zero_gradients(&self) -> Gradients {
        self.blocks
            .iter()
            .map(|b| vec![0.0; b.values.len()])
            .collect()
    }

    fn block(&self, i: usize) -> &[f64] {
        &self.blocks[i].values
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ForwardTrace)> {
        x.check_dims("network input", self.arch.input_dims())?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        let mut p = 0;
        for layer in &self.layers {
            let (next, cache) = match *layer {
                LayerSpec::PadRight { cols } => (
                    cur.pad_to(cur.height(), cur.width() + cols)?,
                    LayerCache::Pad,
                ),
                LayerSpec::Conv { spec, relu: act } => {
                    let z = conv2d(&cur, self.block(p), self.block(p + 1), &spec)?;
                    p += 2;
                    let out = if act { relu(&z) } else { z };
                    (
                        out.clone(),
                        LayerCache::Conv {
                            input: cur,
                            out: act.then_some(out),
                        },
                    )
                }
                LayerSpec::TConv { spec, relu: act } => {
                    let z = transposed_conv2d(&cur, self.block(p), self.block(p + 1), &spec)?;
                    p += 2;
                    let out = if act { relu(&z) } else { z };
                    (
                        out.clone(),
                        LayerCache::TConv {
                            input: cur,
                            out: act.then_some(out),
                        },
                    )
                }
                LayerSpec::Downsampler { out_c, kind, .. } => {
                    let (out, c) =
                        downsampler(&cur, kind, out_c, self.block(p), self.block(p + 1))?;
                    p += 2;
                    (out, LayerCache::Down(c))
                }
                LayerSpec::NonBt1d { .. } => {
                    let (out, c) = nonbt1d(&cur, std::array::from_fn(|i| self.block(p + i)))?;
                    p += 8;
                    (out, LayerCache::Block(c))
                }
            };
            caches.push(cache);
            cur = next;
        }
        Ok((cur, ForwardTrace { caches }))
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x)?.0)
    }

    /// Parameter gradients of `⟨output, dy⟩`.
    pub fn backward(&self, trace: &ForwardTrace, dy: &Tensor) -> Result<Gradients> {
        dy.check_dims("network output gradient", self.arch.output_dims())?;
        let mut grads = self.zero_gradients();
        let mut p = self.blocks.len();
        let mut d = dy.clone();
        for (layer, cache) in self.layers.iter().zip(&trace.caches).rev() {
            d = match (*layer, cache) {
                (LayerSpec::PadRight { cols }, LayerCache::Pad) => {
                    d.crop(d.height(), d.width() - cols)?
                }
                (LayerSpec::Conv { spec, .. }, LayerCache::Conv { input, out }) => {
                    p -= 2;
                    let dz = match out {
                        Some(o) => relu_backward(o, &d),
                        None => d,
                    };
                    let g = conv2d_backward(input, self.block(p), &spec, &dz)?;
                    grads[p] = g.dk;
                    grads[p + 1] = g.db;
                    g.dx
                }
                (LayerSpec::TConv { spec, .. }, LayerCache::TConv { input, out }) => {
                    p -= 2;
                    let dz = match out {
                        Some(o) => relu_backward(o, &d),
                        None => d,
                    };
                    let g = transposed_conv2d_backward(input, self.block(p), &spec, &dz)?;
                    grads[p] = g.dk;
                    grads[p + 1] = g.db;
                    g.dx
                }
                (LayerSpec::Downsampler { kind, .. }, LayerCache::Down(c)) => {
                    p -= 2;
                    let g = downsampler_backward(c, kind, self.block(p), &d)?;
                    grads[p] = g.dk;
                    grads[p + 1] = g.db;
                    g.dx
                }
                (LayerSpec::NonBt1d { .. }, LayerCache::Block(c)) => {
                    p -= 8;
                    let (dx, gs) =
                        nonbt1d_backward(c, std::array::from_fn(|i| self.block(p + i)), &d)?;
                    for (i, g) in gs.into_iter().enumerate() {
                        grads[p + i] = g;
                    }
                    dx
                }
                _ => unreachable!("trace built by forward on the same layers"),
            };
        }
        Ok(grads)
    }
}
