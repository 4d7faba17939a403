//! `HNET1` parameter files.
//!
//! ```text
//! HNET1 <block count>\n
//! <type> <dim> <dim> ...\n  <binary32 little-endian values>
//! ...
//! ```
//!
//! The first block has type `arch` and stores the [`ArchConfig`] as small
//! integers. Values are stored as `f32`, so a network trained in `f64`
//! loses precision on the first save; after that, load and save are exact.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};

use super::arch::{ArchConfig, BlockKind, NetworkParams, ParamBlock, Preset};
use super::layers::DownsamplerKind;

const MAGIC: &str = "HNET1";
const ARCH_VERSION: usize = 1;

fn encode_arch(a: &ArchConfig) -> Vec<usize> {
    let mut v = vec![
        ARCH_VERSION,
        a.bands,
        a.width,
        match a.downsampler {
            DownsamplerKind::ConvPool => 0,
            DownsamplerKind::PoolOnly => 1,
        },
        a.enhance as usize,
        a.activations as usize,
        match a.preset {
            Preset::Full => 0,
            Preset::Desk => 1,
            Preset::Custom => 2,
        },
        a.encoder_widths.len(),
    ];
    v.extend(&a.encoder_widths);
    v.extend(&a.encoder_blocks);
    v.extend(&a.decoder_blocks);
    v
}

fn decode_arch(v: &[usize]) -> Result<ArchConfig> {
    let bad = || Error::MalformedHeader("arch block is inconsistent".into());
    if v.len() < 8 || v[0] != ARCH_VERSION {
        return Err(bad());
    }
    let s = v[7];
    if v.len() != 8 + 3 * s - usize::from(s > 0) {
        return Err(bad());
    }
    let flag = |x: usize| match x {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(bad()),
    };
    Ok(ArchConfig {
        bands: v[1],
        width: v[2],
        downsampler: match v[3] {
            0 => DownsamplerKind::ConvPool,
            1 => DownsamplerKind::PoolOnly,
            _ => return Err(bad()),
        },
        enhance: flag(v[4])?,
        activations: flag(v[5])?,
        preset: match v[6] {
            0 => Preset::Full,
            1 => Preset::Desk,
            2 => Preset::Custom,
            _ => return Err(bad()),
        },
        encoder_widths: v[8..8 + s].to_vec(),
        encoder_blocks: v[8 + s..8 + 2 * s].to_vec(),
        decoder_blocks: v[8 + 2 * s..].to_vec(),
    })
}

fn write_block<W: Write>(
    w: &mut W,
    kind: &str,
    shape: &[usize],
    values: impl Iterator<Item = f64>,
) -> Result<()> {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    writeln!(w, "{kind} {}", dims.join(" "))?;
    for v in values {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn write_params<W: Write>(params: &NetworkParams, mut w: W) -> Result<()> {
    writeln!(w, "{MAGIC} {}", params.blocks.len() + 1)?;
    let arch = encode_arch(&params.arch);
    write_block(
        &mut w,
        "arch",
        &[arch.len()],
        arch.iter().map(|&x| x as f64),
    )?;
    for b in &params.blocks {
        write_block(&mut w, b.kind.name(), &b.shape, b.values.iter().copied())?;
    }
    Ok(())
}

fn read_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    line.strip_suffix('\n')
        .map(str::to_string)
        .ok_or_else(|| Error::MalformedHeader("unterminated header line".into()))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::MalformedHeader(format!("bad integer {s:?}")))
}

fn read_values<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 4];
    r.read_exact(&mut buf).map_err(|_| Error::SizeMismatch {
        expected: count,
        found: 0,
    })?;
    let values: Vec<f64> = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network file value".into()));
    }
    Ok(values)
}

pub fn read_params<R: BufRead>(mut r: R) -> Result<NetworkParams> {
    let header = read_line(&mut r)?;
    let count = match header.split(' ').collect::<Vec<_>>().as_slice() {
        [MAGIC, n] => parse_usize(n)?,
        _ => {
            return Err(Error::MalformedHeader(format!(
                "expected \"{MAGIC} <count>\", got {header:?}"
            )))
        }
    };
    if count == 0 {
        return Err(Error::MalformedHeader("missing arch block".into()));
    }
    let mut arch = None;
    let mut blocks = Vec::with_capacity(count - 1);
    for i in 0..count {
        let line = read_line(&mut r)?;
        let mut parts = line.split(' ');
        let kind = parts.next().unwrap_or_default();
        let shape = parts.map(parse_usize).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let values = read_values(&mut r, len)?;
        match (i, kind) {
            (0, "arch") => {
                let ints: Vec<usize> = values
                    .iter()
                    .map(|&v| {
                        if v >= 0.0 && v.fract() == 0.0 {
                            Ok(v as usize)
                        } else {
                            Err(Error::MalformedHeader("arch value".into()))
                        }
                    })
                    .collect::<Result<_>>()?;
                arch = Some(decode_arch(&ints)?);
            }
            (0, _) => return Err(Error::MalformedHeader("first block must be arch".into())),
            _ => {
                let kind = BlockKind::parse(kind).ok_or_else(|| {
                    Error::MalformedHeader(format!("unknown block type {kind:?}"))
                })?;
                blocks.push(ParamBlock {
                    kind,
                    shape,
                    values,
                });
            }
        }
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::SizeMismatch {
            expected: 0,
            found: rest.len(),
        });
    }
    NetworkParams::from_blocks(arch.expect("block 0 parsed"), blocks)
}

/// Round every parameter to the nearest `f32`, the precision of the file.
pub fn quantize(params: &NetworkParams) -> NetworkParams {
    let mut p = params.clone();
    for b in &mut p.blocks {
        for v in &mut b.values {
            *v = *v as f32 as f64;
        }
    }
    p
}
