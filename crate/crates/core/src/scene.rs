//! Synthetic hyperspectral scenes under the equal-spectrum-per-column model,
//! plus the `HCUBE1` binary cube format.
//!
//! A [`SceneModel`] stores an `n × n` intensity map and one normalized
//! spectrum per column; the spectral cube is their outer product
//! `C(i, j, λ) = I(i, j) · φ_j(λ)`.

use std::io::{BufRead, Read, Write};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{dims_err, Error, Result};
use crate::seeds;

const SUM_TOL: f64 = 1e-9;

/// Intensity map plus per-column normalized spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneModel {
    intensity: DMatrix<f64>,
    spectra: DMatrix<f64>,
}

impl SceneModel {
    /// `intensity` is `n × n`; `spectra` is `n × m`, one row per column.
    pub fn new(intensity: DMatrix<f64>, spectra: DMatrix<f64>) -> Result<Self> {
        let scene = Self { intensity, spectra };
        scene.check_invariants()?;
        Ok(scene)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let (r, c) = self.intensity.shape();
        if r != c {
            return Err(dims_err("scene intensity must be square", (c, c), (r, c)));
        }
        if self.spectra.nrows() != c {
            return Err(dims_err("one spectrum per column", c, self.spectra.nrows()));
        }
        if self.spectra.ncols() < 1 {
            return Err(Error::InvalidValue("scene needs at least one band".into()));
        }
        if self
            .intensity
            .iter()
            .chain(self.spectra.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("scene contains a non-finite value".into()));
        }
        if self
            .intensity
            .iter()
            .chain(self.spectra.iter())
            .any(|&v| v < 0.0)
        {
            return Err(Error::InvalidValue(
                "scene contains a negative value".into(),
            ));
        }
        for (j, row) in self.spectra.row_iter().enumerate() {
            let s = row.sum();
            if (s - 1.0).abs() > SUM_TOL {
                return Err(Error::InvalidValue(format!(
                    "column {j} spectrum sums to {s}, expected 1"
                )));
            }
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.intensity.nrows()
    }

    pub fn bands(&self) -> usize {
        self.spectra.ncols()
    }

    pub fn intensity(&self) -> &DMatrix<f64> {
        &self.intensity
    }

    pub fn spectra(&self) -> &DMatrix<f64> {
        &self.spectra
    }
}

/// `rows × cols × bands` cube, band axis last, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    rows: usize,
    cols: usize,
    bands: usize,
    data: Vec<f64>,
}

impl SpectralCube {
    pub fn new(rows: usize, cols: usize, bands: usize, data: Vec<f64>) -> Result<Self> {
        let expected = rows * cols * bands;
        if data.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                found: data.len(),
            });
        }
        if let Some(p) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("cube sample {p} is not finite")));
        }
        Ok(Self {
            rows,
            cols,
            bands,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize, bands: usize) -> Self {
        Self {
            rows,
            cols,
            bands,
            data: vec![0.0; rows * cols * bands],
        }
    }

    /// Single-band cube holding a matrix, the layout used for 2D images.
    pub fn from_image(image: &DMatrix<f64>) -> Self {
        let (rows, cols) = image.shape();
        let data = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| image[(i, j)]))
            .collect();
        Self {
            rows,
            cols,
            bands: 1,
            data,
        }
    }

    /// Band `b` as a matrix.
    pub fn band_image(&self, b: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j, b))
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.bands)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, b: usize) -> f64 {
        self.data[(i * self.cols + j) * self.bands + b]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, b: usize, v: f64) {
        self.data[(i * self.cols + j) * self.bands + b] = v;
    }

    pub fn spectrum(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.cols + j) * self.bands;
        &self.data[start..start + self.bands]
    }
}

pub fn assemble_cube(scene: &SceneModel) -> Result<SpectralCube> {
    scene.check_invariants()?;
    let n = scene.order();
    let m = scene.bands();
    let mut cube = SpectralCube::zeros(n, n, m);
    for i in 0..n {
        for j in 0..n {
            let a = scene.intensity[(i, j)];
            for b in 0..m {
                cube.set(i, j, b, a * scene.spectra[(j, b)]);
            }
        }
    }
    Ok(cube)
}

/// Band-sum image `out(i, j) = Σ_λ C(i, j, λ)`.
pub fn cube_intensity(cube: &SpectralCube) -> DMatrix<f64> {
    DMatrix::from_fn(cube.rows, cube.cols, |i, j| {
        cube.spectrum(i, j).iter().sum()
    })
}

/// Recover a scene model from a square cube: intensity is the band sum and
/// each column spectrum is the intensity-weighted column average. Lossless
/// when the cube satisfies the equal-spectrum assumption.
pub fn scene_from_cube(cube: &SpectralCube) -> Result<SceneModel> {
    let (r, c, m) = cube.dims();
    if r != c {
        return Err(dims_err("scene cube must be square", (c, c), (r, c)));
    }
    if cube.data.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidValue(
            "scene cube contains negative samples".into(),
        ));
    }
    let intensity = cube_intensity(cube);
    let mut spectra = DMatrix::zeros(c, m);
    for j in 0..c {
        let total: f64 = (0..r).map(|i| intensity[(i, j)]).sum();
        if total <= 0.0 {
            spectra.row_mut(j).fill(1.0 / m as f64);
            continue;
        }
        for b in 0..m {
            let s: f64 = (0..r).map(|i| cube.get(i, j, b)).sum();
            spectra[(j, b)] = s / total;
        }
        let norm: f64 = spectra.row(j).sum();
        spectra.row_mut(j).scale_mut(1.0 / norm);
    }
    SceneModel::new(intensity, spectra)
}

/// Knobs for [`synth_random_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSynth {
    pub order: usize,
    pub bands: usize,
    pub blobs: usize,
    /// Minimum intensity as a fraction of the maximum.
    pub floor: f64,
}

impl SceneSynth {
    pub fn new(order: usize, bands: usize, blobs: usize) -> Self {
        Self {
            order,
            bands,
            blobs,
            floor: 0.05,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<SceneModel> {
        let n = self.order;
        let m = self.bands;
        if n == 0 {
            return Err(Error::InvalidValue("scene order must be positive".into()));
        }
        if m < 2 {
            return Err(Error::InvalidValue(format!(
                "need at least 2 bands, got {m}"
            )));
        }
        if !(0.0..1.0).contains(&self.floor) {
            return Err(Error::InvalidValue(format!(
                "intensity floor {} outside [0, 1)",
                self.floor
            )));
        }
        let mut rng = seeds::rng(seed);

        let mut raw = DMatrix::<f64>::zeros(n, n);
        let nf = n as f64;
        for _ in 0..self.blobs {
            let amp: f64 = rng.random_range(0.3..1.0);
            let ci: f64 = rng.random_range(0.0..nf);
            let cj: f64 = rng.random_range(0.0..nf);
            let width: f64 = rng.random_range((nf / 10.0).max(1.0)..(nf / 3.0).max(1.5));
            for i in 0..n {
                for j in 0..n {
                    let d2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
                    raw[(i, j)] += amp * (-d2 / (2.0 * width * width)).exp();
                }
            }
        }
        let peak = raw.max();
        let intensity = if self.blobs == 0 || peak <= 0.0 {
            DMatrix::from_element(n, n, 1.0)
        } else {
            raw.map(|v| self.floor + (1.0 - self.floor) * v / peak)
        };

        let mf = m as f64;
        let mut spectra = DMatrix::<f64>::zeros(n, m);
        for j in 0..n {
            let peaks = rng.random_range(1..=3usize);
            for _ in 0..peaks {
                let w: f64 = rng.random_range(0.2..1.0);
                let center: f64 = rng.random_range(0.0..(mf - 1.0));
                let sigma: f64 = rng.random_range(0.5..(mf / 4.0).max(1.0));
                for b in 0..m {
                    let d = b as f64 - center;
                    spectra[(j, b)] += w * (-d * d / (2.0 * sigma * sigma)).exp();
                }
            }
            let s: f64 = spectra.row(j).sum();
            spectra.row_mut(j).scale_mut(1.0 / s);
        }
        SceneModel::new(intensity, spectra)
    }
}

/// Random scene: Gaussian-blob intensity over a floor of `0.05 · max`,
/// and per-column spectra that mix one to three Gaussian lines.
pub fn synth_random_scene(n: usize, m: usize, blobs: usize, seed: u64) -> Result<SceneModel> {
    SceneSynth::new(n, m, blobs).generate(seed)
}

/// Cube that breaks the equal-spectrum assumption: each pixel's spectrum
/// is its column spectrum times `1 + jitter · N(0, 1)` per band, clipped
/// at zero and renormalized. `jitter = 0` reproduces [`assemble_cube`].
pub fn jittered_cube(scene: &SceneModel, jitter: f64, seed: u64) -> Result<SpectralCube> {
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::InvalidValue(format!(
            "jitter {jitter} must be finite and >= 0"
        )));
    }
    let mut cube = assemble_cube(scene)?;
    if jitter == 0.0 {
        return Ok(cube);
    }
    let n = scene.order();
    let m = scene.bands();
    let mut rng = seeds::rng(seed);
    let mut buf = vec![0.0; m];
    for i in 0..n {
        for j in 0..n {
            for (b, slot) in buf.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *slot = (scene.spectra[(j, b)] * (1.0 + jitter * z)).max(0.0);
            }
            let s: f64 = buf.iter().sum();
            let a = scene.intensity[(i, j)];
            for (b, &v) in buf.iter().enumerate() {
                let phi = if s > 0.0 {
                    v / s
                } else {
                    scene.spectra[(j, b)]
                };
                cube.set(i, j, b, a * phi);
            }
        }
    }
    Ok(cube)
}

/// Sample encoding on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    /// `HCUBE1`, IEEE-754 binary32 little-endian.
    #[default]
    F32,
    /// `HCUBE1D`, binary64 little-endian, for lossless pipelines.
    F64,
}

impl Precision {
    fn magic(self) -> &'static str {
        match self {
            Precision::F32 => "HCUBE1",
            Precision::F64 => "HCUBE1D",
        }
    }
}

/// Writes `"<magic> <rows> <cols> <bands>\n"` then the samples in
/// `(row, col, band)` order.
pub fn write_cube<W: Write>(cube: &SpectralCube, precision: Precision, mut w: W) -> Result<()> {
    writeln!(
        w,
        "{} {} {} {}",
        precision.magic(),
        cube.rows,
        cube.cols,
        cube.bands
    )?;
    let mut bytes = Vec::with_capacity(cube.data.len() * 8);
    match precision {
        Precision::F32 => cube
            .data
            .iter()
            .for_each(|&v| bytes.extend_from_slice(&(v as f32).to_le_bytes())),
        Precision::F64 => cube
            .data
            .iter()
            .for_each(|&v| bytes.extend_from_slice(&v.to_le_bytes())),
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_cube<R: BufRead>(mut r: R) -> Result<(SpectralCube, Precision)> {
    let mut header = Vec::new();
    r.by_ref().take(256).read_until(b'\n', &mut header)?;
    if header.last() != Some(&b'\n') {
        return Err(Error::MalformedHeader(
            "missing header line terminator".into(),
        ));
    }
    let header = std::str::from_utf8(&header[..header.len() - 1])
        .map_err(|_| Error::MalformedHeader("header is not ASCII".into()))?;
    let fields: Vec<&str> = header.split(' ').collect();
    let precision = match fields.first() {
        Some(&"HCUBE1") => Precision::F32,
        Some(&"HCUBE1D") => Precision::F64,
        _ => {
            return Err(Error::MalformedHeader(format!(
                "unknown magic in {header:?}"
            )))
        }
    };
    if fields.len() != 4 {
        return Err(Error::MalformedHeader(format!(
            "expected 4 header fields, got {header:?}"
        )));
    }
    let dims: Vec<usize> = fields[1..]
        .iter()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::MalformedHeader(format!("bad dimension {t:?}")))
        })
        .collect::<Result<_>>()?;
    let (rows, cols, bands) = (dims[0], dims[1], dims[2]);
    let count = rows
        .checked_mul(cols)
        .and_then(|v| v.checked_mul(bands))
        .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;
    let width = match precision {
        Precision::F32 => 4,
        Precision::F64 => 8,
    };
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != count * width {
        return Err(Error::SizeMismatch {
            expected: count,
            found: body.len() / width,
        });
    }
    let data: Vec<f64> = match precision {
        Precision::F32 => body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Precision::F64 => body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok((SpectralCube::new(rows, cols, bands, data)?, precision))
}
