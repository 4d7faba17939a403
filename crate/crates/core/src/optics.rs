//! Coded aperture, shift-and-add dispersion and detector noise.
//!
//! Dispersion runs along detector rows: pixel `(i, j)` spreads its spectrum
//! over detector columns `j ..= j + m - 1`, so a row of `n` coded pixels
//! produces `n + m - 1` overlapped samples.

use std::fmt;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{dims_err, Error, Result};
use crate::scene::{SceneModel, SpectralCube};
use crate::seeds;
use crate::smatrix::SMatrix;

/// Aperture code applied to the `n × n` scene.
#[derive(Debug, Clone, PartialEq)]
pub enum Code {
    Hadamard(SMatrix),
    /// Every element open.
    FullOne(usize),
    /// One open element per row, on the diagonal: the slit layout.
    Identity(usize),
}

impl Code {
    pub fn order(&self) -> usize {
        match self {
            Code::Hadamard(s) => s.order(),
            Code::FullOne(n) | Code::Identity(n) => *n,
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Code::Hadamard(s) => f64::from(s.get(i, j)),
            Code::FullOne(_) => 1.0,
            Code::Identity(_) => f64::from(u8::from(i == j)),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.order();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Code::Hadamard(_) => write!(f, "hadamard"),
            Code::FullOne(_) => write!(f, "full-1"),
            Code::Identity(_) => write!(f, "identity"),
        }
    }
}

/// `M = S ∘ I`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedIntensity(DMatrix<f64>);

impl CodedIntensity {
    /// Wrap an arbitrary nonnegative image, e.g. a network estimate.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(dims_err(
                "coded intensity must be square",
                (m.ncols(), m.ncols()),
                m.shape(),
            ));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coded intensity".into()));
        }
        if m.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidValue(
                "coded intensity has a negative entry".into(),
            ));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// Overlapped dispersive measurement, `n × (n + m - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersedImage {
    data: DMatrix<f64>,
    bands: usize,
}

impl DispersedImage {
    pub fn new(data: DMatrix<f64>, bands: usize) -> Result<Self> {
        if bands == 0 || data.ncols() + 1 != data.nrows() + bands {
            return Err(dims_err(
                "dispersed width n + m - 1",
                data.nrows() + bands.max(1) - 1,
                data.ncols(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dispersed image".into()));
        }
        Ok(Self { data, bands })
    }

    /// Infer the band count from the width, assuming a square scene.
    pub fn from_square_scene(data: DMatrix<f64>) -> Result<Self> {
        let n = data.nrows();
        if data.ncols() < n {
            return Err(dims_err("dispersed width >= rows", n, data.ncols()));
        }
        let bands = data.ncols() + 1 - n;
        Self::new(data, bands)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            data: &self.data * factor,
            bands: self.bands,
        }
    }

    /// Single-band cube `rows × width × 1`, for the cube file format.
    pub fn to_cube(&self) -> SpectralCube {
        SpectralCube::from_image(&self.data)
    }

    /// Inverse of [`DispersedImage::to_cube`]; the band count follows from
    /// the width.
    pub fn from_cube(cube: &SpectralCube) -> Result<Self> {
        let (rows, cols, bands) = cube.dims();
        if bands != 1 {
            return Err(dims_err("dispersed image cube bands", 1, bands));
        }
        Self::from_square_scene(DMatrix::from_fn(rows, cols, |i, j| cube.get(i, j, 0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    /// Additive Gaussian, standard deviation `sigma` in detector units.
    Read { sigma: f64 },
    /// Zero-mean Gaussian with per-pixel variance `alpha · max(signal, 0)`.
    Shot { alpha: f64 },
}

impl NoiseKind {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::Read { .. } => "read",
            NoiseKind::Shot { .. } => "shot",
        }
    }

    pub fn param(&self) -> f64 {
        match *self {
            NoiseKind::Read { sigma } => sigma,
            NoiseKind::Shot { alpha } => alpha,
        }
    }

    pub fn with_param(&self, p: f64) -> Self {
        match self {
            NoiseKind::Read { .. } => NoiseKind::Read { sigma: p },
            NoiseKind::Shot { .. } => NoiseKind::Shot { alpha: p },
        }
    }

    pub fn is_zero(&self) -> bool {
        self.param() == 0.0
    }

    /// Parse `read:<sigma>` or `shot:<alpha>`.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, value) = s.split_once(':').ok_or_else(|| {
            Error::InvalidValue(format!(
                "noise {s:?} must look like read:<sigma> or shot:<alpha>"
            ))
        })?;
        let p: f64 = value.trim().parse().map_err(|_| {
            Error::InvalidValue(format!("noise parameter {value:?} is not a number"))
        })?;
        let k = match kind.trim() {
            "read" => NoiseKind::Read { sigma: p },
            "shot" => NoiseKind::Shot { alpha: p },
            other => return Err(Error::InvalidValue(format!("unknown noise kind {other:?}"))),
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.param();
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::InvalidValue(format!(
                "{} noise parameter {p} must be finite and >= 0",
                self.name()
            )));
        }
        Ok(())
    }

    /// Noise realization for `signal`, drawn from stream `seed`.
    pub fn sample(&self, signal: &DMatrix<f64>, seed: u64) -> DMatrix<f64> {
        let mut rng = seeds::rng(seed);
        let (r, c) = signal.shape();
        // Row-major draw order so the stream layout does not depend on
        // nalgebra's column-major storage.
        let mut out = DMatrix::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                let z: f64 = StandardNormal.sample(&mut rng);
                let sd = match *self {
                    NoiseKind::Read { sigma } => sigma,
                    NoiseKind::Shot { alpha } => (alpha * signal[(i, j)].max(0.0)).sqrt(),
                };
                out[(i, j)] = sd * z;
            }
        }
        out
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name(), self.param())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, seed: u64) -> Result<Self> {
        kind.validate()?;
        Ok(Self { kind, seed })
    }

    pub fn read(sigma: f64, seed: u64) -> Result<Self> {
        Self::new(NoiseKind::Read { sigma }, seed)
    }

    pub fn shot(alpha: f64, seed: u64) -> Result<Self> {
        Self::new(NoiseKind::Shot { alpha }, seed)
    }

    /// Same kind on an independent stream.
    pub fn substream(&self, index: u64) -> Self {
        Self {
            kind: self.kind,
            seed: seeds::derive(self.seed, index),
        }
    }

    /// Sidecar text: `key=value` lines.
    pub fn to_sidecar(&self) -> String {
        format!(
            "noise_kind={}\nnoise_param={}\nnoise_seed={}\n",
            self.kind.name(),
            self.kind.param(),
            self.seed
        )
    }
}

pub fn apply_code(code: &Code, intensity: &DMatrix<f64>) -> Result<CodedIntensity> {
    let n = code.order();
    if intensity.shape() != (n, n) {
        return Err(dims_err(
            "intensity map vs code order",
            (n, n),
            intensity.shape(),
        ));
    }
    Ok(CodedIntensity(DMatrix::from_fn(n, n, |i, j| {
        code.get(i, j) * intensity[(i, j)]
    })))
}

/// `g(i, c) = Σ_j M(i, j) · φ_j(c - j)`.
pub fn disperse(coded: &CodedIntensity, spectra: &DMatrix<f64>) -> Result<DispersedImage> {
    let m_mat = &coded.0;
    let (rows, cols) = m_mat.shape();
    if spectra.nrows() != cols {
        return Err(dims_err(
            "one spectrum per coded column",
            cols,
            spectra.nrows(),
        ));
    }
    let bands = spectra.ncols();
    if bands == 0 {
        return Err(Error::InvalidValue("spectra have no bands".into()));
    }
    let mut g = DMatrix::zeros(rows, cols + bands - 1);
    for i in 0..rows {
        for j in 0..cols {
            let a = m_mat[(i, j)];
            if a == 0.0 {
                continue;
            }
            for b in 0..bands {
                g[(i, j + b)] += a * spectra[(j, b)];
            }
        }
    }
    DispersedImage::new(g, bands)
}

/// Dispersion of a general cube behind a code, without the equal-spectrum
/// assumption: `g(i, c) = Σ_j S(i, j) · C(i, j, c - j)`.
pub fn disperse_cube(code: &Code, cube: &SpectralCube) -> Result<DispersedImage> {
    let (rows, cols, bands) = cube.dims();
    let n = code.order();
    if (rows, cols) != (n, n) {
        return Err(dims_err("cube vs code order", (n, n), (rows, cols)));
    }
    let mut g = DMatrix::zeros(rows, cols + bands - 1);
    for i in 0..rows {
        for j in 0..cols {
            let c = code.get(i, j);
            if c == 0.0 {
                continue;
            }
            for (b, &v) in cube.spectrum(i, j).iter().enumerate() {
                g[(i, j + b)] += c * v;
            }
        }
    }
    DispersedImage::new(g, bands)
}

pub fn add_noise(g: &DispersedImage, model: &NoiseModel) -> DispersedImage {
    if model.kind.is_zero() {
        return g.clone();
    }
    let noise = model.kind.sample(&g.data, model.seed);
    DispersedImage {
        data: &g.data + noise,
        bands: g.bands,
    }
}

/// Both arms of a beam-split instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPathMeasurement {
    /// Dispersive arm at half intensity, with its own noise.
    pub dispersed: DispersedImage,
    /// Direct image of the coded aperture at half intensity, with its own noise.
    pub intensity: DMatrix<f64>,
}

/// Simulate the dual-path instrument. The intensity arm may be shifted by
/// `misalign` columns (zero fill) to emulate registration error.
pub fn split_dual_path(
    scene: &SceneModel,
    code: &Code,
    model: &NoiseModel,
    misalign: isize,
) -> Result<DualPathMeasurement> {
    let coded = apply_code(code, scene.intensity())?;
    let half = CodedIntensity(&coded.0 * 0.5);
    let clean = disperse(&half, scene.spectra())?;
    let dispersed = add_noise(&clean, &model.substream(0));

    let n = half.0.nrows();
    let shifted = DMatrix::from_fn(n, n, |i, j| {
        let src = j as isize - misalign;
        if (0..n as isize).contains(&src) {
            half.0[(i, src as usize)]
        } else {
            0.0
        }
    });
    let intensity = if model.kind.is_zero() {
        shifted
    } else {
        let noise = model.kind.sample(&shifted, model.substream(1).seed);
        shifted + noise
    };
    Ok(DualPathMeasurement {
        dispersed,
        intensity,
    })
}
