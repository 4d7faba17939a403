//! Sub-Hadamard normalization and linear spectral reconstruction, plus the
//! slit and uniform-HTS baselines.

use std::fmt;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, Dyn, LU};

use crate::error::{dims_err, Error, Result};
use crate::optics::{
    add_noise, apply_code, disperse, Code, CodedIntensity, DispersedImage, NoiseModel,
};
use crate::scene::SceneModel;
use crate::smatrix::SMatrix;

/// Above this condition number a measurement matrix is treated as singular.
pub const DEFAULT_MAX_CONDITION: f64 = 1e6;

/// Spectral condition number `σ_max / σ_min` (infinite when singular).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Normalized coded intensity `S_snap = M / max(M)` with a cached LU
/// factorization.
#[derive(Debug, Clone)]
pub struct SnapMatrix {
    s_snap: DMatrix<f64>,
    scale: f64,
    condition: f64,
    lu: LU<f64, Dyn, Dyn>,
}

impl SnapMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s_snap
    }

    /// `max(M)`, the factor normalization removed.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn order(&self) -> usize {
        self.s_snap.nrows()
    }

    /// `S_h = S - S_snap`.
    pub fn s_h(&self, code: &Code) -> DMatrix<f64> {
        code.to_matrix() - &self.s_snap
    }

    /// Solve `S_snap · X = rhs` column-wise.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.order() {
            return Err(dims_err("right-hand side rows", self.order(), rhs.nrows()));
        }
        self.lu.solve(rhs).ok_or(Error::SingularSnap(f64::INFINITY))
    }

    /// Wrap an already-normalized matrix (entries in `[0, 1]`, unit scale).
    /// Used when the measurement matrix is known directly, e.g. `S_snap = S`.
    pub fn from_normalized(s_snap: DMatrix<f64>, max_condition: f64) -> Result<Self> {
        Self::build(s_snap, 1.0, max_condition)
    }

    fn build(s_snap: DMatrix<f64>, scale: f64, max_condition: f64) -> Result<Self> {
        let condition = condition_number(&s_snap);
        if !(condition <= max_condition) {
            return Err(Error::SingularSnap(condition));
        }
        let lu = s_snap.clone().lu();
        Ok(Self {
            s_snap,
            scale,
            condition,
            lu,
        })
    }
}

pub fn normalize_to_snap(coded: &CodedIntensity) -> Result<SnapMatrix> {
    normalize_to_snap_with(coded, DEFAULT_MAX_CONDITION)
}

pub fn normalize_to_snap_with(coded: &CodedIntensity, max_condition: f64) -> Result<SnapMatrix> {
    let m = coded.matrix();
    let scale = m.max();
    if !(scale > 0.0) {
        return Err(Error::AllZeroIntensity);
    }
    SnapMatrix::build(m / scale, scale, max_condition)
}

/// Row `j` holds column `j`'s spectrum at offset `j`; dispersion becomes
/// `g = M · F`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftEmbeddedSpectra {
    f: DMatrix<f64>,
    bands: usize,
}

impl ShiftEmbeddedSpectra {
    pub fn from_matrix(f: DMatrix<f64>) -> Result<Self> {
        let n = f.nrows();
        if f.ncols() < n || n == 0 {
            return Err(dims_err("embedded width >= rows", n, f.ncols()));
        }
        let bands = f.ncols() + 1 - n;
        Ok(Self { f, bands })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn bands(&self) -> usize {
        self.bands
    }
}

pub fn shift_embed(spectra: &DMatrix<f64>) -> ShiftEmbeddedSpectra {
    let (n, m) = spectra.shape();
    let mut f = DMatrix::zeros(n, n + m - 1);
    for j in 0..n {
        for b in 0..m {
            f[(j, j + b)] = spectra[(j, b)];
        }
    }
    ShiftEmbeddedSpectra { f, bands: m }
}

/// Read each row's support window. Returns the `n × m` spectra and the
/// fraction of squared energy that fell outside the windows.
pub fn average_column_spectra(embedded: &ShiftEmbeddedSpectra) -> (DMatrix<f64>, f64) {
    let f = &embedded.f;
    let n = f.nrows();
    let m = embedded.bands;
    let spectra = DMatrix::from_fn(n, m, |j, b| f[(j, j + b)]);
    let total: f64 = f.iter().map(|v| v * v).sum();
    let on: f64 = spectra.iter().map(|v| v * v).sum();
    let off_support = if total > 0.0 {
        ((total - on) / total).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (spectra, off_support)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReconMethod {
    SubHadamard,
    HtsUniform,
    Slit,
}

impl fmt::Display for ReconMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReconMethod::SubHadamard => "sub-hadamard",
            ReconMethod::HtsUniform => "hts-uniform",
            ReconMethod::Slit => "slit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconResult {
    /// Raw `n × m` spectra; sub-Hadamard output carries the factor `scale`.
    pub spectra: DMatrix<f64>,
    pub scale: f64,
    pub off_support_energy: f64,
    pub method: ReconMethod,
    pub condition: Option<f64>,
    /// Full solved matrix before window extraction.
    pub embedded: DMatrix<f64>,
}

impl ReconResult {
    /// One line per column, `m` values each, after a `#` line with the
    /// method, scale, condition number, off-support energy and any `extra`
    /// `key=value` pairs.
    pub fn write_csv<W: Write>(&self, mut w: W, extra: &[(&str, String)]) -> Result<()> {
        let cond = self
            .condition
            .map(|c| c.to_string())
            .unwrap_or_else(|| "none".into());
        write!(
            w,
            "# method={},scale={},condition={},off_support_energy={}",
            self.method, self.scale, cond, self.off_support_energy
        )?;
        for (k, v) in extra {
            write!(w, ",{k}={v}")?;
        }
        writeln!(w)?;
        for row in self.spectra.row_iter() {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", vals.join(","))?;
        }
        Ok(())
    }

    pub fn normalized_spectra(&self) -> DMatrix<f64> {
        &self.spectra / self.scale
    }

    fn from_embedded(
        embedded: DMatrix<f64>,
        scale: f64,
        method: ReconMethod,
        condition: Option<f64>,
    ) -> Result<Self> {
        let shifted = ShiftEmbeddedSpectra::from_matrix(embedded)?;
        let (spectra, off_support_energy) = average_column_spectra(&shifted);
        Ok(Self {
            spectra,
            scale,
            off_support_energy,
            method,
            condition,
            embedded: shifted.f,
        })
    }
}

/// Spectra written by [`ReconResult::write_csv`]; comment lines are skipped.
pub fn read_spectra_csv<R: BufRead>(r: R) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidValue(format!("spectra value {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.first().is_some_and(|f| f.len() != row.len()) {
            return Err(dims_err("spectra row length", rows[0].len(), row.len()));
        }
        rows.push(row);
    }
    let m = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]))
}

/// `F̂ = S_snap⁻¹ · g` by LU solve.
pub fn reconstruct_subhadamard(g: &DispersedImage, snap: &SnapMatrix) -> Result<ReconResult> {
    if g.rows() != snap.order() {
        return Err(dims_err(
            "dispersed rows vs S_snap order",
            snap.order(),
            g.rows(),
        ));
    }
    let f_hat = snap.solve(g.data())?;
    ReconResult::from_embedded(
        f_hat,
        snap.scale(),
        ReconMethod::SubHadamard,
        Some(snap.condition()),
    )
}

/// `F̂ = S⁻¹ · g` with the closed-form binary inverse, ignoring the scene
/// intensity.
pub fn reconstruct_hts_uniform(g: &DispersedImage, s: &SMatrix) -> Result<ReconResult> {
    if g.rows() != s.order() {
        return Err(dims_err("dispersed rows vs S order", s.order(), g.rows()));
    }
    let f_hat = s.inverse().matrix() * g.data();
    ReconResult::from_embedded(f_hat, 1.0, ReconMethod::HtsUniform, None)
}

/// Slit baseline: identity code through the same disperser and detector,
/// so spectrum `j` is `I(j, j) · φ_j` plus noise on each band.
pub fn measure_slit(scene: &SceneModel, model: &NoiseModel) -> Result<ReconResult> {
    let n = scene.order();
    let coded = apply_code(&Code::Identity(n), scene.intensity())?;
    let g = add_noise(&disperse(&coded, scene.spectra())?, model);
    ReconResult::from_embedded(g.into_data(), 1.0, ReconMethod::Slit, Some(1.0))
}
