//! SNR and PSNR, the perturbation decomposition `k·S_snap = S_1 + S_2`,
//! bound evaluation, and Monte Carlo comparisons between instruments.
//!
//! All decibel figures use `log10`.

use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{dims_err, Error, Result};
use crate::optics::{
    add_noise, apply_code, disperse, split_dual_path, Code, NoiseKind, NoiseModel,
};
use crate::recon::{
    measure_slit, normalize_to_snap, reconstruct_subhadamard, SnapMatrix, DEFAULT_MAX_CONDITION,
};
use crate::scene::{SceneModel, SceneSynth};
use crate::seeds;

/// Signal power over residual power of a reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrReport {
    /// `+inf` when the residual is below roundoff.
    pub snr_db: f64,
    pub signal_power: f64,
    pub residual_power: f64,
    pub saturated: bool,
}

fn check_same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dims_err("reference vs estimate", a.shape(), b.shape()));
    }
    Ok(())
}

/// Residuals at or below this fraction of the signal power are roundoff and
/// count as exact reconstruction (240 dB).
pub const SATURATION_RATIO: f64 = 1e-24;

/// `10·log10(‖f‖² / ‖f̂ − f‖²)`.
pub fn snr_db(f_true: &DMatrix<f64>, f_hat: &DMatrix<f64>) -> Result<SnrReport> {
    check_same_shape(f_true, f_hat)?;
    let signal_power = f_true.norm_squared();
    if signal_power == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let residual_power = (f_hat - f_true).norm_squared();
    let saturated = residual_power <= signal_power * SATURATION_RATIO;
    let snr_db = if saturated {
        f64::INFINITY
    } else {
        10.0 * (signal_power / residual_power).log10()
    };
    Ok(SnrReport {
        snr_db,
        signal_power,
        residual_power,
        saturated,
    })
}

/// SNR after the least-squares global gain `s = ⟨f̂, f⟩ / ⟨f̂, f̂⟩` has been
/// applied to the estimate.
pub fn snr_db_scale_fit(f_true: &DMatrix<f64>, f_hat: &DMatrix<f64>) -> Result<SnrReport> {
    check_same_shape(f_true, f_hat)?;
    let denom = f_hat.norm_squared();
    let gain = if denom > 0.0 {
        f_hat.dot(f_true) / denom
    } else {
        0.0
    };
    snr_db(f_true, &(f_hat * gain))
}

/// `10·log10(peak² / MSE)`; `+inf` for identical images.
pub fn psnr_db(x_true: &DMatrix<f64>, x_hat: &DMatrix<f64>, peak: f64) -> Result<f64> {
    check_same_shape(x_true, x_hat)?;
    if !(peak > 0.0) {
        return Err(Error::InvalidValue(format!(
            "PSNR peak {peak} must be positive"
        )));
    }
    if x_true.is_empty() {
        return Err(Error::DimensionMismatch("PSNR of an empty image".into()));
    }
    let mse = (x_hat - x_true).norm_squared() / x_true.len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    })
}

/// `k·S_snap = S_1 + S_2` with `k` the Frobenius projection of `S_1` onto
/// `S_snap`, so `S_2` is orthogonal to `S_snap` unless `k` was clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationDecomposition {
    pub k: f64,
    pub alpha: f64,
    pub s1: DMatrix<f64>,
    pub s2: DMatrix<f64>,
    /// `S_1ᵀS_2 + S_2ᵀS_1 + (2−k)/(1−k)·S_2ᵀS_2`.
    pub b: DMatrix<f64>,
}

pub fn decompose_k(s_snap: &DMatrix<f64>, s1: &DMatrix<f64>) -> Result<PerturbationDecomposition> {
    check_same_shape(s_snap, s1)?;
    let denom = s_snap.norm_squared();
    if denom == 0.0 {
        return Err(Error::AllZeroIntensity);
    }
    let raw = s1.dot(s_snap) / denom;
    if !raw.is_finite() {
        return Err(Error::NonFinite("perturbation coefficient".into()));
    }
    if raw >= 1.0 {
        return Err(Error::PerturbationTooLarge(raw));
    }
    let k = raw.max(0.0);
    let s2 = s_snap * k - s1;
    let b =
        s1.transpose() * &s2 + s2.transpose() * s1 + s2.transpose() * &s2 * ((2.0 - k) / (1.0 - k));
    Ok(PerturbationDecomposition {
        k,
        alpha: 1.0 - k,
        s1: s1.clone(),
        s2,
        b,
    })
}

/// Summary of repeated SNR measurements. Saturated trials are counted but
/// left out of the mean and spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrStats {
    pub mean_db: f64,
    pub std_db: f64,
    pub trials: usize,
    pub saturated: usize,
}

impl SnrStats {
    pub fn from_reports(reports: &[SnrReport]) -> Self {
        let finite: Vec<f64> = reports
            .iter()
            .filter(|r| !r.saturated)
            .map(|r| r.snr_db)
            .collect();
        let trials = reports.len();
        let saturated = trials - finite.len();
        if finite.is_empty() {
            let mean_db = if trials > 0 { f64::INFINITY } else { f64::NAN };
            return Self {
                mean_db,
                std_db: 0.0,
                trials,
                saturated,
            };
        }
        let (mean_db, std_db) = mean_std(&finite);
        Self {
            mean_db,
            std_db,
            trials,
            saturated,
        }
    }

    pub fn all_saturated(&self) -> bool {
        self.trials > 0 && self.saturated == self.trials
    }
}

/// Sample mean and (n−1) standard deviation; zero spread for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. `None` for fewer
/// than two points, mismatched lengths or a constant input.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, _) = mean_std(&ra);
    let (mb, _) = mean_std(&rb);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

/// Difference of two mean SNRs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnrGap {
    Db(f64),
    /// Both sides reconstructed exactly; no finite gap exists.
    BothSaturated,
}

impl SnrGap {
    pub fn between(a: &SnrStats, b: &SnrStats) -> Self {
        if a.all_saturated() && b.all_saturated() {
            SnrGap::BothSaturated
        } else {
            SnrGap::Db(a.mean_db - b.mean_db)
        }
    }

    pub fn db(&self) -> Option<f64> {
        match *self {
            SnrGap::Db(v) => Some(v),
            SnrGap::BothSaturated => None,
        }
    }
}

impl fmt::Display for SnrGap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SnrGap::Db(v) => write!(f, "{v:.4} dB"),
            SnrGap::BothSaturated => write!(f, "saturated"),
        }
    }
}

/// Whether the spectrum carries the single-path factor 2 relative to the
/// dual-path reference (`f̂ = 2f + …`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignalGain {
    #[default]
    Unit,
    Doubled,
}

impl SignalGain {
    fn factor(self) -> f64 {
        match self {
            SignalGain::Unit => 1.0,
            SignalGain::Doubled => 2.0,
        }
    }
}

fn perturbed_matrix(s_snap: &DMatrix<f64>, s1: &DMatrix<f64>) -> Result<SnapMatrix> {
    check_same_shape(s_snap, s1)?;
    SnapMatrix::from_normalized(s_snap - s1, DEFAULT_MAX_CONDITION)
}

/// Monte Carlo SNR of `f̂ = c·f + (S_snap − S_1)⁻¹ n_s`, where the
/// measurement and reconstruction matrices are both `S_snap − S_1`.
/// Shot noise variance follows the measured signal `c·(S_snap − S_1)·f`.
pub fn perturbed_recon_snr(
    s_snap: &DMatrix<f64>,
    s1: &DMatrix<f64>,
    f: &DMatrix<f64>,
    noise: NoiseKind,
    gain: SignalGain,
    trials: usize,
    seed: u64,
) -> Result<SnrStats> {
    noise.validate()?;
    if trials == 0 {
        return Err(Error::InvalidValue("trials must be >= 1".into()));
    }
    let a = perturbed_matrix(s_snap, s1)?;
    if f.nrows() != a.order() {
        return Err(dims_err(
            "spectra rows vs matrix order",
            a.order(),
            f.nrows(),
        ));
    }
    let c = gain.factor();
    let target = f * c;
    let signal = a.matrix() * &target;
    let reports = (0..trials)
        .into_par_iter()
        .map(|t| {
            if noise.is_zero() {
                return snr_db(&target, &target);
            }
            let n_s = noise.sample(&signal, seeds::derive(seed, t as u64));
            let f_hat = &target + a.solve(&n_s)?;
            snr_db(&target, &f_hat)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SnrStats::from_reports(&reports))
}

/// Both sides of the perturbation bound for one noise draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundDraw {
    /// Reconstruction SNR `10·log10(fᵀf / n'ᵀn')`.
    pub snr_recon_db: f64,
    /// `10·log10(n'ᵀ(S_snap−S_1)ᵀ(S_snap−S_1)n' / n'ᵀn')`, the quantity the
    /// bound is stated for.
    pub lhs_db: f64,
    /// The same quantity rebuilt from `k`, `S_2` and `B`; equals `lhs_db`.
    pub lhs_from_b_db: f64,
    /// `10·log10(n'ᵀS_snapᵀS_snap n' / n'ᵀn') + 10·log10(1−k)`.
    pub rhs_db: f64,
    /// `rhs_db + 10·log10(2)`.
    pub rhs_doubled_db: f64,
}

impl BoundDraw {
    pub fn violates(&self) -> bool {
        self.lhs_db < self.rhs_db - 1e-9
    }

    pub fn violates_doubled(&self) -> bool {
        self.lhs_db < self.rhs_doubled_db - 1e-9
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundEvaluation {
    pub k: f64,
    pub draws: Vec<BoundDraw>,
    pub violation_rate: f64,
    pub violation_rate_doubled: f64,
}

/// Quadratic form `Σ_c x_cᵀ Q x_c` over the columns of `x`.
fn quad(q: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    x.dot(&(q * x))
}

/// Evaluate the perturbation bound numerically for each supplied noise
/// draw. Makes no claim that it holds.
pub fn eval_bound(
    s_snap: &DMatrix<f64>,
    s1: &DMatrix<f64>,
    f: &DMatrix<f64>,
    noise_draws: &[DMatrix<f64>],
) -> Result<BoundEvaluation> {
    let dec = decompose_k(s_snap, s1)?;
    let a = perturbed_matrix(s_snap, s1)?;
    let k = dec.k;
    let sts = s_snap.transpose() * s_snap;
    let ata = a.matrix().transpose() * a.matrix();
    let from_b = if k > 0.0 {
        &sts * (1.0 - k).powi(2) + &dec.b * ((1.0 - k) / k)
    } else {
        // k = 0 leaves B's prefactor undefined; use the expanded form.
        &sts + s_snap.transpose() * &dec.s2
            + dec.s2.transpose() * s_snap
            + dec.s2.transpose() * &dec.s2
    };
    let signal = f.norm_squared();
    let mut draws = Vec::with_capacity(noise_draws.len());
    for n_s in noise_draws {
        if n_s.shape() != f.shape() {
            return Err(dims_err("noise draw vs spectra", f.shape(), n_s.shape()));
        }
        let n_p = a.solve(n_s)?;
        let denom = n_p.norm_squared();
        if denom == 0.0 {
            return Err(Error::InvalidValue("noise draw is identically zero".into()));
        }
        let base = 10.0 * (quad(&sts, &n_p) / denom).log10();
        let rhs_db = base + 10.0 * (1.0 - k).log10();
        draws.push(BoundDraw {
            snr_recon_db: 10.0 * (signal / denom).log10(),
            lhs_db: 10.0 * (quad(&ata, &n_p) / denom).log10(),
            lhs_from_b_db: 10.0 * (quad(&from_b, &n_p) / denom).log10(),
            rhs_db,
            rhs_doubled_db: rhs_db + 10.0 * 2f64.log10(),
        });
    }
    let count = draws.len().max(1) as f64;
    let violation_rate = draws.iter().filter(|d| d.violates()).count() as f64 / count;
    let violation_rate_doubled =
        draws.iter().filter(|d| d.violates_doubled()).count() as f64 / count;
    Ok(BoundEvaluation {
        k,
        draws,
        violation_rate,
        violation_rate_doubled,
    })
}

/// Where the dual-path instrument gets its `S_snap`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualIntensity {
    /// Exact normalized coded intensity, isolating the throughput loss.
    #[default]
    Exact,
    /// Its own noisy half-intensity direct image.
    Measured,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComparison {
    pub single: SnrStats,
    pub dual: SnrStats,
    pub gap: SnrGap,
    /// Dual-path trials skipped because the measured `S_snap` was singular.
    pub skipped: usize,
}

/// Mean single-path SNR minus mean dual-path SNR. Each instrument is scored
/// against its own ideal output: `max(M)·φ` for the single path and half
/// of that for the dual path.
pub fn dual_vs_single_path_gap(
    scene: &SceneModel,
    code: &Code,
    noise: NoiseKind,
    intensity: DualIntensity,
    trials: usize,
    seed: u64,
) -> Result<PathComparison> {
    noise.validate()?;
    if trials == 0 {
        return Err(Error::InvalidValue("trials must be >= 1".into()));
    }
    let coded = apply_code(code, scene.intensity())?;
    let snap = normalize_to_snap(&coded)?;
    let clean = disperse(&coded, scene.spectra())?;
    let target = scene.spectra() * snap.scale();
    let half_target = &target * 0.5;

    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<(SnrReport, Option<SnrReport>)> {
            let single_model = NoiseModel {
                kind: noise,
                seed: seeds::derive_path(seed, &[t as u64, 0]),
            };
            let g = add_noise(&clean, &single_model);
            let single = snr_db(&target, &reconstruct_subhadamard(&g, &snap)?.spectra)?;

            let dual_model = NoiseModel {
                kind: noise,
                seed: seeds::derive_path(seed, &[t as u64, 1]),
            };
            let measured = split_dual_path(scene, code, &dual_model, 0)?;
            let dual_snap = match intensity {
                DualIntensity::Exact => Ok(snap.clone()),
                DualIntensity::Measured => crate::optics::CodedIntensity::from_matrix(
                    measured.intensity.map(|v| v.max(0.0)),
                )
                .and_then(|m| normalize_to_snap(&m)),
            };
            let dual = match dual_snap {
                Ok(s) => Some(snr_db(
                    &half_target,
                    &reconstruct_subhadamard(&measured.dispersed, &s)?.spectra,
                )?),
                Err(Error::SingularSnap(_)) | Err(Error::AllZeroIntensity) => None,
                Err(e) => return Err(e),
            };
            Ok((single, dual))
        })
        .collect::<Result<Vec<_>>>()?;

    let singles: Vec<SnrReport> = outcomes.iter().map(|o| o.0).collect();
    let duals: Vec<SnrReport> = outcomes.iter().filter_map(|o| o.1).collect();
    let single = SnrStats::from_reports(&singles);
    let dual = SnrStats::from_reports(&duals);
    Ok(PathComparison {
        single,
        dual,
        gap: SnrGap::between(&single, &dual),
        skipped: trials - duals.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplexComparison {
    pub hadamard: SnrStats,
    pub slit: SnrStats,
    pub gain: SnrGap,
}

/// Closed-form mean noise gain of the S-matrix inverse over a slit,
/// `10·log10((n+1)² / 4n)`.
pub fn multiplex_gain_closed_form(n: usize) -> f64 {
    let n = n as f64;
    10.0 * ((n + 1.0).powi(2) / (4.0 * n)).log10()
}

/// Mean sub-Hadamard SNR minus mean slit SNR on a uniform-intensity scene
/// with `bands` bands under read noise `sigma`.
pub fn multiplex_gain(
    n: usize,
    bands: usize,
    sigma: f64,
    trials: usize,
    seed: u64,
) -> Result<MultiplexComparison> {
    if trials == 0 {
        return Err(Error::InvalidValue("trials must be >= 1".into()));
    }
    let code = Code::Hadamard(crate::smatrix::build_smatrix(n)?);
    let scene = SceneSynth::new(n, bands, 0).generate(seeds::derive(seed, u64::MAX))?;
    let coded = apply_code(&code, scene.intensity())?;
    let snap = normalize_to_snap(&coded)?;
    let clean = disperse(&coded, scene.spectra())?;
    let target = scene.spectra() * snap.scale();
    let slit_target = measure_slit(&scene, &NoiseModel::read(0.0, 0)?)?.spectra;

    let pairs = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<(SnrReport, SnrReport)> {
            let model = NoiseModel::read(sigma, seeds::derive(seed, t as u64))?;
            let g = add_noise(&clean, &model.substream(0));
            let had = snr_db(&target, &reconstruct_subhadamard(&g, &snap)?.spectra)?;
            let slit = snr_db(
                &slit_target,
                &measure_slit(&scene, &model.substream(1))?.spectra,
            )?;
            Ok((had, slit))
        })
        .collect::<Result<Vec<_>>>()?;
    let hadamard = SnrStats::from_reports(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let slit = SnrStats::from_reports(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    Ok(MultiplexComparison {
        hadamard,
        slit,
        gain: SnrGap::between(&hadamard, &slit),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct McRow {
    pub method: String,
    pub noise_kind: String,
    pub param: f64,
    pub mean_snr_db: f64,
    pub std_db: f64,
    pub trials: usize,
}

/// Monte Carlo result table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct McTable {
    pub rows: Vec<McRow>,
}

pub const MC_TABLE_HEADER: &str = "method,noise_kind,param,mean_snr_db,std_db,trials";

impl McTable {
    pub fn push(&mut self, method: impl Into<String>, noise: NoiseKind, stats: &SnrStats) {
        self.rows.push(McRow {
            method: method.into(),
            noise_kind: noise.name().to_string(),
            param: noise.param(),
            mean_snr_db: stats.mean_db,
            std_db: stats.std_db,
            trials: stats.trials.max(1),
        });
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MC_TABLE_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.method, r.noise_kind, r.param, r.mean_snr_db, r.std_db, r.trials
            )?;
        }
        Ok(())
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        if lines.next() != Some(MC_TABLE_HEADER) {
            return Err(Error::MalformedHeader(format!(
                "expected {MC_TABLE_HEADER:?}"
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidValue(format!("not a number: {s:?}")))
        };
        let rows = lines
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 6 {
                    return Err(Error::InvalidValue(format!(
                        "table row {line:?} needs 6 fields"
                    )));
                }
                Ok(McRow {
                    method: f[0].to_string(),
                    noise_kind: f[1].to_string(),
                    param: num(f[2])?,
                    mean_snr_db: num(f[3])?,
                    std_db: num(f[4])?,
                    trials: f[5]
                        .parse()
                        .map_err(|_| Error::InvalidValue(format!("bad trials {:?}", f[5])))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::CodedIntensity;
    use crate::scene::synth_random_scene;
    use crate::smatrix::build_smatrix;

    #[test]
    fn spearman_cases() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        // Monotone but nonlinear.
        assert_eq!(
            spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 8.0, 27.0, 64.0]),
            Some(1.0)
        );
        // 1 - 6·Σd²/(n(n²-1)) with d = (0, 0, 1, -1): 1 - 12/60.
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 4.0, 3.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-15);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
        assert_eq!(spearman(&[1.0], &[1.0]), None);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }
    use proptest::prelude::*;
    use rand::Rng;

    fn snap_of(n: usize, seed: u64) -> DMatrix<f64> {
        let code = Code::Hadamard(build_smatrix(n).unwrap());
        let scene = synth_random_scene(n, 4, 3, seed).unwrap();
        let coded = apply_code(&code, scene.intensity()).unwrap();
        normalize_to_snap(&coded).unwrap().matrix().clone()
    }

    #[test]
    fn snr_direct_cases() {
        let f = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        assert!(snr_db(&f, &f).unwrap().saturated);
        assert_eq!(snr_db(&f, &f).unwrap().snr_db, f64::INFINITY);
        let r = snr_db(&f, &DMatrix::from_row_slice(1, 2, &[3.0, 4.5])).unwrap();
        assert!((r.snr_db - 20.0).abs() < 1e-12);
        let zero = snr_db(&f, &DMatrix::zeros(1, 2)).unwrap();
        assert!(zero.snr_db.abs() < 1e-12);
        assert!(matches!(
            snr_db(&DMatrix::zeros(1, 2), &f),
            Err(Error::ZeroSignal)
        ));
    }

    #[test]
    fn scale_fit_removes_gain() {
        let f = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        assert!(snr_db_scale_fit(&f, &(&f * 3.0)).unwrap().saturated);
    }

    #[test]
    fn psnr_cases() {
        let x = DMatrix::from_element(4, 4, 0.5);
        assert_eq!(psnr_db(&x, &x, 1.0).unwrap(), f64::INFINITY);
        let y = x.add_scalar(0.1);
        assert!((psnr_db(&x, &y, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr_db(&x, &y, 0.0).is_err());
    }

    #[test]
    fn psnr_matches_two_pass_oracle() {
        let mut rng = seeds::rng(3);
        let a = DMatrix::from_fn(13, 9, |_, _| rng.random::<f64>());
        let b = DMatrix::from_fn(13, 9, |_, _| rng.random::<f64>());
        let mut s = 0.0;
        for i in 0..13 {
            for j in 0..9 {
                s += (a[(i, j)] - b[(i, j)]).powi(2);
            }
        }
        let mse = s / 117.0;
        let oracle = 10.0 * (2.0f64.powi(2) / mse).log10();
        assert!((psnr_db(&a, &b, 2.0).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn decompose_trivial_cases() {
        let s = snap_of(7, 1);
        let d = decompose_k(&s, &DMatrix::zeros(7, 7)).unwrap();
        assert_eq!(d.k, 0.0);
        assert!(d.s2.iter().all(|&v| v == 0.0));
        let d = decompose_k(&s, &(&s * 0.3)).unwrap();
        assert!((d.k - 0.3).abs() < 1e-15);
        assert!(d.s2.amax() < 1e-15);
        assert!(matches!(
            decompose_k(&s, &(&s * 1.2)),
            Err(Error::PerturbationTooLarge(_))
        ));
    }

    #[test]
    fn read_noise_perturbation_law() {
        let s = snap_of(15, 2);
        let f = crate::recon::shift_embed(synth_random_scene(15, 4, 1, 2).unwrap().spectra())
            .matrix()
            .clone();
        let noise = NoiseKind::Read { sigma: 0.01 };
        let base = perturbed_recon_snr(
            &s,
            &DMatrix::zeros(15, 15),
            &f,
            noise,
            SignalGain::Unit,
            500,
            4,
        )
        .unwrap();
        for k in [0.1, 0.3, 0.5] {
            let st =
                perturbed_recon_snr(&s, &(&s * k), &f, noise, SignalGain::Unit, 500, 4).unwrap();
            let drop = st.mean_db - base.mean_db;
            assert!(
                (drop - 20.0 * (1.0 - k).log10()).abs() < 0.2,
                "k={k}: {drop}"
            );
        }
        let doubled = perturbed_recon_snr(
            &s,
            &DMatrix::zeros(15, 15),
            &f,
            noise,
            SignalGain::Doubled,
            500,
            4,
        )
        .unwrap();
        assert!((doubled.mean_db - base.mean_db - 20.0 * 2f64.log10()).abs() < 0.2);
        let silent = perturbed_recon_snr(
            &s,
            &DMatrix::zeros(15, 15),
            &f,
            NoiseKind::Read { sigma: 0.0 },
            SignalGain::Unit,
            3,
            4,
        )
        .unwrap();
        assert!(silent.all_saturated());
    }

    #[test]
    fn bound_at_zero_perturbation_is_tight() {
        let s = snap_of(7, 3);
        let f = DMatrix::from_element(7, 4, 0.25);
        let mut rng = seeds::rng(1);
        let draws: Vec<_> = (0..20)
            .map(|_| DMatrix::from_fn(7, 4, |_, _| rng.random::<f64>() - 0.5))
            .collect();
        let ev = eval_bound(&s, &DMatrix::zeros(7, 7), &f, &draws).unwrap();
        assert_eq!(ev.violation_rate, 0.0);
        for d in &ev.draws {
            assert!((d.lhs_db - d.rhs_db).abs() < 1e-9);
            assert!((d.lhs_db - d.lhs_from_b_db).abs() < 1e-9);
        }
        // Continuity as k -> 0.
        let tiny = eval_bound(&s, &(&s * 1e-9), &f, &draws).unwrap();
        for (a, b) in tiny.draws.iter().zip(&ev.draws) {
            assert!((a.rhs_db - b.rhs_db).abs() < 1e-6);
        }
    }

    #[test]
    fn bound_for_scaled_perturbation_reports_sign() {
        let s = snap_of(7, 4);
        let f = DMatrix::from_element(7, 4, 0.25);
        let mut rng = seeds::rng(9);
        let draws: Vec<_> = (0..50)
            .map(|_| DMatrix::from_fn(7, 4, |_, _| rng.random::<f64>() - 0.5))
            .collect();
        let ev = eval_bound(&s, &(&s * 0.3), &f, &draws).unwrap();
        assert!((ev.k - 0.3).abs() < 1e-12);
        for d in &ev.draws {
            // With S_2 = 0 the lhs is exactly 10·log10((1-k)^2) above the
            // S_snap form, below the claimed 10·log10(1-k).
            assert!((d.lhs_db - d.lhs_from_b_db).abs() < 1e-9);
            assert!((d.rhs_db - d.lhs_db - (-10.0 * 0.7f64.log10())).abs() < 1e-9);
        }
        assert_eq!(ev.violation_rate, 1.0);
    }

    #[test]
    fn noiseless_dual_gap_is_saturated() {
        let code = Code::Hadamard(build_smatrix(7).unwrap());
        let scene = synth_random_scene(7, 4, 2, 1).unwrap();
        let r = dual_vs_single_path_gap(
            &scene,
            &code,
            NoiseKind::Read { sigma: 0.0 },
            DualIntensity::Exact,
            4,
            1,
        )
        .unwrap();
        assert_eq!(r.gap, SnrGap::BothSaturated);
        let r = dual_vs_single_path_gap(
            &scene,
            &code,
            NoiseKind::Read { sigma: 0.0 },
            DualIntensity::Measured,
            4,
            1,
        )
        .unwrap();
        assert_eq!(r.gap, SnrGap::BothSaturated);
    }

    #[test]
    fn multiplex_gain_saturates_without_noise() {
        let r = multiplex_gain(7, 4, 0.0, 3, 1).unwrap();
        assert_eq!(r.gain, SnrGap::BothSaturated);
        assert!((multiplex_gain_closed_form(7) - 3.590).abs() < 1e-3);
        assert!((multiplex_gain_closed_form(31) - 9.169).abs() < 1e-3);
    }

    #[test]
    fn mc_table_csv_round_trip() {
        let mut t = McTable::default();
        let stats = SnrStats {
            mean_db: 12.5,
            std_db: 0.25,
            trials: 10,
            saturated: 0,
        };
        t.push("slit", NoiseKind::Read { sigma: 0.01 }, &stats);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "method,noise_kind,param,mean_snr_db,std_db,trials\nslit,read,0.01,12.5,0.25,10\n"
        ));
        assert_eq!(McTable::parse_csv(&text).unwrap(), t);
    }

    #[test]
    fn coded_intensity_rejects_negative() {
        assert!(CodedIntensity::from_matrix(DMatrix::from_element(2, 2, -1.0)).is_err());
    }

    proptest! {
        #[test]
        fn snr_shifts_by_twenty_log_of_residual_scale(c in 0.01f64..100.0, seed in any::<u64>()) {
            let mut rng = seeds::rng(seed);
            let f = DMatrix::from_fn(4, 5, |_, _| rng.random::<f64>() + 0.1);
            let r = DMatrix::from_fn(4, 5, |_, _| rng.random::<f64>() - 0.5);
            let a = snr_db(&f, &(&f + &r)).unwrap().snr_db;
            let b = snr_db(&f, &(&f + &r * c)).unwrap().snr_db;
            prop_assert!((a - b - 20.0 * c.log10()).abs() < 1e-9);
        }

        #[test]
        fn decomposition_identity_holds(seed in any::<u64>(), mag in 0.0f64..0.2) {
            let s = snap_of(7, seed % 50);
            let mut rng = seeds::rng(seed);
            let s1 = DMatrix::from_fn(7, 7, |_, _| mag * (rng.random::<f64>() - 0.3));
            let d = decompose_k(&s, &s1).unwrap();
            prop_assert!((0.0..1.0).contains(&d.k));
            prop_assert!((&s * d.k - (&d.s1 + &d.s2)).amax() <= 1e-12);
        }
    }
}
