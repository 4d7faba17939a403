//! End-to-end experiments: simulate the instrument, estimate the coded
//! intensity, reconstruct spectra and score every method on identical
//! scenes and noise draws.
//!
//! Random streams are keyed as follows, so any subset of methods reproduces
//! the same numbers:
//!
//! | stream | seed |
//! |---|---|
//! | scene `s` | `derive(scene_seed, s)` |
//! | single-path detector, trial `t` | `derive_path(seed, [s, t, 0])` |
//! | dual-path instrument | `derive_path(seed, [s, t, 2])` |
//! | slit instrument | `derive_path(seed, [s, t, 3])` |

use std::fmt;
use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::DMatrix;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{
    decompose_k, mean_std, psnr_db, snr_db, snr_db_scale_fit, DualIntensity, McTable, SnrReport,
    SnrStats,
};
use crate::netunmix::{
    build_network, code_mask, infer, infer_masked, make_sample, train, ArchConfig, NetworkParams,
    Sample, TrainConfig, TrainOutcome,
};
use crate::optics::{
    add_noise, apply_code, disperse, split_dual_path, Code, CodedIntensity, DispersedImage,
    NoiseKind, NoiseModel,
};
use crate::recon::{
    measure_slit, normalize_to_snap_with, reconstruct_hts_uniform, reconstruct_subhadamard,
    SnapMatrix,
};
use crate::scene::{SceneModel, SceneSynth};
use crate::seeds;
use crate::smatrix::build_smatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    SubHadamardExact,
    SubHadamardNet,
    SubHadamardDual,
    Slit,
    HtsUniform,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::SubHadamardExact,
        Method::SubHadamardNet,
        Method::SubHadamardDual,
        Method::Slit,
        Method::HtsUniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SubHadamardExact => "sub-hadamard-exact",
            Method::SubHadamardNet => "sub-hadamard-net",
            Method::SubHadamardDual => "sub-hadamard-dual",
            Method::Slit => "slit",
            Method::HtsUniform => "hts-uniform",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeKind {
    Hadamard,
    FullOne,
}

impl CodeKind {
    pub fn name(self) -> &'static str {
        match self {
            CodeKind::Hadamard => "hadamard",
            CodeKind::FullOne => "full-1",
        }
    }

    pub fn build(self, n: usize) -> Result<Code> {
        match self {
            CodeKind::Hadamard => Ok(Code::Hadamard(build_smatrix(n)?)),
            CodeKind::FullOne => Ok(Code::FullOne(n)),
        }
    }
}

/// Lowercase hex SHA-256.
pub fn hash_bytes(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// One experiment, as read from a `key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub order: usize,
    pub bands: usize,
    pub scenes: usize,
    pub scene_seed: u64,
    pub blobs: usize,
    pub intensity_floor: f64,
    pub code: CodeKind,
    pub noise: NoiseKind,
    pub methods: Vec<Method>,
    pub network: Option<PathBuf>,
    pub trials: usize,
    pub seed: u64,
    pub dual_intensity: DualIntensity,
    pub max_condition: f64,
    /// Zero the network estimate wherever the code is closed.
    pub code_mask: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            order: 31,
            bands: 8,
            scenes: 10,
            scene_seed: 0,
            blobs: 4,
            intensity_floor: 0.05,
            code: CodeKind::Hadamard,
            noise: NoiseKind::Read { sigma: 0.01 },
            methods: vec![Method::SubHadamardExact, Method::Slit, Method::HtsUniform],
            network: None,
            trials: 1,
            seed: 0,
            dual_intensity: DualIntensity::Measured,
            max_condition: crate::recon::DEFAULT_MAX_CONDITION,
            code_mask: true,
        }
    }
}

const KEYS: [&str; 15] = [
    "order",
    "bands",
    "scenes",
    "scene_seed",
    "blobs",
    "intensity_floor",
    "code",
    "noise",
    "methods",
    "network",
    "trials",
    "seed",
    "dual_intensity",
    "max_condition",
    "code_mask",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {v:?}")))
}

impl ExperimentConfig {
    /// Parse `key = value` lines; `#` starts a comment. Missing keys keep
    /// their defaults, unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| {
                    Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1))
                })?;
            if !KEYS.contains(&key) {
                return Err(Error::InvalidConfig(format!(
                    "line {}: unknown key {key:?}",
                    lineno + 1
                )));
            }
            if seen.contains(&key) {
                return Err(Error::InvalidConfig(format!(
                    "line {}: repeated key {key:?}",
                    lineno + 1
                )));
            }
            seen.push(key);
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "order" => self.order = parse_num(key, v)?,
            "bands" => self.bands = parse_num(key, v)?,
            "scenes" => self.scenes = parse_num(key, v)?,
            "scene_seed" => self.scene_seed = parse_num(key, v)?,
            "blobs" => self.blobs = parse_num(key, v)?,
            "intensity_floor" => self.intensity_floor = parse_num(key, v)?,
            "code" => {
                self.code = match v {
                    "hadamard" => CodeKind::Hadamard,
                    "full-1" => CodeKind::FullOne,
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "code: {v:?} (hadamard | full-1)"
                        )))
                    }
                }
            }
            "noise" => self.noise = NoiseKind::parse(v)?,
            "methods" => {
                self.methods = v
                    .split(',')
                    .map(|m| Method::parse(m.trim()))
                    .collect::<Result<_>>()?
            }
            "network" => {
                self.network = if v.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(v))
                }
            }
            "trials" => self.trials = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "dual_intensity" => {
                self.dual_intensity = match v {
                    "exact" => DualIntensity::Exact,
                    "measured" => DualIntensity::Measured,
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "dual_intensity: {v:?} (exact | measured)"
                        )))
                    }
                }
            }
            "max_condition" => self.max_condition = parse_num(key, v)?,
            "code_mask" => self.code_mask = parse_num(key, v)?,
            _ => unreachable!("key list checked"),
        }
        Ok(())
    }

    /// Canonical text with every key, in a fixed order.
    pub fn to_text(&self) -> String {
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        let noise = format!("{}:{}", self.noise.name(), self.noise.param());
        let network = self
            .network
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        let dual = match self.dual_intensity {
            DualIntensity::Exact => "exact",
            DualIntensity::Measured => "measured",
        };
        let values: [String; 15] = [
            self.order.to_string(),
            self.bands.to_string(),
            self.scenes.to_string(),
            self.scene_seed.to_string(),
            self.blobs.to_string(),
            self.intensity_floor.to_string(),
            self.code.name().to_string(),
            noise,
            methods.join(","),
            network,
            self.trials.to_string(),
            self.seed.to_string(),
            dual.to_string(),
            self.max_condition.to_string(),
            self.code_mask.to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Hex SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        hash_bytes(self.to_text().as_bytes())
    }

    /// Full check, including that a configured network file exists.
    pub fn validate(&self) -> Result<()> {
        self.validate_params()?;
        if self.methods.contains(&Method::SubHadamardNet) {
            match &self.network {
                None => {
                    return Err(Error::InvalidConfig(
                        "sub-hadamard-net needs network = <path>".into(),
                    ))
                }
                Some(p) if !p.is_file() => {
                    return Err(Error::InvalidConfig(format!(
                        "network file {} does not exist",
                        p.display()
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Checks that do not touch the file system.
    pub fn validate_params(&self) -> Result<()> {
        self.code.build(self.order)?;
        self.noise.validate()?;
        if self.bands < 2 {
            return Err(Error::InvalidConfig("bands must be >= 2".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("methods must not be empty".into()));
        }
        let mut sorted = self.methods.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.methods.len() {
            return Err(Error::InvalidConfig("methods must not repeat".into()));
        }
        if self.scenes == 0 || self.trials == 0 {
            return Err(Error::InvalidConfig(
                "scenes and trials must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.intensity_floor) {
            return Err(Error::InvalidConfig(
                "intensity_floor must be in [0, 1)".into(),
            ));
        }
        if !(self.max_condition > 1.0) {
            return Err(Error::InvalidConfig("max_condition must exceed 1".into()));
        }
        Ok(())
    }

    /// Scene `s`, its coded intensity and the noisy single-path measurement
    /// of trial `t`, exactly as the experiment sees them.
    pub fn measurement(
        &self,
        s: usize,
        t: usize,
    ) -> Result<(SceneModel, CodedIntensity, DispersedImage)> {
        let ctx = SceneCtx::new(self, s)?;
        let g = single_path_measurement(self, &ctx, s, t);
        Ok((ctx.scene, ctx.coded, g))
    }

    pub fn scene(&self, s: usize) -> Result<SceneModel> {
        SceneSynth {
            order: self.order,
            bands: self.bands,
            blobs: self.blobs,
            floor: self.intensity_floor,
        }
        .generate(seeds::derive(self.scene_seed, s as u64))
    }
}

/// Where the single-path instrument gets its intensity estimate.
#[derive(Debug, Clone, Copy)]
pub enum IntensitySource<'a> {
    Network(&'a NetworkParams),
    /// The true coded intensity, bypassing the network.
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    /// Against the method's ideal output.
    pub snr: SnrReport,
    /// After a least-squares global gain.
    pub snr_fit: SnrReport,
    pub condition: Option<f64>,
    /// Intensity estimate quality (network method).
    pub psnr_db: Option<f64>,
    /// Perturbation coefficient of `S_snap_true − S_snap_est` (network method).
    pub k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Scored(Scored),
    /// The scene was skipped; the text is the error code.
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub scene: usize,
    pub trial: usize,
    pub method: Method,
    pub outcome: TrialOutcome,
    /// Estimated spectra, kept only on request.
    pub spectra: Option<DMatrix<f64>>,
}

impl TrialRecord {
    pub fn scored(&self) -> Option<&Scored> {
        match &self.outcome {
            TrialOutcome::Scored(s) => Some(s),
            TrialOutcome::Skipped(_) => None,
        }
    }
}

/// Shared per-scene state.
struct SceneCtx {
    scene: SceneModel,
    code: Code,
    coded: CodedIntensity,
    snap: std::result::Result<SnapMatrix, Option<f64>>,
    clean: DispersedImage,
}

impl SceneCtx {
    fn new(cfg: &ExperimentConfig, s: usize) -> Result<Self> {
        let scene = cfg.scene(s)?;
        let code = cfg.code.build(cfg.order)?;
        let coded = apply_code(&code, scene.intensity())?;
        let snap = match normalize_to_snap_with(&coded, cfg.max_condition) {
            Ok(s) => Ok(s),
            Err(Error::SingularSnap(c)) => Err(Some(c)),
            Err(Error::AllZeroIntensity) => Err(None),
            Err(e) => return Err(e),
        };
        let clean = disperse(&coded, scene.spectra())?;
        Ok(Self {
            scene,
            code,
            coded,
            snap,
            clean,
        })
    }

    fn snap(&self) -> Result<SnapMatrix> {
        self.snap
            .clone()
            .map_err(|c| c.map_or(Error::AllZeroIntensity, Error::SingularSnap))
    }

    fn target(&self) -> DMatrix<f64> {
        self.scene.spectra() * self.coded.matrix().max()
    }
}

fn score(target: &DMatrix<f64>, estimate: &DMatrix<f64>, condition: Option<f64>) -> Result<Scored> {
    Ok(Scored {
        snr: snr_db(target, estimate)?,
        snr_fit: snr_db_scale_fit(target, estimate)?,
        condition,
        psnr_db: None,
        k: None,
    })
}

fn skip_on_singular(r: Result<Scored>) -> Result<TrialOutcome> {
    match r {
        Ok(s) => Ok(TrialOutcome::Scored(s)),
        Err(e @ (Error::SingularSnap(_) | Error::AllZeroIntensity)) => {
            Ok(TrialOutcome::Skipped(e.code().to_string()))
        }
        Err(e) => Err(e),
    }
}

fn single_path_measurement(
    cfg: &ExperimentConfig,
    ctx: &SceneCtx,
    s: usize,
    t: usize,
) -> DispersedImage {
    add_noise(
        &ctx.clean,
        &NoiseModel {
            kind: cfg.noise,
            seed: seeds::derive_path(cfg.seed, &[s as u64, t as u64, 0]),
        },
    )
}

fn run_method(
    cfg: &ExperimentConfig,
    ctx: &SceneCtx,
    g: &DispersedImage,
    s: usize,
    t: usize,
    method: Method,
    source: Option<IntensitySource<'_>>,
) -> Result<(TrialOutcome, Option<DMatrix<f64>>)> {
    let mut spectra = None;
    let outcome = match method {
        Method::SubHadamardExact => skip_on_singular(ctx.snap().and_then(|snap| {
            let r = reconstruct_subhadamard(g, &snap)?;
            let sc = score(&ctx.target(), &r.spectra, r.condition);
            spectra = Some(r.spectra);
            sc
        }))?,
        Method::SubHadamardNet => {
            let source = source
                .ok_or_else(|| Error::InvalidConfig("sub-hadamard-net needs a network".into()))?;
            let estimate = match source {
                IntensitySource::Network(p) if cfg.code_mask => infer_masked(p, g, &ctx.code)?,
                IntensitySource::Network(p) => infer(p, g)?,
                IntensitySource::Oracle => ctx.coded.matrix().clone(),
            };
            let peak = ctx.coded.matrix().max();
            let psnr = psnr_db(ctx.coded.matrix(), &estimate, peak)?;
            let est = CodedIntensity::from_matrix(estimate)?;
            skip_on_singular(
                normalize_to_snap_with(&est, cfg.max_condition).and_then(|snap| {
                    let r = reconstruct_subhadamard(g, &snap)?;
                    let mut sc = score(&ctx.target(), &r.spectra, r.condition)?;
                    sc.psnr_db = Some(psnr);
                    if let Ok(true_snap) = &ctx.snap {
                        sc.k =
                            decompose_k(true_snap.matrix(), &(true_snap.matrix() - snap.matrix()))
                                .ok()
                                .map(|d| d.k);
                    }
                    spectra = Some(r.spectra);
                    Ok(sc)
                }),
            )?
        }
        Method::SubHadamardDual => {
            let model = NoiseModel {
                kind: cfg.noise,
                seed: seeds::derive_path(cfg.seed, &[s as u64, t as u64, 2]),
            };
            let dual = split_dual_path(&ctx.scene, &ctx.code, &model, 0)?;
            let snap = match cfg.dual_intensity {
                DualIntensity::Exact => ctx.snap(),
                DualIntensity::Measured => {
                    CodedIntensity::from_matrix(dual.intensity.map(|v| v.max(0.0)))
                        .and_then(|m| normalize_to_snap_with(&m, cfg.max_condition))
                }
            };
            skip_on_singular(snap.and_then(|snap| {
                let r = reconstruct_subhadamard(&dual.dispersed, &snap)?;
                let sc = score(&(ctx.target() * 0.5), &r.spectra, r.condition);
                spectra = Some(r.spectra);
                sc
            }))?
        }
        Method::Slit => {
            let model = NoiseModel {
                kind: cfg.noise,
                seed: seeds::derive_path(cfg.seed, &[s as u64, t as u64, 3]),
            };
            let clean = measure_slit(
                &ctx.scene,
                &NoiseModel {
                    kind: cfg.noise.with_param(0.0),
                    seed: 0,
                },
            )?;
            let r = measure_slit(&ctx.scene, &model)?;
            let sc = score(&clean.spectra, &r.spectra, r.condition)?;
            spectra = Some(r.spectra);
            TrialOutcome::Scored(sc)
        }
        Method::HtsUniform => match &ctx.code {
            Code::Hadamard(smat) => {
                let r = reconstruct_hts_uniform(g, smat)?;
                let sc = score(&ctx.target(), &r.spectra, None)?;
                spectra = Some(r.spectra);
                TrialOutcome::Scored(sc)
            }
            _ => TrialOutcome::Skipped("invalid-config".into()),
        },
    };
    Ok((outcome, spectra))
}

fn run_grid(
    cfg: &ExperimentConfig,
    methods: &[Method],
    source: Option<IntensitySource<'_>>,
    keep_spectra: bool,
) -> Result<Vec<TrialRecord>> {
    cfg.validate_params()?;
    let per_scene = (0..cfg.scenes)
        .into_par_iter()
        .map(|s| -> Result<Vec<TrialRecord>> {
            let ctx = SceneCtx::new(cfg, s)?;
            let mut out = Vec::with_capacity(cfg.trials * methods.len());
            for t in 0..cfg.trials {
                let g = single_path_measurement(cfg, &ctx, s, t);
                for &method in methods {
                    let (outcome, spectra) = run_method(cfg, &ctx, &g, s, t, method, source)?;
                    out.push(TrialRecord {
                        scene: s,
                        trial: t,
                        method,
                        outcome,
                        spectra: spectra.filter(|_| keep_spectra),
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_scene.into_iter().flatten().collect())
}

/// Single-path experiment with an estimated intensity.
pub fn run_single_path_net(
    cfg: &ExperimentConfig,
    source: IntensitySource<'_>,
) -> Result<Vec<TrialRecord>> {
    run_grid(cfg, &[Method::SubHadamardNet], Some(source), false)
}

/// Beam-split counterpart: half the light to each arm.
pub fn run_dual_path(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    run_grid(cfg, &[Method::SubHadamardDual], None, false)
}

/// Per-method statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub snr: SnrStats,
    pub snr_fit: SnrStats,
    pub skipped: usize,
    pub mean_psnr_db: Option<f64>,
    pub mean_k: Option<f64>,
    pub mean_condition: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub seed: u64,
    pub scene_seed: u64,
    pub noise: NoiseKind,
    pub records: Vec<TrialRecord>,
    pub summaries: Vec<MethodSummary>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    (!v.is_empty()).then(|| mean_std(&v).0)
}

impl ExperimentReport {
    pub fn from_records(cfg: &ExperimentConfig, records: Vec<TrialRecord>) -> Self {
        let summaries = cfg
            .methods
            .iter()
            .map(|&method| {
                let mine: Vec<&TrialRecord> =
                    records.iter().filter(|r| r.method == method).collect();
                let scored: Vec<&Scored> = mine.iter().filter_map(|r| r.scored()).collect();
                MethodSummary {
                    method,
                    snr: SnrStats::from_reports(&scored.iter().map(|s| s.snr).collect::<Vec<_>>()),
                    snr_fit: SnrStats::from_reports(
                        &scored.iter().map(|s| s.snr_fit).collect::<Vec<_>>(),
                    ),
                    skipped: mine.len() - scored.len(),
                    mean_psnr_db: mean_of(scored.iter().filter_map(|s| s.psnr_db)),
                    mean_k: mean_of(scored.iter().filter_map(|s| s.k)),
                    mean_condition: mean_of(scored.iter().filter_map(|s| s.condition)),
                }
            })
            .collect();
        Self {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            scene_seed: cfg.scene_seed,
            noise: cfg.noise,
            records,
            summaries,
        }
    }

    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    /// Fraction of (scene, trial) pairs, scored by both, where `a` beats `b`.
    pub fn win_rate(&self, a: Method, b: Method) -> Option<f64> {
        let lookup = |m: Method, s: usize, t: usize| {
            self.records
                .iter()
                .find(|r| r.method == m && r.scene == s && r.trial == t)
                .and_then(|r| r.scored())
                .map(|x| x.snr.snr_db)
        };
        let mut wins = 0;
        let mut total = 0;
        for r in self.records.iter().filter(|r| r.method == a) {
            if let (Some(x), Some(y)) = (
                r.scored().map(|x| x.snr.snr_db),
                lookup(b, r.scene, r.trial),
            ) {
                total += 1;
                wins += usize::from(x > y);
            }
        }
        (total > 0).then(|| wins as f64 / total as f64)
    }

    pub fn mc_table(&self) -> McTable {
        let mut t = McTable::default();
        for s in &self.summaries {
            t.push(s.method.name(), self.noise, &s.snr);
        }
        t
    }

    /// `key=value` summary lines.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "none".into());
        writeln!(out, "config_hash={}", self.config_hash).unwrap();
        writeln!(out, "seed={}", self.seed).unwrap();
        writeln!(out, "scene_seed={}", self.scene_seed).unwrap();
        writeln!(out, "noise={}:{}", self.noise.name(), self.noise.param()).unwrap();
        for s in &self.summaries {
            let m = s.method.name();
            writeln!(out, "{m}.mean_snr_db={}", s.snr.mean_db).unwrap();
            writeln!(out, "{m}.std_db={}", s.snr.std_db).unwrap();
            writeln!(out, "{m}.mean_snr_fit_db={}", s.snr_fit.mean_db).unwrap();
            writeln!(out, "{m}.trials={}", s.snr.trials).unwrap();
            writeln!(out, "{m}.saturated={}", s.snr.saturated).unwrap();
            writeln!(out, "{m}.skipped={}", s.skipped).unwrap();
            writeln!(out, "{m}.mean_psnr_db={}", opt(s.mean_psnr_db)).unwrap();
            writeln!(out, "{m}.mean_k={}", opt(s.mean_k)).unwrap();
            writeln!(out, "{m}.mean_condition={}", opt(s.mean_condition)).unwrap();
        }
        out
    }

    /// Per-trial CSV with a leading `# config_hash=` line.
    pub fn records_csv(&self) -> String {
        let mut out = format!(
            "# config_hash={}\nscene,trial,method,snr_db,snr_fit_db,psnr_db,k,condition,skipped\n",
            self.config_hash
        );
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            match &r.outcome {
                TrialOutcome::Scored(s) => writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},",
                    r.scene,
                    r.trial,
                    r.method,
                    s.snr.snr_db,
                    s.snr_fit.snr_db,
                    opt(s.psnr_db),
                    opt(s.k),
                    opt(s.condition)
                ),
                TrialOutcome::Skipped(code) => {
                    writeln!(out, "{},{},{},,,,,,{code}", r.scene, r.trial, r.method)
                }
            }
            .unwrap();
        }
        out
    }
}

/// Every requested method on identical scenes and noise draws.
pub fn run_method_comparison(
    cfg: &ExperimentConfig,
    net: Option<&NetworkParams>,
) -> Result<ExperimentReport> {
    run_method_comparison_with(cfg, net.map(IntensitySource::Network), false)
}

/// As [`run_method_comparison`], with an explicit intensity source and
/// optionally keeping every estimated spectrum.
pub fn run_method_comparison_with(
    cfg: &ExperimentConfig,
    source: Option<IntensitySource<'_>>,
    keep_spectra: bool,
) -> Result<ExperimentReport> {
    if cfg.methods.contains(&Method::SubHadamardNet) && source.is_none() {
        return Err(Error::InvalidConfig(
            "sub-hadamard-net needs a network".into(),
        ));
    }
    let records = run_grid(cfg, &cfg.methods, source, keep_spectra)?;
    Ok(ExperimentReport::from_records(cfg, records))
}

/// Noisy measurements and coded-intensity labels for network training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSetSpec {
    pub count: usize,
    pub blobs: usize,
    pub intensity_floor: f64,
    pub noise: NoiseKind,
    pub seed: u64,
}

/// Scene `i` uses seed `derive(seed, i)` and detector noise
/// `derive_path(seed, [i, 1])`.
pub fn synth_training_set(
    code: &Code,
    arch: &ArchConfig,
    spec: &TrainingSetSpec,
) -> Result<Vec<Sample>> {
    spec.noise.validate()?;
    (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let scene = SceneSynth {
                order: code.order(),
                bands: arch.bands,
                blobs: spec.blobs,
                floor: spec.intensity_floor,
            }
            .generate(seeds::derive(spec.seed, i as u64))?;
            let coded = apply_code(code, scene.intensity())?;
            let g = add_noise(
                &disperse(&coded, scene.spectra())?,
                &NoiseModel {
                    kind: spec.noise,
                    seed: seeds::derive_path(spec.seed, &[i as u64, 1]),
                },
            );
            make_sample(arch, &g, coded.matrix())
        })
        .collect()
}

/// Everything needed to train one unmixing network for a fixed code.
///
/// Sub-seeds of `seed`: 0 training scenes, 1 validation scenes, 2 network
/// initialization, 3 minibatch order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPlan {
    pub arch: ArchConfig,
    pub code: CodeKind,
    pub order: usize,
    pub train_count: usize,
    pub val_count: usize,
    pub blobs: usize,
    pub intensity_floor: f64,
    pub noise: NoiseKind,
    /// Score only the pixels the code opens.
    pub code_mask: bool,
    /// Optimizer settings; its `seed` is replaced by sub-seed 3.
    pub train: TrainConfig,
    pub seed: u64,
}

impl TrainingPlan {
    pub fn new(arch: ArchConfig, order: usize, seed: u64) -> Self {
        Self {
            arch,
            code: CodeKind::Hadamard,
            order,
            train_count: 200,
            val_count: 40,
            blobs: 4,
            intensity_floor: 0.05,
            noise: NoiseKind::Read { sigma: 0.005 },
            code_mask: true,
            train: TrainConfig::default(),
            seed,
        }
    }

    pub fn train_seed(&self) -> u64 {
        seeds::derive(self.seed, 0)
    }

    pub fn val_seed(&self) -> u64 {
        seeds::derive(self.seed, 1)
    }

    fn set_spec(&self, count: usize, seed: u64) -> TrainingSetSpec {
        TrainingSetSpec {
            count,
            blobs: self.blobs,
            intensity_floor: self.intensity_floor,
            noise: self.noise,
            seed,
        }
    }

    /// Training and validation samples.
    pub fn datasets(&self) -> Result<(Vec<Sample>, Vec<Sample>)> {
        let code = self.code.build(self.order)?;
        Ok((
            synth_training_set(
                &code,
                &self.arch,
                &self.set_spec(self.train_count, self.train_seed()),
            )?,
            synth_training_set(
                &code,
                &self.arch,
                &self.set_spec(self.val_count, self.val_seed()),
            )?,
        ))
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let output_mask = if self.code_mask {
            Some(code_mask(&self.arch, &self.code.build(self.order)?)?)
        } else {
            None
        };
        Ok(TrainConfig {
            seed: seeds::derive(self.seed, 3),
            output_mask,
            ..self.train.clone()
        })
    }

    pub fn run(&self) -> Result<TrainOutcome> {
        self.arch.validate()?;
        if self.order > self.arch.width {
            return Err(Error::InvalidConfig(format!(
                "order {} exceeds network width {}",
                self.order, self.arch.width
            )));
        }
        let (train_set, val_set) = self.datasets()?;
        let init = build_network(&self.arch, seeds::derive(self.seed, 2))?;
        train(init, &train_set, &val_set, &self.train_config()?)
    }

    /// An experiment over the validation scenes.
    pub fn validation_experiment(
        &self,
        methods: Vec<Method>,
        trials: usize,
        seed: u64,
    ) -> ExperimentConfig {
        ExperimentConfig {
            order: self.order,
            bands: self.arch.bands,
            scenes: self.val_count,
            scene_seed: self.val_seed(),
            blobs: self.blobs,
            intensity_floor: self.intensity_floor,
            code: self.code,
            noise: self.noise,
            methods,
            network: None,
            trials,
            seed,
            code_mask: self.code_mask,
            ..ExperimentConfig::default()
        }
    }
}
