use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use snapspec_core::metrics::{
    mean_std, perturbed_recon_snr, psnr_db, spearman, McTable, SignalGain, SnrStats,
};
use snapspec_core::netunmix::train::curve_csv;
use snapspec_core::netunmix::{
    build_network, grad_check as run_grad_check, infer as net_infer, infer_masked, read_params,
    write_params, ArchConfig, GradCheckConfig, LossKind, NetworkParams, Sample, Tensor,
};
use snapspec_core::optics::{add_noise, apply_code, disperse};
use snapspec_core::pipeline::{
    run_method_comparison, CodeKind, ExperimentConfig, Method, TrainingPlan,
};
use snapspec_core::recon::{
    normalize_to_snap, reconstruct_hts_uniform, reconstruct_subhadamard, shift_embed,
};
use snapspec_core::scene::{assemble_cube, scene_from_cube, SceneSynth};
use snapspec_core::{
    build_smatrix, seeds, CodedIntensity, DispersedImage, Error, NoiseKind, NoiseModel, Result,
    SpectralCube,
};

use crate::files::{
    create_dir, cube_bytes, ensure_absent, load_cube, open, read_text, with_suffix, write_file,
    RunDescription,
};
use crate::{
    CompareArgs, GenSmatrixArgs, GradCheckArgs, InferArgs, ReconstructArgs, ReportArgs,
    SimulateArgs, SnrSweepArgs, SynthScenesArgs, TrainArgs,
};

fn code_kind(s: &str) -> Result<CodeKind> {
    match s {
        "hadamard" => Ok(CodeKind::Hadamard),
        "full-1" => Ok(CodeKind::FullOne),
        _ => Err(Error::InvalidValue(format!(
            "code {s:?} (hadamard | full-1)"
        ))),
    }
}

fn arch_for(preset: &str, bands: usize, width: usize) -> Result<ArchConfig> {
    let arch = match preset {
        "desk" => ArchConfig::desk(bands, width),
        "full" => ArchConfig::full(bands, width),
        "linear" => ArchConfig::linear_unmixing(bands, width),
        _ => {
            return Err(Error::InvalidValue(format!(
                "preset {preset:?} (desk | full | linear)"
            )))
        }
    };
    arch.validate()?;
    Ok(arch)
}

fn load_network(path: &Path) -> Result<NetworkParams> {
    read_params(open(path)?)
}

fn load_dispersed(path: &Path) -> Result<DispersedImage> {
    DispersedImage::from_cube(&load_cube(path)?)
}

fn matrix_cube(m: &nalgebra::DMatrix<f64>) -> SpectralCube {
    SpectralCube::from_image(m)
}

fn cube_matrix(cube: &SpectralCube) -> Result<nalgebra::DMatrix<f64>> {
    let (r, c, b) = cube.dims();
    if b != 1 {
        return Err(Error::DimensionMismatch(format!(
            "intensity cube must have 1 band, found {b}"
        )));
    }
    Ok(nalgebra::DMatrix::from_fn(r, c, |i, j| cube.get(i, j, 0)))
}

fn non_empty<T>(list: &[T], what: &str) -> Result<()> {
    if list.is_empty() {
        return Err(Error::InvalidValue(format!("{what} list is empty")));
    }
    Ok(())
}

pub fn gen_smatrix(a: &GenSmatrixArgs) -> Result<()> {
    let s = build_smatrix(a.order)?;
    ensure_absent(&a.out)?;
    let mut buf = Vec::new();
    s.write_csv(&mut buf)?;
    write_file(&a.out, &buf)?;
    let hash = RunDescription::new("gen-smatrix")
        .set("order", a.order)
        .hash();
    println!("config_hash={hash}");
    println!(
        "order={} construction={:?} -> {}",
        a.order,
        s.construction(),
        a.out.display()
    );
    Ok(())
}

pub fn synth_scenes(a: &SynthScenesArgs) -> Result<()> {
    let synth = SceneSynth {
        order: a.order,
        bands: a.bands,
        blobs: a.blobs,
        floor: a.floor,
    };
    if a.count == 0 {
        return Err(Error::InvalidValue("count must be >= 1".into()));
    }
    let cubes = (0..a.count)
        .map(|i| assemble_cube(&synth.generate(seeds::derive(a.seed, i as u64))?))
        .collect::<Result<Vec<_>>>()?;
    let hash = RunDescription::new("synth-scenes")
        .set("order", a.order)
        .set("bands", a.bands)
        .set("count", a.count)
        .set("blobs", a.blobs)
        .set("floor", a.floor)
        .set("seed", a.seed)
        .set("f64", a.f64)
        .hash();
    create_dir(&a.out)?;
    let mut manifest = format!("config_hash={hash}\nseed={}\ncount={}\n", a.seed, a.count);
    for (i, cube) in cubes.iter().enumerate() {
        let name = format!("scene_{i:04}.hcube");
        write_file(&a.out.join(&name), &cube_bytes(cube, a.f64)?)?;
        writeln!(manifest, "{name}={}", seeds::derive(a.seed, i as u64)).unwrap();
    }
    write_file(&a.out.join("manifest.txt"), manifest.as_bytes())?;
    println!("config_hash={hash}");
    println!("wrote {} scenes to {}", a.count, a.out.display());
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let scene = scene_from_cube(&load_cube(&a.scene)?)?;
    let code = code_kind(&a.code)?.build(scene.order())?;
    let model = NoiseModel::new(NoiseKind::parse(&a.noise)?, a.seed)?;
    let sidecar_path = with_suffix(&a.out, ".noise");
    ensure_absent(&a.out)?;
    ensure_absent(&sidecar_path)?;
    if let Some(p) = &a.intensity_out {
        ensure_absent(p)?;
    }
    let hash = RunDescription::new("simulate")
        .input("scene", &a.scene)?
        .set("code", &a.code)
        .set("noise", model.kind)
        .set("seed", a.seed)
        .set("f64", a.f64)
        .hash();
    let coded = apply_code(&code, scene.intensity())?;
    let g = add_noise(&disperse(&coded, scene.spectra())?, &model);
    write_file(&a.out, &cube_bytes(&g.to_cube(), a.f64)?)?;
    write_file(
        &sidecar_path,
        format!("config_hash={hash}\n{}", model.to_sidecar()).as_bytes(),
    )?;
    if let Some(p) = &a.intensity_out {
        write_file(p, &cube_bytes(&matrix_cube(coded.matrix()), a.f64)?)?;
    }
    println!("config_hash={hash}");
    println!(
        "dispersed {}x{} (bands {}) -> {}",
        g.rows(),
        g.width(),
        g.bands(),
        a.out.display()
    );
    Ok(())
}

pub fn train(a: &TrainArgs, deterministic: bool) -> Result<()> {
    let width = a.width.unwrap_or_else(|| (a.order + 1).next_power_of_two());
    let arch = arch_for(&a.preset, a.bands, width)?;
    let loss = LossKind::parse(&a.loss)?;
    let mut plan = TrainingPlan::new(arch, a.order, a.seed);
    plan.code = code_kind(&a.code)?;
    plan.train_count = a.train_count;
    plan.val_count = a.val_count;
    plan.blobs = a.blobs;
    plan.intensity_floor = a.floor;
    plan.noise = NoiseKind::parse(&a.noise)?;
    plan.code_mask = !a.no_code_mask;
    plan.train.epochs = a.epochs;
    plan.train.batch_size = a.batch;
    plan.train.lr = a.lr;
    plan.train.loss = loss;
    plan.train.deterministic = deterministic;
    plan.train.checkpoint_every = a.checkpoint_every;
    plan.train_config()?.validate()?;
    let hash = RunDescription::new("train")
        .set("order", a.order)
        .set("bands", a.bands)
        .set("width", width)
        .set("preset", &a.preset)
        .set("code", &a.code)
        .set("train_count", a.train_count)
        .set("val_count", a.val_count)
        .set("blobs", a.blobs)
        .set("floor", a.floor)
        .set("noise", plan.noise)
        .set("epochs", a.epochs)
        .set("batch", a.batch)
        .set("lr", a.lr)
        .set("loss", loss.name())
        .set("checkpoint_every", a.checkpoint_every)
        .set("code_mask", plan.code_mask)
        .set("seed", a.seed)
        .hash();
    ensure_absent(&a.out)?;
    let outcome = plan.run()?;

    create_dir(&a.out)?;
    let mut net = Vec::new();
    write_params(&outcome.params, &mut net)?;
    write_file(&a.out.join("network.hnet"), &net)?;
    for (epoch, p) in &outcome.checkpoints {
        let mut buf = Vec::new();
        write_params(p, &mut buf)?;
        write_file(&a.out.join(format!("checkpoint_{epoch:04}.hnet")), &buf)?;
    }
    let curve = format!("# config_hash={hash}\n{}", curve_csv(&outcome.curve));
    write_file(&a.out.join("curve.csv"), curve.as_bytes())?;
    let last = outcome.curve.last().expect("epochs >= 1");
    let summary = format!(
        "config_hash={hash}\nseed={}\ntrain_scene_seed={}\nval_scene_seed={}\nparams={}\ninitial_loss={}\nfinal_train_loss={}\nfinal_val_loss={}\n",
        a.seed,
        plan.train_seed(),
        plan.val_seed(),
        outcome.params.param_count(),
        outcome.initial_loss,
        last.train_loss,
        last.val_loss.map(|v| v.to_string()).unwrap_or_default()
    );
    write_file(&a.out.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}

pub fn infer(a: &InferArgs) -> Result<()> {
    let params = load_network(&a.network)?;
    let g = load_dispersed(&a.input)?;
    let mask = a
        .mask_code
        .as_deref()
        .map(|c| code_kind(c).and_then(|k| k.build(g.rows())))
        .transpose()?;
    ensure_absent(&a.out)?;
    let hash = RunDescription::new("infer")
        .input("network", &a.network)?
        .input("input", &a.input)?
        .set("mask_code", a.mask_code.as_deref().unwrap_or("none"))
        .set("f64", a.f64)
        .hash();
    let est = match &mask {
        Some(code) => infer_masked(&params, &g, code)?,
        None => net_infer(&params, &g)?,
    };
    write_file(&a.out, &cube_bytes(&matrix_cube(&est), a.f64)?)?;
    println!("config_hash={hash}");
    println!(
        "intensity {}x{} max {} -> {}",
        est.nrows(),
        est.ncols(),
        est.max(),
        a.out.display()
    );
    Ok(())
}

pub fn reconstruct(a: &ReconstructArgs) -> Result<()> {
    let g = load_dispersed(&a.input)?;
    ensure_absent(&a.out)?;
    let mut desc = RunDescription::new("reconstruct")
        .input("input", &a.input)?
        .set("method", &a.method);
    let result = match a.method.as_str() {
        "hts-uniform" => reconstruct_hts_uniform(&g, &build_smatrix(g.rows())?)?,
        "sub-hadamard" => {
            let intensity = match (&a.intensity, &a.network) {
                (Some(p), None) => {
                    desc = desc.input("intensity", p)?;
                    cube_matrix(&load_cube(p)?)?
                }
                (None, Some(p)) => {
                    desc = desc
                        .input("network", p)?
                        .set("mask_code", a.mask_code.as_deref().unwrap_or("none"));
                    let params = load_network(p)?;
                    match a.mask_code.as_deref() {
                        Some(c) => infer_masked(&params, &g, &code_kind(c)?.build(g.rows())?)?,
                        None => net_infer(&params, &g)?,
                    }
                }
                _ => {
                    return Err(Error::InvalidValue(
                        "sub-hadamard needs --intensity or --network".into(),
                    ))
                }
            };
            reconstruct_subhadamard(
                &g,
                &normalize_to_snap(&CodedIntensity::from_matrix(intensity)?)?,
            )?
        }
        other => {
            return Err(Error::InvalidValue(format!(
                "method {other:?} (sub-hadamard | hts-uniform)"
            )))
        }
    };
    let hash = desc.hash();
    let mut buf = Vec::new();
    result.write_csv(&mut buf, &[("config_hash", hash.clone())])?;
    write_file(&a.out, &buf)?;
    println!("config_hash={hash}");
    println!(
        "{} spectra {}x{} scale {} off_support_energy {:e} -> {}",
        result.method,
        result.spectra.nrows(),
        result.spectra.ncols(),
        result.scale,
        result.off_support_energy,
        a.out.display()
    );
    Ok(())
}

pub fn compare(a: &CompareArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::parse(&read_text(&a.config)?)?;
    cfg.seed = a.seed;
    if let Some(p) = &cfg.network {
        if p.is_relative() {
            cfg.network = Some(a.config.parent().unwrap_or(Path::new(".")).join(p));
        }
    }
    cfg.validate()?;
    let net = cfg.network.as_deref().map(load_network).transpose()?;
    ensure_absent(&a.out)?;
    let report = run_method_comparison(&cfg, net.as_ref())?;
    let hash = report.config_hash.clone();
    create_dir(&a.out)?;
    write_file(&a.out.join("summary.txt"), report.summary_text().as_bytes())?;
    write_file(&a.out.join("trials.csv"), report.records_csv().as_bytes())?;
    let mut table = format!("# config_hash={hash}\n").into_bytes();
    report.mc_table().write_csv(&mut table)?;
    write_file(&a.out.join("mc_table.csv"), &table)?;
    write_file(
        &a.out.join("config.txt"),
        format!("# config_hash={hash}\n{}", cfg.to_text()).as_bytes(),
    )?;
    println!("config_hash={hash}");
    for s in &report.summaries {
        println!(
            "{:<20} mean {:>9.4} dB  std {:>8.4}  fit {:>9.4} dB  trials {}  skipped {}",
            s.method.name(),
            s.snr.mean_db,
            s.snr.std_db,
            s.snr_fit.mean_db,
            s.snr.trials,
            s.skipped
        );
    }
    Ok(())
}

/// Trailing digits of a file stem, e.g. `checkpoint_0030.hnet` -> 30.
fn checkpoint_x(path: &Path, index: usize) -> f64 {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    let digits: String = stem
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse::<f64>().unwrap_or((index + 1) as f64)
}

struct SweepRow {
    x: String,
    psnr_db: f64,
    stats: SnrStats,
}

pub fn snr_sweep(a: &SnrSweepArgs) -> Result<()> {
    let noise = NoiseKind::parse(&a.noise)?;
    let mut desc = RunDescription::new("snr-sweep")
        .set("order", a.order)
        .set("bands", a.bands)
        .set("scenes", a.scenes)
        .set("blobs", a.blobs)
        .set("floor", a.floor)
        .set("trials", a.trials)
        .set("noise", noise)
        .set("seed", a.seed);
    let base = ExperimentConfig {
        order: a.order,
        bands: a.bands,
        scenes: a.scenes,
        scene_seed: seeds::derive(a.seed, 0),
        blobs: a.blobs,
        intensity_floor: a.floor,
        noise,
        trials: a.trials,
        seed: seeds::derive(a.seed, 1),
        ..ExperimentConfig::default()
    };
    let (kind, rows) = if let Some(ks) = &a.k {
        non_empty(ks, "k")?;
        if let Some(k) = ks.iter().find(|k| !(0.0..1.0).contains(*k)) {
            return Err(Error::InvalidValue(format!("k = {k} must lie in [0, 1)")));
        }
        desc = desc.set(
            "k",
            ks.iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        base.validate_params()?;
        let scene = base.scene(0)?;
        let coded = apply_code(&base.code.build(a.order)?, scene.intensity())?;
        let snap = normalize_to_snap(&coded)?;
        let f = shift_embed(&(scene.spectra() * snap.scale()));
        let rows = ks
            .iter()
            .map(|&k| {
                let s1 = snap.matrix() * k;
                let stats = perturbed_recon_snr(
                    snap.matrix(),
                    &s1,
                    f.matrix(),
                    noise,
                    SignalGain::Unit,
                    a.trials,
                    base.seed,
                )?;
                let psnr = psnr_db(snap.matrix(), &(snap.matrix() - &s1), 1.0)?;
                Ok(SweepRow {
                    x: k.to_string(),
                    psnr_db: psnr,
                    stats,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ("k", rows)
    } else if let Some(list) = &a.noise_list {
        non_empty(list, "noise")?;
        let kinds = list
            .iter()
            .map(|s| NoiseKind::parse(s))
            .collect::<Result<Vec<_>>>()?;
        desc = desc.set("noise_list", list.join(","));
        let rows = kinds
            .iter()
            .map(|&nk| {
                let cfg = ExperimentConfig {
                    noise: nk,
                    methods: vec![Method::SubHadamardExact],
                    ..base.clone()
                };
                let rep = run_method_comparison(&cfg, None)?;
                let s = rep.summary(Method::SubHadamardExact).expect("requested");
                Ok(SweepRow {
                    x: nk.to_string(),
                    psnr_db: f64::INFINITY,
                    stats: s.snr,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ("noise", rows)
    } else if let Some(paths) = &a.checkpoints {
        non_empty(paths, "checkpoint")?;
        let nets = paths
            .iter()
            .map(|p| load_network(p))
            .collect::<Result<Vec<_>>>()?;
        for p in paths {
            desc = desc.input("checkpoint", p)?;
        }
        let cfg = ExperimentConfig {
            methods: vec![Method::SubHadamardNet],
            ..base.clone()
        };
        cfg.validate_params()?;
        let rows = nets
            .iter()
            .zip(paths)
            .enumerate()
            .map(|(i, (net, p))| {
                let rep = run_method_comparison(&cfg, Some(net))?;
                let s = rep.summary(Method::SubHadamardNet).expect("requested");
                Ok(SweepRow {
                    x: checkpoint_x(p, i).to_string(),
                    psnr_db: s.mean_psnr_db.unwrap_or(f64::NAN),
                    stats: s.snr,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ("checkpoint", rows)
    } else {
        return Err(Error::InvalidValue(
            "one of --k, --noise-list or --checkpoints is required".into(),
        ));
    };
    ensure_absent(&a.out)?;
    let hash = desc.hash();
    let mut csv = format!("# config_hash={hash}\n{kind},psnr_db,snr_mean_db,snr_std_db\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{}",
            r.x, r.psnr_db, r.stats.mean_db, r.stats.std_db
        )
        .unwrap();
    }
    let rho = spearman(
        &rows.iter().map(|r| r.psnr_db).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.stats.mean_db).collect::<Vec<_>>(),
    );
    if kind == "checkpoint" {
        writeln!(
            csv,
            "# spearman_psnr_snr={}",
            rho.map(|r| r.to_string()).unwrap_or_else(|| "none".into())
        )
        .unwrap();
    }
    write_file(&a.out, csv.as_bytes())?;
    println!("config_hash={hash}");
    print!(
        "{}",
        csv.lines()
            .skip(1)
            .map(|l| format!("{l}\n"))
            .collect::<String>()
    );
    Ok(())
}

pub fn grad_check(a: &GradCheckArgs) -> Result<()> {
    let loss = LossKind::parse(&a.loss)?;
    let mut desc = RunDescription::new("grad-check")
        .set("samples", a.samples)
        .set("eps", a.eps)
        .set("loss", loss.name())
        .set("seed", a.seed);
    let params = match &a.network {
        Some(p) => {
            desc = desc.input("network", p)?;
            load_network(p)?
        }
        None => {
            desc = desc
                .set("preset", &a.preset)
                .set("bands", a.bands)
                .set("width", a.width);
            build_network(
                &arch_for(&a.preset, a.bands, a.width)?,
                seeds::derive(a.seed, 0),
            )?
        }
    };
    ensure_absent(&a.out)?;
    let (c, h, w) = params.arch.input_dims();
    let mut rng = seeds::rng(seeds::derive(a.seed, 1));
    let sample = Sample {
        input: Tensor::new(
            c,
            h,
            w,
            (0..c * h * w).map(|_| rng.random::<f64>()).collect(),
        )?,
        label: Tensor::new(1, h, h, (0..h * h).map(|_| rng.random::<f64>()).collect())?,
    };
    let cfg = GradCheckConfig {
        eps: a.eps,
        samples: a.samples,
        loss,
        seed: seeds::derive(a.seed, 2),
    };
    let report = run_grad_check(&params, &sample, &cfg)?;
    let hash = desc.hash();
    let mut csv = format!("# config_hash={hash}\nblock,index,analytic,numeric,rel_error\n");
    for p in &report.checks {
        writeln!(
            csv,
            "{},{},{},{},{}",
            p.block, p.index, p.analytic, p.numeric, p.rel_error
        )
        .unwrap();
    }
    write_file(&a.out, csv.as_bytes())?;
    println!("config_hash={hash}");
    println!("checked={}", report.checks.len());
    println!("skipped_kinks={}", report.skipped_kinks);
    println!("max_rel_error={:e}", report.max_rel_error);
    Ok(())
}

fn summary_value(summary: &BTreeMap<String, String>, key: &str) -> Result<String> {
    summary
        .get(key)
        .cloned()
        .ok_or_else(|| Error::MalformedHeader(format!("summary.txt lacks {key}")))
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let summary: BTreeMap<String, String> = read_text(&a.input.join("summary.txt"))?
        .lines()
        .filter_map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect();
    let hash = summary_value(&summary, "config_hash")?;
    let noise = NoiseKind::parse(&summary_value(&summary, "noise")?)?;
    let trials = read_text(&a.input.join("trials.csv"))?;
    // (scene, trial) -> method -> snr
    let mut by_draw: BTreeMap<(usize, usize), BTreeMap<Method, f64>> = BTreeMap::new();
    let mut by_method: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    let mut skipped: BTreeMap<Method, usize> = BTreeMap::new();
    let bad = |l: &str| Error::InvalidValue(format!("trials.csv row {l:?}"));
    for line in trials.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad(line));
        }
        let method = Method::parse(f[2])?;
        let key = (
            f[0].parse().map_err(|_| bad(line))?,
            f[1].parse().map_err(|_| bad(line))?,
        );
        if !f[8].is_empty() {
            *skipped.entry(method).or_default() += 1;
            by_method.entry(method).or_default();
            continue;
        }
        let snr: f64 = f[3].parse().map_err(|_| bad(line))?;
        by_method.entry(method).or_default().push(snr);
        by_draw.entry(key).or_default().insert(method, snr);
    }
    non_empty(&by_method.keys().collect::<Vec<_>>(), "method")?;
    ensure_absent(&a.out)?;
    let mut table = McTable::default();
    let mut out = format!("# config_hash={hash}\nmethod,mean_snr_db,std_db,trials,skipped\n");
    for (m, v) in &by_method {
        let finite: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
        let (mean, std) = if finite.len() == v.len() && !v.is_empty() {
            mean_std(v)
        } else {
            (f64::INFINITY, 0.0)
        };
        let mean = if v.is_empty() { f64::NAN } else { mean };
        writeln!(
            out,
            "{},{},{},{},{}",
            m.name(),
            mean,
            std,
            v.len(),
            skipped.get(m).unwrap_or(&0)
        )
        .unwrap();
        table.rows.push(snapspec_core::metrics::McRow {
            method: m.name().into(),
            noise_kind: noise.name().into(),
            param: noise.param(),
            mean_snr_db: mean,
            std_db: std,
            trials: v.len(),
        });
    }
    out.push_str("# pairwise win rates: row beats column\nwinner,loser,wins,pairs\n");
    let methods: Vec<Method> = by_method.keys().copied().collect();
    for &x in &methods {
        for &y in methods.iter().filter(|&&y| y != x) {
            let pairs: Vec<(f64, f64)> = by_draw
                .values()
                .filter_map(|d| Some((*d.get(&x)?, *d.get(&y)?)))
                .collect();
            let wins = pairs.iter().filter(|(p, q)| p > q).count();
            writeln!(out, "{},{},{},{}", x.name(), y.name(), wins, pairs.len()).unwrap();
        }
    }
    write_file(&a.out, out.as_bytes())?;
    println!("config_hash={hash}");
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    print!("{}", String::from_utf8_lossy(&buf));
    Ok(())
}
