//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any failed.
//!
//! `cargo test -p snapspec-cli --test acceptance` runs all of them;
//! `ACCEPTANCE_ONLY=3,7` runs a subset.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;

use snapspec_core::metrics::{
    dual_vs_single_path_gap, eval_bound, multiplex_gain, multiplex_gain_closed_form,
    perturbed_recon_snr, psnr_db, spearman, DualIntensity, SignalGain,
};
use snapspec_core::netunmix::loss::{batch_loss, hard_threshold};
use snapspec_core::netunmix::{
    build_network, grad_check, naive_dedisperse, ArchConfig, GradCheckConfig, LossKind,
    NetworkParams, Sample, Tensor, TrainConfig,
};
use snapspec_core::optics::{apply_code, disperse};
use snapspec_core::pipeline::{run_method_comparison_with, IntensitySource, Method, TrainingPlan};
use snapspec_core::recon::{normalize_to_snap, reconstruct_subhadamard, shift_embed};
use snapspec_core::scene::synth_random_scene;
use snapspec_core::{build_smatrix, seeds, Code, NoiseKind};

const ORDERS: [usize; 7] = [3, 7, 11, 15, 19, 23, 31];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Verdict;

fn main() -> ExitCode {
    // libtest flags such as --nocapture are accepted and ignored.
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [(usize, &str, Check); 11] = [
        (1, "S-matrix suite", c1_smatrix),
        (2, "forward-model oracle", c2_forward),
        (3, "noiseless round trip", c3_round_trip),
        (4, "multiplex advantage", c4_multiplex),
        (5, "method ordering", c5_ordering),
        (6, "dual-path penalty", c6_dual_path),
        (7, "perturbation law", c7_perturbation),
        (8, "gradient verification", c8_gradients),
        (9, "hard-mining loss", c9_hard_mining),
        (10, "end-to-end learning", c10_learning),
        (11, "CLI reproducibility", c11_reproducibility),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {id:>2} {name}: {} ({secs:.1} s) {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn c1_smatrix() -> Verdict {
    let mut worst: f64 = 0.0;
    for n in ORDERS {
        let s = build_smatrix(n).expect("supported order");
        if let Err(e) = s.check_invariants() {
            return verdict(false, format!("n={n}: {e}"));
        }
        let prod = s.to_matrix() * s.inverse().matrix();
        worst = worst.max((prod - DMatrix::identity(n, n)).amax());
    }
    verdict(worst <= 1e-12, format!("max |S·S⁻¹ − I| = {worst:.2e}"))
}

/// Per-pixel shift-and-add, written independently of the library.
fn shift_and_add(m: &DMatrix<f64>, phi: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, bands) = (m.nrows(), phi.ncols());
    let mut g = DMatrix::zeros(n, n + bands - 1);
    for i in 0..n {
        for j in 0..n {
            for l in 0..bands {
                g[(i, j + l)] += m[(i, j)] * phi[(j, l)];
            }
        }
    }
    g
}

fn c2_forward() -> Verdict {
    let mut rng = seeds::rng(2);
    let mut worst: f64 = 0.0;
    for k in 0..100u64 {
        let n = ORDERS[rng.random_range(0..ORDERS.len())];
        let bands = rng.random_range(2..=16);
        let scene = synth_random_scene(n, bands, 3, k).unwrap();
        let coded = apply_code(
            &Code::Hadamard(build_smatrix(n).unwrap()),
            scene.intensity(),
        )
        .unwrap();
        let g = disperse(&coded, scene.spectra()).unwrap();
        if *g.data() != shift_and_add(coded.matrix(), scene.spectra()) {
            return verdict(
                false,
                format!("scene {k} (n={n}, m={bands}) differs from shift-and-add"),
            );
        }
        let product = coded.matrix() * shift_embed(scene.spectra()).matrix();
        worst = worst.max((product - g.data()).amax());
    }
    verdict(
        worst <= 1e-12,
        format!("exact vs shift-and-add; max |M·F − g| = {worst:.2e}"),
    )
}

fn c3_round_trip() -> Verdict {
    let mut rng = seeds::rng(3);
    let mut worst: f64 = 0.0;
    for k in 0..100u64 {
        let n = ORDERS[rng.random_range(0..ORDERS.len())];
        let bands = rng.random_range(2..=16);
        let scene = synth_random_scene(n, bands, 3, 100 + k).unwrap();
        let coded = apply_code(
            &Code::Hadamard(build_smatrix(n).unwrap()),
            scene.intensity(),
        )
        .unwrap();
        let g = disperse(&coded, scene.spectra()).unwrap();
        let r = reconstruct_subhadamard(&g, &normalize_to_snap(&coded).unwrap()).unwrap();
        let target = scene.spectra() * coded.matrix().max();
        worst = worst.max((&r.spectra - &target).norm() / target.norm());
    }
    verdict(worst <= 1e-9, format!("max relative error {worst:.2e}"))
}

fn c4_multiplex() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for n in [7, 31] {
        let cmp = multiplex_gain(n, 8, 0.01, 2000, 40 + n as u64).unwrap();
        let gain = cmp.gain.db().unwrap_or(f64::NAN);
        let expect = multiplex_gain_closed_form(n);
        pass &= (gain - expect).abs() <= 0.5;
        parts.push(format!("n={n}: {gain:.3} dB (closed form {expect:.3})"));
    }
    verdict(pass, parts.join("; "))
}

/// Dimmest pixel relative to the brightest in the nonuniform scenes of
/// criteria 5 and 10. Much darker floors leave S_snap badly conditioned.
const NONUNIFORM_FLOOR: f64 = 0.3;

fn c5_ordering() -> Verdict {
    let cfg = snapspec_core::pipeline::ExperimentConfig {
        order: 31,
        bands: 8,
        scenes: 200,
        scene_seed: 5,
        intensity_floor: NONUNIFORM_FLOOR,
        methods: vec![Method::SubHadamardExact, Method::Slit, Method::HtsUniform],
        noise: NoiseKind::Read { sigma: 0.01 },
        trials: 1,
        seed: 55,
        ..Default::default()
    };
    let rep = run_method_comparison_with(&cfg, None, false).unwrap();
    let snr = |m: Method, s: usize| {
        rep.records
            .iter()
            .find(|r| r.method == m && r.scene == s)
            .and_then(|r| r.scored())
            .map(|x| x.snr.snr_db)
    };
    let ordered = (0..cfg.scenes)
        .filter(|&s| {
            let (e, l, h) = (
                snr(Method::SubHadamardExact, s),
                snr(Method::Slit, s),
                snr(Method::HtsUniform, s),
            );
            matches!((e, l, h), (Some(e), Some(l), Some(h)) if e > l && l > h)
        })
        .count();
    let frac = ordered as f64 / cfg.scenes as f64;
    let mean = |m| rep.summary(m).map(|s| s.snr.mean_db).unwrap_or(f64::NAN);
    verdict(
        frac >= 0.95,
        format!(
            "exact > slit > hts-uniform in {:.1} % (means {:.2} / {:.2} / {:.2} dB)",
            100.0 * frac,
            mean(Method::SubHadamardExact),
            mean(Method::Slit),
            mean(Method::HtsUniform)
        ),
    )
}

fn c6_dual_path() -> Verdict {
    let scene = synth_random_scene(15, 8, 3, 6).unwrap();
    let code = Code::Hadamard(build_smatrix(15).unwrap());
    let shot = dual_vs_single_path_gap(
        &scene,
        &code,
        NoiseKind::Shot { alpha: 1e-4 },
        DualIntensity::Exact,
        2000,
        61,
    )
    .unwrap()
    .gap
    .db()
    .unwrap_or(f64::NAN);
    let read = dual_vs_single_path_gap(
        &scene,
        &code,
        NoiseKind::Read { sigma: 0.01 },
        DualIntensity::Exact,
        2000,
        62,
    )
    .unwrap()
    .gap
    .db()
    .unwrap_or(f64::NAN);
    let pass = (shot - 3.0103).abs() <= 0.3 && (read - 6.0206).abs() <= 0.3;
    verdict(
        pass,
        format!("shot {shot:.3} dB (3.01), read {read:.3} dB (6.02)"),
    )
}

fn c7_perturbation() -> Verdict {
    let scene = synth_random_scene(31, 8, 4, 7).unwrap();
    let coded = apply_code(
        &Code::Hadamard(build_smatrix(31).unwrap()),
        scene.intensity(),
    )
    .unwrap();
    let snap = normalize_to_snap(&coded).unwrap();
    let s = snap.matrix();
    let f = shift_embed(&(scene.spectra() * snap.scale()));
    let noise = NoiseKind::Read { sigma: 0.01 };
    let snr = |k: f64| {
        perturbed_recon_snr(s, &(s * k), f.matrix(), noise, SignalGain::Unit, 500, 71)
            .unwrap()
            .mean_db
    };
    let base = snr(0.0);
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [0.1, 0.3, 0.5] {
        let drop = snr(k) - base;
        let expect = 20.0 * (1.0 - k).log10();
        pass &= (drop - expect).abs() <= 0.2;
        let mut rng = seeds::rng(72);
        let draws: Vec<DMatrix<f64>> = (0..200)
            .map(|_| {
                noise.sample(
                    &DMatrix::zeros(f.matrix().nrows(), f.matrix().ncols()),
                    rng.random(),
                )
            })
            .collect();
        let b = eval_bound(s, &(s * k), f.matrix(), &draws).unwrap();
        parts.push(format!(
            "k={k}: {drop:.3} dB (expect {expect:.3}), bound violations {:.0} % / doubled {:.0} %",
            100.0 * b.violation_rate,
            100.0 * b.violation_rate_doubled
        ));
    }
    verdict(pass, parts.join("; "))
}

fn random_sample(arch: &ArchConfig, seed: u64) -> Sample {
    let (c, h, w) = arch.input_dims();
    let mut rng = seeds::rng(seed);
    Sample {
        input: Tensor::new(
            c,
            h,
            w,
            (0..c * h * w).map(|_| rng.random::<f64>()).collect(),
        )
        .unwrap(),
        label: Tensor::new(1, h, h, (0..h * h).map(|_| rng.random::<f64>()).collect()).unwrap(),
    }
}

fn c8_gradients() -> Verdict {
    let desk = ArchConfig::desk(8, 32);
    let net = build_network(&desk, 81).unwrap();
    let full = grad_check(
        &net,
        &random_sample(&desk, 82),
        &GradCheckConfig {
            samples: 200,
            seed: 83,
            ..Default::default()
        },
    )
    .unwrap();
    let linear_arch = ArchConfig::linear_unmixing(8, 32);
    let linear = build_network(&linear_arch, 84).unwrap();
    let lin = grad_check(
        &linear,
        &random_sample(&linear_arch, 85),
        &GradCheckConfig {
            samples: 200,
            seed: 86,
            ..Default::default()
        },
    )
    .unwrap();
    let pass = full.checks.len() >= 200 && full.max_rel_error <= 1e-3 && lin.max_rel_error <= 1e-6;
    verdict(
        pass,
        format!(
            "desk: {} params, max rel {:.2e} ({} kink skips); linear: max rel {:.2e}",
            full.checks.len(),
            full.max_rel_error,
            full.skipped_kinks,
            lin.max_rel_error
        ),
    )
}

fn random_batch(rng: &mut impl Rng, batch: usize, h: usize, w: usize) -> Vec<Tensor> {
    (0..batch)
        .map(|_| {
            Tensor::new(
                1,
                h,
                w,
                (0..h * w)
                    .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                    .collect(),
            )
            .unwrap()
        })
        .collect()
}

fn loss_value(kind: LossKind, preds: &[Tensor], labels: &[Tensor]) -> f64 {
    batch_loss(kind, preds, labels).unwrap().value
}

fn c9_hard_mining() -> Verdict {
    let mut rng = seeds::rng(9);
    let mut worst: f64 = 0.0;
    let mut below_mse = 0;
    for _ in 0..1000 {
        let batch = rng.random_range(1..=4);
        let (h, w) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let preds = random_batch(&mut rng, batch, h, w);
        let labels = random_batch(&mut rng, batch, h, w);
        // Oracle: sort descending, average the top ceil(N/2) squared errors.
        let mut d: Vec<f64> = preds
            .iter()
            .zip(&labels)
            .flat_map(|(p, l)| {
                p.data()
                    .iter()
                    .zip(l.data())
                    .map(|(a, b)| (a - b).powi(2))
                    .collect::<Vec<_>>()
            })
            .collect();
        d.sort_by(|a, b| b.total_cmp(a));
        let top = d.len().div_ceil(2);
        let oracle = d[..top].iter().sum::<f64>() / top as f64;
        let hm = loss_value(LossKind::HardMining, &preds, &labels);
        let mse = loss_value(LossKind::Mse, &preds, &labels);
        worst = worst.max((hm - oracle).abs() / oracle.max(1e-300));
        below_mse += usize::from(hm < mse);
    }
    let t = hard_threshold(&[1.0, 2.0, 3.0, 4.0]);
    let pred = Tensor::new(1, 1, 4, vec![1.0, 2f64.sqrt(), 3f64.sqrt(), 2.0]).unwrap();
    let zero = Tensor::zeros(1, 1, 4);
    let example = loss_value(LossKind::HardMining, &[pred], &[zero]);
    let pass = worst <= 1e-12 && below_mse == 0 && (example - 3.5).abs() <= 1e-12 && t == 3.0;
    verdict(
        pass,
        format!("max rel vs oracle {worst:.1e}, batches below MSE {below_mse}, D=[1,2,3,4] -> {example}"),
    )
}

/// Desk-scale training used by criterion 10.
const C10_EPOCHS: usize = 20;
const C10_CHECKPOINT_EVERY: usize = 4;

fn c10_learning() -> Verdict {
    let mut plan = TrainingPlan::new(ArchConfig::desk(8, 32), 31, 10);
    plan.intensity_floor = NONUNIFORM_FLOOR;
    plan.train = TrainConfig {
        epochs: C10_EPOCHS,
        checkpoint_every: C10_CHECKPOINT_EVERY,
        ..TrainConfig::default()
    };
    let outcome = match plan.run() {
        Ok(o) => o,
        Err(e) => return verdict(false, format!("training failed: {e}")),
    };
    let code = plan.code.build(plan.order).unwrap();
    let exp = plan.validation_experiment(vec![Method::SubHadamardNet, Method::HtsUniform], 1, 101);

    // Naive baseline on the same measurements, with and without the code mask.
    let mut naive = Vec::new();
    let mut naive_masked = Vec::new();
    for s in 0..exp.scenes {
        let (_, coded, g) = exp.measurement(s, 0).unwrap();
        let peak = coded.matrix().max();
        let est = naive_dedisperse(&g);
        naive.push(psnr_db(coded.matrix(), &est, peak).unwrap());
        naive_masked
            .push(psnr_db(coded.matrix(), &est.component_mul(&code.to_matrix()), peak).unwrap());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let baseline = mean(&naive).max(mean(&naive_masked));

    let evaluate = |p: &NetworkParams| {
        let rep =
            run_method_comparison_with(&exp, Some(IntensitySource::Network(p)), false).unwrap();
        let net = rep.summary(Method::SubHadamardNet).unwrap();
        (
            net.mean_psnr_db.unwrap_or(f64::NAN),
            net.snr.mean_db,
            rep.win_rate(Method::SubHadamardNet, Method::HtsUniform),
        )
    };
    let (psnr, _, wins) = evaluate(&outcome.params);
    let wins = wins.unwrap_or(0.0);
    let a = psnr - baseline >= 3.0;
    let b = wins >= 0.9;

    let curve: Vec<(f64, f64)> = outcome
        .checkpoints
        .iter()
        .map(|(_, p)| evaluate(p))
        .map(|(x, y, _)| (x, y))
        .collect();
    let rho = spearman(
        &curve.iter().map(|c| c.0).collect::<Vec<_>>(),
        &curve.iter().map(|c| c.1).collect::<Vec<_>>(),
    );
    let c = curve.len() >= 5 && rho.is_some_and(|r| r >= 0.8);

    let oracle_cfg = plan.validation_experiment(
        vec![Method::SubHadamardExact, Method::SubHadamardNet],
        1,
        102,
    );
    let rep = run_method_comparison_with(&oracle_cfg, Some(IntensitySource::Oracle), true).unwrap();
    let d = (0..oracle_cfg.scenes).all(|s| {
        let get = |m| {
            rep.records
                .iter()
                .find(|r| r.scene == s && r.method == m)
                .map(|r| (r.spectra.clone(), r.scored().map(|x| x.snr)))
        };
        get(Method::SubHadamardExact) == get(Method::SubHadamardNet)
    });

    let detail = format!(
        "(a) PSNR {psnr:.2} dB vs naive {:.2} / masked naive {:.2} dB: {}; (b) beats hts-uniform on {:.1} %: {}; \
         (c) Spearman {:.3} over {} checkpoints: {}; (d) oracle bit-identical: {}",
        mean(&naive),
        mean(&naive_masked),
        ok(a),
        100.0 * wins,
        ok(b),
        rho.unwrap_or(f64::NAN),
        curve.len(),
        ok(c),
        ok(d)
    );
    verdict(a && b && c && d, detail)
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

fn snapspec(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_snapspec"))
        .arg("--deterministic")
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(())
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(p) = stack.pop() {
        if p.is_dir() {
            stack.extend(std::fs::read_dir(&p).unwrap().map(|e| e.unwrap().path()));
        } else {
            out.push(p.strip_prefix(root).unwrap().to_path_buf());
        }
    }
    out.sort();
    out
}

/// Run every command into `dir`, which holds shared inputs from `setup`.
fn run_all(dir: &Path, tag: &str) -> Result<(), String> {
    let o = |name: &str| format!("{tag}/{name}");
    std::fs::create_dir(dir.join(tag)).map_err(|e| e.to_string())?;
    snapspec(dir, &["gen-smatrix", "--order", "7", "--out", &o("s7.csv")])?;
    snapspec(
        dir,
        &[
            "synth-scenes",
            "--order",
            "7",
            "--bands",
            "4",
            "--count",
            "3",
            "--seed",
            "1",
            "--out",
            &o("scenes"),
        ],
    )?;
    snapspec(
        dir,
        &[
            "simulate",
            "--scene",
            "in/scene.hcube",
            "--noise",
            "read:0.01",
            "--seed",
            "2",
            "--f64",
            "--out",
            &o("g.hcube"),
            "--intensity-out",
            &o("m.hcube"),
        ],
    )?;
    snapspec(
        dir,
        &[
            "train",
            "--order",
            "7",
            "--bands",
            "4",
            "--width",
            "8",
            "--train-count",
            "6",
            "--val-count",
            "2",
            "--epochs",
            "2",
            "--batch",
            "3",
            "--checkpoint-every",
            "1",
            "--seed",
            "3",
            "--out",
            &o("net"),
        ],
    )?;
    snapspec(
        dir,
        &[
            "infer",
            "--network",
            "in/net/network.hnet",
            "--input",
            "in/g.hcube",
            "--mask-code",
            "hadamard",
            "--out",
            &o("i.hcube"),
        ],
    )?;
    snapspec(
        dir,
        &[
            "reconstruct",
            "--input",
            "in/g.hcube",
            "--intensity",
            "in/m.hcube",
            "--out",
            &o("spectra.csv"),
        ],
    )?;
    snapspec(
        dir,
        &[
            "compare",
            "--config",
            "in/exp.cfg",
            "--seed",
            "4",
            "--out",
            &o("compare"),
        ],
    )?;
    snapspec(
        dir,
        &[
            "snr-sweep",
            "--checkpoints",
            "in/net/checkpoint_0001.hnet,in/net/checkpoint_0002.hnet",
            "--order",
            "7",
            "--bands",
            "4",
            "--scenes",
            "3",
            "--trials",
            "2",
            "--seed",
            "5",
            "--out",
            &o("sweep.csv"),
        ],
    )?;
    snapspec(
        dir,
        &[
            "grad-check",
            "--bands",
            "4",
            "--width",
            "8",
            "--samples",
            "20",
            "--seed",
            "6",
            "--out",
            &o("grad.csv"),
        ],
    )?;
    snapspec(
        dir,
        &["report", "--input", "in/compare", "--out", &o("report.csv")],
    )?;
    Ok(())
}

fn c11_reproducibility() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let setup = || -> Result<(), String> {
        std::fs::create_dir(dir.join("in")).map_err(|e| e.to_string())?;
        snapspec(
            dir,
            &[
                "synth-scenes",
                "--order",
                "7",
                "--bands",
                "4",
                "--count",
                "1",
                "--seed",
                "7",
                "--f64",
                "--out",
                "in/sc",
            ],
        )?;
        std::fs::rename(
            dir.join("in/sc/scene_0000.hcube"),
            dir.join("in/scene.hcube"),
        )
        .map_err(|e| e.to_string())?;
        snapspec(
            dir,
            &[
                "simulate",
                "--scene",
                "in/scene.hcube",
                "--noise",
                "read:0",
                "--seed",
                "8",
                "--f64",
                "--out",
                "in/g.hcube",
                "--intensity-out",
                "in/m.hcube",
            ],
        )?;
        snapspec(
            dir,
            &[
                "train",
                "--order",
                "7",
                "--bands",
                "4",
                "--width",
                "8",
                "--train-count",
                "6",
                "--val-count",
                "2",
                "--epochs",
                "2",
                "--batch",
                "3",
                "--checkpoint-every",
                "1",
                "--seed",
                "9",
                "--out",
                "in/net",
            ],
        )?;
        std::fs::write(
            dir.join("in/exp.cfg"),
            "order = 7\nbands = 4\nscenes = 3\ntrials = 2\nnoise = read:0.02\n\
             methods = sub-hadamard-exact, sub-hadamard-net, sub-hadamard-dual, slit, hts-uniform\nnetwork = net/network.hnet\n",
        )
        .map_err(|e| e.to_string())?;
        snapspec(
            dir,
            &[
                "compare",
                "--config",
                "in/exp.cfg",
                "--seed",
                "10",
                "--out",
                "in/compare",
            ],
        )
    };
    if let Err(e) = setup()
        .and_then(|_| run_all(dir, "a"))
        .and_then(|_| run_all(dir, "b"))
    {
        return verdict(false, e);
    }
    let (fa, fb) = (files_under(&dir.join("a")), files_under(&dir.join("b")));
    if fa != fb {
        return verdict(false, "runs produced different file sets");
    }
    let differing: Vec<String> = fa
        .iter()
        .filter(|f| {
            std::fs::read(dir.join("a").join(f)).unwrap()
                != std::fs::read(dir.join("b").join(f)).unwrap()
        })
        .map(|f| f.display().to_string())
        .collect();
    verdict(
        differing.is_empty(),
        if differing.is_empty() {
            format!("10 commands, {} output files bit-identical", fa.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}
