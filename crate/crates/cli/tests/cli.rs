use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use snapspec_core::recon::read_spectra_csv;
use snapspec_core::scene::{cube_intensity, read_cube, scene_from_cube};
use snapspec_core::SpectralCube;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snapspec"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn cube(path: &Path) -> SpectralCube {
    read_cube(BufReader::new(File::open(path).unwrap()))
        .unwrap()
        .0
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(
        run(dir.path(), &["gen-smatrix", "--order", "7"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn unsupported_order_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["gen-smatrix", "--order", "4", "--out", "s.csv"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: unsupported-order: 4"));
    assert!(!dir.path().join("s.csv").exists());
}

#[test]
fn smatrix_csv_is_binary_with_right_weight() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        dir.path(),
        &["gen-smatrix", "--order", "7", "--out", "s.csv"],
    );
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let rows: Vec<Vec<u8>> = text
        .lines()
        .map(|l| l.split(',').map(|v| v.trim().parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 7);
    for r in &rows {
        assert_eq!(r.len(), 7);
        assert_eq!(r.iter().filter(|&&v| v == 1).count(), 4);
    }
}

#[test]
fn noiseless_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_ok(
        d,
        &[
            "synth-scenes",
            "--order",
            "11",
            "--bands",
            "5",
            "--count",
            "2",
            "--seed",
            "9",
            "--f64",
            "--out",
            "sc",
        ],
    );
    for s in 0..2 {
        let scene_path = format!("sc/scene_{s:04}.hcube");
        let (g, m, r) = (
            format!("g{s}.hcube"),
            format!("m{s}.hcube"),
            format!("r{s}.csv"),
        );
        run_ok(
            d,
            &[
                "simulate",
                "--scene",
                &scene_path,
                "--noise",
                "read:0",
                "--seed",
                "1",
                "--f64",
                "--out",
                &g,
                "--intensity-out",
                &m,
            ],
        );
        run_ok(
            d,
            &["reconstruct", "--input", &g, "--intensity", &m, "--out", &r],
        );

        let scene = scene_from_cube(&cube(&d.join(&scene_path))).unwrap();
        let peak = cube_intensity(&cube(&d.join(&m))).max();
        let target = scene.spectra() * peak;
        let est = read_spectra_csv(BufReader::new(File::open(d.join(&r)).unwrap())).unwrap();
        let rel = (&est - &target).norm() / target.norm();
        assert!(rel <= 1e-9, "scene {s}: relative error {rel}");
    }
}

#[test]
fn outputs_are_never_overwritten() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.csv"), "keep").unwrap();
    let out = run(
        dir.path(),
        &["gen-smatrix", "--order", "7", "--out", "s.csv"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("s.csv")).unwrap(),
        "keep"
    );
}

#[test]
fn empty_sweep_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["snr-sweep", "--k", "--seed", "1", "--out", "k.csv"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid-value"));
}

#[test]
fn k_sweep_follows_attenuation_law() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        dir.path(),
        &[
            "snr-sweep",
            "--k",
            "0.1,0.5",
            "--order",
            "7",
            "--bands",
            "4",
            "--trials",
            "200",
            "--seed",
            "2",
            "--out",
            "k.csv",
        ],
    );
    let text = std::fs::read_to_string(dir.path().join("k.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('k'))
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    let drop = rows[0][2] - rows[1][2];
    let expected = 20.0 * (0.9f64 / 0.5).log10();
    assert!((drop - expected).abs() < 0.2, "drop {drop} vs {expected}");
}

#[test]
fn compare_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("exp.cfg"),
        "order = 7\nbands = 4\nscenes = 3\nmethods = sub-hadamard-exact, slit, hts-uniform\nnoise = read:0.01\n",
    )
    .unwrap();
    run_ok(
        d,
        &[
            "compare", "--config", "exp.cfg", "--seed", "4", "--out", "cmp",
        ],
    );
    for f in ["summary.txt", "trials.csv", "mc_table.csv", "config.txt"] {
        assert!(d.join("cmp").join(f).is_file(), "{f}");
    }
    run_ok(d, &["report", "--input", "cmp", "--out", "report.txt"]);
    let report = std::fs::read_to_string(d.join("report.txt")).unwrap();
    assert!(report.contains("sub-hadamard-exact"));
    assert!(report.contains("hts-uniform"));
}
