use nalgebra::DMatrix;
use proptest::prelude::*;
use snapspec_core::netunmix::{build_network, read_params, write_params, ArchConfig};
use snapspec_core::optics::{apply_code, disperse};
use snapspec_core::recon::{normalize_to_snap, reconstruct_subhadamard};
use snapspec_core::scene::synth_random_scene;
use snapspec_core::smatrix::supported_orders;
use snapspec_core::{build_smatrix, Code, CodedIntensity, SMatrix};

fn order() -> impl Strategy<Value = usize> {
    prop::sample::select(supported_orders(63))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn smatrix_inverse_is_exact(n in order()) {
        let s = build_smatrix(n).unwrap();
        s.check_invariants().unwrap();
        let prod = s.to_matrix() * s.inverse().matrix();
        prop_assert!((prod - DMatrix::identity(n, n)).abs().max() < 1e-12);
    }

    #[test]
    fn smatrix_csv_round_trip(n in order()) {
        let s = build_smatrix(n).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = SMatrix::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.rows(), s.rows());
    }

    #[test]
    fn noiseless_recovery(n in prop::sample::select(vec![7usize, 11, 15, 19]), m in 2usize..10, seed in any::<u64>()) {
        let scene = synth_random_scene(n, m, 3, seed).unwrap();
        let coded = apply_code(&Code::Hadamard(build_smatrix(n).unwrap()), scene.intensity()).unwrap();
        let g = disperse(&coded, scene.spectra()).unwrap();
        let r = reconstruct_subhadamard(&g, &normalize_to_snap(&coded).unwrap()).unwrap();
        let target = scene.spectra() * coded.matrix().max();
        prop_assert!((&r.spectra - &target).norm() <= 1e-9 * target.norm());
    }

    #[test]
    fn snap_matrix_ignores_overall_brightness(seed in any::<u64>(), gain in 0.01f64..100.0) {
        let n = 11;
        let scene = synth_random_scene(n, 4, 3, seed).unwrap();
        let coded = apply_code(&Code::Hadamard(build_smatrix(n).unwrap()), scene.intensity()).unwrap();
        let brighter = CodedIntensity::from_matrix(coded.matrix() * gain).unwrap();
        let a = normalize_to_snap(&coded).unwrap();
        let b = normalize_to_snap(&brighter).unwrap();
        prop_assert!((a.matrix() - b.matrix()).abs().max() < 1e-12);
    }
}

#[test]
fn network_file_round_trip_is_stable() {
    for arch in [ArchConfig::desk(8, 32), ArchConfig::linear_unmixing(8, 32)] {
        let params = build_network(&arch, 3).unwrap();
        let mut first = Vec::new();
        write_params(&params, &mut first).unwrap();
        let back = read_params(first.as_slice()).unwrap();
        assert_eq!(back.arch, params.arch);
        for (a, b) in back.blocks.iter().zip(&params.blocks) {
            assert_eq!(a.shape, b.shape);
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() <= 1e-7 * y.abs().max(1.0));
            }
        }
        let mut second = Vec::new();
        write_params(&back, &mut second).unwrap();
        assert_eq!(first, second);
    }
}
