mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use polycone::cluster::{gmm_fit, kmeans, segment, ClusterMethod, GmmConfig, KMeansConfig};
use polycone::dataset::{ClassificationMap, GroundTruth, SpectralDataset};
use polycone::geometry::{project_onto_polyhedron, project_onto_simplex, Halfspace, PolyhedralCone, ProjectionOptions};
use polycone::io::{load_bundle, save_input_bundle};
use polycone::metrics::{match_and_score, sad, segmentation_accuracy};
use polycone::preprocess::{fit_projection, sphere_normalize_rows};
use polycone::synth::{generate, sample_endmembers, verify_theorem, SynthConfig};

fn matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut r = common::rng(seed);
    DMatrix::from_fn(rows, cols, |_, _| r.random_range(0.01..1.0))
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn sphere_normalize_is_idempotent(n in 1usize..40, d in 1usize..12, seed in any::<u64>()) {
        let y = matrix(n, d, seed);
        let once = sphere_normalize_rows(&y).unwrap();
        let twice = sphere_normalize_rows(&once).unwrap();
        prop_assert!((once - twice).abs().max() < 1e-15);
    }

    #[test]
    fn projection_keeps_origin(n in 5usize..40, d in 2usize..10, seed in any::<u64>()) {
        let y = matrix(n, d, seed);
        let basis = fit_projection(&y, (d / 2).max(1)).unwrap();
        let zero = basis.apply(&DMatrix::zeros(3, d)).unwrap();
        prop_assert!(zero.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn full_rank_projection_preserves_inner_products(n in 12usize..40, d in 2usize..8, seed in any::<u64>()) {
        let y = matrix(n, d, seed);
        let basis = fit_projection(&y, d).unwrap();
        let z = basis.apply(&y).unwrap();
        let before = &y * y.transpose();
        let after = &z * z.transpose();
        prop_assert!((before - after).abs().max() < 1e-9);
    }

    #[test]
    fn signed_distance_sign_and_homogeneity(
        dim in 2usize..5,
        faces in 1usize..5,
        seed in any::<u64>(),
        t in 0.01f64..100.0,
    ) {
        let mut r = common::rng(seed);
        let normals = common::random_cone_normals(dim, faces, &mut r);
        let cone = PolyhedralCone::from_normals(normals).unwrap();
        let options = ProjectionOptions::default();
        let x = common::gaussian(dim, &mut r);
        let d = cone.signed_distance(&x, &options).unwrap();
        let face = cone.max_face_value(&x);
        if face < -1e-9 {
            prop_assert!(d < 0.0);
        } else if face > 1e-9 {
            prop_assert!(d > 0.0);
        }
        prop_assert!(d.abs() <= x.norm() + 1e-9);
        let scaled = cone.signed_distance(&(&x * t), &options).unwrap();
        prop_assert!((scaled - t * d).abs() <= 1e-8 * t.max(1.0));
        prop_assert!(cone.signed_distance(&DVector::zeros(dim), &options).unwrap() <= 0.0);
    }

    #[test]
    fn simplex_projection_is_optimal(v in prop::collection::vec(-3.0f64..3.0, 2..8), seed in any::<u64>()) {
        let v = DVector::from_vec(v);
        let p = project_onto_simplex(&v);
        prop_assert!(p.iter().all(|a| *a >= 0.0));
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        let mut r = common::rng(seed);
        for _ in 0..50 {
            let mut q = DVector::from_fn(v.len(), |_, _| -r.random_range(1e-12f64..1.0).ln());
            q /= q.sum();
            prop_assert!((&v - &p).dot(&(&q - &p)) <= 1e-12);
        }
    }

    #[test]
    fn polyhedron_projection_variational_inequality(
        dim in 2usize..5,
        faces in 1usize..7,
        seed in any::<u64>(),
    ) {
        let mut r = common::rng(seed);
        let anchor = common::gaussian(dim, &mut r);
        let halfspaces: Vec<Halfspace> = (0..faces)
            .map(|_| {
                let w = common::unit(dim, &mut r);
                let slack = r.random_range(0.0..1.0);
                Halfspace::new(w.clone(), w.dot(&anchor) + slack).unwrap()
            })
            .collect();
        let x = &anchor + common::gaussian(dim, &mut r) * 3.0;
        let p = project_onto_polyhedron(&halfspaces, &x, &ProjectionOptions::default()).unwrap();
        prop_assert!(halfspaces.iter().all(|h| h.violation(&p) <= 1e-9));
        let mut checked = 0;
        while checked < 100 {
            let q = &anchor + common::gaussian(dim, &mut r) * 2.0;
            if halfspaces.iter().all(|h| h.violation(&q) <= 0.0) {
                prop_assert!((&x - &p).dot(&(&q - &p)) <= 1e-6);
                checked += 1;
            }
        }
    }

    #[test]
    fn sad_is_scale_invariant(d in 3usize..20, seed in any::<u64>(), t in 1e-3f64..1e3) {
        let mut r = common::rng(seed);
        let u = common::gaussian(d, &mut r);
        let v = common::gaussian(d, &mut r);
        prop_assert!((sad(&u, &v).unwrap() - sad(&(&u * t), &v).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn matching_ignores_permutations(m in 2usize..6, seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let truth_m = matrix(10, m, seed);
        let truth_a = DMatrix::from_fn(m, 30, |_, _| r.random_range(0.0..1.0));
        let truth = GroundTruth { endmembers: truth_m.clone(), abundances: truth_a.clone(), labels: None };
        let est_m = &truth_m + DMatrix::from_fn(10, m, |_, _| r.random_range(-0.05..0.05));
        let est_a = &truth_a + DMatrix::from_fn(m, 30, |_, _| r.random_range(-0.05..0.05));
        let mut order: Vec<usize> = (0..m).collect();
        order.rotate_left(1 + (seed as usize) % m);
        let perm_m = DMatrix::from_fn(10, m, |i, j| est_m[(i, order[j])]);
        let perm_a = DMatrix::from_fn(m, 30, |i, j| est_a[(order[i], j)]);
        let a = match_and_score(&est_m, &est_a, &truth).unwrap();
        let b = match_and_score(&perm_m, &perm_a, &truth).unwrap();
        prop_assert!((a.avg_sad - b.avg_sad).abs() < 1e-12);
        prop_assert!((a.avg_rmse - b.avg_rmse).abs() < 1e-12);
        prop_assert_eq!(a.per_material, b.per_material);
    }

    #[test]
    fn accuracy_is_symmetric(m in 2usize..6, labels in prop::collection::vec((0usize..6, 0usize..6), 1..80)) {
        let pred = ClassificationMap::new(labels.iter().map(|(p, _)| p % m).collect(), m).unwrap();
        let truth = ClassificationMap::new(labels.iter().map(|(_, t)| t % m).collect(), m).unwrap();
        let ab = segmentation_accuracy(&pred, &truth).unwrap();
        let ba = segmentation_accuracy(&truth, &pred).unwrap();
        prop_assert!((ab - ba).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn clustering_is_deterministic(n in 30usize..120, m in 2usize..5, seed in any::<u64>()) {
        let y = matrix(n, 4, seed);
        for method in [ClusterMethod::Kmeans, ClusterMethod::Gmm] {
            let a = segment(&y, m, method, 0.5, seed).unwrap();
            let b = segment(&y, m, method, 0.5, seed).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn kmeans_inertia_never_increases(n in 20usize..120, m in 2usize..5, seed in any::<u64>()) {
        let y = matrix(n, 3, seed);
        let fit = kmeans(&y, m, &KMeansConfig { seed, ..KMeansConfig::default() }).unwrap();
        prop_assert!(fit.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn gmm_likelihood_never_decreases(n in 20usize..120, m in 2usize..4, seed in any::<u64>()) {
        let y = matrix(n, 3, seed);
        let fit = gmm_fit(&y, m, &GmmConfig { seed, ..GmmConfig::default() }).unwrap();
        prop_assert!(fit.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-7));
    }

    #[test]
    fn bundle_round_trip_is_bit_exact(n in 1usize..30, d in 1usize..8, m in 2usize..4, seed in any::<u64>()) {
        let data = DMatrix::from_fn(n, d, |i, j| ((i * 31 + j * 7) as f64 + seed as f64).sin() * 1e3);
        let dataset = SpectralDataset::new(data, 1, n, None).unwrap();
        let mut r = common::rng(seed);
        let endmembers = DMatrix::from_fn(d, m, |_, _| r.random::<f64>());
        let mut abundances = DMatrix::from_fn(m, n, |_, _| r.random::<f64>());
        for mut col in abundances.column_iter_mut() {
            let s = col.sum();
            col /= s;
        }
        let labels = polycone::dataset::dominant_labels(&abundances);
        let gt = GroundTruth::new(endmembers, abundances, Some(labels)).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("b");
        save_input_bundle(&dir, &dataset, Some(&gt), false).unwrap();
        let back = load_bundle(&dir).unwrap();
        prop_assert!(back.dataset.data.iter().zip(dataset.data.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let back_gt = back.ground_truth.unwrap();
        prop_assert!(back_gt.endmembers.iter().zip(gt.endmembers.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert!(back_gt.abundances.iter().zip(gt.abundances.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(back_gt.labels, gt.labels);
    }

    #[test]
    fn synthetic_generation_is_deterministic(seed in any::<u64>(), m in 2usize..5) {
        let cfg = SynthConfig { materials: m, pixels: 64, noise_sigma: 0.01, seed, ..SynthConfig::default() };
        prop_assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
    }

    #[test]
    fn dominant_regions_are_convex_cones(m in 2usize..6, extra in 0usize..6, seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let endmembers = sample_endmembers(m + extra, m, &mut r);
        let report = verify_theorem(&endmembers, 300, seed).unwrap();
        prop_assert!(report.passed(), "{:?}", report.witnesses);
    }
}
