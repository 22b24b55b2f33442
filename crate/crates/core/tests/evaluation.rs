use approx::assert_abs_diff_eq;
use corrdict::metrics::*;
use corrdict::segmentation::*;
use corrdict::synthetic::*;
use corrdict::*;
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_dictionary(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Dictionary {
    let m = Array2::from_shape_fn((n, k), |_| rng.sample::<f64, _>(StandardNormal));
    normalize_columns(m.view()).unwrap()
}

fn distance_double_loop(t: &Dictionary, l: &Dictionary) -> f64 {
    let mut total = 0.0;
    for k in 0..t.n_atoms() {
        let mut best = f64::INFINITY;
        for j in 0..l.n_atoms() {
            let mut ip = 0.0;
            for i in 0..t.n_dim() {
                ip += t.atom(k)[i] * l.atom(j)[i];
            }
            best = best.min(1.0 - ip.abs());
        }
        total += best;
    }
    total
}

#[test]
fn distance_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let t = random_dictionary(&mut rng, 9, 5);
        let l = random_dictionary(&mut rng, 9, 7);
        let rep = dictionary_distance(&t, &l, DEFAULT_RECOVERY_THRESHOLD).unwrap();
        assert_abs_diff_eq!(
            rep.total_distance,
            distance_double_loop(&t, &l),
            epsilon = 1e-12
        );
    }
}

#[test]
fn permuted_and_flipped_copies_are_at_distance_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let t = random_dictionary(&mut rng, 12, 8);
    let order = [5, 2, 7, 0, 1, 6, 3, 4];
    let mut m = t.view().select(Axis(1), &order);
    for (c, mut col) in m.columns_mut().into_iter().enumerate() {
        if c % 3 == 0 {
            col.mapv_inplace(|v| -v);
        }
    }
    let l = Dictionary::new(m).unwrap();
    let rep = dictionary_distance(&t, &l, DEFAULT_RECOVERY_THRESHOLD).unwrap();
    assert_eq!(rep.total_distance, 0.0);
    assert_eq!(rep.recovery_rate, 1.0);
}

/// Exhaustive best 2-partition under ℓ1 inertia with median centers.
fn brute_force_inertia(points: &Array2<f64>) -> f64 {
    let l = points.ncols();
    let inertia_of = |idx: &[usize]| -> f64 {
        let mut total = 0.0;
        for r in 0..points.nrows() {
            let mut vals: Vec<f64> = idx.iter().map(|&i| points[[r, i]]).collect();
            vals.sort_by(f64::total_cmp);
            let med = vals[(vals.len() - 1) / 2];
            total += vals.iter().map(|v| (v - med).abs()).sum::<f64>();
        }
        total
    };
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << (l - 1)) {
        let a: Vec<usize> = (0..l).filter(|i| mask >> i & 1 == 1).collect();
        let b: Vec<usize> = (0..l).filter(|i| mask >> i & 1 == 0).collect();
        best = best.min(inertia_of(&a) + inertia_of(&b));
    }
    best
}

#[test]
fn kmedians_reaches_the_enumerated_optimum_on_small_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for l in 4..=10 {
        let points = Array2::from_shape_fn((2, l), |(_, c)| {
            let center = if c % 2 == 0 { 0.0 } else { 6.0 };
            center + rng.random_range(-1.0..1.0)
        });
        let mut cfg = KMeansL1Config::new(2);
        cfg.n_restarts = 8;
        let r = kmeans_l1(points.view(), &cfg).unwrap();
        assert_abs_diff_eq!(r.inertia, brute_force_inertia(&points), epsilon = 1e-9);
    }
}

#[test]
fn adjusted_rand_of_random_labelings_is_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let grid = [20, 20, 5];
    let n = 2000;
    let mut total = 0.0;
    let trials = 20;
    for _ in 0..trials {
        let a: Vec<u32> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<u32> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let s = score_segmentation(
            &LabelVolume::new(grid, a, 4).unwrap(),
            &LabelVolume::new(grid, b, 4).unwrap(),
        )
        .unwrap();
        total += s.agreement;
    }
    assert!((total / trials as f64).abs() < 0.01);
}

#[test]
fn oracle_coefficients_segment_perfectly() {
    let spec = SyntheticSpec {
        blob_profile: BlobProfile::Flat,
        sparsity_per_voxel: 1,
        noise_sigma: 0.0,
        ..SyntheticSpec::tiny()
    };
    let ds = generate(&spec).unwrap();
    let truth = dominant_network_labels(ds.true_coefficients.view(), spec.grid).unwrap();
    let pred = segment(
        ds.true_coefficients.view(),
        spec.grid,
        None,
        &KMeansL1Config::new(spec.n_networks),
        SegmentOptions::default(),
    )
    .unwrap();
    let s = score_segmentation(&pred, &truth).unwrap();
    assert_eq!(s.purity, 1.0);
}

#[test]
fn noise_has_the_requested_spread() {
    let spec = SyntheticSpec {
        grid: [16, 16, 16],
        noise_sigma: 0.2,
        n_timepoints: 20,
        ..SyntheticSpec::tiny()
    };
    let ds = generate(&spec).unwrap();
    let n = ds.noise_realization.len() as f64;
    let mean = ds.noise_realization.sum() / n;
    let sd = (ds.noise_realization.mapv(|v| (v - mean).powi(2)).sum() / (n - 1.0)).sqrt();
    assert!((sd - 0.2).abs() < 0.05 * 0.2, "sd {sd}");
}

#[test]
fn generation_is_bit_deterministic() {
    let spec = SyntheticSpec::tiny();
    let a = generate(&spec).unwrap();
    let b = generate(&spec).unwrap();
    assert_eq!(a.signals, b.signals);
    let c = generate(&SyntheticSpec {
        rng_seed: 1,
        ..spec
    })
    .unwrap();
    assert_ne!(a.signals, c.signals);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn kmedians_inertia_never_increases(seed in any::<u64>(), c in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = Array2::from_shape_fn((3, 40), |_| rng.random_range(-3.0..3.0));
        let mut cfg = KMeansL1Config::new(c);
        cfg.rng_seed = seed;
        let r = kmeans_l1(points.view(), &cfg).unwrap();
        for w in r.inertia_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
        prop_assert!(r.labels.iter().all(|&l| l < c));
    }

    #[test]
    fn synthetic_codes_are_sparse_and_nonnegative(seed in any::<u64>()) {
        let spec = SyntheticSpec { rng_seed: seed, ..SyntheticSpec::tiny() };
        let ds = generate(&spec).unwrap();
        prop_assert!(ds.true_coefficients.max_column_nnz() <= spec.sparsity_per_voxel);
        prop_assert!(ds.true_coefficients.view().iter().all(|&v| v >= 0.0));
        let model = ds.true_dictionary.view().dot(&ds.true_coefficients.view()) + &ds.noise_realization;
        prop_assert_eq!(model, ds.signals.view().to_owned());
    }

    #[test]
    fn consistency_is_a_correlation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = SignalMatrix::new(Array2::from_shape_fn((4, 12), |_| rng.sample(StandardNormal))).unwrap();
        let x = CoefficientMatrix::new(Array2::from_shape_fn((6, 12), |_| rng.sample(StandardNormal))).unwrap();
        let c = representation_consistency(&y, &x).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c.value));
    }
}
