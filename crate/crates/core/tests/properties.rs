use std::collections::HashMap;

use mvfuse_core::downstream::{coxph_elasticnet_fit, dbscan, kmeans, logistic_l1_fit, PenaltyConfig};
use mvfuse_core::evaluation::{auc, concordance_index, stratified_kfold, stratified_split};
use mvfuse_core::{align_samples, pca, standardize, vif_filter, ModalityDataset, RankSelector};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn same_partition(a: &[i64], b: &[i64]) -> bool {
    let mut ab: HashMap<i64, i64> = HashMap::new();
    let mut ba: HashMap<i64, i64> = HashMap::new();
    a.iter().zip(b).all(|(&x, &y)| *ab.entry(x).or_insert(y) == y && *ba.entry(y).or_insert(x) == x)
}

fn labelled_scores() -> impl Strategy<Value = (Vec<bool>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec((0i32..12).prop_map(|v| v as f64 * 0.25), n),
        )
    })
}

fn random_matrix(seed: u64, n: usize, p: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0))
}

fn permutation(seed: u64, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn auc_monotone_and_flip((labels, scores) in labelled_scores()) {
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let a = auc(&labels, &scores).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((a - auc(&labels, &warped).unwrap()).abs() <= 1e-12);
        prop_assert!((a + auc(&labels, &flipped).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn concordance_monotone((events, risk) in labelled_scores(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let time: Vec<f64> = (0..risk.len()).map(|_| rng.random_range(1..8) as f64).collect();
        if let Ok(c) = concordance_index(&time, &events, &risk) {
            let warped: Vec<f64> = risk.iter().map(|r| r * r * r + 2.0 * r).collect();
            prop_assert!((c - concordance_index(&time, &events, &warped).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn split_keeps_stratum_proportions(
        labels in prop::collection::vec(any::<bool>(), 10..200),
        test_size in 0.1f64..0.5,
        seed in any::<u64>(),
    ) {
        let Ok((train, test)) = stratified_split(&labels, test_size, seed) else {
            return Ok(());
        };
        prop_assert_eq!(train.len() + test.len(), labels.len());
        for class in [false, true] {
            let total = labels.iter().filter(|&&l| l == class).count() as f64;
            let in_test = test.iter().filter(|&&i| labels[i] == class).count() as f64;
            prop_assert!((in_test - test_size * total).abs() <= 1.0);
        }
    }

    #[test]
    fn folds_balanced_per_stratum(
        labels in prop::collection::vec(any::<bool>(), 20..200),
        k in 2usize..10,
        seed in any::<u64>(),
    ) {
        let Ok(folds) = stratified_kfold(&labels, k, seed) else {
            return Ok(());
        };
        for class in [false, true] {
            let mut counts = vec![0usize; k];
            for (i, &f) in folds.iter().enumerate() {
                if labels[i] == class {
                    counts[f] += 1;
                }
            }
            let total = counts.iter().sum::<usize>() as f64;
            for c in counts {
                prop_assert!((c as f64 - total / k as f64).abs() <= 1.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kmeans_row_permutation_invariant(seed in any::<u64>(), n in 6usize..60, k in 1usize..5) {
        let x = random_matrix(seed, n, 3);
        let perm = permutation(seed ^ 1, n);
        let xp = x.select(ndarray::Axis(0), &perm);
        let a = kmeans(x.view(), k.min(n), 7).unwrap();
        let b = kmeans(xp.view(), k.min(n), 7).unwrap();
        let a_perm: Vec<i64> = perm.iter().map(|&i| a.assignments[i]).collect();
        prop_assert!(same_partition(&a_perm, &b.assignments));
        prop_assert!(a.assignments.iter().all(|&l| l >= 0 && (l as usize) < k.min(n)));
        for w in a.sse_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn dbscan_row_permutation_invariant(seed in any::<u64>(), n in 2usize..60, eps in 0.1f64..0.8, min_pts in 1usize..6) {
        let x = random_matrix(seed, n, 2);
        let perm = permutation(seed ^ 2, n);
        let xp = x.select(ndarray::Axis(0), &perm);
        let a = dbscan(x.view(), eps, min_pts).unwrap();
        let b = dbscan(xp.view(), eps, min_pts).unwrap();
        let a_perm: Vec<i64> = perm.iter().map(|&i| a.assignments[i]).collect();
        prop_assert!(same_partition(&a_perm, &b.assignments));
        // noise stays noise
        prop_assert!(a_perm.iter().zip(&b.assignments).all(|(x, y)| (*x < 0) == (*y < 0)));
    }

    #[test]
    fn lasso_path_selection_non_increasing(seed in any::<u64>()) {
        let n = 60;
        let p = 6;
        let x = random_matrix(seed, n, p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let y = Array1::from_shape_fn(n, |i| {
            let eta = 1.5 * x[[i, 0]] - x[[i, 1]] + 0.5 * x[[i, 2]];
            (rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp())) as u8 as f64
        });
        prop_assume!(y.sum() >= 5.0 && y.sum() <= n as f64 - 5.0);
        let grid = [0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5];
        let counts: Vec<usize> = grid
            .iter()
            .map(|&a| logistic_l1_fit(x.view(), y.view(), &names(p), PenaltyConfig::lasso(a)).unwrap().n_selected())
            .collect();
        prop_assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{:?}", counts);
        prop_assert!(counts.iter().all(|&c| c <= p));
    }

    #[test]
    fn cox_ranking_invariant_to_column_shift(seed in any::<u64>(), shift in -50.0f64..50.0, col in 0usize..3) {
        let n = 40;
        let x = random_matrix(seed, n, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        let time = Array1::from_shape_fn(n, |i| (-x[[i, 0]]).exp() * rng.random_range(0.1..2.0));
        let event: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.7).collect();
        prop_assume!(event.iter().any(|&e| e));
        let mut xs = x.clone();
        xs.column_mut(col).mapv_inplace(|v| v + shift);
        let pen = PenaltyConfig::new(0.02, 0.5);
        let a = coxph_elasticnet_fit(x.view(), time.view(), &event, &names(3), pen).unwrap();
        let b = coxph_elasticnet_fit(xs.view(), time.view(), &event, &names(3), pen).unwrap();
        let ra = x.dot(&a.coefficients);
        let rb = xs.dot(&b.coefficients);
        for i in 0..n {
            for j in 0..n {
                if (ra[i] - ra[j]).abs() > 1e-6 {
                    prop_assert_eq!(ra[i] > ra[j], rb[i] > rb[j]);
                }
            }
        }
    }
}

fn dataset(name: &str, ids: Vec<String>, values: Array2<f64>) -> ModalityDataset {
    let feats = (0..values.ncols()).map(|j| format!("{name}_{j}")).collect();
    ModalityDataset::new(name, ids, feats, values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pca_reconstructs_full_rank(seed in any::<u64>(), n in 5usize..30, d in 1usize..6) {
        let x = random_matrix(seed, n, d);
        let ds = dataset("v", (0..n).map(|i| format!("s{i}")).collect(), x.clone());
        let m = d.min(n - 1);
        let (model, scores) = pca(&ds, RankSelector::Fixed(m)).unwrap();
        let means = x.mean_axis(ndarray::Axis(0)).unwrap();
        let centered = &x - &means;
        let recon = scores.dot(&model.components.t());
        let err: f64 = (&centered - &recon).iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-8);
        let gram = scores.t().dot(&scores) / n as f64;
        for a in 0..m {
            for b in 0..m {
                if a != b {
                    prop_assert!(gram[[a, b]].abs() <= 1e-8);
                }
            }
            prop_assert!((gram[[a, a]] - model.explained_variance[a]).abs() <= 1e-8 * (1.0 + gram[[a, a]]));
        }
    }

    #[test]
    fn standardize_twice_is_identity(seed in any::<u64>(), n in 3usize..30) {
        let ds = dataset("v", (0..n).map(|i| format!("s{i}")).collect(), random_matrix(seed, n, 4) * 5.0 + 2.0);
        let (once, _, _) = standardize(&ds, std::slice::from_ref(&ds)).unwrap();
        let (twice, _, _) = standardize(&once[0], &once).unwrap();
        let diff = &once[0].values() - &twice[0].values();
        prop_assert!(diff.iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn vif_filter_idempotent(seed in any::<u64>(), threshold in 2.0f64..20.0) {
        let mut x = random_matrix(seed, 30, 5);
        let c = &x.column(0) * 0.7 + &x.column(1) * 0.3;
        x.column_mut(4).assign(&c);
        let ds = dataset("v", (0..30).map(|i| format!("s{i}")).collect(), x);
        let (once, _) = vif_filter(&ds, threshold).unwrap();
        let (twice, removed) = vif_filter(&once, threshold).unwrap();
        prop_assert!(removed.is_empty());
        prop_assert_eq!(once.feature_names(), twice.feature_names());
    }

    #[test]
    fn align_ignores_dataset_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let make = |name: &str, rng: &mut ChaCha8Rng| {
            let ids: Vec<String> = (0..20).filter(|_| rng.random::<f64>() < 0.8).map(|i| format!("s{i:02}")).collect();
            let n = ids.len();
            dataset(name, ids, random_matrix(rng.random(), n, 2))
        };
        let a = make("a", &mut rng);
        let b = make("b", &mut rng);
        let c = make("c", &mut rng);
        let Ok(fwd) = align_samples(&[a.clone(), b.clone(), c.clone()]) else {
            return Ok(());
        };
        let rev = align_samples(&[c, a, b]).unwrap();
        prop_assert_eq!(&fwd[0], &rev[1]);
        prop_assert_eq!(&fwd[1], &rev[2]);
        prop_assert_eq!(&fwd[2], &rev[0]);
    }
}
