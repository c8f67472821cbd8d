use mvfuse_core::integration::{ajive_fit, gfa_fit, gfa_impute_latent, GfaModel};
use mvfuse_core::synthetic::{factor_views, planted_views, PlantedConfig};
use mvfuse_core::{linalg, IntegrationConfig, Method, ModalityDataset, ObservedMask};
use ndarray::{Array1, Array2, ArrayView2, Axis};

fn max_abs(a: ArrayView2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn ajive_config(ranks: Vec<usize>) -> IntegrationConfig {
    let mut c = IntegrationConfig::new(Method::Ajive);
    c.per_view_ranks = Some(ranks);
    c.ajive_resamples = 200;
    c
}

fn cosine(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
}

#[test]
fn ajive_recovers_planted_ranks_and_direction() {
    let data = planted_views(&PlantedConfig {
        seed: 11,
        ..PlantedConfig::default()
    })
    .unwrap();
    let (model, rep) = ajive_fit(&data.datasets, &ajive_config(vec![2, 2, 2])).unwrap();
    assert_eq!(model.joint_rank(), 1);
    assert_eq!(model.individual_ranks(), &[1, 1, 1]);
    let c = cosine(model.decomposition.joint_scores.column(0), data.joint_scores.column(0)).abs();
    assert!(c.min(1.0).acos().to_degrees() < 5.0);
    assert_eq!(rep.component_names(), vec!["Joint1", "view1_Ind1", "view2_Ind1", "view3_Ind1"]);
}

#[test]
fn ajive_scores_are_orthogonal() {
    let data = planted_views(&PlantedConfig {
        n_samples: 120,
        view_dims: vec![8, 10],
        individual_ranks: vec![2, 1],
        noise_sd: 0.2,
        seed: 4,
        ..PlantedConfig::default()
    })
    .unwrap();
    let (model, _) = ajive_fit(&data.datasets, &ajive_config(vec![3, 2])).unwrap();
    let d = &model.decomposition;
    let s = &d.joint_scores;
    let gram = s.t().dot(s) - Array2::<f64>::eye(s.ncols());
    assert!(max_abs(gram.view()) <= 1e-8);
    for si in &d.individual_scores {
        assert!(max_abs(s.t().dot(si).view()) <= 1e-6);
    }
}

#[test]
fn ajive_projection_reproduces_training_scores() {
    let data = planted_views(&PlantedConfig {
        n_samples: 80,
        view_dims: vec![6, 7, 5],
        noise_sd: 0.1,
        seed: 2,
        ..PlantedConfig::default()
    })
    .unwrap();
    let (model, rep) = ajive_fit(&data.datasets, &ajive_config(vec![2, 2, 2])).unwrap();
    let projected = model.project(&data.datasets).unwrap();
    assert!(max_abs((&projected - &rep.scores).view()) < 1e-9);
}

/// Rank-k truncated SVD reconstruction error of the centered matrix,
/// relative to its norm.
fn svd_relative_error(y: ArrayView2<f64>, k: usize) -> f64 {
    let yc = linalg::center_columns(y, linalg::column_means(y).view());
    let svd = linalg::thin_svd(yc.view()).unwrap();
    let total: f64 = svd.s.iter().map(|s| s * s).sum();
    let tail: f64 = svd.s.iter().skip(k).map(|s| s * s).sum();
    (tail / total).sqrt()
}

#[test]
fn gfa_single_view_matches_truncated_svd() {
    for k in 1..=2 {
        let scales: Vec<f64> = (0..k).map(|j| 3.0 - j as f64).collect();
        let (views, _) = factor_views(150, &[12], &scales, 0.1, 5).unwrap();
        let mut cfg = IntegrationConfig::new(Method::Gfa);
        cfg.max_factors = k;
        cfg.prune_fraction = 0.0;
        let (model, _) = gfa_fit(&views, &cfg, None).unwrap();
        let y = views[0].values();
        let yc = linalg::center_columns(y, linalg::column_means(y).view());
        let recon = model.factors.dot(&model.loadings[0].t());
        let gfa_err = linalg::frobenius_sq((&yc - &recon).view()).sqrt() / linalg::frobenius_sq(yc.view()).sqrt();
        let svd_err = svd_relative_error(y, k);
        assert!((gfa_err - svd_err).abs() <= 1e-3, "k={k}: {gfa_err} vs {svd_err}");
    }
}

#[test]
fn gfa_conditioning_on_known_loadings() {
    // posterior mean with known loadings: (I + Σ WᵀΨ⁻¹W)⁻¹ Σ WᵀΨ⁻¹ y
    let w1 = ndarray::array![[1.0, 0.0], [0.5, 1.0], [0.0, 2.0]];
    let w2 = ndarray::array![[2.0, 1.0], [0.0, 1.0]];
    let noise1 = Array1::from(vec![0.5, 0.5, 1.0]);
    let noise2 = Array1::from(vec![0.25, 2.0]);
    let schema = |name: &str, d: usize| {
        (
            name.to_string(),
            (0..d).map(|j| format!("{name}{j}")).collect::<Vec<_>>(),
            Array1::zeros(d),
        )
    };
    let model = GfaModel::from_parameters(
        &[schema("a", 3), schema("b", 2)],
        vec![w1.clone(), w2.clone()],
        vec![noise1.clone(), noise2.clone()],
    )
    .unwrap();
    let ids = vec!["p".to_string(), "q".to_string()];
    let ya = ndarray::array![[1.0, 2.0, 3.0], [0.0, -1.0, 1.0]];
    let yb = ndarray::array![[0.5, -0.5], [2.0, 1.0]];
    let a = ModalityDataset::new("a", ids.clone(), (0..3).map(|j| format!("a{j}")).collect(), ya.clone()).unwrap();
    let b = ModalityDataset::new("b", ids, (0..2).map(|j| format!("b{j}")).collect(), yb.clone()).unwrap();
    let mask = ObservedMask::from_rows(&[vec![true, true], vec![true, false]]).unwrap();
    let z = gfa_impute_latent(&model, &[a, b], &mask).unwrap();

    let term = |w: &Array2<f64>, noise: &Array1<f64>, y: ndarray::ArrayView1<f64>| {
        let wt_psi = w.t().to_owned() / &noise.view().insert_axis(Axis(0));
        (wt_psi.dot(w), wt_psi.dot(&y))
    };
    for (row, views) in [(0usize, 2usize), (1, 1)] {
        let (mut prec, mut rhs) = term(&w1, &noise1, ya.row(row));
        if views == 2 {
            let (p2, r2) = term(&w2, &noise2, yb.row(row));
            prec += &p2;
            rhs += &r2;
        }
        prec += &Array2::<f64>::eye(2);
        // 2 × 2 inverse by cofactors
        let det = prec[[0, 0]] * prec[[1, 1]] - prec[[0, 1]] * prec[[1, 0]];
        let want = [
            (prec[[1, 1]] * rhs[0] - prec[[0, 1]] * rhs[1]) / det,
            (prec[[0, 0]] * rhs[1] - prec[[1, 0]] * rhs[0]) / det,
        ];
        assert!((z[[row, 0]] - want[0]).abs() < 1e-12);
        assert!((z[[row, 1]] - want[1]).abs() < 1e-12);
    }
}

#[test]
fn gfa_stored_factors_equal_projection() {
    let (views, _) = factor_views(90, &[6, 8], &[3.0, 1.5], 0.2, 3).unwrap();
    let mut rows = vec![vec![true, true]; 90];
    for r in rows.iter_mut().step_by(4) {
        r[1] = false;
    }
    let mask = ObservedMask::from_rows(&rows).unwrap();
    let mut cfg = IntegrationConfig::new(Method::Gfa);
    cfg.max_factors = 4;
    let (model, rep) = gfa_fit(&views, &cfg, Some(&mask)).unwrap();
    let z = gfa_impute_latent(&model, &views, &mask).unwrap();
    assert!(max_abs((&z - &rep.scores).view()) < 1e-9);
    assert!(model.elbo_trace.windows(2).all(|w| w[1] >= w[0] - 1e-6));
}

#[test]
fn gfa_prunes_unneeded_factors() {
    let (views, _) = factor_views(120, &[10, 10], &[3.0, 2.0], 0.1, 8).unwrap();
    let mut cfg = IntegrationConfig::new(Method::Gfa);
    cfg.max_factors = 6;
    let (model, rep) = gfa_fit(&views, &cfg, None).unwrap();
    assert_eq!(rep.n_components(), 2, "{:?}", model.active_factors);
    assert_eq!(rep.component_names(), vec!["Factor1", "Factor2"]);
}

#[test]
fn ajive_noise_columns_never_raise_joint_rank() {
    use rand::{Rng, SeedableRng};
    for seed in 0..5 {
        let data = planted_views(&PlantedConfig {
            n_samples: 200,
            view_dims: vec![10, 12, 8],
            noise_sd: 0.05,
            seed,
            ..PlantedConfig::default()
        })
        .unwrap();
        let (base, _) = ajive_fit(&data.datasets, &ajive_config(vec![2, 2, 2])).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
        let v = &data.datasets[1];
        let extra = Array2::from_shape_fn((200, 6), |_| rng.random_range(-0.05..0.05));
        let values = ndarray::concatenate![Axis(1), v.values(), extra];
        let mut names = v.feature_names().to_vec();
        names.extend((0..6).map(|j| format!("noise{j}")));
        let noisy = ModalityDataset::new(&v.name, v.sample_ids().to_vec(), names, values).unwrap();
        let views = vec![data.datasets[0].clone(), noisy, data.datasets[2].clone()];
        let (more, _) = ajive_fit(&views, &ajive_config(vec![2, 2, 2])).unwrap();
        assert!(more.joint_rank() <= base.joint_rank(), "seed {seed}");
    }
}

#[test]
fn gfa_full_mask_matches_unmasked_path() {
    let (views, _) = factor_views(60, &[5, 7], &[2.0, 1.0], 0.2, 12).unwrap();
    let mut cfg = IntegrationConfig::new(Method::Gfa);
    cfg.max_factors = 3;
    let (_, plain) = gfa_fit(&views, &cfg, None).unwrap();
    let (_, masked) = gfa_fit(&views, &cfg, Some(&ObservedMask::all_observed(60, 2))).unwrap();
    assert_eq!(plain, masked);
    let (_, again) = gfa_fit(&views, &cfg, None).unwrap();
    assert_eq!(plain, again);
}

#[test]
fn gfa_reconstruction_is_scale_equivariant() {
    let (views, _) = factor_views(100, &[8, 6], &[3.0, 1.5], 0.1, 21).unwrap();
    let mut cfg = IntegrationConfig::new(Method::Gfa);
    cfg.max_factors = 3;
    let rel_err = |views: &[ModalityDataset]| {
        let (m, _) = gfa_fit(views, &cfg, None).unwrap();
        let y = views[0].values();
        let yc = linalg::center_columns(y, linalg::column_means(y).view());
        let r = &yc - &m.factors.dot(&m.loadings[0].t());
        (linalg::frobenius_sq(r.view()) / linalg::frobenius_sq(yc.view())).sqrt()
    };
    let base = rel_err(&views);
    let scaled = vec![views[0].with_values(views[0].values().to_owned() * 4.0).unwrap(), views[1].clone()];
    assert!((rel_err(&scaled) - base).abs() <= 1e-3);
}

#[test]
fn ajive_is_deterministic() {
    let data = planted_views(&PlantedConfig {
        n_samples: 100,
        view_dims: vec![6, 6],
        individual_ranks: vec![1, 1],
        seed: 5,
        ..PlantedConfig::default()
    })
    .unwrap();
    let (_, a) = ajive_fit(&data.datasets, &ajive_config(vec![2, 2])).unwrap();
    let (_, b) = ajive_fit(&data.datasets, &ajive_config(vec![2, 2])).unwrap();
    assert_eq!(a, b);
}
