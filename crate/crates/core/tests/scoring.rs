use nalgebra::{DMatrix, DVector};
use panoiqa_core::distortion::gaussian_blur_rgb;
use panoiqa_core::recurrent::train_integrated_scorer;
use panoiqa_core::reference::{viewport_psnr, vp_psnr, ws_weight};
use panoiqa_core::scorer::TrainOptions;
use panoiqa_core::synth::procedural_sources;
use panoiqa_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_samples(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<TrainingSample<f64>> {
    (0..n)
        .map(|_| {
            let viewports = (0..m)
                .map(|_| {
                    FeatureVector::new(
                        (0..FEATURE_DIM)
                            .map(|k| rng.gen_range(0.0..10.0) * (k + 1) as f64)
                            .collect(),
                    )
                    .unwrap()
                })
                .collect();
            TrainingSample {
                viewports,
                mos: rng.gen_range(1.0..5.0),
            }
        })
        .collect()
}

/// `(ZᵀZ + λ·diag(1,…,1,0))⁻¹ Zᵀy` on z-scored viewport-mean features with
/// an appended unpenalized intercept column.
fn ridge_oracle(samples: &[TrainingSample<f64>], ridge: f64) -> (Vec<f64>, f64) {
    let n = samples.len();
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            (0..FEATURE_DIM)
                .map(|k| s.viewports.iter().map(|v| v.values()[k]).sum::<f64>() / s.viewports.len() as f64)
                .collect()
        })
        .collect();
    let mut z = DMatrix::<f64>::zeros(n, FEATURE_DIM + 1);
    for k in 0..FEATURE_DIM {
        let mean = rows.iter().map(|r| r[k]).sum::<f64>() / n as f64;
        let sd = (rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        for i in 0..n {
            z[(i, k)] = (rows[i][k] - mean) / sd;
        }
    }
    for i in 0..n {
        z[(i, FEATURE_DIM)] = 1.0;
    }
    let y = DVector::from_iterator(n, samples.iter().map(|s| s.mos));
    let mut a = z.transpose() * &z;
    for k in 0..FEATURE_DIM {
        a[(k, k)] += ridge;
    }
    let beta = a.lu().solve(&(z.transpose() * y)).unwrap();
    (beta.iter().take(FEATURE_DIM).copied().collect(), beta[FEATURE_DIM])
}

#[test]
fn ridge_matches_normal_equation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for trial in 0..50 {
        let n = rng.gen_range(6..60);
        let samples = random_samples(&mut rng, n, 8);
        let s = train_linear_scorer(&samples).unwrap();
        let (w, b) = ridge_oracle(&samples, 1e-3);
        for (x, y) in s.projection.iter().zip(&w) {
            assert!((x - y).abs() < 1e-8, "trial {trial}: {x} vs {y}");
        }
        assert!((s.bias - b).abs() < 1e-8);
    }
}

#[test]
fn realizable_targets_are_reproduced() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut samples = random_samples(&mut rng, 40, 1);
    for s in &mut samples {
        let v = s.viewports[0].values();
        s.mos = 0.3 * v[0] - 0.1 * v[3] + 2.0;
    }
    let opts = TrainOptions {
        ridge: 1e-12,
        ..Default::default()
    };
    let s = scorer::train_linear_scorer_with(&samples, opts).unwrap();
    for x in &samples {
        assert!((s.score_image(&x.viewports).unwrap() - x.mos).abs() < 1e-6);
    }
}

#[test]
fn feature_rescaling_leaves_predictions_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let samples = random_samples(&mut rng, 30, 4);
    let base = train_linear_scorer(&samples).unwrap();
    for k in 0..FEATURE_DIM {
        let c = rng.gen_range(0.01..100.0);
        let scaled: Vec<TrainingSample<f64>> = samples
            .iter()
            .map(|s| TrainingSample {
                viewports: s
                    .viewports
                    .iter()
                    .map(|v| {
                        let mut vals = v.values().to_vec();
                        vals[k] *= c;
                        FeatureVector::new(vals).unwrap()
                    })
                    .collect(),
                mos: s.mos,
            })
            .collect();
        let other = train_linear_scorer(&scaled).unwrap();
        for (a, b) in samples.iter().zip(&scaled) {
            let pa = base.score_image(&a.viewports).unwrap();
            let pb = other.score_image(&b.viewports).unwrap();
            assert!((pa - pb).abs() < 1e-6, "feature {k} scale {c}: {pa} vs {pb}");
        }
    }
}

#[test]
fn constant_mos_gives_constant_predictions() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let mut samples = random_samples(&mut rng, 20, 3);
    for s in &mut samples {
        s.mos = 3.25;
    }
    let s = train_linear_scorer(&samples).unwrap();
    assert!(s.projection.iter().all(|p| p.abs() < 1e-9));
    assert!((s.score_image(&samples[0].viewports).unwrap() - 3.25).abs() < 1e-9);
}

proptest! {
    #[test]
    fn pooling_is_permutation_invariant_and_bounded(mut xs in prop::collection::vec(-1e6f64..1e6, 1..40), seed in any::<u64>()) {
        let p = pool_scores(&xs).unwrap();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(p >= lo - 1e-9 * lo.abs().max(1.0) && p <= hi + 1e-9 * hi.abs().max(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..xs.len()).rev() {
            xs.swap(i, rng.gen_range(0..=i));
        }
        let q = pool_scores(&xs).unwrap();
        prop_assert!((p - q).abs() <= 1e-9 * p.abs().max(1.0));
    }

    #[test]
    fn recurrent_states_stay_in_open_unit_interval(
        xs in prop::collection::vec(prop::collection::vec(-30f64..30.0, FEATURE_DIM), 1..12),
        wh in -3f64..3.0,
        wx in -3f64..3.0,
        b in -3f64..3.0,
    ) {
        let agg = RecurrentAggregator::scalar(wh, wx, b);
        let fs: Vec<FeatureVector64> = xs.into_iter().map(|v| FeatureVector::new(v).unwrap()).collect();
        for h in aggregate_recurrent(&agg, &fs).unwrap() {
            prop_assert!(h > 0.0 && h < 1.0);
        }
    }
}

#[test]
fn recurrence_hand_values() {
    let one = FeatureVector::new(vec![1.0]).unwrap();
    let h = aggregate_recurrent(&RecurrentAggregator::scalar(1.0, 1.0, 0.0), std::slice::from_ref(&one)).unwrap();
    assert!((h[0] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
    let zero = RecurrentAggregator::scalar(0.0, 0.0, 0.0);
    let xs = vec![FeatureVector::new(vec![7.0, -2.0]).unwrap(); 3];
    assert_eq!(aggregate_recurrent(&zero, &xs).unwrap(), vec![0.5, 0.5]);
    let memoryless = RecurrentAggregator::scalar(0.0, 1.0, 0.0);
    let a = vec![FeatureVector::new(vec![9.0]).unwrap(), one.clone()];
    let b = vec![FeatureVector::new(vec![-4.0]).unwrap(), one];
    assert_eq!(
        aggregate_recurrent(&memoryless, &a).unwrap(),
        aggregate_recurrent(&memoryless, &b).unwrap()
    );
}

fn image_features(img: &ErpImage, traj: &Trajectory64) -> Vec<FeatureVector64> {
    extract_viewports(img, traj)
        .unwrap()
        .iter()
        .map(extract_features)
        .collect()
}

#[test]
fn partial_and_integrated_heads_diverge_on_a_single_distorted_viewport() {
    let traj = make_trajectory::<f64>(TrajectoryMode::Image8);
    let sources = procedural_sources(3, 41, 512, 256).unwrap();
    let plan = DatabasePlan::new("train", vec![DistortionType::Gb], 5, vec![ScopeKind::Homogeneous]);
    let db = build_database(&sources, &plan, 41).unwrap();
    let samples: Vec<TrainingSample<f64>> = db
        .records
        .iter()
        .map(|r| TrainingSample {
            viewports: image_features(&r.image, &traj),
            mos: r.mos,
        })
        .collect();
    let partial = train_linear_scorer(&samples).unwrap();
    let integrated =
        train_integrated_scorer(&samples, RecurrentAggregator::recency(), TrainOptions::default()).unwrap();

    // a narrow cap at +z touches viewport 0 only
    let scope = Scope::Heterogeneous {
        lens_index: 4,
        cap_radius: 8f64.to_radians(),
    };
    let spec = DistortionSpec::from_level(DistortionType::Gb, 5, scope, 0.0).unwrap();
    let clean = &sources[0];
    let hurt = apply_distortion(clean, &spec, 0).unwrap();
    let fc = image_features(clean, &traj);
    let fh = image_features(&hurt, &traj);
    assert_ne!(fc[0], fh[0]);
    assert_eq!(fc[1..], fh[1..]);

    let dp = partial.score_image(&fh).unwrap() - partial.score_image(&fc).unwrap();
    let single = score_viewport(&partial, &fh[0]).unwrap() - score_viewport(&partial, &fc[0]).unwrap();
    assert!((dp - single / 8.0).abs() < 1e-12, "partial mapping dilutes by 1/M");

    let si = integrated.score_image(&fh).unwrap();
    let sp = partial.score_image(&fh).unwrap();
    assert!((si - sp).abs() > 1e-6, "integrated {si} vs partial {sp}");
    let di = si - integrated.score_image(&fc).unwrap();
    assert!((di - dp).abs() > 1e-9);
}

fn random_viewport(rng: &mut ChaCha8Rng, n: usize) -> Viewport64 {
    let smooth = rng.gen_bool(0.5);
    let data = (0..n * n * 3)
        .map(|i| {
            if smooth {
                let (x, y) = ((i / 3) % n, (i / 3) / n);
                128.0 + 100.0 * ((x as f64 * 0.3).sin() * (y as f64 * 0.2).cos()) + rng.gen_range(-5.0..5.0)
            } else {
                rng.gen_range(0.0..255.0)
            }
        })
        .collect();
    Viewport::new(n, n, data, SphericalPoint::equator(0.0), std::f64::consts::FRAC_PI_3).unwrap()
}

#[test]
fn blur_lowers_laplacian_variance_on_random_viewports() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for i in 0..100 {
        let vp = random_viewport(&mut rng, 48);
        let blurred = gaussian_blur_rgb(vp.data(), 48, 48, rng.gen_range(0.5..4.0));
        let bvp = Viewport::new(48, 48, blurred, vp.center(), vp.fov()).unwrap();
        let a = extract_features(&vp).laplacian_variance();
        let b = extract_features(&bvp).laplacian_variance();
        assert!(b < a, "image {i}: {b} !< {a}");
    }
}

#[test]
fn sharpness_is_monotone_under_blur() {
    let traj = make_trajectory::<f64>(TrajectoryMode::Image8);
    for (k, src) in procedural_sources(4, 36, 512, 256).unwrap().iter().enumerate() {
        let mut last = f64::INFINITY;
        for sigma in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            let spec = DistortionSpec {
                kind: DistortionKind::GaussianBlur { sigma },
                scope: Scope::Homogeneous,
                level: 1,
            };
            let img = apply_distortion(src, &spec, 0).unwrap();
            let s: f64 = FixedScorer::Sharpness.score(&img, None, &traj).unwrap();
            assert!(s <= last, "source {k} sigma {sigma}: {s} > {last}");
            last = s;
        }
    }
}

#[test]
fn vp_psnr_matches_brute_force_mean() {
    let traj = make_trajectory::<f64>(TrajectoryMode::Image8);
    let src = procedural_panorama("r", 37, 512, 256).unwrap();
    let spec = DistortionSpec::from_level(DistortionType::Gn, 2, Scope::Homogeneous, 0.0).unwrap();
    let img = apply_distortion(&src, &spec, 3).unwrap();
    let a = extract_viewports(&img, &traj).unwrap();
    let b = extract_viewports(&src, &traj).unwrap();
    let mut total = 0.0;
    for (x, y) in a.iter().zip(&b) {
        let mse: f64 = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            / x.data().len() as f64;
        total += 10.0 * (255.0f64 * 255.0 / mse).log10();
    }
    let got = vp_psnr(&img, &src, &traj).unwrap();
    assert!((got - total / 8.0).abs() < 1e-9);
    assert_eq!(viewport_psnr(&a[0], &a[0]).unwrap(), 100.0);
}

#[test]
fn reference_scorers_need_a_reference() {
    let traj = make_trajectory::<f64>(TrajectoryMode::Image8);
    let src = ErpImage::filled("f", 512, 256, [9, 9, 9]).unwrap();
    for s in [FixedScorer::VpPsnr, FixedScorer::WsPsnr] {
        assert!(matches!(
            s.score(&src, None, &traj),
            Err(ScoringError::MissingReference(_))
        ));
    }
    assert_eq!(FixedScorer::WsPsnr.score(&src, Some(&src), &traj).unwrap(), 100.0);
    assert_eq!(ws_psnr(&src, &src).unwrap(), f64::INFINITY);
}

#[test]
fn ws_psnr_of_uniform_mse_is_weight_free() {
    // every row has squared error 25.5² on average: 103 samples off by 25,
    // 101 off by 26, over 68 pixels × 3 channels
    let (w, h) = (68, 34);
    let reference = ErpImage::filled("r", w, h, [100, 100, 100]).unwrap();
    let mut data = reference.data().to_vec();
    for row in data.chunks_mut(w * 3) {
        for (i, v) in row.iter_mut().enumerate() {
            *v += if i < 103 { 25 } else { 26 };
        }
    }
    let img = ErpImage::new("d", w, h, data).unwrap();
    let got = ws_psnr(&img, &reference).unwrap();
    assert!((got - 20.0).abs() < 1e-9, "{got}");
}

#[test]
fn ws_psnr_single_pixel_hand_sum() {
    let reference = ErpImage::filled("r", 4, 2, [50, 60, 70]).unwrap();
    let mut data = reference.data().to_vec();
    // pixel (1, 0): channel errors 10, 0, 3
    data[3] += 10;
    data[5] += 3;
    let img = ErpImage::new("d", 4, 2, data).unwrap();
    let w0 = (-std::f64::consts::FRAC_PI_4).cos();
    let w1 = std::f64::consts::FRAC_PI_4.cos();
    assert!((ws_weight(0, 2) - w0).abs() < 1e-15 && (ws_weight(1, 2) - w1).abs() < 1e-15);
    let mse = w0 * (100.0 + 9.0) / (3.0 * 4.0 * (w0 + w1));
    let expected = 10.0 * (255.0f64 * 255.0 / mse).log10();
    let got = ws_psnr(&img, &reference).unwrap();
    assert!((got - expected).abs() < 1e-10);
}
