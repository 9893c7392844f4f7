use panoiqa_core::distortion::{cap_mask, CAP_RAMP_DEG, DEFAULT_CAP_RADIUS_DEG};
use panoiqa_core::synth::{procedural_sources, synthetic_mos};
use panoiqa_core::*;

fn lap_vars(img: &ErpImage) -> Vec<f64> {
    let traj = make_trajectory::<f64>(TrajectoryMode::Image8);
    extract_viewports(img, &traj)
        .unwrap()
        .iter()
        .map(|vp| extract_features(vp).laplacian_variance())
        .collect()
}

fn max_abs_diff(a: &Viewport64, b: &Viewport64) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn plus_x_cap() -> Scope {
    Scope::Heterogeneous {
        lens_index: 0,
        cap_radius: DEFAULT_CAP_RADIUS_DEG.to_radians(),
    }
}

#[test]
fn homogeneous_blur_lowers_every_viewport() {
    let src = procedural_panorama("p", 21, 1024, 512).unwrap();
    let before = lap_vars(&src);
    for level in 1..=5 {
        let spec = DistortionSpec::from_level(DistortionType::Gb, level, Scope::Homogeneous, 0.0).unwrap();
        let after = lap_vars(&apply_distortion(&src, &spec, 0).unwrap());
        for (m, (a, b)) in after.iter().zip(&before).enumerate() {
            assert!(a < b, "level {level} viewport {m}: {a} vs {b}");
        }
    }
}

#[test]
fn heterogeneous_blur_spares_far_viewports() {
    let src = procedural_panorama("p", 22, 1024, 512).unwrap();
    let traj = make_trajectory::<f64>(TrajectoryMode::Image8);
    let spec = DistortionSpec::from_level(DistortionType::Gb, 3, plus_x_cap(), 0.0).unwrap();
    let out = apply_distortion(&src, &spec, 0).unwrap();
    let a = extract_viewports(&src, &traj).unwrap();
    let b = extract_viewports(&out, &traj).unwrap();
    let unchanged = a.iter().zip(&b).filter(|(x, y)| max_abs_diff(x, y) <= 1e-6).count();
    let (before, after) = (lap_vars(&src), lap_vars(&out));
    let dropped = before.iter().zip(&after).filter(|(b, a)| **a <= 0.8 * **b).count();
    assert!(unchanged >= 1, "no viewport left untouched");
    assert!(dropped >= 1, "no viewport lost 20% of its Laplacian variance");
    // viewport 2 looks straight down the +x axis
    assert!(after[2] <= 0.8 * before[2]);
    assert_eq!(max_abs_diff(&a[6], &b[6]), 0.0);
}

#[test]
fn heterogeneous_effects_leave_outside_pixels_bit_identical() {
    let src = procedural_panorama("p", 23, 256, 128).unwrap();
    let cap = DEFAULT_CAP_RADIUS_DEG.to_radians();
    for lens in 0..6 {
        let mask = cap_mask(256, 128, lens, cap);
        for ty in [
            DistortionType::Gb,
            DistortionType::Gn,
            DistortionType::Bd,
            DistortionType::St,
        ] {
            let scope = Scope::Heterogeneous {
                lens_index: lens,
                cap_radius: cap,
            };
            let spec = DistortionSpec::from_level(ty, 5, scope, 1.0).unwrap();
            let out = apply_distortion(&src, &spec, 99).unwrap();
            for (p, &m) in mask.iter().enumerate() {
                if m == 0.0 {
                    assert_eq!(&out.data()[p * 3..p * 3 + 3], &src.data()[p * 3..p * 3 + 3]);
                }
            }
        }
    }
}

#[test]
fn cap_mask_has_full_core_and_ramp_edge() {
    let mask = cap_mask(360, 180, 4, DEFAULT_CAP_RADIUS_DEG.to_radians());
    // pixel center nearest (lon 0, lat 0)
    assert_eq!(mask[90 * 360 + 180], 1.0);
    let ramp_end = DEFAULT_CAP_RADIUS_DEG + CAP_RAMP_DEG;
    for (p, &m) in mask.iter().enumerate() {
        let (x, y) = (p % 360, p / 360);
        let q = erp_to_sphere(x as f64 + 0.5, y as f64 + 0.5, 360.0, 180.0).unwrap();
        let d = q.angular_distance(SphericalPoint { lon: 0.0, lat: 0.0 }).to_degrees();
        assert!((0.0..=1.0).contains(&m));
        if d >= ramp_end + 1e-9 {
            assert_eq!(m, 0.0);
        }
        if d <= DEFAULT_CAP_RADIUS_DEG {
            assert_eq!(m, 1.0);
        }
    }
}

#[test]
fn noise_is_seeded() {
    let src = procedural_panorama("p", 24, 128, 64).unwrap();
    let spec = DistortionSpec::from_level(DistortionType::Gn, 2, Scope::Homogeneous, 0.0).unwrap();
    let a = apply_distortion(&src, &spec, 5).unwrap();
    let b = apply_distortion(&src, &spec, 5).unwrap();
    let c = apply_distortion(&src, &spec, 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.data(), c.data());
}

#[test]
fn brightness_shift_saturates() {
    let src = ErpImage::filled("g", 16, 8, [250, 128, 3]).unwrap();
    let spec = DistortionSpec::from_level(DistortionType::Bd, 1, Scope::Homogeneous, 0.0).unwrap();
    let out = apply_distortion(&src, &spec, 0).unwrap();
    assert_eq!(out.pixel(3, 3), [255, 138, 13]);
}

#[test]
fn synthetic_mos_is_monotone_in_level() {
    for scope in [ScopeKind::Homogeneous, ScopeKind::Heterogeneous] {
        let m: Vec<f64> = (1..=5).map(|l| synthetic_mos(l, 5, scope)).collect();
        assert!(m.windows(2).all(|w| w[1] <= w[0]), "{m:?}");
        assert!(m.iter().all(|v| (1.0..=5.0).contains(v)));
    }
    assert!(synthetic_mos(5, 5, ScopeKind::Heterogeneous) > synthetic_mos(5, 5, ScopeKind::Homogeneous));
}

#[test]
fn database_layout_counts_and_determinism() {
    let sources = procedural_sources(3, 8, 128, 64).unwrap();
    let plan = DatabasePlan::new(
        "mix",
        vec![DistortionType::Gb, DistortionType::Gn],
        3,
        vec![ScopeKind::Homogeneous, ScopeKind::Heterogeneous],
    );
    let a = build_database(&sources, &plan, 17).unwrap();
    assert_eq!(a.records.len(), 3 * (1 + 2 * 3 * 2));
    assert_eq!(a.pristine().count(), 3);
    let mut ids: Vec<&str> = a.records.iter().map(|r| r.id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), a.records.len());

    let b = build_database(&sources, &plan, 17).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(|| build_database(&sources, &plan, 17).unwrap());
    assert_eq!(a, c);
    let d = build_database(&sources, &plan, 18).unwrap();
    assert_ne!(a, d);

    for r in a.distorted() {
        let spec = r.spec.unwrap();
        let expected = match spec.scope {
            Scope::Homogeneous => ScopeKind::Homogeneous,
            Scope::Heterogeneous { .. } => ScopeKind::Heterogeneous,
        };
        assert_eq!(r.mos, synthetic_mos(spec.level, 3, expected));
        assert!(r.reference_path.is_some());
    }
}

#[test]
fn database_rejects_bad_plans() {
    let sources = procedural_sources(3, 8, 64, 32).unwrap();
    let empty = DatabasePlan::new("e", vec![], 3, vec![ScopeKind::Homogeneous]);
    assert!(build_database(&sources, &empty, 0).is_err());
    let levels = DatabasePlan::new("l", vec![DistortionType::Gb], 9, vec![ScopeKind::Homogeneous]);
    assert!(build_database(&sources, &levels, 0).is_err());
    let ok = DatabasePlan::new("o", vec![DistortionType::Gb], 1, vec![ScopeKind::Homogeneous]);
    assert!(build_database(&sources[..2], &ok, 0).is_err());
}

#[test]
fn noise_residual_matches_sigma() {
    let src = ErpImage::filled("g", 512, 256, [128, 128, 128]).unwrap();
    let spec = DistortionSpec::from_level(DistortionType::Gn, 2, Scope::Homogeneous, 0.0).unwrap();
    let out = apply_distortion(&src, &spec, 77).unwrap();
    let n = out.data().len() as f64;
    let r: Vec<f64> = out.data().iter().map(|&v| f64::from(v) - 128.0).collect();
    let mean = r.iter().sum::<f64>() / n;
    let sd = (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((9.5..=10.5).contains(&sd), "{sd}");
}

#[test]
fn blur_and_zero_noise_fix_trivial_inputs() {
    let flat = ErpImage::filled("f", 64, 32, [40, 80, 120]).unwrap();
    for level in 1..=5 {
        let spec = DistortionSpec::from_level(DistortionType::Gb, level, Scope::Homogeneous, 0.0).unwrap();
        assert_eq!(apply_distortion(&flat, &spec, 0).unwrap(), flat);
    }
    let src = procedural_panorama("p", 3, 64, 32).unwrap();
    let spec = DistortionSpec {
        kind: DistortionKind::GaussianNoise { sigma: 0.0 },
        scope: Scope::Homogeneous,
        level: 1,
    };
    assert_eq!(apply_distortion(&src, &spec, 1).unwrap(), src);
}
