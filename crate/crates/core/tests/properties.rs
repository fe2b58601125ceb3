//! Property tests for the geometric, algebraic and estimation invariants.

use nalgebra::{DMatrix, Matrix3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trifocal::bench::{self, pose_errors, NoiseAxis, SceneConfig};
use trifocal::geometry::{
    cayley_rotation, projection_matrix, q_from_poses, recover_unaligned_pose, tensor_from_cameras,
    trifocal_from_poses, triplet_residual, yaw_rotation, AlignmentRotation, FullPose, PointTriplet,
    TrifocalTensor, Vec3, YawPose,
};
use trifocal::linear::extract_motion;
use trifocal::minimal::{
    build_f, build_reduced_f, reduced_minor_polys, solve_3pt, solve_3pt_with, MinimalOptions,
};
use trifocal::poly::{exact_quotient, resultant_roots, BivariatePoly};
use trifocal::ransac::{ransac, sampson_error, EnforceMode, RansacConfig};
use trifocal::synth::yaw_problem;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-range..range).prop_map(Vec3::from)
}

fn yaw_pose() -> impl Strategy<Value = YawPose> {
    (-3.0..3.0f64, vec3(5.0)).prop_map(|(theta, t)| YawPose::new(theta, t))
}

fn rand_rotation(axis: Vec3) -> Matrix3<f64> {
    nalgebra::Rotation3::from_scaled_axis(axis).into_inner()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn yaw_rotation_inverts(theta in -10.0..10.0f64) {
        let m = yaw_rotation(theta) * yaw_rotation(-theta);
        prop_assert!((m - Matrix3::identity()).amax() < 1e-14);
    }

    #[test]
    fn cayley_matches_yaw(theta in -3.1..3.1f64) {
        let d = cayley_rotation((theta / 2.0).tan()) - yaw_rotation(theta);
        prop_assert!(d.amax() < 1e-12, "{}", d.amax());
    }

    #[test]
    fn tensor_paths_agree(p2 in yaw_pose(), p3 in yaw_pose()) {
        prop_assume!(p2.t.norm() > 1e-3 || p3.t.norm() > 1e-3);
        let from_q = trifocal_from_poses(&p2, &p3).unwrap();
        let cams = TrifocalTensor {
            slices: tensor_from_cameras(&projection_matrix(&p2), &projection_matrix(&p3)),
            q: None,
        };
        let scale = q_from_poses(&p2, &p3).amax();
        prop_assert!(TrifocalTensor::from_q(&q_from_poses(&p2, &p3)).max_abs_diff(&cams) <= 1e-14 * scale);
        prop_assert!(from_q.max_abs_diff(&cams) <= 1e-14 * scale);
    }

    #[test]
    fn residual_is_multilinear(
        p2 in yaw_pose(), p3 in yaw_pose(),
        a in vec3(2.0), b in vec3(2.0), c in vec3(2.0), d in vec3(2.0),
        alpha in -3.0..3.0f64, beta in -3.0..3.0f64,
    ) {
        prop_assume!(p2.t.norm() > 1e-3 || p3.t.norm() > 1e-3);
        let t = trifocal_from_poses(&p2, &p3).unwrap();
        let res = |x1: Vec3, x2: Vec3, x3: Vec3| triplet_residual(&PointTriplet::new(x1, x2, x3), &t);
        let tol = 1e-10 * (1.0 + t.slices.iter().map(|s| s.amax()).fold(0.0, f64::max)) * 100.0;
        // linear in the first view
        let lhs = res(a * alpha + b * beta, c, d);
        let rhs = res(a, c, d) * alpha + res(b, c, d) * beta;
        prop_assert!((lhs - rhs).amax() < tol);
        // linear in the second and the third view separately
        let lhs = res(a, b * alpha + c * beta, d);
        let rhs = res(a, b, d) * alpha + res(a, c, d) * beta;
        prop_assert!((lhs - rhs).amax() < tol);
        let lhs = res(a, b, c * alpha + d * beta);
        let rhs = res(a, b, c) * alpha + res(a, b, d) * beta;
        prop_assert!((lhs - rhs).amax() < tol);
    }

    #[test]
    fn unaligned_pose_is_a_rotation(p in yaw_pose(), a1 in vec3(1.4), ak in vec3(1.4)) {
        let full = recover_unaligned_pose(&p, &AlignmentRotation::new(a1.x, a1.y), &AlignmentRotation::new(ak.x, ak.y));
        let r = full.rotation;
        prop_assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-14);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn extraction_ignores_sign_and_scale(seed in any::<u64>(), scale in 1e-3..1e3f64) {
        let pb = yaw_problem(&mut ChaCha8Rng::seed_from_u64(seed), 4);
        let q = q_from_poses(&pb.p2, &pb.p3);
        let (a, b) = extract_motion(&q, &pb.triplets).unwrap();
        for q2 in [-q, q * scale] {
            let (c, d) = extract_motion(&q2, &pb.triplets).unwrap();
            prop_assert!((a.theta - c.theta).abs() < 1e-12 && (b.theta - d.theta).abs() < 1e-12);
            prop_assert!((a.t.normalize() - c.t.normalize()).amax() < 1e-12);
            prop_assert!((b.t.normalize() - d.t.normalize()).amax() < 1e-12);
        }
    }

    #[test]
    fn quotient_round_trip(coeffs in prop::collection::vec(-1.0..1.0f64, 49), a in 0usize..4, b in 0usize..4) {
        let g = BivariatePoly::new(DMatrix::from_vec(7, 7, coeffs));
        let p = g.mul(&BivariatePoly::kernel(a, b));
        let back = exact_quotient(&p, a, b).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                prop_assert!((back.coeff(i, j) - g.coeff(i, j)).abs() < 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn candidates_satisfy_both_minors(seed in any::<u64>()) {
        let pb = yaw_problem(&mut ChaCha8Rng::seed_from_u64(seed), 3);
        let f = build_f(&pb.triplets).unwrap();
        let g = build_reduced_f(&pb.triplets).unwrap();
        let (p, r) = reduced_minor_polys(&f, &g).unwrap();
        let ratio = |c: &trifocal::minimal::CandidatePose| {
            let sv = f.eval(c.s2, c.s3).singular_values();
            sv.min() / sv.max()
        };
        // default tolerance, sized for noisy samples
        let cands = solve_3pt(&pb.triplets).unwrap();
        prop_assert!(cands.len() <= 6);
        for c in &cands {
            prop_assert!(p.eval(c.s2, c.s3).abs() <= 1e-6 * p.eval_abs(c.s2, c.s3));
            prop_assert!(r.eval(c.s2, c.s3).abs() <= 1e-6 * r.eval_abs(c.s2, c.s3));
            prop_assert!(ratio(c) <= MinimalOptions::default().rank_tol);
        }
        // exact-data tolerance: every survivor is a true rank drop and the truth survives
        let strict = MinimalOptions { rank_tol: 1e-6, ..Default::default() };
        let cands = solve_3pt_with(&pb.triplets, &strict).unwrap();
        for c in &cands {
            prop_assert!(ratio(c) < 1e-6);
        }
        let (s2, s3) = (pb.p2.cayley(), pb.p3.cayley());
        prop_assert!(cands.iter().any(|c| (c.s2 - s2).abs() < 1e-6 && (c.s3 - s3).abs() < 1e-6), "{cands:?}");
    }

    #[test]
    fn minor_order_does_not_matter(seed in any::<u64>()) {
        let pb = yaw_problem(&mut ChaCha8Rng::seed_from_u64(seed), 3);
        let f = build_f(&pb.triplets).unwrap();
        let g = build_reduced_f(&pb.triplets).unwrap();
        let (p, r) = reduced_minor_polys(&f, &g).unwrap();
        let mut ab = resultant_roots(&p, &r).unwrap();
        let mut ba = resultant_roots(&r, &p).unwrap();
        let key = |x: &(f64, f64), y: &(f64, f64)| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1));
        ab.sort_by(key);
        ba.sort_by(key);
        prop_assert_eq!(ab.len(), ba.len(), "{:?} {:?}", ab, ba);
        for x in &ab {
            let d = ba.iter().map(|y| (x.0 - y.0).abs().max((x.1 - y.1).abs())).fold(f64::INFINITY, f64::min);
            prop_assert!(d < 1e-8, "{:?} {:?} {}", ab, ba, d);
        }
    }

    #[test]
    fn error_metrics_are_gauge_and_scale_invariant(
        gt in prop::array::uniform2((vec3(1.0), vec3(5.0))),
        est in prop::array::uniform2((vec3(1.0), vec3(5.0))),
        phi in -3.0..3.0f64,
        scale in 1e-3..1e3f64,
    ) {
        let pose = |(w, t): (Vec3, Vec3)| FullPose { rotation: rand_rotation(w), t };
        let [g2, g3] = gt.map(pose);
        let [e2, e3] = est.map(pose);
        prop_assume!([g2.t, g3.t, e2.t, e3.t, g3.t - g2.t, e3.t - e2.t].iter().all(|t| t.norm() > 1e-2));
        let base = pose_errors(&g2, &g3, &e2, &e3);

        let gauge = yaw_rotation(phi);
        let turn = |p: &FullPose| FullPose { rotation: gauge * p.rotation * gauge.transpose(), t: gauge * p.t };
        let turned = pose_errors(&turn(&g2), &turn(&g3), &turn(&e2), &turn(&e3));
        prop_assert!((turned.0 - base.0).abs() < 1e-9 && (turned.1 - base.1).abs() < 1e-9);

        let scaled = |p: &FullPose, s: f64| FullPose { rotation: p.rotation, t: p.t * s };
        let s = pose_errors(&g2, &g3, &scaled(&e2, scale), &scaled(&e3, scale));
        prop_assert!((s.0 - base.0).abs() < 1e-12 && (s.1 - base.1).abs() < 1e-9);

        // flipping one translation maps the angle to its supplement
        let flipped = bench::translation_error_deg(&g2.t, &-e2.t);
        prop_assert!((flipped - (180.0 - bench::translation_error_deg(&g2.t, &e2.t))).abs() < 1e-9);
    }
}

fn noisy_scene(seed: u64, outliers: f64) -> (bench::Scene, SceneConfig) {
    let cfg = SceneConfig {
        n_points: 100,
        pixel_noise_sigma: 1.0,
        seed,
        ..Default::default()
    };
    let mut scene = bench::trial_scene(&cfg, 0).unwrap();
    let mut rng = bench::trial_rng(seed, 1);
    bench::add_outliers(&mut scene, &cfg, outliers, &mut rng).unwrap();
    (scene, cfg)
}

#[test]
fn ransac_is_deterministic_and_consistent() {
    for solver in ["3pt", "4pt"] {
        let (scene, cfg) = noisy_scene(11, 0.3);
        let rc = RansacConfig {
            threshold: 1.0 / cfg.focal,
            seed: 5,
            solver: solver.into(),
            enforce: EnforceMode::Final,
            ..Default::default()
        };
        let a = ransac(&scene.triplets, &rc).unwrap();
        let b = ransac(&scene.triplets, &rc).unwrap();
        assert_eq!(a.inliers, b.inliers);
        assert_eq!(a.p2.theta.to_bits(), b.p2.theta.to_bits());
        assert_eq!(a.p3.t, b.p3.t);
        assert_eq!(a.score, a.inliers.len());
        for (i, t) in scene.triplets.iter().enumerate() {
            let e = sampson_error(t, &a);
            assert_eq!(
                e <= rc.threshold,
                a.inliers.binary_search(&i).is_ok(),
                "{solver} point {i}: {e}"
            );
        }
    }
}

/// The true model's consensus shrinks, on average, as outliers are added.
#[test]
fn true_consensus_does_not_grow_with_outliers() {
    let mean_count = |fraction: f64| {
        (0..100u64)
            .map(|seed| {
                let (scene, cfg) = noisy_scene(seed, fraction);
                let model = trifocal::solver::TripletModel::new(
                    scene.truth.0,
                    scene.truth.1,
                    trifocal_from_poses(&scene.truth.0, &scene.truth.1).unwrap(),
                );
                scene
                    .triplets
                    .iter()
                    .filter(|t| sampson_error(t, &model) <= 1.5 / cfg.focal)
                    .count() as f64
            })
            .sum::<f64>()
            / 100.0
    };
    let counts: Vec<f64> = [0.0, 0.1, 0.3, 0.5]
        .iter()
        .map(|&f| mean_count(f))
        .collect();
    for w in counts.windows(2) {
        assert!(w[1] <= w[0], "{counts:?}");
    }
}

#[test]
fn trials_reproduce_across_calls() {
    let cfg = SceneConfig {
        trials: 5,
        seed: 3,
        ..Default::default()
    };
    let solver = trifocal::solver::MinimalThreePoint::default();
    for axis in [NoiseAxis::Pixel, NoiseAxis::ImuRoll] {
        let a: Vec<_> = (0..5)
            .map(|t| bench::run_trial(&cfg, &solver, t, axis, 0.5))
            .collect();
        let b: Vec<_> = (0..5)
            .map(|t| bench::run_trial(&cfg, &solver, t, axis, 0.5))
            .collect();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(
                (x.eps_r.to_bits(), x.eps_t.to_bits()),
                (y.eps_r.to_bits(), y.eps_t.to_bits())
            );
        }
    }
}
