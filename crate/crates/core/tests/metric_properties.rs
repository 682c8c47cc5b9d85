mod common;

use common::*;
use graphmlp_core::metrics::{
    evaluate, joint_errors, mpjpe, pa_mpjpe, pck_auc_from_errors, procrustes_align, AucGrid, Point3,
};
use proptest::prelude::*;
use rand::Rng;

fn frob(a: &[Point3], b: &[Point3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (0..3).map(|i| (p[i] - q[i]).powi(2)).sum::<f64>())
        .sum()
}

#[test]
fn alignment_properties_on_random_pairs() {
    let mut r = rng(10);
    for _ in 0..300 {
        let target = random_pose(&mut r, 17, 500.0);
        let noise = random_pose(&mut r, 17, 80.0);
        let rot = random_rotation(&mut r);
        let s = r.gen_range(0.5..2.0);
        let t = [0; 3].map(|_| r.gen_range(-100.0..100.0));
        let noisy: Vec<Point3> = target
            .iter()
            .zip(&noise)
            .map(|(a, b)| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
            .collect();
        let pred = similarity(&noisy, s, &rot, t);

        let pa = pa_mpjpe(&pred, &target).unwrap();
        assert!(pa <= mpjpe(&pred, &target).unwrap() + 1e-9);

        let rot2 = random_rotation(&mut r);
        let s2 = r.gen_range(0.1..10.0);
        let t2 = [0; 3].map(|_| r.gen_range(-1000.0..1000.0));
        let moved = similarity(&pred, s2, &rot2, t2);
        assert!((pa_mpjpe(&moved, &target).unwrap() - pa).abs() <= 1e-6);

        let best = frob(&procrustes_align(&pred, &target).unwrap(), &target);
        for _ in 0..50 {
            let cand = similarity(
                &pred,
                r.gen_range(0.1..3.0),
                &random_rotation(&mut r),
                [0; 3].map(|_| r.gen_range(-200.0..200.0)),
            );
            assert!(best <= frob(&cand, &target) + 1e-9);
        }
    }
}

#[test]
fn exact_similarity_is_recovered() {
    let mut r = rng(11);
    let target = random_pose(&mut r, 17, 400.0);
    let pred = similarity(&target, 2.0, &random_rotation(&mut r), [10.0, -20.0, 30.0]);
    assert!(pa_mpjpe(&pred, &target).unwrap() < 1e-6);
    let aligned = procrustes_align(&target, &target).unwrap();
    assert!(frob(&aligned, &target).sqrt() < 1e-9);
}

#[test]
fn collinear_target_is_rejected() {
    let target: Vec<Point3> = (0..5).map(|i| [i as f64, 2.0 * i as f64, 0.0]).collect();
    let pred = random_pose(&mut rng(12), 5, 10.0);
    assert!(procrustes_align(&pred, &target).is_err());
}

#[test]
fn auc_grid_cases() {
    let grid = AucGrid::default();
    assert_eq!(grid.thresholds().len(), 31);
    assert_eq!(pck_auc_from_errors(&[0.0; 17], &grid).unwrap(), (100.0, 100.0));
    assert_eq!(pck_auc_from_errors(&[200.0; 17], &grid).unwrap(), (0.0, 0.0));
    // Thresholds 100, 105, ..., 150 accept a 100mm error: 11 of 31.
    let (pck, auc) = pck_auc_from_errors(&[100.0; 17], &grid).unwrap();
    assert_eq!(pck, 100.0);
    let passing = grid.thresholds().iter().filter(|&&t| t >= 100.0).count();
    assert_eq!(passing, 11);
    assert!((auc - 100.0 * passing as f64 / 31.0).abs() < 1e-12);
    assert!(pck_auc_from_errors(&[], &grid).is_err());
}

#[test]
fn ground_truth_gives_zero_report() {
    let mut r = rng(13);
    let targets: Vec<Vec<Point3>> = (0..4).map(|_| random_pose(&mut r, 17, 300.0)).collect();
    let report = evaluate(&targets, &targets).unwrap();
    assert_eq!(report.mpjpe, 0.0);
    assert!(report.pa_mpjpe < 1e-9);
    assert_eq!((report.pck_150, report.auc), (100.0, 100.0));
    assert!(report.per_joint_errors.iter().all(|&e| e == 0.0));
    assert!(evaluate(&[], &[]).is_err());
}

fn pose_strategy(n: usize) -> impl Strategy<Value = Vec<Point3>> {
    prop::collection::vec(prop::array::uniform3(-1000i32..1000), n)
        .prop_map(|v| v.into_iter().map(|p| p.map(f64::from)).collect())
}

proptest! {
    #[test]
    fn mpjpe_is_translation_equivariant(
        pred in pose_strategy(17),
        target in pose_strategy(17),
        c in prop::array::uniform3(-1000i32..1000),
    ) {
        let shift = |p: &Vec<Point3>| -> Vec<Point3> {
            p.iter().map(|v| [0, 1, 2].map(|i| v[i] + c[i] as f64)).collect()
        };
        prop_assert_eq!(mpjpe(&shift(&pred), &shift(&target)).unwrap(), mpjpe(&pred, &target).unwrap());
    }

    #[test]
    fn pck_auc_bounds(errors in prop::collection::vec(0.0f64..400.0, 1..200)) {
        let (pck, auc) = pck_auc_from_errors(&errors, &AucGrid::default()).unwrap();
        prop_assert!(0.0 <= auc && auc <= pck && pck <= 100.0);
    }

    #[test]
    fn auc_is_monotone_under_error_reduction(
        errors in prop::collection::vec(0.0f64..300.0, 1..100),
        idx in any::<prop::sample::Index>(),
        factor in 0.0f64..1.0,
    ) {
        let grid = AucGrid::default();
        let (_, before) = pck_auc_from_errors(&errors, &grid).unwrap();
        let mut reduced = errors.clone();
        let i = idx.index(reduced.len());
        reduced[i] *= factor;
        let (_, after) = pck_auc_from_errors(&reduced, &grid).unwrap();
        prop_assert!(after >= before);
    }

    #[test]
    fn pa_mpjpe_never_exceeds_mpjpe(pred in pose_strategy(17), target in pose_strategy(17)) {
        prop_assert!(pa_mpjpe(&pred, &target).unwrap() <= mpjpe(&pred, &target).unwrap() + 1e-9);
        let e = joint_errors(&pred, &target).unwrap();
        prop_assert!(e.iter().all(|v| *v >= 0.0));
    }
}
