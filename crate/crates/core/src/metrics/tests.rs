use super::*;
use crate::body::rodrigues;
use crate::math::Vec3;
use crate::rng::Pcg32;
use alloc::vec::Vec;

fn random_joints(rng: &mut Pcg32, n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|_| Vec3::new(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)))
        .collect()
}

#[test]
fn mpjpe_examples() {
    let mut rng = Pcg32::new(1, 0);
    let gt = random_joints(&mut rng, 14);
    assert_eq!(mpjpe(&gt, &gt, LSP14_PELVIS).unwrap(), 0.0);

    // A global offset disappears under pelvis alignment.
    let offset = Vec3::new(0.003, 0.004, 0.0);
    let shifted: Vec<Vec3> = gt.iter().map(|p| *p + offset).collect();
    assert!(mpjpe(&shifted, &gt, LSP14_PELVIS).unwrap() < 1e-9);

    // One non-hip joint off by 10 mm: mean is 10/14 mm.
    let mut one_off = gt.clone();
    one_off[6] += Vec3::new(0.01, 0.0, 0.0); // right wrist
    let got = mpjpe(&one_off, &gt, LSP14_PELVIS).unwrap();
    assert!((got - 10.0 / 14.0).abs() < 1e-9, "got {got}");

    assert!(mpjpe(&gt[..5], &gt, RootAlign::None).is_err());
}

#[test]
fn pa_mpjpe_removes_similarity_transforms() {
    let mut rng = Pcg32::new(2, 0);
    for _ in 0..20 {
        let gt = random_joints(&mut rng, 14);
        let rot = rodrigues(Vec3::new(
            rng.range(-2.0, 2.0),
            rng.range(-2.0, 2.0),
            rng.range(-2.0, 2.0),
        ));
        let t = Vec3::new(rng.range(-3.0, 3.0), rng.range(-3.0, 3.0), rng.range(-3.0, 3.0));
        let s = rng.range(0.3, 2.5);
        let pred: Vec<Vec3> = gt.iter().map(|p| rot.mul_vec(*p) * s + t).collect();
        let err = pa_mpjpe(&pred, &gt).unwrap();
        assert!(err < 1e-6, "residual {err} mm");
    }
}

#[test]
fn pa_mpjpe_never_exceeds_mpjpe() {
    let mut rng = Pcg32::new(3, 0);
    for _ in 0..50 {
        let gt = random_joints(&mut rng, 14);
        let pred = random_joints(&mut rng, 14);
        let plain = mpjpe(&pred, &gt, RootAlign::None).unwrap();
        let aligned = pa_mpjpe(&pred, &gt).unwrap();
        assert!(aligned <= plain + 1e-9, "{aligned} > {plain}");
    }
}

#[test]
fn pa_mpjpe_rejects_degenerate_sets() {
    // Collinear points cannot anchor a rotation.
    let gt: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
    let pred = gt.clone();
    // Same line: alignment is still solvable in the plane (rank 1 covariance)
    // but the implementation flags sets with no spatial extent at all.
    let flat: Vec<Vec3> = (0..5).map(|_| Vec3::ZERO).collect();
    assert!(pa_mpjpe(&flat, &flat).is_err());
    let _ = (gt, pred);
}

#[test]
fn pck_auc_examples() {
    let mut rng = Pcg32::new(4, 0);
    let gt = random_joints(&mut rng, 14);
    let (pck, auc) = pck_auc(&gt, &gt, RootAlign::None).unwrap();
    assert_eq!((pck, auc), (100.0, 100.0));

    // Zero-anchored fixture keeps every per-joint distance bit-exact.
    let zeros: Vec<Vec3> = (0..14).map(|_| Vec3::ZERO).collect();

    // All joints exactly 151 mm off: nothing passes the 150 mm threshold.
    let off: Vec<Vec3> = zeros.iter().map(|p| *p + Vec3::new(0.151, 0.0, 0.0)).collect();
    let (pck, _) = pck_auc(&off, &zeros, RootAlign::None).unwrap();
    assert_eq!(pck, 0.0);

    // All joints exactly 75 mm off: PCK passes at 150 but the strict
    // inequality fails the 75 mm rung, leaving 15 of 30 thresholds.
    let off: Vec<Vec3> = zeros.iter().map(|p| *p + Vec3::new(0.075, 0.0, 0.0)).collect();
    let dist_mm = (off[0] - zeros[0]).norm() * 1000.0;
    assert_eq!(dist_mm, 75.0, "the 75 mm fixture must be exact");
    let (pck, auc) = pck_auc(&off, &zeros, RootAlign::None).unwrap();
    assert_eq!(pck, 100.0);
    assert_eq!(auc, 50.0);
}

#[test]
fn pck_monotone_in_threshold() {
    // Non-decreasing PCK curve comes with the definition; spot-check by
    // comparing AUC bounds: AUC <= PCK@150.
    let mut rng = Pcg32::new(5, 0);
    for _ in 0..20 {
        let gt = random_joints(&mut rng, 14);
        let pred: Vec<Vec3> = gt
            .iter()
            .map(|p| *p + Vec3::new(rng.range(-0.1, 0.1), rng.range(-0.1, 0.1), 0.0))
            .collect();
        let (pck, auc) = pck_auc(&pred, &gt, RootAlign::None).unwrap();
        assert!(auc <= pck + 1e-9);
    }
}

#[test]
fn mpvpe_examples() {
    let mut rng = Pcg32::new(6, 0);
    let gt = random_joints(&mut rng, 7);
    assert_eq!(mpvpe(&gt, &gt).unwrap(), 0.0);
    let mut pred = gt.clone();
    pred[3] += Vec3::new(0.007, 0.0, 0.0);
    let got = mpvpe(&pred, &gt).unwrap();
    assert!((got - 1.0).abs() < 1e-9, "got {got}");
    assert!(mpvpe(&pred[..3], &gt).is_err());
}

#[test]
fn mse_params_consistency() {
    use crate::body::{PoseParams, ShapeParams};
    use crate::camera::CameraParams;
    use crate::math::Vec2;
    let joints = 24;
    let rank = 10;
    let mut rng = Pcg32::new(7, 0);
    let mut pose = PoseParams::rest(joints);
    for r in &mut pose.rotations {
        *r = Vec3::new(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), rng.range(-1.0, 1.0));
    }
    let shape = ShapeParams {
        coefficients: (0..rank).map(|_| rng.range(-2.0, 2.0)).collect(),
    };
    let camera = CameraParams {
        scale: 120.0,
        offset: Vec2::new(10.0, -4.0),
    };
    let gt_pose = PoseParams::rest(joints);
    let gt_shape = ShapeParams::zeros(rank);
    let gt_camera = CameraParams {
        scale: 100.0,
        offset: Vec2::ZERO,
    };

    // Identical parameters score zero.
    assert_eq!(
        mse_params(&pose, &shape, &camera, &pose, &shape, &camera, true).unwrap(),
        0.0
    );

    // One shape entry off by 2: 4 / element count (everything else equal).
    let mut one_off = gt_shape.clone();
    one_off.coefficients[4] = 2.0;
    let count = crate::loss::regression_element_count(joints, rank);
    let got = mse_params(
        &gt_pose, &one_off, &gt_camera, &gt_pose, &gt_shape, &gt_camera, true,
    )
    .unwrap();
    assert!((got - 4.0 / count as f64).abs() < 1e-12);

    // Shared code path with the regression loss.
    let (loss, _) = crate::loss::regression_loss(
        &pose, &shape, &camera, &gt_pose, &gt_shape, &gt_camera,
    )
    .unwrap();
    let mse = mse_params(&pose, &shape, &camera, &gt_pose, &gt_shape, &gt_camera, true).unwrap();
    assert!((mse - loss / count as f64).abs() < 1e-9 * loss.max(1.0));

    // Excluding the camera removes exactly its squared differences.
    let mse_no_cam =
        mse_params(&pose, &shape, &camera, &gt_pose, &gt_shape, &gt_camera, false).unwrap();
    let cam_sq = (120.0f64 - 100.0).powi(2) + 100.0 + 16.0;
    assert!((mse_no_cam - (loss - cam_sq) / (count - 3) as f64).abs() < 1e-9);
}

fn random_image(rng: &mut Pcg32, w: u32, h: u32, parts: u8) -> crate::raster::IuvImage {
    let mut img = crate::raster::IuvImage::background(w, h);
    for i in 0..(w * h) as usize {
        let p = rng.below(parts as usize + 1) as u8;
        img.part[i] = p;
        if p != 0 {
            img.u[i] = 0.5;
            img.v[i] = 0.5;
        }
    }
    img
}

#[test]
fn segmentation_scores_match_confusion_matrix() {
    let mut rng = Pcg32::new(8, 0);
    for _ in 0..20 {
        let pred = random_image(&mut rng, 8, 8, 3);
        let gt = random_image(&mut rng, 8, 8, 3);
        let merge = PartMergeMap::identity(3);
        let scores = segmentation_scores(&pred, &gt, &merge).unwrap();

        // Independent confusion-matrix computation.
        let mut confusion = [[0usize; 4]; 4];
        for i in 0..64 {
            confusion[pred.part[i] as usize][gt.part[i] as usize] += 1;
        }
        let correct: usize = (0..4).map(|k| confusion[k][k]).sum();
        assert!((scores.accuracy - 100.0 * correct as f64 / 64.0).abs() < 1e-12);
        for g in 1..=3usize {
            let tp = confusion[g][g];
            let pp: usize = (0..4).map(|k| confusion[g][k]).sum();
            let ap: usize = (0..4).map(|k| confusion[k][g]).sum();
            let f1 = if pp + ap == 0 {
                1.0
            } else {
                2.0 * tp as f64 / (pp + ap) as f64
            };
            assert!((scores.per_group_f1[g - 1] - f1).abs() < 1e-12);
        }
    }
}

#[test]
fn segmentation_trivial_cases() {
    let mut rng = Pcg32::new(9, 0);
    let gt = random_image(&mut rng, 8, 8, 3);
    let merge = PartMergeMap::identity(3);
    let same = segmentation_scores(&gt, &gt, &merge).unwrap();
    assert_eq!(same.accuracy, 100.0);
    assert_eq!(same.mean_f1, 1.0);
    assert_eq!(same.fg_f1, 1.0);

    // All-background prediction against a half-foreground truth.
    let mut half = crate::raster::IuvImage::background(8, 8);
    for i in 0..32 {
        half.part[i] = 1;
        half.u[i] = 0.5;
        half.v[i] = 0.5;
    }
    let empty = crate::raster::IuvImage::background(8, 8);
    let scores = segmentation_scores(&empty, &half, &merge).unwrap();
    assert_eq!(scores.fg_accuracy, 50.0);
    assert_eq!(scores.fg_f1, 0.0);
}

#[test]
fn merge_map_granularities() {
    // A 12-part render evaluated at 12, 6 and foreground granularity.
    let model = crate::body::build_procedural_template(&crate::body::TemplateConfig {
        radial_segments: 6,
        axial_segments: 4,
        shape_rank: 2,
        ..Default::default()
    })
    .unwrap();
    let cam = crate::camera::CameraParams::mean_for(&model, 96, 96).unwrap();
    let pose = crate::body::PoseParams::rest(model.joint_count());
    let shape = crate::body::ShapeParams::zeros(model.shape_rank());
    let state = crate::body::BodyState::compute(&model, &pose, &shape).unwrap();
    let (image, _) = crate::raster::rasterize(&model, &state.posed.vertices, &cam, 96, 96).unwrap();

    for merge in [
        PartMergeMap::identity(12),
        PartMergeMap::six_groups(),
        PartMergeMap::foreground(12),
    ] {
        let scores = segmentation_scores(&image, &image, &merge).unwrap();
        assert_eq!(scores.accuracy, 100.0);
        assert_eq!(scores.mean_f1, 1.0);
    }
    // Size mismatch is rejected.
    let small = crate::raster::IuvImage::background(32, 32);
    assert!(segmentation_scores(&small, &image, &PartMergeMap::identity(12)).is_err());
}
