//! The registered gradient checks: every analytic derivative in the crate
//! against central finite differences of its own forward pass.

use alloc::vec::Vec;

use super::{central_diff, central_diff_filtered, rel_error_floored, scaled_max_rel, CheckOptions, CheckReport};
use crate::body::{
    build_procedural_template, lbs_backward, rodrigues, rodrigues_jacobian, BodyModel, BodyState,
    PoseParams, ShapeParams, SkeletonPreset, TemplateConfig,
};
use crate::camera::{project_jacobian, CameraParams};
use crate::correspond::{build_iuv_index, match_pixels, CorrespondenceSet};
use crate::loss::{
    landmark_reprojection_loss, part_mask_loss, part_mask_loss_value, reconstruction_loss,
    regression_loss, GradientVector, JointLimitPrior, PlausibilityPrior,
};
use crate::math::{Vec2, Vec3};
use crate::raster::{
    rasterize, rasterize_backward, soft_part_masks, soft_masks_backward, IuvImage, UvGradients,
};
use crate::rng::Pcg32;
use crate::synth;

/// Runs every registered check over `options.seeds` random configurations
/// and reports the worst relative error per check.
pub fn run_all(options: &CheckOptions) -> Vec<CheckReport> {
    let checks: [fn(&CheckOptions) -> CheckReport; 10] = [
        check_rodrigues,
        check_fk_lbs,
        check_projection,
        check_raster_interior,
        check_soft_masks,
        check_loss_rpj,
        check_loss_msk,
        check_loss_adv,
        check_loss_rec,
        check_loss_rgr,
    ];
    checks
        .iter()
        .map(|check| {
            #[cfg(feature = "std")]
            let started = std::time::Instant::now();
            #[allow(unused_mut)]
            let mut report = check(options);
            #[cfg(feature = "std")]
            {
                report.seconds = started.elapsed().as_secs_f64();
            }
            report
        })
        .collect()
}

fn seeded(options: &CheckOptions, seed_idx: u64, salt: u64) -> Pcg32 {
    Pcg32::new(options.base_seed.wrapping_add(seed_idx), salt)
}

fn check_rodrigues(options: &CheckOptions) -> CheckReport {
    let mut max_err = 0.0f64;
    let h = 1e-6;
    for s in 0..options.seeds {
        let mut rng = seeded(options, s, 1);
        let v = Vec3::new(rng.range(-2.5, 2.5), rng.range(-2.5, 2.5), rng.range(-2.5, 2.5));
        let mut jac = rodrigues_jacobian(v);
        if options.inject_failure {
            jac[0].0[0][0] += 1e-2;
        }
        for k in 0..3 {
            let mut vp = v;
            let mut vm = v;
            vp.set_component(k, v.component(k) + h);
            vm.set_component(k, v.component(k) - h);
            let (rp, rm) = (rodrigues(vp), rodrigues(vm));
            for i in 0..3 {
                for j in 0..3 {
                    let fd = (rp.0[i][j] - rm.0[i][j]) / (2.0 * h);
                    max_err = max_err.max(rel_error_floored(jac[k].0[i][j], fd, 1e-3));
                }
            }
        }
    }
    CheckReport {
        name: "rodrigues_jacobian",
        max_rel_error: max_err,
        tolerance: 1e-5,
        seeds: options.seeds,
        seconds: 0.0,
    }
}

fn small_body() -> BodyModel {
    build_procedural_template(&TemplateConfig {
        parts: 4,
        radial_segments: 4,
        axial_segments: 2,
        shape_rank: 4,
        skeleton: SkeletonPreset::Reduced24,
        seed: 11,
    })
    .expect("gradcheck fixture")
}

// Even smaller body and frame for the mask-loss check, whose finite
// differences re-render the soft masks for every parameter.
fn tiny_body() -> BodyModel {
    build_procedural_template(&TemplateConfig {
        parts: 3,
        radial_segments: 4,
        axial_segments: 2,
        shape_rank: 3,
        skeleton: SkeletonPreset::Reduced24,
        seed: 12,
    })
    .expect("gradcheck fixture")
}

fn random_pose(model: &BodyModel, rng: &mut Pcg32, scale: f64) -> PoseParams {
    let mut pose = PoseParams::rest(model.joint_count());
    for r in &mut pose.rotations {
        *r = Vec3::new(
            rng.range(-scale, scale),
            rng.range(-scale, scale),
            rng.range(-scale, scale),
        );
    }
    pose
}

fn random_shape(model: &BodyModel, rng: &mut Pcg32, scale: f64) -> ShapeParams {
    ShapeParams {
        coefficients: (0..model.shape_rank()).map(|_| rng.range(-scale, scale)).collect(),
    }
}

fn pack(pose: &PoseParams, shape: &ShapeParams, camera: &CameraParams) -> Vec<f64> {
    let mut x = Vec::new();
    for r in &pose.rotations {
        x.extend_from_slice(&[r.x, r.y, r.z]);
    }
    x.extend_from_slice(&shape.coefficients);
    x.extend_from_slice(&[camera.scale, camera.offset.x, camera.offset.y]);
    x
}

fn unpack(x: &[f64], joints: usize, rank: usize) -> (PoseParams, ShapeParams, CameraParams) {
    let mut pose = PoseParams::rest(joints);
    for j in 0..joints {
        pose.rotations[j] = Vec3::new(x[3 * j], x[3 * j + 1], x[3 * j + 2]);
    }
    let shape = ShapeParams {
        coefficients: x[3 * joints..3 * joints + rank].to_vec(),
    };
    let camera = CameraParams {
        scale: x[3 * joints + rank],
        offset: Vec2::new(x[3 * joints + rank + 1], x[3 * joints + rank + 2]),
    };
    (pose, shape, camera)
}

/// Single-component central difference, used to re-verify failures at a
/// smaller step: a finite-difference probe that straddled a subgradient kink
/// agrees once the step shrinks below the kink distance, a genuine analytic
/// error does not.
fn refine_component<F>(mut f: F, x: &[f64], i: usize, h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    probe[i] = x[i] + h;
    let fp = f(&probe);
    probe[i] = x[i] - h;
    let fm = f(&probe);
    (fp - fm) / (2.0 * h)
}

/// Scaled comparison over the reliable components only.
fn scaled_max_rel_masked(analytic: &[f64], fd: &[f64], reliable: &[bool]) -> f64 {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..analytic.len() {
        if reliable[i] {
            a.push(analytic[i]);
            b.push(fd[i]);
        }
    }
    scaled_max_rel(&a, &b)
}

fn flatten(g: &GradientVector) -> Vec<f64> {
    let mut out = Vec::new();
    for r in &g.d_theta {
        out.extend_from_slice(&[r.x, r.y, r.z]);
    }
    out.extend_from_slice(&g.d_beta);
    out.extend_from_slice(&g.d_alpha);
    out
}


fn check_fk_lbs(options: &CheckOptions) -> CheckReport {
    let model = small_body();
    let joints = model.joint_count();
    let rank = model.shape_rank();
    let mut max_err = 0.0f64;
    let h = 1e-5;
    for s in 0..options.seeds {
        let mut rng = seeded(options, s, 2);
        let pose = random_pose(&model, &mut rng, 0.6);
        let shape = random_shape(&model, &mut rng, 1.2);
        let probe_v: Vec<Vec3> = (0..model.vertex_count())
            .map(|_| Vec3::new(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)))
            .collect();
        let probe_j: Vec<Vec3> = (0..joints)
            .map(|_| Vec3::new(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)))
            .collect();
        let state = BodyState::compute(&model, &pose, &shape).unwrap();
        let grad = lbs_backward(&model, &state, &probe_v, &probe_j).unwrap();
        let mut analytic = Vec::new();
        for r in &grad.d_theta {
            analytic.extend_from_slice(&[r.x, r.y, r.z]);
        }
        analytic.extend_from_slice(&grad.d_beta);

        let eval = |x: &[f64]| -> f64 {
            let mut padded = x.to_vec();
            padded.extend_from_slice(&[1.0, 0.0, 0.0]);
            let (p, sh, _) = unpack(&padded, joints, rank);
            let st = BodyState::compute(&model, &p, &sh).unwrap();
            let mut acc = 0.0;
            for (pr, v) in probe_v.iter().zip(&st.posed.vertices) {
                acc += pr.dot(*v);
            }
            for (pr, jp) in probe_j.iter().zip(&st.posed.joint_positions) {
                acc += pr.dot(*jp);
            }
            acc
        };
        let mut x = pack(&pose, &shape, &CameraParams { scale: 1.0, offset: Vec2::ZERO });
        x.truncate(3 * joints + rank);
        let fd = central_diff(eval, &x, h);
        max_err = max_err.max(scaled_max_rel(&analytic, &fd));
    }
    CheckReport {
        name: "fk_lbs_backward",
        max_rel_error: max_err,
        tolerance: 1e-4,
        seeds: options.seeds,
        seconds: 0.0,
    }
}

fn check_projection(options: &CheckOptions) -> CheckReport {
    let mut max_err = 0.0f64;
    for s in 0..options.seeds {
        let mut rng = seeded(options, s, 3);
        let point = Vec3::new(rng.range(-2.0, 2.0), rng.range(-2.0, 2.0), rng.range(-2.0, 2.0));
        let camera = CameraParams {
            scale: rng.range(10.0, 200.0),
            offset: Vec2::new(rng.range(-50.0, 50.0), rng.range(-50.0, 50.0)),
        };
        let jac = project_jacobian(point, &camera);
        // Pixel x as a function of (X, f, offset_x); affine, so any h works.
        let fd = central_diff(
            |v: &[f64]| v[1] * v[0] + v[2],
            &[point.x, camera.scale, camera.offset.x],
            1e-4,
        );
        max_err = max_err.max(rel_error_floored(jac.d_point, fd[0], 1e-3));
        max_err = max_err.max(rel_error_floored(jac.d_scale.x, fd[1], 1e-3));
        max_err = max_err.max(rel_error_floored(1.0, fd[2], 1e-3));
    }
    CheckReport {
        name: "projection",
        max_rel_error: max_err,
        tolerance: 1e-8,
        seeds: options.seeds,
        seconds: 0.0,
    }
}

/// Random triangle soup wrapped as a one-joint body, for the rasterizer and
/// soft-mask checks.
fn soup(rng: &mut Pcg32, tris: usize, extent: f64) -> BodyModel {
    use crate::body::{Joint, Skeleton, TemplateMesh, VertexIuv};
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut vertex_iuv = Vec::new();
    for k in 0..tris {
        let base = vertices.len() as u32;
        for _ in 0..3 {
            vertices.push(Vec3::new(
                rng.range(0.0, extent),
                rng.range(0.0, extent),
                rng.range(0.5, 4.0),
            ));
            vertex_iuv.push(VertexIuv {
                part: (k % 3 + 1) as u8,
                u: rng.uniform(),
                v: rng.uniform(),
            });
        }
        faces.push([base, base + 1, base + 2]);
    }
    let weights = alloc::vec![1.0; vertices.len()];
    BodyModel {
        skeleton: Skeleton {
            joints: alloc::vec![Joint {
                name: alloc::string::String::from("root"),
                parent: None,
                offset: Vec3::ZERO,
            }],
        },
        mesh: TemplateMesh {
            vertices,
            faces,
            vertex_iuv,
            weights,
            shape_basis: Vec::new(),
        },
        parts: 3,
    }
}

fn check_raster_interior(options: &CheckOptions) -> CheckReport {
    let mut max_err = 0.0f64;
    let h = 1e-3;
    let cam = CameraParams {
        scale: 1.0,
        offset: Vec2::ZERO,
    };
    let (w, hgt) = (40u32, 40u32);
    for s in 0..options.seeds {
        let mut rng = seeded(options, s, 4);
        let model = soup(&mut rng, 6, 38.0);
        let (image, trace) = rasterize(&model, &model.mesh.vertices, &cam, w, hgt).unwrap();
        // Pick a covered pixel at least 1.5 px inside its face.
        let mut probe: Option<(u32, u32)> = None;
        'scan: for y in 0..hgt {
            for x in 0..w {
                let i = (y * w + x) as usize;
                if trace.face[i] < 0 {
                    continue;
                }
                let f = model.mesh.faces[trace.face[i] as usize];
                let tri = [
                    model.mesh.vertices[f[0] as usize].xy(),
                    model.mesh.vertices[f[1] as usize].xy(),
                    model.mesh.vertices[f[2] as usize].xy(),
                ];
                let d = crate::raster::signed_distance(
                    Vec2::new(x as f64 + 0.5, y as f64 + 0.5),
                    &tri,
                );
                if d < -1.5 {
                    probe = Some((x, y));
                    break 'scan;
                }
            }
        }
        let Some((px, py)) = probe else { continue };
        let i = (py * w + px) as usize;
        let mut upstream = UvGradients::zeros(w, hgt);
        upstream.d_u[i] = 1.0;
        upstream.d_v[i] = -0.7;
        let projected: Vec<Vec2> = model.mesh.vertices.iter().map(|v| v.xy()).collect();
        let grad = rasterize_backward(&model, &projected, &trace, &upstream).unwrap();

        let face = model.mesh.faces[trace.face[i] as usize];
        let scalar = |verts: &[Vec3]| -> f64 {
            let (_, t) = rasterize(&model, verts, &cam, w, hgt).unwrap();
            let (u, v) = t.uv_at(&model, px, py).unwrap();
            u - 0.7 * v
        };
        for &vi in &face {
            for comp in 0..2 {
                let mut vp = model.mesh.vertices.clone();
                let mut vm = model.mesh.vertices.clone();
                if comp == 0 {
                    vp[vi as usize].x += h;
                    vm[vi as usize].x -= h;
                } else {
                    vp[vi as usize].y += h;
                    vm[vi as usize].y -= h;
                }
                let fd = (scalar(&vp) - scalar(&vm)) / (2.0 * h);
                let an = if comp == 0 {
                    grad[vi as usize].x
                } else {
                    grad[vi as usize].y
                };
                max_err = max_err.max(rel_error_floored(an, fd, 1e-2));
            }
        }
        let _ = image;
    }
    CheckReport {
        name: "raster_interior",
        max_rel_error: max_err,
        tolerance: 1e-3,
        seeds: options.seeds,
        seconds: 0.0,
    }
}

fn check_soft_masks(options: &CheckOptions) -> CheckReport {
    let mut max_err = 0.0f64;
    let h = 1e-5;
    let cam = CameraParams {
        scale: 1.0,
        offset: Vec2::ZERO,
    };
    let (w, hgt) = (28u32, 28u32);
    for s in 0..options.seeds {
        let mut rng = seeded(options, s, 5);
        let model = soup(&mut rng, 4, 24.0);
        let sigma = rng.range(0.5, 2.0);
        let soft = soft_part_masks(&model, &model.mesh.vertices, &cam, w, hgt, sigma).unwrap();
        let upstream: Vec<Vec<f64>> = (0..model.parts)
            .map(|_| (0..(w * hgt) as usize).map(|_| rng.range(-1.0, 1.0)).collect())
            .collect();
        let grad =
            soft_masks_backward(&model, &model.mesh.vertices, &cam, &soft, &upstream).unwrap();
        let scalar = |verts: &[Vec3]| -> f64 {
            let sm = soft_part_masks(&model, verts, &cam, w, hgt, sigma).unwrap();
            let mut acc = 0.0;
            for (mask, up) in sm.masks.iter().zip(&upstream) {
                for (m, g) in mask.iter().zip(up) {
                    acc += m * g;
                }
            }
            acc
        };
        for vi in 0..model.vertex_count() {
            for comp in 0..2 {
                let mut vp = model.mesh.vertices.clone();
                let mut vm = model.mesh.vertices.clone();
                if comp == 0 {
                    vp[vi].x += h;
                    vm[vi].x -= h;
                } else {
                    vp[vi].y += h;
                    vm[vi].y -= h;
                }
                let fd = (scalar(&vp) - scalar(&vm)) / (2.0 * h);
                let an = if comp == 0 { grad[vi].x } else { grad[vi].y };
                max_err = max_err.max(rel_error_floored(an, fd, 1e-3));
            }
        }
    }
    CheckReport {
        name: "soft_masks",
        max_rel_error: max_err,
        tolerance: 1e-4,
        seeds: options.seeds,
        seconds: 0.0,
    }
}

/// Common fixture for the loss checks: a small body, ground-truth scene and
/// a perturbed current estimate.
struct LossScene {
    model: BodyModel,
    pose: PoseParams,
    shape: ShapeParams,
    camera: CameraParams,
    target: IuvImage,
    pairs: CorrespondenceSet,
    gt_pose: PoseParams,
    gt_shape: ShapeParams,
    gt_camera: CameraParams,
    gt_joints: Vec<Vec3>,
    lsp: [usize; 14],
}

fn loss_scene(options: &CheckOptions, seed_idx: u64, salt: u64) -> LossScene {
    loss_scene_sized(options, seed_idx, salt, small_body(), 48)
}

fn loss_scene_sized(
    options: &CheckOptions,
    seed_idx: u64,
    salt: u64,
    model: BodyModel,
    size: u32,
) -> LossScene {
    let mut rng = seeded(options, seed_idx, salt);
    let limits = model.skeleton.default_joint_limits();
    let gt_pose = synth::sample_pose_sequence(&model.skeleton, &limits, rng.next_u32() as u64, 1, &Default::default())
        .pop()
        .unwrap();
    let gt_shape = random_shape(&model, &mut rng, 1.0);
    let gt_camera = synth::sample_camera(&model, rng.next_u32() as u64, size, size);
    let gt_state = BodyState::compute(&model, &gt_pose, &gt_shape).unwrap();
    let (target, _) = rasterize(&model, &gt_state.posed.vertices, &gt_camera, size, size).unwrap();
    let lsp = model.skeleton.lsp14_map().unwrap();
    let gt_joints: Vec<Vec3> = lsp.iter().map(|&j| gt_state.posed.joint_positions[j]).collect();

    // Perturbed estimate, generic (away from the ground-truth minimum).
    let mut pose = gt_pose.clone();
    for r in &mut pose.rotations {
        *r += Vec3::new(rng.range(-0.15, 0.15), rng.range(-0.15, 0.15), rng.range(-0.15, 0.15));
    }
    let mut shape = gt_shape.clone();
    for b in &mut shape.coefficients {
        *b += rng.range(-0.3, 0.3);
    }
    let camera = CameraParams {
        scale: gt_camera.scale * rng.range(0.95, 1.05),
        offset: Vec2::new(
            gt_camera.offset.x + rng.range(-2.0, 2.0),
            gt_camera.offset.y + rng.range(-2.0, 2.0),
        ),
    };

    let index = build_iuv_index(&model);
    let pairs = match_pixels(&target, &index, 0.1, 3);

    LossScene {
        model,
        pose,
        shape,
        camera,
        target,
        pairs,
        gt_pose,
        gt_shape,
        gt_camera,
        gt_joints,
        lsp,
    }
}

fn check_loss_rpj(options: &CheckOptions) -> CheckReport {
    let mut max_err = 0.0f64;
    let h = 1e-6;
    for s in 0..options.seeds {
        let mut scene = loss_scene(options, s, 6);
        let joints = scene.model.joint_count();
        let rank = scene.model.shape_rank();
        let state = BodyState::compute(&scene.model, &scene.pose, &scene.shape).unwrap();
        // Drop pairs whose residual sits on an L1 kink at the eval point.
        scene.pairs.pairs.retain(|p| {
            let proj = scene.camera.project_point(state.posed.vertices[p.vertex as usize]).pixel;
            let r = proj - p.pixel;
            r.x.abs() > 1e-3 && r.y.abs() > 1e-3
        });
        if scene.pairs.pairs.is_empty() {
            continue;
        }
        let (_, grad) =
            landmark_reprojection_loss(&scene.pairs, &scene.model, &state, &scene.camera, false)
                .unwrap();
        let x = pack(&scene.pose, &scene.shape, &scene.camera);
        let fd = central_diff(
            |v: &[f64]| {
                let (p, sh, c) = unpack(v, joints, rank);
                let st = BodyState::compute(&scene.model, &p, &sh).unwrap();
                landmark_reprojection_loss(&scene.pairs, &scene.model, &st, &c, false)
                    .unwrap()
                    .0
            },
            &x,
            h,
        );
        max_err = max_err.max(scaled_max_rel(&flatten(&grad), &fd));
    }
    CheckReport {
        name: "loss_reprojection",
        max_rel_error: max_err,
        tolerance: 1e-4,
        seeds: options.seeds,
        seconds: 0.0,
    }
}

fn check_loss_msk(options: &CheckOptions) -> CheckReport {
    let mut max_err = 0.0f64;
    let h = 1e-6;
    for s in 0..options.seeds {
        let scene = loss_scene_sized(options, s, 7, tiny_body(), 32);
        let joints = scene.model.joint_count();
        let rank = scene.model.shape_rank();
        let sigma = 1.0;
        let eval = |pose: &PoseParams, shape: &ShapeParams, cam: &CameraParams| -> f64 {
            let st = BodyState::compute(&scene.model, pose, shape).unwrap();
            let soft = soft_part_masks(
                &scene.model,
                &st.posed.vertices,
                cam,
                scene.target.width,
                scene.target.height,
                sigma,
            )
            .unwrap();
            part_mask_loss_value(&scene.target, &soft, scene.model.parts).unwrap().0
        };
        let state = BodyState::compute(&scene.model, &scene.pose, &scene.shape).unwrap();
        let soft = soft_part_masks(
            &scene.model,
            &state.posed.vertices,
            &scene.camera,
            scene.target.width,
            scene.target.height,
            sigma,
        )
        .unwrap();
        let (_, grad, _) =
            part_mask_loss(&scene.target, &soft, &scene.model, &state, &scene.camera).unwrap();
        let x = pack(&scene.pose, &scene.shape, &scene.camera);
        let probe = |v: &[f64]| -> f64 {
            let (p, sh, c) = unpack(v, joints, rank);
            eval(&p, &sh, &c)
        };
        let (mut fd, reliable) = central_diff_filtered(probe, &x, h);
        // Re-verify suspicious components with a 16x smaller step.
        let analytic = flatten(&grad);
        let scale = fd
            .iter()
            .chain(analytic.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-9);
        for i in 0..fd.len() {
            if (analytic[i] - fd[i]).abs() / analytic[i].abs().max(fd[i].abs()).max(1e-4 * scale)
                > 1e-4
            {
                fd[i] = refine_component(probe, &x, i, h / 16.0);
            }
        }
        let err = scaled_max_rel_masked(&analytic, &fd, &reliable);
        max_err = max_err.max(err);
    }
    CheckReport {
        name: "loss_part_mask",
        max_rel_error: max_err,
        tolerance: 1e-4,
        seeds: options.seeds,
        seconds: 0.0,
    }
}

fn check_loss_adv(options: &CheckOptions) -> CheckReport {
    let model = small_body();
    let prior = JointLimitPrior {
        // Tight limits so random poses actually exceed them.
        limits: model.skeleton.default_joint_limits().iter().map(|l| l * 0.1).collect(),
        beta_weight: 1e-3,
    };
    let joints = model.joint_count();
    let rank = model.shape_rank();
    let mut max_err = 0.0f64;
    let h = 1e-5;
    for s in 0..options.seeds {
        let mut rng = seeded(options, s, 8);
        // Resample poses whose joint angles sit within the finite-difference
        // window of a hinge corner.
        let pose = loop {
            let candidate = random_pose(&model, &mut rng, 0.5);
            let near_corner = candidate.rotations.iter().zip(&prior.limits).any(|(r, l)| {
                l.is_finite() && (r.norm() - l).abs() < 1e-3
            });
            if !near_corner {
                break candidate;
            }
        };
        let shape = random_shape(&model, &mut rng, 1.5);
        let (_, grad) = prior.evaluate(&pose, &shape);
        let mut x = pack(&pose, &shape, &CameraParams { scale: 1.0, offset: Vec2::ZERO });
        x.truncate(3 * joints + rank);
        let fd = central_diff(
            |v: &[f64]| {
                let mut padded = v.to_vec();
                padded.extend_from_slice(&[1.0, 0.0, 0.0]);
                let (p, sh, _) = unpack(&padded, joints, rank);
                prior.evaluate(&p, &sh).0
            },
            &x,
            h,
        );
        let mut analytic = Vec::new();
        for r in &grad.d_theta {
            analytic.extend_from_slice(&[r.x, r.y, r.z]);
        }
        analytic.extend_from_slice(&grad.d_beta);
        max_err = max_err.max(scaled_max_rel(&analytic, &fd));
    }
    CheckReport {
        name: "loss_prior",
        max_rel_error: max_err,
        tolerance: 1e-6,
        seeds: options.seeds,
        seconds: 0.0,
    }
}

fn check_loss_rec(options: &CheckOptions) -> CheckReport {
    let mut max_err = 0.0f64;
    let h = 1e-6;
    for s in 0..options.seeds {
        let scene = loss_scene(options, s, 9);
        let joints = scene.model.joint_count();
        let rank = scene.model.shape_rank();
        let indices: Vec<usize> = scene.lsp.to_vec();
        let state = BodyState::compute(&scene.model, &scene.pose, &scene.shape).unwrap();
        let (_, grad) =
            reconstruction_loss(&scene.gt_joints, &indices, &scene.model, &state).unwrap();
        let x = pack(&scene.pose, &scene.shape, &scene.camera);
        let fd = central_diff(
            |v: &[f64]| {
                let (p, sh, _) = unpack(v, joints, rank);
                let st = BodyState::compute(&scene.model, &p, &sh).unwrap();
                reconstruction_loss(&scene.gt_joints, &indices, &scene.model, &st).unwrap().0
            },
            &x,
            h,
        );
        max_err = max_err.max(scaled_max_rel(&flatten(&grad), &fd));
    }
    CheckReport {
        name: "loss_reconstruction",
        max_rel_error: max_err,
        tolerance: 1e-5,
        seeds: options.seeds,
        seconds: 0.0,
    }
}

fn check_loss_rgr(options: &CheckOptions) -> CheckReport {
    let mut max_err = 0.0f64;
    let h = 1e-6;
    for s in 0..options.seeds {
        let scene = loss_scene(options, s, 10);
        let joints = scene.model.joint_count();
        let rank = scene.model.shape_rank();
        let (_, grad) = regression_loss(
            &scene.pose,
            &scene.shape,
            &scene.camera,
            &scene.gt_pose,
            &scene.gt_shape,
            &scene.gt_camera,
        )
        .unwrap();
        let x = pack(&scene.pose, &scene.shape, &scene.camera);
        let fd = central_diff(
            |v: &[f64]| {
                let (p, sh, c) = unpack(v, joints, rank);
                regression_loss(&p, &sh, &c, &scene.gt_pose, &scene.gt_shape, &scene.gt_camera)
                    .unwrap()
                    .0
            },
            &x,
            h,
        );
        max_err = max_err.max(scaled_max_rel(&flatten(&grad), &fd));
    }
    CheckReport {
        name: "loss_regression",
        max_rel_error: max_err,
        tolerance: 1e-4,
        seeds: options.seeds,
        seconds: 0.0,
    }
}
