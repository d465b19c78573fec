//! Samplers and helpers for paired synthetic data: smooth pose sequences
//! inside the prior's joint limits, truncated-normal shapes, jittered
//! cameras, occlusion augmentation, saliency-based person selection, and the
//! canonicalization/snapping steps that make generated samples exact fixed
//! points of the fitter.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::body::{BodyModel, BodyState, PoseParams, ShapeParams, Skeleton};
use crate::camera::CameraParams;
use crate::correspond::CorrespondenceSet;
use crate::math::Vec3;
use crate::raster::IuvImage;
use crate::rng::Pcg32;

#[derive(Debug, Clone, PartialEq)]
pub enum SynthError {
    EmptyInput(&'static str),
    Invalid(String),
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::EmptyInput(w) => write!(f, "empty input: {w}"),
            SynthError::Invalid(m) => write!(f, "invalid input: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SynthError {}

/// Style knobs for the procedural pose sampler.
#[derive(Debug, Clone, Copy)]
pub struct PoseStyle {
    /// Fraction of the per-joint budget used by the primary sinusoid.
    pub amplitude: f64,
    /// Base angular frequency in radians per frame.
    pub frequency: f64,
    /// Fraction of the budget used by the secondary (noise) sinusoid.
    pub noise: f64,
    /// Per-axis amplitude cap for the unconstrained root joint.
    pub root_amplitude: f64,
}

impl Default for PoseStyle {
    fn default() -> Self {
        PoseStyle {
            amplitude: 0.8,
            frequency: 0.12,
            noise: 0.15,
            root_amplitude: 0.9,
        }
    }
}

/// Smooth per-joint sinusoid-plus-noise trajectories. Per-axis amplitudes
/// are budgeted so the axis-angle magnitude always stays strictly inside the
/// prior limit; the default prior therefore scores every sampled frame zero.
pub fn sample_pose_sequence(
    skeleton: &Skeleton,
    limits: &[f64],
    seed: u64,
    length: usize,
    style: &PoseStyle,
) -> Vec<PoseParams> {
    let joints = skeleton.joint_count();
    let mut rng = Pcg32::new(seed, 0x505E);
    // Per-axis-per-joint (amplitude, frequency, phase) for two stacked waves.
    struct Wave {
        a1: f64,
        w1: f64,
        p1: f64,
        a2: f64,
        w2: f64,
        p2: f64,
    }
    let mut waves = Vec::with_capacity(joints * 3);
    for j in 0..joints {
        let limit = limits.get(j).copied().unwrap_or(f64::INFINITY);
        // sqrt(3) head-room: the magnitude of the axis-angle vector is at
        // most sqrt(3) times the largest per-axis amplitude.
        let budget = if limit.is_infinite() {
            style.root_amplitude
        } else {
            0.95 * limit / libm::sqrt(3.0)
        };
        for _axis in 0..3 {
            let a1 = budget * (1.0 - style.noise) * style.amplitude * rng.range(0.3, 1.0);
            let a2 = budget * style.noise * rng.uniform();
            waves.push(Wave {
                a1,
                w1: style.frequency * rng.range(0.5, 1.5),
                p1: rng.range(0.0, core::f64::consts::TAU),
                a2,
                w2: style.frequency * rng.range(2.0, 4.0),
                p2: rng.range(0.0, core::f64::consts::TAU),
            });
        }
    }
    (0..length)
        .map(|frame| {
            let t = frame as f64;
            let mut pose = PoseParams::rest(joints);
            for j in 0..joints {
                let mut r = Vec3::ZERO;
                for axis in 0..3 {
                    let w = &waves[j * 3 + axis];
                    r.set_component(
                        axis,
                        w.a1 * libm::sin(w.w1 * t + w.p1) + w.a2 * libm::sin(w.w2 * t + w.p2),
                    );
                }
                pose.rotations[j] = r;
            }
            pose
        })
        .collect()
}

/// Shape coefficients drawn from a unit normal truncated at +-3 per mode.
pub fn sample_shape(rank: usize, seed: u64) -> ShapeParams {
    let mut rng = Pcg32::new(seed, 0x5AAE);
    ShapeParams {
        coefficients: (0..rank).map(|_| rng.truncated_normal(3.0)).collect(),
    }
}

/// Camera around the mean view: scale jittered by +-20%, principal offset by
/// +-10% of the image size.
pub fn sample_camera(model: &BodyModel, seed: u64, width: u32, height: u32) -> CameraParams {
    let mut rng = Pcg32::new(seed, 0xCA3E);
    let mean = CameraParams::mean_for(model, width, height).expect("mean camera");
    CameraParams {
        scale: mean.scale * rng.range(0.8, 1.2),
        offset: crate::math::Vec2::new(
            mean.offset.x + rng.range(-0.1, 0.1) * width as f64,
            mean.offset.y + rng.range(-0.1, 0.1) * height as f64,
        ),
    }
}

/// Saliency score `s = |m| / max(||m_c - image_c||, 1)` per mask; returns the
/// argmax, ties to the lowest index. The 1 px distance floor keeps a mask
/// dead-centered on the image from dividing by zero.
pub fn saliency_select(
    masks: &[Vec<bool>],
    width: u32,
    height: u32,
) -> Result<usize, SynthError> {
    if masks.is_empty() {
        return Err(SynthError::EmptyInput("mask list"));
    }
    let image_center = crate::math::Vec2::new(width as f64 / 2.0, height as f64 / 2.0);
    let mut best = (0usize, f64::NEG_INFINITY);
    for (idx, mask) in masks.iter().enumerate() {
        if mask.len() != (width * height) as usize {
            return Err(SynthError::Invalid(alloc::format!(
                "mask {idx} has {} entries, expected {}",
                mask.len(),
                width * height
            )));
        }
        let mut count = 0usize;
        let mut sum = crate::math::Vec2::ZERO;
        for y in 0..height {
            for x in 0..width {
                if mask[(y * width + x) as usize] {
                    count += 1;
                    sum += crate::math::Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
                }
            }
        }
        let score = if count == 0 {
            0.0
        } else {
            let centroid = sum * (1.0 / count as f64);
            count as f64 / (centroid - image_center).norm().max(1.0)
        };
        if score > best.1 {
            best = (idx, score);
        }
    }
    Ok(best.0)
}

/// Blacks out (sets to background) a random rectangle covering `min_frac` to
/// `max_frac` of the person's bounding-box area. Returns the rectangle, or
/// `None` if the image has no foreground.
pub fn occlude_rectangle(
    image: &mut IuvImage,
    rng: &mut Pcg32,
    min_frac: f64,
    max_frac: f64,
) -> Option<(u32, u32, u32, u32)> {
    let mut lo = (u32::MAX, u32::MAX);
    let mut hi = (0u32, 0u32);
    for y in 0..image.height {
        for x in 0..image.width {
            if image.part[image.idx(x, y)] != 0 {
                lo = (lo.0.min(x), lo.1.min(y));
                hi = (hi.0.max(x), hi.1.max(y));
            }
        }
    }
    if lo.0 == u32::MAX {
        return None;
    }
    let bw = (hi.0 - lo.0 + 1) as f64;
    let bh = (hi.1 - lo.1 + 1) as f64;
    let frac = rng.range(min_frac, max_frac);
    let aspect = rng.range(0.5, 2.0);
    let rw = libm::sqrt(frac * bw * bh * aspect).max(1.0).min(bw);
    let rh = (frac * bw * bh / rw).max(1.0).min(bh);
    let (rw, rh) = (rw as u32, rh as u32);
    let x0 = lo.0 + rng.below((bw as u32 - rw + 1) as usize) as u32;
    let y0 = lo.1 + rng.below((bh as u32 - rh + 1) as usize) as u32;
    for y in y0..(y0 + rh).min(image.height) {
        for x in x0..(x0 + rw).min(image.width) {
            let i = image.idx(x, y);
            image.part[i] = 0;
            image.u[i] = 0.0;
            image.v[i] = 0.0;
        }
    }
    Some((x0, y0, rw, rh))
}

/// Rounds a value to 9 significant decimal digits (the manifest precision),
/// so a serialized parameter parses back bit-exactly.
pub fn sig9(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let s = alloc::format!("{:.8e}", x);
    s.parse().unwrap_or(x)
}

/// Canonicalizes all parameters to manifest precision. Generated samples are
/// rendered from canonical values so that a fit initialized from the parsed
/// manifest reproduces the generator's geometry bit for bit.
pub fn canonicalize_params(
    pose: &mut PoseParams,
    shape: &mut ShapeParams,
    camera: &mut CameraParams,
) {
    for r in &mut pose.rotations {
        *r = Vec3::new(sig9(r.x), sig9(r.y), sig9(r.z));
    }
    for b in &mut shape.coefficients {
        *b = sig9(*b);
    }
    camera.scale = sig9(camera.scale);
    camera.offset.x = sig9(camera.offset.x);
    camera.offset.y = sig9(camera.offset.y);
}

/// Replaces each pair's landmark with the exact current projection of its
/// matched vertex. Dataset generation applies this with the ground-truth
/// state, which pins the reprojection loss (and its subgradient) to zero at
/// the true parameters.
pub fn snap_pairs_to_projection(
    pairs: &CorrespondenceSet,
    state: &BodyState,
    camera: &CameraParams,
) -> CorrespondenceSet {
    CorrespondenceSet {
        pairs: pairs
            .pairs
            .iter()
            .map(|p| {
                let mut snapped = *p;
                snapped.pixel = camera
                    .project_point(state.posed.vertices[p.vertex as usize])
                    .pixel;
                snapped
            })
            .collect(),
        tau: pairs.tau,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{build_procedural_template, SkeletonPreset, TemplateConfig};
    use crate::loss::{JointLimitPrior, PlausibilityPrior};

    fn model() -> crate::body::BodyModel {
        build_procedural_template(&TemplateConfig {
            radial_segments: 6,
            axial_segments: 4,
            shape_rank: 8,
            skeleton: SkeletonPreset::Full58,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn sequences_are_deterministic() {
        let m = model();
        let limits = m.skeleton.default_joint_limits();
        let a = sample_pose_sequence(&m.skeleton, &limits, 9, 20, &PoseStyle::default());
        let b = sample_pose_sequence(&m.skeleton, &limits, 9, 20, &PoseStyle::default());
        assert_eq!(a.len(), 20);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.rotations, y.rotations);
        }
        let c = sample_pose_sequence(&m.skeleton, &limits, 10, 20, &PoseStyle::default());
        assert!(a.iter().zip(&c).any(|(x, y)| x.rotations != y.rotations));
    }

    #[test]
    fn sampled_frames_satisfy_prior_everywhere() {
        // 10,000 frames across many seeds, all scoring zero under the
        // default joint-limit prior.
        let m = model();
        let limits = m.skeleton.default_joint_limits();
        let prior = JointLimitPrior {
            limits: limits.clone(),
            beta_weight: 0.0,
        };
        let shape = ShapeParams::zeros(m.shape_rank());
        let mut frames = 0usize;
        for seed in 0..50 {
            let seq = sample_pose_sequence(&m.skeleton, &limits, seed, 200, &PoseStyle::default());
            for pose in &seq {
                let (value, _) = prior.evaluate(pose, &shape);
                assert_eq!(value, 0.0, "seed {seed} violates limits");
                frames += 1;
            }
        }
        assert_eq!(frames, 10_000);
    }

    #[test]
    fn single_frame_sequence() {
        let m = model();
        let limits = m.skeleton.default_joint_limits();
        let seq = sample_pose_sequence(&m.skeleton, &limits, 3, 1, &PoseStyle::default());
        assert_eq!(seq.len(), 1);
        assert!(seq[0].is_finite());
    }

    #[test]
    fn shapes_are_truncated() {
        for seed in 0..1000 {
            let s = sample_shape(12, seed);
            assert!(s.coefficients.iter().all(|b| b.abs() <= 3.0));
        }
        assert_eq!(sample_shape(8, 4).coefficients, sample_shape(8, 4).coefficients);
    }

    #[test]
    fn cameras_are_positive_and_deterministic() {
        let m = model();
        for seed in 0..200 {
            let cam = sample_camera(&m, seed, 224, 224);
            assert!(cam.scale > 0.0);
        }
        assert_eq!(sample_camera(&m, 5, 224, 224), sample_camera(&m, 5, 224, 224));
    }

    #[test]
    fn saliency_prefers_large_central_masks() {
        let (w, h) = (20u32, 20u32);
        let mut far = alloc::vec![false; 400];
        let mut near = alloc::vec![false; 400];
        // Equal size, different distance from center: nearer one wins.
        for dy in 0..5 {
            for dx in 0..4 {
                far[(dy * 20 + dx) as usize] = true;
                near[((8 + dy) * 20 + 8 + dx) as usize] = true;
            }
        }
        assert_eq!(saliency_select(&[far.clone(), near.clone()], w, h).unwrap(), 1);
        assert_eq!(saliency_select(&[near.clone(), far.clone()], w, h).unwrap(), 0);
        // Single mask and tie-break cases.
        assert_eq!(saliency_select(&[far.clone()], w, h).unwrap(), 0);
        assert_eq!(saliency_select(&[near.clone(), near.clone()], w, h).unwrap(), 0);
        assert!(saliency_select(&[], w, h).is_err());
    }

    #[test]
    fn saliency_formula_matches_hand_computation() {
        // Two 100-pixel masks: centroid distance 10 scores 100/10 = 10,
        // distance 15 scores 100/15; the closer one must win.
        let (w, h) = (40u32, 40u32);
        let mut a = alloc::vec![false; 1600];
        let mut b = alloc::vec![false; 1600];
        for dy in 0..10u32 {
            for dx in 0..10u32 {
                // centroid (20, 10): distance 10 from the image center (20, 20)
                a[((5 + dy) * 40 + 15 + dx) as usize] = true;
                // centroid (20, 35): distance 15
                b[((30 + dy) * 40 + 15 + dx) as usize] = true;
            }
        }
        assert_eq!(saliency_select(&[a.clone(), b.clone()], w, h).unwrap(), 0);
        assert_eq!(saliency_select(&[b, a], w, h).unwrap(), 1);
    }

    #[test]
    fn occlusion_blacks_out_rectangle() {
        let m = model();
        let cam = CameraParams::mean_for(&m, 96, 96).unwrap();
        let pose = PoseParams::rest(m.joint_count());
        let shape = ShapeParams::zeros(m.shape_rank());
        let state = BodyState::compute(&m, &pose, &shape).unwrap();
        let (mut image, _) = crate::raster::rasterize(&m, &state.posed.vertices, &cam, 96, 96).unwrap();
        let before = image.foreground_count();
        let mut rng = Pcg32::new(12, 0);
        let rect = occlude_rectangle(&mut image, &mut rng, 0.05, 0.25).unwrap();
        assert!(image.foreground_count() < before);
        image.validate().unwrap();
        let (x0, y0, rw, rh) = rect;
        for y in y0..(y0 + rh).min(96) {
            for x in x0..(x0 + rw).min(96) {
                let i = image.idx(x, y);
                assert_eq!(image.part[i], 0);
                assert_eq!(image.u[i], 0.0);
            }
        }
    }

    #[test]
    fn sig9_is_idempotent() {
        for x in [0.0, 1.0, -3.14159265358979, 1.23456789012345e-7, 224.0] {
            let once = sig9(x);
            assert_eq!(once, sig9(once));
            assert!((once - x).abs() <= 1e-8 * x.abs().max(1e-30));
        }
    }

    #[test]
    fn snapped_pairs_zero_the_reprojection_loss() {
        let m = model();
        let cam = sample_camera(&m, 1, 128, 128);
        let limits = m.skeleton.default_joint_limits();
        let pose = sample_pose_sequence(&m.skeleton, &limits, 2, 1, &PoseStyle::default())
            .pop()
            .unwrap();
        let shape = sample_shape(m.shape_rank(), 3);
        let state = BodyState::compute(&m, &pose, &shape).unwrap();
        let (image, _) = crate::raster::rasterize(&m, &state.posed.vertices, &cam, 128, 128).unwrap();
        let index = crate::correspond::build_iuv_index(&m);
        let raw = crate::correspond::match_pixels(&image, &index, 0.05, 4);
        assert!(!raw.pairs.is_empty());
        let snapped = snap_pairs_to_projection(&raw, &state, &cam);
        let (value, grad) =
            crate::loss::landmark_reprojection_loss(&snapped, &m, &state, &cam, false).unwrap();
        assert_eq!(value, 0.0);
        assert_eq!(grad.norm(), 0.0);
    }
}
