//! Loss terms for render-and-compare fitting, each returning its scalar value
//! together with the analytic gradient with respect to `(theta, beta, alpha)`.
//!
//! The total combines a render-and-compare group (landmark reprojection, part
//! mask, plausibility prior) with a 3D reconstruction term and a parameter
//! regression term; supervision flags zero out absent annotations exactly.

use alloc::vec::Vec;
use core::fmt;

use crate::body::{
    lbs_backward, rodrigues, rodrigues_jacobian, BodyError, BodyModel, BodyState, PoseParams,
    ShapeParams,
};
use crate::camera::CameraParams;
use crate::correspond::CorrespondenceSet;
use crate::math::{Vec2, Vec3};
use crate::raster::{soft_masks_backward, IuvImage, RasterError, SoftMasks};

#[derive(Debug, Clone, PartialEq)]
pub enum LossError {
    /// A supervision flag is on but its input is missing.
    MissingInput(&'static str),
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// Target part indices exceed the model's part count.
    PartCount { model: u8, target: u8 },
    Body(BodyError),
    Raster(RasterError),
}

impl fmt::Display for LossError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossError::MissingInput(w) => write!(f, "missing input for enabled loss term: {w}"),
            LossError::Dimension { what, expected, got } => {
                write!(f, "dimension mismatch for {what}: expected {expected}, got {got}")
            }
            LossError::PartCount { model, target } => {
                write!(f, "part count mismatch: model has {model}, target references {target}")
            }
            LossError::Body(e) => write!(f, "{e}"),
            LossError::Raster(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LossError {}

impl From<BodyError> for LossError {
    fn from(e: BodyError) -> Self {
        LossError::Body(e)
    }
}

impl From<RasterError> for LossError {
    fn from(e: RasterError) -> Self {
        LossError::Raster(e)
    }
}

/// Gradient with respect to the full parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub d_theta: Vec<Vec3>,
    pub d_beta: Vec<f64>,
    /// (d scale, d offset_x, d offset_y).
    pub d_alpha: [f64; 3],
}

impl GradientVector {
    pub fn zeros(joints: usize, rank: usize) -> Self {
        GradientVector {
            d_theta: alloc::vec![Vec3::ZERO; joints],
            d_beta: alloc::vec![0.0; rank],
            d_alpha: [0.0; 3],
        }
    }

    pub fn add_scaled(&mut self, other: &GradientVector, w: f64) {
        for (a, b) in self.d_theta.iter_mut().zip(&other.d_theta) {
            *a += *b * w;
        }
        for (a, b) in self.d_beta.iter_mut().zip(&other.d_beta) {
            *a += b * w;
        }
        for (a, b) in self.d_alpha.iter_mut().zip(&other.d_alpha) {
            *a += b * w;
        }
    }

    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for r in &self.d_theta {
            s += r.norm_sq();
        }
        for b in &self.d_beta {
            s += b * b;
        }
        for a in &self.d_alpha {
            s += a * a;
        }
        libm::sqrt(s)
    }

    pub fn scale(&mut self, w: f64) {
        for r in &mut self.d_theta {
            *r = *r * w;
        }
        for b in &mut self.d_beta {
            *b *= w;
        }
        for a in &mut self.d_alpha {
            *a *= w;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_theta.iter().all(|r| r.is_finite())
            && self.d_beta.iter().all(|b| b.is_finite())
            && self.d_alpha.iter().all(|a| a.is_finite())
    }
}

/// Per-term weights; flat 1.0 by default, overridable from configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermWeights {
    pub rpj: f64,
    pub msk: f64,
    pub adv: f64,
    pub rec: f64,
    pub rgr: f64,
}

impl Default for TermWeights {
    fn default() -> Self {
        TermWeights {
            rpj: 1.0,
            msk: 1.0,
            adv: 1.0,
            rec: 1.0,
            rgr: 1.0,
        }
    }
}

/// Which loss terms are active; absent supervision contributes exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SupervisionFlags {
    pub rpj: bool,
    pub msk: bool,
    pub adv: bool,
    pub rec: bool,
    pub rgr: bool,
}

impl SupervisionFlags {
    /// The weakly-supervised render-and-compare set.
    pub fn render_compare() -> Self {
        SupervisionFlags {
            rpj: true,
            msk: true,
            adv: true,
            rec: false,
            rgr: false,
        }
    }

    pub fn all() -> Self {
        SupervisionFlags {
            rpj: true,
            msk: true,
            adv: true,
            rec: true,
            rgr: true,
        }
    }
}

/// Scalar values of every term plus the combined total.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub rpj: f64,
    pub msk: f64,
    pub adv: f64,
    pub rec: f64,
    pub rgr: f64,
    pub total: f64,
    pub weights: TermWeights,
    pub pairs_used: usize,
    pub parts_visible: usize,
}

impl LossReport {
    pub fn zero(weights: TermWeights) -> Self {
        LossReport {
            rpj: 0.0,
            msk: 0.0,
            adv: 0.0,
            rec: 0.0,
            rgr: 0.0,
            total: 0.0,
            weights,
            pairs_used: 0,
            parts_visible: 0,
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// L1 displacement between matched landmarks and the current projections of
/// their vertices. The subgradient convention `sign(0) = 0` makes an exact
/// match a true fixed point. `normalize` divides by the pair count.
pub fn landmark_reprojection_loss(
    pairs: &CorrespondenceSet,
    model: &BodyModel,
    state: &BodyState,
    camera: &CameraParams,
    normalize: bool,
) -> Result<(f64, GradientVector), LossError> {
    let mut loss = 0.0;
    let mut d_vertices = alloc::vec![Vec3::ZERO; model.vertex_count()];
    let mut d_alpha = [0.0; 3];
    for pair in &pairs.pairs {
        let vi = pair.vertex as usize;
        if vi >= model.vertex_count() {
            return Err(LossError::Dimension {
                what: "pair vertex index",
                expected: model.vertex_count(),
                got: vi,
            });
        }
        let p = state.posed.vertices[vi];
        let projected = camera.project_point(p).pixel;
        let r = projected - pair.pixel;
        loss += r.x.abs() + r.y.abs();
        let (sx, sy) = (sign(r.x), sign(r.y));
        d_vertices[vi] += Vec3::new(camera.scale * sx, camera.scale * sy, 0.0);
        d_alpha[0] += sx * p.x + sy * p.y;
        d_alpha[1] += sx;
        d_alpha[2] += sy;
    }
    let scale = if normalize && !pairs.pairs.is_empty() {
        1.0 / pairs.pairs.len() as f64
    } else {
        1.0
    };
    loss *= scale;
    for g in &mut d_vertices {
        *g = *g * scale;
    }
    let body = lbs_backward(model, state, &d_vertices, &[])?;
    Ok((
        loss,
        GradientVector {
            d_theta: body.d_theta,
            d_beta: body.d_beta,
            d_alpha: [d_alpha[0] * scale, d_alpha[1] * scale, d_alpha[2] * scale],
        },
    ))
}

fn check_mask_shapes(
    target: &IuvImage,
    soft: &SoftMasks,
    parts: u8,
) -> Result<(), LossError> {
    if target.width != soft.width || target.height != soft.height {
        return Err(LossError::Dimension {
            what: "target vs mask size",
            expected: (soft.width * soft.height) as usize,
            got: (target.width * target.height) as usize,
        });
    }
    if soft.masks.len() != parts as usize {
        return Err(LossError::PartCount {
            model: parts,
            target: soft.masks.len() as u8,
        });
    }
    if let Some(&max_part) = target.part.iter().max() {
        if max_part > parts {
            return Err(LossError::PartCount {
                model: parts,
                target: max_part,
            });
        }
    }
    Ok(())
}

/// Scalar part-mask loss plus the per-pixel upstream gradients on the soft
/// masks and the number of parts that entered the sum.
fn mask_iou_terms(
    target: &IuvImage,
    soft: &SoftMasks,
    parts: u8,
    want_upstream: bool,
) -> (f64, Vec<Vec<f64>>, usize) {
    let n = target.pixel_count();
    let mut loss = 0.0;
    let mut parts_visible = 0usize;
    let mut upstream: Vec<Vec<f64>> = Vec::with_capacity(soft.masks.len());
    for part in 1..=parts {
        let mask = &soft.masks[(part - 1) as usize];
        let mut inter = 0.0;
        let mut union = 0.0;
        for i in 0..n {
            let t: f64 = if target.part[i] == part { 1.0 } else { 0.0 };
            let m = mask[i];
            inter += t.min(m);
            union += t.max(m);
        }
        if union == 0.0 {
            if want_upstream {
                upstream.push(alloc::vec![0.0; n]);
            }
            continue;
        }
        parts_visible += 1;
        loss += 1.0 - inter / union;
        if !want_upstream {
            continue;
        }
        // d(1 - I/U)/dm per pixel: -1/U where m is the min, +I/U^2 where m is
        // the max (ties contribute zero).
        let d_i = -1.0 / union;
        let d_u = inter / (union * union);
        let mut grid = alloc::vec![0.0; n];
        for (i, g) in grid.iter_mut().enumerate() {
            let t = if target.part[i] == part { 1.0 } else { 0.0 };
            let m = mask[i];
            if m < t {
                *g += d_i;
            } else if m > t {
                *g += d_u;
            }
        }
        upstream.push(grid);
    }
    (loss, upstream, parts_visible)
}

/// Forward-only part-mask loss; the finite-difference harness probes this.
pub fn part_mask_loss_value(
    target: &IuvImage,
    soft: &SoftMasks,
    parts: u8,
) -> Result<(f64, usize), LossError> {
    check_mask_shapes(target, soft, parts)?;
    let (loss, _, visible) = mask_iou_terms(target, soft, parts, false);
    Ok((loss, visible))
}

/// Sum over parts of `1 - soft IoU` between the target's hard part masks and
/// the rendered soft masks (min for intersection, max for union). Parts empty
/// in both are skipped. Returns the scalar, the gradient and the number of
/// parts that entered the sum.
pub fn part_mask_loss(
    target: &IuvImage,
    soft: &SoftMasks,
    model: &BodyModel,
    state: &BodyState,
    camera: &CameraParams,
) -> Result<(f64, GradientVector, usize), LossError> {
    check_mask_shapes(target, soft, model.parts)?;
    let (loss, upstream, parts_visible) = mask_iou_terms(target, soft, model.parts, true);

    let d_projected = soft_masks_backward(model, &state.posed.vertices, camera, soft, &upstream)?;
    let (d_vertices, d_alpha) = chain_through_projection(&d_projected, state, camera);
    let body = lbs_backward(model, state, &d_vertices, &[])?;
    Ok((
        loss,
        GradientVector {
            d_theta: body.d_theta,
            d_beta: body.d_beta,
            d_alpha,
        },
        parts_visible,
    ))
}

/// Pulls gradients on projected pixel positions back through the orthographic
/// projection: world xy pick up the scale factor, and the camera parameters
/// collect their affine terms.
fn chain_through_projection(
    d_projected: &[Vec2],
    state: &BodyState,
    camera: &CameraParams,
) -> (Vec<Vec3>, [f64; 3]) {
    let mut d_vertices = alloc::vec![Vec3::ZERO; d_projected.len()];
    let mut d_alpha = [0.0; 3];
    for (vi, g) in d_projected.iter().enumerate() {
        if *g == Vec2::ZERO {
            continue;
        }
        let p = state.posed.vertices[vi];
        d_vertices[vi] = Vec3::new(camera.scale * g.x, camera.scale * g.y, 0.0);
        d_alpha[0] += g.x * p.x + g.y * p.y;
        d_alpha[1] += g.x;
        d_alpha[2] += g.y;
    }
    (d_vertices, d_alpha)
}

/// Pluggable plausibility prior over `(theta, beta)`. The default is a joint
/// angle hinge plus a shape magnitude penalty; a learned discriminator can be
/// slotted in through the same interface.
pub trait PlausibilityPrior {
    fn evaluate(&self, pose: &PoseParams, shape: &ShapeParams) -> (f64, GradientVector);
}

/// `sum_j hinge^2(|theta_j| - limit_j) + beta_weight * |beta|^2`.
#[derive(Debug, Clone)]
pub struct JointLimitPrior {
    pub limits: Vec<f64>,
    pub beta_weight: f64,
}

impl JointLimitPrior {
    pub fn for_skeleton(skeleton: &crate::body::Skeleton) -> Self {
        JointLimitPrior {
            limits: skeleton.default_joint_limits(),
            beta_weight: 1e-3,
        }
    }
}

impl PlausibilityPrior for JointLimitPrior {
    fn evaluate(&self, pose: &PoseParams, shape: &ShapeParams) -> (f64, GradientVector) {
        let mut loss = 0.0;
        let mut grad = GradientVector::zeros(pose.joint_count(), shape.rank());
        for (j, rot) in pose.rotations.iter().enumerate() {
            let limit = self.limits.get(j).copied().unwrap_or(f64::INFINITY);
            if limit.is_infinite() {
                continue;
            }
            let angle = rot.norm();
            let over = angle - limit;
            if over > 0.0 {
                loss += over * over;
                // d|theta|/dtheta = theta / |theta| (angle > limit > 0 here).
                grad.d_theta[j] = *rot * (2.0 * over / angle);
            }
        }
        for (k, b) in shape.coefficients.iter().enumerate() {
            loss += self.beta_weight * b * b;
            grad.d_beta[k] = 2.0 * self.beta_weight * b;
        }
        (loss, grad)
    }
}

/// Sum over keypoints of the Euclidean distance between ground-truth and
/// predicted 3D joints (selected by `joint_indices`). Coincident points get a
/// zero subgradient, mirroring the L1 convention.
pub fn reconstruction_loss(
    gt_joints: &[Vec3],
    joint_indices: &[usize],
    model: &BodyModel,
    state: &BodyState,
) -> Result<(f64, GradientVector), LossError> {
    if gt_joints.len() != joint_indices.len() {
        return Err(LossError::Dimension {
            what: "reconstruction keypoints",
            expected: joint_indices.len(),
            got: gt_joints.len(),
        });
    }
    let mut loss = 0.0;
    let mut d_joints = alloc::vec![Vec3::ZERO; model.joint_count()];
    for (gt, &ji) in gt_joints.iter().zip(joint_indices) {
        if ji >= model.joint_count() {
            return Err(LossError::Dimension {
                what: "joint selection index",
                expected: model.joint_count(),
                got: ji,
            });
        }
        let diff = state.posed.joint_positions[ji] - *gt;
        let dist = diff.norm();
        loss += dist;
        if dist > 0.0 {
            d_joints[ji] += diff * (1.0 / dist);
        }
    }
    let body = lbs_backward(model, state, &[], &d_joints)?;
    Ok((
        loss,
        GradientVector {
            d_theta: body.d_theta,
            d_beta: body.d_beta,
            d_alpha: [0.0; 3],
        },
    ))
}

/// Squared L2 distance between estimated and ground-truth parameters, with
/// pose compared through rotation matrices (gradients flow through the
/// Rodrigues Jacobian, avoiding Euler singularities).
pub fn regression_loss(
    pose: &PoseParams,
    shape: &ShapeParams,
    camera: &CameraParams,
    gt_pose: &PoseParams,
    gt_shape: &ShapeParams,
    gt_camera: &CameraParams,
) -> Result<(f64, GradientVector), LossError> {
    if pose.joint_count() != gt_pose.joint_count() {
        return Err(LossError::Dimension {
            what: "pose joints",
            expected: gt_pose.joint_count(),
            got: pose.joint_count(),
        });
    }
    if shape.rank() != gt_shape.rank() {
        return Err(LossError::Dimension {
            what: "shape rank",
            expected: gt_shape.rank(),
            got: shape.rank(),
        });
    }
    let mut loss = 0.0;
    let mut grad = GradientVector::zeros(pose.joint_count(), shape.rank());
    for j in 0..pose.joint_count() {
        let r = rodrigues(pose.rotations[j]);
        let r_gt = rodrigues(gt_pose.rotations[j]);
        let diff = r + r_gt * -1.0;
        loss += diff.frobenius_dot(diff);
        if diff.frobenius_dot(diff) > 0.0 {
            let jac = rodrigues_jacobian(pose.rotations[j]);
            grad.d_theta[j] = Vec3::new(
                2.0 * diff.frobenius_dot(jac[0]),
                2.0 * diff.frobenius_dot(jac[1]),
                2.0 * diff.frobenius_dot(jac[2]),
            );
        }
    }
    for k in 0..shape.rank() {
        let d = shape.coefficients[k] - gt_shape.coefficients[k];
        loss += d * d;
        grad.d_beta[k] = 2.0 * d;
    }
    let da = [
        camera.scale - gt_camera.scale,
        camera.offset.x - gt_camera.offset.x,
        camera.offset.y - gt_camera.offset.y,
    ];
    for (i, d) in da.iter().enumerate() {
        loss += d * d;
        grad.d_alpha[i] = 2.0 * d;
    }
    Ok((loss, grad))
}

/// Number of scalar entries the regression loss sums over; used to convert
/// it into a mean squared error.
pub fn regression_element_count(joints: usize, rank: usize) -> usize {
    joints * 9 + rank + 3
}

/// Everything `total_loss` may need; optional inputs are only required when
/// the matching supervision flag is set.
pub struct LossInputs<'a> {
    pub model: &'a BodyModel,
    pub state: &'a BodyState,
    pub shape: &'a ShapeParams,
    pub camera: &'a CameraParams,
    pub pairs: Option<&'a CorrespondenceSet>,
    pub target: Option<&'a IuvImage>,
    pub soft_masks: Option<&'a SoftMasks>,
    pub prior: Option<&'a dyn PlausibilityPrior>,
    pub gt_joints: Option<&'a [Vec3]>,
    pub joint_indices: &'a [usize],
    pub gt_params: Option<(&'a PoseParams, &'a ShapeParams, &'a CameraParams)>,
    pub flags: SupervisionFlags,
    pub weights: TermWeights,
    pub normalize_rpj: bool,
}

/// Weighted combination of all enabled terms; the gradient is the matching
/// weighted sum of term gradients.
pub fn total_loss(inputs: &LossInputs<'_>) -> Result<(LossReport, GradientVector), LossError> {
    let mut report = LossReport::zero(inputs.weights);
    let mut grad = GradientVector::zeros(inputs.model.joint_count(), inputs.model.shape_rank());

    if inputs.flags.rpj {
        let pairs = inputs.pairs.ok_or(LossError::MissingInput("correspondence pairs"))?;
        let (value, g) = landmark_reprojection_loss(
            pairs,
            inputs.model,
            inputs.state,
            inputs.camera,
            inputs.normalize_rpj,
        )?;
        report.rpj = value;
        report.pairs_used = pairs.pairs.len();
        grad.add_scaled(&g, inputs.weights.rpj);
    }
    if inputs.flags.msk {
        let target = inputs.target.ok_or(LossError::MissingInput("target image"))?;
        let soft = inputs.soft_masks.ok_or(LossError::MissingInput("soft masks"))?;
        let (value, g, parts) =
            part_mask_loss(target, soft, inputs.model, inputs.state, inputs.camera)?;
        report.msk = value;
        report.parts_visible = parts;
        grad.add_scaled(&g, inputs.weights.msk);
    }
    if inputs.flags.adv {
        let prior = inputs.prior.ok_or(LossError::MissingInput("plausibility prior"))?;
        let (value, g) = prior.evaluate(&inputs.state.pose, inputs.shape);
        report.adv = value;
        grad.add_scaled(&g, inputs.weights.adv);
    }
    if inputs.flags.rec {
        let gt = inputs.gt_joints.ok_or(LossError::MissingInput("ground-truth joints"))?;
        let (value, g) = reconstruction_loss(gt, inputs.joint_indices, inputs.model, inputs.state)?;
        report.rec = value;
        grad.add_scaled(&g, inputs.weights.rec);
    }
    if inputs.flags.rgr {
        let (gt_pose, gt_shape, gt_camera) =
            inputs.gt_params.ok_or(LossError::MissingInput("ground-truth parameters"))?;
        let (value, g) = regression_loss(
            &inputs.state.pose,
            inputs.shape,
            inputs.camera,
            gt_pose,
            gt_shape,
            gt_camera,
        )?;
        report.rgr = value;
        grad.add_scaled(&g, inputs.weights.rgr);
    }

    report.total = inputs.weights.rpj * report.rpj
        + inputs.weights.msk * report.msk
        + inputs.weights.adv * report.adv
        + inputs.weights.rec * report.rec
        + inputs.weights.rgr * report.rgr;
    Ok((report, grad))
}
