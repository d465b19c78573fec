//! Analysis-by-synthesis fitter: recovers `(theta, beta, alpha)` from a
//! target IUV image by iterating pose -> skinning -> projection -> losses ->
//! gradient step. Plain block gradient descent with a norm clip; the mask
//! sharpness anneals from wide to tight over the first half of the run.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

use crate::body::{BodyError, BodyModel, BodyState, PoseParams, ShapeParams};
use crate::camera::CameraParams;
use crate::correspond::{build_iuv_index, calibrate_stride, match_pixels, CorrespondenceSet};
use crate::loss::{
    total_loss, GradientVector, JointLimitPrior, LossError, LossInputs, LossReport,
    SupervisionFlags, TermWeights,
};
use crate::math::Vec3;
use crate::raster::{soft_part_masks_with_cutoff, IuvImage, RasterError};

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub step_theta: f64,
    pub step_beta: f64,
    pub step_alpha: f64,
    /// Mask sharpness schedule: linear from start to end over the first
    /// `anneal_fraction` of the iteration budget.
    pub sigma_start: f64,
    pub sigma_end: f64,
    pub anneal_fraction: f64,
    /// Soft-mask evaluation window in sigma units; tight by default for
    /// speed, widen to `raster::EXACT_CUTOFF_SIGMAS` for exact tails.
    pub mask_cutoff_sigmas: f64,
    /// Convergence tolerance on the total loss.
    pub tolerance: f64,
    pub flags: SupervisionFlags,
    pub weights: TermWeights,
    /// IUV match threshold for live correspondence matching.
    pub tau: f64,
    /// Matching stride; `None` calibrates the smallest stride keeping at
    /// most 300 pairs on the target.
    pub stride: Option<usize>,
    /// Refresh correspondences every K iterations; off by default (matching
    /// is a preprocessing step).
    pub rematch_every: Option<usize>,
    /// Fraction of the run during which beta stays frozen.
    pub beta_freeze_fraction: f64,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
    pub normalize_rpj: bool,
    /// Per-iteration geometric step multiplier (1.0 = constant steps). The
    /// L1 terms have sharp minima; a geometrically diminishing schedule
    /// converges onto them where constant steps oscillate.
    pub step_decay: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 500,
            step_theta: 1e-2,
            step_beta: 1e-2,
            step_alpha: 1e-1,
            sigma_start: 2.0,
            sigma_end: 0.5,
            anneal_fraction: 0.5,
            mask_cutoff_sigmas: 8.0,
            tolerance: 1e-9,
            flags: SupervisionFlags::render_compare(),
            weights: TermWeights::default(),
            tau: 0.05,
            stride: None,
            rematch_every: None,
            beta_freeze_fraction: 0.1,
            grad_clip: 1e3,
            // The fitter averages the reprojection term over pairs so the
            // default step sizes stay well-conditioned at any pair count.
            normalize_rpj: true,
            step_decay: 0.99,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.max_iterations == 0 {
            return Err(FitError::Config("max_iterations must be >= 1"));
        }
        if !(self.step_theta > 0.0 && self.step_beta > 0.0 && self.step_alpha > 0.0) {
            return Err(FitError::Config("step sizes must be positive"));
        }
        if !(self.sigma_start > 0.0 && self.sigma_end > 0.0) {
            return Err(FitError::Config("sigma schedule must be positive"));
        }
        if !(self.tau > 0.0) {
            return Err(FitError::Config("tau must be positive"));
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return Err(FitError::Config("step_decay must be in (0, 1]"));
        }
        Ok(())
    }

    fn sigma_at(&self, iter: usize) -> f64 {
        let anneal_len = (self.max_iterations as f64 * self.anneal_fraction).max(1.0);
        let t = (iter as f64 / anneal_len).min(1.0);
        self.sigma_start + (self.sigma_end - self.sigma_start) * t
    }
}

/// Optional ground truth passed to a fit, plus optionally precomputed pairs.
#[derive(Debug, Clone, Default)]
pub struct FitSupervision {
    pub pairs: Option<CorrespondenceSet>,
    pub gt_joints: Option<Vec<Vec3>>,
    pub gt_params: Option<(PoseParams, ShapeParams, CameraParams)>,
    /// Start the optimization here instead of at the parameter mean; used by
    /// the paired-ground-truth round-trip check.
    pub init: Option<(PoseParams, ShapeParams, CameraParams)>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub pose: PoseParams,
    pub shape: ShapeParams,
    pub camera: CameraParams,
    /// One report per iteration actually run.
    pub reports: Vec<LossReport>,
    /// Total loss of the returned (best-so-far) parameters.
    pub final_total: f64,
    pub converged: bool,
    pub iterations: usize,
    pub duration_seconds: f64,
}

#[derive(Debug)]
pub enum FitError {
    /// The target contains no foreground pixels.
    EmptyTarget,
    /// Loss exceeded 10x its initial value for 20 consecutive iterations;
    /// the partial best-so-far result is attached.
    Diverged(Box<FitResult>),
    /// Non-finite gradient or loss.
    Numeric,
    Config(&'static str),
    Loss(LossError),
    Body(BodyError),
    Raster(RasterError),
    Camera(crate::camera::CameraError),
}

impl fmt::Display for FitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitError::EmptyTarget => write!(f, "target image has no foreground pixels"),
            FitError::Diverged(_) => write!(f, "optimization diverged"),
            FitError::Numeric => write!(f, "non-finite gradient"),
            FitError::Config(m) => write!(f, "invalid fit configuration: {m}"),
            FitError::Loss(e) => write!(f, "{e}"),
            FitError::Body(e) => write!(f, "{e}"),
            FitError::Raster(e) => write!(f, "{e}"),
            FitError::Camera(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for FitError {}

impl From<LossError> for FitError {
    fn from(e: LossError) -> Self {
        FitError::Loss(e)
    }
}
impl From<BodyError> for FitError {
    fn from(e: BodyError) -> Self {
        FitError::Body(e)
    }
}
impl From<RasterError> for FitError {
    fn from(e: RasterError) -> Self {
        FitError::Raster(e)
    }
}
impl From<crate::camera::CameraError> for FitError {
    fn from(e: crate::camera::CameraError) -> Self {
        FitError::Camera(e)
    }
}

/// One gradient-descent update with per-block step sizes. The gradient norm
/// (over all blocks jointly) is clipped at `config.grad_clip`; axis-angle
/// vectors are re-canonicalized afterwards.
pub fn step(
    pose: &mut PoseParams,
    shape: &mut ShapeParams,
    camera: &mut CameraParams,
    grad: &GradientVector,
    config: &FitConfig,
    freeze_beta: bool,
) -> Result<(), FitError> {
    if !grad.is_finite() {
        return Err(FitError::Numeric);
    }
    let norm = grad.norm();
    let clip = if norm > config.grad_clip {
        config.grad_clip / norm
    } else {
        1.0
    };
    for (r, g) in pose.rotations.iter_mut().zip(&grad.d_theta) {
        *r += *g * (-config.step_theta * clip);
    }
    if !freeze_beta {
        for (b, g) in shape.coefficients.iter_mut().zip(&grad.d_beta) {
            *b -= config.step_beta * clip * g;
        }
    }
    camera.scale = (camera.scale - config.step_alpha * clip * grad.d_alpha[0]).max(1e-6);
    camera.offset.x -= config.step_alpha * clip * grad.d_alpha[1];
    camera.offset.y -= config.step_alpha * clip * grad.d_alpha[2];
    pose.canonicalize();
    Ok(())
}

/// Fits pose, shape and camera to a target IUV image, starting from the
/// parameter mean (rest pose, zero shape, mean camera). Returns the
/// best-so-far parameters.
pub fn fit(
    target: &IuvImage,
    model: &BodyModel,
    config: &FitConfig,
    supervision: &FitSupervision,
) -> Result<FitResult, FitError> {
    config.validate()?;
    if target.foreground_count() == 0 {
        return Err(FitError::EmptyTarget);
    }

    #[cfg(feature = "std")]
    let started = std::time::Instant::now();

    let (mut pose, mut shape, mut camera) = match &supervision.init {
        Some((p, s, c)) => (p.clone(), s.clone(), *c),
        None => (
            PoseParams::rest(model.joint_count()),
            ShapeParams::zeros(model.shape_rank()),
            CameraParams::mean_for(model, target.width, target.height)?,
        ),
    };

    // Correspondences are a preprocessing step: supplied, or matched once up
    // front, optionally refreshed every `rematch_every` iterations.
    let index = if config.flags.rpj && (supervision.pairs.is_none() || config.rematch_every.is_some())
    {
        Some(build_iuv_index(model))
    } else {
        None
    };
    let mut pairs = match (&supervision.pairs, &index) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(idx)) if config.flags.rpj => {
            let stride = config
                .stride
                .unwrap_or_else(|| calibrate_stride(target, idx, config.tau, 300));
            Some(match_pixels(target, idx, config.tau, stride))
        }
        _ => None,
    };

    let prior = JointLimitPrior::for_skeleton(&model.skeleton);
    let lsp = model.skeleton.lsp14_map()?;
    let joint_indices: Vec<usize> = lsp.to_vec();

    let mut reports: Vec<LossReport> = Vec::new();
    let mut best: Option<(PoseParams, ShapeParams, CameraParams, f64, usize)> = None;
    let mut converged = false;
    let mut over_budget_streak = 0usize;
    let mut initial_total = f64::INFINITY;

    let mut iter = 0usize;
    while iter < config.max_iterations {
        if let (Some(every), Some(idx)) = (config.rematch_every, &index) {
            if every > 0 && iter > 0 && iter.is_multiple_of(every) {
                let stride = config
                    .stride
                    .unwrap_or_else(|| calibrate_stride(target, idx, config.tau, 300));
                pairs = Some(match_pixels(target, idx, config.tau, stride));
            }
        }

        let state = BodyState::compute(model, &pose, &shape)?;
        let sigma = config.sigma_at(iter);
        let soft = if config.flags.msk {
            Some(soft_part_masks_with_cutoff(
                model,
                &state.posed.vertices,
                &camera,
                target.width,
                target.height,
                sigma,
                config.mask_cutoff_sigmas,
            )?)
        } else {
            None
        };

        let gt_params_ref = supervision
            .gt_params
            .as_ref()
            .map(|(p, s, c)| (p, s, c));
        let (report, grad) = total_loss(&LossInputs {
            model,
            state: &state,
            shape: &shape,
            camera: &camera,
            pairs: pairs.as_ref(),
            target: Some(target),
            soft_masks: soft.as_ref(),
            prior: Some(&prior),
            gt_joints: supervision.gt_joints.as_deref(),
            joint_indices: &joint_indices,
            gt_params: gt_params_ref,
            flags: config.flags,
            weights: config.weights,
            normalize_rpj: config.normalize_rpj,
        })?;
        if !report.total.is_finite() {
            return Err(FitError::Numeric);
        }
        if iter == 0 {
            initial_total = report.total;
        }

        let improved = best.as_ref().is_none_or(|b| report.total < b.3);
        if improved {
            best = Some((pose.clone(), shape.clone(), camera, report.total, iter));
        }
        let total = report.total;
        reports.push(report);
        iter += 1;

        // A zero-loss configuration is a fixed point; the subgradient
        // conventions make the step exactly zero there, so just stop.
        if total <= config.tolerance {
            converged = true;
            break;
        }
        if total > 10.0 * initial_total {
            over_budget_streak += 1;
            if over_budget_streak >= 20 {
                let (bp, bs, bc, bt, _) = best.unwrap();
                return Err(FitError::Diverged(Box::new(FitResult {
                    pose: bp,
                    shape: bs,
                    camera: bc,
                    reports,
                    final_total: bt,
                    converged: false,
                    iterations: iter,
                    duration_seconds: 0.0,
                })));
            }
        } else {
            over_budget_streak = 0;
        }
        // Stall detection: no new best for a while.
        let patience = (config.max_iterations / 4).max(60);
        if let Some((_, _, _, _, best_iter)) = &best {
            if iter - best_iter > patience {
                converged = true;
                break;
            }
        }

        let freeze_beta = (iter as f64) < config.beta_freeze_fraction * config.max_iterations as f64;
        let decay = libm::pow(config.step_decay, (iter - 1) as f64);
        let mut scaled = config.clone();
        scaled.step_theta *= decay;
        scaled.step_beta *= decay;
        scaled.step_alpha *= decay;
        step(&mut pose, &mut shape, &mut camera, &grad, &scaled, freeze_beta)?;
    }

    let (bp, bs, bc, bt, _) = best.expect("at least one iteration ran");
    #[cfg(feature = "std")]
    let duration_seconds = started.elapsed().as_secs_f64();
    #[cfg(not(feature = "std"))]
    let duration_seconds = 0.0;

    Ok(FitResult {
        pose: bp,
        shape: bs,
        camera: bc,
        reports,
        final_total: bt,
        converged,
        iterations: iter,
        duration_seconds,
    })
}
