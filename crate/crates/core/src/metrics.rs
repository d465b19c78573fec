//! Evaluation metrics: MPJPE (raw and Procrustes-aligned), PCK/AUC, mesh
//! vertex error, parameter MSE, and segmentation accuracy/F1 with part
//! merging. Position inputs are in meters; distance outputs in millimeters.

use alloc::vec::Vec;
use core::fmt;

use crate::body::{PoseParams, ShapeParams};
use crate::camera::CameraParams;
use crate::loss::{regression_element_count, regression_loss};
use crate::math::{sym_eigen_3x3, Mat3, Vec3};
use crate::raster::IuvImage;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricError {
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// Point sets too degenerate for Procrustes alignment.
    DegenerateAlignment,
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricError::Dimension { what, expected, got } => {
                write!(f, "dimension mismatch for {what}: expected {expected}, got {got}")
            }
            MetricError::DegenerateAlignment => write!(f, "degenerate point set for alignment"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MetricError {}

/// Root joint used to translation-align point sets before comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootAlign {
    /// Subtract one joint (by index).
    Joint(usize),
    /// Subtract the midpoint of two joints; for the 14-joint LSP layout the
    /// pelvis is the midpoint of the hips (indices 2 and 3).
    Midpoint(usize, usize),
    None,
}

/// Pelvis proxy for the LSP-14 ordering.
pub const LSP14_PELVIS: RootAlign = RootAlign::Midpoint(2, 3);

fn aligned(points: &[Vec3], root: RootAlign) -> Vec<Vec3> {
    let origin = match root {
        RootAlign::Joint(i) => points[i],
        RootAlign::Midpoint(i, j) => (points[i] + points[j]) * 0.5,
        RootAlign::None => Vec3::ZERO,
    };
    points.iter().map(|p| *p - origin).collect()
}

const M_TO_MM: f64 = 1000.0;

/// Mean per-joint position error in millimeters after root alignment.
pub fn mpjpe(pred: &[Vec3], gt: &[Vec3], root: RootAlign) -> Result<f64, MetricError> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(MetricError::Dimension {
            what: "joint sets",
            expected: gt.len(),
            got: pred.len(),
        });
    }
    let p = aligned(pred, root);
    let g = aligned(gt, root);
    let sum: f64 = p.iter().zip(&g).map(|(a, b)| (*a - *b).norm()).sum();
    Ok(sum / pred.len() as f64 * M_TO_MM)
}

/// Optimal similarity transform (rotation, translation, uniform scale;
/// reflection excluded) mapping `from` onto `to`.
fn umeyama(from: &[Vec3], to: &[Vec3]) -> Result<(f64, Mat3, Vec3), MetricError> {
    let n = from.len() as f64;
    let mean_from = from.iter().fold(Vec3::ZERO, |a, b| a + *b) * (1.0 / n);
    let mean_to = to.iter().fold(Vec3::ZERO, |a, b| a + *b) * (1.0 / n);

    let mut cov = Mat3::zeros();
    let mut var_from = 0.0;
    for (f, t) in from.iter().zip(to) {
        let df = *f - mean_from;
        let dt = *t - mean_to;
        cov += Mat3::outer(dt, df);
        var_from += df.norm_sq();
    }
    cov = cov * (1.0 / n);
    var_from /= n;
    if var_from < 1e-18 {
        return Err(MetricError::DegenerateAlignment);
    }

    // SVD of the 3x3 covariance through the eigendecomposition of C^T C.
    let ctc = cov.transpose().mul_mat(cov);
    let (evals, v) = sym_eigen_3x3(ctc);
    let singular: Vec<f64> = evals.iter().map(|e| libm::sqrt(e.max(0.0))).collect();
    if singular[0] < 1e-18 {
        return Err(MetricError::DegenerateAlignment);
    }

    // Left singular vectors; rebuild degenerate columns by orthogonality.
    let mut u_cols = [Vec3::ZERO; 3];
    for k in 0..3 {
        if singular[k] > 1e-12 * singular[0] {
            u_cols[k] = cov.mul_vec(v.column(k)) * (1.0 / singular[k]);
        } else {
            u_cols[k] = u_cols[0].cross(u_cols[1]).normalized();
        }
    }
    let u = Mat3([
        [u_cols[0].x, u_cols[1].x, u_cols[2].x],
        [u_cols[0].y, u_cols[1].y, u_cols[2].y],
        [u_cols[0].z, u_cols[1].z, u_cols[2].z],
    ]);

    // Reflection handling: flip the smallest singular direction if needed.
    let mut d = [1.0, 1.0, 1.0];
    if u.mul_mat(v.transpose()).det() < 0.0 {
        d[2] = -1.0;
    }
    let mut rot = Mat3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for k in 0..3 {
                s += u.0[i][k] * d[k] * v.0[j][k];
            }
            rot.0[i][j] = s;
        }
    }
    let scale = (singular[0] * d[0] + singular[1] * d[1] + singular[2] * d[2]) / var_from;
    let translation = mean_to - rot.mul_vec(mean_from) * scale;
    Ok((scale, rot, translation))
}

/// MPJPE in millimeters after per-frame Procrustes (similarity) alignment of
/// the prediction onto the ground truth.
pub fn pa_mpjpe(pred: &[Vec3], gt: &[Vec3]) -> Result<f64, MetricError> {
    if pred.len() != gt.len() || pred.len() < 3 {
        return Err(MetricError::Dimension {
            what: "joint sets (need >= 3)",
            expected: gt.len().max(3),
            got: pred.len(),
        });
    }
    let (scale, rot, translation) = umeyama(pred, gt)?;
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (rot.mul_vec(*p) * scale + translation - *g).norm())
        .sum();
    Ok(sum / pred.len() as f64 * M_TO_MM)
}

/// PCK at 150 mm plus the AUC over thresholds 5, 10, ..., 150 mm, both in
/// percent, after root alignment. A joint counts as correct when its error
/// is strictly below the threshold.
pub fn pck_auc(pred: &[Vec3], gt: &[Vec3], root: RootAlign) -> Result<(f64, f64), MetricError> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(MetricError::Dimension {
            what: "joint sets",
            expected: gt.len(),
            got: pred.len(),
        });
    }
    let p = aligned(pred, root);
    let g = aligned(gt, root);
    let errors_mm: Vec<f64> = p.iter().zip(&g).map(|(a, b)| (*a - *b).norm() * M_TO_MM).collect();
    let pck_at = |threshold: f64| -> f64 {
        let ok = errors_mm.iter().filter(|e| **e < threshold).count();
        100.0 * ok as f64 / errors_mm.len() as f64
    };
    let mut auc = 0.0;
    let mut steps = 0;
    let mut t = 5.0;
    while t <= 150.0 + 1e-9 {
        auc += pck_at(t);
        steps += 1;
        t += 5.0;
    }
    Ok((pck_at(150.0), auc / steps as f64))
}

/// Mean per-vertex position error in millimeters between index-corresponding
/// meshes. No internal alignment; callers root-align beforehand when needed.
pub fn mpvpe(pred: &[Vec3], gt: &[Vec3]) -> Result<f64, MetricError> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(MetricError::Dimension {
            what: "vertex sets",
            expected: gt.len(),
            got: pred.len(),
        });
    }
    let sum: f64 = pred.iter().zip(gt).map(|(a, b)| (*a - *b).norm()).sum();
    Ok(sum / pred.len() as f64 * M_TO_MM)
}

/// Mean squared error over the concatenated rotation-matrix entries, shape
/// coefficients and (optionally) camera parameters; exactly the regression
/// loss divided by its element count.
pub fn mse_params(
    pose: &PoseParams,
    shape: &ShapeParams,
    camera: &CameraParams,
    gt_pose: &PoseParams,
    gt_shape: &ShapeParams,
    gt_camera: &CameraParams,
    include_camera: bool,
) -> Result<f64, MetricError> {
    let (mut loss, _) = regression_loss(pose, shape, camera, gt_pose, gt_shape, gt_camera)
        .map_err(|_| MetricError::Dimension {
            what: "parameter vectors",
            expected: gt_pose.joint_count(),
            got: pose.joint_count(),
        })?;
    let mut count = regression_element_count(pose.joint_count(), shape.rank());
    if !include_camera {
        let da = [
            camera.scale - gt_camera.scale,
            camera.offset.x - gt_camera.offset.x,
            camera.offset.y - gt_camera.offset.y,
        ];
        loss -= da.iter().map(|d| d * d).sum::<f64>();
        count -= 3;
    }
    Ok(loss / count as f64)
}

/// Maps raw part indices to evaluation groups. Index 0 (background) always
/// maps to group 0.
#[derive(Debug, Clone)]
pub struct PartMergeMap {
    /// `groups[p - 1]` is the evaluation group of raw part `p`.
    pub groups: Vec<u8>,
}

impl PartMergeMap {
    /// Every part is its own group.
    pub fn identity(parts: u8) -> Self {
        PartMergeMap {
            groups: (1..=parts).collect(),
        }
    }

    /// Head, torso, left/right arm, left/right leg for the standard 12-part
    /// layout (hands merge into arms, lower legs into legs).
    pub fn six_groups() -> Self {
        PartMergeMap {
            // torso, head, l/r upper arm, l/r lower arm, l/r hand,
            // l/r upper leg, l/r lower leg
            groups: alloc::vec![1, 2, 3, 4, 3, 4, 3, 4, 5, 6, 5, 6],
        }
    }

    /// Foreground/background only.
    pub fn foreground(parts: u8) -> Self {
        PartMergeMap {
            groups: alloc::vec![1; parts as usize],
        }
    }

    fn group_of(&self, part: u8) -> u8 {
        if part == 0 {
            0
        } else {
            self.groups[(part - 1) as usize]
        }
    }

    fn group_count(&self) -> u8 {
        self.groups.iter().copied().max().unwrap_or(0)
    }
}

/// Pixel accuracy and per-group F1 for a predicted segmentation against
/// ground truth, at the granularity of a merge map.
#[derive(Debug, Clone)]
pub struct SegScores {
    /// Overall pixel accuracy in percent (background included).
    pub accuracy: f64,
    /// F1 per merged group, 1-indexed part groups only.
    pub per_group_f1: Vec<f64>,
    pub mean_f1: f64,
    /// Foreground-vs-background accuracy in percent and foreground F1.
    pub fg_accuracy: f64,
    pub fg_f1: f64,
}

pub fn segmentation_scores(
    pred: &IuvImage,
    gt: &IuvImage,
    merge: &PartMergeMap,
) -> Result<SegScores, MetricError> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(MetricError::Dimension {
            what: "image sizes",
            expected: gt.pixel_count(),
            got: pred.pixel_count(),
        });
    }
    let groups = merge.group_count() as usize;
    let n = pred.pixel_count();
    let mut correct = 0usize;
    let mut fg_correct = 0usize;
    // Per group: true positives, predicted positives, actual positives.
    let mut tp = alloc::vec![0usize; groups + 1];
    let mut pp = alloc::vec![0usize; groups + 1];
    let mut ap = alloc::vec![0usize; groups + 1];
    for i in 0..n {
        let p = merge.group_of(pred.part[i]);
        let g = merge.group_of(gt.part[i]);
        if p == g {
            correct += 1;
            if p != 0 {
                tp[p as usize] += 1;
            }
        }
        if (p != 0) == (g != 0) {
            fg_correct += 1;
        }
        if p != 0 {
            pp[p as usize] += 1;
        }
        if g != 0 {
            ap[g as usize] += 1;
        }
    }
    let f1 = |tp: usize, pp: usize, ap: usize| -> f64 {
        if pp + ap == 0 {
            1.0 // group absent everywhere: treat as perfect
        } else {
            2.0 * tp as f64 / (pp + ap) as f64
        }
    };
    let per_group_f1: Vec<f64> = (1..=groups).map(|g| f1(tp[g], pp[g], ap[g])).collect();
    let mean_f1 = if per_group_f1.is_empty() {
        1.0
    } else {
        per_group_f1.iter().sum::<f64>() / per_group_f1.len() as f64
    };
    // Foreground F1 treats any nonzero label as positive.
    let mut fg_tp = 0usize;
    let mut fg_pp = 0usize;
    let mut fg_ap = 0usize;
    for i in 0..n {
        let p = pred.part[i] != 0;
        let g = gt.part[i] != 0;
        fg_pp += p as usize;
        fg_ap += g as usize;
        fg_tp += (p && g) as usize;
    }
    Ok(SegScores {
        accuracy: 100.0 * correct as f64 / n as f64,
        per_group_f1,
        mean_f1,
        fg_accuracy: 100.0 * fg_correct as f64 / n as f64,
        fg_f1: f1(fg_tp, fg_pp, fg_ap),
    })
}

/// Flat per-sample evaluation record; aggregation and CSV output live in the
/// companion crate.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mpjpe_mm: f64,
    pub pa_mpjpe_mm: f64,
    pub pck: f64,
    pub auc: f64,
    pub mpvpe_mm: f64,
    pub mse_params: f64,
    pub seg_accuracy: f64,
    pub seg_mean_f1: f64,
    pub fg_accuracy: f64,
    pub fg_f1: f64,
}

#[cfg(test)]
mod tests;
