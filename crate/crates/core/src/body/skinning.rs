//! Forward kinematics, linear blend skinning and the hand-written reverse
//! pass carrying vertex/joint gradients back to `(theta, beta)`.

use alloc::vec::Vec;

use super::{rodrigues, rodrigues_jacobian, BodyError, BodyModel, PoseParams, PosedBody, Skeleton};
use crate::math::{Mat3, Vec3};

/// Global joint transforms plus the per-joint caches the backward pass needs.
#[derive(Debug, Clone)]
pub struct FkState {
    /// Global joint positions (meters).
    pub positions: Vec<Vec3>,
    /// Global joint rotations.
    pub rotations: Vec<Mat3>,
    /// Local (relative) rotations, one per joint.
    pub local_rotations: Vec<Mat3>,
    /// Rest-pose global joint positions.
    pub rest_positions: Vec<Vec3>,
}

/// Composes local transforms down the tree. The root is processed first;
/// every child transform is `parent_global * (offset, local_rotation)`.
pub fn forward_kinematics(skeleton: &Skeleton, pose: &PoseParams) -> Result<FkState, BodyError> {
    let n = skeleton.joint_count();
    if pose.joint_count() != n {
        return Err(BodyError::Dimension {
            what: "pose rotations",
            expected: n,
            got: pose.joint_count(),
        });
    }
    let mut positions = Vec::with_capacity(n);
    let mut rotations = Vec::with_capacity(n);
    let mut local_rotations = Vec::with_capacity(n);
    for (j, joint) in skeleton.joints.iter().enumerate() {
        let local = rodrigues(pose.rotations[j]);
        let (pos, rot) = match joint.parent {
            None => (joint.offset, local),
            Some(p) => {
                let parent_rot: Mat3 = rotations[p];
                (
                    positions[p] + parent_rot.mul_vec(joint.offset),
                    parent_rot.mul_mat(local),
                )
            }
        };
        positions.push(pos);
        rotations.push(rot);
        local_rotations.push(local);
    }
    Ok(FkState {
        positions,
        rotations,
        local_rotations,
        rest_positions: skeleton.rest_positions(),
    })
}

/// Skins shaped rest vertices with the current joint transforms. Each vertex
/// is the weight-blended image of its rest position under the per-joint rigid
/// motions relative to the rest pose.
pub fn linear_blend_skinning(
    model: &BodyModel,
    shaped: &[Vec3],
    fk: &FkState,
) -> Result<PosedBody, BodyError> {
    let v_count = model.vertex_count();
    let j_count = model.joint_count();
    if shaped.len() != v_count {
        return Err(BodyError::Dimension {
            what: "shaped vertices",
            expected: v_count,
            got: shaped.len(),
        });
    }
    if fk.positions.len() != j_count {
        return Err(BodyError::Dimension {
            what: "fk joints",
            expected: j_count,
            got: fk.positions.len(),
        });
    }
    let mut vertices = Vec::with_capacity(v_count);
    for (vi, x) in shaped.iter().enumerate() {
        let row = &model.mesh.weights[vi * j_count..(vi + 1) * j_count];
        let mut out = Vec3::ZERO;
        for (j, &w) in row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            // G_j x = W_j (x - rest_j) + t_j
            let moved = fk.rotations[j].mul_vec(*x - fk.rest_positions[j]) + fk.positions[j];
            out += moved * w;
        }
        vertices.push(out);
    }
    Ok(PosedBody {
        vertices,
        joint_positions: fk.positions.clone(),
        joint_rotations: fk.rotations.clone(),
    })
}

/// Gradient of a scalar with respect to the pose and shape parameters.
#[derive(Debug, Clone)]
pub struct ParamGrad {
    pub d_theta: Vec<Vec3>,
    pub d_beta: Vec<f64>,
}

impl ParamGrad {
    pub fn zeros(joints: usize, rank: usize) -> Self {
        ParamGrad {
            d_theta: alloc::vec![Vec3::ZERO; joints],
            d_beta: alloc::vec![0.0; rank],
        }
    }
}

/// Reverse pass of FK + skinning: given upstream gradients on posed vertices
/// (`d_vertices`, may be empty for none) and on joint positions (`d_joints`),
/// accumulates gradients on the axis-angle pose and the shape coefficients.
pub fn lbs_backward(
    model: &BodyModel,
    state: &super::BodyState,
    d_vertices: &[Vec3],
    d_joints: &[Vec3],
) -> Result<ParamGrad, BodyError> {
    let v_count = model.vertex_count();
    let j_count = model.joint_count();
    if !d_vertices.is_empty() && d_vertices.len() != v_count {
        return Err(BodyError::Dimension {
            what: "vertex gradients",
            expected: v_count,
            got: d_vertices.len(),
        });
    }
    if !d_joints.is_empty() && d_joints.len() != j_count {
        return Err(BodyError::Dimension {
            what: "joint gradients",
            expected: j_count,
            got: d_joints.len(),
        });
    }
    let fk = &state.fk;

    // Adjoints of the global transforms.
    let mut w_bar = alloc::vec![Mat3::zeros(); j_count];
    let mut t_bar = alloc::vec![Vec3::ZERO; j_count];
    for (j, t) in t_bar.iter_mut().enumerate() {
        if !d_joints.is_empty() {
            *t = d_joints[j];
        }
    }

    let mut d_beta = alloc::vec![0.0; model.shape_rank()];
    if !d_vertices.is_empty() {
        // Vertex terms: posed_v = sum_j w_vj (W_j (x_v - rest_j) + t_j).
        let mut x_bar = alloc::vec![Vec3::ZERO; v_count];
        for vi in 0..v_count {
            let g = d_vertices[vi];
            if g == Vec3::ZERO {
                continue;
            }
            let row = &model.mesh.weights[vi * j_count..(vi + 1) * j_count];
            let x = state.shaped[vi];
            for (j, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let gw = g * w;
                w_bar[j] += Mat3::outer(gw, x - fk.rest_positions[j]);
                t_bar[j] += gw;
                x_bar[vi] += fk.rotations[j].transpose().mul_vec(gw);
            }
        }
        for (k, mode) in model.mesh.shape_basis.iter().enumerate() {
            d_beta[k] = x_bar.iter().zip(mode).map(|(g, b)| g.dot(*b)).sum();
        }
    }

    // Reverse sweep through the tree recurrences
    //   W_j = W_p R_j,   t_j = t_p + W_p o_j.
    let mut r_bar = alloc::vec![Mat3::zeros(); j_count];
    for j in (0..j_count).rev() {
        match model.skeleton.joints[j].parent {
            None => {
                r_bar[j] = w_bar[j];
            }
            Some(p) => {
                let parent_rot = fk.rotations[p];
                let wj = w_bar[j];
                w_bar[p] += wj.mul_mat(fk.local_rotations[j].transpose());
                r_bar[j] = parent_rot.transpose().mul_mat(wj);
                let tj = t_bar[j];
                t_bar[p] += tj;
                w_bar[p] += Mat3::outer(tj, model.skeleton.joints[j].offset);
            }
        }
    }

    let mut d_theta = alloc::vec![Vec3::ZERO; j_count];
    for j in 0..j_count {
        if r_bar[j].frobenius_dot(r_bar[j]) == 0.0 {
            continue;
        }
        let jac = rodrigues_jacobian(state.pose.rotations[j]);
        d_theta[j] = Vec3::new(
            r_bar[j].frobenius_dot(jac[0]),
            r_bar[j].frobenius_dot(jac[1]),
            r_bar[j].frobenius_dot(jac[2]),
        );
    }
    Ok(ParamGrad { d_theta, d_beta })
}
