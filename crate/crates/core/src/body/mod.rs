//! Parametric human body: skeleton tree, shape blend space, template mesh
//! with a per-vertex IUV chart, forward kinematics and linear blend skinning.

mod rotation;
mod skeleton;
mod skinning;
mod template;

pub use rotation::{rodrigues, rodrigues_jacobian};
pub use skeleton::{Joint, PoseParams, Skeleton, SkeletonPreset};
pub use skinning::{forward_kinematics, lbs_backward, linear_blend_skinning, FkState, ParamGrad};
pub use template::{build_procedural_template, TemplateConfig};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::math::Vec3;

/// Errors from body-model construction and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum BodyError {
    /// Bad template configuration (zero parts, zero-rank basis, ...).
    InvalidConfig(String),
    /// Malformed skeleton (ordering, root count).
    InvalidSkeleton(String),
    /// An input's length does not match the model.
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// Loaded or constructed data violates a model invariant.
    InvalidModel(String),
}

impl fmt::Display for BodyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BodyError::InvalidConfig(m) => write!(f, "invalid configuration: {m}"),
            BodyError::InvalidSkeleton(m) => write!(f, "invalid skeleton: {m}"),
            BodyError::Dimension { what, expected, got } => {
                write!(f, "dimension mismatch for {what}: expected {expected}, got {got}")
            }
            BodyError::InvalidModel(m) => write!(f, "invalid model: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for BodyError {}

/// Per-vertex chart entry: part index and surface coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexIuv {
    /// Body part index in 1..=P (0 is reserved for image background).
    pub part: u8,
    pub u: f64,
    pub v: f64,
}

/// Rest-pose mesh with the attributes needed for posing and rendering.
#[derive(Debug, Clone)]
pub struct TemplateMesh {
    /// Rest vertex positions (meters).
    pub vertices: Vec<Vec3>,
    /// Triangle vertex indices, consistently oriented outward.
    pub faces: Vec<[u32; 3]>,
    pub vertex_iuv: Vec<VertexIuv>,
    /// Dense skinning weights, row-major `V x joint_count`; rows sum to 1.
    pub weights: Vec<f64>,
    /// Shape displacement fields, `rank` entries of `V` vectors each,
    /// mutually orthogonal under the flattened inner product.
    pub shape_basis: Vec<Vec<Vec3>>,
}

impl TemplateMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn shape_rank(&self) -> usize {
        self.shape_basis.len()
    }

    pub fn weight(&self, vertex: usize, joint: usize, joint_count: usize) -> f64 {
        self.weights[vertex * joint_count + joint]
    }
}

/// Immutable body model: skeleton plus template mesh. Safe to share across
/// threads; every operation takes it by shared reference.
#[derive(Debug, Clone)]
pub struct BodyModel {
    pub skeleton: Skeleton,
    pub mesh: TemplateMesh,
    /// Number of body parts P; vertex part indices lie in 1..=P.
    pub parts: u8,
}

/// Shape coefficients (beta), one per basis mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeParams {
    pub coefficients: Vec<f64>,
}

impl ShapeParams {
    pub fn zeros(rank: usize) -> Self {
        ShapeParams {
            coefficients: alloc::vec![0.0; rank],
        }
    }

    pub fn rank(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_finite(&self) -> bool {
        self.coefficients.iter().all(|c| c.is_finite())
    }
}

/// A fully posed body: skinned vertices plus global joint transforms.
#[derive(Debug, Clone)]
pub struct PosedBody {
    pub vertices: Vec<Vec3>,
    pub joint_positions: Vec<Vec3>,
    pub joint_rotations: Vec<crate::math::Mat3>,
}

/// Forward-pass cache: everything the loss gradients need to run the chain
/// rule back to `(theta, beta)`.
#[derive(Debug, Clone)]
pub struct BodyState {
    pub pose: PoseParams,
    pub shaped: Vec<Vec3>,
    pub fk: FkState,
    pub posed: PosedBody,
}

impl BodyState {
    pub fn compute(
        model: &BodyModel,
        pose: &PoseParams,
        shape: &ShapeParams,
    ) -> Result<BodyState, BodyError> {
        let shaped = apply_shape(model, shape)?;
        let fk = forward_kinematics(&model.skeleton, pose)?;
        let posed = linear_blend_skinning(model, &shaped, &fk)?;
        Ok(BodyState {
            pose: pose.clone(),
            shaped,
            fk,
            posed,
        })
    }
}

impl BodyModel {
    pub fn vertex_count(&self) -> usize {
        self.mesh.vertex_count()
    }

    pub fn joint_count(&self) -> usize {
        self.skeleton.joint_count()
    }

    pub fn shape_rank(&self) -> usize {
        self.mesh.shape_rank()
    }

    /// Axis-aligned bounding box of the rest-pose template.
    pub fn rest_bbox(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for v in &self.mesh.vertices {
            lo = Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z));
            hi = Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z));
        }
        (lo, hi)
    }

    /// Verifies every structural invariant. Run by the binary-format loader
    /// and by tests; construction via `build_procedural_template` satisfies
    /// these by design.
    pub fn validate(&self) -> Result<(), BodyError> {
        self.skeleton.validate()?;
        let v = self.vertex_count();
        let j = self.joint_count();
        if self.mesh.vertex_iuv.len() != v {
            return Err(BodyError::Dimension {
                what: "vertex_iuv",
                expected: v,
                got: self.mesh.vertex_iuv.len(),
            });
        }
        if self.mesh.weights.len() != v * j {
            return Err(BodyError::Dimension {
                what: "weights",
                expected: v * j,
                got: self.mesh.weights.len(),
            });
        }
        for (vi, iuv) in self.mesh.vertex_iuv.iter().enumerate() {
            if iuv.part == 0 || iuv.part > self.parts {
                return Err(BodyError::InvalidModel(alloc::format!(
                    "vertex {vi} part {} out of range 1..={}",
                    iuv.part,
                    self.parts
                )));
            }
            if !(0.0..=1.0).contains(&iuv.u) || !(0.0..=1.0).contains(&iuv.v) {
                return Err(BodyError::InvalidModel(alloc::format!("vertex {vi} uv out of [0,1]")));
            }
        }
        for (row, chunk) in self.mesh.weights.chunks(j).enumerate() {
            let mut sum = 0.0;
            for &w in chunk {
                if w < 0.0 || !w.is_finite() {
                    return Err(BodyError::InvalidModel(alloc::format!(
                        "negative or non-finite weight on vertex {row}"
                    )));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(BodyError::InvalidModel(alloc::format!(
                    "weights of vertex {row} sum to {sum}"
                )));
            }
        }
        for (fi, f) in self.mesh.faces.iter().enumerate() {
            for &idx in f {
                if idx as usize >= v {
                    return Err(BodyError::InvalidModel(alloc::format!(
                        "face {fi} references vertex {idx} out of range"
                    )));
                }
            }
            let p0 = self.mesh.vertex_iuv[f[0] as usize].part;
            let p1 = self.mesh.vertex_iuv[f[1] as usize].part;
            let p2 = self.mesh.vertex_iuv[f[2] as usize].part;
            if p0 != p1 || p1 != p2 {
                return Err(BodyError::InvalidModel(alloc::format!("face {fi} straddles parts")));
            }
        }
        // Pairwise orthogonality of the shape basis, relative to mode norms.
        let norms: Vec<f64> = self
            .mesh
            .shape_basis
            .iter()
            .map(|m| libm::sqrt(m.iter().map(|d| d.norm_sq()).sum()))
            .collect();
        for a in 0..self.mesh.shape_basis.len() {
            if self.mesh.shape_basis[a].len() != v {
                return Err(BodyError::Dimension {
                    what: "shape basis mode",
                    expected: v,
                    got: self.mesh.shape_basis[a].len(),
                });
            }
            for b in (a + 1)..self.mesh.shape_basis.len() {
                let dot: f64 = self.mesh.shape_basis[a]
                    .iter()
                    .zip(&self.mesh.shape_basis[b])
                    .map(|(x, y)| x.dot(*y))
                    .sum();
                if dot.abs() > 1e-6 * norms[a] * norms[b] {
                    return Err(BodyError::InvalidModel(alloc::format!(
                        "shape modes {a} and {b} are not orthogonal"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Displaces the template by the linear shape blend: `t + sum_k beta_k b_k`.
pub fn apply_shape(model: &BodyModel, shape: &ShapeParams) -> Result<Vec<Vec3>, BodyError> {
    if shape.rank() != model.shape_rank() {
        return Err(BodyError::Dimension {
            what: "shape coefficients",
            expected: model.shape_rank(),
            got: shape.rank(),
        });
    }
    let mut out = model.mesh.vertices.clone();
    for (k, mode) in model.mesh.shape_basis.iter().enumerate() {
        let beta = shape.coefficients[k];
        if beta == 0.0 {
            continue;
        }
        for (o, d) in out.iter_mut().zip(mode) {
            *o += *d * beta;
        }
    }
    Ok(out)
}

/// Picks the 14 LSP-format joints out of a full set of joint positions.
pub fn select_lsp14(joint_positions: &[Vec3], map: &[usize; 14]) -> [Vec3; 14] {
    let mut out = [Vec3::ZERO; 14];
    for (o, &idx) in out.iter_mut().zip(map.iter()) {
        *o = joint_positions[idx];
    }
    out
}
