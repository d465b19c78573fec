//! Shared fixtures for unit tests: ad-hoc triangle-soup models and cameras.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::body::{BodyModel, Joint, Skeleton, TemplateMesh, VertexIuv};
use crate::camera::CameraParams;
use crate::math::{Vec2, Vec3};

#[derive(Debug, Clone)]
pub struct TestTri {
    pub positions: [Vec3; 3],
    pub part: u8,
    pub uvs: [(f64, f64); 3],
}

/// Builds a minimal body model around explicit triangles: one root joint,
/// every vertex rigidly weighted to it, empty shape basis.
pub fn tri_soup_model(tris: &[TestTri]) -> BodyModel {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut vertex_iuv = Vec::new();
    let mut parts = 1u8;
    for tri in tris {
        let base = vertices.len() as u32;
        for k in 0..3 {
            vertices.push(tri.positions[k]);
            vertex_iuv.push(VertexIuv {
                part: tri.part,
                u: tri.uvs[k].0,
                v: tri.uvs[k].1,
            });
        }
        faces.push([base, base + 1, base + 2]);
        parts = parts.max(tri.part);
    }
    let weights = alloc::vec![1.0; vertices.len()];
    BodyModel {
        skeleton: Skeleton {
            joints: alloc::vec![Joint {
                name: "root".to_string(),
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
        parts,
    }
}

/// Camera with scale 1 and no offset: projected pixels equal world (x, y).
pub fn identity_camera() -> CameraParams {
    CameraParams {
        scale: 1.0,
        offset: Vec2::ZERO,
    }
}
