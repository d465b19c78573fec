//! Soft per-part coverage maps.
//!
//! Each part's soft mask is `m(p) = 1 - prod_f (1 - sigmoid(-d(p, f)/sigma))`
//! over the part's projected faces, where `d` is the signed 2D distance to a
//! triangle (negative inside). The product form means a pixel deep inside any
//! face saturates to 1 and a pixel on an edge receives exactly 0.5 from that
//! face; thresholding at 0.5 converges to the hard rasterized occupancy as
//! sigma goes to zero.

use alloc::vec::Vec;

use super::RasterError;
use crate::body::BodyModel;
use crate::camera::{project, CameraParams};
use crate::math::{sigmoid, Vec2, Vec3};

/// Sigma multiple beyond which `sigmoid(-d/sigma)` underflows to exactly 0.0
/// in f64; with this cutoff the windowed evaluation is not an approximation.
pub const EXACT_CUTOFF_SIGMAS: f64 = 37.0;

/// Soft coverage maps plus the parameters needed to replay the backward pass.
#[derive(Debug, Clone)]
pub struct SoftMasks {
    pub width: u32,
    pub height: u32,
    pub sigma: f64,
    pub cutoff_sigmas: f64,
    /// One grid per part, values in [0, 1].
    pub masks: Vec<Vec<f64>>,
}

struct PartFaces {
    /// (face triangle, expanded bbox) for one part.
    tris: Vec<([Vec2; 3], [u32; 3], Vec2, Vec2)>,
}

fn collect_part_faces(
    model: &BodyModel,
    projected: &[Vec2],
    margin: f64,
    width: u32,
    height: u32,
) -> Vec<PartFaces> {
    let mut parts: Vec<PartFaces> = (0..model.parts).map(|_| PartFaces { tris: Vec::new() }).collect();
    for f in &model.mesh.faces {
        let part = model.mesh.vertex_iuv[f[0] as usize].part as usize - 1;
        let tri = [
            projected[f[0] as usize],
            projected[f[1] as usize],
            projected[f[2] as usize],
        ];
        let lo = Vec2::new(
            tri[0].x.min(tri[1].x).min(tri[2].x) - margin,
            tri[0].y.min(tri[1].y).min(tri[2].y) - margin,
        );
        let hi = Vec2::new(
            tri[0].x.max(tri[1].x).max(tri[2].x) + margin,
            tri[0].y.max(tri[1].y).max(tri[2].y) + margin,
        );
        if hi.x < 0.0 || hi.y < 0.0 || lo.x >= width as f64 || lo.y >= height as f64 {
            continue;
        }
        parts[part].tris.push((tri, *f, lo, hi));
    }
    parts
}

/// Exact soft masks (cutoff at the f64 underflow point of the sigmoid).
pub fn soft_part_masks(
    model: &BodyModel,
    posed_vertices: &[Vec3],
    camera: &CameraParams,
    width: u32,
    height: u32,
    sigma: f64,
) -> Result<SoftMasks, RasterError> {
    soft_part_masks_with_cutoff(model, posed_vertices, camera, width, height, sigma, EXACT_CUTOFF_SIGMAS)
}

/// Soft masks with an explicit evaluation window. Cutoffs below
/// [`EXACT_CUTOFF_SIGMAS`] trade mask tails (at most `sigmoid(-cutoff)` per
/// face) for speed; the fitter uses a tight window, gradient checks use the
/// exact one. Forward and backward share the window, so gradients stay
/// consistent with the forward values at any setting.
pub fn soft_part_masks_with_cutoff(
    model: &BodyModel,
    posed_vertices: &[Vec3],
    camera: &CameraParams,
    width: u32,
    height: u32,
    sigma: f64,
    cutoff_sigmas: f64,
) -> Result<SoftMasks, RasterError> {
    if !(sigma > 0.0) {
        return Err(RasterError::NonPositiveSigma);
    }
    if posed_vertices.len() != model.vertex_count() {
        return Err(RasterError::Dimension {
            what: "posed vertices",
            expected: model.vertex_count(),
            got: posed_vertices.len(),
        });
    }
    let projected: Vec<Vec2> = project(posed_vertices, camera)?
        .into_iter()
        .map(|p| p.pixel)
        .collect();

    let margin = cutoff_sigmas * sigma;
    let parts = collect_part_faces(model, &projected, margin, width, height);
    let n = (width * height) as usize;
    let mut masks = Vec::with_capacity(parts.len());
    for part in &parts {
        // One minus the mask, accumulated multiplicatively.
        let mut q = alloc::vec![1.0f64; n];
        for (tri, _f, lo, hi) in &part.tris {
            let x0 = libm::floor(lo.x - 0.5).max(0.0) as u32;
            let y0 = libm::floor(lo.y - 0.5).max(0.0) as u32;
            let x1 = (libm::ceil(hi.x) as i64).clamp(0, width as i64 - 1) as u32;
            let y1 = (libm::ceil(hi.y) as i64).clamp(0, height as i64 - 1) as u32;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = (y * width + x) as usize;
                    if q[i] == 0.0 {
                        continue;
                    }
                    let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
                    let d = signed_distance(p, tri);
                    if d >= margin {
                        continue;
                    }
                    let s = sigmoid(-d / sigma);
                    q[i] *= 1.0 - s;
                }
            }
        }
        masks.push(q.into_iter().map(|q| 1.0 - q).collect());
    }
    Ok(SoftMasks {
        width,
        height,
        sigma,
        cutoff_sigmas,
        masks,
    })
}

/// Routes upstream per-pixel mask gradients back to projected vertex
/// positions. `upstream` holds one grid per part, like the forward masks.
pub fn soft_masks_backward(
    model: &BodyModel,
    posed_vertices: &[Vec3],
    camera: &CameraParams,
    soft: &SoftMasks,
    upstream: &[Vec<f64>],
) -> Result<Vec<Vec2>, RasterError> {
    if upstream.len() != soft.masks.len() {
        return Err(RasterError::Dimension {
            what: "upstream mask grids",
            expected: soft.masks.len(),
            got: upstream.len(),
        });
    }
    let projected: Vec<Vec2> = project(posed_vertices, camera)?
        .into_iter()
        .map(|p| p.pixel)
        .collect();
    let margin = soft.cutoff_sigmas * soft.sigma;
    let parts = collect_part_faces(model, &projected, margin, soft.width, soft.height);

    let mut grad = alloc::vec![Vec2::ZERO; model.vertex_count()];
    let (width, height) = (soft.width, soft.height);
    for (part_idx, part) in parts.iter().enumerate() {
        let up = &upstream[part_idx];
        if up.len() != (width * height) as usize {
            return Err(RasterError::Dimension {
                what: "upstream grid size",
                expected: (width * height) as usize,
                got: up.len(),
            });
        }
        let mask = &soft.masks[part_idx];
        for (tri, f, lo, hi) in &part.tris {
            let x0 = libm::floor(lo.x - 0.5).max(0.0) as u32;
            let y0 = libm::floor(lo.y - 0.5).max(0.0) as u32;
            let x1 = (libm::ceil(hi.x) as i64).clamp(0, width as i64 - 1) as u32;
            let y1 = (libm::ceil(hi.y) as i64).clamp(0, height as i64 - 1) as u32;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = (y * width + x) as usize;
                    let g = up[i];
                    if g == 0.0 {
                        continue;
                    }
                    // q = 1 - m; pixels saturated to exactly 1 are flat.
                    let q = 1.0 - mask[i];
                    if q == 0.0 {
                        continue;
                    }
                    let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
                    let (d, d_grad) = signed_distance_grad(p, tri);
                    if d >= margin {
                        continue;
                    }
                    let s = sigmoid(-d / soft.sigma);
                    if s >= 1.0 {
                        continue;
                    }
                    // dm/dd for this face is -q * s / sigma: the face's own
                    // (1 - s) factor cancels against the full product q.
                    let scale = -g * q * s / soft.sigma;
                    for (k, dg) in d_grad.iter().enumerate() {
                        grad[f[k] as usize] += *dg * scale;
                    }
                }
            }
        }
    }
    Ok(grad)
}

/// Signed distance from a point to a 2D triangle: negative inside, zero on
/// the boundary, positive outside.
pub fn signed_distance(p: Vec2, tri: &[Vec2; 3]) -> f64 {
    let (d, _) = signed_distance_grad(p, tri);
    d
}

/// Signed distance plus its gradient with respect to the three triangle
/// vertices. The gradient follows the nearest boundary feature (edge or
/// corner); exactly on the boundary it is left at zero.
pub fn signed_distance_grad(p: Vec2, tri: &[Vec2; 3]) -> (f64, [Vec2; 3]) {
    let mut best = f64::INFINITY;
    let mut best_edge = 0usize;
    let mut best_t = 0.0f64;
    for e in 0..3 {
        let a = tri[e];
        let b = tri[(e + 1) % 3];
        let ab = b - a;
        let len_sq = ab.norm_sq();
        let t = if len_sq > 1e-24 {
            ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let dist = (p - (a + ab * t)).norm();
        if dist < best {
            best = dist;
            best_edge = e;
            best_t = t;
        }
    }

    let area = (tri[1] - tri[0]).cross(tri[2] - tri[0]);
    let inside = if area == 0.0 {
        false
    } else {
        let s0 = (tri[1] - tri[0]).cross(p - tri[0]);
        let s1 = (tri[2] - tri[1]).cross(p - tri[1]);
        let s2 = (tri[0] - tri[2]).cross(p - tri[2]);
        if area > 0.0 {
            s0 > 0.0 && s1 > 0.0 && s2 > 0.0
        } else {
            s0 < 0.0 && s1 < 0.0 && s2 < 0.0
        }
    };
    let sign = if inside { -1.0 } else { 1.0 };

    let mut grads = [Vec2::ZERO; 3];
    if best > 1e-12 {
        let a_idx = best_edge;
        let b_idx = (best_edge + 1) % 3;
        let a = tri[a_idx];
        let b = tri[b_idx];
        if best_t <= 0.0 {
            grads[a_idx] = (a - p) * (sign / best);
        } else if best_t >= 1.0 {
            grads[b_idx] = (b - p) * (sign / best);
        } else {
            // Distance to the supporting line: |cross(b - a, p - a)| / |b - a|.
            let ab = b - a;
            let len = ab.norm();
            let c = ab.cross(p - a);
            let cs = if c >= 0.0 { 1.0 } else { -1.0 };
            // d|c|/da and d|c|/db, then the quotient rule against |b - a|.
            let dc_da = Vec2::new((b - p).y, (p - b).x) * cs;
            let dc_db = Vec2::new((p - a).y, (a - p).x) * cs;
            let dlen_da = (a - b) * (1.0 / len);
            let dlen_db = (b - a) * (1.0 / len);
            let abs_c = c.abs();
            grads[a_idx] = (dc_da * len - dlen_da * abs_c) * (sign / (len * len));
            grads[b_idx] = (dc_db * len - dlen_db * abs_c) * (sign / (len * len));
        }
    }
    (sign * best, grads)
}
