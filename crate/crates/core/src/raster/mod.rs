//! Differentiable IUV rasterizer.
//!
//! The hard pass point-samples pixel centers, resolves self-occlusion with a
//! depth buffer and records a per-pixel trace (face, barycentrics, depth) so
//! gradients can be routed back to the projected vertices of visible faces.
//! Boundary-sensitive signal is carried separately by the soft per-part masks
//! in [`soft`]; the hard pass only defines gradients through face interiors.

mod soft;

pub use soft::{
    signed_distance, signed_distance_grad, soft_masks_backward, soft_part_masks,
    soft_part_masks_with_cutoff, SoftMasks, EXACT_CUTOFF_SIGMAS,
};

use alloc::vec::Vec;
use core::fmt;

use crate::body::BodyModel;
use crate::camera::{project, CameraParams};
use crate::math::{quantize_f32, Vec2, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub enum RasterError {
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    NonPositiveSigma,
    Camera(crate::camera::CameraError),
}

impl fmt::Display for RasterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RasterError::Dimension { what, expected, got } => {
                write!(f, "dimension mismatch for {what}: expected {expected}, got {got}")
            }
            RasterError::NonPositiveSigma => write!(f, "sigma must be positive"),
            RasterError::Camera(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for RasterError {}

impl From<crate::camera::CameraError> for RasterError {
    fn from(e: crate::camera::CameraError) -> Self {
        RasterError::Camera(e)
    }
}

/// Per-pixel part index and surface coordinates. `part == 0` marks
/// background, where `u` and `v` are zero as well.
#[derive(Debug, Clone, PartialEq)]
pub struct IuvImage {
    pub width: u32,
    pub height: u32,
    pub part: Vec<u8>,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl IuvImage {
    pub fn background(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        IuvImage {
            width,
            height,
            part: alloc::vec![0; n],
            u: alloc::vec![0.0; n],
            v: alloc::vec![0.0; n],
        }
    }

    #[inline]
    pub fn idx(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    pub fn pixel_count(&self) -> usize {
        (self.width * self.height) as usize
    }

    pub fn foreground_count(&self) -> usize {
        self.part.iter().filter(|&&p| p != 0).count()
    }

    /// Checks the background sentinel and coordinate-range invariants.
    pub fn validate(&self) -> Result<(), RasterError> {
        let n = self.pixel_count();
        if self.part.len() != n || self.u.len() != n || self.v.len() != n {
            return Err(RasterError::Dimension {
                what: "image planes",
                expected: n,
                got: self.part.len().min(self.u.len()).min(self.v.len()),
            });
        }
        for i in 0..n {
            let fg = self.part[i] != 0;
            let (u, v) = (self.u[i], self.v[i]);
            if !fg && (u != 0.0 || v != 0.0) {
                return Err(RasterError::Dimension {
                    what: "background pixel with nonzero uv",
                    expected: 0,
                    got: i,
                });
            }
            if fg && (u == 0.0 && v == 0.0) {
                return Err(RasterError::Dimension {
                    what: "foreground pixel with zero uv sentinel",
                    expected: 0,
                    got: i,
                });
            }
            if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
                return Err(RasterError::Dimension {
                    what: "uv out of range",
                    expected: 0,
                    got: i,
                });
            }
        }
        Ok(())
    }
}

/// Rasterization byproducts needed for the backward pass: for every covered
/// pixel the winning face, its barycentric coordinates and depth.
#[derive(Debug, Clone)]
pub struct RasterTrace {
    pub width: u32,
    pub height: u32,
    /// Winning face index per pixel, -1 for background.
    pub face: Vec<i32>,
    pub bary: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
}

impl RasterTrace {
    /// Interpolated surface coordinates at a pixel, in full precision (the
    /// image planes narrow to f32). `None` on background.
    pub fn uv_at(&self, model: &BodyModel, x: u32, y: u32) -> Option<(f64, f64)> {
        let i = (y * self.width + x) as usize;
        let face = self.face[i];
        if face < 0 {
            return None;
        }
        let f = model.mesh.faces[face as usize];
        let b = self.bary[i];
        let mut u = 0.0;
        let mut v = 0.0;
        for k in 0..3 {
            let iuv = model.mesh.vertex_iuv[f[k] as usize];
            u += b[k] * iuv.u;
            v += b[k] * iuv.v;
        }
        Some((u, v))
    }
}

/// Signed double area of a projected triangle. Negative means the outward
/// face normal points toward the camera (front-facing) in the X-right /
/// Y-down / Z-depth frame.
#[inline]
fn double_area(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

const DEGENERATE_AREA: f64 = 1e-12;

/// Rasterizes a posed body into an IUV image plus trace. For each pixel the
/// front-facing face with the smallest interpolated depth at the pixel center
/// wins; UV is the barycentric blend of the face's vertex chart entries.
/// An empty mesh yields an all-background image.
pub fn rasterize(
    model: &BodyModel,
    posed_vertices: &[Vec3],
    camera: &CameraParams,
    width: u32,
    height: u32,
) -> Result<(IuvImage, RasterTrace), RasterError> {
    if posed_vertices.len() != model.vertex_count() {
        return Err(RasterError::Dimension {
            what: "posed vertices",
            expected: model.vertex_count(),
            got: posed_vertices.len(),
        });
    }
    let projected = project(posed_vertices, camera)?;
    let n = (width * height) as usize;
    let mut trace = RasterTrace {
        width,
        height,
        face: alloc::vec![-1; n],
        bary: alloc::vec![[0.0; 3]; n],
        depth: alloc::vec![f64::INFINITY; n],
    };

    for (fi, f) in model.mesh.faces.iter().enumerate() {
        let pa = projected[f[0] as usize];
        let pb = projected[f[1] as usize];
        let pc = projected[f[2] as usize];
        let (a, b, c) = (pa.pixel, pb.pixel, pc.pixel);
        let area2 = double_area(a, b, c);
        // Back-face and degeneracy test on the signed projected area.
        if area2 >= -DEGENERATE_AREA {
            continue;
        }
        let min_x = a.x.min(b.x).min(c.x);
        let max_x = a.x.max(b.x).max(c.x);
        let min_y = a.y.min(b.y).min(c.y);
        let max_y = a.y.max(b.y).max(c.y);
        // First and last pixel whose center can fall inside the bbox.
        let x0 = libm::floor(min_x - 0.5).max(0.0) as u32;
        let y0 = libm::floor(min_y - 0.5).max(0.0) as u32;
        if min_x >= width as f64 || min_y >= height as f64 || max_x < 0.0 || max_y < 0.0 {
            continue;
        }
        let x1 = (libm::ceil(max_x) as i64).clamp(0, width as i64 - 1) as u32;
        let y1 = (libm::ceil(max_y) as i64).clamp(0, height as i64 - 1) as u32;
        let inv = 1.0 / area2;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
                let l0 = double_area(p, b, c) * inv;
                let l1 = double_area(a, p, c) * inv;
                let l2 = double_area(a, b, p) * inv;
                if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                    continue;
                }
                let depth = l0 * pa.depth + l1 * pb.depth + l2 * pc.depth;
                let i = (y * width + x) as usize;
                if depth < trace.depth[i] {
                    trace.depth[i] = depth;
                    trace.face[i] = fi as i32;
                    trace.bary[i] = [l0, l1, l2];
                }
            }
        }
    }

    let mut image = IuvImage::background(width, height);
    for i in 0..n {
        let face = trace.face[i];
        if face < 0 {
            continue;
        }
        let f = model.mesh.faces[face as usize];
        let b = trace.bary[i];
        let mut u = 0.0;
        let mut v = 0.0;
        for k in 0..3 {
            let iuv = model.mesh.vertex_iuv[f[k] as usize];
            u += b[k] * iuv.u;
            v += b[k] * iuv.v;
        }
        image.part[i] = model.mesh.vertex_iuv[f[0] as usize].part;
        let mut u32f = quantize_f32(u) as f32;
        let v32f = quantize_f32(v) as f32;
        // Keep the (0,0) background sentinel unambiguous.
        if u32f == 0.0 && v32f == 0.0 {
            u32f = f32::from_bits(1);
        }
        image.u[i] = u32f;
        image.v[i] = v32f;
    }
    Ok((image, trace))
}

/// Per-pixel upstream gradients for the backward pass, laid out like image
/// planes; background entries are ignored.
#[derive(Debug, Clone)]
pub struct UvGradients {
    pub d_u: Vec<f64>,
    pub d_v: Vec<f64>,
}

impl UvGradients {
    pub fn zeros(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        UvGradients {
            d_u: alloc::vec![0.0; n],
            d_v: alloc::vec![0.0; n],
        }
    }
}

/// Routes per-pixel UV gradients to the projected positions of the vertices
/// of visible faces, through the analytic derivative of the barycentric
/// coordinates. Background pixels contribute nothing and occluded faces
/// receive exactly zero.
pub fn rasterize_backward(
    model: &BodyModel,
    projected: &[Vec2],
    trace: &RasterTrace,
    upstream: &UvGradients,
) -> Result<Vec<Vec2>, RasterError> {
    let n = (trace.width * trace.height) as usize;
    if upstream.d_u.len() != n || upstream.d_v.len() != n {
        return Err(RasterError::Dimension {
            what: "upstream gradients",
            expected: n,
            got: upstream.d_u.len().min(upstream.d_v.len()),
        });
    }
    if projected.len() != model.vertex_count() {
        return Err(RasterError::Dimension {
            what: "projected vertices",
            expected: model.vertex_count(),
            got: projected.len(),
        });
    }

    let mut grad = alloc::vec![Vec2::ZERO; model.vertex_count()];
    for y in 0..trace.height {
        for x in 0..trace.width {
            let i = (y * trace.width + x) as usize;
            let face = trace.face[i];
            if face < 0 {
                continue;
            }
            let (gu, gv) = (upstream.d_u[i], upstream.d_v[i]);
            if gu == 0.0 && gv == 0.0 {
                continue;
            }
            let f = model.mesh.faces[face as usize];
            let a = projected[f[0] as usize];
            let b = projected[f[1] as usize];
            let c = projected[f[2] as usize];
            let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);

            // Upstream weight per barycentric coordinate.
            let mut s = [0.0; 3];
            for k in 0..3 {
                let iuv = model.mesh.vertex_iuv[f[k] as usize];
                s[k] = gu * iuv.u + gv * iuv.v;
            }

            let d = double_area(a, b, c);
            let numer = [
                double_area(p, b, c),
                double_area(a, p, c),
                double_area(a, b, p),
            ];
            // d cross(u, v) = (v.y, -v.x) du + (-u.y, u.x) dv; assembled per
            // numerator and for the shared denominator.
            let dn = [
                // dN0/da = 0, dN0/db, dN0/dc for N0 = cross(b - p, c - p)
                [
                    Vec2::ZERO,
                    Vec2::new((c - p).y, -(c - p).x),
                    Vec2::new(-(b - p).y, (b - p).x),
                ],
                [
                    Vec2::new(-(c - p).y, (c - p).x),
                    Vec2::ZERO,
                    Vec2::new((a - p).y, -(a - p).x),
                ],
                [
                    Vec2::new((b - p).y, -(b - p).x),
                    Vec2::new(-(a - p).y, (a - p).x),
                    Vec2::ZERO,
                ],
            ];
            let (u_e, v_e) = (b - a, c - a);
            let dd = [
                Vec2::new(u_e.y - v_e.y, v_e.x - u_e.x),
                Vec2::new(v_e.y, -v_e.x),
                Vec2::new(-u_e.y, u_e.x),
            ];

            let inv = 1.0 / d;
            for k in 0..3 {
                if s[k] == 0.0 {
                    continue;
                }
                for vtx in 0..3 {
                    // d(N/D) = dN/D - N dD / D^2
                    let g = dn[k][vtx] * inv - dd[vtx] * (numer[k] * inv * inv);
                    grad[f[vtx] as usize] += g * s[k];
                }
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests;
