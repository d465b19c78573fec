//! Orthographic camera `alpha = (f, x, y)`: pixels = f * (X, Y) + (x, y),
//! with depth passed through untouched.

use alloc::vec::Vec;
use core::fmt;

use crate::body::BodyModel;
use crate::math::{Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraParams {
    /// Scale factor f in pixels per meter; must be positive.
    pub scale: f64,
    /// Principal offset (x, y) in pixels, origin at the image top-left.
    pub offset: Vec2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CameraError(pub &'static str);

impl fmt::Display for CameraError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "camera parameter error: {}", self.0)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CameraError {}

/// A projected point: pixel position plus the unchanged depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    pub pixel: Vec2,
    pub depth: f64,
}

impl CameraParams {
    pub fn new(scale: f64, offset: Vec2) -> Result<Self, CameraError> {
        let cam = CameraParams { scale, offset };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.scale > 0.0) || !self.scale.is_finite() || !self.offset.is_finite() {
            return Err(CameraError("scale must be positive and finite"));
        }
        Ok(())
    }

    /// Fitter initialization camera: the rest-pose bounding box spans 80% of
    /// the image height and the body center lands on the image center.
    pub fn mean_for(model: &BodyModel, width: u32, height: u32) -> Result<Self, CameraError> {
        let (lo, hi) = model.rest_bbox();
        let extent = (hi.y - lo.y).max(1e-6);
        let scale = 0.8 * height as f64 / extent;
        let center = (lo + hi) * 0.5;
        let offset = Vec2::new(
            width as f64 / 2.0 - scale * center.x,
            height as f64 / 2.0 - scale * center.y,
        );
        CameraParams::new(scale, offset)
    }

    pub fn project_point(&self, p: Vec3) -> ProjectedPoint {
        ProjectedPoint {
            pixel: Vec2::new(self.scale * p.x + self.offset.x, self.scale * p.y + self.offset.y),
            depth: p.z,
        }
    }
}

/// Projects a batch of world points to pixel coordinates.
pub fn project(points: &[Vec3], camera: &CameraParams) -> Result<Vec<ProjectedPoint>, CameraError> {
    camera.validate()?;
    Ok(points.iter().map(|p| camera.project_point(*p)).collect())
}

/// Analytic derivatives of a projected pixel with respect to the world point
/// and the camera parameters. The projection is affine, so these are exact:
/// `dp/dX = f I2` (on x,y; depth has no pixel effect), `dp/df = (X, Y)`,
/// `dp/d(x,y) = I2`.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionJacobian {
    /// d pixel / d world, the common factor f on x and y.
    pub d_point: f64,
    /// d pixel / d f.
    pub d_scale: Vec2,
}

pub fn project_jacobian(point: Vec3, camera: &CameraParams) -> ProjectionJacobian {
    ProjectionJacobian {
        d_point: camera.scale,
        d_scale: Vec2::new(point.x, point.y),
    }
}
