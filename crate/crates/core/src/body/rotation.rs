//! Axis-angle to rotation-matrix conversion and its analytic derivative.
//!
//! The representation is the unnormalized axis-angle vector `v` with angle
//! `|v|`. Below an angle of 1e-4 rad the trigonometric coefficients switch to
//! their Taylor series so the conversion and its Jacobian stay smooth through
//! the zero-rotation point.

use crate::math::{Mat3, Vec3};

const SERIES_ANGLE: f64 = 1e-4;

/// Coefficients of `R = I + a K + b K^2` with `K = skew(v)` plus the scalars
/// needed by the Jacobian: `c_a = d a / d theta / theta`, likewise `c_b`.
fn coefficients(theta: f64) -> (f64, f64, f64, f64) {
    if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        (
            1.0 - t2 / 6.0,
            0.5 - t2 / 24.0,
            -1.0 / 3.0 + t2 / 30.0,
            -1.0 / 12.0 + t2 / 180.0,
        )
    } else {
        let (s, c) = (libm::sin(theta), libm::cos(theta));
        let t2 = theta * theta;
        (
            s / theta,
            (1.0 - c) / t2,
            (theta * c - s) / (t2 * theta),
            (theta * s - 2.0 * (1.0 - c)) / (t2 * t2),
        )
    }
}

/// Rotation matrix of an axis-angle vector. The zero vector maps to identity.
pub fn rodrigues(axis_angle: Vec3) -> Mat3 {
    let theta = axis_angle.norm();
    let (a, b, _, _) = coefficients(theta);
    let k = Mat3::skew(axis_angle);
    let k2 = k.mul_mat(k);
    Mat3::identity() + k * a + k2 * b
}

/// Derivative of the nine entries of `rodrigues(v)` with respect to the three
/// components of `v`; element `k` of the result is `dR/dv_k`.
pub fn rodrigues_jacobian(axis_angle: Vec3) -> [Mat3; 3] {
    let theta = axis_angle.norm();
    let (a, b, ca, cb) = coefficients(theta);
    let k = Mat3::skew(axis_angle);
    let k2 = k.mul_mat(k);

    let mut out = [Mat3::zeros(); 3];
    for (i, d) in out.iter_mut().enumerate() {
        let mut e = Vec3::ZERO;
        e.set_component(i, 1.0);
        let ei = Mat3::skew(e);
        let vi = axis_angle.component(i);
        *d = k * (ca * vi) + ei * a + k2 * (cb * vi) + (ei.mul_mat(k) + k.mul_mat(ei)) * b;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::rel_error_floored;
    use crate::rng::Pcg32;

    fn random_axis_angle(rng: &mut Pcg32, scale: f64) -> Vec3 {
        Vec3::new(
            rng.range(-scale, scale),
            rng.range(-scale, scale),
            rng.range(-scale, scale),
        )
    }

    #[test]
    fn zero_maps_to_identity() {
        assert_eq!(rodrigues(Vec3::ZERO), Mat3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = rodrigues(Vec3::new(0.0, 0.0, core::f64::consts::FRAC_PI_2));
        let expected = Mat3([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        for i in 0..3 {
            for j in 0..3 {
                assert!((r.0[i][j] - expected.0[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn orthonormal_and_proper() {
        let mut rng = Pcg32::new(11, 0);
        for _ in 0..200 {
            let r = rodrigues(random_axis_angle(&mut rng, 3.0));
            assert!(r.orthogonality_error() < 1e-9);
            assert!((r.det() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn inverse_symmetry() {
        let mut rng = Pcg32::new(5, 0);
        for _ in 0..100 {
            let v = random_axis_angle(&mut rng, 3.0);
            let p = rodrigues(v).mul_mat(rodrigues(-v));
            assert!(p.orthogonality_error() < 1e-9);
            assert!((p + Mat3::identity() * -1.0).frobenius_norm() < 1e-9);
        }
    }

    #[test]
    fn jacobian_at_zero_is_skew_generator() {
        let jac = rodrigues_jacobian(Vec3::ZERO);
        for k in 0..3 {
            let mut e = Vec3::ZERO;
            e.set_component(k, 1.0);
            let diff = jac[k] + Mat3::skew(e) * -1.0;
            assert!(diff.frobenius_norm() < 1e-15);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = Pcg32::new(97, 0);
        let h = 1e-6;
        for _ in 0..200 {
            let v = random_axis_angle(&mut rng, 2.5);
            let jac = rodrigues_jacobian(v);
            for k in 0..3 {
                let mut vp = v;
                vp.set_component(k, v.component(k) + h);
                let mut vm = v;
                vm.set_component(k, v.component(k) - h);
                let (rp, rm) = (rodrigues(vp), rodrigues(vm));
                for i in 0..3 {
                    for j in 0..3 {
                        let fd = (rp.0[i][j] - rm.0[i][j]) / (2.0 * h);
                        assert!(
                            rel_error_floored(jac[k].0[i][j], fd, 1e-3) < 1e-5,
                            "entry ({i},{j}) wrt v{k}: analytic {} fd {}",
                            jac[k].0[i][j],
                            fd
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn tiny_angle_uses_series_without_nan() {
        let v = Vec3::new(1e-6, -2e-7, 5e-7);
        let r = rodrigues(v);
        let jac = rodrigues_jacobian(v);
        assert!(r.0.iter().flatten().all(|x| x.is_finite()));
        for j in &jac {
            assert!(j.0.iter().flatten().all(|x| x.is_finite()));
        }
        // Derivative still matches finite differences right at the branch.
        let h = 1e-6;
        for k in 0..3 {
            let mut vp = v;
            vp.set_component(k, v.component(k) + h);
            let mut vm = v;
            vm.set_component(k, v.component(k) - h);
            let (rp, rm) = (rodrigues(vp), rodrigues(vm));
            for i in 0..3 {
                for j in 0..3 {
                    let fd = (rp.0[i][j] - rm.0[i][j]) / (2.0 * h);
                    assert!(rel_error_floored(jac[k].0[i][j], fd, 1e-3) < 1e-5);
                }
            }
        }
    }
}
