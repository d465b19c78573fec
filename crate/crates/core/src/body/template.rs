//! Procedural body template: capsule segments per body part, stitched into
//! one mesh with per-part rectangular UV charts, distance-fitted skinning
//! weights and an orthogonalized shape basis.
//!
//! The build is deterministic for a fixed config and all float data is
//! quantized through f32 at the end, so binary serialization round-trips
//! bit-exactly.

use alloc::string::ToString;
use alloc::vec::Vec;

use super::{BodyError, BodyModel, Skeleton, SkeletonPreset, TemplateMesh, VertexIuv};
use crate::math::{quantize_f32, Vec3};
use crate::rng::Pcg32;

/// Configuration of `build_procedural_template`.
#[derive(Debug, Clone)]
pub struct TemplateConfig {
    /// Number of body parts P (1..=12). Part indices are 1-based.
    pub parts: u8,
    /// Columns around each capsule (>= 3).
    pub radial_segments: u32,
    /// Rows along each capsule (>= 2).
    pub axial_segments: u32,
    /// Shape basis rank (>= 1).
    pub shape_rank: usize,
    pub skeleton: SkeletonPreset,
    /// Seed for the random high-order shape modes.
    pub seed: u64,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        TemplateConfig {
            parts: 12,
            radial_segments: 12,
            axial_segments: 10,
            shape_rank: 50,
            skeleton: SkeletonPreset::Full58,
            seed: 0,
        }
    }
}

// (part name, start joint, end joint, start/end radius, start/end axial
// extension in meters). End joints may fall back to "head" when the reduced
// skeleton lacks "head_top".
#[derive(Clone, Copy)]
struct Segment(&'static str, &'static str, &'static str, f64, f64, f64, f64);

#[rustfmt::skip]
const SEGMENTS: [Segment; 12] = [
    Segment("torso",       "pelvis",     "neck",    0.16,  0.13,  0.10, 0.00),
    Segment("head",        "neck",       "head_top", 0.07, 0.085, 0.00, 0.00),
    Segment("l_upper_arm", "l_shoulder", "l_elbow", 0.050, 0.040, 0.02, 0.00),
    Segment("r_upper_arm", "r_shoulder", "r_elbow", 0.050, 0.040, 0.02, 0.00),
    Segment("l_lower_arm", "l_elbow",    "l_wrist", 0.040, 0.032, 0.00, 0.00),
    Segment("r_lower_arm", "r_elbow",    "r_wrist", 0.040, 0.032, 0.00, 0.00),
    Segment("l_hand",      "l_wrist",    "l_hand",  0.042, 0.034, 0.00, 0.09),
    Segment("r_hand",      "r_wrist",    "r_hand",  0.042, 0.034, 0.00, 0.09),
    Segment("l_upper_leg", "l_hip",      "l_knee",  0.085, 0.060, 0.02, 0.00),
    Segment("r_upper_leg", "r_hip",      "r_knee",  0.085, 0.060, 0.02, 0.00),
    Segment("l_lower_leg", "l_knee",     "l_ankle", 0.055, 0.040, 0.00, 0.07),
    Segment("r_lower_leg", "r_knee",     "r_ankle", 0.055, 0.040, 0.00, 0.07),
];

const WHOLE_BODY: Segment = Segment("body", "pelvis", "head_top", 0.30, 0.20, 0.95, 0.00);

/// Builds the full parametric model procedurally. Deterministic per config.
pub fn build_procedural_template(config: &TemplateConfig) -> Result<BodyModel, BodyError> {
    if config.parts == 0 {
        return Err(BodyError::InvalidConfig("part count must be >= 1".to_string()));
    }
    if config.parts as usize > SEGMENTS.len() {
        return Err(BodyError::InvalidConfig(alloc::format!(
            "at most {} parts supported",
            SEGMENTS.len()
        )));
    }
    if config.shape_rank == 0 {
        return Err(BodyError::InvalidConfig("shape rank must be >= 1".to_string()));
    }
    if config.radial_segments < 3 || config.axial_segments < 2 {
        return Err(BodyError::InvalidConfig(
            "resolution too low: need >= 3 radial and >= 2 axial segments".to_string(),
        ));
    }

    let skeleton = Skeleton::preset(config.skeleton);
    let rest = skeleton.rest_positions();
    let lookup = |name: &str| -> Result<usize, BodyError> {
        skeleton
            .find(name)
            .or_else(|| if name == "head_top" { skeleton.find("head") } else { None })
            .ok_or_else(|| BodyError::InvalidConfig(alloc::format!("skeleton lacks joint {name}")))
    };

    let mut vertices = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut vertex_iuv = Vec::new();

    let chosen: Vec<&Segment> = if config.parts == 1 {
        alloc::vec![&WHOLE_BODY]
    } else {
        SEGMENTS.iter().take(config.parts as usize).collect()
    };

    for (part_idx, seg) in chosen.iter().enumerate() {
        let Segment(_, a_name, b_name, ra, rb, ext_a, mut ext_b) = **seg;
        let a_joint = lookup(a_name)?;
        let b_joint = lookup(b_name)?;
        // The reduced skeleton substitutes "head" for "head_top"; stretch the
        // capsule to keep roughly the same head volume.
        if b_name == "head_top" && skeleton.find("head_top").is_none() {
            ext_b += 0.12;
        }
        tessellate_capsule(
            rest[a_joint],
            rest[b_joint],
            ra,
            rb,
            ext_a,
            ext_b,
            (part_idx + 1) as u8,
            config.radial_segments as usize,
            config.axial_segments as usize,
            &mut vertices,
            &mut faces,
            &mut vertex_iuv,
        );
    }

    let weights = fit_skinning_weights(&skeleton, &rest, &vertices);
    let shape_basis = build_shape_basis(config, &vertices, &vertex_iuv, &chosen, &rest, &skeleton)?;

    let model = BodyModel {
        skeleton,
        mesh: TemplateMesh {
            vertices,
            faces,
            vertex_iuv,
            weights,
            shape_basis,
        },
        parts: config.parts,
    };
    debug_assert!(model.validate().is_ok());
    Ok(model)
}

/// Rounded tapered capsule as a ring grid. Column `i` carries `u = i/nu`
/// (column nu duplicates column 0 positions, so u covers the whole of [0,1]
/// while staying injective per vertex); row `j` carries `v = j/nv`.
#[allow(clippy::too_many_arguments)]
fn tessellate_capsule(
    a: Vec3,
    b: Vec3,
    ra: f64,
    rb: f64,
    ext_a: f64,
    ext_b: f64,
    part: u8,
    nu: usize,
    nv: usize,
    vertices: &mut Vec<Vec3>,
    faces: &mut Vec<[u32; 3]>,
    vertex_iuv: &mut Vec<VertexIuv>,
) {
    let dir = (b - a).normalized();
    let a = a - dir * ext_a;
    let b = b + dir * ext_b;

    // Stable orthonormal frame around the axis.
    let pick = if dir.x.abs() <= dir.y.abs() && dir.x.abs() <= dir.z.abs() {
        Vec3::new(1.0, 0.0, 0.0)
    } else if dir.y.abs() <= dir.z.abs() {
        Vec3::new(0.0, 1.0, 0.0)
    } else {
        Vec3::new(0.0, 0.0, 1.0)
    };
    let n1 = dir.cross(pick).normalized();
    let n2 = dir.cross(n1);

    let ca = a + dir * ra; // cap sphere centers
    let cb = b - dir * rb;
    const CAP: f64 = 0.22; // axial fraction of each cap
    const TIP: f64 = 0.10; // fraction of the pole angle left open

    let base = vertices.len() as u32;
    for j in 0..=nv {
        let t = j as f64 / nv as f64;
        // Center point and ring radius of this row.
        let (center, radius) = if t < CAP {
            let s = t / CAP;
            let ang = (TIP + (1.0 - TIP) * s) * core::f64::consts::FRAC_PI_2;
            (ca - dir * (ra * libm::cos(ang)), ra * libm::sin(ang))
        } else if t > 1.0 - CAP {
            let s = (1.0 - t) / CAP;
            let ang = (TIP + (1.0 - TIP) * s) * core::f64::consts::FRAC_PI_2;
            (cb + dir * (rb * libm::cos(ang)), rb * libm::sin(ang))
        } else {
            let s = (t - CAP) / (1.0 - 2.0 * CAP);
            (ca + (cb - ca) * s, ra + (rb - ra) * s)
        };
        for i in 0..=nu {
            let u = i as f64 / nu as f64;
            let phi = core::f64::consts::TAU * if i == nu { 0.0 } else { u };
            let p = center + (n1 * libm::cos(phi) + n2 * libm::sin(phi)) * radius;
            vertices.push(p.quantize_f32());
            vertex_iuv.push(VertexIuv {
                part,
                u: quantize_f32(u),
                v: quantize_f32(t),
            });
        }
    }

    let stride = (nu + 1) as u32;
    for j in 0..nv as u32 {
        for i in 0..nu as u32 {
            let v00 = base + j * stride + i;
            let v10 = v00 + 1;
            let v01 = v00 + stride;
            let v11 = v01 + 1;
            // Winding chosen so normals point radially outward (u increases
            // counter-clockwise around the axis, v along it).
            faces.push([v00, v10, v11]);
            faces.push([v00, v11, v01]);
        }
    }
}

/// Inverse-square falloff over the two nearest bones; the weight of a bone
/// attaches to the parent joint of the edge, which is the joint whose
/// rotation swings that bone.
fn fit_skinning_weights(skeleton: &Skeleton, rest: &[Vec3], vertices: &[Vec3]) -> Vec<f64> {
    struct Bone {
        joint: usize, // parent end, receives the weight
        a: Vec3,
        b: Vec3,
    }
    let mut bones = Vec::new();
    for (j, joint) in skeleton.joints.iter().enumerate() {
        if let Some(p) = joint.parent {
            if (rest[j] - rest[p]).norm() > 1e-9 {
                bones.push(Bone {
                    joint: p,
                    a: rest[p],
                    b: rest[j],
                });
            }
        }
    }

    let j_count = skeleton.joint_count();
    let mut weights = alloc::vec![0.0; vertices.len() * j_count];
    const EPS: f64 = 0.01;
    for (vi, v) in vertices.iter().enumerate() {
        let mut best: [(f64, usize); 2] = [(f64::INFINITY, usize::MAX); 2];
        for bone in &bones {
            let d = point_segment_distance(*v, bone.a, bone.b);
            if d < best[0].0 {
                best[1] = best[0];
                best[0] = (d, bone.joint);
            } else if d < best[1].0 {
                best[1] = (d, bone.joint);
            }
        }
        let row = &mut weights[vi * j_count..(vi + 1) * j_count];
        if best[0].1 == best[1].1 || best[1].1 == usize::MAX {
            row[best[0].1] = 1.0;
        } else {
            let w0 = 1.0 / ((best[0].0 + EPS) * (best[0].0 + EPS));
            let w1 = 1.0 / ((best[1].0 + EPS) * (best[1].0 + EPS));
            // Both entries quantized so f32 serialization is lossless; the
            // residual row-sum error is below 1e-7.
            row[best[0].1] = quantize_f32(w0 / (w0 + w1));
            row[best[1].1] = quantize_f32(1.0 - row[best[0].1]);
        }
    }
    weights
}

fn point_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Semantic leading modes (height, limb length/girth, torso girth, shoulder
/// width) followed by smooth random fields, all Gram-Schmidt orthogonalized
/// and rescaled to fixed per-vertex RMS amplitudes.
fn build_shape_basis(
    config: &TemplateConfig,
    vertices: &[Vec3],
    vertex_iuv: &[VertexIuv],
    segments: &[&Segment],
    rest: &[Vec3],
    skeleton: &Skeleton,
) -> Result<Vec<Vec<Vec3>>, BodyError> {
    let v_count = vertices.len();
    let rank = config.shape_rank;
    let lookup = |name: &str| {
        skeleton
            .find(name)
            .or_else(|| if name == "head_top" { skeleton.find("head") } else { None })
            .unwrap()
    };

    // Per-part axis info for limb-oriented modes.
    struct PartAxis {
        dir: Vec3,
        origin: Vec3,
        limb: bool,
        torso: bool,
    }
    let axes: Vec<PartAxis> = segments
        .iter()
        .map(|Segment(name, a, b, ..)| {
            let pa = rest[lookup(a)];
            let pb = rest[lookup(b)];
            PartAxis {
                dir: (pb - pa).normalized(),
                origin: pa,
                limb: name.contains("arm") || name.contains("leg") || name.contains("hand"),
                torso: *name == "torso" || *name == "body",
            }
        })
        .collect();

    let radial = |vi: usize| -> Vec3 {
        let axis = &axes[(vertex_iuv[vi].part - 1) as usize];
        let rel = vertices[vi] - axis.origin;
        (rel - axis.dir * rel.dot(axis.dir)).normalized()
    };

    let mut raw: Vec<Vec<Vec3>> = Vec::with_capacity(rank);
    for mode_idx in 0..rank.min(5) {
        let mut mode = alloc::vec![Vec3::ZERO; v_count];
        match mode_idx {
            // height: stretch along the vertical axis
            0 => {
                for (vi, m) in mode.iter_mut().enumerate() {
                    m.y = vertices[vi].y;
                }
            }
            // limb length: slide along each limb axis
            1 => {
                for (vi, m) in mode.iter_mut().enumerate() {
                    let axis = &axes[(vertex_iuv[vi].part - 1) as usize];
                    if axis.limb {
                        *m = axis.dir * vertex_iuv[vi].v;
                    }
                }
            }
            // limb girth
            2 => {
                for (vi, m) in mode.iter_mut().enumerate() {
                    if axes[(vertex_iuv[vi].part - 1) as usize].limb {
                        *m = radial(vi);
                    }
                }
            }
            // torso girth
            3 => {
                for (vi, m) in mode.iter_mut().enumerate() {
                    if axes[(vertex_iuv[vi].part - 1) as usize].torso {
                        *m = radial(vi);
                    }
                }
            }
            // shoulder width: lateral push with a falloff around shoulder height
            _ => {
                for (vi, m) in mode.iter_mut().enumerate() {
                    let y = vertices[vi].y;
                    let falloff = libm::exp(-((y + 0.46) / 0.12) * ((y + 0.46) / 0.12));
                    m.x = vertices[vi].x.signum() * falloff;
                }
            }
        }
        raw.push(mode);
    }

    // Smooth random displacement fields for the remaining rank.
    let mut rng = Pcg32::new(config.seed, 0xBA5E);
    let random_field = |rng: &mut Pcg32| -> Vec<Vec3> {
        let mut mode = alloc::vec![Vec3::ZERO; v_count];
        for _wave in 0..3 {
            let k = Vec3::new(rng.normal(), rng.normal(), rng.normal()) * rng.range(1.0, 4.0);
            let dir = Vec3::new(rng.normal(), rng.normal(), rng.normal()).normalized();
            let phase = rng.range(0.0, core::f64::consts::TAU);
            for (vi, m) in mode.iter_mut().enumerate() {
                *m += dir * libm::cos(k.dot(vertices[vi]) + phase);
            }
        }
        mode
    };
    while raw.len() < rank {
        let mode = random_field(&mut rng);
        raw.push(mode);
    }

    // Gram-Schmidt under the flattened inner product, then fixed-RMS rescale.
    // Semantic modes that degenerate for a given part layout (a torso-only
    // body has no limb mode, say) are replaced by fresh random fields.
    let rms_targets = |k: usize| -> f64 {
        match k {
            0 => 0.05,
            1 => 0.03,
            2 => 0.015,
            3 => 0.02,
            4 => 0.015,
            _ => 0.010,
        }
    };
    let dot = |a: &[Vec3], b: &[Vec3]| -> f64 { a.iter().zip(b).map(|(x, y)| x.dot(*y)).sum() };
    let mut basis: Vec<Vec<Vec3>> = Vec::with_capacity(rank);
    for (k, raw_mode) in raw.into_iter().enumerate() {
        let mut candidate = raw_mode;
        let mut accepted = None;
        for _attempt in 0..32 {
            let mut mode = candidate.clone();
            for prev in &basis {
                let coef = dot(&mode, prev) / dot(prev, prev);
                for (m, p) in mode.iter_mut().zip(prev) {
                    *m += *p * -coef;
                }
            }
            let norm = libm::sqrt(dot(&mode, &mode));
            let original = libm::sqrt(dot(&candidate, &candidate));
            if norm > 1e-8 && norm > 1e-6 * original.max(1.0) {
                accepted = Some((mode, norm));
                break;
            }
            candidate = random_field(&mut rng);
        }
        let Some((mut mode, norm)) = accepted else {
            return Err(BodyError::InvalidConfig(alloc::format!(
                "shape mode {k} degenerated during orthogonalization"
            )));
        };
        let scale = rms_targets(k) * libm::sqrt(v_count as f64) / norm;
        for m in &mut mode {
            *m = (*m * scale).quantize_f32();
        }
        basis.push(mode);
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::SkeletonPreset;

    #[test]
    fn default_config_satisfies_invariants() {
        let model = build_procedural_template(&TemplateConfig::default()).unwrap();
        model.validate().unwrap();
        assert_eq!(model.joint_count(), 58);
        assert_eq!(model.shape_rank(), 50);
        assert_eq!(model.parts, 12);
        assert!(model.vertex_count() > 100);
    }

    #[test]
    fn single_capsule_body() {
        let model = build_procedural_template(&TemplateConfig {
            parts: 1,
            ..TemplateConfig::default()
        })
        .unwrap();
        model.validate().unwrap();
        assert!(model.mesh.vertex_iuv.iter().all(|v| v.part == 1));
    }

    #[test]
    fn build_is_deterministic() {
        let config = TemplateConfig::default();
        let a = build_procedural_template(&config).unwrap();
        let b = build_procedural_template(&config).unwrap();
        assert_eq!(a.mesh.vertices, b.mesh.vertices);
        assert_eq!(a.mesh.faces, b.mesh.faces);
        assert_eq!(a.mesh.weights, b.mesh.weights);
        for (ma, mb) in a.mesh.shape_basis.iter().zip(&b.mesh.shape_basis) {
            assert_eq!(ma, mb);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        for config in [
            TemplateConfig {
                parts: 0,
                ..TemplateConfig::default()
            },
            TemplateConfig {
                shape_rank: 0,
                ..TemplateConfig::default()
            },
            TemplateConfig {
                radial_segments: 2,
                ..TemplateConfig::default()
            },
            TemplateConfig {
                parts: 13,
                ..TemplateConfig::default()
            },
        ] {
            assert!(matches!(
                build_procedural_template(&config),
                Err(BodyError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn uv_charts_injective_per_part() {
        let model = build_procedural_template(&TemplateConfig {
            radial_segments: 6,
            axial_segments: 5,
            shape_rank: 4,
            ..TemplateConfig::default()
        })
        .unwrap();
        let mut seen = alloc::collections::BTreeSet::new();
        for iuv in &model.mesh.vertex_iuv {
            let key = (iuv.part, iuv.u.to_bits(), iuv.v.to_bits());
            assert!(seen.insert(key), "duplicate chart entry {key:?}");
            assert!((0.0..=1.0).contains(&iuv.u) && (0.0..=1.0).contains(&iuv.v));
        }
    }

    #[test]
    fn reduced_skeleton_build_works() {
        let model = build_procedural_template(&TemplateConfig {
            skeleton: SkeletonPreset::Reduced24,
            shape_rank: 10,
            ..TemplateConfig::default()
        })
        .unwrap();
        model.validate().unwrap();
        assert_eq!(model.joint_count(), 24);
    }
}
