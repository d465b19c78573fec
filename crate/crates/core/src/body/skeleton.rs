//! Skeleton tree, joint presets and pose parameters.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::BodyError;
use crate::math::Vec3;

/// One joint of the kinematic tree.
#[derive(Debug, Clone)]
pub struct Joint {
    pub name: String,
    /// Parent joint index; `None` for the single root.
    pub parent: Option<usize>,
    /// Rest-pose offset from the parent joint (meters).
    pub offset: Vec3,
}

/// Kinematic tree in topological order (every parent precedes its children).
#[derive(Debug, Clone)]
pub struct Skeleton {
    pub joints: Vec<Joint>,
}

/// Built-in skeleton layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkeletonPreset {
    /// 58 joints: a free root, the 24-joint body core, 5 auxiliary
    /// spine/head joints and 28 finger joints.
    Full58,
    /// The 24-joint body core alone, with the pelvis acting as root.
    Reduced24,
}

impl Skeleton {
    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    /// Index of a joint by name.
    pub fn find(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// Checks topological ordering and root uniqueness.
    pub fn validate(&self) -> Result<(), BodyError> {
        let mut roots = 0;
        for (i, j) in self.joints.iter().enumerate() {
            match j.parent {
                None => roots += 1,
                Some(p) if p >= i => {
                    return Err(BodyError::InvalidSkeleton(
                        "parent index must precede joint index".to_string(),
                    ))
                }
                Some(_) => {}
            }
            if !j.offset.is_finite() {
                return Err(BodyError::InvalidSkeleton("non-finite joint offset".to_string()));
            }
        }
        if roots != 1 {
            return Err(BodyError::InvalidSkeleton("skeleton must have exactly one root".to_string()));
        }
        Ok(())
    }

    /// Rest-pose global joint positions (accumulated offsets).
    pub fn rest_positions(&self) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(self.joints.len());
        for j in &self.joints {
            let base = j.parent.map_or(Vec3::ZERO, |p| out[p]);
            out.push(base + j.offset);
        }
        out
    }

    /// Index map from this skeleton to the 14-joint LSP ordering:
    /// right ankle/knee/hip, left hip/knee/ankle, right wrist/elbow/shoulder,
    /// left shoulder/elbow/wrist, neck, head top.
    pub fn lsp14_map(&self) -> Result<[usize; 14], BodyError> {
        let names = [
            "r_ankle", "r_knee", "r_hip", "l_hip", "l_knee", "l_ankle", "r_wrist", "r_elbow",
            "r_shoulder", "l_shoulder", "l_elbow", "l_wrist", "neck",
        ];
        let mut map = [0usize; 14];
        for (i, name) in names.iter().enumerate() {
            map[i] = self
                .find(name)
                .ok_or_else(|| BodyError::InvalidSkeleton(alloc::format!("missing joint {name}")))?;
        }
        // Reduced skeletons have no dedicated head-top joint.
        map[13] = self
            .find("head_top")
            .or_else(|| self.find("head"))
            .ok_or_else(|| BodyError::InvalidSkeleton("missing head joint".to_string()))?;
        Ok(map)
    }

    /// Per-joint symmetric rotation limits (radians) for the plausibility
    /// prior: the root is unconstrained, spine/head/finger joints are kept
    /// tight, limb joints get a wide range.
    pub fn default_joint_limits(&self) -> Vec<f64> {
        self.joints
            .iter()
            .map(|j| {
                if j.parent.is_none() {
                    f64::INFINITY
                } else if is_axial_or_finger(&j.name) {
                    0.8
                } else {
                    2.6
                }
            })
            .collect()
    }

    pub fn preset(which: SkeletonPreset) -> Skeleton {
        match which {
            SkeletonPreset::Full58 => full_58(),
            SkeletonPreset::Reduced24 => reduced_24(),
        }
    }
}

fn is_axial_or_finger(name: &str) -> bool {
    const AXIAL: [&str; 6] = ["pelvis", "spine", "neck", "head", "jaw", "collar"];
    const FINGER: [&str; 5] = ["thumb", "index", "middle", "ring", "pinky"];
    AXIAL.iter().chain(FINGER.iter()).any(|p| name.contains(p))
}

/// Per-joint axis-angle rotations (radians).
#[derive(Debug, Clone, PartialEq)]
pub struct PoseParams {
    pub rotations: Vec<Vec3>,
}

impl PoseParams {
    pub fn rest(joint_count: usize) -> Self {
        PoseParams {
            rotations: alloc::vec![Vec3::ZERO; joint_count],
        }
    }

    pub fn joint_count(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_finite(&self) -> bool {
        self.rotations.iter().all(|r| r.is_finite())
    }

    /// Wraps every axis-angle vector to magnitude <= pi (the same rotation,
    /// shortest representation).
    pub fn canonicalize(&mut self) {
        for r in &mut self.rotations {
            let theta = r.norm();
            if theta > core::f64::consts::PI {
                let turns = libm::floor((theta + core::f64::consts::PI) / core::f64::consts::TAU);
                let wrapped = theta - turns * core::f64::consts::TAU;
                *r = *r * (wrapped / theta);
            }
        }
    }
}

// Rest-pose layout shared by both presets. Positions are global, in meters,
// in the X-right / Y-down / Z-depth frame; the figure stands head-up (head at
// negative Y) in a relaxed A-pose. Offsets are derived from these.
struct JointSpec(&'static str, Option<&'static str>, [f64; 3]);

#[rustfmt::skip]
const CORE_24: [JointSpec; 24] = [
    JointSpec("pelvis",     None,             [0.0,    0.0,   0.0]),
    JointSpec("spine1",     Some("pelvis"),   [0.0,   -0.10,  0.0]),
    JointSpec("spine2",     Some("spine1"),   [0.0,   -0.21,  0.0]),
    JointSpec("chest",      Some("spine2"),   [0.0,   -0.32,  0.0]),
    JointSpec("neck",       Some("chest"),    [0.0,   -0.50,  0.0]),
    JointSpec("head",       Some("neck"),     [0.0,   -0.58,  0.0]),
    JointSpec("l_hip",      Some("pelvis"),   [0.09,   0.02,  0.0]),
    JointSpec("l_knee",     Some("l_hip"),    [0.10,   0.47,  0.0]),
    JointSpec("l_ankle",    Some("l_knee"),   [0.10,   0.88,  0.0]),
    JointSpec("l_foot",     Some("l_ankle"),  [0.10,   0.94, -0.10]),
    JointSpec("r_hip",      Some("pelvis"),   [-0.09,  0.02,  0.0]),
    JointSpec("r_knee",     Some("r_hip"),    [-0.10,  0.47,  0.0]),
    JointSpec("r_ankle",    Some("r_knee"),   [-0.10,  0.88,  0.0]),
    JointSpec("r_foot",     Some("r_ankle"),  [-0.10,  0.94, -0.10]),
    JointSpec("l_collar",   Some("chest"),    [0.06,  -0.44,  0.0]),
    JointSpec("l_shoulder", Some("l_collar"), [0.18,  -0.46,  0.0]),
    JointSpec("l_elbow",    Some("l_shoulder"), [0.40, -0.30, 0.0]),
    JointSpec("l_wrist",    Some("l_elbow"),  [0.60,  -0.16,  0.0]),
    JointSpec("l_hand",     Some("l_wrist"),  [0.67,  -0.11,  0.0]),
    JointSpec("r_collar",   Some("chest"),    [-0.06, -0.44,  0.0]),
    JointSpec("r_shoulder", Some("r_collar"), [-0.18, -0.46,  0.0]),
    JointSpec("r_elbow",    Some("r_shoulder"), [-0.40, -0.30, 0.0]),
    JointSpec("r_wrist",    Some("r_elbow"),  [-0.60, -0.16,  0.0]),
    JointSpec("r_hand",     Some("r_wrist"),  [-0.67, -0.11,  0.0]),
];

#[rustfmt::skip]
const AUX_5: [JointSpec; 5] = [
    JointSpec("spine_low",  Some("spine1"), [0.0, -0.155,  0.02]),
    JointSpec("spine_mid",  Some("spine2"), [0.0, -0.265,  0.02]),
    JointSpec("spine_high", Some("chest"),  [0.0, -0.40,   0.02]),
    JointSpec("jaw",        Some("head"),   [0.0, -0.63,   0.03]),
    JointSpec("head_top",   Some("head"),   [0.0, -0.72,   0.0]),
];

// One hand's 14 finger joints (left side; the right side is mirrored in x).
#[rustfmt::skip]
const FINGERS_LEFT: [JointSpec; 14] = [
    JointSpec("thumb1",  Some("hand"),    [0.700, -0.085, 0.030]),
    JointSpec("thumb2",  Some("thumb1"),  [0.730, -0.070, 0.045]),
    JointSpec("index1",  Some("hand"),    [0.720, -0.075, 0.015]),
    JointSpec("index2",  Some("index1"),  [0.755, -0.050, 0.015]),
    JointSpec("index3",  Some("index2"),  [0.775, -0.035, 0.015]),
    JointSpec("middle1", Some("hand"),    [0.725, -0.070, 0.000]),
    JointSpec("middle2", Some("middle1"), [0.760, -0.045, 0.000]),
    JointSpec("middle3", Some("middle2"), [0.785, -0.028, 0.000]),
    JointSpec("ring1",   Some("hand"),    [0.720, -0.070, -0.015]),
    JointSpec("ring2",   Some("ring1"),   [0.750, -0.048, -0.015]),
    JointSpec("ring3",   Some("ring2"),   [0.775, -0.032, -0.015]),
    JointSpec("pinky1",  Some("hand"),    [0.710, -0.075, -0.030]),
    JointSpec("pinky2",  Some("pinky1"),  [0.735, -0.055, -0.030]),
    JointSpec("pinky3",  Some("pinky2"),  [0.755, -0.042, -0.030]),
];

struct SkeletonBuilder {
    joints: Vec<Joint>,
    positions: Vec<Vec3>,
}

impl SkeletonBuilder {
    fn new() -> Self {
        SkeletonBuilder {
            joints: Vec::new(),
            positions: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, parent: Option<&str>, global: Vec3) {
        let parent_idx = parent.map(|p| {
            self.joints
                .iter()
                .position(|j| j.name == p)
                .unwrap_or_else(|| panic!("unknown parent joint {p}"))
        });
        let base = parent_idx.map_or(Vec3::ZERO, |p| self.positions[p]);
        self.joints.push(Joint {
            name: name.to_string(),
            parent: parent_idx,
            offset: (global - base).quantize_f32(),
        });
        let pos = base + (global - base).quantize_f32();
        self.positions.push(pos);
    }
}

fn full_58() -> Skeleton {
    let mut b = SkeletonBuilder::new();
    b.push("root", None, Vec3::ZERO);
    for JointSpec(name, parent, p) in &CORE_24 {
        let parent = parent.unwrap_or("root");
        b.push(name, Some(parent), Vec3::new(p[0], p[1], p[2]));
    }
    for JointSpec(name, parent, p) in &AUX_5 {
        b.push(name, *parent, Vec3::new(p[0], p[1], p[2]));
    }
    for side in ["l", "r"] {
        let mirror = if side == "l" { 1.0 } else { -1.0 };
        for JointSpec(name, parent, p) in &FINGERS_LEFT {
            let full_name = alloc::format!("{side}_{name}");
            let parent_name = match parent.unwrap() {
                "hand" => alloc::format!("{side}_hand"),
                other => alloc::format!("{side}_{other}"),
            };
            b.push(
                &full_name,
                Some(&parent_name),
                Vec3::new(mirror * p[0], p[1], p[2]),
            );
        }
    }
    let skeleton = Skeleton { joints: b.joints };
    debug_assert_eq!(skeleton.joint_count(), 58);
    skeleton
}

fn reduced_24() -> Skeleton {
    let mut b = SkeletonBuilder::new();
    for JointSpec(name, parent, p) in &CORE_24 {
        b.push(name, *parent, Vec3::new(p[0], p[1], p[2]));
    }
    let skeleton = Skeleton { joints: b.joints };
    debug_assert_eq!(skeleton.joint_count(), 24);
    skeleton
}
