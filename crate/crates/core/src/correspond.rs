//! Pixel-to-surface matching: a per-part k-d tree over the mesh vertices'
//! (I, U, V) values answers nearest-neighbor queries for observed IUV pixels.
//! The metric is Euclidean on (U, V) within a part and infinite across parts,
//! matching the per-part chart layout.

use alloc::vec::Vec;

use crate::body::BodyModel;
use crate::math::Vec2;
use crate::raster::IuvImage;

/// One matched (pixel, vertex) pair. The pixel coordinate is a sub-pixel
/// landmark position in pixel units; `match_pixels` records sampled pixel
/// centers, dataset generation may refine them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrespondencePair {
    pub pixel: Vec2,
    pub vertex: u32,
    /// Match distance in IUV space.
    pub dist: f32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    pub pairs: Vec<CorrespondencePair>,
    /// Threshold used to accept pairs.
    pub tau: f64,
}

struct KdNode {
    point: [f64; 2],
    vertex: u32,
    left: i32,
    right: i32,
}

/// Static 2D k-d tree with deterministic tie-breaking (smallest vertex id).
struct KdTree2 {
    nodes: Vec<KdNode>,
    root: i32,
}

impl KdTree2 {
    fn build(mut points: Vec<([f64; 2], u32)>) -> Self {
        let mut tree = KdTree2 {
            nodes: Vec::with_capacity(points.len()),
            root: -1,
        };
        tree.root = tree.build_rec(&mut points, 0);
        tree
    }

    fn build_rec(&mut self, pts: &mut [([f64; 2], u32)], axis: usize) -> i32 {
        if pts.is_empty() {
            return -1;
        }
        let mid = pts.len() / 2;
        // Tie on the split coordinate broken by vertex id for determinism.
        pts.select_nth_unstable_by(mid, |a, b| {
            a.0[axis]
                .partial_cmp(&b.0[axis])
                .unwrap()
                .then(a.1.cmp(&b.1))
        });
        let (point, vertex) = pts[mid];
        let idx = self.nodes.len() as i32;
        self.nodes.push(KdNode {
            point,
            vertex,
            left: -1,
            right: -1,
        });
        // Split borrows before recursing; order of fields fixed afterwards.
        let (lo, rest) = pts.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.build_rec(lo, axis ^ 1);
        let right = self.build_rec(hi, axis ^ 1);
        self.nodes[idx as usize].left = left;
        self.nodes[idx as usize].right = right;
        idx
    }

    /// Nearest neighbor as (vertex id, squared distance); ties resolve to the
    /// smallest vertex id, identical to a linear scan in index order.
    fn nearest(&self, q: [f64; 2]) -> Option<(u32, f64)> {
        if self.root < 0 {
            return None;
        }
        let mut best: (f64, u32) = (f64::INFINITY, u32::MAX);
        self.nearest_rec(self.root, q, 0, &mut best);
        Some((best.1, best.0))
    }

    fn nearest_rec(&self, node: i32, q: [f64; 2], axis: usize, best: &mut (f64, u32)) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let dx = n.point[0] - q[0];
        let dy = n.point[1] - q[1];
        let d = dx * dx + dy * dy;
        if d < best.0 || (d == best.0 && n.vertex < best.1) {
            *best = (d, n.vertex);
        }
        let delta = q[axis] - n.point[axis];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.nearest_rec(near, q, axis ^ 1, best);
        // The far side may hold an equal-distance, lower-index vertex, so
        // recurse on <= rather than <.
        if delta * delta <= best.0 {
            self.nearest_rec(far, q, axis ^ 1, best);
        }
    }
}

/// Searchable index over the model's vertex IUV chart.
pub struct IuvIndex {
    per_part: Vec<KdTree2>,
}

/// Builds one k-d tree per part over the vertices' (U, V) coordinates.
pub fn build_iuv_index(model: &BodyModel) -> IuvIndex {
    let mut buckets: Vec<Vec<([f64; 2], u32)>> = (0..model.parts).map(|_| Vec::new()).collect();
    for (vi, iuv) in model.mesh.vertex_iuv.iter().enumerate() {
        buckets[(iuv.part - 1) as usize].push(([iuv.u, iuv.v], vi as u32));
    }
    IuvIndex {
        per_part: buckets.into_iter().map(KdTree2::build).collect(),
    }
}

impl IuvIndex {
    /// 1-NN in the cross-part-infinite metric: `None` when the part index is
    /// absent from the mesh; otherwise (vertex id, Euclidean UV distance).
    pub fn nearest(&self, part: u8, u: f64, v: f64) -> Option<(u32, f64)> {
        if part == 0 || part as usize > self.per_part.len() {
            return None;
        }
        self.per_part[(part - 1) as usize]
            .nearest([u, v])
            .map(|(vertex, d2)| (vertex, libm::sqrt(d2)))
    }
}

/// Greedy 1-NN matching of foreground pixels on a stride grid. Pairs whose
/// match distance exceeds `tau` are dropped; the recorded landmark is the
/// sampled pixel center.
pub fn match_pixels(
    target: &IuvImage,
    index: &IuvIndex,
    tau: f64,
    stride: usize,
) -> CorrespondenceSet {
    let stride = stride.max(1);
    let mut pairs = Vec::new();
    let mut y = 0u32;
    while y < target.height {
        let mut x = 0u32;
        while x < target.width {
            let i = target.idx(x, y);
            let part = target.part[i];
            if part != 0 {
                if let Some((vertex, dist)) =
                    index.nearest(part, target.u[i] as f64, target.v[i] as f64)
                {
                    if dist <= tau {
                        pairs.push(CorrespondencePair {
                            pixel: Vec2::new(x as f64 + 0.5, y as f64 + 0.5),
                            vertex,
                            dist: dist as f32,
                        });
                    }
                }
            }
            x += stride as u32;
        }
        y += stride as u32;
    }
    CorrespondenceSet { pairs, tau }
}

/// Picks the smallest stride that keeps the matched-pair count at or below
/// `max_pairs` on the given self-rendered image. With the 300-pair budget at
/// 224x224 this lands in the 100..300 operating range.
pub fn calibrate_stride(
    target: &IuvImage,
    index: &IuvIndex,
    tau: f64,
    max_pairs: usize,
) -> usize {
    for stride in 1..=64 {
        if match_pixels(target, index, tau, stride).pairs.len() <= max_pairs {
            return stride;
        }
    }
    64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{build_procedural_template, TemplateConfig};
    use crate::rng::Pcg32;

    fn test_model() -> crate::body::BodyModel {
        build_procedural_template(&TemplateConfig {
            radial_segments: 8,
            axial_segments: 6,
            shape_rank: 4,
            ..Default::default()
        })
        .unwrap()
    }

    /// Independent reference: linear scan in vertex order with the same
    /// cross-part-infinite metric.
    fn linear_scan(model: &crate::body::BodyModel, part: u8, u: f64, v: f64) -> Option<(u32, f64)> {
        let mut best: Option<(u32, f64)> = None;
        for (vi, iuv) in model.mesh.vertex_iuv.iter().enumerate() {
            if iuv.part != part {
                continue;
            }
            let du = iuv.u - u;
            let dv = iuv.v - v;
            let d2 = du * du + dv * dv;
            if best.map_or(true, |(_, b)| d2 < b) {
                best = Some((vi as u32, d2));
            }
        }
        best.map(|(vi, d2)| (vi, libm::sqrt(d2)))
    }

    #[test]
    fn exact_vertex_query_hits_it() {
        let model = test_model();
        let index = build_iuv_index(&model);
        for vi in (0..model.vertex_count()).step_by(37) {
            let iuv = model.mesh.vertex_iuv[vi];
            let (hit, dist) = index.nearest(iuv.part, iuv.u, iuv.v).unwrap();
            assert_eq!(dist, 0.0);
            // Duplicate chart positions cannot exist (charts are injective),
            // so the hit must be the vertex itself.
            assert_eq!(
                (model.mesh.vertex_iuv[hit as usize].u, model.mesh.vertex_iuv[hit as usize].v),
                (iuv.u, iuv.v)
            );
        }
    }

    #[test]
    fn absent_part_yields_no_match() {
        let model = test_model();
        let index = build_iuv_index(&model);
        assert!(index.nearest(0, 0.5, 0.5).is_none());
        assert!(index.nearest(model.parts + 1, 0.5, 0.5).is_none());
    }

    #[test]
    fn kd_tree_equals_linear_scan() {
        let model = test_model();
        let index = build_iuv_index(&model);
        let mut rng = Pcg32::new(40, 0);
        for _ in 0..1000 {
            let part = (rng.below(model.parts as usize) + 1) as u8;
            let (u, v) = (rng.range(-0.2, 1.2), rng.range(-0.2, 1.2));
            let got = index.nearest(part, u, v).unwrap();
            let want = linear_scan(&model, part, u, v).unwrap();
            assert_eq!(got.0, want.0, "query ({part},{u},{v})");
            assert!((got.1 - want.1).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_break_to_smallest_vertex() {
        // Two vertices at the same chart position in a hand-built model.
        use crate::testutil::{tri_soup_model, TestTri};
        let tri = TestTri {
            positions: [
                crate::math::Vec3::new(0.0, 0.0, 1.0),
                crate::math::Vec3::new(4.0, 0.0, 1.0),
                crate::math::Vec3::new(0.0, 4.0, 1.0),
            ],
            part: 1,
            uvs: [(0.25, 0.25), (0.75, 0.75), (0.25, 0.25)],
        };
        let model = tri_soup_model(&[tri]);
        let index = build_iuv_index(&model);
        let (vertex, _) = index.nearest(1, 0.3, 0.3).unwrap();
        assert_eq!(vertex, 0);
    }

    #[test]
    fn tau_zero_keeps_only_exact_hits() {
        let model = test_model();
        let index = build_iuv_index(&model);
        let cam = crate::camera::CameraParams::mean_for(&model, 224, 224).unwrap();
        let pose = crate::body::PoseParams::rest(model.joint_count());
        let shape = crate::body::ShapeParams::zeros(model.shape_rank());
        let state = crate::body::BodyState::compute(&model, &pose, &shape).unwrap();
        let (image, _) =
            crate::raster::rasterize(&model, &state.posed.vertices, &cam, 224, 224).unwrap();
        let set = match_pixels(&image, &index, 0.0, 2);
        for pair in &set.pairs {
            assert_eq!(pair.dist, 0.0);
        }
        // And every pair at any tau matches parts consistently.
        let set = match_pixels(&image, &index, 0.08, 2);
        assert!(!set.pairs.is_empty());
        for pair in &set.pairs {
            let px = (pair.pixel.x - 0.5) as u32;
            let py = (pair.pixel.y - 0.5) as u32;
            let i = image.idx(px, py);
            assert_eq!(
                image.part[i],
                model.mesh.vertex_iuv[pair.vertex as usize].part
            );
            assert!(f64::from(pair.dist) <= 0.08);
        }
    }

    #[test]
    fn growing_tau_never_drops_pairs() {
        let model = test_model();
        let index = build_iuv_index(&model);
        let cam = crate::camera::CameraParams::mean_for(&model, 160, 160).unwrap();
        let pose = crate::body::PoseParams::rest(model.joint_count());
        let shape = crate::body::ShapeParams::zeros(model.shape_rank());
        let state = crate::body::BodyState::compute(&model, &pose, &shape).unwrap();
        let (image, _) =
            crate::raster::rasterize(&model, &state.posed.vertices, &cam, 160, 160).unwrap();
        let mut prev: Option<CorrespondenceSet> = None;
        for tau in [0.01, 0.03, 0.06, 0.1] {
            let set = match_pixels(&image, &index, tau, 3);
            if let Some(p) = &prev {
                for pair in &p.pairs {
                    assert!(
                        set.pairs.iter().any(|q| q.pixel == pair.pixel && q.vertex == pair.vertex),
                        "pair lost when tau grew"
                    );
                }
            }
            prev = Some(set);
        }
    }

    #[test]
    fn calibrated_stride_hits_operating_range() {
        // Default chart density: the operating range is calibrated there.
        let model = build_procedural_template(&TemplateConfig::default()).unwrap();
        let index = build_iuv_index(&model);
        let cam = crate::camera::CameraParams::mean_for(&model, 224, 224).unwrap();
        let pose = crate::body::PoseParams::rest(model.joint_count());
        let shape = crate::body::ShapeParams::zeros(model.shape_rank());
        let state = crate::body::BodyState::compute(&model, &pose, &shape).unwrap();
        let (image, _) =
            crate::raster::rasterize(&model, &state.posed.vertices, &cam, 224, 224).unwrap();
        for tau in [0.01, 0.05, 0.1] {
            let stride = calibrate_stride(&image, &index, tau, 300);
            let count = match_pixels(&image, &index, tau, stride).pairs.len();
            assert!(
                (100..=300).contains(&count),
                "tau {tau}: {count} pairs at stride {stride}"
            );
        }
    }
}
