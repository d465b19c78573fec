//! Dataset layout and generation.
//!
//! A dataset directory holds `manifest.json`, `model.drbm`, and per-sample
//! `iuv/<seq>_<frame>.driu` plus `corr/<seq>_<frame>.csv` files. Every
//! numeric manifest value is serialized as a decimal with 9 significant
//! digits; parameters are canonicalized to that precision *before* rendering,
//! so a fit initialized from a parsed manifest reproduces the generator's
//! geometry exactly. Generation is deterministic per seed, byte for byte.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use densefit_core::body::{
    build_procedural_template, select_lsp14, BodyModel, BodyState, PoseParams, ShapeParams,
    TemplateConfig,
};
use densefit_core::camera::CameraParams;
use densefit_core::correspond::{
    build_iuv_index, calibrate_stride, match_pixels, CorrespondencePair, CorrespondenceSet,
};
use densefit_core::math::{Vec2, Vec3};
use densefit_core::raster::rasterize;
use densefit_core::rng::Pcg32;
use densefit_core::synth::{
    canonicalize_params, occlude_rectangle, sample_camera, sample_pose_sequence, sample_shape,
    snap_pairs_to_projection, PoseStyle,
};

use crate::error::CliError;
use crate::formats;

/// One generated sample; `theta` is row-major `joint_count x 3`, `joints14`
/// the LSP-ordered ground-truth joint positions, flattened.
#[derive(Debug, Clone, Deserialize)]
pub struct SampleRecord {
    pub sequence: u32,
    pub action: u32,
    pub shape_id: u32,
    pub frame: u32,
    pub split: String,
    pub iuv: String,
    pub corr: String,
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub alpha: [f64; 3],
    pub joints14: Vec<f64>,
    pub occluded: bool,
}

impl SampleRecord {
    pub fn stem(&self) -> String {
        format!("{}_{}", self.sequence, self.frame)
    }

    pub fn pose(&self) -> PoseParams {
        let mut pose = PoseParams::rest(self.theta.len() / 3);
        for (j, r) in pose.rotations.iter_mut().enumerate() {
            *r = Vec3::new(self.theta[3 * j], self.theta[3 * j + 1], self.theta[3 * j + 2]);
        }
        pose
    }

    pub fn shape(&self) -> ShapeParams {
        ShapeParams {
            coefficients: self.beta.clone(),
        }
    }

    pub fn camera(&self) -> CameraParams {
        CameraParams {
            scale: self.alpha[0],
            offset: Vec2::new(self.alpha[1], self.alpha[2]),
        }
    }

    pub fn gt_joints(&self) -> Vec<Vec3> {
        self.joints14
            .chunks(3)
            .map(|c| Vec3::new(c[0], c[1], c[2]))
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub seed: u64,
    pub model_file: String,
    pub image_width: u32,
    pub image_height: u32,
    pub tau: f64,
    pub stride: u32,
    pub train_count: u32,
    pub test_count: u32,
    pub samples: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<DatasetManifest, CliError> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn model(&self, dir: &Path) -> Result<BodyModel, CliError> {
        formats::load_model(&dir.join(&self.model_file))
    }
}

/// Decimal with 9 significant digits; the parse-back of this string is the
/// canonical in-memory value.
pub fn fmt_sig9(x: f64) -> String {
    format!("{:.8e}", x)
}

fn write_f64_array(w: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    w.write_all(b"[")?;
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            w.write_all(b",")?;
        }
        write!(w, "{}", fmt_sig9(*v))?;
    }
    w.write_all(b"]")
}

fn json_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Writes the manifest with fixed field order and 9-significant-digit
/// numbers, so regeneration is byte-identical.
pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), CliError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{{")?;
    writeln!(w, "  \"name\": \"{}\",", json_escape(&manifest.name))?;
    writeln!(w, "  \"seed\": {},", manifest.seed)?;
    writeln!(w, "  \"model_file\": \"{}\",", json_escape(&manifest.model_file))?;
    writeln!(w, "  \"image_width\": {},", manifest.image_width)?;
    writeln!(w, "  \"image_height\": {},", manifest.image_height)?;
    writeln!(w, "  \"tau\": {},", fmt_sig9(manifest.tau))?;
    writeln!(w, "  \"stride\": {},", manifest.stride)?;
    writeln!(w, "  \"train_count\": {},", manifest.train_count)?;
    writeln!(w, "  \"test_count\": {},", manifest.test_count)?;
    writeln!(w, "  \"samples\": [")?;
    for (i, s) in manifest.samples.iter().enumerate() {
        write!(
            w,
            "    {{\"sequence\": {}, \"action\": {}, \"shape_id\": {}, \"frame\": {}, \
             \"split\": \"{}\", \"iuv\": \"{}\", \"corr\": \"{}\", \"occluded\": {}, ",
            s.sequence,
            s.action,
            s.shape_id,
            s.frame,
            s.split,
            json_escape(&s.iuv),
            json_escape(&s.corr),
            s.occluded
        )?;
        write!(w, "\"theta\": ")?;
        write_f64_array(&mut w, &s.theta)?;
        write!(w, ", \"beta\": ")?;
        write_f64_array(&mut w, &s.beta)?;
        write!(w, ", \"alpha\": ")?;
        write_f64_array(&mut w, &s.alpha)?;
        write!(w, ", \"joints14\": ")?;
        write_f64_array(&mut w, &s.joints14)?;
        writeln!(w, "}}{}", if i + 1 < manifest.samples.len() { "," } else { "" })?;
    }
    writeln!(w, "  ]")?;
    writeln!(w, "}}")?;
    w.flush()?;
    Ok(())
}

/// Correspondence file: one `pixel_x,pixel_y,vertex_id,dist` row per pair.
/// Pixel coordinates use shortest round-trip formatting (they carry the
/// exact snapped landmark positions).
pub fn write_corr(set: &CorrespondenceSet, path: &Path) -> Result<(), CliError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "pixel_x,pixel_y,vertex_id,dist")?;
    for p in &set.pairs {
        writeln!(w, "{},{},{},{}", p.pixel.x, p.pixel.y, p.vertex, p.dist)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_corr(path: &Path, tau: f64) -> Result<CorrespondenceSet, CliError> {
    let text = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CliError::Format(format!(
                "{}: malformed row {}",
                path.display(),
                lineno + 1
            )));
        }
        let parse = |s: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|_| CliError::Format(format!("{}: bad number {s}", path.display())))
        };
        pairs.push(CorrespondencePair {
            pixel: Vec2::new(parse(fields[0])?, parse(fields[1])?),
            vertex: parse(fields[2])? as u32,
            dist: parse(fields[3])? as f32,
        });
    }
    Ok(CorrespondenceSet { pairs, tau })
}

#[derive(Debug, Clone)]
pub struct GenerateConfig {
    pub name: String,
    /// Number of action sequences; each is rendered with
    /// `shapes_per_sequence` bodies.
    pub sequences: u32,
    pub frames: u32,
    pub shapes_per_sequence: u32,
    pub width: u32,
    pub height: u32,
    pub split_ratio: f64,
    pub seed: u64,
    pub occlusion: bool,
    pub tau: f64,
    pub template: TemplateConfig,
    pub jobs: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            name: "synth-body".into(),
            sequences: 100,
            frames: 50,
            shapes_per_sequence: 2,
            width: 224,
            height: 224,
            split_ratio: 0.9,
            seed: 0,
            occlusion: false,
            tau: 0.05,
            template: TemplateConfig::default(),
            jobs: 1,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn mix(seed: u64, salt: u64, id: u64) -> u64 {
    splitmix64(seed ^ splitmix64(salt.wrapping_add(id << 17)))
}

struct SequencePlan {
    sequence: u32,
    action: u32,
    shape_id: u32,
    split: &'static str,
}

/// Renders the full dataset to `out_dir`. The split is 90/10 (configurable)
/// by action sequence; shapes are drawn per rendered sequence, so test-split
/// shapes never appear in training records.
pub fn generate(config: &GenerateConfig, out_dir: &Path) -> Result<DatasetManifest, CliError> {
    if config.sequences < 2 {
        return Err(CliError::Usage(
            "at least 2 sequences are required so both splits are non-empty".into(),
        ));
    }
    if config.frames == 0 || config.shapes_per_sequence == 0 {
        return Err(CliError::Usage("frames and shapes per sequence must be >= 1".into()));
    }
    if !(config.split_ratio > 0.0 && config.split_ratio < 1.0) {
        return Err(CliError::Usage("split ratio must lie strictly between 0 and 1".into()));
    }
    fs::create_dir_all(out_dir.join("iuv"))?;
    fs::create_dir_all(out_dir.join("corr"))?;

    let model = build_procedural_template(&config.template).map_err(CliError::format)?;
    formats::save_model(&model, &out_dir.join("model.drbm"))?;
    let index = build_iuv_index(&model);
    let lsp = model.skeleton.lsp14_map().map_err(CliError::format)?;
    let limits = model.skeleton.default_joint_limits();

    // Stride calibration on a rest-pose self-render at the dataset size.
    let mean_cam = CameraParams::mean_for(&model, config.width, config.height)
        .map_err(CliError::format)?;
    let rest_state = BodyState::compute(
        &model,
        &PoseParams::rest(model.joint_count()),
        &ShapeParams::zeros(model.shape_rank()),
    )
    .map_err(CliError::format)?;
    let (self_render, _) = rasterize(
        &model,
        &rest_state.posed.vertices,
        &mean_cam,
        config.width,
        config.height,
    )
    .map_err(CliError::format)?;
    let stride = calibrate_stride(&self_render, &index, config.tau, 300);

    let train_actions = ((config.sequences as f64 * config.split_ratio).round() as u32)
        .clamp(1, config.sequences - 1);

    let mut plans = Vec::new();
    for action in 0..config.sequences {
        for k in 0..config.shapes_per_sequence {
            let sequence = action * config.shapes_per_sequence + k;
            plans.push(SequencePlan {
                sequence,
                action,
                shape_id: sequence,
                split: if action < train_actions { "train" } else { "test" },
            });
        }
    }

    let render_sequence = |plan: &SequencePlan| -> Result<Vec<SampleRecord>, CliError> {
        let poses = sample_pose_sequence(
            &model.skeleton,
            &limits,
            mix(config.seed, 1, plan.action as u64),
            config.frames as usize,
            &PoseStyle::default(),
        );
        let mut shape = sample_shape(model.shape_rank(), mix(config.seed, 2, plan.shape_id as u64));
        let mut camera = sample_camera(
            &model,
            mix(config.seed, 3, plan.sequence as u64),
            config.width,
            config.height,
        );
        let mut records = Vec::with_capacity(config.frames as usize);
        for (frame, pose) in poses.into_iter().enumerate() {
            let mut pose = pose;
            canonicalize_params(&mut pose, &mut shape, &mut camera);
            let state = BodyState::compute(&model, &pose, &shape).map_err(CliError::format)?;
            let (mut image, _) = rasterize(
                &model,
                &state.posed.vertices,
                &camera,
                config.width,
                config.height,
            )
            .map_err(CliError::format)?;
            let mut occluded = false;
            if config.occlusion && plan.split == "train" {
                let mut rng = Pcg32::new(
                    mix(config.seed, 4, plan.sequence as u64),
                    frame as u64,
                );
                occluded = occlude_rectangle(&mut image, &mut rng, 0.05, 0.25).is_some();
            }
            let raw_pairs = match_pixels(&image, &index, config.tau, stride);
            let pairs = snap_pairs_to_projection(&raw_pairs, &state, &camera);

            let stem = format!("{}_{}", plan.sequence, frame);
            let iuv_rel = format!("iuv/{stem}.driu");
            let corr_rel = format!("corr/{stem}.csv");
            formats::save_iuv(&image, &out_dir.join(&iuv_rel))?;
            write_corr(&pairs, &out_dir.join(&corr_rel))?;

            let joints14 = select_lsp14(&state.posed.joint_positions, &lsp);
            let mut theta = Vec::with_capacity(pose.rotations.len() * 3);
            for r in &pose.rotations {
                theta.extend_from_slice(&[r.x, r.y, r.z]);
            }
            records.push(SampleRecord {
                sequence: plan.sequence,
                action: plan.action,
                shape_id: plan.shape_id,
                frame: frame as u32,
                split: plan.split.into(),
                iuv: iuv_rel,
                corr: corr_rel,
                theta,
                beta: shape.coefficients.clone(),
                alpha: [camera.scale, camera.offset.x, camera.offset.y],
                joints14: joints14.iter().flat_map(|j| [j.x, j.y, j.z]).collect(),
                occluded,
            });
        }
        Ok(records)
    };

    // Frames are pure per-sequence work; the manifest is assembled in plan
    // order afterwards, so parallel rendering stays deterministic.
    let jobs = config.jobs.max(1);
    let mut all: Vec<Option<Vec<SampleRecord>>> = (0..plans.len()).map(|_| None).collect();
    if jobs == 1 {
        for (i, plan) in plans.iter().enumerate() {
            all[i] = Some(render_sequence(plan)?);
        }
    } else {
        let indexed: Vec<(usize, &SequencePlan)> = plans.iter().enumerate().collect();
        let chunk_len = indexed.len().div_ceil(jobs);
        let results: Vec<Result<(usize, Vec<SampleRecord>), CliError>> =
            std::thread::scope(|scope| {
                let render = &render_sequence;
                let handles: Vec<_> = indexed
                    .chunks(chunk_len)
                    .map(|chunk| {
                        scope.spawn(move || {
                            chunk
                                .iter()
                                .map(|(i, plan)| render(plan).map(|r| (*i, r)))
                                .collect::<Vec<_>>()
                        })
                    })
                    .collect();
                handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
            });
        for result in results {
            let (i, records) = result?;
            all[i] = Some(records);
        }
    }

    let samples: Vec<SampleRecord> = all.into_iter().flat_map(|r| r.unwrap()).collect();
    let train_count = samples.iter().filter(|s| s.split == "train").count() as u32;
    let test_count = samples.len() as u32 - train_count;
    let manifest = DatasetManifest {
        name: config.name.clone(),
        seed: config.seed,
        model_file: "model.drbm".into(),
        image_width: config.width,
        image_height: config.height,
        tau: config.tau,
        stride: stride as u32,
        train_count,
        test_count,
        samples,
    };
    write_manifest(&manifest, &out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Resolves a dataset-relative path.
pub fn resolve(dir: &Path, rel: &str) -> PathBuf {
    dir.join(rel)
}
