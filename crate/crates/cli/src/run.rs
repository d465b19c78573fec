//! Subcommand implementations. Argument structs live here so integration
//! code and the binary share one definition; `main` only maps errors to
//! exit codes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use densefit_core::body::{
    build_procedural_template, select_lsp14, BodyState, PoseParams, ShapeParams,
    TemplateConfig,
};
use densefit_core::camera::CameraParams;
use densefit_core::fit::{fit, FitConfig, FitError, FitResult, FitSupervision};
use densefit_core::gradcheck::{run_all, CheckOptions};
use densefit_core::loss::{LossReport, SupervisionFlags};
use densefit_core::math::{Vec2, Vec3};
use densefit_core::metrics::{
    mpjpe, mpvpe, mse_params, pa_mpjpe, pck_auc, segmentation_scores, EvalReport, PartMergeMap,
    LSP14_PELVIS,
};
use densefit_core::raster::rasterize;
use densefit_core::synth::{sample_camera, sample_pose_sequence, sample_shape, PoseStyle};

use crate::dataset::{self, fmt_sig9, DatasetManifest, GenerateConfig, SampleRecord};
use crate::error::CliError;
use crate::formats;

fn parse_supervision(tokens: &str) -> Result<SupervisionFlags, CliError> {
    let mut flags = SupervisionFlags::default();
    for token in tokens.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match token {
            "rpj" => flags.rpj = true,
            "msk" => flags.msk = true,
            "adv" => flags.adv = true,
            "rec" => flags.rec = true,
            "rgr" => flags.rgr = true,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown supervision token '{other}' (expected rpj, msk, adv, rec, rgr)"
                )))
            }
        }
    }
    Ok(flags)
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of action sequences.
    #[arg(long, default_value_t = 100)]
    pub sequences: u32,
    /// Frames per sequence.
    #[arg(long, default_value_t = 50)]
    pub frames: u32,
    /// Body shapes rendered per action sequence.
    #[arg(long, default_value_t = 2)]
    pub shapes: u32,
    #[arg(long, default_value_t = 224)]
    pub image_size: u32,
    /// Train fraction of the sequence split.
    #[arg(long, default_value_t = 0.9)]
    pub split: f64,
    #[arg(long, env = "DENSEFIT_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Black out a random rectangle on training frames.
    #[arg(long, default_value_t = false)]
    pub occlusion: bool,
    /// IUV match threshold for the correspondence files.
    #[arg(long, default_value_t = 0.05)]
    pub tau: f64,
    /// Dataset name recorded in the manifest.
    #[arg(long, default_value = "synth-body")]
    pub name: String,
    /// Worker threads for frame rendering.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

pub fn run_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let config = GenerateConfig {
        name: args.name.clone(),
        sequences: args.sequences,
        frames: args.frames,
        shapes_per_sequence: args.shapes,
        width: args.image_size,
        height: args.image_size,
        split_ratio: args.split,
        seed: args.seed,
        occlusion: args.occlusion,
        tau: args.tau,
        template: TemplateConfig::default(),
        jobs: args.jobs,
    };
    let manifest = dataset::generate(&config, &args.out)?;
    println!(
        "dataset '{}': {} samples ({} train / {} test), stride {}, written to {}",
        manifest.name,
        manifest.samples.len(),
        manifest.train_count,
        manifest.test_count,
        manifest.stride,
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Output IUV file (.driu).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional visualization PNG.
    #[arg(long)]
    pub png: Option<PathBuf>,
    /// Optional body-model dump (.drbm).
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[arg(long, default_value_t = 224)]
    pub image_size: u32,
    /// Sample pose/shape/camera from this seed; rest pose and mean camera
    /// when omitted.
    #[arg(long, env = "DENSEFIT_SEED")]
    pub seed: Option<u64>,
}

pub fn run_render(args: &RenderArgs) -> Result<(), CliError> {
    let model = build_procedural_template(&TemplateConfig::default()).map_err(CliError::format)?;
    let (pose, shape, camera) = match args.seed {
        None => (
            PoseParams::rest(model.joint_count()),
            ShapeParams::zeros(model.shape_rank()),
            CameraParams::mean_for(&model, args.image_size, args.image_size)
                .map_err(CliError::format)?,
        ),
        Some(seed) => {
            let limits = model.skeleton.default_joint_limits();
            let pose = sample_pose_sequence(&model.skeleton, &limits, seed, 1, &PoseStyle::default())
                .pop()
                .expect("one frame");
            (
                pose,
                sample_shape(model.shape_rank(), seed ^ 0x5A5A),
                sample_camera(&model, seed ^ 0xC4C4, args.image_size, args.image_size),
            )
        }
    };
    let state = BodyState::compute(&model, &pose, &shape).map_err(CliError::format)?;
    let (image, _) = rasterize(
        &model,
        &state.posed.vertices,
        &camera,
        args.image_size,
        args.image_size,
    )
    .map_err(CliError::format)?;
    formats::save_iuv(&image, &args.out)?;
    if let Some(png) = &args.png {
        formats::export_png(&image, model.parts, png)?;
    }
    if let Some(model_out) = &args.model_out {
        formats::save_model(&model, model_out)?;
    }
    println!(
        "rendered {}x{} image, {} foreground pixels, to {}",
        image.width,
        image.height,
        image.foreground_count(),
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Single IUV target (.driu). Mutually exclusive with --dataset.
    #[arg(long, conflicts_with = "dataset")]
    pub target: Option<PathBuf>,
    /// Dataset directory to fit (test split by default).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Which dataset split to fit: train, test or all.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Output directory for parameter and loss-log files.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated loss terms: rpj,msk,adv,rec,rgr.
    #[arg(long, default_value = "rpj,msk,adv")]
    pub supervision: String,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// IUV match threshold for live matching (single-target mode).
    #[arg(long, default_value_t = 0.05)]
    pub tau: f64,
    /// Initialize each fit at the manifest's ground-truth parameters
    /// (dataset mode); exercises the paired-ground-truth round trip.
    #[arg(long, default_value_t = false)]
    pub init_gt: bool,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Deserialize)]
struct PredParams {
    theta: Vec<f64>,
    beta: Vec<f64>,
    alpha: [f64; 3],
}

fn write_params(path: &Path, result: &FitResult) -> Result<(), CliError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "{{\"theta\": [")?;
    for (i, r) in result.pose.rotations.iter().enumerate() {
        if i > 0 {
            write!(w, ",")?;
        }
        write!(w, "{},{},{}", fmt_sig9(r.x), fmt_sig9(r.y), fmt_sig9(r.z))?;
    }
    write!(w, "], \"beta\": [")?;
    for (i, b) in result.shape.coefficients.iter().enumerate() {
        if i > 0 {
            write!(w, ",")?;
        }
        write!(w, "{}", fmt_sig9(*b))?;
    }
    write!(
        w,
        "], \"alpha\": [{},{},{}], \"converged\": {}, \"iterations\": {}, \"final_total\": {}}}",
        fmt_sig9(result.camera.scale),
        fmt_sig9(result.camera.offset.x),
        fmt_sig9(result.camera.offset.y),
        result.converged,
        result.iterations,
        fmt_sig9(result.final_total),
    )?;
    w.flush()?;
    Ok(())
}

fn read_params(path: &Path) -> Result<(PoseParams, ShapeParams, CameraParams), CliError> {
    let text = fs::read_to_string(path)?;
    let parsed: PredParams = serde_json::from_str(&text)?;
    let mut pose = PoseParams::rest(parsed.theta.len() / 3);
    for (j, r) in pose.rotations.iter_mut().enumerate() {
        *r = Vec3::new(parsed.theta[3 * j], parsed.theta[3 * j + 1], parsed.theta[3 * j + 2]);
    }
    Ok((
        pose,
        ShapeParams {
            coefficients: parsed.beta,
        },
        CameraParams {
            scale: parsed.alpha[0],
            offset: Vec2::new(parsed.alpha[1], parsed.alpha[2]),
        },
    ))
}

/// Loss log: one CSV row per iteration.
fn write_loss_log(path: &Path, reports: &[LossReport]) -> Result<(), CliError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "iter,l_rpj,l_msk,l_adv,l_rec,l_rgr,total")?;
    for (i, r) in reports.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            i, r.rpj, r.msk, r.adv, r.rec, r.rgr, r.total
        )?;
    }
    w.flush()?;
    Ok(())
}

fn split_filter<'a>(manifest: &'a DatasetManifest, split: &str) -> Result<Vec<&'a SampleRecord>, CliError> {
    match split {
        "train" | "test" => Ok(manifest.samples.iter().filter(|s| s.split == split).collect()),
        "all" => Ok(manifest.samples.iter().collect()),
        other => Err(CliError::Usage(format!("unknown split '{other}'"))),
    }
}

pub fn run_fit(args: &FitArgs) -> Result<(), CliError> {
    let flags = parse_supervision(&args.supervision)?;
    fs::create_dir_all(&args.out)?;
    let mut config = FitConfig {
        max_iterations: args.max_iters,
        flags,
        tau: args.tau,
        ..FitConfig::default()
    };

    match (&args.target, &args.dataset) {
        (Some(target_path), None) => {
            if flags.rec || flags.rgr {
                return Err(CliError::Usage(
                    "rec/rgr supervision needs a dataset with ground truth".into(),
                ));
            }
            let model =
                build_procedural_template(&TemplateConfig::default()).map_err(CliError::format)?;
            let target = formats::load_iuv(target_path)?;
            let stem = target_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "target".into());
            let result = fit(&target, &model, &config, &FitSupervision::default())
                .map_err(|e| fit_error(&stem, e))?;
            write_params(&args.out.join(format!("{stem}.params.json")), &result)?;
            write_loss_log(&args.out.join(format!("{stem}.loss.csv")), &result.reports)?;
            println!(
                "{stem}: {} iterations, final total {:.6e}, converged {}",
                result.iterations, result.final_total, result.converged
            );
            Ok(())
        }
        (None, Some(dir)) => {
            let manifest = DatasetManifest::load(dir)?;
            let model = manifest.model(dir)?;
            config.tau = manifest.tau;
            let samples = split_filter(&manifest, &args.split)?;
            if samples.is_empty() {
                return Err(CliError::Usage(format!("no samples in split '{}'", args.split)));
            }

            let fit_one = |record: &SampleRecord| -> Result<(String, FitResult), (String, CliError)> {
                let stem = record.stem();
                let run = || -> Result<FitResult, CliError> {
                    let target = formats::load_iuv(&dir.join(&record.iuv))?;
                    let pairs = dataset::read_corr(&dir.join(&record.corr), manifest.tau)?;
                    let gt_pose = record.pose();
                    let gt_shape = record.shape();
                    let gt_camera = record.camera();
                    // Reconstruction targets recomputed from the manifest
                    // parameters so ground truth is bit-exact.
                    let gt_joints = if flags.rec {
                        let state = BodyState::compute(&model, &gt_pose, &gt_shape)
                            .map_err(CliError::format)?;
                        let lsp = model.skeleton.lsp14_map().map_err(CliError::format)?;
                        Some(select_lsp14(&state.posed.joint_positions, &lsp).to_vec())
                    } else {
                        None
                    };
                    let init = args
                        .init_gt
                        .then(|| (gt_pose.clone(), gt_shape.clone(), gt_camera));
                    let supervision = FitSupervision {
                        pairs: Some(pairs),
                        gt_joints,
                        gt_params: flags.rgr.then_some((gt_pose, gt_shape, gt_camera)),
                        init,
                    };
                    fit(&target, &model, &config, &supervision).map_err(|e| fit_error(&stem, e))
                };
                run().map(|r| (stem.clone(), r)).map_err(|e| (stem, e))
            };

            let jobs = args.jobs.max(1);
            let results: Vec<Result<(String, FitResult), (String, CliError)>> = if jobs == 1 {
                samples.iter().map(|r| fit_one(r)).collect()
            } else {
                let chunk_len = samples.len().div_ceil(jobs);
                std::thread::scope(|scope| {
                    let fit_one = &fit_one;
                    let handles: Vec<_> = samples
                        .chunks(chunk_len)
                        .map(|chunk| {
                            scope.spawn(move || {
                                chunk.iter().map(|r| fit_one(r)).collect::<Vec<_>>()
                            })
                        })
                        .collect();
                    handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
                })
            };

            let mut failures = 0usize;
            for result in results {
                match result {
                    Ok((stem, fit_result)) => {
                        write_params(&args.out.join(format!("{stem}.params.json")), &fit_result)?;
                        write_loss_log(
                            &args.out.join(format!("{stem}.loss.csv")),
                            &fit_result.reports,
                        )?;
                        println!(
                            "{stem}: {} iterations, final total {:.6e}, converged {}",
                            fit_result.iterations, fit_result.final_total, fit_result.converged
                        );
                    }
                    Err((stem, e)) => {
                        // Per-sample failures are reported and the run continues.
                        eprintln!("{stem}: {e}");
                        failures += 1;
                    }
                }
            }
            if failures > 0 {
                return Err(CliError::Numeric(format!("{failures} sample fit(s) failed")));
            }
            Ok(())
        }
        _ => Err(CliError::Usage("exactly one of --target or --dataset is required".into())),
    }
}

fn fit_error(stem: &str, e: FitError) -> CliError {
    match e {
        FitError::EmptyTarget => CliError::Format(format!("{stem}: target has no foreground")),
        FitError::Diverged(partial) => CliError::Numeric(format!(
            "{stem}: diverged after {} iterations (best total {:.3e})",
            partial.iterations, partial.final_total
        )),
        FitError::Numeric => CliError::Numeric(format!("{stem}: non-finite gradient")),
        other => CliError::Format(format!("{stem}: {other}")),
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset directory with ground truth.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory with fitted `<seq>_<frame>.params.json` files.
    #[arg(long)]
    pub pred: PathBuf,
    /// Output CSV path (defaults to `<pred>/eval.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
}

struct EvalRow {
    stem: String,
    report: EvalReport,
}

pub fn run_eval(args: &EvalArgs) -> Result<(), CliError> {
    let manifest = DatasetManifest::load(&args.dataset)?;
    let model = manifest.model(&args.dataset)?;
    let lsp = model.skeleton.lsp14_map().map_err(CliError::format)?;
    let pelvis = model
        .skeleton
        .find("pelvis")
        .ok_or_else(|| CliError::Format("model lacks a pelvis joint".into()))?;
    let samples = split_filter(&manifest, &args.split)?;
    let merge = PartMergeMap::identity(model.parts);

    let mut rows: Vec<EvalRow> = Vec::new();
    let mut missing: Vec<String> = Vec::new();
    for record in &samples {
        let stem = record.stem();
        let params_path = args.pred.join(format!("{stem}.params.json"));
        if !params_path.exists() {
            missing.push(stem);
            continue;
        }
        let (pose, shape, camera) = read_params(&params_path)?;
        let pred_state = BodyState::compute(&model, &pose, &shape).map_err(CliError::format)?;
        let gt_pose = record.pose();
        let gt_shape = record.shape();
        let gt_camera = record.camera();
        let gt_state =
            BodyState::compute(&model, &gt_pose, &gt_shape).map_err(CliError::format)?;

        let pred14 = select_lsp14(&pred_state.posed.joint_positions, &lsp);
        let gt14 = record.gt_joints();

        let mpjpe_mm = mpjpe(&pred14, &gt14, LSP14_PELVIS).map_err(CliError::numeric)?;
        let pa = pa_mpjpe(&pred14, &gt14).map_err(CliError::numeric)?;
        let (pck, auc) = pck_auc(&pred14, &gt14, LSP14_PELVIS).map_err(CliError::numeric)?;

        // Mesh error with both meshes root-aligned at the pelvis.
        let pred_pelvis = pred_state.posed.joint_positions[pelvis];
        let gt_pelvis = gt_state.posed.joint_positions[pelvis];
        let pred_verts: Vec<Vec3> =
            pred_state.posed.vertices.iter().map(|v| *v - pred_pelvis).collect();
        let gt_verts: Vec<Vec3> = gt_state.posed.vertices.iter().map(|v| *v - gt_pelvis).collect();
        let mpvpe_mm = mpvpe(&pred_verts, &gt_verts).map_err(CliError::numeric)?;

        let mse = mse_params(&pose, &shape, &camera, &gt_pose, &gt_shape, &gt_camera, false)
            .map_err(CliError::numeric)?;

        let gt_image = formats::load_iuv(&args.dataset.join(&record.iuv))?;
        let (pred_image, _) = rasterize(
            &model,
            &pred_state.posed.vertices,
            &camera,
            manifest.image_width,
            manifest.image_height,
        )
        .map_err(CliError::format)?;
        let seg = segmentation_scores(&pred_image, &gt_image, &merge).map_err(CliError::numeric)?;

        rows.push(EvalRow {
            stem: record.stem(),
            report: EvalReport {
                mpjpe_mm,
                pa_mpjpe_mm: pa,
                pck,
                auc,
                mpvpe_mm,
                mse_params: mse,
                seg_accuracy: seg.accuracy,
                seg_mean_f1: seg.mean_f1,
                fg_accuracy: seg.fg_accuracy,
                fg_f1: seg.fg_f1,
            },
        });
    }

    let out_path = args.out.clone().unwrap_or_else(|| args.pred.join("eval.csv"));
    let mut w = BufWriter::new(fs::File::create(&out_path)?);
    writeln!(
        w,
        "sample,mpjpe_mm,pa_mpjpe_mm,pck,auc,mpvpe_mm,mse_params,seg_accuracy,seg_mean_f1,fg_accuracy,fg_f1"
    )?;
    let mut sums = [0.0f64; 10];
    for row in &rows {
        let r = &row.report;
        let vals = [
            r.mpjpe_mm,
            r.pa_mpjpe_mm,
            r.pck,
            r.auc,
            r.mpvpe_mm,
            r.mse_params,
            r.seg_accuracy,
            r.seg_mean_f1,
            r.fg_accuracy,
            r.fg_f1,
        ];
        for (s, v) in sums.iter_mut().zip(&vals) {
            *s += v;
        }
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.stem, vals[0], vals[1], vals[2], vals[3], vals[4], vals[5], vals[6], vals[7],
            vals[8], vals[9]
        )?;
    }
    if !rows.is_empty() {
        let n = rows.len() as f64;
        write!(w, "mean")?;
        for s in sums {
            write!(w, ",{}", s / n)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    println!("evaluated {} samples to {}", rows.len(), out_path.display());

    if !missing.is_empty() {
        for stem in &missing {
            eprintln!("missing prediction: {stem}.params.json");
        }
        return Err(CliError::Format(format!(
            "{} prediction file(s) missing",
            missing.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Number of random configurations per check.
    #[arg(long, default_value_t = 100)]
    pub seeds: u64,
    #[arg(long, env = "DENSEFIT_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Test hook: bias one analytic gradient so the suite must fail.
    #[arg(long, hide = true, default_value_t = false)]
    pub inject_failure: bool,
}

pub fn run_gradcheck(args: &GradcheckArgs) -> Result<(), CliError> {
    let reports = run_all(&CheckOptions {
        seeds: args.seeds,
        base_seed: args.seed,
        inject_failure: args.inject_failure,
    });
    let mut all_passed = true;
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status} {:<22} max rel error {:>12.4e}  (tolerance {:.0e}, {} seeds, {:.2}s)",
            r.name, r.max_rel_error, r.tolerance, r.seeds, r.seconds
        );
        all_passed &= r.passed();
    }
    if !all_passed {
        return Err(CliError::Numeric("gradient checks failed".into()));
    }
    Ok(())
}
