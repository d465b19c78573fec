//! Binary file formats.
//!
//! `DRBM` carries a full body model, `DRIU` a single IUV image; both are
//! little-endian with explicit counts and are validated against the model and
//! image invariants on load. Model data is quantized to f32 at construction,
//! so a save/load round trip is bit-exact.
//!
//! The PNG export is a lossy visualization (part to hue, UV to brightness)
//! and is never parsed back.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use densefit_core::body::{BodyModel, Joint, Skeleton, TemplateMesh, VertexIuv};
use densefit_core::math::Vec3;
use densefit_core::raster::IuvImage;

use crate::error::CliError;

const MODEL_MAGIC: &[u8; 4] = b"DRBM";
const IUV_MAGIC: &[u8; 4] = b"DRIU";
const FORMAT_VERSION: u32 = 1;

struct Writerle<W: Write>(W);

impl<W: Write> Writerle<W> {
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn i32(&mut self, v: i32) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f32(&mut self, v: f64) -> std::io::Result<()> {
        self.0.write_all(&(v as f32).to_le_bytes())
    }
    fn bytes(&mut self, v: &[u8]) -> std::io::Result<()> {
        self.0.write_all(v)
    }
}

struct Readerle<R: Read>(R);

impl<R: Read> Readerle<R> {
    fn u32(&mut self) -> Result<u32, CliError> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn i32(&mut self) -> Result<i32, CliError> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b)?;
        Ok(i32::from_le_bytes(b))
    }
    fn f32(&mut self) -> Result<f64, CliError> {
        let mut b = [0u8; 4];
        self.0.read_exact(&mut b)?;
        Ok(f32::from_le_bytes(b) as f64)
    }
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>, CliError> {
        let mut v = vec![0u8; n];
        self.0.read_exact(&mut v)?;
        Ok(v)
    }
}

pub fn save_model(model: &BodyModel, path: &Path) -> Result<(), CliError> {
    let mut w = Writerle(BufWriter::new(File::create(path)?));
    w.bytes(MODEL_MAGIC)?;
    w.u32(FORMAT_VERSION)?;

    w.u32(model.skeleton.joint_count() as u32)?;
    for joint in &model.skeleton.joints {
        let name = joint.name.as_bytes();
        w.u32(name.len() as u32)?;
        w.bytes(name)?;
        w.i32(joint.parent.map_or(-1, |p| p as i32))?;
        for c in [joint.offset.x, joint.offset.y, joint.offset.z] {
            w.f32(c)?;
        }
    }

    let mesh = &model.mesh;
    w.u32(mesh.vertex_count() as u32)?;
    for v in &mesh.vertices {
        for c in [v.x, v.y, v.z] {
            w.f32(c)?;
        }
    }
    w.u32(mesh.faces.len() as u32)?;
    for f in &mesh.faces {
        for &idx in f {
            w.u32(idx)?;
        }
    }
    w.u32(mesh.vertex_iuv.len() as u32)?;
    for iuv in &mesh.vertex_iuv {
        w.u32(iuv.part as u32)?;
        w.f32(iuv.u)?;
        w.f32(iuv.v)?;
    }
    w.u32(mesh.weights.len() as u32)?;
    for &weight in &mesh.weights {
        w.f32(weight)?;
    }
    w.u32(mesh.shape_basis.len() as u32)?;
    for mode in &mesh.shape_basis {
        for d in mode {
            for c in [d.x, d.y, d.z] {
                w.f32(c)?;
            }
        }
    }
    w.0.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<BodyModel, CliError> {
    let mut r = Readerle(BufReader::new(File::open(path)?));
    let magic = r.bytes(4)?;
    if magic != MODEL_MAGIC {
        return Err(CliError::Format(format!("{}: not a DRBM file", path.display())));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CliError::Format(format!("unsupported DRBM version {version}")));
    }

    let joint_count = r.u32()? as usize;
    let mut joints = Vec::with_capacity(joint_count);
    for _ in 0..joint_count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.bytes(name_len)?)
            .map_err(|_| CliError::Format("joint name is not valid UTF-8".into()))?;
        let parent = r.i32()?;
        let offset = Vec3::new(r.f32()?, r.f32()?, r.f32()?);
        joints.push(Joint {
            name,
            parent: (parent >= 0).then_some(parent as usize),
            offset,
        });
    }

    let v_count = r.u32()? as usize;
    let mut vertices = Vec::with_capacity(v_count);
    for _ in 0..v_count {
        vertices.push(Vec3::new(r.f32()?, r.f32()?, r.f32()?));
    }
    let f_count = r.u32()? as usize;
    let mut faces = Vec::with_capacity(f_count);
    for _ in 0..f_count {
        faces.push([r.u32()?, r.u32()?, r.u32()?]);
    }
    let iuv_count = r.u32()? as usize;
    if iuv_count != v_count {
        return Err(CliError::Format("IUV chart count mismatch".into()));
    }
    let mut vertex_iuv = Vec::with_capacity(iuv_count);
    let mut parts = 0u8;
    for _ in 0..iuv_count {
        let part = r.u32()?;
        if part == 0 || part > u8::MAX as u32 {
            return Err(CliError::Format(format!("part index {part} out of range")));
        }
        parts = parts.max(part as u8);
        vertex_iuv.push(VertexIuv {
            part: part as u8,
            u: r.f32()?,
            v: r.f32()?,
        });
    }
    let weight_count = r.u32()? as usize;
    if weight_count != v_count * joint_count {
        return Err(CliError::Format("weight matrix count mismatch".into()));
    }
    let mut weights = Vec::with_capacity(weight_count);
    for _ in 0..weight_count {
        weights.push(r.f32()?);
    }
    let rank = r.u32()? as usize;
    let mut shape_basis = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut mode = Vec::with_capacity(v_count);
        for _ in 0..v_count {
            mode.push(Vec3::new(r.f32()?, r.f32()?, r.f32()?));
        }
        shape_basis.push(mode);
    }

    let model = BodyModel {
        skeleton: Skeleton { joints },
        mesh: TemplateMesh {
            vertices,
            faces,
            vertex_iuv,
            weights,
            shape_basis,
        },
        parts,
    };
    model.validate().map_err(CliError::format)?;
    Ok(model)
}

pub fn save_iuv(image: &IuvImage, path: &Path) -> Result<(), CliError> {
    let mut w = Writerle(BufWriter::new(File::create(path)?));
    w.bytes(IUV_MAGIC)?;
    w.u32(FORMAT_VERSION)?;
    w.u32(image.width)?;
    w.u32(image.height)?;
    w.bytes(&image.part)?;
    for &u in &image.u {
        w.bytes(&u.to_le_bytes())?;
    }
    for &v in &image.v {
        w.bytes(&v.to_le_bytes())?;
    }
    w.0.flush()?;
    Ok(())
}

pub fn load_iuv(path: &Path) -> Result<IuvImage, CliError> {
    let mut r = Readerle(BufReader::new(File::open(path)?));
    let magic = r.bytes(4)?;
    if magic != IUV_MAGIC {
        return Err(CliError::Format(format!("{}: not a DRIU file", path.display())));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CliError::Format(format!("unsupported DRIU version {version}")));
    }
    let width = r.u32()?;
    let height = r.u32()?;
    let n = width as usize * height as usize;
    let part = r.bytes(n)?;
    let mut u = Vec::with_capacity(n);
    for _ in 0..n {
        let mut b = [0u8; 4];
        r.0.read_exact(&mut b)?;
        u.push(f32::from_le_bytes(b));
    }
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        let mut b = [0u8; 4];
        r.0.read_exact(&mut b)?;
        v.push(f32::from_le_bytes(b));
    }
    let image = IuvImage {
        width,
        height,
        part,
        u,
        v,
    };
    image.validate().map_err(CliError::format)?;
    Ok(image)
}

/// Writes a visualization PNG: part index mapped to hue, U/V to saturation
/// and brightness. Inspection only.
pub fn export_png(image: &IuvImage, parts: u8, path: &Path) -> Result<(), CliError> {
    let mut rgb = vec![0u8; image.pixel_count() * 3];
    for i in 0..image.pixel_count() {
        let p = image.part[i];
        if p == 0 {
            continue;
        }
        let hue = (p - 1) as f64 / parts.max(1) as f64;
        let sat = 0.35 + 0.65 * image.u[i] as f64;
        let val = 0.35 + 0.65 * image.v[i] as f64;
        let (r, g, b) = hsv_to_rgb(hue, sat, val);
        rgb[3 * i] = r;
        rgb[3 * i + 1] = g;
        rgb[3 * i + 2] = b;
    }
    let file = File::create(path)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), image.width, image.height);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| CliError::Format(e.to_string()))?;
    writer
        .write_image_data(&rgb)
        .map_err(|e| CliError::Format(e.to_string()))?;
    Ok(())
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (u8, u8, u8) {
    let h6 = (h * 6.0).rem_euclid(6.0);
    let c = v * s;
    let x = c * (1.0 - (h6 % 2.0 - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (
        ((r + m) * 255.0) as u8,
        ((g + m) * 255.0) as u8,
        ((b + m) * 255.0) as u8,
    )
}
