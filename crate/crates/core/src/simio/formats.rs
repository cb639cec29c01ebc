//! DPTH1 depth rasters, LBL1 label rasters and text pose files.

use std::path::Path;

use crate::binio::{self, Reader};
use crate::error::{Error, Result};
use crate::renderer::Pose;

pub const DEPTH_MAGIC: &[u8; 5] = b"DPTH1";
pub const LABEL_MAGIC: &[u8; 4] = b"LBL1";

/// Row-major `height x width` raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

/// Metric z-depth; 0 marks an invalid pixel.
pub type DepthImage = Image<f32>;
pub type LabelImage = Image<u16>;

impl<T: Copy> Image<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{width}x{height} raster given {} values",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn at(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }
}

fn header(out: &mut Vec<u8>, magic: &[u8], w: usize, h: usize) -> Result<()> {
    out.extend_from_slice(magic);
    binio::put_u32(out, binio::to_u32(h, "height")?);
    binio::put_u32(out, binio::to_u32(w, "width")?);
    Ok(())
}

fn read_header(r: &mut Reader<'_>, magic: &[u8]) -> Result<(usize, usize, usize)> {
    r.magic(magic)?;
    let h = r.u32("height")? as usize;
    let w = r.u32("width")? as usize;
    let n = h
        .checked_mul(w)
        .ok_or_else(|| Error::format(magic.len() as u64, "pixel count overflow"))?;
    Ok((w, h, n))
}

pub fn encode_depth(img: &DepthImage) -> Result<Vec<u8>> {
    if let Some(d) = img.data.iter().find(|d| !d.is_finite() || **d < 0.0) {
        return Err(Error::Input(format!("depth {d} is not a finite non-negative value")));
    }
    let mut out = Vec::with_capacity(13 + 4 * img.data.len());
    header(&mut out, DEPTH_MAGIC, img.width, img.height)?;
    binio::put_f32s(&mut out, &img.data);
    Ok(out)
}

pub fn decode_depth(bytes: &[u8]) -> Result<DepthImage> {
    let mut r = Reader::new(bytes);
    let (w, h, n) = read_header(&mut r, DEPTH_MAGIC)?;
    let at = r.offset();
    let data = r.f32s(n, "depth values")?;
    r.finish()?;
    if let Some(i) = data.iter().position(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::format(
            at + 4 * i as u64,
            format!("depth {} is not a finite non-negative value", data[i]),
        ));
    }
    Image::new(w, h, data)
}

pub fn encode_labels(img: &LabelImage) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + 2 * img.data.len());
    header(&mut out, LABEL_MAGIC, img.width, img.height)?;
    for v in &img.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_labels(bytes: &[u8]) -> Result<LabelImage> {
    let mut r = Reader::new(bytes);
    let (w, h, n) = read_header(&mut r, LABEL_MAGIC)?;
    let data = r.u16s(n, "labels")?;
    r.finish()?;
    Image::new(w, h, data)
}

/// 16 numbers, one matrix row per line. Rust's float formatting round-trips exactly.
pub fn encode_pose(pose: &Pose) -> String {
    let m = pose.to_matrix();
    let mut s = String::new();
    for row in m.chunks(4) {
        let parts: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&parts.join(" "));
        s.push('\n');
    }
    s
}

pub fn decode_pose(text: &str) -> Result<Pose> {
    let mut vals = Vec::with_capacity(16);
    let mut offset = 0u64;
    for tok in text.split_whitespace() {
        let pos = text[offset as usize..].find(tok).map_or(offset, |p| offset + p as u64);
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::format(pos, format!("pose entry {tok:?} is not a number")))?;
        if !v.is_finite() {
            return Err(Error::format(pos, format!("pose entry {tok:?} is not finite")));
        }
        vals.push(v);
        offset = pos + tok.len() as u64;
    }
    if vals.len() != 16 {
        return Err(Error::format(offset, format!("pose has {} entries, expected 16", vals.len())));
    }
    Pose::from_matrix(&vals)
}

pub fn save_depth(path: &Path, img: &DepthImage) -> Result<()> {
    binio::write_file(path, &encode_depth(img)?)
}

pub fn load_depth(path: &Path) -> Result<DepthImage> {
    decode_depth(&binio::read_file(path)?)
}

pub fn save_labels(path: &Path, img: &LabelImage) -> Result<()> {
    binio::write_file(path, &encode_labels(img)?)
}

pub fn load_labels(path: &Path) -> Result<LabelImage> {
    decode_labels(&binio::read_file(path)?)
}

pub fn save_pose(path: &Path, pose: &Pose) -> Result<()> {
    binio::write_file(path, encode_pose(pose).as_bytes())
}

pub fn load_pose(path: &Path) -> Result<Pose> {
    let bytes = binio::read_file(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::format(e.valid_up_to() as u64, "pose file is not UTF-8"))?;
    decode_pose(text)
}
