//! Coarse 2D feature maps: the FMAP file format, the padding crop, cell to
//! pixel geometry, bilinear queries and a synthetic front-end.

mod oracle;

use std::path::Path;

use crate::binio::{self, Reader};
use crate::error::{Error, Result};
use crate::renderer::Camera;

pub use oracle::{oracle_features, FeatureOracleSpec, MAX_COSINE};

pub const FMAP_MAGIC: &[u8; 5] = b"FMAP1";

/// `height x width` cells of `dim` channels, row-major `(row, col, channel)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f32>,
    valid: Vec<bool>,
    pub frame_id: u32,
}

impl FeatureMap {
    /// All cells valid.
    pub fn new(height: usize, width: usize, dim: usize, data: Vec<f32>, frame_id: u32) -> Result<Self> {
        Self::with_mask(height, width, dim, data, vec![true; height * width], frame_id)
    }

    pub fn with_mask(
        height: usize,
        width: usize,
        dim: usize,
        data: Vec<f32>,
        valid: Vec<bool>,
        frame_id: u32,
    ) -> Result<Self> {
        if height == 0 || width == 0 || dim == 0 {
            return Err(Error::Dimension(format!("empty feature map {height}x{width}x{dim}")));
        }
        if data.len() != height * width * dim || valid.len() != height * width {
            return Err(Error::Dimension(format!(
                "{height}x{width}x{dim} map given {} values and {} mask entries",
                data.len(),
                valid.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric("feature map", format!("non-finite value at index {i}")));
        }
        Ok(Self {
            height,
            width,
            dim,
            data,
            valid,
            frame_id,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn cell(&self, i: usize, j: usize) -> &[f32] {
        let o = (i * self.width + j) * self.dim;
        &self.data[o..o + self.dim]
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        i < self.height && j < self.width && self.valid[i * self.width + j]
    }

    pub fn valid_cells(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|i| (0..self.width).map(move |j| (i, j)))
            .filter(|&(i, j)| self.valid[i * self.width + j])
            .collect()
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

pub fn encode_feature_map(map: &FeatureMap) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(21 + map.valid.len() + 4 * map.data.len());
    out.extend_from_slice(FMAP_MAGIC);
    binio::put_u32(&mut out, binio::to_u32(map.height, "height")?);
    binio::put_u32(&mut out, binio::to_u32(map.width, "width")?);
    binio::put_u32(&mut out, binio::to_u32(map.dim, "dim")?);
    binio::put_u32(&mut out, map.frame_id);
    out.extend(map.valid.iter().map(|&v| v as u8));
    binio::put_f32s(&mut out, &map.data);
    Ok(out)
}

pub fn decode_feature_map(bytes: &[u8]) -> Result<FeatureMap> {
    let mut r = Reader::new(bytes);
    r.magic(FMAP_MAGIC)?;
    let height = r.u32("height")? as usize;
    let width = r.u32("width")? as usize;
    let dim = r.u32("dim")? as usize;
    let frame_id = r.u32("frame id")?;
    if height == 0 || width == 0 || dim == 0 {
        return Err(Error::format(5, format!("empty map {height}x{width}x{dim}")));
    }
    let cells = height
        .checked_mul(width)
        .ok_or_else(|| Error::format(5, "cell count overflow"))?;
    let mask_at = r.offset();
    let mask = r.take(cells, "valid mask")?;
    let mut valid = Vec::with_capacity(cells);
    for (i, &b) in mask.iter().enumerate() {
        match b {
            0 => valid.push(false),
            1 => valid.push(true),
            _ => return Err(Error::format(mask_at + i as u64, format!("mask byte {b} is not 0 or 1"))),
        }
    }
    let data_at = r.offset();
    let n = cells
        .checked_mul(dim)
        .ok_or_else(|| Error::format(13, "value count overflow"))?;
    let data = r.f32s(n, "feature values")?;
    r.finish()?;
    if let Some(off) = binio::first_non_finite(&data, data_at) {
        return Err(Error::format(off, "non-finite feature value"));
    }
    FeatureMap::with_mask(height, width, dim, data, valid, frame_id)
}

pub fn save_feature_map(path: &Path, map: &FeatureMap) -> Result<()> {
    binio::write_file(path, &encode_feature_map(map)?)
}

pub fn load_feature_map(path: &Path) -> Result<FeatureMap> {
    decode_feature_map(&binio::read_file(path)?)
}

/// Marks a frame of `margin_h` rows and `margin_w` columns invalid.
pub fn crop_padding(map: &FeatureMap, margin_h: usize, margin_w: usize) -> Result<FeatureMap> {
    if 2 * margin_h >= map.height || 2 * margin_w >= map.width {
        return Err(Error::Dimension(format!(
            "margins ({margin_h}, {margin_w}) leave nothing of a {}x{} map",
            map.height, map.width
        )));
    }
    let mut out = map.clone();
    for i in 0..map.height {
        for j in 0..map.width {
            if i < margin_h || i >= map.height - margin_h || j < margin_w || j >= map.width - margin_w {
                out.valid[i * map.width + j] = false;
            }
        }
    }
    Ok(out)
}

/// Continuous image coordinates `(u, v)` of the center of cell `(i, j)`,
/// where the image spans `[0, W] x [0, H]`.
pub fn feature_pixel_to_ray(i: usize, j: usize, map: &FeatureMap, cam: &Camera) -> Result<(f64, f64)> {
    if !map.is_valid(i, j) {
        return Err(Error::Lookup(format!("cell ({i}, {j}) is not a valid feature pixel")));
    }
    Ok(cell_center(i, j, map.height, map.width, cam))
}

pub(crate) fn cell_center(i: usize, j: usize, h: usize, w: usize, cam: &Camera) -> (f64, f64) {
    (
        (j as f64 + 0.5) * cam.width as f64 / w as f64,
        (i as f64 + 0.5) * cam.height as f64 / h as f64,
    )
}

/// Bilinear interpolation at normalized position `zeta = (x, y)` in `[0,1]^2`,
/// with `x` along the width. Cell `(i, j)` sits at `((j+0.5)/W', (i+0.5)/H')`.
/// Invalid neighbours are dropped and the remaining weights renormalized.
pub fn bilinear_query(map: &FeatureMap, zeta: [f64; 2]) -> Result<Vec<f32>> {
    if !(0.0..=1.0).contains(&zeta[0]) || !(0.0..=1.0).contains(&zeta[1]) {
        return Err(Error::Input(format!("query position {zeta:?} outside [0,1]^2")));
    }
    let x = (zeta[0] * map.width as f64 - 0.5).clamp(0.0, (map.width - 1) as f64);
    let y = (zeta[1] * map.height as f64 - 0.5).clamp(0.0, (map.height - 1) as f64);
    let (j0, i0) = (x.floor() as usize, y.floor() as usize);
    let (j1, i1) = ((j0 + 1).min(map.width - 1), (i0 + 1).min(map.height - 1));
    let (fx, fy) = (x - j0 as f64, y - i0 as f64);
    let corners = [
        (i0, j0, (1.0 - fy) * (1.0 - fx)),
        (i0, j1, (1.0 - fy) * fx),
        (i1, j0, fy * (1.0 - fx)),
        (i1, j1, fy * fx),
    ];
    let valid: Vec<_> = corners.iter().filter(|c| map.is_valid(c.0, c.1)).collect();
    if valid.is_empty() {
        return Err(Error::Lookup(format!("no valid cell around {zeta:?}")));
    }
    let total: f64 = valid.iter().map(|c| c.2).sum();
    let mut out = vec![0.0f64; map.dim];
    for &&(i, j, w) in &valid {
        // Zero total weight only happens when the query sits on an invalid cell; average the rest.
        let w = if total > 1e-12 { w / total } else { 1.0 / valid.len() as f64 };
        for (o, v) in out.iter_mut().zip(map.cell(i, j)) {
            *o += w * *v as f64;
        }
    }
    Ok(out.into_iter().map(|v| v as f32).collect())
}
