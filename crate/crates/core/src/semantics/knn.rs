use crate::error::{Error, Result};
use crate::features::{bilinear_query, FeatureMap};
use crate::renderer::{Camera, VOID_LABEL};
use crate::simio::LabelImage;

/// One anchor feature per active class.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorSet {
    anchors: Vec<Vec<f32>>,
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

impl AnchorSet {
    pub fn new(anchors: Vec<Vec<f32>>) -> Result<Self> {
        let dim = anchors.first().map_or(0, Vec::len);
        for (i, a) in anchors.iter().enumerate() {
            if a.len() != dim {
                return Err(Error::Dimension(format!("anchor {i} has {} values, expected {dim}", a.len())));
            }
            if a.iter().any(|x| !x.is_finite()) {
                return Err(Error::numeric(format!("anchor {i}"), "non-finite entry"));
            }
            if norm(a) == 0.0 {
                return Err(Error::numeric(format!("anchor {i}"), "zero-norm feature"));
            }
        }
        Ok(Self { anchors })
    }

    /// Samples `map` at each normalized click position `zeta = (x, y)`.
    pub fn from_clicks(map: &FeatureMap, zetas: &[[f64; 2]]) -> Result<Self> {
        Self::new(zetas.iter().map(|&z| bilinear_query(map, z)).collect::<Result<_>>()?)
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Class of the anchor with the largest cosine similarity; ties go to the lower id.
    pub fn classify(&self, feature: &[f32]) -> Result<u16> {
        if self.anchors.is_empty() {
            return Err(Error::State("no anchors to classify against".into()));
        }
        let nf = norm(feature);
        if nf == 0.0 || !nf.is_finite() {
            return Err(Error::numeric("knn query", format!("feature norm is {nf}")));
        }
        let mut best = (0u16, f64::NEG_INFINITY);
        for (c, a) in self.anchors.iter().enumerate() {
            let dot: f64 = a.iter().zip(feature).map(|(&x, &y)| x as f64 * y as f64).sum();
            let cos = dot / (norm(a) * nf);
            if cos > best.1 {
                best = (c as u16, cos);
            }
        }
        Ok(best.0)
    }
}

/// Normalized position of the center of pixel `(u, v)`.
pub fn pixel_to_zeta(u: u32, v: u32, cam: &Camera) -> [f64; 2] {
    [(u as f64 + 0.5) / cam.width as f64, (v as f64 + 0.5) / cam.height as f64]
}

/// 1-NN cosine labelling of every cell of `target`; invalid cells are void.
/// Returns a row-major `height x width` grid of cell labels.
pub fn knn_baseline(anchor_map: &FeatureMap, zetas: &[[f64; 2]], target: &FeatureMap) -> Result<Vec<u16>> {
    if anchor_map.dim() != target.dim() {
        return Err(Error::Dimension(format!(
            "anchor features have dimension {}, target {}",
            anchor_map.dim(),
            target.dim()
        )));
    }
    let anchors = AnchorSet::from_clicks(anchor_map, zetas)?;
    let mut out = Vec::with_capacity(target.height() * target.width());
    for i in 0..target.height() {
        for j in 0..target.width() {
            out.push(if target.is_valid(i, j) {
                anchors.classify(target.cell(i, j))?
            } else {
                VOID_LABEL
            });
        }
    }
    Ok(out)
}

/// Nearest-neighbour upsampling of a coarse label grid to the camera resolution.
pub fn upsample_labels(cells: &[u16], coarse_h: usize, coarse_w: usize, cam: &Camera) -> Result<LabelImage> {
    if cells.len() != coarse_h * coarse_w || cells.is_empty() {
        return Err(Error::Dimension(format!(
            "{} labels for a {coarse_h}x{coarse_w} grid",
            cells.len()
        )));
    }
    let mut data = Vec::with_capacity(cam.width * cam.height);
    for y in 0..cam.height {
        let i = ((y as f64 + 0.5) * coarse_h as f64 / cam.height as f64) as usize;
        for x in 0..cam.width {
            let j = ((x as f64 + 0.5) * coarse_w as f64 / cam.width as f64) as usize;
            data.push(cells[i.min(coarse_h - 1) * coarse_w + j.min(coarse_w - 1)]);
        }
    }
    LabelImage::new(cam.width, cam.height, data)
}
