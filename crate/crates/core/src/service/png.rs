use png::{BitDepth, ColorType, Encoder};

use crate::error::{Error, Result};
use crate::renderer::VOID_LABEL;

/// Fixed class colors, indexed by class id.
pub const PALETTE: [[u8; 3]; 16] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
];

/// Palette index used for void pixels.
pub const VOID_INDEX: u8 = 16;
const VOID_COLOR: [u8; 3] = [0, 0, 0];

fn encode(width: usize, height: usize, color: ColorType, depth: BitDepth, palette: Option<Vec<u8>>, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        if let Some(p) = palette {
            enc.set_palette(p);
        }
        let mut w = enc
            .write_header()
            .map_err(|e| Error::Input(format!("png header: {e}")))?;
        w.write_image_data(data)
            .map_err(|e| Error::Input(format!("png data: {e}")))?;
    }
    Ok(out)
}

/// 16-bit grayscale, one unit per millimetre, saturating at 65.535 m.
pub fn depth_png(width: usize, height: usize, depth: &[f32]) -> Result<Vec<u8>> {
    let mut data = Vec::with_capacity(depth.len() * 2);
    for &d in depth {
        let mm = (d as f64 * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16;
        data.extend_from_slice(&mm.to_be_bytes());
    }
    encode(width, height, ColorType::Grayscale, BitDepth::Sixteen, None, &data)
}

/// Paletted labels; void maps to [`VOID_INDEX`].
pub fn label_png(width: usize, height: usize, labels: &[u16]) -> Result<Vec<u8>> {
    let mut palette: Vec<u8> = PALETTE.iter().flatten().copied().collect();
    palette.extend_from_slice(&VOID_COLOR);
    let data: Vec<u8> = labels
        .iter()
        .map(|&l| if l == VOID_LABEL || l as usize >= PALETTE.len() { VOID_INDEX } else { l as u8 })
        .collect();
    encode(width, height, ColorType::Indexed, BitDepth::Eight, Some(palette), &data)
}

/// First three channels of `values` (stride `channels`), each min-max normalized.
pub fn feature_png(width: usize, height: usize, channels: usize, values: &[f32]) -> Result<Vec<u8>> {
    let n = width * height;
    let mut data = vec![0u8; n * 3];
    for c in 0..channels.min(3) {
        let ch = || (0..n).map(|i| values[i * channels + c]);
        let lo = ch().fold(f32::INFINITY, f32::min);
        let hi = ch().fold(f32::NEG_INFINITY, f32::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        for (i, v) in ch().enumerate() {
            data[i * 3 + c] = (((v - lo) / span) * 255.0).round() as u8;
        }
    }
    encode(width, height, ColorType::Rgb, BitDepth::Eight, None, &data)
}
