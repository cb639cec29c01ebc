use crate::error::{Error, Result};
use crate::renderer::{render_pixels, strided_pixels, Camera, Field, Pose, Wanted, VOID_LABEL};

/// Per-pixel labels (with [`VOID_LABEL`]) and max-probability confidences.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationResult {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u16>,
    pub confidence: Vec<f32>,
}

/// Softmax over the first `n_active` logits; returns the argmax (lowest
/// index on ties) and its probability.
pub fn classify_logits(logits: &[f32], n_active: usize) -> (u16, f32) {
    let active = &logits[..n_active.min(logits.len())];
    let mut best = 0;
    for (c, &l) in active.iter().enumerate().skip(1) {
        if l > active[best] {
            best = c;
        }
    }
    let max = active[best] as f64;
    let z: f64 = active.iter().map(|&l| (l as f64 - max).exp()).sum();
    (best as u16, (1.0 / z) as f32)
}

/// Renders semantic logits at `stride` and labels every pixel. Pixels whose
/// accumulated opacity is below one half are void.
pub fn segment_view(
    field: &Field<'_, f32>,
    cam: &Camera,
    pose: &Pose,
    n_active: usize,
    stride: usize,
    n_bins: usize,
) -> Result<SegmentationResult> {
    let c = field.weights.config().max_classes;
    if n_active == 0 || n_active > c {
        return Err(Error::Input(format!("n_active = {n_active} must lie in 1..={c}")));
    }
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let (pixels, width, height) = strided_pixels(cam, stride);
    let r = render_pixels(
        field,
        cam,
        pose,
        &pixels,
        n_bins,
        Wanted {
            logits: true,
            ..Wanted::default()
        },
    );
    let mut labels = Vec::with_capacity(pixels.len());
    let mut confidence = Vec::with_capacity(pixels.len());
    for (i, &acc) in r.acc.iter().enumerate() {
        if acc < 0.5 {
            labels.push(VOID_LABEL);
            confidence.push(0.0);
        } else {
            let (l, p) = classify_logits(&r.logits[i * c..(i + 1) * c], n_active);
            labels.push(l);
            confidence.push(p);
        }
    }
    Ok(SegmentationResult {
        width,
        height,
        labels,
        confidence,
    })
}
