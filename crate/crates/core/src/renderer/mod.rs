//! Pinhole rays, quadrature and volumetric rendering of depth, latent
//! features, upsampled features and semantic logits.

mod camera;
pub mod graph;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::ops::softplus;
use crate::diffcore::Real;
use crate::error::{Error, Result};
use crate::scene_field::{Aabb, EncodingBasis, FieldView};

pub use camera::{generate_ray, Camera, Pose, Ray};
pub(crate) use camera::{dot, sub};
pub use graph::{BatchOutput, OutputGrads, RayBatch};

/// Label written for pixels whose accumulated opacity is below one half.
pub const VOID_LABEL: u16 = u16::MAX - 1;

/// Default samples per ray.
pub const DEFAULT_BINS: usize = 32;

/// Weights plus the geometry they are evaluated in.
#[derive(Clone, Debug)]
pub struct Field<'a, T> {
    pub weights: FieldView<'a, T>,
    pub basis: &'a EncodingBasis,
    pub bounds: Aabb,
}

impl<'a, T: Real> Field<'a, T> {
    pub fn new(weights: FieldView<'a, T>, basis: &'a EncodingBasis, bounds: Aabb) -> Result<Self> {
        if basis.output_dim() != weights.enc_dim() {
            return Err(Error::Config(format!(
                "basis encodes {} values but the field expects {}",
                basis.output_dim(),
                weights.enc_dim()
            )));
        }
        Ok(Self { weights, basis, bounds })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    Stratified { seed: u64 },
    Midpoint,
}

/// Sample depths and their spacings along the optical axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Bins {
    pub depths: Vec<f64>,
    pub deltas: Vec<f64>,
}

pub(crate) fn bins_with(near: f64, far: f64, n: usize, mut jitter: impl FnMut(usize) -> f64) -> Bins {
    let width = (far - near) / n as f64;
    let depths: Vec<f64> = (0..n).map(|i| near + (i as f64 + jitter(i)) * width).collect();
    let deltas = (0..n)
        .map(|i| if i + 1 < n { depths[i + 1] - depths[i] } else { far - depths[i] })
        .collect();
    Bins { depths, deltas }
}

/// Splits `[near, far]` into `n_bins` equal bins and places one sample per bin.
pub fn sample_bins(cam: &Camera, mode: SampleMode, n_bins: usize) -> Result<Bins> {
    if n_bins == 0 {
        return Err(Error::Config("at least one bin per ray is required".into()));
    }
    Ok(match mode {
        SampleMode::Midpoint => bins_with(cam.near, cam.far, n_bins, |_| 0.5),
        SampleMode::Stratified { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Keep draws strictly inside the bin so spacings stay positive.
            bins_with(cam.near, cam.far, n_bins, |_| rng.random_range(1e-6..1.0 - 1e-6))
        }
    })
}

/// Termination probabilities `o_i = 1 - exp(-rho_i delta_i)` and weights
/// `w_i = o_i prod_{j<i} (1 - o_j)`.
pub fn compute_weights(rho: &[f64], delta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if rho.len() != delta.len() {
        return Err(Error::Dimension(format!(
            "{} densities for {} spacings",
            rho.len(),
            delta.len()
        )));
    }
    if let Some(i) = rho.iter().position(|r| !(*r >= 0.0)) {
        return Err(Error::numeric("compute_weights", format!("density {} at sample {i}", rho[i])));
    }
    let (o, _, w) = graph::composite(rho, delta);
    Ok((o, w))
}

/// Per-ray quadrature record.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub depths: Vec<f64>,
    pub deltas: Vec<f64>,
    pub densities: Vec<f64>,
    pub term_probs: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RayRender {
    pub depth: f32,
    pub latent: Vec<f32>,
    pub logits: Vec<f32>,
    pub acc: f32,
    pub clamped: bool,
    pub samples: RaySamples,
}

fn single_ray_batch(ray: &Ray, bins: &Bins) -> RayBatch {
    RayBatch {
        rays: vec![*ray],
        n_bins: bins.depths.len(),
        depths: bins.depths.clone(),
        deltas: bins.deltas.iter().map(|d| d * ray.dist_per_depth).collect(),
        latent_rays: 1,
        semantic_rays: 0..1,
        upsample: false,
    }
}

/// Renders depth, latent feature, logits and opacity along one ray.
pub fn render_ray(field: &Field<'_, f32>, ray: &Ray, bins: &Bins) -> RayRender {
    let batch = single_ray_batch(ray, bins);
    let (out, tape) = graph::forward(field, &batch, true);
    let tape = tape.expect("tape requested");
    let densities: Vec<f64> = tape.raw.iter().map(|&r| softplus(r) as f64).collect();
    RayRender {
        depth: out.depth[0],
        acc: out.acc[0],
        clamped: out.clamped[0],
        samples: RaySamples {
            depths: batch.depths.clone(),
            deltas: batch.deltas.clone(),
            densities,
            term_probs: tape.opacity.iter().map(|&v| v as f64).collect(),
            weights: tape.weights.iter().map(|&v| v as f64).collect(),
        },
        latent: out.latent,
        logits: out.logits,
    }
}

/// Transient feature storage used while rendering one feature pixel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FeatureBufferStats {
    pub per_sample_elems: usize,
    pub per_ray_elems: usize,
}

/// `G(sum_i w_i f_i)`: the k-dim feature is produced once per ray.
pub fn render_feature_pixel(field: &Field<'_, f32>, ray: &Ray, bins: &Bins) -> (Vec<f32>, FeatureBufferStats) {
    let mut batch = single_ray_batch(ray, bins);
    batch.semantic_rays = 0..0;
    batch.upsample = true;
    let (out, _) = graph::forward(field, &batch, false);
    let stats = FeatureBufferStats {
        per_sample_elems: out.per_sample_feature_elems,
        per_ray_elems: out.latent.len() + out.features.len(),
    };
    (out.features, stats)
}

/// Reference path that upsamples every sample before compositing:
/// `sum_i w_i G(f_i)`. Materializes `N_bins x k` values.
pub fn render_feature_pixel_naive(field: &Field<'_, f32>, ray: &Ray, bins: &Bins) -> (Vec<f32>, FeatureBufferStats) {
    let r = render_ray(field, ray, bins);
    let nb = bins.depths.len();
    let view = &field.weights;
    let h = view.config().latent_dim;
    let k = view.config().feature_dim;
    let points: Vec<[f64; 3]> = bins
        .depths
        .iter()
        .map(|&d| field.bounds.normalize(ray.at_depth(d)).0)
        .collect();
    let samples = view.forward_points(field.basis, &points).expect("basis checked");
    let latents: Vec<f32> = samples.iter().flat_map(|s| s.latent.iter().copied()).collect();
    debug_assert_eq!(latents.len(), nb * h);
    let per_sample = view.upsample(&latents, nb);
    let mut out = vec![0.0f32; k];
    for i in 0..nb {
        let w = r.samples.weights[i] as f32;
        for (o, v) in out.iter_mut().zip(&per_sample[i * k..(i + 1) * k]) {
            *o += w * v;
        }
    }
    let stats = FeatureBufferStats {
        per_sample_elems: per_sample.len(),
        per_ray_elems: out.len(),
    };
    (out, stats)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViewMode {
    Depth,
    /// Argmax over the first `n_active` logits; void where opacity < 0.5.
    SemanticArgmax { n_active: usize },
    SemanticLogits,
    FeatureLatent,
    FeatureFull,
}

impl std::str::FromStr for ViewMode {
    type Err = Error;

    /// Parses the mode names used on the wire; argmax defaults to no active classes.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "depth" => ViewMode::Depth,
            "semantic_argmax" | "semantic" => ViewMode::SemanticArgmax { n_active: 0 },
            "semantic_logits" => ViewMode::SemanticLogits,
            "feature_latent" | "feature" => ViewMode::FeatureLatent,
            "feature_full" => ViewMode::FeatureFull,
            other => return Err(Error::Config(format!("unknown render mode {other:?}"))),
        })
    }
}

/// Interleaved `height x width x channels` image.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Raster<T> {
    pub fn new(width: usize, height: usize, channels: usize, fill: T) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![fill; width * height * channels],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> &[T] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[(y * self.width + x) * self.channels]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ViewImage {
    Values(Raster<f32>),
    Labels(Raster<u16>),
}

/// Everything rendered for a set of pixels.
#[derive(Clone, Debug, Default)]
pub struct PixelRender {
    pub depth: Vec<f32>,
    pub acc: Vec<f32>,
    pub latent: Vec<f32>,
    pub features: Vec<f32>,
    pub logits: Vec<f32>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Wanted {
    pub latent: bool,
    pub features: bool,
    pub logits: bool,
}

const RAY_CHUNK: usize = 512;

/// Renders arbitrary pixels with midpoint quadrature, in fixed-size chunks.
pub fn render_pixels(
    field: &Field<'_, f32>,
    cam: &Camera,
    pose: &Pose,
    pixels: &[(f64, f64)],
    n_bins: usize,
    wanted: Wanted,
) -> PixelRender {
    let mut out = PixelRender::default();
    for chunk in pixels.chunks(RAY_CHUNK) {
        let rays: Vec<Ray> = chunk.iter().map(|&(u, v)| generate_ray(cam, pose, u, v)).collect();
        let n = rays.len();
        let mut batch = RayBatch::new::<ChaCha8Rng>(rays, cam.near, cam.far, n_bins, None);
        if wanted.latent || wanted.features {
            batch.latent_rays = n;
            batch.upsample = wanted.features;
        }
        if wanted.logits {
            batch.semantic_rays = 0..n;
        }
        let (o, _) = graph::forward(field, &batch, false);
        out.depth.extend(o.depth);
        out.acc.extend(o.acc);
        if wanted.latent {
            out.latent.extend(o.latent);
        }
        out.features.extend(o.features);
        out.logits.extend(o.logits);
    }
    out
}

/// Pixel coordinates rendered at `stride`, row-major, and the output size.
pub fn strided_pixels(cam: &Camera, stride: usize) -> (Vec<(f64, f64)>, usize, usize) {
    let w = cam.width.div_ceil(stride);
    let h = cam.height.div_ceil(stride);
    let mut px = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            px.push(((x * stride) as f64, (y * stride) as f64));
        }
    }
    (px, w, h)
}

/// Argmax over the first `n_active` entries; ties go to the lower index.
pub fn argmax_active(logits: &[f32], n_active: usize) -> usize {
    let mut best = 0;
    for c in 1..n_active.min(logits.len()) {
        if logits[c] > logits[best] {
            best = c;
        }
    }
    best
}

pub fn render_view(
    field: &Field<'_, f32>,
    cam: &Camera,
    pose: &Pose,
    mode: ViewMode,
    stride: usize,
    n_bins: usize,
) -> Result<ViewImage> {
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    cam.validate()?;
    let (pixels, w, h) = strided_pixels(cam, stride);
    let cfg = *field.weights.config();
    let wanted = match mode {
        ViewMode::Depth => Wanted::default(),
        ViewMode::SemanticArgmax { .. } | ViewMode::SemanticLogits => Wanted {
            logits: true,
            ..Wanted::default()
        },
        ViewMode::FeatureLatent => Wanted {
            latent: true,
            ..Wanted::default()
        },
        ViewMode::FeatureFull => Wanted {
            features: true,
            ..Wanted::default()
        },
    };
    let r = render_pixels(field, cam, pose, &pixels, n_bins, wanted);
    Ok(match mode {
        ViewMode::Depth => ViewImage::Values(Raster {
            width: w,
            height: h,
            channels: 1,
            data: r.depth,
        }),
        ViewMode::SemanticLogits => ViewImage::Values(Raster {
            width: w,
            height: h,
            channels: cfg.max_classes,
            data: r.logits,
        }),
        ViewMode::FeatureLatent => ViewImage::Values(Raster {
            width: w,
            height: h,
            channels: cfg.latent_dim,
            data: r.latent,
        }),
        ViewMode::FeatureFull => ViewImage::Values(Raster {
            width: w,
            height: h,
            channels: cfg.feature_dim,
            data: r.features,
        }),
        ViewMode::SemanticArgmax { n_active } => {
            let c = cfg.max_classes;
            let data = (0..pixels.len())
                .map(|i| {
                    if n_active == 0 || r.acc[i] < 0.5 {
                        VOID_LABEL
                    } else {
                        argmax_active(&r.logits[i * c..(i + 1) * c], n_active) as u16
                    }
                })
                .collect();
            ViewImage::Labels(Raster {
                width: w,
                height: h,
                channels: 1,
                data,
            })
        }
    })
}
