//! The online mapping loop: keyframes, supervision sampling, the joint loss
//! and training steps.

mod loss;
mod queue;
mod session;
mod state;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::AdamConfig;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::renderer::{Camera, Pose, DEFAULT_BINS};
use crate::semantics::Click;
use crate::simio::DepthImage;

pub use loss::{assemble_batch, compute_losses, Losses, TrainBatch};
pub use queue::FrameQueue;
pub use session::{AblationMode, RunSummary, Session};
pub use state::{ingest_frame, mapping_step, FrameInput, StepMetrics, TrainState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapperConfig {
    /// Relative depth error above which a pixel counts as badly explained.
    pub kf_rel_error_threshold: f64,
    /// A frame becomes a keyframe when more than this fraction of pixels is badly explained.
    pub kf_pixel_fraction: f64,
    pub n_depth_samples: usize,
    pub lambda_depth: f64,
    pub lambda_feat: f64,
    pub lambda_sem: f64,
    pub steps_per_frame: usize,
    pub kf_eval_stride: usize,
    pub keyframes_per_step: usize,
    /// Feature pixels per step, drawn from all valid cells of the selected keyframes.
    pub feature_budget: usize,
    pub n_bins: usize,
    /// Rows and columns of feature-map padding ignored at the border.
    pub crop_margin: [usize; 2],
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for MapperConfig {
    fn default() -> Self {
        Self {
            kf_rel_error_threshold: 0.1,
            kf_pixel_fraction: 0.65,
            n_depth_samples: 200,
            lambda_depth: 1.0,
            lambda_feat: 1.0,
            lambda_sem: 1.0,
            steps_per_frame: 10,
            kf_eval_stride: 8,
            keyframes_per_step: 4,
            feature_budget: 64,
            n_bins: DEFAULT_BINS,
            crop_margin: [1, 2],
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl MapperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kf_pixel_fraction > 0.0 && self.kf_pixel_fraction < 1.0) {
            return Err(Error::Config(format!(
                "kf_pixel_fraction {} must lie in (0, 1)",
                self.kf_pixel_fraction
            )));
        }
        if !(self.kf_rel_error_threshold > 0.0) {
            return Err(Error::Config("kf_rel_error_threshold must be positive".into()));
        }
        for (name, v) in [
            ("lambda_depth", self.lambda_depth),
            ("lambda_feat", self.lambda_feat),
            ("lambda_sem", self.lambda_sem),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be a non-negative number")));
            }
        }
        if self.n_depth_samples == 0 || self.n_bins == 0 || self.kf_eval_stride == 0 || self.keyframes_per_step == 0 {
            return Err(Error::Config(
                "n_depth_samples, n_bins, kf_eval_stride and keyframes_per_step must be positive".into(),
            ));
        }
        self.adam.validate()
    }
}

/// A retained frame and the supervision attached to it.
#[derive(Clone, Debug, PartialEq)]
pub struct Keyframe {
    pub frame_id: u32,
    pub pose: Pose,
    pub depth: DepthImage,
    /// Feature map with the padding frame already marked invalid.
    pub features: FeatureMap,
    pub clicks: Vec<Click>,
}

/// True iff strictly more than `kf_pixel_fraction` of the valid pixels have
/// relative depth error strictly above `kf_rel_error_threshold`.
pub fn keyframe_decision(rendered: &[f32], measured: &[f32], cfg: &MapperConfig) -> Result<bool> {
    if rendered.len() != measured.len() {
        return Err(Error::Dimension(format!(
            "{} rendered vs {} measured depths",
            rendered.len(),
            measured.len()
        )));
    }
    let mut valid = 0usize;
    let mut bad = 0usize;
    for (&r, &m) in rendered.iter().zip(measured) {
        if m > 0.0 {
            valid += 1;
            let e = ((r as f64) - (m as f64)).abs() / m as f64;
            if e > cfg.kf_rel_error_threshold {
                bad += 1;
            }
        }
    }
    if valid == 0 {
        return Err(Error::Evaluation("no valid depth pixels to judge the frame".into()));
    }
    Ok(bad as f64 / valid as f64 > cfg.kf_pixel_fraction)
}

/// `n` i.i.d. uniform integer pixels over the full image.
pub fn sample_depth_pixels(cam: &Camera, n: usize, seed: u64) -> Vec<(u32, u32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (
                rng.random_range(0..cam.width as u32),
                rng.random_range(0..cam.height as u32),
            )
        })
        .collect()
}

/// Supervision drawn from one keyframe for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Supervision {
    /// Index into the keyframe list.
    pub keyframe: usize,
    pub depth_pixels: Vec<(u32, u32)>,
    pub feature_cells: Vec<(usize, usize)>,
    pub clicks: Vec<Click>,
}

pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Picks keyframes for one step (always the latest, the rest uniformly
/// without replacement) and the pixels each one contributes.
pub fn select_supervision(
    keyframes: &[Keyframe],
    cam: &Camera,
    cfg: &MapperConfig,
    seed: u64,
) -> Result<Vec<Supervision>> {
    if keyframes.is_empty() {
        return Err(Error::State("no keyframes to train on".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latest = keyframes.len() - 1;
    let extra = (cfg.keyframes_per_step - 1).min(latest);
    let mut chosen = vec![latest];
    chosen.extend(index::sample(&mut rng, latest, extra).into_iter());

    let k = chosen.len();
    let mut out: Vec<Supervision> = chosen
        .iter()
        .enumerate()
        .map(|(slot, &kf)| {
            let n = cfg.n_depth_samples / k + usize::from(slot < cfg.n_depth_samples % k);
            Supervision {
                keyframe: kf,
                depth_pixels: sample_depth_pixels(cam, n, rng.random()),
                feature_cells: Vec::new(),
                clicks: keyframes[kf].clicks.clone(),
            }
        })
        .collect();

    if cfg.feature_budget > 0 && cfg.lambda_feat > 0.0 {
        let pool: Vec<(usize, (usize, usize))> = chosen
            .iter()
            .enumerate()
            .flat_map(|(slot, &kf)| keyframes[kf].features.valid_cells().into_iter().map(move |c| (slot, c)))
            .collect();
        let picks: Vec<usize> = if pool.len() <= cfg.feature_budget {
            (0..pool.len()).collect()
        } else {
            let mut p = index::sample(&mut rng, pool.len(), cfg.feature_budget).into_vec();
            p.sort_unstable();
            p
        };
        for i in picks {
            let (slot, cell) = pool[i];
            out[slot].feature_cells.push(cell);
        }
    }
    Ok(out)
}
