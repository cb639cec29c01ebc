use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{assemble_batch, compute_losses, keyframe_decision, mix_seed, select_supervision, Keyframe, MapperConfig};
use crate::diffcore::adam_step;
use crate::error::{Error, Result};
use crate::features::{crop_padding, FeatureMap};
use crate::renderer::{render_pixels, strided_pixels, Camera, Field, Pose, Wanted};
use crate::scene_field::{Aabb, EncodingBasis, FieldConfig, SceneParams};
use crate::semantics::ClickRegistry;
use crate::simio::DepthImage;

/// Everything the mapping thread owns.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub cfg: MapperConfig,
    pub params: SceneParams,
    pub basis: EncodingBasis,
    pub bounds: Aabb,
    pub cam: Camera,
    pub keyframes: Vec<Keyframe>,
    pub registry: ClickRegistry,
    pub step: u64,
}

impl TrainState {
    pub fn new(field_cfg: FieldConfig, cfg: MapperConfig, cam: Camera, bounds: Aabb) -> Result<Self> {
        cfg.validate()?;
        cam.validate()?;
        let basis = field_cfg.basis()?;
        let params = SceneParams::new(field_cfg, &basis, cfg.seed)?;
        Ok(Self {
            registry: ClickRegistry::new(field_cfg.max_classes),
            cfg,
            params,
            basis,
            bounds,
            cam,
            keyframes: Vec::new(),
            step: 0,
        })
    }

    pub fn field(&self) -> Result<Field<'_, f32>> {
        Field::new(self.params.view(), &self.basis, self.bounds)
    }

    pub fn keyframe_index(&self, frame_id: u32) -> Option<usize> {
        self.keyframes.iter().position(|k| k.frame_id == frame_id)
    }

    /// Registers a click on keyframe `keyframe_id`; returns the new class id.
    pub fn add_click(&mut self, keyframe_id: u32, u: u32, v: u32, name: &str) -> Result<u16> {
        let idx = self
            .keyframe_index(keyframe_id)
            .ok_or_else(|| Error::Lookup(format!("no keyframe with frame id {keyframe_id}")))?;
        let class_id = self.registry.add_click(keyframe_id, u, v, name, &self.cam)?;
        let click = *self.registry.clicks().last().expect("click was just added");
        self.keyframes[idx].clicks.push(click);
        Ok(class_id)
    }
}

/// A posed frame as it arrives from the sensor and front-end.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameInput {
    pub frame_id: u32,
    pub pose: Pose,
    pub depth: DepthImage,
    pub features: FeatureMap,
}

/// One JSON-lines record per step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    #[serde(rename = "L_depth")]
    pub l_depth: f64,
    #[serde(rename = "L_feat")]
    pub l_feat: f64,
    #[serde(rename = "L_sem")]
    pub l_sem: f64,
    #[serde(rename = "L_total")]
    pub l_total: f64,
    pub n_keyframes: usize,
    pub ms: f64,
}

/// Selects supervision, evaluates the joint loss and applies one Adam update
/// to every block. Nothing is modified if any gradient is non-finite.
pub fn mapping_step(state: &mut TrainState) -> Result<StepMetrics> {
    let t0 = Instant::now();
    let cfg = &state.cfg;
    let seed = mix_seed(cfg.seed, state.step);
    let selection = select_supervision(&state.keyframes, &state.cam, cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1));
    let batch = assemble_batch(
        &state.keyframes,
        &selection,
        &state.cam,
        cfg.n_bins,
        state.registry.n_active_classes(),
        &mut rng,
    );
    let (losses, grads) = {
        let field = state.field()?;
        compute_losses(&field, &batch, cfg, true)?
    };
    let grads = grads.expect("gradients were requested");
    for (block, g) in state.params.blocks().iter().zip(&grads.mats) {
        if let Some(pos) = g.as_slice().iter().position(|x| !x.is_finite()) {
            return Err(Error::numeric(
                block.name.clone(),
                format!("non-finite gradient at flat index {pos}"),
            ));
        }
    }
    state.params.zero_grads();
    state.params.accumulate_grads(&grads)?;
    let adam = state.cfg.adam;
    for block in state.params.blocks_mut() {
        adam_step(block, &adam)?;
    }
    state.step += 1;
    Ok(StepMetrics {
        step: state.step,
        l_depth: losses.depth,
        l_feat: losses.feat,
        l_sem: losses.sem,
        l_total: losses.total,
        n_keyframes: state.keyframes.len(),
        ms: t0.elapsed().as_secs_f64() * 1e3,
    })
}

/// Checks a frame against the current map and keeps it as a keyframe if it
/// is poorly explained. The first frame is always kept.
pub fn ingest_frame(state: &mut TrainState, frame: FrameInput) -> Result<bool> {
    frame.pose.validate()?;
    let cam = &state.cam;
    if frame.depth.width != cam.width || frame.depth.height != cam.height {
        return Err(Error::Dimension(format!(
            "depth is {}x{} but the camera is {}x{}",
            frame.depth.width, frame.depth.height, cam.width, cam.height
        )));
    }
    let k = state.params.config().feature_dim;
    if frame.features.dim() != k {
        return Err(Error::Dimension(format!(
            "feature map has dimension {} but the field produces {k}",
            frame.features.dim()
        )));
    }
    if let Some(pos) = frame.depth.data.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::Input(format!("depth pixel {pos} is not a valid depth")));
    }
    let [mh, mw] = state.cfg.crop_margin;
    let features = crop_padding(&frame.features, mh, mw)?;

    let add = if state.keyframes.is_empty() {
        true
    } else {
        let (pixels, _, _) = strided_pixels(cam, state.cfg.kf_eval_stride);
        let rendered = render_pixels(&state.field()?, cam, &frame.pose, &pixels, state.cfg.n_bins, Wanted::default());
        let measured: Vec<f32> = pixels
            .iter()
            .map(|&(u, v)| frame.depth.at(u as usize, v as usize))
            .collect();
        match keyframe_decision(&rendered.depth, &measured, &state.cfg) {
            Ok(d) => d,
            Err(Error::Evaluation(_)) => true,
            Err(e) => return Err(e),
        }
    };
    if add {
        state.keyframes.push(Keyframe {
            frame_id: frame.frame_id,
            pose: frame.pose,
            depth: frame.depth,
            features,
            clicks: Vec::new(),
        });
    }
    Ok(add)
}
