use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Keyframe, MapperConfig, Supervision};
use crate::diffcore::ops::softmax_cross_entropy;
use crate::diffcore::Real;
use crate::error::{Error, Result};
use crate::features::cell_center;
use crate::renderer::graph::{backward, forward};
use crate::renderer::{generate_ray, Camera, Field, OutputGrads, RayBatch};
use crate::scene_field::FieldGrads;

/// Rays and targets for one step, laid out as `[feature | click | depth]`.
#[derive(Clone, Debug)]
pub struct TrainBatch {
    pub rays: RayBatch,
    pub n_feature: usize,
    pub n_click: usize,
    pub n_depth: usize,
    /// `n_feature x k`
    pub feature_targets: Vec<f32>,
    pub click_classes: Vec<u16>,
    /// Measured z-depth per depth ray; 0 is invalid.
    pub depth_targets: Vec<f32>,
    pub n_active: usize,
}

/// Builds the ray batch for a supervision selection with stratified quadrature.
pub fn assemble_batch<R: Rng>(
    keyframes: &[Keyframe],
    selection: &[Supervision],
    cam: &Camera,
    n_bins: usize,
    n_active: usize,
    rng: &mut R,
) -> TrainBatch {
    let mut feat_rays = Vec::new();
    let mut feature_targets = Vec::new();
    let mut click_rays = Vec::new();
    let mut click_classes = Vec::new();
    let mut depth_rays = Vec::new();
    let mut depth_targets = Vec::new();
    for s in selection {
        let kf = &keyframes[s.keyframe];
        let fm = &kf.features;
        for &(i, j) in &s.feature_cells {
            let (u, v) = cell_center(i, j, fm.height(), fm.width(), cam);
            feat_rays.push(generate_ray(cam, &kf.pose, u - 0.5, v - 0.5));
            feature_targets.extend_from_slice(fm.cell(i, j));
        }
        for c in s.clicks.iter().filter(|c| (c.class_id as usize) < n_active) {
            click_rays.push(generate_ray(cam, &kf.pose, c.u as f64, c.v as f64));
            click_classes.push(c.class_id);
        }
        for &(u, v) in &s.depth_pixels {
            depth_rays.push(generate_ray(cam, &kf.pose, u as f64, v as f64));
            depth_targets.push(kf.depth.at(u as usize, v as usize));
        }
    }
    let (n_feature, n_click, n_depth) = (feat_rays.len(), click_rays.len(), depth_rays.len());
    let mut rays = feat_rays;
    rays.extend(click_rays);
    rays.extend(depth_rays);
    let mut batch = RayBatch::new(rays, cam.near, cam.far, n_bins, Some(rng));
    batch.latent_rays = n_feature;
    batch.upsample = n_feature > 0;
    batch.semantic_rays = n_feature..n_feature + n_click;
    TrainBatch {
        rays: batch,
        n_feature,
        n_click,
        n_depth,
        feature_targets,
        click_classes,
        depth_targets,
        n_active,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub depth: f64,
    pub feat: f64,
    pub sem: f64,
    pub total: f64,
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numeric(name, format!("loss is {v}")))
    }
}

/// L1 depth over valid depth rays, squared L2 feature distance (summed over
/// all k channels, averaged over feature rays) and cross-entropy over the
/// active classes at click rays. Gradients are returned when `with_grads`.
pub fn compute_losses<T: Real>(
    field: &Field<'_, T>,
    batch: &TrainBatch,
    cfg: &MapperConfig,
    with_grads: bool,
) -> Result<(Losses, Option<FieldGrads<T>>)> {
    let nr = batch.rays.n_rays();
    if nr == 0 {
        return Err(Error::State("empty training batch".into()));
    }
    let k = field.weights.config().feature_dim;
    let c = field.weights.config().max_classes;
    if batch.feature_targets.len() != batch.n_feature * k {
        return Err(Error::Dimension(format!(
            "feature targets have {} values for {} rays of dim {k}",
            batch.feature_targets.len(),
            batch.n_feature
        )));
    }
    let (out, tape) = forward(field, &batch.rays, with_grads);

    let d0 = batch.n_feature + batch.n_click;
    let n_valid = batch.depth_targets.iter().filter(|&&d| d > 0.0).count();
    let mut g_depth = vec![T::zero(); nr];
    let mut l_depth = 0.0;
    if n_valid > 0 {
        let scale = cfg.lambda_depth / n_valid as f64;
        for (r, &target) in batch.depth_targets.iter().enumerate() {
            if target > 0.0 {
                let diff = out.depth[d0 + r].as_f64() - target as f64;
                l_depth += diff.abs();
                // subgradient 0 at the kink
                let sign = if diff > 0.0 { 1.0 } else if diff < 0.0 { -1.0 } else { 0.0 };
                g_depth[d0 + r] = T::of(scale * sign);
            }
        }
        l_depth /= n_valid as f64;
    }

    let mut g_feat = vec![T::zero(); batch.n_feature * k];
    let mut l_feat = 0.0;
    if batch.n_feature > 0 {
        let scale = 2.0 * cfg.lambda_feat / batch.n_feature as f64;
        for (i, (&f, &t)) in out.features.iter().zip(&batch.feature_targets).enumerate() {
            let diff = f.as_f64() - t as f64;
            l_feat += diff * diff;
            g_feat[i] = T::of(scale * diff);
        }
        l_feat /= batch.n_feature as f64;
    }

    let mut g_logits = vec![T::zero(); batch.n_click * c];
    let mut l_sem = 0.0;
    if batch.n_click > 0 {
        let na = batch.n_active;
        let scale = T::of(cfg.lambda_sem / batch.n_click as f64);
        for (r, &cls) in batch.click_classes.iter().enumerate() {
            let logits = &out.logits[r * c..r * c + na];
            let (l, g) = softmax_cross_entropy(logits, cls as usize);
            l_sem += l.as_f64();
            for (dst, gv) in g_logits[r * c..r * c + na].iter_mut().zip(g) {
                *dst = gv * scale;
            }
        }
        l_sem /= batch.n_click as f64;
    }

    let losses = Losses {
        depth: finite("depth loss", l_depth)?,
        feat: finite("feature loss", l_feat)?,
        sem: finite("semantic loss", l_sem)?,
        total: finite(
            "total loss",
            cfg.lambda_depth * l_depth + cfg.lambda_feat * l_feat + cfg.lambda_sem * l_sem,
        )?,
    };
    let grads = tape.map(|t| {
        backward(
            field,
            &batch.rays,
            &out,
            &t,
            &OutputGrads {
                depth: g_depth,
                features: g_feat,
                logits: g_logits,
            },
        )
    });
    Ok((losses, grads))
}
