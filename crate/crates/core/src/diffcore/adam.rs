use super::ParamBlock;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam configuration {self:?}")))
        }
    }
}

/// One bias-corrected Adam update. Gradients are cleared afterwards.
///
/// The block is left untouched if any gradient entry is non-finite.
pub fn adam_step(block: &mut ParamBlock, cfg: &AdamConfig) -> Result<()> {
    cfg.validate()?;
    if let Some(pos) = block.grads.as_slice().iter().position(|g| !g.is_finite()) {
        return Err(Error::numeric(
            block.name.clone(),
            format!("non-finite gradient at flat index {pos}"),
        ));
    }
    let t = block.step_count + 1;
    let bc1 = 1.0 - (cfg.beta1 as f64).powi(t as i32);
    let bc2 = 1.0 - (cfg.beta2 as f64).powi(t as i32);
    let step = (cfg.learning_rate as f64 / bc1) as f32;
    let inv_bc2 = (1.0 / bc2) as f32;
    let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.epsilon);

    let values = block.values.as_mut_slice();
    let grads = block.grads.as_mut_slice();
    let m = block.adam_m.as_mut_slice();
    let v = block.adam_v.as_mut_slice();
    for i in 0..values.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        values[i] -= step * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
        grads[i] = 0.0;
    }
    block.step_count = t;
    Ok(())
}
