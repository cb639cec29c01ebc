use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::renderer::Camera;

/// A click on keyframe pixel `(u, v)`; click `i` defines class `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Click {
    pub keyframe_id: u32,
    pub u: u32,
    pub v: u32,
    pub class_id: u16,
}

/// One click per class; classes are created in click order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClickRegistry {
    clicks: Vec<Click>,
    class_names: Vec<String>,
    max_classes: usize,
}

impl ClickRegistry {
    pub fn new(max_classes: usize) -> Self {
        Self {
            clicks: Vec::new(),
            class_names: Vec::new(),
            max_classes,
        }
    }

    pub fn n_active_classes(&self) -> usize {
        self.clicks.len()
    }

    pub fn max_classes(&self) -> usize {
        self.max_classes
    }

    pub fn clicks(&self) -> &[Click] {
        &self.clicks
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Registers a click and returns the new class id.
    pub fn add_click(&mut self, keyframe_id: u32, u: u32, v: u32, name: &str, cam: &Camera) -> Result<u16> {
        if self.clicks.len() >= self.max_classes {
            return Err(Error::Capacity(format!(
                "all {} classes are in use",
                self.max_classes
            )));
        }
        if u as usize >= cam.width || v as usize >= cam.height {
            return Err(Error::Input(format!(
                "click ({u}, {v}) outside the {}x{} image",
                cam.width, cam.height
            )));
        }
        let class_id = self.clicks.len() as u16;
        self.clicks.push(Click {
            keyframe_id,
            u,
            v,
            class_id,
        });
        self.class_names.push(if name.is_empty() {
            format!("class{class_id}")
        } else {
            name.to_string()
        });
        Ok(class_id)
    }
}
