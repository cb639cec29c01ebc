use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio;
use crate::error::{Error, Result};

/// One scripted click: applied once frame `at_frame` has been ingested, on
/// pixel `(u, v)` of keyframe `keyframe_id`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClickSpec {
    pub at_frame: u32,
    pub keyframe_id: u32,
    pub u: u32,
    pub v: u32,
    #[serde(default)]
    pub name: String,
}

pub fn load_click_script(path: &Path) -> Result<Vec<ClickSpec>> {
    let bytes = binio::read_file(path)?;
    let clicks: Vec<ClickSpec> = serde_json::from_slice(&bytes)?;
    for (i, c) in clicks.iter().enumerate() {
        if c.at_frame < c.keyframe_id {
            return Err(Error::Input(format!(
                "click {i} fires at frame {} before its keyframe {} exists",
                c.at_frame, c.keyframe_id
            )));
        }
    }
    Ok(clicks)
}

pub fn save_click_script(path: &Path, clicks: &[ClickSpec]) -> Result<()> {
    let mut s = serde_json::to_string_pretty(clicks)?;
    s.push('\n');
    binio::write_file(path, s.as_bytes())
}

/// Clicks in the order they create classes: by firing frame, ties in file order.
pub fn script_order(mut clicks: Vec<ClickSpec>) -> Vec<ClickSpec> {
    clicks.sort_by_key(|c| c.at_frame);
    clicks
}
