use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{ingest_frame, mapping_step, FrameInput, MapperConfig, StepMetrics, TrainState};
use crate::error::{Error, Result};
use crate::scene_field::FieldConfig;
use crate::semantics::{script_order, ClickSpec};
use crate::simio::Dataset;

/// Whether the feature loss is active.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    #[default]
    Fused,
    NoFeature,
}

impl AblationMode {
    pub fn apply(self, mut cfg: MapperConfig) -> MapperConfig {
        if self == AblationMode::NoFeature {
            cfg.lambda_feat = 0.0;
        }
        cfg
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::Fused => "fused",
            AblationMode::NoFeature => "no_feature",
        }
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fused" => Ok(AblationMode::Fused),
            "no_feature" => Ok(AblationMode::NoFeature),
            other => Err(Error::Config(format!("unknown mode {other:?}; expected fused or no_feature"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_frames: usize,
    pub n_steps: u64,
    pub n_keyframes: usize,
    pub n_active_classes: usize,
    pub last: Option<StepMetrics>,
    pub seconds: f64,
}

/// Plays a dataset through the mapper: each frame is ingested, scripted
/// clicks due at that frame are applied, then `steps_per_frame` steps run.
#[derive(Debug)]
pub struct Session {
    pub state: TrainState,
    dataset: Dataset,
    clicks: Vec<ClickSpec>,
    next_frame: usize,
    last: Option<StepMetrics>,
}

impl Session {
    pub fn new(dataset: Dataset, field_cfg: FieldConfig, cfg: MapperConfig, clicks: Vec<ClickSpec>) -> Result<Self> {
        if dataset.manifest.feature_dim != field_cfg.feature_dim {
            return Err(Error::Config(format!(
                "dataset features have dimension {} but the field produces {}",
                dataset.manifest.feature_dim, field_cfg.feature_dim
            )));
        }
        let clicks = script_order(clicks);
        let state = TrainState::new(field_cfg, cfg, dataset.camera(), dataset.bounds())?;
        Ok(Self {
            state,
            dataset,
            clicks,
            next_frame: 0,
            last: None,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn next_frame(&self) -> usize {
        self.next_frame
    }

    pub fn is_finished(&self) -> bool {
        self.next_frame >= self.dataset.len()
    }

    pub fn last_metrics(&self) -> Option<StepMetrics> {
        self.last
    }

    /// Ingests the next frame and applies its scripted clicks. Returns whether
    /// the frame became a keyframe.
    pub fn feed_frame(&mut self) -> Result<bool> {
        if self.is_finished() {
            return Err(Error::State("all frames have been played".into()));
        }
        let f = self.dataset.load_frame(self.next_frame)?;
        let frame_id = f.frame_id;
        let added = ingest_frame(
            &mut self.state,
            FrameInput {
                frame_id,
                pose: f.pose,
                depth: f.depth,
                features: f.features,
            },
        )?;
        self.next_frame += 1;
        let due: Vec<ClickSpec> = self.clicks.iter().filter(|c| c.at_frame == frame_id).cloned().collect();
        for c in due {
            self.state.add_click(c.keyframe_id, c.u, c.v, &c.name)?;
        }
        Ok(added)
    }

    pub fn step(&mut self) -> Result<StepMetrics> {
        let m = mapping_step(&mut self.state)?;
        self.last = Some(m);
        Ok(m)
    }

    /// Feeds one frame and runs its training steps, writing one JSON line per
    /// step to `metrics` (pass `std::io::sink()` to discard).
    pub fn advance(&mut self, metrics: &mut dyn Write) -> Result<()> {
        self.feed_frame()?;
        for _ in 0..self.state.cfg.steps_per_frame {
            let m = self.step()?;
            let line = serde_json::to_string(&m)?;
            writeln!(metrics, "{line}").map_err(|e| Error::io("metrics", e))?;
        }
        Ok(())
    }

    pub fn run(&mut self, metrics: &mut dyn Write) -> Result<RunSummary> {
        let t0 = Instant::now();
        while !self.is_finished() {
            self.advance(metrics)?;
            log::info!(
                "frame {}/{}: {} keyframes, L_total {:.4}",
                self.next_frame,
                self.dataset.len(),
                self.state.keyframes.len(),
                self.last.map_or(f64::NAN, |m| m.l_total)
            );
        }
        Ok(self.summary(t0.elapsed().as_secs_f64()))
    }

    pub fn summary(&self, seconds: f64) -> RunSummary {
        RunSummary {
            n_frames: self.next_frame,
            n_steps: self.state.step,
            n_keyframes: self.state.keyframes.len(),
            n_active_classes: self.state.registry.n_active_classes(),
            last: self.last,
            seconds,
        }
    }
}
