//! Synthetic scenes, ray-cast ground truth, trajectories and the on-disk
//! dataset formats.

mod dataset;
mod fixtures;
pub mod formats;
mod scene;

pub use dataset::{
    generate_sequence, interior_pixel, Dataset, Frame, FrameEntry, Manifest, SequenceSpec, CLICKS_FILE, MANIFEST_FILE,
};
pub use fixtures::{standard_fixture, FIXTURES, ORACLE_DIM, ORACLE_GRID, ORACLE_SIGMA};
pub use formats::{DepthImage, Image, LabelImage};
pub use scene::{render_ground_truth, GroundTruth, Hit, Primitive, Scene, Shape, BACKGROUND_LABEL};
