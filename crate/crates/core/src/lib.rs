//! Online neural feature-field fusion.
//!
//! A small coordinate MLP is trained incrementally from posed depth frames and
//! coarse 2D feature maps. Rendered latent features are lifted to the target
//! feature dimension after volumetric integration, and one click per class is
//! enough to propagate semantic labels through the whole scene.
//!
//! Module map:
//! - [`diffcore`]: parameter blocks, hand-written backward kernels, Adam and a
//!   finite-difference checker.
//! - [`scene_field`]: positional encoding, the scene MLP and the upsampler.
//! - [`renderer`]: cameras, ray quadrature and volumetric rendering.
//! - [`features`]: coarse feature maps, the FMAP format and a synthetic front-end.
//! - [`mapper`]: keyframes, supervision sampling, losses and the training loop.
//! - [`semantics`]: click registry, segmentation, the 1-NN baseline and mIoU.
//! - [`simio`]: synthetic scenes, ground truth, datasets on disk.
//! - [`service`]: HTTP façade over a live mapping session.

mod binio;
pub mod diffcore;
pub mod error;
pub mod features;
pub mod mapper;
pub mod renderer;
pub mod scene_field;
pub mod semantics;
pub mod service;
pub mod simio;

pub use error::{Error, Result};
