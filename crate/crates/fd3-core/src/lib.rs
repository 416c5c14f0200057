//! Fundus image enhancement via direct diffusion bridges.
//!
//! The crate provides the numerical core of the pipeline:
//!
//! - [`image`]: the `[0, 1]`-valued RGB tensor type, PNG/JPEG I/O, and
//!   geometric preprocessing;
//! - [`clahe`]: contrast limited adaptive histogram equalization, used to
//!   build pseudo-ground-truth targets;
//! - [`degrade`]: the parametric synthetic degradation forward model
//!   (illumination distortion, blur and noise, disc artifacts) and
//!   training-pair synthesis;
//! - [`bridge`]: the diffusion bridge between target and measurement, the
//!   training objective, and the iterative refinement sampler;
//! - [`metrics`]: PSNR, a diagonal-Gaussian feature distance, and
//!   IOU over vessel segmentations;
//! - [`phantom`]: seeded synthetic fundus-like images for desk-scale runs;
//! - [`config`]: flat key/value configuration files.

pub mod bridge;
pub mod clahe;
pub mod config;
pub mod degrade;
pub mod error;
pub mod image;
pub mod metrics;
pub mod phantom;

pub use bridge::{
    bridge_state, ddb_step, sample, training_loss, uniform_schedule, BridgeConfig, Denoiser,
    SigmaSchedule, TimestepSchedule,
};
pub use clahe::{clahe, ClaheParams};
pub use config::FlatConfig;
pub use degrade::{
    blur_noise, degrade, light_transmission, make_training_pair, retinal_artifacts, sample_params,
    ArtifactParams, BlurParams, DegradationParams, ParamRanges, Spot, TransmissionParams,
};
pub use error::{Error, Result};
pub use image::{center_crop_resize, gaussian_blur, load_image, save_image, ImageTensor};
pub use metrics::{
    evaluate, fid_gaussian, iou, psnr, FeatureExtractor, MetricReport, PatchMeanExtractor,
    PerImageMetrics, SegmentationMask, Segmenter, TopHatSegmenter,
};
pub use phantom::fundus_phantom;
