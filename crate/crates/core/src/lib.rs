//! Region-aware video object segmentation at feature-grid scale.

pub mod dataset;
pub mod error;
pub mod geometry;
pub mod matching;
pub mod memory;
pub mod rng;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{motion_path_roi, BBox, GridRect};
pub use matching::{AffinityRow, FeatureGrid};
pub use memory::{MemoryBank, MemoryPolicy, MemoryStats};
pub use tracker::{MotionEstimator, MotionParams, TrackState, TrainBatch};
pub use synth::{LabelMap, LabeledFrame, SceneSpec};
pub use metrics::{EvalReport, TimingTable};
pub use pipeline::{FrameResult, PipelineConfig, VideoRun};
