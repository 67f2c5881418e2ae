//! Crate-wide error type.

use crate::geometry::GridRect;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Motion-path ROI requested with no object box pairs; the caller is
    /// expected to fall back to the full frame.
    #[error("no live objects: motion path requires at least one box pair")]
    NoLiveObjects,

    #[error("vector length mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("memory bank is empty")]
    EmptyBank,

    #[error("roi {roi:?} out of bounds for a {h}x{w} grid")]
    RoiOutOfBounds { roi: GridRect, h: usize, w: usize },

    #[error("memory index {index} out of range ({len} entries)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("track {id} is not alive")]
    DeadTrack { id: usize },

    #[error("frame {frame} is not after the last history frame {last}")]
    OutOfOrderFrame { frame: usize, last: usize },

    #[error("motion prediction produced a non-finite coordinate")]
    NonFiniteMotion,

    #[error("input of length {got} does not match estimator input size {want}")]
    EstimatorInputSize { got: usize, want: usize },

    #[error("empty training batch")]
    EmptyBatch,

    #[error("training diverged at step {step}; last finite loss {last_loss}")]
    Diverged { step: usize, last_loss: f64 },

    #[error("grid has {cells} cells but {labels} label vectors were supplied")]
    GridLabelMismatch { cells: usize, labels: usize },

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("mask shapes differ: {left_h}x{left_w} vs {right_h}x{right_w}")]
    MaskShapeMismatch {
        left_h: usize,
        left_w: usize,
        right_h: usize,
        right_w: usize,
    },

    #[error("frame 0 contains no objects")]
    NoObjectsInFirstFrame,

    #[error("frame 0 has no label map")]
    MissingFirstFrameLabels,

    #[error("invalid config value for `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("png: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("png: {0}")]
    PngEncode(#[from] png::EncodingError),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn invalid_config(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}
