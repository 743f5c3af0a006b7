//! Multi-instance LSTM regression of student engagement intensity.
//!
//! A video is cut into `k` segments, each summarised by a feature vector
//! for one modality (gaze, head pose, body pose or C3D). An LSTM runs over
//! the segments, a small MLP scores every step, and the mean step score is
//! the video's engagement prediction in `[0, 1]`. Training adds a
//! ranked-center loss on the penultimate activations that pulls videos of
//! a level toward a learned center and keeps centers of distant levels
//! further apart than centers of neighbouring levels.

#![allow(clippy::needless_range_loop)]

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod evalens;
pub mod losses;
pub mod model;
pub mod numcore;
pub mod splits;
pub mod training;
pub mod verify;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use data::{Dataset, EngagementLevel, ModalityTag, VideoSample};
pub use error::{Error, Result};
pub use evalens::{ensemble, evaluate, EvalReport, PredictionSet};
pub use losses::{CenterBank, RankConfig};
pub use model::{init_model, HeadMode, ModelDims, RegressionModel};
pub use splits::{make_splits, SplitOptions, SplitSpec};
pub use training::{train_modality, OptimConfig, TrainConfig, TrainOutcome};
